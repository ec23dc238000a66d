import math
import os
import sys
import unittest

import numpy as np

CURRENT_DIR = os.path.dirname(__file__)
BACKEND_DIR = os.path.abspath(os.path.join(CURRENT_DIR, ".."))
if BACKEND_DIR not in sys.path:
    sys.path.insert(0, BACKEND_DIR)

from superchannel.errors import AmbiguousRotation, InvalidParameter, NoSpectralPeak, RecordTooShort  # noqa: E402
from superchannel.oscillators import SampledField  # noqa: E402
from superchannel.rxdsp import (  # noqa: E402
    DecisionMode,
    FecClass,
    FecPolicy,
    PllConfig,
    apply_rotation,
    cd_compensate,
    classify_fec,
    count_ber,
    dd_pll,
    estimate_freq_offset,
    matched_filter_downsample,
    pll_phase_variance,
    resolve_rotation,
)
from superchannel.transceiver import (  # noqa: E402
    FiberConfig,
    ModemConfig,
    decide_symbols,
    map_qam,
    rrc_shape,
    shift_frequency,
)

BAUD = 5e9


def _qam_symbols(n, seed=0, m=64):
    bits = np.random.default_rng(seed).integers(0, 2, n * int(math.log2(m)), dtype=np.uint8)
    return map_qam(bits, m)


def _offset(symbols, offset_hz, rate_hz=BAUD):
    k = np.arange(symbols.size)
    return symbols * np.exp(2j * math.pi * offset_hz * k / rate_hz)


class TestFreqOffset(unittest.TestCase):
    def setUp(self):
        self.symbols = _qam_symbols(2**16, seed=1)

    def test_recovers_offset(self):
        est = estimate_freq_offset(_offset(self.symbols, 100e6), BAUD)
        self.assertAlmostEqual(est, 100e6, delta=1e6)

    def test_zero_offset(self):
        self.assertLess(abs(estimate_freq_offset(self.symbols, BAUD)), 1e5)

    def test_offset_beyond_range_wraps(self):
        # 4 * 750 MHz aliases to -2 GHz at 5 GBd
        est = estimate_freq_offset(_offset(self.symbols, 750e6), BAUD)
        self.assertAlmostEqual(est, -500e6, delta=1e6)

    def test_oversampled_offset_beyond_range_is_unwrapped(self):
        modem = ModemConfig()
        shaped = rrc_shape(_qam_symbols(2**14, seed=7), modem)
        # 4 * 3 GHz aliases to -8 GHz at 20 GS/s; the band centroid pulls it back
        shifted = shift_frequency(shaped, 3e9)
        with self.assertLogs("superchannel.rxdsp", level="WARNING") as logs:
            est = estimate_freq_offset(shifted.iq, modem.fs_hz)
        self.assertAlmostEqual(est, 3e9, delta=5e6)
        self.assertIn("unwrapped", logs.output[0])

    def test_oversampled_offset_in_range_is_unchanged(self):
        modem = ModemConfig()
        shaped = rrc_shape(_qam_symbols(2**14, seed=7), modem)
        est = estimate_freq_offset(shift_frequency(shaped, 400e6).iq, modem.fs_hz)
        self.assertAlmostEqual(est, 400e6, delta=5e6)

    def test_noise_has_no_peak(self):
        rng = np.random.default_rng(2)
        noise = rng.standard_normal(2**16) + 1j * rng.standard_normal(2**16)
        with self.assertRaises(NoSpectralPeak):
            estimate_freq_offset(noise, BAUD)

    def test_short_record(self):
        with self.assertRaises(RecordTooShort):
            estimate_freq_offset(self.symbols[:1000], BAUD)


class TestMatchedFilter(unittest.TestCase):
    def test_noiseless_cascade_recovers_symbols(self):
        modem = ModemConfig()
        symbols = _qam_symbols(2000, seed=3)
        recovered = matched_filter_downsample(rrc_shape(symbols, modem), modem)
        self.assertEqual(recovered.size, symbols.size)
        # residual ISI comes from truncating the taps at 32 symbols
        rms = np.sqrt(np.mean(np.abs(recovered - symbols) ** 2))
        self.assertLess(rms, 3e-2)
        np.testing.assert_allclose(decide_symbols(recovered, 64), symbols)

    def test_timing_offset_out_of_range(self):
        modem = ModemConfig()
        shaped = rrc_shape(_qam_symbols(100), modem)
        with self.assertRaises(InvalidParameter):
            matched_filter_downsample(shaped, modem, timing_offset_samples=10**6)

    def test_cd_compensate_zero_length_is_identity(self):
        field = SampledField(iq=np.arange(8, dtype=complex), fs_hz=1e9)
        np.testing.assert_array_equal(cd_compensate(field, FiberConfig(length_km=0.0)).iq, field.iq)


class TestPll(unittest.TestCase):
    def setUp(self):
        self.tx = _qam_symbols(4000, seed=4)
        self.cfg = PllConfig()

    def test_phase_step_converges_monotonically(self):
        rx = self.tx[:2000] * np.exp(0.06j)
        out = dd_pll(rx, self.cfg, known=self.tx[:256])
        tail = np.abs(out.error[200:])
        self.assertTrue(np.all(np.diff(tail) <= 1e-12))
        self.assertLess(abs(out.error[-1]), 0.005)
        self.assertAlmostEqual(out.phase[-1], 0.06, delta=0.005)

    def test_frequency_ramp_tracked_in_known_mode(self):
        slope = 2 * math.pi * 1e5 / BAUD
        rx = self.tx * np.exp(1j * slope * np.arange(self.tx.size))
        cfg = PllConfig(decision_mode=DecisionMode.KNOWN)
        out = dd_pll(rx, cfg, known=self.tx)
        fitted = np.polyfit(np.arange(3000, 4000), out.phase[3000:], 1)[0]
        self.assertAlmostEqual(fitted / slope, 1.0, delta=1e-3)

    def test_noiseless_decided_mode_stays_locked(self):
        out = dd_pll(self.tx, self.cfg, known=self.tx[:64])
        self.assertTrue(np.all(out.error == 0))
        self.assertTrue(np.all(out.phase == 0))
        self.assertEqual(pll_phase_variance(out.error, self.cfg), 0.0)

    def test_preamble_requirements(self):
        with self.assertRaises(InvalidParameter):
            dd_pll(self.tx, self.cfg, known=self.tx[:32])
        with self.assertRaises(InvalidParameter):
            dd_pll(self.tx, PllConfig(decision_mode="known"), known=self.tx[:100])

    def test_config_validation(self):
        self.assertEqual(PllConfig().acquisition_symbols, 200)
        with self.assertRaises(InvalidParameter):
            PllConfig(mu1=0.01, mu2=0.02)


class TestRotation(unittest.TestCase):
    def setUp(self):
        self.preamble = _qam_symbols(256, seed=5)

    def test_quarter_turn_detected_and_undone(self):
        rotated = self.preamble * 1j
        degrees = resolve_rotation(rotated, self.preamble)
        self.assertEqual(degrees, 90)
        np.testing.assert_allclose(apply_rotation(rotated, degrees), self.preamble, atol=1e-12)

    def test_no_rotation(self):
        self.assertEqual(resolve_rotation(self.preamble, self.preamble), 0)

    def test_eighth_turn_is_ambiguous(self):
        with self.assertRaises(AmbiguousRotation):
            resolve_rotation(self.preamble * np.exp(1j * math.pi / 4), self.preamble)

    def test_uncorrelated_input_is_ambiguous(self):
        with self.assertRaises(AmbiguousRotation) as ctx:
            resolve_rotation(np.zeros(256, dtype=complex), self.preamble)
        self.assertEqual(ctx.exception.margin_db, -math.inf)

    def test_margin_compares_powers(self):
        # cot(30 deg) = 1.73 in amplitude, 4.8 dB in power
        self.assertEqual(resolve_rotation(self.preamble * np.exp(1j * math.pi / 6), self.preamble), 0)
        # cot(40 deg) = 1.19 in amplitude, 1.5 dB in power
        with self.assertRaises(AmbiguousRotation) as ctx:
            resolve_rotation(self.preamble * np.exp(1j * math.radians(40)), self.preamble)
        self.assertAlmostEqual(ctx.exception.margin_db, 20 * math.log10(1 / math.tan(math.radians(40))), places=6)

    def test_resolves_at_15_db(self):
        rng = np.random.default_rng(6)
        sigma = math.sqrt(10 ** (-15 / 10) / 2)
        trials = 1000
        hits = 0
        for _ in range(trials):
            degrees = 90 * int(rng.integers(0, 4))
            noise = sigma * (rng.standard_normal(256) + 1j * rng.standard_normal(256))
            rx = self.preamble * np.exp(1j * math.radians(degrees)) + noise
            try:
                hits += resolve_rotation(rx, self.preamble) == degrees
            except AmbiguousRotation:
                pass
        self.assertGreaterEqual(hits / trials, 0.999)


class TestBerAndFec(unittest.TestCase):
    def test_count_ber(self):
        count = count_ber(np.array([0, 1, 1, 0]), np.array([0, 0, 1, 1]))
        self.assertEqual((count.bits_compared, count.bit_errors), (4, 2))
        self.assertEqual(count.ber, 0.5)
        with self.assertRaises(InvalidParameter):
            count_ber(np.zeros(3), np.zeros(4))
        with self.assertRaises(InvalidParameter):
            count_ber(np.zeros(0), np.zeros(0))

    def test_thresholds_are_strict(self):
        self.assertEqual(classify_fec(0.0), FecClass.PASS_7PCT)
        self.assertEqual(classify_fec(3.8e-3), FecClass.PASS_20PCT)
        self.assertEqual(classify_fec(1e-2), FecClass.PASS_20PCT)
        self.assertEqual(classify_fec(2.4e-2), FecClass.FAIL)
        self.assertEqual(classify_fec(0.5), FecClass.FAIL)

    def test_classes_are_ordered(self):
        self.assertGreater(FecClass.PASS_7PCT, FecClass.PASS_20PCT)
        self.assertGreater(FecClass.PASS_20PCT, FecClass.FAIL)

    def test_invalid_inputs(self):
        with self.assertRaises(InvalidParameter):
            classify_fec(1.5)
        with self.assertRaises(InvalidParameter):
            FecPolicy(ber_7pct=0.1, ber_20pct=0.01)


if __name__ == "__main__":
    unittest.main()
