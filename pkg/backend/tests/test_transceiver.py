import math
import os
import sys
import unittest

import numpy as np
from scipy.special import erfc

CURRENT_DIR = os.path.dirname(__file__)
BACKEND_DIR = os.path.abspath(os.path.join(CURRENT_DIR, ".."))
if BACKEND_DIR not in sys.path:
    sys.path.insert(0, BACKEND_DIR)

from superchannel.comb import CombSpec, DemuxConfig, demux_line, generate_comb  # noqa: E402
from superchannel.errors import InvalidParameter, RateMismatch  # noqa: E402
from superchannel.metrology import band_level, fm_noise_psd, optical_spectrum  # noqa: E402
from superchannel.oscillators import OscillatorSpec, SampledField, cw_field, phase_trajectory  # noqa: E402
from superchannel.rxdsp import cd_compensate  # noqa: E402
from superchannel.transceiver import (  # noqa: E402
    FiberConfig,
    ModemConfig,
    NoiseConfig,
    analytic_qam_ber,
    axis_levels,
    coherent_rx,
    constellation,
    decide_symbols,
    demap_qam,
    implied_snr_db,
    load_awgn,
    map_qam,
    modulate,
    propagate_fiber,
    rrc_shape,
    rrc_taps,
)


class TestMapping(unittest.TestCase):
    def test_qpsk_zero_bits(self):
        sym = map_qam(np.array([0, 0]), 4)
        self.assertAlmostEqual(sym[0], (1 + 1j) / math.sqrt(2))

    def test_gray_axis_for_64qam(self):
        levels = axis_levels(3)
        # codeword -> level; 000,001,011,010,110,111,101,100 ascend from -7
        order = [0b000, 0b001, 0b011, 0b010, 0b110, 0b111, 0b101, 0b100]
        self.assertEqual([levels[c] for c in order], [-7, -5, -3, -1, 1, 3, 5, 7])

    def test_first_bits_drive_in_phase(self):
        sym = map_qam(np.array([1, 0, 0, 0, 0, 0]), 64)[0]
        self.assertAlmostEqual(sym.real, 7 / math.sqrt(42))
        self.assertAlmostEqual(sym.imag, -7 / math.sqrt(42))

    def test_unit_average_energy(self):
        for m in (4, 16, 64, 256):
            self.assertAlmostEqual(np.mean(np.abs(constellation(m)) ** 2), 1.0)

    def test_neighbours_differ_in_one_bit(self):
        levels = axis_levels(3)
        codes = sorted(range(8), key=lambda c: levels[c])
        for a, b in zip(codes, codes[1:]):
            self.assertEqual(bin(a ^ b).count("1"), 1)

    def test_demap_inverts_map(self):
        bits = np.random.default_rng(0).integers(0, 2, 6 * 5000, dtype=np.uint8)
        np.testing.assert_array_equal(demap_qam(map_qam(bits, 64), 64), bits)

    def test_bit_count_must_divide(self):
        with self.assertRaises(InvalidParameter):
            map_qam(np.zeros(7, dtype=np.uint8), 64)

    def test_decide_symbols_snaps_to_grid(self):
        points = constellation(16)
        noisy = points + 0.05 * (1 + 1j)
        np.testing.assert_allclose(decide_symbols(noisy, 16), points)


class TestAnalyticBer(unittest.TestCase):
    def test_qpsk_closed_form(self):
        snr = 10 ** (8 / 10)
        self.assertAlmostEqual(analytic_qam_ber(8.0, 4), 0.5 * erfc(math.sqrt(snr / 2)), places=12)

    def test_64qam_near_1e3(self):
        ber = analytic_qam_ber(22.5, 64)
        self.assertGreater(ber, 5e-4)
        self.assertLess(ber, 2e-3)

    def test_monotone_and_invertible(self):
        bers = analytic_qam_ber(np.arange(10, 30, 2.0), 64)
        self.assertTrue(np.all(np.diff(bers) < 0))
        self.assertAlmostEqual(implied_snr_db(analytic_qam_ber(20.0, 64), 64), 20.0, places=6)


class TestPulseShaping(unittest.TestCase):
    def test_rrc_taps(self):
        taps = rrc_taps(0.1, 32, 4)
        self.assertEqual(len(taps), 32 * 4 + 1)
        self.assertAlmostEqual(float(np.sum(taps**2)), 1.0)
        np.testing.assert_allclose(taps, taps[::-1], atol=1e-15)

    def test_shape_metadata(self):
        modem = ModemConfig()
        shaped = rrc_shape(constellation(64)[:100], modem)
        self.assertEqual(shaped.meta["delay_samples"], 64)
        self.assertEqual(shaped.meta["n_symbols"], 100)
        self.assertEqual(shaped.fs_hz, 20e9)
        self.assertEqual(len(shaped), 99 * 4 + 129)

    def test_occupied_bandwidth_is_one_plus_rolloff_times_baud(self):
        modem = ModemConfig()
        taps = rrc_taps(modem.rolloff, modem.rrc_span_symbols, modem.sps)
        n = 2**16
        power = np.abs(np.fft.fftshift(np.fft.fft(taps, n))) ** 2
        freqs = np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / modem.fs_hz))
        cdf = np.cumsum(power) / np.sum(power)
        # all but 1e-4 of the power, i.e. -40 dB out of band
        lo = freqs[np.searchsorted(cdf, 0.5e-4)]
        hi = freqs[np.searchsorted(cdf, 1 - 0.5e-4)]
        self.assertAlmostEqual(hi - lo, 5.5e9, delta=0.15e9)


class TestFiber(unittest.TestCase):
    def _pulse(self, fs, n, t0):
        t = (np.arange(n) - n // 2) / fs
        return SampledField(iq=np.exp(-(t**2) / (2 * t0**2)).astype(complex), fs_hz=fs)

    @staticmethod
    def _rms_width(field):
        p = np.abs(field.iq) ** 2
        k = np.arange(len(p))
        mean = np.sum(k * p) / np.sum(p)
        return math.sqrt(np.sum((k - mean) ** 2 * p) / np.sum(p)) / field.fs_hz

    def test_compensation_inverts_propagation(self):
        fiber = FiberConfig()
        rng = np.random.default_rng(1)
        field = SampledField(iq=rng.standard_normal(8192) + 1j * rng.standard_normal(8192), fs_hz=20e9)
        restored = cd_compensate(propagate_fiber(field, fiber), fiber)
        err = restored.iq - field.iq * fiber.amplitude_gain
        self.assertLess(np.sqrt(np.mean(np.abs(err) ** 2)), 1e-9)

    def test_zero_length_is_identity(self):
        field = SampledField(iq=np.ones(16, dtype=complex), fs_hz=1e9)
        out = propagate_fiber(field, FiberConfig(length_km=0.0))
        np.testing.assert_array_equal(out.iq, field.iq)

    def test_attenuation(self):
        self.assertAlmostEqual(FiberConfig().amplitude_gain ** 2, 10 ** (-0.5))

    def test_wrong_sign_compensation_doubles_spreading(self):
        fiber = FiberConfig(attenuation_db_km=0.0)
        pulse = self._pulse(1e12, 2**14, 5e-12)
        once = propagate_fiber(pulse, fiber)
        twice = cd_compensate(once, FiberConfig(dispersion_ps_nm_km=-17.0, attenuation_db_km=0.0))
        self.assertAlmostEqual(self._rms_width(twice) / self._rms_width(once), 2.0, delta=0.05)


class TestFrontEnd(unittest.TestCase):
    def test_awgn_variance(self):
        modem = ModemConfig()
        field = SampledField(iq=np.ones(2**17, dtype=complex), fs_hz=modem.fs_hz)
        noisy = load_awgn(field, NoiseConfig(target_snr_db=20.0, seed=3), modem)
        var = np.mean(np.abs(noisy.iq - field.iq) ** 2)
        self.assertAlmostEqual(var / (4 / 100), 1.0, delta=0.03)

    def test_noiseless_is_passthrough(self):
        modem = ModemConfig()
        field = SampledField(iq=np.ones(8, dtype=complex), fs_hz=modem.fs_hz)
        self.assertIs(load_awgn(field, NoiseConfig(target_snr_db=math.inf), modem), field)

    def test_coherent_rx_normalizes_lo(self):
        lo = SampledField(iq=np.full(8, 3.0 * np.exp(0.4j)), fs_hz=1e9, center_offset_hz=5e9)
        sig = SampledField(iq=np.full(8, 2.0 * np.exp(0.4j)), fs_hz=1e9, center_offset_hz=5e9)
        out = coherent_rx(sig, lo)
        np.testing.assert_allclose(out.iq, 2.0)
        self.assertEqual(out.center_offset_hz, 0.0)

    def test_coherent_rx_adds_signal_and_lo_fm_noise(self):
        fs = 1e6
        sig_spec, lo_spec = OscillatorSpec(h0=50.0), OscillatorSpec(h0=30.0)
        sig = cw_field(sig_spec, phase_trajectory(sig_spec, 2**18, fs, seed=1))
        lo = cw_field(lo_spec, phase_trajectory(lo_spec, 2**18, fs, seed=2))
        estimate = fm_noise_psd(coherent_rx(sig, lo))
        for band in ((1e3, 1e4), (1e4, 1e5), (1e5, 4e5)):
            level = band_level(estimate, band)
            self.assertAlmostEqual(10 * math.log10(level / 80.0), 0.0, delta=1.0, msg=f"band {band}")

    def test_residual_line_replica_after_modulation(self):
        modem = ModemConfig(sps=8)
        bits = np.random.default_rng(5).integers(0, 2, 4000 * 6, dtype=np.uint8)
        baseband = rrc_shape(map_qam(bits, 64), modem)
        comb = generate_comb(CombSpec(), len(baseband), modem.fs_hz, seed=5)
        carrier = demux_line(comb, DemuxConfig(dfb_freq_hz=0.0, suppression_db=40.0))
        spectrum = optical_spectrum(modulate(carrier, baseband), 100e6)
        mw = 10 ** (spectrum.power_dbm / 10)

        def band_power(centre):
            return float(np.sum(mw[np.abs(spectrum.freqs_hz - centre) <= 2.75e9]))

        main = band_power(0.0)
        for centre in (-10e9, 10e9):
            self.assertAlmostEqual(10 * math.log10(main / band_power(centre)), 40.0, delta=0.5)

    def test_rate_mismatch(self):
        a = SampledField(iq=np.ones(8, dtype=complex), fs_hz=1e9)
        b = SampledField(iq=np.ones(8, dtype=complex), fs_hz=2e9)
        with self.assertRaises(RateMismatch):
            modulate(a, b)
        with self.assertRaises(RateMismatch):
            coherent_rx(a, b)


if __name__ == "__main__":
    unittest.main()
