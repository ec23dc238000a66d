import math
import os
import sys
import unittest

import numpy as np

CURRENT_DIR = os.path.dirname(__file__)
BACKEND_DIR = os.path.abspath(os.path.join(CURRENT_DIR, ".."))
if BACKEND_DIR not in sys.path:
    sys.path.insert(0, BACKEND_DIR)

from superchannel.comb import (  # noqa: E402
    CombSpec,
    DemuxConfig,
    demux_line,
    generate_comb,
    line_frequency,
    select_line,
    superpose,
)
from superchannel.errors import InvalidParameter, NoLineInLockingRange  # noqa: E402
from superchannel.metrology import band_level, fm_noise_psd, optical_spectrum  # noqa: E402
from superchannel.oscillators import OscillatorSpec  # noqa: E402


class TestCombSpec(unittest.TestCase):
    def test_defaults(self):
        spec = CombSpec()
        self.assertEqual(spec.n_lines, 17)
        self.assertEqual(spec.center_line_index, 8)
        self.assertEqual(line_frequency(spec, 0), -80e9)
        self.assertEqual(line_frequency(spec, 16), 80e9)

    def test_validation(self):
        with self.assertRaises(InvalidParameter) as ctx:
            CombSpec(fsr_hz=-1.0)
        self.assertIn("fsr_hz > 0", str(ctx.exception))
        with self.assertRaises(InvalidParameter):
            CombSpec(n_lines=3, line_powers_mw=(1.0, 1.0))
        with self.assertRaises(InvalidParameter):
            line_frequency(CombSpec(), 17)

    def test_flat_factory(self):
        spec = CombSpec.flat(fsr_hz=25e9, n_lines=5, line_power_mw=2.0)
        self.assertEqual(spec.center_line_index, 2)
        self.assertEqual(spec.line_powers_mw, (2.0,) * 5)


class TestCombRealization(unittest.TestCase):
    def test_lines_share_master_phase(self):
        spec = CombSpec.flat(n_lines=5, rf_drive=OscillatorSpec(h0=0.0))
        comb = generate_comb(spec, 2048, 20e9, seed=4)
        for k in range(5):
            np.testing.assert_allclose(comb.line_phase(k), comb.master_phase.samples)

    def test_rf_phase_scales_with_line_offset(self):
        comb = generate_comb(CombSpec(), 2048, 20e9, seed=4)
        diff = comb.line_phase(16) - comb.line_phase(8)
        np.testing.assert_allclose(diff, 8 * comb.rf_phase.samples, atol=1e-12)

    def test_line_descriptor(self):
        comb = generate_comb(CombSpec(), 1024, 20e9, seed=1)
        line = comb[3]
        self.assertEqual(len(comb), 17)
        self.assertEqual(line.center_offset_hz, -50e9)
        self.assertEqual(line.meta["line_index"], 3)
        self.assertAlmostEqual(line.mean_power_mw, 1.0, places=12)
        self.assertEqual(comb[-1].meta["line_index"], 16)

    def test_deterministic(self):
        a = generate_comb(CombSpec(), 1024, 20e9, seed=7)
        b = generate_comb(CombSpec(), 1024, 20e9, seed=7)
        np.testing.assert_array_equal(a[5].iq, b[5].iq)

    def test_superposed_comb_spectrum_shows_every_line(self):
        spec = CombSpec()
        fs = 180e9
        comb = generate_comb(spec, 2**14, fs, seed=2)
        spectrum = optical_spectrum(superpose(comb), 100e6)
        peaks = spectrum.freqs_hz[spectrum.power_dbm > -10.0]
        self.assertEqual(len(peaks), 17)
        np.testing.assert_allclose(np.diff(peaks), 10e9)

    def test_superpose_rejects_aliased_lines(self):
        comb = generate_comb(CombSpec(), 1024, 20e9, seed=2)
        with self.assertRaises(InvalidParameter):
            superpose(comb)


class TestDemux(unittest.TestCase):
    def setUp(self):
        self.spec = CombSpec()

    def test_select_nearest_and_tie_goes_low(self):
        self.assertEqual(select_line(self.spec, 1e9), (8, 1e9))
        self.assertEqual(select_line(self.spec, 5e9)[0], 8)
        self.assertEqual(select_line(self.spec, -5e9)[0], 7)

    def test_out_of_locking_range(self):
        comb = generate_comb(self.spec, 1024, 20e9, seed=0)
        with self.assertRaises(NoLineInLockingRange):
            demux_line(comb, DemuxConfig(dfb_freq_hz=5e9))

    def test_locked_line_power_and_phase(self):
        comb = generate_comb(self.spec, 4096, 20e9, seed=0)
        out = demux_line(comb, DemuxConfig(dfb_freq_hz=30e9 + 1e8))
        self.assertEqual(out.locked_line_index, 11)
        self.assertAlmostEqual(out.detuning_hz, 1e8)
        self.assertAlmostEqual(out.field.mean_power_mw, 10.0, places=9)
        # Every residual line sits at >= fs/2 from the locked one at 20 GS/s.
        self.assertEqual(len(out.field.meta["dropped_lines"]), 16)
        np.testing.assert_allclose(np.angle(out.field.iq), np.angle(comb.unit_phasor(11)), atol=1e-12)

    def test_residual_lines_keep_output_power_within_tolerance(self):
        comb = generate_comb(self.spec, 4096, 40e9, seed=0)
        out = demux_line(comb, DemuxConfig(dfb_freq_hz=0.0))
        self.assertEqual(len(out.field.meta["dropped_lines"]), 14)
        self.assertAlmostEqual(out.field.mean_power_mw / 10.0, 1.0, delta=1e-3)

    def test_residual_lines_read_suppression_down(self):
        comb = generate_comb(self.spec, 2**14, 40e9, seed=0)
        out = demux_line(comb, DemuxConfig(dfb_freq_hz=0.0, suppression_db=40.0))
        spectrum = optical_spectrum(out.field, 100e6)
        carrier = spectrum.power_dbm[np.argmin(np.abs(spectrum.freqs_hz - 0.0))]
        for rel in (-10e9, 10e9):
            side = spectrum.power_dbm[np.argmin(np.abs(spectrum.freqs_hz - rel))]
            self.assertAlmostEqual(carrier - side, 40.0, delta=0.5)
        self.assertAlmostEqual(carrier, 10.0, delta=0.1)

    def test_selection_ignores_line_powers(self):
        rng = np.random.default_rng(3)
        uneven = CombSpec(line_powers_mw=tuple(rng.uniform(0.01, 100.0, 17)))
        flat = generate_comb(self.spec, 256, 20e9, seed=1)
        scaled = generate_comb(uneven, 256, 20e9, seed=1)
        for k in range(17):
            for detuning in (-2e9, 0.0, 1.5e9):
                dfb = line_frequency(self.spec, k) + detuning
                a = demux_line(flat, DemuxConfig(dfb_freq_hz=dfb))
                b = demux_line(scaled, DemuxConfig(dfb_freq_hz=dfb, output_power_mw=0.5))
                self.assertEqual(a.locked_line_index, k)
                self.assertEqual(b.locked_line_index, k)
                self.assertEqual(a.detuning_hz, b.detuning_hz)

    def test_locked_line_carries_master_plus_scaled_rf_noise(self):
        spec = CombSpec.flat(master=OscillatorSpec(h0=10.0), rf_drive=OscillatorSpec(h0=0.5))
        fs = 1e9
        comb = generate_comb(spec, 2**19, fs, seed=4)
        # Every residual line is >= fs/2 away, so the output is the bare line.
        out = demux_line(comb, DemuxConfig(dfb_freq_hz=line_frequency(spec, 12)))
        estimate = fm_noise_psd(out.field)
        expected = 10.0 + (12 - 8) ** 2 * 0.5
        for lo, hi in ((1e5, 1e6), (1e6, 1e7), (1e7, 1e8)):
            level = band_level(estimate, (lo, hi))
            self.assertAlmostEqual(10 * math.log10(level / expected), 0.0, delta=1.0, msg=f"band {lo:g}-{hi:g} Hz")


if __name__ == "__main__":
    unittest.main()
