"""Laser / RF phase-noise synthesis and CW field generation.

FM-noise PSDs are one-sided. A white floor ``h0`` (Hz^2/Hz) gives a Lorentzian
line of FWHM ``pi * h0``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from .errors import InvalidParameter

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OscillatorSpec:
    """Phase-noise parameterization of one laser or RF source.

    h0: white FM-noise level, Hz^2/Hz (one-sided).
    h_flicker: flicker FM coefficient, PSD = h_flicker / f, Hz^2.
    power_mw: optical power, mW.
    freq_offset_hz: offset from the simulation center frequency, Hz.
    """

    h0: float = 0.0
    h_flicker: float = 0.0
    power_mw: float = 1.0
    freq_offset_hz: float = 0.0

    def __post_init__(self) -> None:
        if not self.h0 >= 0:
            raise InvalidParameter(f"OscillatorSpec violates h0 >= 0 (got {self.h0})")
        if not self.h_flicker >= 0:
            raise InvalidParameter(f"OscillatorSpec violates h_flicker >= 0 (got {self.h_flicker})")
        if not self.power_mw > 0:
            raise InvalidParameter(f"OscillatorSpec violates power_mw > 0 (got {self.power_mw})")
        if not math.isfinite(self.freq_offset_hz):
            raise InvalidParameter("OscillatorSpec violates finite freq_offset_hz")

    @property
    def linewidth_hz(self) -> float:
        return lorentzian_linewidth(self.h0)


# Sub-Hz master (microresonator-stabilized) laser. The flicker term puts the
# PSD near 1e3 Hz^2/Hz at 100 Hz.
MASTER_LASER_DEFAULT = OscillatorSpec(h0=0.3, h_flicker=1e5, power_mw=1.0)
# Gain-switching RF drive: contributes (k - center)^2 * h0 at line k, i.e.
# 0.0064 Hz^2/Hz at line +/-8.
RF_DRIVE_DEFAULT = OscillatorSpec(h0=1e-4, h_flicker=0.0, power_mw=1.0)
# Free-running DFB, 1 MHz Lorentzian (white FM only). At 100 kHz the
# receiver PLL still tracks it, so the comparison uses the wider class.
FREE_RUNNING_DFB_DEFAULT = OscillatorSpec(h0=1e6 / math.pi, h_flicker=0.0, power_mw=10.0)
# Narrow-linewidth fiber laser (about 94 Hz Lorentzian) with 1/f FM wander.
FIBER_LASER_DEFAULT = OscillatorSpec(h0=30.0, h_flicker=1e6, power_mw=10.0)


@dataclass(frozen=True, eq=False)
class PhaseTrajectory:
    samples: np.ndarray
    fs_hz: float
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if len(self.samples) == 0:
            raise InvalidParameter("PhaseTrajectory violates length > 0")
        if not self.fs_hz > 0:
            raise InvalidParameter(f"PhaseTrajectory violates fs_hz > 0 (got {self.fs_hz})")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True, eq=False)
class SampledField:
    """Uniformly sampled complex baseband optical (or electrical) field.

    |iq|^2 is proportional to power in mW. ``center_offset_hz`` is the frequency
    of the sample-0 carrier relative to the simulation center. ``meta`` carries
    bookkeeping such as filter delays and line indices.
    """

    iq: np.ndarray
    fs_hz: float
    center_offset_hz: float = 0.0
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.fs_hz > 0:
            raise InvalidParameter(f"SampledField violates fs_hz > 0 (got {self.fs_hz})")
        if not np.all(np.isfinite(self.iq)):
            raise InvalidParameter("SampledField violates finite samples (NaN/Inf present)")

    def __len__(self) -> int:
        return len(self.iq)

    @property
    def mean_power_mw(self) -> float:
        return float(np.mean(np.abs(self.iq) ** 2))

    def with_iq(self, iq: np.ndarray, **meta: Any) -> "SampledField":
        merged = dict(self.meta)
        merged.update(meta)
        return SampledField(iq=iq, fs_hz=self.fs_hz, center_offset_hz=self.center_offset_hz, meta=merged)


def synth_freq_noise(spec: OscillatorSpec, n: int, fs_hz: float, seed: int) -> np.ndarray:
    """Draw a frequency-noise sequence (Hz per sample) with PSD h0 + h_flicker/f.

    The white part has per-sample variance h0*fs/2, so its one-sided PSD is h0.
    The flicker part is white noise shaped by a 1/sqrt(f) magnitude response
    in the FFT domain, exact at the grid frequencies down to fs/n.
    """
    if n < 2:
        raise InvalidParameter(f"synth_freq_noise requires n >= 2 (got {n})")
    if not fs_hz > 0:
        raise InvalidParameter(f"synth_freq_noise requires fs_hz > 0 (got {fs_hz})")

    rng = np.random.default_rng(seed)
    nu = rng.standard_normal(n) * math.sqrt(spec.h0 * fs_hz / 2.0)

    if spec.h_flicker > 0:
        # Unit-variance white noise has one-sided PSD 2/fs; |H|^2 = h_flicker*fs/(2f).
        spectrum = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, d=1.0 / fs_hz)
        shaping = np.zeros_like(freqs)
        shaping[1:] = np.sqrt(spec.h_flicker * fs_hz / (2.0 * freqs[1:]))
        nu = nu + np.fft.irfft(spectrum * shaping, n)

    logger.debug(f"synth_freq_noise: n={n} fs={fs_hz:.6g} h0={spec.h0:.6g} h_flicker={spec.h_flicker:.6g} seed={seed}")
    return nu


def integrate_phase(freq_noise: np.ndarray, fs_hz: float, seed: Optional[int] = None) -> PhaseTrajectory:
    """phi[0] = 0, phi[k+1] = phi[k] + 2*pi*nu[k]/fs."""
    freq_noise = np.asarray(freq_noise, dtype=float)
    if freq_noise.size == 0:
        raise InvalidParameter("integrate_phase requires a nonempty input")
    phase = np.empty(freq_noise.size)
    phase[0] = 0.0
    np.cumsum(freq_noise[:-1] * (2.0 * math.pi / fs_hz), out=phase[1:])
    return PhaseTrajectory(samples=phase, fs_hz=fs_hz, seed=seed)


def phase_trajectory(spec: OscillatorSpec, n: int, fs_hz: float, seed: int) -> PhaseTrajectory:
    return integrate_phase(synth_freq_noise(spec, n, fs_hz, seed), fs_hz, seed=seed)


def cw_field(spec: OscillatorSpec, phase: PhaseTrajectory) -> SampledField:
    """sqrt(P) * exp(i(2*pi*f_off*k/fs + phi[k])); magnitude is constant."""
    k = np.arange(len(phase))
    total = (2.0 * math.pi * spec.freq_offset_hz / phase.fs_hz) * k + phase.samples
    iq = math.sqrt(spec.power_mw) * np.exp(1j * total)
    return SampledField(iq=iq, fs_hz=phase.fs_hz, center_offset_hz=0.0, meta={"power_mw": spec.power_mw})


def lorentzian_linewidth(h0: float) -> float:
    """FWHM (Hz) of the Lorentzian produced by a white FM floor h0 (Hz^2/Hz)."""
    if h0 < 0:
        raise InvalidParameter(f"lorentzian_linewidth requires h0 >= 0 (got {h0})")
    return math.pi * h0


def fm_level_for_linewidth(fwhm_hz: float) -> float:
    if fwhm_hz < 0:
        raise InvalidParameter(f"fm_level_for_linewidth requires fwhm >= 0 (got {fwhm_hz})")
    return fwhm_hz / math.pi
