"""FM-noise spectra, delayed self-heterodyne emulation, optical spectra and
linewidth estimates."""

import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy import optimize, signal

from .errors import BandEmpty, InvalidParameter, RecordTooShort
from .oscillators import PhaseTrajectory, SampledField

logger = logging.getLogger(__name__)

WINDOW = "hann"
MIN_SEGMENTS = 8
# Self-heterodyne detection: Butterworth low-pass order and the fraction of
# its bandwidth kept in the FM-noise estimate.
DSH_FILTER_ORDER = 8
DSH_USABLE_FRACTION = 0.8
# Samples trimmed from each end, in units of 1/bandwidth.
DSH_GUARD_CYCLES = 32


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    """One-sided FM-noise PSD (Hz^2/Hz) on an ascending grid, DC excluded."""

    freqs_hz: np.ndarray
    psd: np.ndarray
    segment_count: int
    window_name: str = WINDOW

    def __post_init__(self) -> None:
        if len(self.freqs_hz) != len(self.psd):
            raise InvalidParameter("PsdEstimate violates len(freqs_hz) == len(psd)")
        if np.any(np.diff(self.freqs_hz) <= 0):
            raise InvalidParameter("PsdEstimate violates ascending freqs")
        if np.any(self.psd < 0):
            raise InvalidParameter("PsdEstimate violates psd >= 0")

    def __len__(self) -> int:
        return len(self.freqs_hz)


@dataclass(frozen=True)
class DshConfig:
    delay_s: float = 10e-6
    shift_hz: float = 80e6
    rx_noise_psd: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.delay_s > 0:
            raise InvalidParameter(f"DshConfig violates delay_s > 0 (got {self.delay_s})")
        if not self.shift_hz > 0:
            raise InvalidParameter(f"DshConfig violates shift_hz > 0 (got {self.shift_hz})")
        if not self.rx_noise_psd >= 0:
            raise InvalidParameter(f"DshConfig violates rx_noise_psd >= 0 (got {self.rx_noise_psd})")


class OpticalSpectrum(NamedTuple):
    freqs_hz: np.ndarray
    power_dbm: np.ndarray


def _segment_count(n: int, nperseg: int) -> int:
    step = nperseg - nperseg // 2
    return 0 if n < nperseg else (n - nperseg) // step + 1


def _default_nperseg(n: int) -> int:
    # Largest power of two leaving >= 16 segments.
    return max(2, 1 << int(math.floor(math.log2(max(n // 16, 2)))))


def _welch_fm(nu: np.ndarray, fs_hz: float, nperseg: int) -> PsdEstimate:
    segments = _segment_count(nu.size, nperseg)
    if segments < MIN_SEGMENTS:
        raise RecordTooShort(
            f"FM-noise estimate needs >= {MIN_SEGMENTS} segments of {nperseg} samples (record has {nu.size}, {segments} segments)"
        )
    freqs, psd = signal.welch(
        nu,
        fs=fs_hz,
        window=WINDOW,
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend="constant",
        return_onesided=True,
        scaling="density",
    )
    return PsdEstimate(freqs_hz=freqs[1:], psd=np.maximum(psd[1:], 0.0), segment_count=segments)


def instantaneous_frequency(source: Union[SampledField, PhaseTrajectory]) -> np.ndarray:
    """nu[k] = (phi[k+1] - phi[k]) * fs / (2 pi), phase unwrapped."""
    if isinstance(source, PhaseTrajectory):
        dphi = np.diff(source.samples)
    else:
        iq = source.iq
        dphi = np.angle(iq[1:] * np.conj(iq[:-1]))
    return dphi * (source.fs_hz / (2.0 * math.pi))


def fm_noise_psd(source: Union[SampledField, PhaseTrajectory], nperseg: Optional[int] = None) -> PsdEstimate:
    """Welch-averaged one-sided FM-noise PSD of a field or phase trajectory."""
    nu = instantaneous_frequency(source)
    seg = _default_nperseg(nu.size) if nperseg is None else int(nperseg)
    estimate = _welch_fm(nu, source.fs_hz, seg)
    logger.debug(f"fm_noise_psd: n={nu.size} nperseg={seg} segments={estimate.segment_count}")
    return estimate


def dsh_emulate(waveform: SampledField, cfg: DshConfig, nperseg: Optional[int] = None) -> PsdEstimate:
    """Emulated delayed self-heterodyne FM-noise measurement.

    The field beats against a copy delayed by d = round(delay * fs) samples
    and frequency shifted by ``shift_hz``. A square-law detector sees the real
    photocurrent 2 Re{f[k] conj(f[k - d]) exp(i 2 pi shift k / fs)} plus white
    detection noise of one-sided PSD ``rx_noise_psd``. The photocurrent is
    mixed down by the shift and low-passed at B = min(shift, fs/2 - shift);
    the beat must fit inside B, so a shift below the beat bandwidth folds the
    negative-frequency image onto the signal and corrupts the result.

    The demodulated beat's instantaneous frequency is the field's FM noise
    seen through |2 sin(pi f tau)|^2, which is divided out. Bins with f*tau
    within 0.1 of an integer (transfer nulls) and bins above
    ``DSH_USABLE_FRACTION * B`` are dropped.
    """
    fs = waveform.fs_hz
    d = int(round(cfg.delay_s * fs))
    if d < 1:
        raise InvalidParameter(f"dsh_emulate: delay {cfg.delay_s} s is shorter than one sample at fs={fs:.6g}")
    if d >= len(waveform):
        raise RecordTooShort(f"dsh_emulate: delay of {d} samples exceeds the record ({len(waveform)} samples)")
    if cfg.shift_hz >= fs / 2:
        raise InvalidParameter(f"dsh_emulate: shift {cfg.shift_hz:.6g} Hz must be below fs/2 ({fs / 2:.6g} Hz)")

    tau = d / fs
    iq = waveform.iq
    k = np.arange(iq.size - d)
    carrier = np.exp(2j * math.pi * cfg.shift_hz * k / fs)
    photocurrent = 2.0 * (iq[d:] * np.conj(iq[:-d]) * carrier).real
    if cfg.rx_noise_psd > 0:
        rng = np.random.default_rng(cfg.seed)
        photocurrent = photocurrent + math.sqrt(cfg.rx_noise_psd * fs / 2.0) * rng.standard_normal(photocurrent.size)

    bandwidth = min(cfg.shift_hz, fs / 2 - cfg.shift_hz)
    lowpass = signal.butter(DSH_FILTER_ORDER, bandwidth, fs=fs, output="sos")
    beat = signal.sosfiltfilt(lowpass, photocurrent * np.conj(carrier))
    # Filter start-up transients at both ends.
    guard = DSH_GUARD_CYCLES * int(math.ceil(fs / bandwidth))
    if beat.size <= 4 * guard:
        raise RecordTooShort(f"dsh_emulate: {beat.size} beat samples leave nothing after a {guard}-sample guard")
    beat = beat[guard:-guard]
    nu = np.angle(beat[1:] * np.conj(beat[:-1])) * (fs / (2.0 * math.pi))

    if nperseg is None:
        seg = 1 << int(math.ceil(math.log2(max(16 * tau * fs, 2))))
        while seg > 2 and _segment_count(nu.size, seg) < MIN_SEGMENTS:
            seg //= 2
    else:
        seg = int(nperseg)
    raw = _welch_fm(nu, fs, seg)

    ftau = raw.freqs_hz * tau
    keep = (np.abs(ftau - np.round(ftau)) >= 0.1) & (raw.freqs_hz < DSH_USABLE_FRACTION * bandwidth)
    if not np.any(keep):
        raise BandEmpty(f"dsh_emulate: no usable bins below {DSH_USABLE_FRACTION * bandwidth:.6g} Hz")
    transfer = (2.0 * np.sin(math.pi * ftau[keep])) ** 2
    logger.debug(
        f"dsh_emulate: delay {d} samples, detection bandwidth {bandwidth:.6g} Hz, nperseg={seg}, "
        f"{np.count_nonzero(~keep)} bins dropped"
    )
    return PsdEstimate(
        freqs_hz=raw.freqs_hz[keep],
        psd=raw.psd[keep] / transfer,
        segment_count=raw.segment_count,
        window_name=raw.window_name,
    )


def optical_spectrum(waveform: SampledField, rbw_hz: float, oversample: int = 8) -> OpticalSpectrum:
    """Two-sided power spectrum in dBm per ``rbw_hz`` bin.

    Welch (Hann) is taken on a grid ``oversample`` times finer than the RBW and
    integrated into RBW bins, one of them centred on 0 Hz, so the bins sum to
    the mean power. Frequencies include the field's ``center_offset_hz``.
    """
    fs = waveform.fs_hz
    n = len(waveform)
    if not rbw_hz > 0:
        raise InvalidParameter(f"optical_spectrum requires rbw_hz > 0 (got {rbw_hz})")
    bins = int(round(fs / rbw_hz))
    if rbw_hz < fs / n or bins > n:
        raise RecordTooShort(f"optical_spectrum: rbw {rbw_hz:.6g} Hz is finer than fs/n = {fs / n:.6g} Hz")
    group = max(1, min(oversample, n // bins))
    seg = bins * group

    freqs, psd = signal.welch(
        waveform.iq,
        fs=fs,
        window=WINDOW,
        nperseg=seg,
        noverlap=seg // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    power = np.fft.fftshift(psd) * (fs / seg)
    zero = seg // 2
    start = (zero - group // 2) % group
    binned = np.roll(power, -start).reshape(bins, group).sum(axis=1)
    zero_bin = (zero - start) // group
    centres = (np.arange(bins) - zero_bin) * (fs / bins) + waveform.center_offset_hz
    dbm = 10.0 * np.log10(np.maximum(binned, 1e-30))
    return OpticalSpectrum(freqs_hz=centres, power_dbm=dbm)


def band_level(psd: PsdEstimate, fit_band: Tuple[float, float]) -> float:
    """Median PSD over ``fit_band`` (Hz^2/Hz)."""
    lo, hi = fit_band
    if not lo < hi:
        raise BandEmpty(f"fit band [{lo}, {hi}] is empty")
    mask = (psd.freqs_hz >= lo) & (psd.freqs_hz <= hi)
    if not np.any(mask):
        raise BandEmpty(f"no PSD bins inside fit band [{lo:.6g}, {hi:.6g}] Hz")
    return float(np.median(psd.psd[mask]))


def estimate_linewidth(psd: PsdEstimate, fit_band: Tuple[float, float]) -> float:
    """Lorentzian FWHM pi*h0, with h0 the median PSD over the band."""
    return math.pi * band_level(psd, fit_band)


def _log_lorentzian(f: np.ndarray, log_peak: float, f0: float, fwhm: float) -> np.ndarray:
    half = 0.5 * fwhm
    return log_peak + np.log10(half**2 / ((f - f0) ** 2 + half**2))


def fit_lorentzian_linewidth(waveform: SampledField, nperseg: Optional[int] = None, span_fwhm: float = 10.0) -> float:
    """FWHM from a least-squares Lorentzian fit to the field's power spectrum.

    The fit runs on log power within ``span_fwhm`` initial-guess widths of the
    peak. The Welch resolution must be well below the linewidth.
    """
    n = len(waveform)
    seg = _default_nperseg(n) if nperseg is None else int(nperseg)
    if _segment_count(n, seg) < MIN_SEGMENTS:
        raise RecordTooShort(f"fit_lorentzian_linewidth needs >= {MIN_SEGMENTS} segments of {seg} samples")
    freqs, psd = signal.welch(
        waveform.iq,
        fs=waveform.fs_hz,
        window=WINDOW,
        nperseg=seg,
        noverlap=seg // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    freqs = np.fft.fftshift(freqs)
    psd = np.maximum(np.fft.fftshift(psd), 1e-300)

    peak = int(np.argmax(psd))
    above = np.nonzero(psd >= psd[peak] / 2)[0]
    df = waveform.fs_hz / seg
    guess = max((above.max() - above.min() + 1) * df, 2 * df)
    window = np.abs(freqs - freqs[peak]) <= span_fwhm * guess
    params, _ = optimize.curve_fit(
        _log_lorentzian,
        freqs[window],
        np.log10(psd[window]),
        p0=(math.log10(psd[peak]), freqs[peak], guess),
    )
    fwhm = abs(float(params[2]))
    logger.debug(f"fit_lorentzian_linewidth: guess {guess:.6g} Hz, fit {fwhm:.6g} Hz")
    return fwhm
