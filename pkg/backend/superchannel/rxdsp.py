"""Offline receiver DSP: CD compensation, frequency offset, matched filter,
decision-directed PLL, rotation resolution, BER and FEC accounting."""

import enum
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy import signal

from .errors import AmbiguousRotation, InvalidParameter, NoSpectralPeak, RecordTooShort
from .oscillators import SampledField
from .transceiver import FiberConfig, ModemConfig, cd_transfer, qam_scale, rrc_taps

logger = logging.getLogger(__name__)


class DecisionMode(str, enum.Enum):
    KNOWN = "known"
    DECIDED = "decided"


@dataclass(frozen=True)
class PllConfig:
    mu1: float = 0.05
    mu2: float = 2.5e-4
    decision_mode: DecisionMode = DecisionMode.DECIDED

    def __post_init__(self) -> None:
        if not 0 < self.mu1 < 1:
            raise InvalidParameter(f"PllConfig violates 0 < mu1 < 1 (got {self.mu1})")
        if not 0 <= self.mu2 < self.mu1:
            raise InvalidParameter(f"PllConfig violates 0 <= mu2 < mu1 (got {self.mu2})")
        object.__setattr__(self, "decision_mode", DecisionMode(self.decision_mode))

    @property
    def acquisition_symbols(self) -> int:
        return int(math.ceil(10 / self.mu1))


class FecClass(enum.IntEnum):
    """Ordered so that a better class compares greater."""

    FAIL = 0
    PASS_20PCT = 1
    PASS_7PCT = 2


@dataclass(frozen=True)
class FecPolicy:
    ber_7pct: float = 3.8e-3
    ber_20pct: float = 2.4e-2

    def __post_init__(self) -> None:
        if not 0 < self.ber_7pct < self.ber_20pct:
            raise InvalidParameter(f"FecPolicy violates ber_7pct < ber_20pct (got {self.ber_7pct}, {self.ber_20pct})")


@dataclass(frozen=True)
class BerCount:
    bits_compared: int
    bit_errors: int

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_compared


@dataclass(frozen=True)
class BerRecord:
    channel_index: int
    bits_compared: int
    bit_errors: int
    ber: float
    fec_class: FecClass
    mean_pll_phase_variance: float

    def __post_init__(self) -> None:
        if self.bits_compared <= 0:
            raise InvalidParameter("BerRecord violates bits_compared > 0")


class PllOutput(NamedTuple):
    symbols: np.ndarray
    phase: np.ndarray
    error: np.ndarray


# ----------------------------
# Waveform-level DSP
# ----------------------------

def cd_compensate(waveform: SampledField, cfg: FiberConfig) -> SampledField:
    """Apply the conjugate CD transfer function (no attenuation correction)."""
    if cfg.length_km == 0:
        return waveform.with_iq(waveform.iq.copy())
    h = cd_transfer(len(waveform), waveform.fs_hz, cfg)
    return waveform.with_iq(np.fft.ifft(np.fft.fft(waveform.iq) * np.conj(h)))


def estimate_freq_offset(
    samples: np.ndarray,
    rate_hz: float,
    nperseg: int = 4096,
    min_peak_db: float = 6.0,
    min_centroid_resultant: float = 0.5,
) -> float:
    """Coarse carrier offset from the 4th-power periodogram peak.

    Square QAM keeps a nonzero E[s^4], so samples**4 carry a tone at 4*df.
    The unambiguous range is +/-rate/8; with the default segment length the
    resolution is rate/2**14.

    Oversampled input has a band-limited spectrum whose circular centroid is
    a coarse but unambiguous offset. When its resultant length reaches
    ``min_centroid_resultant`` the 4th-power estimate is moved by multiples
    of rate/4 onto the centroid and a warning is logged. Symbol-rate input
    has a flat spectrum, so offsets beyond +/-rate/8 come back wrapped.
    """
    x = np.asarray(samples, dtype=complex)
    if x.size < 2**14:
        raise RecordTooShort(f"estimate_freq_offset requires >= 2**14 samples (got {x.size})")
    welch_kw = dict(
        fs=rate_hz,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    freqs, psd = signal.welch(x**4, **welch_kw)
    peak = int(np.argmax(psd))
    median = float(np.median(psd))
    ratio_db = 10 * math.log10(psd[peak] / median) if median > 0 else math.inf
    if ratio_db < min_peak_db:
        raise NoSpectralPeak(ratio_db, min_peak_db)

    # Parabolic refinement on the log spectrum, neighbours taken circularly.
    n = psd.size
    left, centre, right = (math.log(max(psd[(peak + d) % n], 1e-300)) for d in (-1, 0, 1))
    denom = left - 2 * centre + right
    delta = 0.5 * (left - right) / denom if denom != 0 else 0.0
    f_peak = freqs[peak] + delta * rate_hz / nperseg
    offset = f_peak / 4.0
    logger.debug(f"estimate_freq_offset: {offset:.6g} Hz (peak-to-median {ratio_db:.1f} dB)")

    centroid, resultant = _spectral_centroid(x, welch_kw)
    if resultant >= min_centroid_resultant:
        turns = round((centroid - offset) / (rate_hz / 4))
        if turns:
            unwrapped = offset + turns * rate_hz / 4
            logger.warning(
                f"frequency offset {offset:.6g} Hz was wrapped; unwrapped to {unwrapped:.6g} Hz "
                f"(spectral centroid {centroid:.6g} Hz, resultant {resultant:.2f})"
            )
            offset = unwrapped
    elif abs(offset) > 0.9 * rate_hz / 8:
        logger.warning(f"frequency offset {offset:.6g} Hz is near the +/-{rate_hz / 8:.6g} Hz range edge; it may be wrapped")
    return offset


def _spectral_centroid(x: np.ndarray, welch_kw: dict) -> Tuple[float, float]:
    """Circular power-weighted mean frequency and its resultant length in [0, 1]."""
    freqs, psd = signal.welch(x, **welch_kw)
    rate = welch_kw["fs"]
    z = complex(np.sum(psd * np.exp(2j * math.pi * freqs / rate)) / np.sum(psd))
    return math.atan2(z.imag, z.real) * rate / (2 * math.pi), abs(z)


def matched_filter(waveform: SampledField, modem: ModemConfig) -> SampledField:
    """Full-rate RRC matched filter (full convolution, group delay span*sps/2)."""
    taps = rrc_taps(modem.rolloff, modem.rrc_span_symbols, modem.sps)
    out = signal.fftconvolve(waveform.iq, taps)
    delay = int(waveform.meta.get("delay_samples", 0)) + modem.filter_delay_samples
    return waveform.with_iq(out, delay_samples=delay)


def payload_symbol_count(n_samples: int, modem: ModemConfig) -> int:
    """Symbols carried by a transmit waveform of ``n_samples`` (length (N-1)*sps + span*sps + 1)."""
    return (n_samples - modem.rrc_span_symbols * modem.sps - 1) // modem.sps + 1


def matched_filter_downsample(
    waveform: SampledField,
    modem: ModemConfig,
    timing_offset_samples: Optional[int] = None,
    n_symbols: Optional[int] = None,
) -> np.ndarray:
    """Matched filter then decimate at symbol centers.

    The default timing offset is the known pipeline delay, span*sps samples
    (transmit filter plus matched filter).
    """
    offset = modem.total_delay_samples if timing_offset_samples is None else int(timing_offset_samples)
    filtered = matched_filter(waveform, modem).iq
    if not 0 <= offset < filtered.size:
        raise InvalidParameter(f"timing offset {offset} out of range [0, {filtered.size})")
    if n_symbols is None:
        n_symbols = int(waveform.meta.get("n_symbols", payload_symbol_count(len(waveform), modem)))
    return filtered[offset::modem.sps][:n_symbols]


# ----------------------------
# Symbol-level DSP
# ----------------------------

def dd_pll(
    symbols: np.ndarray,
    cfg: PllConfig,
    m: int = 64,
    known: Optional[np.ndarray] = None,
) -> PllOutput:
    """Second-order decision-directed phase-locked loop.

    y_k = r_k exp(-i phi_k); d_k = nearest point (or the known symbol);
    e_k = arg(y_k conj(d_k)); phi_{k+1} = phi_k + mu1 e_k + mu2 sum_{j<=k} e_j.
    Known symbols drive the loop for the whole record in data-aided mode and
    for the preamble in decided mode. Divergence shows up as BER.
    """
    r = np.asarray(symbols, dtype=complex).tolist()
    n = len(r)
    ref = [] if known is None else np.asarray(known, dtype=complex).tolist()
    if cfg.decision_mode is DecisionMode.KNOWN:
        if len(ref) < n:
            raise InvalidParameter(f"data-aided PLL needs {n} known symbols (got {len(ref)})")
        n_known = n
    else:
        if len(ref) < 64:
            raise InvalidParameter(f"decided-mode PLL needs a preamble of >= 64 symbols (got {len(ref)})")
        n_known = min(len(ref), n)

    scale = qam_scale(m)
    top = math.isqrt(m) - 1
    mu1, mu2 = cfg.mu1, cfg.mu2

    def nearest(v: float) -> float:
        p = round((v / scale + top) / 2)
        p = 0 if p < 0 else top if p > top else p
        return (2 * p - top) * scale

    out = [0j] * n
    track = [0.0] * n
    err = [0.0] * n
    phi = 0.0
    acc = 0.0
    for k in range(n):
        y = r[k] * complex(math.cos(phi), -math.sin(phi))
        d = ref[k] if k < n_known else complex(nearest(y.real), nearest(y.imag))
        z = y * d.conjugate()
        e = math.atan2(z.imag, z.real)
        out[k] = y
        track[k] = phi
        err[k] = e
        acc += e
        phi += mu1 * e + mu2 * acc
    return PllOutput(np.array(out), np.array(track), np.array(err))


def pll_phase_variance(error: np.ndarray, cfg: PllConfig) -> float:
    """Variance (rad^2) of the loop error after acquisition."""
    tail = np.asarray(error)[cfg.acquisition_symbols:]
    if tail.size == 0:
        tail = np.asarray(error)
    return float(np.var(tail)) if tail.size else 0.0


_QUARTER_TURNS = (1 + 0j, -1j, -1 + 0j, 1j)


def resolve_rotation(corrected: np.ndarray, preamble: np.ndarray) -> int:
    """Quarter-turn ambiguity of the PLL, resolved against the known preamble.

    Returns the rotation in degrees (0, 90, 180, 270) that the input carries;
    undo it with ``apply_rotation``.
    """
    preamble = np.asarray(preamble, dtype=complex)
    if preamble.size == 0:
        raise InvalidParameter("resolve_rotation requires a preamble")
    y = np.asarray(corrected, dtype=complex)[: preamble.size]
    s = complex(np.sum(y * np.conj(preamble)))
    scores = [(s * turn).real for turn in _QUARTER_TURNS]
    order = sorted(range(4), key=lambda i: scores[i], reverse=True)
    best, second = scores[order[0]], scores[order[1]]
    if best <= 0:
        raise AmbiguousRotation(-math.inf)
    # Correlations are amplitudes; the margin is a power ratio.
    if second > 0:
        margin_db = 20 * math.log10(best / second)
        if margin_db < 3.0:
            raise AmbiguousRotation(margin_db)
    return 90 * order[0]


def apply_rotation(symbols: np.ndarray, degrees: int) -> np.ndarray:
    return np.asarray(symbols) * _QUARTER_TURNS[(degrees // 90) % 4]


def count_ber(tx_bits: np.ndarray, rx_bits: np.ndarray) -> BerCount:
    tx = np.asarray(tx_bits, dtype=np.uint8).ravel()
    rx = np.asarray(rx_bits, dtype=np.uint8).ravel()
    if tx.size != rx.size:
        raise InvalidParameter(f"count_ber: length mismatch ({tx.size} != {rx.size})")
    if tx.size == 0:
        raise InvalidParameter("count_ber requires bits_compared > 0")
    return BerCount(bits_compared=int(tx.size), bit_errors=int(np.count_nonzero(tx != rx)))


def classify_fec(ber: float, policy: FecPolicy = FecPolicy()) -> FecClass:
    if not 0 <= ber <= 1:
        raise InvalidParameter(f"classify_fec requires ber in [0, 1] (got {ber})")
    if ber < policy.ber_7pct:
        return FecClass.PASS_7PCT
    if ber < policy.ber_20pct:
        return FecClass.PASS_20PCT
    return FecClass.FAIL
