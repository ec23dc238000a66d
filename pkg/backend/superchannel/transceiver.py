"""64-QAM transmitter, linear fiber channel, noise loading and coherent front end."""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import constants, signal
from scipy.optimize import brentq
from scipy.special import erfc

from .comb import DemuxedCarrier
from .errors import InvalidParameter, RateMismatch
from .oscillators import SampledField

logger = logging.getLogger(__name__)

SUPPORTED_ORDERS = (4, 16, 64, 256)


@dataclass(frozen=True)
class ModemConfig:
    m: int = 64
    baud_hz: float = 5e9
    sps: int = 4
    rolloff: float = 0.1
    rrc_span_symbols: int = 32
    preamble_symbols: int = 256

    def __post_init__(self) -> None:
        if self.m not in SUPPORTED_ORDERS:
            raise InvalidParameter(f"ModemConfig violates m in {SUPPORTED_ORDERS} (got {self.m})")
        if not self.baud_hz > 0:
            raise InvalidParameter(f"ModemConfig violates baud_hz > 0 (got {self.baud_hz})")
        if self.sps < 2:
            raise InvalidParameter(f"ModemConfig violates sps >= 2 (got {self.sps})")
        if not 0 < self.rolloff <= 1:
            raise InvalidParameter(f"ModemConfig violates 0 < rolloff <= 1 (got {self.rolloff})")
        if self.rrc_span_symbols < 2 or self.rrc_span_symbols % 2:
            raise InvalidParameter(f"ModemConfig violates even rrc_span_symbols >= 2 (got {self.rrc_span_symbols})")
        if self.preamble_symbols < 0:
            raise InvalidParameter(f"ModemConfig violates preamble_symbols >= 0 (got {self.preamble_symbols})")

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.m))

    @property
    def fs_hz(self) -> float:
        return self.sps * self.baud_hz

    @property
    def filter_delay_samples(self) -> int:
        return self.rrc_span_symbols * self.sps // 2

    @property
    def total_delay_samples(self) -> int:
        """Transmit plus matched filter group delay."""
        return self.rrc_span_symbols * self.sps


@dataclass(frozen=True)
class FiberConfig:
    """Standard single-mode fiber; D in ps/(nm km), alpha in dB/km."""

    length_km: float = 25.0
    dispersion_ps_nm_km: float = 17.0
    attenuation_db_km: float = 0.2
    wavelength_nm: float = 1550.0

    def __post_init__(self) -> None:
        if not self.length_km >= 0:
            raise InvalidParameter(f"FiberConfig violates length_km >= 0 (got {self.length_km})")
        if not self.wavelength_nm > 0:
            raise InvalidParameter(f"FiberConfig violates wavelength_nm > 0 (got {self.wavelength_nm})")

    @property
    def amplitude_gain(self) -> float:
        return 10 ** (-self.attenuation_db_km * self.length_km / 20.0)

    @property
    def beta2_s2_per_m(self) -> float:
        lam = self.wavelength_nm * 1e-9
        return -(self.dispersion_ps_nm_km * 1e-6) * lam**2 / (2 * math.pi * constants.c)


@dataclass(frozen=True)
class NoiseConfig:
    """Post-matched-filter symbol SNR; +inf disables noise loading."""

    target_snr_db: float = 28.0
    seed: int = 0

    def __post_init__(self) -> None:
        if math.isnan(self.target_snr_db) or self.target_snr_db == -math.inf:
            raise InvalidParameter(f"NoiseConfig violates finite target_snr_db (got {self.target_snr_db})")

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.target_snr_db)


# ----------------------------
# Constellation
# ----------------------------

def _gray(n: int) -> int:
    return n ^ (n >> 1)


@lru_cache(maxsize=None)
def axis_levels(bits_per_axis: int) -> np.ndarray:
    """Level for each axis codeword value (index = the axis bits read MSB first).

    One-bit axes are antipodal (0 -> +1, 1 -> -1). Wider axes use the
    binary-reflected Gray code in ascending level order, e.g. 3 bits:
    [000,001,011,010,110,111,101,100] -> [-7,-5,-3,-1,+1,+3,+5,+7].
    """
    if bits_per_axis == 1:
        return np.array([1.0, -1.0])
    count = 1 << bits_per_axis
    levels = np.empty(count)
    for position in range(count):
        levels[_gray(position)] = 2 * position - (count - 1)
    levels.setflags(write=False)
    return levels


def qam_scale(m: int) -> float:
    """Factor that brings the integer square grid to unit average energy (1/sqrt(42) for 64-QAM)."""
    return 1.0 / math.sqrt(2.0 * (m - 1) / 3.0)


def constellation(m: int) -> np.ndarray:
    """All m points ordered by symbol index (I bits high, Q bits low)."""
    bpa = int(math.log2(m)) // 2
    levels = axis_levels(bpa) * qam_scale(m)
    idx = np.arange(m)
    return levels[idx >> bpa] + 1j * levels[idx & ((1 << bpa) - 1)]


def _check_order(m: int) -> int:
    if m not in SUPPORTED_ORDERS:
        raise InvalidParameter(f"QAM order must be one of {SUPPORTED_ORDERS} (got {m})")
    return int(math.log2(m)) // 2


def map_qam(bits: np.ndarray, m: int) -> np.ndarray:
    """Gray-map a bit sequence onto unit-average-energy square QAM."""
    bpa = _check_order(m)
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    k = 2 * bpa
    if bits.size % k:
        raise InvalidParameter(f"bit count {bits.size} is not divisible by log2(m) = {k}")
    groups = bits.reshape(-1, k)
    weights = 1 << np.arange(bpa - 1, -1, -1)
    i_val = groups[:, :bpa] @ weights
    q_val = groups[:, bpa:] @ weights
    levels = axis_levels(bpa) * qam_scale(m)
    return levels[i_val] + 1j * levels[q_val]


def _decide_axis(x: np.ndarray, bpa: int, scale: float) -> np.ndarray:
    """Nearest-level codeword per sample; ties go to the smaller codeword."""
    levels = axis_levels(bpa) * scale
    dist = np.abs(x[:, None] - levels[None, :])
    return np.argmin(dist, axis=1)


def demap_qam(symbols: np.ndarray, m: int) -> np.ndarray:
    """Hard-decision demapping (per-axis nearest level = Euclidean nearest point)."""
    bpa = _check_order(m)
    symbols = np.asarray(symbols, dtype=complex).ravel()
    scale = qam_scale(m)
    i_val = _decide_axis(symbols.real, bpa, scale)
    q_val = _decide_axis(symbols.imag, bpa, scale)
    shifts = np.arange(bpa - 1, -1, -1)
    i_bits = (i_val[:, None] >> shifts) & 1
    q_bits = (q_val[:, None] >> shifts) & 1
    return np.concatenate([i_bits, q_bits], axis=1).astype(np.uint8).ravel()


def decide_symbols(symbols: np.ndarray, m: int) -> np.ndarray:
    """Nearest constellation point for each sample."""
    bpa = _check_order(m)
    symbols = np.asarray(symbols, dtype=complex).ravel()
    scale = qam_scale(m)
    levels = axis_levels(bpa) * scale
    return levels[_decide_axis(symbols.real, bpa, scale)] + 1j * levels[_decide_axis(symbols.imag, bpa, scale)]


def analytic_qam_ber(snr_db: Union[float, np.ndarray], m: int) -> Union[float, np.ndarray]:
    """Exact BER of Gray-coded square M-QAM in AWGN at symbol SNR Es/N0.

    Per-axis bit-position error sums for binary-reflected Gray PAM; one-bit
    axes reduce to Q(sqrt(Es/N0)) for QPSK.
    """
    _check_order(m)
    snr = 10 ** (np.asarray(snr_db, dtype=float) / 10.0)
    root_m = int(math.isqrt(m))
    n_bits_axis = int(math.log2(root_m))
    arg = np.sqrt(3.0 * snr / (2.0 * (m - 1)))
    total = np.zeros_like(arg)
    for k in range(1, n_bits_axis + 1):
        pk = np.zeros_like(arg)
        for i in range(int((1 - 2.0 ** (-k)) * root_m)):
            ratio = i * 2 ** (k - 1) / root_m
            weight = (-1) ** math.floor(ratio) * (2 ** (k - 1) - math.floor(ratio + 0.5))
            pk = pk + weight * erfc((2 * i + 1) * arg)
        total = total + pk / root_m
    ber = total / n_bits_axis
    return float(ber) if np.ndim(ber) == 0 else ber


def implied_snr_db(ber: float, m: int, lo_db: float = -10.0, hi_db: float = 50.0) -> float:
    """Symbol SNR at which the analytic curve yields ``ber``."""
    if not 0 < ber < analytic_qam_ber(lo_db, m):
        raise InvalidParameter(f"implied_snr_db: ber {ber} outside the invertible range")
    target = math.log(ber)
    return float(brentq(lambda s: math.log(max(analytic_qam_ber(s, m), 1e-300)) - target, lo_db, hi_db))


# ----------------------------
# Pulse shaping
# ----------------------------

@lru_cache(maxsize=32)
def rrc_taps(rolloff: float, span_symbols: int, sps: int) -> np.ndarray:
    """Unit-energy root-raised-cosine taps, span*sps + 1 long, centered."""
    n_taps = span_symbols * sps + 1
    t = (np.arange(n_taps) - (n_taps - 1) / 2) / sps
    beta = rolloff
    taps = np.empty(n_taps)
    for idx, ti in enumerate(t):
        if math.isclose(ti, 0.0, abs_tol=1e-12):
            taps[idx] = 1.0 - beta + 4 * beta / math.pi
        elif math.isclose(abs(ti), 1 / (4 * beta), rel_tol=1e-12):
            taps[idx] = (beta / math.sqrt(2)) * (
                (1 + 2 / math.pi) * math.sin(math.pi / (4 * beta)) + (1 - 2 / math.pi) * math.cos(math.pi / (4 * beta))
            )
        else:
            num = math.sin(math.pi * ti * (1 - beta)) + 4 * beta * ti * math.cos(math.pi * ti * (1 + beta))
            den = math.pi * ti * (1 - (4 * beta * ti) ** 2)
            taps[idx] = num / den
    taps /= np.linalg.norm(taps)
    taps.setflags(write=False)
    return taps


def rrc_shape(symbols: np.ndarray, cfg: ModemConfig) -> SampledField:
    """Upsample by sps and filter with the RRC; delay span/2 symbols."""
    symbols = np.asarray(symbols, dtype=complex)
    taps = rrc_taps(cfg.rolloff, cfg.rrc_span_symbols, cfg.sps)
    shaped = signal.upfirdn(taps, symbols, up=cfg.sps)
    return SampledField(
        iq=shaped,
        fs_hz=cfg.fs_hz,
        meta={"delay_samples": cfg.filter_delay_samples, "n_symbols": int(symbols.size)},
    )


# ----------------------------
# Modulation, channel, front end
# ----------------------------

def _as_field(x: Union[DemuxedCarrier, SampledField]) -> SampledField:
    return x.field if isinstance(x, DemuxedCarrier) else x


def _check_compatible(a: SampledField, b: SampledField, what: str) -> None:
    if a.fs_hz != b.fs_hz:
        raise RateMismatch(f"{what}: sample rates differ ({a.fs_hz} != {b.fs_hz})")
    if len(a) != len(b):
        raise InvalidParameter(f"{what}: lengths differ ({len(a)} != {len(b)})")


def modulate(carrier: Union[DemuxedCarrier, SampledField], baseband: SampledField) -> SampledField:
    """Pointwise product of the carrier field and the baseband envelope."""
    field = _as_field(carrier)
    _check_compatible(field, baseband, "modulate")
    meta = dict(field.meta)
    meta.update(baseband.meta)
    return SampledField(iq=field.iq * baseband.iq, fs_hz=field.fs_hz, center_offset_hz=field.center_offset_hz, meta=meta)


def cd_transfer(n: int, fs_hz: float, cfg: FiberConfig) -> np.ndarray:
    """exp(-i*(pi*lambda^2*D*L/c)*f^2) on the FFT grid (numpy ordering)."""
    f = np.fft.fftfreq(n, d=1.0 / fs_hz)
    lam = cfg.wavelength_nm * 1e-9
    d_si = cfg.dispersion_ps_nm_km * 1e-6
    length_m = cfg.length_km * 1e3
    return np.exp(-1j * (math.pi * lam**2 * d_si * length_m / constants.c) * f**2)


def propagate_fiber(field: SampledField, cfg: FiberConfig) -> SampledField:
    """Linear fiber: chromatic dispersion all-pass plus scalar attenuation.

    Equivalent to exp(+i*beta2*L*w^2/2) with beta2 = -D*lambda^2/(2*pi*c).
    ``rxdsp.cd_compensate`` applies the conjugate, so it is the exact inverse.
    """
    if cfg.length_km == 0:
        return field.with_iq(field.iq.copy())
    h = cd_transfer(len(field), field.fs_hz, cfg)
    iq = np.fft.ifft(np.fft.fft(field.iq) * h) * cfg.amplitude_gain
    logger.debug(f"propagate_fiber: L={cfg.length_km} km, D={cfg.dispersion_ps_nm_km}, beta2*L={cfg.beta2_s2_per_m * cfg.length_km * 1e3:.4g} s^2")
    return field.with_iq(iq)


def load_awgn(field: SampledField, cfg: NoiseConfig, modem: ModemConfig) -> SampledField:
    """Add complex white Gaussian noise for a target post-matched-filter symbol SNR.

    With unit-energy RRC taps the matched filter passes per-sample noise
    variance sigma^2 unchanged while a symbol collects sps samples of signal
    power P, so SNR = P * sps / sigma^2 and sigma^2 = P * sps / SNR.
    """
    if cfg.noiseless:
        return field
    power = field.mean_power_mw
    if not power > 0:
        raise InvalidParameter("load_awgn requires measurable (nonzero) signal power")
    sigma2 = power * modem.sps / 10 ** (cfg.target_snr_db / 10.0)
    rng = np.random.default_rng(cfg.seed)
    noise = rng.standard_normal(len(field)) + 1j * rng.standard_normal(len(field))
    noise *= math.sqrt(sigma2 / 2.0)
    return field.with_iq(field.iq + noise, snr_db=cfg.target_snr_db)


def coherent_rx(field: SampledField, lo: Union[DemuxedCarrier, SampledField]) -> SampledField:
    """Ideal 90-degree hybrid: field * conj(LO / sqrt(mean LO power))."""
    lo_field = _as_field(lo)
    _check_compatible(field, lo_field, "coherent_rx")
    lo_power = lo_field.mean_power_mw
    if not lo_power > 0:
        raise InvalidParameter("coherent_rx requires a nonzero local oscillator")
    iq = field.iq * np.conj(lo_field.iq) / math.sqrt(lo_power)
    return SampledField(
        iq=iq,
        fs_hz=field.fs_hz,
        center_offset_hz=field.center_offset_hz - lo_field.center_offset_hz,
        meta=dict(field.meta),
    )


def shift_frequency(field: SampledField, offset_hz: float) -> SampledField:
    """Multiply by exp(i*2*pi*offset*k/fs)."""
    k = np.arange(len(field))
    return field.with_iq(field.iq * np.exp(2j * math.pi * offset_hz * k / field.fs_hz))


def end_to_end_gain(carrier_power_mw: float, fiber: FiberConfig) -> float:
    """Field amplitude seen by the receiver per unit symbol (known-gain bookkeeping)."""
    return math.sqrt(carrier_power_mw) * fiber.amplitude_gain
