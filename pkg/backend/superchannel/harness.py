"""Seeded experiment orchestration.

Every random draw is keyed by (master_seed, channel, stage) through
``seeding.derive_seed``, so a channel's result does not depend on which other
channels run, in what order, or on how many threads.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from . import __version__
from .comb import DemuxConfig, demux_line, generate_comb, line_frequency, superpose
from .config import ExperimentConfig
from .errors import InvalidParameter
from .metrology import DshConfig, OpticalSpectrum, PsdEstimate, band_level, dsh_emulate, fm_noise_psd, optical_spectrum
from .oscillators import SampledField, cw_field, phase_trajectory
from .rxdsp import (
    BerRecord,
    DecisionMode,
    PllOutput,
    apply_rotation,
    cd_compensate,
    classify_fec,
    count_ber,
    dd_pll,
    estimate_freq_offset,
    matched_filter,
    matched_filter_downsample,
    pll_phase_variance,
    resolve_rotation,
)
from .seeding import derive_seed, rng_for
from .sources import CarrierSource
from .transceiver import (
    ModemConfig,
    NoiseConfig,
    analytic_qam_ber,
    coherent_rx,
    constellation,
    decide_symbols,
    demap_qam,
    end_to_end_gain,
    implied_snr_db,
    load_awgn,
    map_qam,
    modulate,
    propagate_fiber,
    qam_scale,
    rrc_shape,
    shift_frequency,
)

logger = logging.getLogger(__name__)


# ----------------------------
# Span planning
# ----------------------------

def usable_span(fsr_hz: float, n_channels: int) -> float:
    """Spectral span covered by n equally spaced carriers: fsr * (n - 1)."""
    if n_channels < 1:
        raise InvalidParameter(f"usable_span requires n >= 1 (got {n_channels})")
    if not fsr_hz > 0:
        raise InvalidParameter(f"usable_span requires fsr_hz > 0 (got {fsr_hz})")
    return fsr_hz * (n_channels - 1)


class PlanRow(NamedTuple):
    fsr_hz: float
    n_lines: int
    usable_span_hz: float
    aggregate_rate_bps: float
    baud_fits: bool


def plan_superchannel(
    span_hz: float,
    fsr_list: Sequence[float],
    modem: ModemConfig,
    polarizations: int = 1,
) -> List[PlanRow]:
    """Retune the comb FSR over a fixed usable span.

    For each FSR: the lines that fit in ``span_hz``, the span they cover and
    the aggregate line rate, n * baud * log2(M) * polarizations.
    ``baud_fits`` is False when the occupied bandwidth exceeds the line spacing.
    """
    if not span_hz >= 0:
        raise InvalidParameter(f"plan_superchannel requires span_hz >= 0 (got {span_hz})")
    if polarizations not in (1, 2):
        raise InvalidParameter(f"plan_superchannel requires 1 or 2 polarizations (got {polarizations})")
    rows = []
    for fsr in fsr_list:
        if not fsr > 0:
            raise InvalidParameter(f"plan_superchannel requires fsr > 0 (got {fsr})")
        n = int(math.floor(span_hz / fsr + 1e-9)) + 1
        rows.append(
            PlanRow(
                fsr_hz=float(fsr),
                n_lines=n,
                usable_span_hz=usable_span(fsr, n),
                aggregate_rate_bps=n * modem.baud_hz * modem.bits_per_symbol * polarizations,
                baud_fits=modem.baud_hz * (1 + modem.rolloff) <= fsr,
            )
        )
    return rows


# ----------------------------
# Per-channel pipeline
# ----------------------------

@dataclass(frozen=True, eq=False)
class ChannelOutcome:
    channel: int
    record: Optional[BerRecord]
    status: str
    error: Optional[str] = None
    elapsed_sec: float = 0.0
    freq_offset_hz: float = math.nan
    rotation_deg: int = 0
    symbols: Optional[np.ndarray] = None
    tx_symbols: Optional[np.ndarray] = None
    detected: Optional[SampledField] = None

    @property
    def ok(self) -> bool:
        return self.status == "done"


class Received(NamedTuple):
    symbols: np.ndarray
    freq_offset_hz: float
    rotation_deg: int
    pll: PllOutput


def channel_payload(cfg: ExperimentConfig, channel: int):
    """Bits and symbols for a channel; the first preamble_symbols are the known preamble."""
    modem = cfg.modem
    rng = rng_for(cfg.master_seed, channel, "bits")
    bits = rng.integers(0, 2, size=cfg.n_symbols * modem.bits_per_symbol, dtype=np.uint8)
    return bits, map_qam(bits, modem.m)


def receive(detected: SampledField, cfg: ExperimentConfig, tx_symbols: np.ndarray, carrier_power_mw: float) -> Received:
    """Offline DSP: CD compensation, coarse frequency offset, matched filter,
    known-gain normalization, DD-PLL and preamble rotation resolution."""
    modem = cfg.modem
    preamble = tx_symbols[: modem.preamble_symbols]

    compensated = cd_compensate(detected, cfg.fiber)
    full_rate = matched_filter(compensated, modem)
    offset = estimate_freq_offset(full_rate.iq, modem.fs_hz)
    corrected = shift_frequency(compensated, -offset)

    symbols = matched_filter_downsample(corrected, modem, n_symbols=len(tx_symbols))
    symbols = symbols / end_to_end_gain(carrier_power_mw, cfg.fiber)

    known = tx_symbols if cfg.pll.decision_mode is DecisionMode.KNOWN else preamble
    pll = dd_pll(symbols, cfg.pll, modem.m, known=known)
    rotation = resolve_rotation(pll.symbols, preamble)
    logger.debug(f"receive: offset {offset:.6g} Hz, rotation {rotation} deg")
    return Received(apply_rotation(pll.symbols, rotation), offset, rotation, pll)


def _run_chain(cfg: ExperimentConfig, channel: int, source: CarrierSource, keep_waveform: bool) -> ChannelOutcome:
    modem = cfg.modem
    bits, tx_symbols = channel_payload(cfg, channel)
    baseband = rrc_shape(tx_symbols, modem)
    n, fs = len(baseband), modem.fs_hz

    carrier = source.carrier(cfg, channel, n, fs, cfg.master_seed)
    lo = source.local_oscillator(cfg, channel, n, fs, cfg.master_seed)
    launched = modulate(carrier, baseband)
    arrived = propagate_fiber(launched, cfg.fiber)
    detected = coherent_rx(arrived, lo)
    noise = NoiseConfig(target_snr_db=cfg.noise.target_snr_db, seed=derive_seed(cfg.master_seed, channel, "noise"))
    detected = load_awgn(detected, noise, modem)

    rx = receive(detected, cfg, tx_symbols, float(carrier.meta.get("power_mw", carrier.mean_power_mw)))

    skip = modem.preamble_symbols
    counted = count_ber(bits[skip * modem.bits_per_symbol:], demap_qam(rx.symbols[skip:], modem.m))
    record = BerRecord(
        channel_index=channel,
        bits_compared=counted.bits_compared,
        bit_errors=counted.bit_errors,
        ber=counted.ber,
        fec_class=classify_fec(counted.ber, cfg.fec),
        mean_pll_phase_variance=pll_phase_variance(rx.pll.error, cfg.pll),
    )
    return ChannelOutcome(
        channel=channel,
        record=record,
        status="done",
        freq_offset_hz=rx.freq_offset_hz,
        rotation_deg=rx.rotation_deg,
        symbols=rx.symbols[skip:],
        tx_symbols=tx_symbols[skip:],
        detected=detected if keep_waveform else None,
    )


def run_channel(
    cfg: ExperimentConfig,
    channel: int,
    source: CarrierSource,
    keep_waveform: bool = False,
) -> ChannelOutcome:
    """modulate -> fiber -> coherent rx -> noise -> DSP -> BerRecord for one comb line.

    Failures are logged and returned as a failed outcome; they never raise.
    """
    started = time.perf_counter()
    try:
        outcome = _run_chain(cfg, channel, source, keep_waveform)
    except Exception as e:
        logger.exception(f"Channel {channel} failed: {e}")
        return ChannelOutcome(
            channel=channel,
            record=None,
            status="failed",
            error=f"{type(e).__name__}: {e}",
            elapsed_sec=time.perf_counter() - started,
        )
    elapsed = time.perf_counter() - started
    rec = outcome.record
    logger.info(f"Channel {channel} ({source.name}): BER {rec.ber:.3e} ({rec.bit_errors}/{rec.bits_compared}) {rec.fec_class.name} in {elapsed:.2f}s")
    return replace(outcome, elapsed_sec=elapsed)


@dataclass(frozen=True, eq=False)
class SweepReport:
    outcomes: List[ChannelOutcome]
    config: ExperimentConfig
    source_name: str
    version: str = __version__

    @property
    def records(self) -> List[BerRecord]:
        return [o.record for o in self.outcomes if o.record is not None]

    @property
    def failed(self) -> List[ChannelOutcome]:
        return [o for o in self.outcomes if not o.ok]


def run_channel_sweep(
    cfg: ExperimentConfig,
    source: CarrierSource,
    threads: int = 1,
    keep_waveforms: bool = False,
) -> SweepReport:
    """Run every requested channel; rows come back ordered by channel index."""
    if threads < 1:
        raise InvalidParameter(f"threads must be >= 1 (got {threads})")
    channels = cfg.channel_list
    logger.info(f"Sweep: {len(channels)} channels, source={source.name}, threads={threads}, seed={cfg.master_seed}")

    if threads == 1:
        outcomes = [run_channel(cfg, k, source, keep_waveforms) for k in channels]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(lambda k: run_channel(cfg, k, source, keep_waveforms), channels))
    outcomes.sort(key=lambda o: o.channel)

    failed = sum(1 for o in outcomes if not o.ok)
    if failed:
        logger.warning(f"Sweep finished with {failed} failed channel(s)")
    return SweepReport(outcomes=outcomes, config=cfg, source_name=source.name)


# ----------------------------
# Constellation comparison
# ----------------------------

def count_resolved_clusters(received: np.ndarray, transmitted: np.ndarray, m: int, min_purity: float = 0.9) -> int:
    """Constellation points whose received cluster is resolvable.

    A point counts when >= ``min_purity`` of its received samples decide back
    to it and the cluster mean lies within half the minimum distance.
    """
    received = np.asarray(received, dtype=complex)
    transmitted = np.asarray(transmitted, dtype=complex)
    if received.size != transmitted.size:
        raise InvalidParameter("count_resolved_clusters: length mismatch")
    half_distance = qam_scale(m)
    decided = decide_symbols(received, m)
    resolved = 0
    for point in constellation(m):
        members = np.isclose(transmitted, point)
        if not np.any(members):
            continue
        purity = float(np.mean(np.isclose(decided[members], point)))
        centre = complex(np.mean(received[members]))
        if purity >= min_purity and abs(centre - point) < half_distance:
            resolved += 1
    return resolved


@dataclass(frozen=True, eq=False)
class ConstellationComparison:
    channel: int
    referenced: ChannelOutcome
    free_running: ChannelOutcome
    referenced_clusters: int
    free_running_clusters: int


def run_constellation_compare(
    cfg: ExperimentConfig,
    referenced_source: CarrierSource,
    free_running_source: CarrierSource,
    channel: Optional[int] = None,
) -> ConstellationComparison:
    """Same bits, noise seed and DSP; only the carrier/LO source differs."""
    channel = cfg.comb.center_line_index if channel is None else channel
    referenced = run_channel(cfg, channel, referenced_source)
    free_running = run_channel(cfg, channel, free_running_source)

    def clusters(o: ChannelOutcome) -> int:
        return count_resolved_clusters(o.symbols, o.tx_symbols, cfg.modem.m) if o.ok else 0

    return ConstellationComparison(
        channel=channel,
        referenced=referenced,
        free_running=free_running,
        referenced_clusters=clusters(referenced),
        free_running_clusters=clusters(free_running),
    )


# ----------------------------
# Metrology reports
# ----------------------------

@dataclass(frozen=True, eq=False)
class FmNoiseReport:
    estimates: Dict[str, PsdEstimate]
    floors: Dict[str, float] = field(default_factory=dict)

    def linewidth_hz(self, name: str) -> float:
        return math.pi * self.floors[name]


def run_fm_noise_report(cfg: ExperimentConfig) -> FmNoiseReport:
    """FM-noise PSDs of the master laser, selected comb lines, a free-running DFB
    and the reference fiber laser.

    The center line is also measured through the emulated self-heterodyne
    set-up. Floors are band medians over the configured floor band.
    """
    m = cfg.metrology
    seed = cfg.master_seed
    nperseg = m.nperseg or None
    band = (m.floor_band_lo_hz, m.floor_band_hi_hz)

    estimates: Dict[str, PsdEstimate] = {}
    master = cw_field(cfg.comb.master, phase_trajectory(cfg.comb.master, m.n_samples, m.fs_hz, derive_seed(seed, "fm", "master")))
    estimates["master"] = fm_noise_psd(master, nperseg)

    comb = generate_comb(cfg.comb, m.n_samples, m.fs_hz, derive_seed(seed, "fm", "comb"))
    for k in m.lines:
        estimates[f"line_{k:02d}"] = fm_noise_psd(comb[k], nperseg)

    dfb = cw_field(cfg.dfb, phase_trajectory(cfg.dfb, m.n_samples, m.fs_hz, derive_seed(seed, "fm", "dfb")))
    estimates["dfb"] = fm_noise_psd(dfb, nperseg)

    fiber_laser = cw_field(
        cfg.fiber_laser,
        phase_trajectory(cfg.fiber_laser, m.n_samples, m.fs_hz, derive_seed(seed, "fm", "fiber_laser")),
    )
    estimates["fiber_laser"] = fm_noise_psd(fiber_laser, nperseg)

    center = cfg.comb.center_line_index
    dsh = DshConfig(
        delay_s=m.dsh_delay_s,
        shift_hz=m.dsh_shift_hz,
        rx_noise_psd=m.dsh_rx_noise_psd,
        seed=derive_seed(seed, "fm", "dsh"),
    )
    estimates[f"dsh_line_{center:02d}"] = dsh_emulate(comb[center], dsh)

    floors = {name: band_level(est, band) for name, est in estimates.items()}
    for name, level in floors.items():
        logger.info(f"FM-noise floor {name}: {level:.4g} Hz^2/Hz (linewidth {math.pi * level:.4g} Hz)")
    return FmNoiseReport(estimates=estimates, floors=floors)


def run_spectrum_report(cfg: ExperimentConfig, channel: Optional[int] = None, n: int = 2**14) -> Dict[str, OpticalSpectrum]:
    """Optical spectra of the whole comb and of one demultiplexed carrier.

    The sample rate is chosen to cover every line, so this uses short records.
    """
    spec = cfg.comb
    channel = spec.center_line_index if channel is None else channel
    widest = max(spec.center_line_index, spec.n_lines - 1 - spec.center_line_index)
    fs = 2 * (widest + 1) * spec.fsr_hz
    comb = generate_comb(spec, n, fs, derive_seed(cfg.master_seed, "spectrum", "comb"))
    demuxed = demux_line(
        comb,
        DemuxConfig(
            dfb_freq_hz=line_frequency(spec, channel) + cfg.demux.detuning_hz,
            locking_half_range_hz=cfg.demux.locking_half_range_hz,
            suppression_db=cfg.demux.suppression_db,
            output_power_mw=cfg.demux.output_power_mw,
        ),
    )
    rbw = max(cfg.metrology.rbw_hz, fs / n)
    return {
        "comb": optical_spectrum(superpose(comb), rbw),
        f"demux_line_{channel:02d}": optical_spectrum(demuxed.field, rbw),
    }


# ----------------------------
# AWGN calibration
# ----------------------------

class CalibrationPoint(NamedTuple):
    snr_db: float
    bits: int
    errors: int
    ber: float
    analytic_ber: float
    gap_db: float


def calibrate_awgn(cfg: ExperimentConfig) -> List[CalibrationPoint]:
    """Back-to-back BER vs symbol SNR through the modem chain, against the analytic curve.

    No phase noise, fiber or PLL: shaping, AWGN, matched filter and hard
    decisions only. ``gap_db`` is the SNR the measured BER implies minus the
    loaded SNR (NaN when no errors were counted).
    """
    modem = cfg.modem
    points: List[CalibrationPoint] = []
    for snr_db in cfg.calibration.snr_db_list:
        tag = repr(float(snr_db))
        rng = rng_for(cfg.master_seed, "awgn", f"bits/{tag}")
        bits = rng.integers(0, 2, size=cfg.calibration.n_symbols * modem.bits_per_symbol, dtype=np.uint8)
        shaped = rrc_shape(map_qam(bits, modem.m), modem)
        noisy = load_awgn(shaped, NoiseConfig(target_snr_db=snr_db, seed=derive_seed(cfg.master_seed, "awgn", f"noise/{tag}")), modem)
        rx = matched_filter_downsample(noisy, modem, n_symbols=cfg.calibration.n_symbols)
        counted = count_ber(bits, demap_qam(rx, modem.m))
        analytic = float(analytic_qam_ber(snr_db, modem.m))
        gap = implied_snr_db(counted.ber, modem.m) - snr_db if counted.bit_errors else math.nan
        points.append(CalibrationPoint(float(snr_db), counted.bits_compared, counted.bit_errors, counted.ber, analytic, gap))
        logger.info(f"AWGN {snr_db:.2f} dB: BER {counted.ber:.3e} (analytic {analytic:.3e}, gap {gap:+.2f} dB)")
    return points
