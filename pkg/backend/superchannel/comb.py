"""Gain-switched, externally injected comb and injection-locked demultiplexer.

Lines are kept as per-line descriptors (power, offset, shared phase
references) instead of one wideband waveform: a 17-line x 10 GHz comb would
need >= 170 GS/s, while the receiver only ever sees one locked line plus its
suppressed neighbours inside the simulation bandwidth.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple, overload

import numpy as np

from .errors import InvalidParameter, NoLineInLockingRange
from .oscillators import (
    MASTER_LASER_DEFAULT,
    RF_DRIVE_DEFAULT,
    OscillatorSpec,
    PhaseTrajectory,
    SampledField,
    phase_trajectory,
)
from .seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CombSpec:
    fsr_hz: float = 10e9
    n_lines: int = 17
    center_line_index: int = 8
    line_powers_mw: Tuple[float, ...] = field(default_factory=lambda: (1.0,) * 17)
    master: OscillatorSpec = MASTER_LASER_DEFAULT
    rf_drive: OscillatorSpec = RF_DRIVE_DEFAULT

    def __post_init__(self) -> None:
        if not self.fsr_hz > 0:
            raise InvalidParameter(f"CombSpec violates fsr_hz > 0 (got {self.fsr_hz})")
        if self.n_lines < 1:
            raise InvalidParameter(f"CombSpec violates n_lines >= 1 (got {self.n_lines})")
        if not 0 <= self.center_line_index < self.n_lines:
            raise InvalidParameter(
                f"CombSpec violates 0 <= center_line_index < n_lines (got {self.center_line_index})"
            )
        if len(self.line_powers_mw) != self.n_lines:
            raise InvalidParameter(
                f"CombSpec violates len(line_powers_mw) == n_lines ({len(self.line_powers_mw)} != {self.n_lines})"
            )
        if any(not p > 0 for p in self.line_powers_mw):
            raise InvalidParameter("CombSpec violates all line powers > 0")

    @classmethod
    def flat(
        cls,
        fsr_hz: float = 10e9,
        n_lines: int = 17,
        line_power_mw: float = 1.0,
        center_line_index: Optional[int] = None,
        master: OscillatorSpec = MASTER_LASER_DEFAULT,
        rf_drive: OscillatorSpec = RF_DRIVE_DEFAULT,
    ) -> "CombSpec":
        center = (n_lines - 1) // 2 if center_line_index is None else center_line_index
        return cls(
            fsr_hz=fsr_hz,
            n_lines=n_lines,
            center_line_index=center,
            line_powers_mw=(float(line_power_mw),) * n_lines,
            master=master,
            rf_drive=rf_drive,
        )


@dataclass(frozen=True)
class DemuxConfig:
    dfb_freq_hz: float
    locking_half_range_hz: float = 2.5e9
    suppression_db: float = 40.0
    output_power_mw: float = 10.0

    def __post_init__(self) -> None:
        if not self.locking_half_range_hz > 0:
            raise InvalidParameter(
                f"DemuxConfig violates locking_half_range_hz > 0 (got {self.locking_half_range_hz})"
            )
        if not self.suppression_db >= 0:
            raise InvalidParameter(f"DemuxConfig violates suppression_db >= 0 (got {self.suppression_db})")
        if not self.output_power_mw > 0:
            raise InvalidParameter(f"DemuxConfig violates output_power_mw > 0 (got {self.output_power_mw})")


@dataclass(frozen=True, eq=False)
class DemuxedCarrier:
    field: SampledField
    locked_line_index: int
    detuning_hz: float
    achieved_suppression_db: float


def line_frequency(spec: CombSpec, k: int) -> float:
    """f_k = (k - center_line_index) * fsr, relative to the simulation center."""
    if not 0 <= k < spec.n_lines:
        raise InvalidParameter(f"line index {k} out of range [0, {spec.n_lines})")
    return (k - spec.center_line_index) * spec.fsr_hz


class CombRealization(Sequence[SampledField]):
    """One comb draw: a master and an RF phase trajectory shared by every line.

    Indexing yields the line's SampledField descriptor: carrier removed
    (the line frequency lives in ``center_offset_hz``), samples
    sqrt(P_k) * exp(i(phi_master + (k - center) * phi_rf)).
    """

    def __init__(self, spec: CombSpec, master_phase: PhaseTrajectory, rf_phase: PhaseTrajectory) -> None:
        if len(master_phase) != len(rf_phase):
            raise InvalidParameter("master and RF phase trajectories must have equal length")
        self.spec = spec
        self.master_phase = master_phase
        self.rf_phase = rf_phase
        self.fs_hz = master_phase.fs_hz
        self.n = len(master_phase)

    def __len__(self) -> int:
        return self.spec.n_lines

    @overload
    def __getitem__(self, k: int) -> SampledField: ...

    @overload
    def __getitem__(self, k: slice) -> List[SampledField]: ...

    def __getitem__(self, k):
        if isinstance(k, slice):
            return [self[i] for i in range(*k.indices(len(self)))]
        if k < 0:
            k += len(self)
        if not 0 <= k < len(self):
            raise IndexError(f"comb line {k} out of range")
        iq = math.sqrt(self.spec.line_powers_mw[k]) * self.unit_phasor(k)
        return SampledField(
            iq=iq,
            fs_hz=self.fs_hz,
            center_offset_hz=line_frequency(self.spec, k),
            meta={"line_index": k, "power_mw": self.spec.line_powers_mw[k]},
        )

    def __iter__(self) -> Iterator[SampledField]:
        for k in range(len(self)):
            yield self[k]

    def line_phase(self, k: int) -> np.ndarray:
        return self.master_phase.samples + (k - self.spec.center_line_index) * self.rf_phase.samples

    def unit_phasor(self, k: int) -> np.ndarray:
        return np.exp(1j * self.line_phase(k))


def generate_comb(spec: CombSpec, n: int, fs_hz: float, seed: int) -> CombRealization:
    """Draw one comb realization; every line shares the same master trajectory."""
    master = phase_trajectory(spec.master, n, fs_hz, derive_seed(seed, "comb", "master"))
    rf = phase_trajectory(spec.rf_drive, n, fs_hz, derive_seed(seed, "comb", "rf"))
    logger.debug(f"generate_comb: {spec.n_lines} lines, fsr={spec.fsr_hz:.6g} Hz, n={n}, fs={fs_hz:.6g}, seed={seed}")
    return CombRealization(spec, master, rf)


def superpose(lines: CombRealization) -> SampledField:
    """Sum every line at its own offset into one wideband field.

    Only valid when fs covers the whole comb; otherwise lines would alias.
    """
    fs = lines.fs_hz
    t = np.arange(lines.n) / fs
    total = np.zeros(lines.n, dtype=complex)
    for line in lines:
        if abs(line.center_offset_hz) >= fs / 2:
            raise InvalidParameter(
                f"line {line.meta['line_index']} at {line.center_offset_hz:.6g} Hz is outside +/-fs/2 ({fs / 2:.6g} Hz)"
            )
        total += line.iq * np.exp(2j * math.pi * line.center_offset_hz * t)
    return SampledField(iq=total, fs_hz=fs, center_offset_hz=0.0, meta={"n_lines": len(lines)})


def select_line(spec: CombSpec, dfb_freq_hz: float) -> Tuple[int, float]:
    """Nearest line to the DFB; equidistant ties go to the lower index."""
    offsets = (np.arange(spec.n_lines) - spec.center_line_index) * spec.fsr_hz
    distances = np.abs(dfb_freq_hz - offsets)
    k = int(np.argmin(distances))
    return k, float(dfb_freq_hz - offsets[k])


def demux_line(lines: CombRealization, cfg: DemuxConfig, n: Optional[int] = None, fs_hz: Optional[float] = None) -> DemuxedCarrier:
    """Injection-lock a DFB to the spectrally closest comb line.

    Locking is ideal phase copying: the locked line keeps the selected line's
    phase, re-scaled to ``output_power_mw``. Every other line is added at its
    relative power minus ``suppression_db``, shifted so the locked line sits at
    0 Hz. Residual lines at or beyond +/-fs/2 cannot be represented and are
    dropped (listed in ``meta['dropped_lines']``).
    """
    if len(lines) == 0:
        raise InvalidParameter("demux_line requires a nonempty comb")
    if n is not None and n != lines.n:
        raise InvalidParameter(f"demux_line: requested n={n} but comb realization has {lines.n} samples")
    if fs_hz is not None and fs_hz != lines.fs_hz:
        raise InvalidParameter(f"demux_line: requested fs={fs_hz} but comb realization has fs={lines.fs_hz}")

    spec = lines.spec
    k_lock, detuning = select_line(spec, cfg.dfb_freq_hz)
    if abs(detuning) > cfg.locking_half_range_hz:
        raise NoLineInLockingRange(cfg.dfb_freq_hz, abs(detuning), cfg.locking_half_range_hz)

    fs = lines.fs_hz
    t = np.arange(lines.n) / fs
    p_lock = spec.line_powers_mw[k_lock]
    residual_scale = 10 ** (-cfg.suppression_db / 10.0)

    iq = math.sqrt(cfg.output_power_mw) * lines.unit_phasor(k_lock)
    dropped: List[int] = []
    for j in range(spec.n_lines):
        if j == k_lock:
            continue
        rel_hz = (j - k_lock) * spec.fsr_hz
        if abs(rel_hz) >= fs / 2:
            dropped.append(j)
            continue
        power = cfg.output_power_mw * (spec.line_powers_mw[j] / p_lock) * residual_scale
        iq = iq + math.sqrt(power) * lines.unit_phasor(j) * np.exp(2j * math.pi * rel_hz * t)

    logger.debug(
        f"demux_line: DFB {cfg.dfb_freq_hz:.6g} Hz locked line {k_lock} (detuning {detuning:.6g} Hz), "
        f"{spec.n_lines - 1 - len(dropped)} residual lines in band"
    )
    out = SampledField(
        iq=iq,
        fs_hz=fs,
        center_offset_hz=line_frequency(spec, k_lock),
        meta={"line_index": k_lock, "power_mw": cfg.output_power_mw, "dropped_lines": dropped},
    )
    return DemuxedCarrier(
        field=out,
        locked_line_index=k_lock,
        detuning_hz=detuning,
        achieved_suppression_db=cfg.suppression_db,
    )
