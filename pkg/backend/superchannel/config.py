"""Experiment configuration: dotted ``key = value`` text files.

Every key lives in ``SCHEMA``; ``render_reference()`` writes the documented
defaults and ``emit_config`` writes any config back in the same format.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

from . import __version__
from .comb import CombSpec
from .errors import ConfigError, InvalidParameter
from .oscillators import FIBER_LASER_DEFAULT, FREE_RUNNING_DFB_DEFAULT, OscillatorSpec
from .rxdsp import DecisionMode, FecPolicy, PllConfig
from .transceiver import FiberConfig, ModemConfig, NoiseConfig

logger = logging.getLogger(__name__)

MIN_BER_SYMBOLS = 10_000


@dataclass(frozen=True)
class DemuxDefaults:
    locking_half_range_hz: float = 2.5e9
    suppression_db: float = 40.0
    output_power_mw: float = 10.0
    detuning_hz: float = 0.0


@dataclass(frozen=True)
class LoConfig:
    offset_hz: float = 50e6


@dataclass(frozen=True)
class MetrologyConfig:
    fs_hz: float = 1e9
    n_samples: int = 2**20
    nperseg: int = 0
    floor_band_lo_hz: float = 10e6
    floor_band_hi_hz: float = 100e6
    lines: Tuple[int, ...] = (0, 8, 16)
    rbw_hz: float = 100e6
    dsh_delay_s: float = 10e-6
    dsh_shift_hz: float = 80e6
    dsh_rx_noise_psd: float = 0.0

    def __post_init__(self) -> None:
        if not self.fs_hz > 0:
            raise InvalidParameter(f"metrology violates fs_hz > 0 (got {self.fs_hz})")
        if self.n_samples < 2:
            raise InvalidParameter(f"metrology violates n_samples >= 2 (got {self.n_samples})")
        if self.nperseg < 0:
            raise InvalidParameter(f"metrology violates nperseg >= 0 (got {self.nperseg})")
        if not 0 < self.floor_band_lo_hz < self.floor_band_hi_hz <= self.fs_hz / 2:
            raise InvalidParameter("metrology violates 0 < floor_band_lo_hz < floor_band_hi_hz <= fs_hz/2")


@dataclass(frozen=True)
class CalibrationConfig:
    snr_db_list: Tuple[float, ...] = (20.0, 21.0, 22.0, 23.0, 24.0)
    n_symbols: int = 1_000_000

    def __post_init__(self) -> None:
        if not self.snr_db_list:
            raise InvalidParameter("calibration violates nonempty snr_db_list")
        if self.n_symbols < 1:
            raise InvalidParameter(f"calibration violates n_symbols >= 1 (got {self.n_symbols})")


@dataclass(frozen=True)
class ExperimentConfig:
    comb: CombSpec = field(default_factory=CombSpec)
    dfb: OscillatorSpec = FREE_RUNNING_DFB_DEFAULT
    fiber_laser: OscillatorSpec = FIBER_LASER_DEFAULT
    demux: DemuxDefaults = field(default_factory=DemuxDefaults)
    lo: LoConfig = field(default_factory=LoConfig)
    modem: ModemConfig = field(default_factory=ModemConfig)
    fiber: FiberConfig = field(default_factory=FiberConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    pll: PllConfig = field(default_factory=PllConfig)
    fec: FecPolicy = field(default_factory=FecPolicy)
    metrology: MetrologyConfig = field(default_factory=MetrologyConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    channels: Tuple[int, ...] = ()
    n_symbols: int = 100_000
    master_seed: int = 0

    def __post_init__(self) -> None:
        for k in self.channels:
            if not 0 <= k < self.comb.n_lines:
                raise InvalidParameter(f"config violates channels within [0, n_lines) (got {k}, n_lines={self.comb.n_lines})")
        for k in self.metrology.lines:
            if not 0 <= k < self.comb.n_lines:
                raise InvalidParameter(f"config violates metrology.lines within [0, n_lines) (got {k})")
        if self.n_symbols < MIN_BER_SYMBOLS:
            raise InvalidParameter(f"config violates n_symbols >= {MIN_BER_SYMBOLS} (got {self.n_symbols})")
        if self.n_symbols <= self.modem.preamble_symbols:
            raise InvalidParameter("config violates n_symbols > modem.preamble_symbols")
        if self.master_seed < 0:
            raise InvalidParameter(f"config violates master_seed >= 0 (got {self.master_seed})")

    @property
    def channel_list(self) -> List[int]:
        """Requested channels; empty means every comb line."""
        return list(self.channels) if self.channels else list(range(self.comb.n_lines))


# ----------------------------
# Schema
# ----------------------------

def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text: str) -> Tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _fmt(value: Any) -> str:
    if isinstance(value, DecisionMode):
        return value.value
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class Key:
    name: str
    parse: Callable[[str], Any]
    doc: str


SCHEMA: Tuple[Key, ...] = (
    Key("comb.fsr_hz", float, "Comb line spacing (= gain-switching frequency), Hz; > 0"),
    Key("comb.n_lines", int, "Number of comb lines; >= 1"),
    Key("comb.center_line_index", int, "Line at the simulation center; -1 selects (n_lines - 1) // 2"),
    Key("comb.line_power_mw", float, "Flat per-line power, mW; used when comb.line_powers_mw is empty"),
    Key("comb.line_powers_mw", _floats, "Per-line powers, mW, comma separated; empty means flat"),
    Key("master.h0", float, "Master laser white FM-noise level, Hz^2/Hz (FWHM = pi * h0)"),
    Key("master.h_flicker", float, "Master laser flicker FM coefficient, PSD = h_flicker / f"),
    Key("master.power_mw", float, "Master laser power, mW"),
    Key("rf.h0", float, "RF drive white FM-noise level; line k sees (k - center)^2 * h0"),
    Key("rf.h_flicker", float, "RF drive flicker FM coefficient"),
    Key("dfb.h0", float, "Free-running DFB white FM-noise level, Hz^2/Hz"),
    Key("dfb.h_flicker", float, "Free-running DFB flicker FM coefficient"),
    Key("dfb.power_mw", float, "Free-running DFB power, mW"),
    Key("fiber_laser.h0", float, "Reference fiber laser white FM-noise level, Hz^2/Hz"),
    Key("fiber_laser.h_flicker", float, "Reference fiber laser flicker FM coefficient"),
    Key("fiber_laser.power_mw", float, "Reference fiber laser power, mW"),
    Key("demux.locking_half_range_hz", float, "Injection-locking half range, Hz"),
    Key("demux.suppression_db", float, "Residual comb line suppression, dB"),
    Key("demux.output_power_mw", float, "Locked DFB output power, mW"),
    Key("demux.detuning_hz", float, "DFB detuning from the selected line, Hz"),
    Key("lo.offset_hz", float, "Local oscillator frequency offset from the carrier, Hz"),
    Key("modem.m", int, "QAM order: 4, 16, 64 or 256"),
    Key("modem.baud_hz", float, "Symbol rate, Bd"),
    Key("modem.sps", int, "Samples per symbol; >= 2"),
    Key("modem.rolloff", float, "RRC roll-off in (0, 1]"),
    Key("modem.rrc_span_symbols", int, "RRC span, symbols; even"),
    Key("modem.preamble_symbols", int, "Known preamble length, symbols"),
    Key("fiber.length_km", float, "SSMF length, km"),
    Key("fiber.dispersion_ps_nm_km", float, "Dispersion D, ps/(nm km)"),
    Key("fiber.attenuation_db_km", float, "Attenuation, dB/km"),
    Key("fiber.wavelength_nm", float, "Carrier wavelength, nm"),
    Key("noise.target_snr_db", float, "Post-matched-filter symbol SNR, dB; inf disables noise"),
    Key("pll.mu1", float, "DD-PLL proportional gain"),
    Key("pll.mu2", float, "DD-PLL integral gain"),
    Key("pll.decision_mode", DecisionMode, "DD-PLL reference: decided or known"),
    Key("fec.ber_7pct", float, "7% overhead hard-decision FEC threshold"),
    Key("fec.ber_20pct", float, "20% overhead FEC threshold"),
    Key("metrology.fs_hz", float, "FM-noise report sample rate, Hz"),
    Key("metrology.n_samples", int, "FM-noise report record length"),
    Key("metrology.nperseg", int, "Welch segment length; 0 selects automatically"),
    Key("metrology.floor_band_lo_hz", float, "Lower edge of the FM-noise floor band, Hz"),
    Key("metrology.floor_band_hi_hz", float, "Upper edge of the FM-noise floor band, Hz"),
    Key("metrology.lines", _ints, "Comb lines included in the FM-noise report"),
    Key("metrology.rbw_hz", float, "Optical spectrum resolution bandwidth, Hz"),
    Key("metrology.dsh_delay_s", float, "Self-heterodyne delay, s"),
    Key("metrology.dsh_shift_hz", float, "Self-heterodyne frequency shift, Hz"),
    Key("metrology.dsh_rx_noise_psd", float, "Self-heterodyne detection noise level"),
    Key("calibration.snr_db_list", _floats, "AWGN calibration SNR points, dB"),
    Key("calibration.n_symbols", int, "Symbols per AWGN calibration point"),
    Key("channels", _ints, "Comb lines to sweep; empty means all"),
    Key("n_symbols", int, f"Symbols per channel (preamble included); >= {MIN_BER_SYMBOLS}"),
    Key("master_seed", int, "Root of every derived random seed; >= 0"),
)

_KEYS: Dict[str, Key] = {k.name: k for k in SCHEMA}


def flatten(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Schema key -> value for a config."""
    comb = cfg.comb
    powers = comb.line_powers_mw
    flat_power = len(set(powers)) == 1
    return {
        "comb.fsr_hz": comb.fsr_hz,
        "comb.n_lines": comb.n_lines,
        "comb.center_line_index": comb.center_line_index,
        "comb.line_power_mw": powers[0] if flat_power else 1.0,
        "comb.line_powers_mw": () if flat_power else powers,
        "master.h0": comb.master.h0,
        "master.h_flicker": comb.master.h_flicker,
        "master.power_mw": comb.master.power_mw,
        "rf.h0": comb.rf_drive.h0,
        "rf.h_flicker": comb.rf_drive.h_flicker,
        "dfb.h0": cfg.dfb.h0,
        "dfb.h_flicker": cfg.dfb.h_flicker,
        "dfb.power_mw": cfg.dfb.power_mw,
        "fiber_laser.h0": cfg.fiber_laser.h0,
        "fiber_laser.h_flicker": cfg.fiber_laser.h_flicker,
        "fiber_laser.power_mw": cfg.fiber_laser.power_mw,
        "demux.locking_half_range_hz": cfg.demux.locking_half_range_hz,
        "demux.suppression_db": cfg.demux.suppression_db,
        "demux.output_power_mw": cfg.demux.output_power_mw,
        "demux.detuning_hz": cfg.demux.detuning_hz,
        "lo.offset_hz": cfg.lo.offset_hz,
        "modem.m": cfg.modem.m,
        "modem.baud_hz": cfg.modem.baud_hz,
        "modem.sps": cfg.modem.sps,
        "modem.rolloff": cfg.modem.rolloff,
        "modem.rrc_span_symbols": cfg.modem.rrc_span_symbols,
        "modem.preamble_symbols": cfg.modem.preamble_symbols,
        "fiber.length_km": cfg.fiber.length_km,
        "fiber.dispersion_ps_nm_km": cfg.fiber.dispersion_ps_nm_km,
        "fiber.attenuation_db_km": cfg.fiber.attenuation_db_km,
        "fiber.wavelength_nm": cfg.fiber.wavelength_nm,
        "noise.target_snr_db": cfg.noise.target_snr_db,
        "pll.mu1": cfg.pll.mu1,
        "pll.mu2": cfg.pll.mu2,
        "pll.decision_mode": cfg.pll.decision_mode,
        "fec.ber_7pct": cfg.fec.ber_7pct,
        "fec.ber_20pct": cfg.fec.ber_20pct,
        "metrology.fs_hz": cfg.metrology.fs_hz,
        "metrology.n_samples": cfg.metrology.n_samples,
        "metrology.nperseg": cfg.metrology.nperseg,
        "metrology.floor_band_lo_hz": cfg.metrology.floor_band_lo_hz,
        "metrology.floor_band_hi_hz": cfg.metrology.floor_band_hi_hz,
        "metrology.lines": cfg.metrology.lines,
        "metrology.rbw_hz": cfg.metrology.rbw_hz,
        "metrology.dsh_delay_s": cfg.metrology.dsh_delay_s,
        "metrology.dsh_shift_hz": cfg.metrology.dsh_shift_hz,
        "metrology.dsh_rx_noise_psd": cfg.metrology.dsh_rx_noise_psd,
        "calibration.snr_db_list": cfg.calibration.snr_db_list,
        "calibration.n_symbols": cfg.calibration.n_symbols,
        "channels": cfg.channels,
        "n_symbols": cfg.n_symbols,
        "master_seed": cfg.master_seed,
    }


def build_config(values: Dict[str, Any]) -> ExperimentConfig:
    """Assemble a config from schema keys; missing keys take defaults."""
    unknown = sorted(set(values) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r}", key=unknown[0])
    v = flatten(ExperimentConfig())
    v["comb.center_line_index"] = -1
    v["metrology.lines"] = None
    v.update(values)

    n_lines = v["comb.n_lines"]
    powers = v["comb.line_powers_mw"] or (float(v["comb.line_power_mw"]),) * max(n_lines, 0)
    center = v["comb.center_line_index"]
    if center < 0:
        center = (n_lines - 1) // 2
    report_lines = v["metrology.lines"]
    if not report_lines:
        report_lines = tuple(sorted({0, center, n_lines - 1}))

    return ExperimentConfig(
        comb=CombSpec(
            fsr_hz=v["comb.fsr_hz"],
            n_lines=n_lines,
            center_line_index=center,
            line_powers_mw=tuple(float(p) for p in powers),
            master=OscillatorSpec(h0=v["master.h0"], h_flicker=v["master.h_flicker"], power_mw=v["master.power_mw"]),
            rf_drive=OscillatorSpec(h0=v["rf.h0"], h_flicker=v["rf.h_flicker"]),
        ),
        dfb=OscillatorSpec(h0=v["dfb.h0"], h_flicker=v["dfb.h_flicker"], power_mw=v["dfb.power_mw"]),
        fiber_laser=OscillatorSpec(
            h0=v["fiber_laser.h0"], h_flicker=v["fiber_laser.h_flicker"], power_mw=v["fiber_laser.power_mw"]
        ),
        demux=DemuxDefaults(
            locking_half_range_hz=v["demux.locking_half_range_hz"],
            suppression_db=v["demux.suppression_db"],
            output_power_mw=v["demux.output_power_mw"],
            detuning_hz=v["demux.detuning_hz"],
        ),
        lo=LoConfig(offset_hz=v["lo.offset_hz"]),
        modem=ModemConfig(
            m=v["modem.m"],
            baud_hz=v["modem.baud_hz"],
            sps=v["modem.sps"],
            rolloff=v["modem.rolloff"],
            rrc_span_symbols=v["modem.rrc_span_symbols"],
            preamble_symbols=v["modem.preamble_symbols"],
        ),
        fiber=FiberConfig(
            length_km=v["fiber.length_km"],
            dispersion_ps_nm_km=v["fiber.dispersion_ps_nm_km"],
            attenuation_db_km=v["fiber.attenuation_db_km"],
            wavelength_nm=v["fiber.wavelength_nm"],
        ),
        noise=NoiseConfig(target_snr_db=v["noise.target_snr_db"]),
        pll=PllConfig(mu1=v["pll.mu1"], mu2=v["pll.mu2"], decision_mode=v["pll.decision_mode"]),
        fec=FecPolicy(ber_7pct=v["fec.ber_7pct"], ber_20pct=v["fec.ber_20pct"]),
        metrology=MetrologyConfig(
            fs_hz=v["metrology.fs_hz"],
            n_samples=v["metrology.n_samples"],
            nperseg=v["metrology.nperseg"],
            floor_band_lo_hz=v["metrology.floor_band_lo_hz"],
            floor_band_hi_hz=v["metrology.floor_band_hi_hz"],
            lines=tuple(report_lines),
            rbw_hz=v["metrology.rbw_hz"],
            dsh_delay_s=v["metrology.dsh_delay_s"],
            dsh_shift_hz=v["metrology.dsh_shift_hz"],
            dsh_rx_noise_psd=v["metrology.dsh_rx_noise_psd"],
        ),
        calibration=CalibrationConfig(
            snr_db_list=tuple(v["calibration.snr_db_list"]) or CalibrationConfig().snr_db_list,
            n_symbols=v["calibration.n_symbols"],
        ),
        channels=tuple(v["channels"]),
        n_symbols=v["n_symbols"],
        master_seed=v["master_seed"],
    )


def parse_text(text: str) -> ExperimentConfig:
    values: Dict[str, Any] = {}
    lines_of: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}", line=lineno, key=key)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines_of[key]})", line=lineno, key=key)
        try:
            values[key] = _KEYS[key].parse(value)
        except ValueError as e:
            raise ConfigError(f"bad value for {key}: {value!r} ({e})", line=lineno, key=key) from e
        lines_of[key] = lineno

    try:
        return build_config(values)
    except InvalidParameter as e:
        raise ConfigError(str(e)) from e


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    cfg = parse_text(text)
    logger.info(f"Loaded config from {path}")
    return cfg


def emit_config(cfg: ExperimentConfig, with_docs: bool = False) -> str:
    """Serialize every schema key; the output re-parses to an equal config."""
    values = flatten(cfg)
    out: List[str] = []
    section: Optional[str] = None
    for key in SCHEMA:
        head = key.name.split(".", 1)[0] if "." in key.name else ""
        if head != section:
            if out:
                out.append("")
            section = head
        if with_docs:
            out.append(f"# {key.doc}")
        out.append(f"{key.name} = {_fmt(values[key.name])}")
    return "\n".join(out) + "\n"


def render_reference() -> str:
    header = (
        f"# superchannel {__version__} configuration reference.\n"
        "# Every key with its default value; lists are comma separated.\n\n"
    )
    return header + emit_config(ExperimentConfig(), with_docs=True)


def with_overrides(
    cfg: ExperimentConfig,
    master_seed: Optional[int] = None,
    channels: Optional[Tuple[int, ...]] = None,
) -> ExperimentConfig:
    """Apply CLI overrides and re-validate."""
    values = flatten(cfg)
    if master_seed is not None:
        values["master_seed"] = master_seed
    if channels is not None:
        values["channels"] = tuple(channels)
    try:
        return build_config(values)
    except InvalidParameter as e:
        raise ConfigError(str(e)) from e

