from dataclasses import replace

from superchannel.config import ExperimentConfig
from superchannel.oscillators import SampledField, cw_field, phase_trajectory
from superchannel.seeding import derive_seed


class FreeRunningDfbSource:
    """Carrier and LO from two independent free-running DFB lasers."""

    name = "dfb"

    def carrier(self, cfg: ExperimentConfig, channel: int, n: int, fs_hz: float, seed: int) -> SampledField:
        spec = replace(cfg.dfb, freq_offset_hz=0.0)
        phase = phase_trajectory(spec, n, fs_hz, derive_seed(seed, channel, "dfb"))
        return cw_field(spec, phase)

    def local_oscillator(self, cfg: ExperimentConfig, channel: int, n: int, fs_hz: float, seed: int) -> SampledField:
        spec = replace(cfg.dfb, freq_offset_hz=cfg.lo.offset_hz)
        phase = phase_trajectory(spec, n, fs_hz, derive_seed(seed, channel, "dfb-lo"))
        return cw_field(spec, phase)
