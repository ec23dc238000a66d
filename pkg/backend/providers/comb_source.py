import logging

from superchannel.comb import DemuxConfig, demux_line, generate_comb, line_frequency
from superchannel.config import ExperimentConfig
from superchannel.oscillators import SampledField
from superchannel.seeding import derive_seed
from superchannel.transceiver import shift_frequency

logger = logging.getLogger(__name__)


class CombReferencedSource:
    """Carrier and LO injection-locked to lines of the ultra-low-linewidth comb.

    The LO is demultiplexed from its own comb realization (seed stage "lo"),
    so transmitter and receiver share the line but not the noise draw.
    """

    name = "comb"

    def _demux(self, cfg: ExperimentConfig, channel: int, n: int, fs_hz: float, seed: int) -> SampledField:
        comb = generate_comb(cfg.comb, n, fs_hz, seed)
        demux_cfg = DemuxConfig(
            dfb_freq_hz=line_frequency(cfg.comb, channel) + cfg.demux.detuning_hz,
            locking_half_range_hz=cfg.demux.locking_half_range_hz,
            suppression_db=cfg.demux.suppression_db,
            output_power_mw=cfg.demux.output_power_mw,
        )
        carrier = demux_line(comb, demux_cfg)
        if carrier.locked_line_index != channel:
            logger.warning(f"DFB aimed at line {channel} locked to line {carrier.locked_line_index}")
        return carrier.field

    def carrier(self, cfg: ExperimentConfig, channel: int, n: int, fs_hz: float, seed: int) -> SampledField:
        return self._demux(cfg, channel, n, fs_hz, derive_seed(seed, channel, "comb"))

    def local_oscillator(self, cfg: ExperimentConfig, channel: int, n: int, fs_hz: float, seed: int) -> SampledField:
        lo = self._demux(cfg, channel, n, fs_hz, derive_seed(seed, channel, "lo"))
        return shift_frequency(lo, cfg.lo.offset_hz)
