"""Interface the harness needs from a carrier source.

Implementations live outside this package (see ``providers``) and are passed
in by the caller.
"""

from typing import Protocol

from .config import ExperimentConfig
from .oscillators import SampledField


class CarrierSource(Protocol):
    """Optical carrier and local-oscillator supply for one channel."""

    name: str

    # Transmit carrier for comb line `channel`, n samples at fs_hz
    def carrier(self, cfg: ExperimentConfig, channel: int, n: int, fs_hz: float, seed: int) -> SampledField:
        ...

    # Receiver LO; independently drawn, offset by cfg.lo.offset_hz
    def local_oscillator(self, cfg: ExperimentConfig, channel: int, n: int, fs_hz: float, seed: int) -> SampledField:
        ...
