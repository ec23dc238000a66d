from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the simulator."""


class InvalidParameter(SimulationError, ValueError):
    """A precondition or invariant was violated; the message names it."""


class RateMismatch(InvalidParameter):
    pass


class RecordTooShort(InvalidParameter):
    pass


class BandEmpty(InvalidParameter):
    pass


class NoLineInLockingRange(SimulationError):
    """The DFB is tuned too far from every comb line to injection-lock."""

    def __init__(self, dfb_freq_hz: float, nearest_detuning_hz: float, half_range_hz: float) -> None:
        super().__init__(
            f"no comb line within locking range: DFB at {dfb_freq_hz:.6g} Hz, "
            f"nearest detuning {nearest_detuning_hz:.6g} Hz > half range {half_range_hz:.6g} Hz"
        )
        self.dfb_freq_hz = dfb_freq_hz
        self.nearest_detuning_hz = nearest_detuning_hz
        self.half_range_hz = half_range_hz


class NoSpectralPeak(SimulationError):
    def __init__(self, peak_to_median_db: float, threshold_db: float) -> None:
        super().__init__(
            f"no spectral peak in 4th-power periodogram: peak-to-median {peak_to_median_db:.2f} dB "
            f"< {threshold_db:.2f} dB (offset out of range or SNR too low)"
        )
        self.peak_to_median_db = peak_to_median_db


class AmbiguousRotation(SimulationError):
    def __init__(self, margin_db: float) -> None:
        super().__init__(f"rotation ambiguous: top two preamble correlations differ by {margin_db:.2f} dB < 3 dB")
        self.margin_db = margin_db


class ConfigError(SimulationError):
    """Configuration file problem; carries the offending line and key when known."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None) -> None:
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")
        self.line = line
        self.key = key
