import os
from typing import Optional

from superchannel.errors import InvalidParameter
from superchannel.sources import CarrierSource

SOURCE_NAMES = ("comb", "dfb")


def select_source_name(name: Optional[str] = None) -> str:
    """Select the carrier source name.

    Priority:
    1) Explicit argument (CLI flag)
    2) Env `CARRIER_SOURCE`
    3) Default 'comb'
    """
    if name:
        return name.lower()

    env_source = os.getenv("CARRIER_SOURCE")
    if env_source:
        return env_source.lower()

    return "comb"


def get_source(name: Optional[str] = None) -> CarrierSource:
    """Return a carrier source instance for the selected name."""
    selected = select_source_name(name)
    if selected == "dfb":
        from .dfb_source import FreeRunningDfbSource

        return FreeRunningDfbSource()
    if selected == "comb":
        from .comb_source import CombReferencedSource

        return CombReferencedSource()
    raise InvalidParameter(f"unknown carrier source {selected!r}; expected one of {SOURCE_NAMES}")
