"""CSV and JSON result writers.

CSV floats use ``repr`` so repeated runs are byte-identical; wall-clock
figures only go to the JSON manifest.
"""

import csv
import json
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
import scipy

from . import __version__
from .metrology import OpticalSpectrum, PsdEstimate

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = ("channel", "ber", "bits", "errors", "fec_class", "pll_phase_var")

PathLike = Union[str, Path]


def _num(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]], unit: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        if unit:
            f.write(f"# unit: {unit}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_num(x) for x in row])
    logger.debug(f"Wrote {path}")
    return path


def write_psd_csv(path: PathLike, psd: PsdEstimate, unit: str = "Hz^2/Hz") -> Path:
    return write_rows(path, ("freq_hz", "value"), zip(psd.freqs_hz, psd.psd), unit=unit)


def write_spectrum_csv(path: PathLike, spectrum: OpticalSpectrum) -> Path:
    return write_rows(path, ("freq_hz", "value"), zip(spectrum.freqs_hz, spectrum.power_dbm), unit="dBm")


def sweep_rows(outcomes: Sequence[Any]) -> List[List[Any]]:
    """One row per channel outcome; failed channels keep their row with an ERROR class."""
    rows: List[List[Any]] = []
    for o in outcomes:
        rec = o.record
        if rec is None:
            rows.append([o.channel, "", "", "", "ERROR", ""])
        else:
            rows.append([rec.channel_index, rec.ber, rec.bits_compared, rec.bit_errors, rec.fec_class.name, rec.mean_pll_phase_variance])
    return rows


def write_sweep_csv(path: PathLike, outcomes: Sequence[Any]) -> Path:
    return write_rows(path, SWEEP_COLUMNS, sweep_rows(outcomes))


def write_symbols_csv(path: PathLike, symbols: np.ndarray) -> Path:
    symbols = np.asarray(symbols, dtype=complex)
    return write_rows(path, ("i", "q"), zip(symbols.real, symbols.imag))


def environment_versions() -> Dict[str, str]:
    return {
        "superchannel": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "platform": platform.platform(),
    }


def write_manifest(path: PathLike, command: str, config_text: str, outcomes: Sequence[Any] = (), extra: Optional[Dict[str, Any]] = None) -> Path:
    """JSON run manifest: config echo, versions, per-channel status and wall-clock."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest: Dict[str, Any] = {
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "versions": environment_versions(),
        "config": config_text,
        "channels": [
            {
                "channel": o.channel,
                "status": o.status,
                "error": o.error,
                "elapsed_sec": round(o.elapsed_sec, 4),
            }
            for o in outcomes
        ],
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    logger.debug(f"Wrote manifest {path}")
    return path
