"""CCS1 waveform dump for external inspection tools.

Layout (little endian): 16-byte header ``b"CCS1"``, u32 sample rate in kHz,
u32 sample count, u32 reserved (0); then interleaved float32 I, Q.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np

from .errors import InvalidParameter
from .oscillators import SampledField

logger = logging.getLogger(__name__)

MAGIC = b"CCS1"
_HEADER = np.dtype([("magic", "S4"), ("fs_khz", "<u4"), ("count", "<u4"), ("reserved", "<u4")])


def write_waveform(path: Union[str, Path], waveform: SampledField) -> Path:
    fs_khz = int(round(waveform.fs_hz / 1e3))
    if not 0 < fs_khz < 2**32:
        raise InvalidParameter(f"sample rate {waveform.fs_hz} Hz does not fit the u32 kHz header field")
    if len(waveform) >= 2**32:
        raise InvalidParameter("waveform too long for the u32 sample count")
    header = np.array([(MAGIC, fs_khz, len(waveform), 0)], dtype=_HEADER)
    body = np.empty(2 * len(waveform), dtype="<f4")
    body[0::2] = waveform.iq.real
    body[1::2] = waveform.iq.imag
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header.tobytes())
        f.write(body.tobytes())
    logger.debug(f"Wrote {len(waveform)} samples to {path}")
    return path


def read_waveform(path: Union[str, Path]) -> SampledField:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.itemsize:
        raise InvalidParameter(f"{path}: truncated CCS1 header")
    header = np.frombuffer(raw[: _HEADER.itemsize], dtype=_HEADER)[0]
    if bytes(header["magic"]) != MAGIC:
        raise InvalidParameter(f"{path}: bad magic {bytes(header['magic'])!r}")
    count = int(header["count"])
    body = np.frombuffer(raw[_HEADER.itemsize:], dtype="<f4")
    if body.size != 2 * count:
        raise InvalidParameter(f"{path}: expected {2 * count} floats, found {body.size}")
    iq = body[0::2].astype(np.float64) + 1j * body[1::2].astype(np.float64)
    return SampledField(iq=iq, fs_hz=float(header["fs_khz"]) * 1e3)
