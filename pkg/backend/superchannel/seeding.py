"""Stable child-seed derivation.

child = first 8 bytes (little endian) of BLAKE2b("<master>/<channel>/<stage>").
The hash is fixed so seeds do not change between runs, platforms or
Python versions (unlike the builtin ``hash``).
"""

import hashlib
from typing import Union

import numpy as np


def derive_seed(master_seed: int, channel: Union[int, str], stage: str) -> int:
    token = f"{int(master_seed)}/{channel}/{stage}".encode("utf-8")
    digest = hashlib.blake2b(token, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_for(master_seed: int, channel: Union[int, str], stage: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, channel, stage))
