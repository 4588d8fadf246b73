import hashlib
import json
import math
from pathlib import Path
from typing import Any, List, MutableSequence, TypeVar, Union

import numpy as np
from allennlp.common import util as common_util

T = TypeVar("T")

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


class SplitMix64:
    """The named, documented generator behind every permutation this package produces.

    SplitMix64 (Steele, Lea and Flood, 2014): the state advances by the golden-ratio constant
    `0x9E3779B97F4A7C15` modulo 2^64, and each output is the state passed through the
    finalizer `z ^= z >> 30; z *= 0xBF58476D1CE4E5B9; z ^= z >> 27; z *= 0x94D049BB133111EB;
    z ^= z >> 31`. Everything is done on Python integers masked to 64 bits, so sequences are
    bit-identical on every platform.

    # Parameters

    seed : `int`
        Any integer, reduced modulo 2^64.
    """

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _finalize(self.state)

    def below(self, n: int) -> int:
        """Returns an unbiased integer in `[0, n)` by rejection sampling."""
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random(self) -> float:
        """A double in `[0, 1)` built from the top 53 bits of the next output."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: MutableSequence[T]) -> List[int]:
        """Fisher-Yates shuffle of `items` in place. Returns the swap targets, in draw order,
        so the permutation can be recorded and replayed."""
        draws = []
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            draws.append(j)
            items[i], items[j] = items[j], items[i]
        return draws


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix(master_seed: int, index: int) -> int:
    """Derives the 64-bit seed of run (or simulation) `index` from `master_seed`:
    `finalize(master_seed + (index + 1) * GOLDEN_GAMMA mod 2^64)`.
    """
    return _finalize((master_seed + (index + 1) * GOLDEN_GAMMA) & MASK64)


def numpy_generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed & MASK64))


def canonical_json(obj: Any) -> str:
    """Sorted keys, compact separators, no NaN. Used for every digest we compute."""
    return json.dumps(common_util.sanitize(obj), sort_keys=True, separators=(",", ":"))


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def format_real(value: float) -> str:
    """17 significant digits, which round-trips every IEEE double."""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return "%.17g" % value


def format_value(value: Any) -> str:
    """CSV cell for a treatment or response value."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format_real(float(value))
    return str(value)


def json_number(value: float) -> Union[float, str, None]:
    """JSON has no infinities. Non-finite reals are written as the strings `"inf"`/`"-inf"`,
    `nan` as `null`."""
    if value is None or math.isnan(value):
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(value)
