"""Seeded random modulation patterns and their on-disk format.

Pattern ``k`` of a set with seed ``s`` is drawn from its own Philox
stream ``(s, PATTERNS, k)``, so any subset can be regenerated
independently.  Binary patterns are fair coin flips; gray patterns are
uniform on [0, 1).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import rng
from .errors import FormatError, InvalidArgument

log = logging.getLogger(__name__)

PATTERN_MAGIC = "SPCDI-PAT"
PATTERN_VERSION = "v1"
KINDS = ("binary", "gray")


@dataclass(frozen=True, eq=False)
class PatternSet:
    """``m`` real patterns of shape ``(side, side)``.

    ``data`` is uint8 for binary sets and float64 for gray sets; it is
    read-only after construction.
    """

    kind: str
    data: np.ndarray
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"pattern kind must be one of {KINDS}, got {self.kind!r}")
        arr = np.asarray(self.data)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise InvalidArgument(f"patterns must have shape (m, side, side), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 2:
            raise InvalidArgument(f"need m >= 1 and side >= 2, got {arr.shape}")
        if self.kind == "binary":
            if not np.all((arr == 0) | (arr == 1)):
                raise InvalidArgument("binary patterns must contain only 0 and 1")
            arr = np.array(arr, dtype=np.uint8, copy=True)
        else:
            arr = np.array(arr, dtype=np.float64, copy=True)
            if not np.all((arr >= 0) & (arr <= 1)):
                raise InvalidArgument("gray patterns must lie in [0, 1]")
        flat = arr.reshape(arr.shape[0], -1)
        if np.any(flat.max(axis=1) == 0):
            raise InvalidArgument("pattern set contains an all-zero pattern")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def m(self) -> int:
        return self.data.shape[0]

    @property
    def side(self) -> int:
        return self.data.shape[1]

    @property
    def n(self) -> int:
        return self.side * self.side

    @property
    def sampling_ratio(self) -> Fraction:
        return Fraction(self.m, self.n)

    def flat(self) -> np.ndarray:
        """``(m, n)`` view of the patterns."""
        return self.data.reshape(self.m, self.n)

    def __len__(self) -> int:
        return self.m

    def __getitem__(self, k) -> np.ndarray:
        return self.data[k]

    def __eq__(self, other):
        if not isinstance(other, PatternSet):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.seed == other.seed
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def count_for_ratio(side: int, ratio) -> int:
    """Pattern count ``m = ratio * side**2``; must come out a positive integer."""
    m = Fraction(ratio).limit_denominator(1 << 20) * side * side
    if m.denominator != 1 or m < 1:
        raise InvalidArgument(f"sampling ratio {ratio} gives non-integer or empty m = {m} for side {side}")
    return int(m)


def _check_dims(side: int, m: int) -> None:
    if side < 2:
        raise InvalidArgument(f"side must be >= 2, got {side}")
    if m < 1:
        raise InvalidArgument(f"pattern count must be >= 1, got {m}")


def _draw(kind: str, side: int, seed: int, k: int) -> np.ndarray:
    bitgen = rng.stream(seed, rng.PATTERNS, k)
    n = side * side
    redraws = 0
    while True:
        if kind == "binary":
            p = rng.bits(bitgen, n)
        else:
            p = rng.uniform(bitgen, n)
        if p.any():
            break
        redraws += 1
    if redraws:
        log.warning("pattern %d (seed %d) was all zero; redrawn %d time(s)", k, seed, redraws)
    return p.reshape(side, side)


def _generate(kind: str, side: int, m: int, seed: int) -> PatternSet:
    _check_dims(side, m)
    dtype = np.uint8 if kind == "binary" else np.float64
    data = np.empty((m, side, side), dtype=dtype)
    for k in range(m):
        data[k] = _draw(kind, side, seed, k)
    return PatternSet(kind, data, int(seed))


def gen_binary_patterns(side: int, m: int, seed: int) -> PatternSet:
    return _generate("binary", side, m, seed)


def gen_gray_patterns(side: int, m: int, seed: int) -> PatternSet:
    return _generate("gray", side, m, seed)


def gen_patterns(kind: str, side: int, m: int, seed: int) -> PatternSet:
    if kind not in KINDS:
        raise InvalidArgument(f"pattern kind must be one of {KINDS}, got {kind!r}")
    return _generate(kind, side, m, seed)


def save_patterns(patterns: PatternSet, path) -> None:
    header = f"{PATTERN_MAGIC} {PATTERN_VERSION} {patterns.kind} {patterns.side} {patterns.m} {patterns.seed}\n"
    if patterns.kind == "binary":
        # each row padded to a whole number of bytes
        payload = np.packbits(patterns.data, axis=-1, bitorder="big").tobytes()
    else:
        payload = patterns.data.astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(payload)


def load_patterns(path) -> PatternSet:
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line", 0)
    parts = blob[:nl].decode("ascii", errors="replace").split()
    if len(parts) != 6 or parts[0] != PATTERN_MAGIC or parts[1] != PATTERN_VERSION:
        raise FormatError(f"bad pattern header {blob[:nl]!r}", 0)
    kind = parts[2]
    if kind not in KINDS:
        raise FormatError(f"unknown pattern kind {kind!r}", 0)
    try:
        side, m, seed = int(parts[3]), int(parts[4]), int(parts[5])
    except ValueError:
        raise FormatError("non-integer side/m/seed in header", 0) from None
    if side < 2 or m < 1:
        raise FormatError(f"invalid dimensions side={side} m={m}", 0)

    start = nl + 1
    row_bytes = -(-side // 8) if kind == "binary" else side * 8
    need = m * side * row_bytes
    have = len(blob) - start
    if have != need:
        raise FormatError(f"payload is {have} bytes, expected {need}", start + min(have, need))
    body = np.frombuffer(blob, dtype=np.uint8, offset=start)
    if kind == "binary":
        packed = body.reshape(m, side, row_bytes)
        data = np.unpackbits(packed, axis=-1, count=side, bitorder="big")
    else:
        data = body.view("<f8").reshape(m, side, side).astype(np.float64)
    try:
        return PatternSet(kind, data, seed)
    except InvalidArgument as exc:
        raise FormatError(str(exc), start) from None
