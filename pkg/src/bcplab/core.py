"""Data model shared by every module: sets, instances, thresholds, outcomes.

Sets are subsets of a dense integer universe ``[0, d)``. Elements are kept as
read-only ``int64`` numpy arrays so that the reductions, whose universes reach
tens of millions of positions, stay vectorised.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Iterator, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import UndefinedSimilarityError, ValidationError

ID_DTYPE = np.int64
MAX_UNIVERSE = np.iinfo(ID_DTYPE).max

Number = Union[int, float, Fraction]


def as_fraction(value: Number) -> Fraction:
    """Convert a threshold-like number to an exact rational.

    Floats go through their shortest decimal repr, so ``0.2`` becomes ``1/5``
    rather than the nearest binary fraction.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError(f"non-finite number {value!r}")
    return Fraction(repr(value))


class SparseSet:
    """Immutable subset of the universe ``[0, universe_size)``.

    The constructor validates; use :func:`make_sparse_set` to normalise
    unsorted or duplicated input.
    """

    __slots__ = ("_elements", "_universe", "_hash")

    def __init__(self, elements: Iterable[int], universe_size: int) -> None:
        raw = np.asarray(elements if isinstance(elements, np.ndarray) else list(elements))
        if raw.size and not np.issubdtype(raw.dtype, np.integer):
            raise ValidationError(f"set elements must be integers, got dtype {raw.dtype}")
        arr = np.array(raw, dtype=ID_DTYPE, copy=True).reshape(-1)
        universe_size = _check_universe(universe_size)
        if arr.size:
            if arr[0] < 0:
                raise ValidationError(f"element {int(arr[0])} is negative")
            if arr[-1] >= universe_size or arr.max() >= universe_size:
                bad = int(arr[arr >= universe_size][0])
                raise ValidationError(f"element {bad} ≥ universe {universe_size}")
            if arr.size > 1 and not np.all(arr[1:] > arr[:-1]):
                raise ValidationError("elements must be strictly increasing")
        self._init(arr, universe_size)

    def _init(self, arr: np.ndarray, universe_size: int) -> None:
        arr.setflags(write=False)
        self._elements = arr
        self._universe = universe_size
        self._hash = None

    @classmethod
    def _trusted(cls, arr: np.ndarray, universe_size: int) -> "SparseSet":
        # caller guarantees sorted, unique, in range, int64
        obj = cls.__new__(cls)
        obj._init(np.ascontiguousarray(arr, dtype=ID_DTYPE), int(universe_size))
        return obj

    @property
    def elements(self) -> np.ndarray:
        return self._elements

    @property
    def universe_size(self) -> int:
        return self._universe

    def size(self) -> int:
        return int(self._elements.size)

    def __len__(self) -> int:
        return int(self._elements.size)

    def __iter__(self) -> Iterator[int]:
        return (int(x) for x in self._elements)

    def __contains__(self, x: object) -> bool:
        if not isinstance(x, (int, np.integer)):
            return False
        i = np.searchsorted(self._elements, x)
        return bool(i < self._elements.size and self._elements[i] == x)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseSet):
            return NotImplemented
        return (self._universe == other._universe
                and np.array_equal(self._elements, other._elements))

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._universe, self._elements.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        shown = self.to_list()
        if len(shown) > 8:
            body = ", ".join(map(str, shown[:8])) + ", ..."
        else:
            body = ", ".join(map(str, shown))
        return f"SparseSet({{{body}}}, d={self._universe})"

    def to_list(self) -> list:
        return self._elements.tolist()

    def issubset(self, other: "SparseSet") -> bool:
        _same_universe(self, other)
        return intersection_size(self, other) == len(self)

    def intersection(self, other: "SparseSet") -> "SparseSet":
        _same_universe(self, other)
        common = np.intersect1d(self._elements, other._elements, assume_unique=True)
        return SparseSet._trusted(common, self._universe)

    def with_universe(self, universe_size: int) -> "SparseSet":
        """Same elements viewed inside a larger universe."""
        universe_size = _check_universe(universe_size)
        if self._elements.size and self._elements[-1] >= universe_size:
            raise ValidationError(
                f"element {int(self._elements[-1])} ≥ universe {universe_size}")
        return SparseSet._trusted(self._elements, universe_size)


def _check_universe(d: int) -> int:
    if isinstance(d, bool) or not isinstance(d, (int, np.integer)):
        raise ValidationError(f"universe size must be an integer, got {d!r}")
    d = int(d)
    if d < 1:
        raise ValidationError(f"universe size must be positive, got {d}")
    if d > MAX_UNIVERSE:
        raise ValidationError(f"universe size {d} exceeds the int64 id range")
    return d


def _same_universe(a: SparseSet, b: SparseSet) -> None:
    if a.universe_size != b.universe_size:
        raise ValidationError(
            f"universe mismatch: {a.universe_size} vs {b.universe_size}")


def make_sparse_set(ids: Iterable[int], d: int) -> SparseSet:
    """Build a normalised (sorted, deduplicated) set over ``[0, d)``.

    Raises:
        ValidationError: if any id falls outside the universe.
    """
    d = _check_universe(d)
    arr = np.asarray(list(ids) if not isinstance(ids, np.ndarray) else ids)
    if arr.size == 0:
        return SparseSet._trusted(np.empty(0, dtype=ID_DTYPE), d)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"set elements must be integers, got dtype {arr.dtype}")
    arr = arr.astype(ID_DTYPE, copy=False).reshape(-1)
    if arr.min() < 0:
        raise ValidationError(f"element {int(arr.min())} is negative")
    if arr.max() >= d:
        bad = int(arr[arr >= d][0])
        raise ValidationError(f"element {bad} ≥ universe {d}")
    return SparseSet._trusted(np.unique(arr), d)


def intersection_size(a: SparseSet, b: SparseSet) -> int:
    """Return ``|a ∩ b|``; both sets must share a universe."""
    _same_universe(a, b)
    ea, eb = a.elements, b.elements
    if ea.size == 0 or eb.size == 0:
        return 0
    if ea.size > eb.size:
        ea, eb = eb, ea
    pos = np.searchsorted(eb, ea)
    pos[pos == eb.size] = eb.size - 1
    return int(np.count_nonzero(eb[pos] == ea))


@dataclass(frozen=True)
class Thresholds:
    """A threshold pair.

    For ``units="similarity"`` the near side is ``≥ upper`` and the far side is
    ``< lower`` with ``0 < lower < upper ≤ 1``. For ``units="distance"``
    (Hamming) the orientation flips: near pairs are at distance ``≤ lower`` and
    far pairs at ``≥ upper``, with ``0 ≤ lower < upper``.
    """

    upper: Fraction
    lower: Fraction
    units: str = "similarity"

    def __post_init__(self) -> None:
        object.__setattr__(self, "upper", as_fraction(self.upper))
        object.__setattr__(self, "lower", as_fraction(self.lower))
        if self.units == "similarity":
            if not (0 < self.lower < self.upper <= 1):
                raise ValidationError(
                    f"need 0 < lower < upper <= 1, got lower={float(self.lower)}, "
                    f"upper={float(self.upper)}")
        elif self.units == "distance":
            if not (0 <= self.lower < self.upper):
                raise ValidationError(
                    f"need 0 <= lower < upper for distances, got {self.lower}, {self.upper}")
        else:
            raise ValidationError(f"unknown threshold units {self.units!r}")

    @classmethod
    def hamming(cls, near: int, far: int) -> "Thresholds":
        return cls(upper=far, lower=near, units="distance")

    def to_dict(self) -> dict:
        return {"upper": float(self.upper), "lower": float(self.lower),
                "upper_exact": str(self.upper), "lower_exact": str(self.lower),
                "units": self.units}


@dataclass(frozen=True)
class DecisionOutcome:
    """Answer of a decision solver: a (red, blue) index pair or nothing."""

    found: Optional[Tuple[int, int]] = None
    achieved_similarity: Optional[Fraction] = None

    def __post_init__(self) -> None:
        if (self.found is None) != (self.achieved_similarity is None):
            raise ValidationError("achieved_similarity must be present iff found is")
        if self.found is not None:
            object.__setattr__(self, "found", (int(self.found[0]), int(self.found[1])))
            object.__setattr__(self, "achieved_similarity",
                               as_fraction(self.achieved_similarity))

    @property
    def is_found(self) -> bool:
        return self.found is not None

    def to_dict(self) -> dict:
        if self.found is None:
            return {"found": None, "achieved_similarity": None}
        return {"found": list(self.found),
                "achieved_similarity": float(self.achieved_similarity),
                "achieved_similarity_exact": str(self.achieved_similarity)}


@dataclass(frozen=True)
class BcpInstance:
    """Red collection, blue collection, and the universe they share."""

    red: Tuple[SparseSet, ...]
    blue: Tuple[SparseSet, ...]
    universe_size: int
    _csr_cache: dict = field(default_factory=dict, init=False, repr=False,
                             compare=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "red", tuple(self.red))
        object.__setattr__(self, "blue", tuple(self.blue))
        object.__setattr__(self, "universe_size", _check_universe(self.universe_size))
        if not self.red or not self.blue:
            raise ValidationError("red and blue collections must be nonempty")
        for color, sets in (("red", self.red), ("blue", self.blue)):
            for idx, s in enumerate(sets):
                if not isinstance(s, SparseSet):
                    raise ValidationError(f"{color}[{idx}] is not a SparseSet")
                if s.universe_size != self.universe_size:
                    raise ValidationError(
                        f"{color}[{idx}] has universe {s.universe_size}, "
                        f"instance has {self.universe_size}")

    @classmethod
    def from_lists(cls, red: Sequence[Iterable[int]], blue: Sequence[Iterable[int]],
                   universe_size: int) -> "BcpInstance":
        return cls(tuple(make_sparse_set(s, universe_size) for s in red),
                   tuple(make_sparse_set(s, universe_size) for s in blue),
                   universe_size)

    @property
    def n(self) -> int:
        return max(len(self.red), len(self.blue))

    @property
    def n_red(self) -> int:
        return len(self.red)

    @property
    def n_blue(self) -> int:
        return len(self.blue)

    def red_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.red], dtype=np.int64)

    def blue_sizes(self) -> np.ndarray:
        return np.array([len(s) for s in self.blue], dtype=np.int64)

    def csr(self, color: str) -> Tuple[np.ndarray, np.ndarray]:
        """Concatenated elements and row pointers for one color."""
        if color not in self._csr_cache:
            sets = self.red if color == "red" else self.blue
            sizes = np.array([len(s) for s in sets], dtype=np.int64)
            indptr = np.zeros(len(sets) + 1, dtype=np.int64)
            np.cumsum(sizes, out=indptr[1:])
            if indptr[-1]:
                indices = np.concatenate([s.elements for s in sets])
            else:
                indices = np.empty(0, dtype=ID_DTYPE)
            self._csr_cache[color] = (indptr, indices)
        return self._csr_cache[color]

    def require_nonempty_sets(self) -> None:
        for color, sets in (("red", self.red), ("blue", self.blue)):
            for idx, s in enumerate(sets):
                if len(s) == 0:
                    raise UndefinedSimilarityError(f"{color}[{idx}] is empty")

    def cross_intersections(self, rows: slice = slice(None)) -> np.ndarray:
        """Matrix of ``|red[r] ∩ blue[b]|`` for the selected red rows."""
        return _dense_cross_counts(self, rows)


# Dense 0/1 products are exact in float32 while a block's column count stays
# below 2**24; counts are accumulated in int64 across column chunks.
_COLUMN_CHUNK = 1 << 16
_BLOCK_BYTES = 64 << 20


def _indicator_block(cols: np.ndarray, order: np.ndarray, rows_of: np.ndarray,
                     lo: int, hi: int, c0: int, c1: int, n_rows: int) -> np.ndarray:
    out = np.zeros((n_rows, c1 - c0), dtype=np.float32)
    sel = order[lo:hi]
    out[rows_of[sel], cols[sel] - c0] = 1.0
    return out


def _dense_cross_counts(inst: BcpInstance, rows: slice) -> np.ndarray:
    r_indptr, r_idx = inst.csr("red")
    b_indptr, b_idx = inst.csr("blue")
    start, stop, _ = rows.indices(inst.n_red)
    r_lo, r_hi = r_indptr[start], r_indptr[stop]
    r_idx = r_idx[r_lo:r_hi]
    r_rows = np.repeat(np.arange(stop - start), np.diff(r_indptr[start:stop + 1]))
    b_rows = np.repeat(np.arange(inst.n_blue), np.diff(b_indptr))
    n_r, n_b = stop - start, inst.n_blue
    counts = np.zeros((n_r, n_b), dtype=np.int64)
    if n_r == 0 or r_idx.size == 0 or b_idx.size == 0:
        return counts
    # relabel to the columns both colors touch, so sparse universes stay cheap
    shared = np.intersect1d(r_idx, b_idx)
    if shared.size == 0:
        return counts
    r_keep = np.isin(r_idx, shared)
    b_keep = np.isin(b_idx, shared)
    r_col = np.searchsorted(shared, r_idx[r_keep])
    b_col = np.searchsorted(shared, b_idx[b_keep])
    r_rows, b_rows = r_rows[r_keep], b_rows[b_keep]
    d = shared.size
    width = max(1, min(_COLUMN_CHUNK, _BLOCK_BYTES // (4 * (n_r + n_b))))
    r_order = np.argsort(r_col, kind="stable")
    b_order = np.argsort(b_col, kind="stable")
    r_sorted, b_sorted = r_col[r_order], b_col[b_order]
    for c0 in range(0, d, width):
        c1 = min(c0 + width, d)
        rl, rh = np.searchsorted(r_sorted, [c0, c1])
        bl, bh = np.searchsorted(b_sorted, [c0, c1])
        rm = _indicator_block(r_col, r_order, r_rows, rl, rh, c0, c1, n_r)
        bm = _indicator_block(b_col, b_order, b_rows, bl, bh, c0, c1, n_b)
        counts += (rm @ bm.T).astype(np.int64)
    return counts
