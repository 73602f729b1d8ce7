"""Seeded instance generators.

Each set is drawn from its own generator seeded by ``(seed, color, index)``,
so output never depends on evaluation order.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from .core import ID_DTYPE, BcpInstance, SparseSet, _check_universe
from .errors import ValidationError

Pair = Tuple[int, int]

_RED, _BLUE, _PLANT = 0, 1, 2


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *keys])


def _subset(rng: np.random.Generator, pool, size: int, d: int) -> SparseSet:
    ids = rng.choice(pool, size=size, replace=False)
    return SparseSet._trusted(np.sort(np.asarray(ids, dtype=ID_DTYPE)), d)


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n}")
    return int(n)


def gen_ov(n: int, m_ov: int, seed: int) -> BcpInstance:
    """``n`` red and ``n`` blue supports of uniform random 0/1 vectors in dimension ``m_ov``."""
    n = _check_n(n)
    if m_ov < 1:
        raise ValidationError(f"m_ov must be positive, got {m_ov}")

    def draw(color: int, idx: int) -> SparseSet:
        bits = _rng(seed, color, idx).random(m_ov) < 0.5
        return SparseSet._trusted(np.flatnonzero(bits).astype(ID_DTYPE), m_ov)

    return BcpInstance(tuple(draw(_RED, i) for i in range(n)),
                       tuple(draw(_BLUE, i) for i in range(n)), m_ov)


def ov_brute_check(inst: BcpInstance) -> Optional[Pair]:
    """First red/blue pair (lexicographic) with disjoint supports, or ``None``."""
    step = max(1, (1 << 22) // max(1, inst.n_blue))
    for start in range(0, inst.n_red, step):
        hits = np.argwhere(inst.cross_intersections(slice(start, start + step)) == 0)
        if hits.size:
            return int(hits[0, 0]) + start, int(hits[0, 1])
    return None


def gen_rubinstein_shape(n: int, T: int, m: int, plant: bool = False, seed: int = 0,
                         background: str = "uniform") -> Tuple[BcpInstance, Optional[Pair]]:
    """Red sets of size ``T*m`` and blue sets of size ``m`` over ``[0, 2*T*m)``.

    Args:
        background: ``"uniform"`` draws every set uniformly (non-planted pairs
            then meet in ``m/2`` elements on average). ``"far"`` splits the
            universe into halves ``H1 = [0, Tm)`` and ``H2 = [Tm, 2Tm)``: blue
            sets live in ``H2`` and red sets take exactly ``m/2 - 1`` elements
            of ``H2`` (``ceil(m/2) - 1`` for odd ``m``), so every red/blue
            intersection stays strictly below ``m/2`` (pairs touching a
            planted row or column excepted).
        plant: if set, one random pair ``(p, q)`` is replaced by ``a*`` (a
            uniform ``Tm``-subset) and ``b* ⊂ a*`` of size ``m``; their Hamming
            distance is exactly ``m(T-1)``.

    Returns:
        The instance and the planted ``(red, blue)`` index pair or ``None``.
    """
    n = _check_n(n)
    if int(T) != T or T < 2 or int(m) != m or m < 2:
        raise ValidationError(f"need integers T >= 2 and m >= 2, got T={T}, m={m}")
    if background not in ("uniform", "far"):
        raise ValidationError(f"unknown background {background!r}")
    tm = T * m
    d = 2 * tm
    if background == "uniform":
        red = [_subset(_rng(seed, _RED, i), d, tm, d) for i in range(n)]
        blue = [_subset(_rng(seed, _BLUE, i), d, m, d) for i in range(n)]
    else:
        r = (m + 1) // 2 - 1
        h1, h2 = np.arange(tm), np.arange(tm, d)
        red = []
        for i in range(n):
            g = _rng(seed, _RED, i)
            ids = np.concatenate([g.choice(h1, tm - r, replace=False),
                                  g.choice(h2, r, replace=False)])
            red.append(SparseSet._trusted(np.sort(ids.astype(ID_DTYPE)), d))
        blue = [_subset(_rng(seed, _BLUE, i), h2, m, d) for i in range(n)]
    planted = None
    if plant:
        g = _rng(seed, _PLANT)
        p, q = int(g.integers(n)), int(g.integers(n))
        a = _subset(g, d, tm, d)
        red[p] = a
        blue[q] = _subset(g, a.elements, m, d)
        planted = (p, q)
    return BcpInstance(tuple(red), tuple(blue), d), planted


def audit_background(inst: BcpInstance, m: int, planted: Optional[Pair] = None) -> dict:
    """Largest non-planted intersection and how many pairs reach ``m/2``."""
    x = inst.cross_intersections()
    mask = np.ones_like(x, dtype=bool)
    if planted is not None:
        mask[planted] = False
    vals = x[mask]
    return {"max_intersection": int(vals.max()) if vals.size else 0,
            "pairs_at_or_above_half_m": int(np.count_nonzero(2 * vals >= m)),
            "pairs": int(vals.size)}


def gen_random(n: int, d: int, size_lo: int, size_hi: int, seed: int) -> BcpInstance:
    """Sets of uniform size in ``[size_lo, size_hi]``, elements uniform without replacement."""
    n = _check_n(n)
    d = _check_universe(d)
    if not (0 <= size_lo <= size_hi <= d):
        raise ValidationError(f"need 0 <= size_lo <= size_hi <= d, got {size_lo}, {size_hi}, {d}")

    def draw(color: int, idx: int) -> SparseSet:
        g = _rng(seed, color, idx)
        return _subset(g, d, int(g.integers(size_lo, size_hi + 1)), d)

    return BcpInstance(tuple(draw(_RED, i) for i in range(n)),
                       tuple(draw(_BLUE, i) for i in range(n)), d)


def gen_planted(n: int, d: int, size: int, overlap: int, seed: int, plant: bool = True,
                size_hi: Optional[int] = None) -> Tuple[BcpInstance, Optional[Pair]]:
    """Random background plus one pair with ``|a*| = |b*| = size`` meeting in ``overlap``.

    The planted pair has Jaccard ``overlap / (2*size - overlap)``. Background
    sets have sizes uniform in ``[size, size_hi]`` (default: exactly ``size``).
    """
    size_hi = size if size_hi is None else size_hi
    if not (0 <= overlap <= size) or 2 * size - overlap > d:
        raise ValidationError("need 0 <= overlap <= size and 2*size - overlap <= d")
    inst = gen_random(n, d, size, size_hi, seed)
    if not plant:
        return inst, None
    g = _rng(seed, _PLANT)
    p, q = int(g.integers(n)), int(g.integers(n))
    pool = g.choice(d, size=2 * size - overlap, replace=False)
    red, blue = list(inst.red), list(inst.blue)
    red[p] = SparseSet._trusted(np.sort(pool[:size].astype(ID_DTYPE)), d)
    blue[q] = SparseSet._trusted(np.sort(pool[size - overlap:].astype(ID_DTYPE)), d)
    return BcpInstance(tuple(red), tuple(blue), d), (p, q)


@dataclass
class GenSpec:
    """Generator request as accepted by the ``generate`` command."""

    kind: str
    n: int
    params: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "GenSpec":
        try:
            return cls(kind=str(raw["kind"]), n=int(raw["n"]), params=dict(raw.get("params", {})),
                       seed=int(raw.get("seed", 0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed generator spec: {exc}") from exc

    def to_dict(self) -> dict:
        return asdict(self)


def generate(spec: GenSpec) -> Tuple[BcpInstance, Optional[Pair]]:
    p = spec.params
    try:
        if spec.kind == "ov":
            return gen_ov(spec.n, int(p["m_ov"]), spec.seed), None
        if spec.kind == "rubinstein_shape":
            return gen_rubinstein_shape(spec.n, int(p["T"]), int(p["m"]), bool(p.get("plant", False)),
                                        spec.seed, p.get("background", "uniform"))
        if spec.kind == "random":
            return gen_random(spec.n, int(p["d"]), int(p["size_lo"]), int(p["size_hi"]),
                              spec.seed), None
        if spec.kind == "planted":
            return gen_planted(spec.n, int(p["d"]), int(p["size"]), int(p["overlap"]), spec.seed,
                               bool(p.get("plant", True)), p.get("size_hi"))
    except KeyError as exc:
        raise ValidationError(f"{spec.kind} spec is missing parameter {exc}") from exc
    raise ValidationError(f"unknown generator kind {spec.kind!r}")
