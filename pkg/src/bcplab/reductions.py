"""Similarity-preserving self-reductions and the composed hardening pipeline.

Three maps act on whole instances:

* ``add_common``: every set gains ``ell`` fresh elements (raises all Jaccard
  values towards 1),
* ``add_red``: only red sets gain ``ell`` fresh elements (scales down),
* squaring-and-sampling: every set ``v`` becomes ``v x v`` over ``d**2``,
  followed by one shared positional sample of the squared universe.

Iterated squaring makes universes explode, so the pipeline runs on a
compressed representation (:class:`ClassInstance`): positions whose membership
pattern across all sets is identical share a *class*, and an instance is a
class-weight vector plus red/blue membership matrices over classes.
Squaring-and-sampling then only needs each sampled position's pair of parent
classes. Both representations produce the same sets given the same seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ._parallel import derive_seed
from .core import ID_DTYPE, MAX_UNIVERSE, BcpInstance, SparseSet, _check_universe
from .errors import CapacityError, UndefinedSimilarityError, ValidationError
from .plan import ParamPlan

SAMPLE_CHUNK = 1 << 22
MAX_SAMPLE = 1 << 31  # squared position ids of a sampled universe fit in int64
MATERIALIZE_BUDGET = 1 << 27  # total ids across all sets (1 GiB of int64)
_DENSE_KEYS = 1 << 24


# --------------------------------------------------------------------------
# trace

@dataclass(frozen=True)
class TraceStage:
    op_name: str
    params: dict
    universe_before: int
    universe_after: int
    thresholds_before: Optional[Tuple[float, float]] = None
    thresholds_after: Optional[Tuple[float, float]] = None

    def to_dict(self) -> dict:
        return {"op_name": self.op_name, "params": dict(self.params),
                "universe_before": self.universe_before,
                "universe_after": self.universe_after,
                "thresholds_before": None if self.thresholds_before is None
                else list(self.thresholds_before),
                "thresholds_after": None if self.thresholds_after is None
                else list(self.thresholds_after)}


@dataclass(frozen=True)
class ReductionTrace:
    """Ordered record of every stage applied to an instance."""

    stages: Tuple[TraceStage, ...] = ()
    plan: Optional[dict] = None

    def violations(self) -> List[str]:
        out = []
        for a, b in zip(self.stages, self.stages[1:]):
            if a.universe_after != b.universe_before:
                out.append(f"{a.op_name} -> {b.op_name}: universe {a.universe_after} "
                           f"!= {b.universe_before}")
        for st in self.stages:
            for th in (st.thresholds_before, st.thresholds_after):
                if th is not None and not all(0 < t <= 1 for t in th):
                    out.append(f"{st.op_name}: thresholds {th} leave (0, 1]")
        return out

    @property
    def final_thresholds(self) -> Optional[Tuple[float, float]]:
        return self.stages[-1].thresholds_after if self.stages else None

    @property
    def final_universe(self) -> Optional[int]:
        return self.stages[-1].universe_after if self.stages else None

    def to_dict(self) -> dict:
        return {"stages": [s.to_dict() for s in self.stages], "plan": self.plan}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ReductionTrace":
        stages = []
        for s in raw["stages"]:
            stages.append(TraceStage(
                s["op_name"], dict(s["params"]), int(s["universe_before"]),
                int(s["universe_after"]),
                None if s.get("thresholds_before") is None else tuple(s["thresholds_before"]),
                None if s.get("thresholds_after") is None else tuple(s["thresholds_after"])))
        return cls(tuple(stages), raw.get("plan"))


# --------------------------------------------------------------------------
# set-level maps

def _fresh_ids(d: int, ell: int) -> np.ndarray:
    if ell < 0:
        raise ValidationError(f"ell must be non-negative, got {ell}")
    if d + ell > MAX_UNIVERSE:
        raise CapacityError(f"universe {d} + {ell} exceeds the id type")
    return np.arange(d, d + ell, dtype=ID_DTYPE)


def _extend(s: SparseSet, fresh: np.ndarray, d_new: int) -> SparseSet:
    return SparseSet._trusted(np.concatenate([s.elements, fresh]), d_new)


def add_common(inst: BcpInstance, ell: int) -> BcpInstance:
    """Append ``ell`` fresh ids to the universe and to every set."""
    ell = int(ell)
    fresh = _fresh_ids(inst.universe_size, ell)
    d = inst.universe_size + ell
    return BcpInstance(tuple(_extend(s, fresh, d) for s in inst.red),
                       tuple(_extend(s, fresh, d) for s in inst.blue), d)


def add_red(inst: BcpInstance, ell: int) -> BcpInstance:
    """Append ``ell`` fresh ids to the universe and to every red set only."""
    ell = int(ell)
    fresh = _fresh_ids(inst.universe_size, ell)
    d = inst.universe_size + ell
    empty = fresh[:0]
    return BcpInstance(tuple(_extend(s, fresh, d) for s in inst.red),
                       tuple(_extend(s, empty, d) for s in inst.blue), d)


def squared_universe(d: int) -> int:
    if d * d > MAX_UNIVERSE:
        raise CapacityError(f"squared universe {d}^2 overflows the id type")
    return d * d


def square(a: SparseSet) -> SparseSet:
    """``a x a`` over universe ``d**2`` with row-major pair ids ``i*d + j``."""
    d = a.universe_size
    d2 = squared_universe(d)
    e = a.elements
    out = (e[:, None] * d + e[None, :]).reshape(-1)
    return SparseSet._trusted(out, d2)


def jaccard_after_pure_squaring(x: int, y: int, z: int, i: int) -> Fraction:
    """Jaccard of two sets with ``|a∩b|=x, |a|=y, |b|=z`` after ``i`` squarings."""
    if i < 0 or x < 0 or x > min(y, z):
        raise ValidationError(f"need i >= 0 and 0 <= x <= min(y, z), got x={x}, y={y}, z={z}, i={i}")
    if y == 0 and z == 0:
        raise UndefinedSimilarityError("both sets empty")
    k = 2 ** i
    xk = int(x) ** k
    return Fraction(xk, int(y) ** k + int(z) ** k - xk)


def _sample_chunks(d: int, s: int, seed: int) -> Iterator[np.ndarray]:
    # fixed chunking keeps the stream identical for every consumer
    rng = np.random.default_rng(seed)
    remaining = s
    while remaining > 0:
        take = min(SAMPLE_CHUNK, remaining)
        yield rng.integers(0, d, size=take, dtype=np.int64)
        remaining -= take


def draw_sample(d: int, s: int, seed: int) -> np.ndarray:
    """``s`` positions drawn uniformly with replacement from ``[0, d)``."""
    if d < 1 or s < 1:
        raise ValidationError(f"need d >= 1 and s >= 1, got d={d}, s={s}")
    if d > MAX_UNIVERSE:
        raise CapacityError(f"universe {d} exceeds the id type")
    out = np.concatenate(list(_sample_chunks(int(d), int(s), seed)))
    out.setflags(write=False)
    return out


def apply_sample(a: SparseSet, sample: np.ndarray) -> SparseSet:
    """Positions ``t`` with ``sample[t] in a``, over universe ``len(sample)``."""
    sample = np.asarray(sample)
    if sample.size and (sample.min() < 0 or sample.max() >= a.universe_size):
        bad = sample[(sample < 0) | (sample >= a.universe_size)][0]
        raise ValidationError(f"sample id {int(bad)} outside universe {a.universe_size}")
    pos = np.flatnonzero(np.isin(sample, a.elements))
    return SparseSet._trusted(pos.astype(ID_DTYPE), _check_universe(max(1, sample.size)))


def lemma43_envelope(x: int, y: int, z: int, i: int, gamma: float) -> Tuple[float, float]:
    """Multiplicative band around the squared Jaccard value after sampling.

    Returns ``(lo * E, hi * E)`` with ``E = jaccard_after_pure_squaring(x, y, z, i)``,
    ``lo = ((1-g)/(1+4g))**(2**i)`` and ``hi = ((1+g)/(1-4g))**(2**i)``.
    """
    if not (0 <= gamma < 0.25):
        raise ValidationError(f"gamma must lie in [0, 1/4), got {gamma}")
    e = float(jaccard_after_pure_squaring(x, y, z, i))
    lo, hi = envelope_factors(i, gamma)
    return lo * e, hi * e


def envelope_factors(i: int, gamma: float) -> Tuple[float, float]:
    k = 2.0 ** i
    return (((1 - gamma) / (1 + 4 * gamma)) ** k, ((1 + gamma) / (1 - 4 * gamma)) ** k)


# --------------------------------------------------------------------------
# compressed engine

class ClassInstance:
    """Instance stored as position classes.

    Attributes:
        universe_size: number of positions.
        weights: positions per class.
        red, blue: boolean membership matrices (sets x classes).
        classes: class of every position, or ``None`` when position identity
            has been dropped (the instance can then be solved but not
            materialised).
    """

    def __init__(self, universe_size: int, weights: np.ndarray, red: np.ndarray,
                 blue: np.ndarray, classes: Optional[np.ndarray] = None) -> None:
        self.universe_size = int(universe_size)
        self.weights = np.asarray(weights, dtype=np.int64)
        self.red = np.asarray(red, dtype=bool)
        self.blue = np.asarray(blue, dtype=bool)
        self.classes = classes
        if int(self.weights.sum()) != self.universe_size:
            raise ValidationError("class weights do not sum to the universe size")

    # -- construction ------------------------------------------------------
    @classmethod
    def from_instance(cls, inst: BcpInstance, track: bool = True) -> "ClassInstance":
        d = inst.universe_size
        red = np.zeros((inst.n_red, d), dtype=bool)
        blue = np.zeros((inst.n_blue, d), dtype=bool)
        for mat, color in ((red, "red"), (blue, "blue")):
            indptr, idx = inst.csr(color)
            rows = np.repeat(np.arange(mat.shape[0]), np.diff(indptr))
            mat[rows, idx] = True
        out = cls(d, np.ones(d, dtype=np.int64), red, blue,
                  np.arange(d, dtype=np.int64) if track else None)
        return out._merged()

    def _merged(self) -> "ClassInstance":
        """Fuse classes with identical membership columns."""
        c = self.weights.size
        if c <= 1:
            return self
        stacked = np.vstack([self.red, self.blue])
        packed = np.packbits(stacked, axis=0).T  # one row per class
        _, first, inv = np.unique(packed, axis=0, return_index=True, return_inverse=True)
        inv = inv.reshape(-1)
        if first.size == c:
            return self
        weights = np.bincount(inv, weights=self.weights, minlength=first.size).astype(np.int64)
        classes = None if self.classes is None else inv[self.classes]
        return ClassInstance(self.universe_size, weights, self.red[:, first],
                             self.blue[:, first], classes)

    # -- solver protocol -----------------------------------------------------
    @property
    def n_red(self) -> int:
        return self.red.shape[0]

    @property
    def n_blue(self) -> int:
        return self.blue.shape[0]

    @property
    def n(self) -> int:
        return max(self.n_red, self.n_blue)

    @property
    def n_classes(self) -> int:
        return self.weights.size

    def red_sizes(self) -> np.ndarray:
        return self.red.astype(np.int64) @ self.weights

    def blue_sizes(self) -> np.ndarray:
        return self.blue.astype(np.int64) @ self.weights

    def require_nonempty_sets(self) -> None:
        for color, sizes in (("red", self.red_sizes()), ("blue", self.blue_sizes())):
            empty = np.flatnonzero(sizes == 0)
            if empty.size:
                raise UndefinedSimilarityError(f"{color}[{int(empty[0])}] is empty")

    def cross_intersections(self, rows: slice = slice(None)) -> np.ndarray:
        # float64 products are exact here: every partial sum is <= universe < 2**53
        r = self.red[rows].astype(np.float64) * self.weights.astype(np.float64)
        return np.rint(r @ self.blue.T.astype(np.float64)).astype(np.int64)

    # -- maps ----------------------------------------------------------------
    def _append_class(self, ell: int, red_flag: bool, blue_flag: bool) -> "ClassInstance":
        ell = int(ell)
        if ell < 0:
            raise ValidationError(f"ell must be non-negative, got {ell}")
        if ell == 0:
            return self
        c = self.n_classes
        red = np.hstack([self.red, np.full((self.n_red, 1), red_flag)])
        blue = np.hstack([self.blue, np.full((self.n_blue, 1), blue_flag)])
        classes = None
        if self.classes is not None:
            classes = np.concatenate([self.classes, np.full(ell, c, dtype=np.int64)])
        out = ClassInstance(self.universe_size + ell, np.append(self.weights, ell),
                            red, blue, classes)
        return out._merged()

    def add_common(self, ell: int) -> "ClassInstance":
        return self._append_class(ell, True, True)

    def add_red(self, ell: int) -> "ClassInstance":
        return self._append_class(ell, True, False)

    def square_and_sample(self, s: int, seed: int, track: bool = True) -> "ClassInstance":
        """Square every set, then keep the shared positional sample of size ``s``.

        Draws exactly the stream of ``draw_sample(universe**2, s, seed)``.
        """
        if self.classes is None:
            raise ValidationError("position classes were dropped; cannot sample again")
        s = int(s)
        if s < 1:
            raise ValidationError(f"sample size must be positive, got {s}")
        if s > MAX_SAMPLE:
            raise CapacityError(f"sample size {s} exceeds {MAX_SAMPLE}")
        u = self.universe_size
        u2 = squared_universe(u)
        c = self.n_classes
        pc = self.classes
        dense = c * c <= _DENSE_KEYS
        counts = np.zeros(c * c, dtype=np.int64) if dense else None
        sparse_keys, sparse_counts = [], []
        pos_keys = [] if track else None
        for z in _sample_chunks(u2, s, seed):
            key = pc[z // u] * c + pc[z % u]
            if dense:
                counts += np.bincount(key, minlength=c * c)
            else:
                k_, n_ = np.unique(key, return_counts=True)
                sparse_keys.append(k_)
                sparse_counts.append(n_)
            if track:
                pos_keys.append(key)
        if dense:
            keys = np.flatnonzero(counts)
            weights = counts[keys]
        else:
            allk = np.concatenate(sparse_keys)
            keys, inv = np.unique(allk, return_inverse=True)
            weights = np.bincount(inv.reshape(-1), weights=np.concatenate(sparse_counts)
                                  ).astype(np.int64)
        k1, k2 = keys // c, keys % c
        red = self.red[:, k1] & self.red[:, k2]
        blue = self.blue[:, k1] & self.blue[:, k2]
        classes = None
        if track:
            classes = np.searchsorted(keys, np.concatenate(pos_keys))
        return ClassInstance(s, weights, red, blue, classes)._merged()

    def full_square(self, track: bool = True) -> "ClassInstance":
        """Squaring without sampling (every position of ``universe**2`` kept in order)."""
        if self.classes is None:
            raise ValidationError("position classes were dropped")
        u = self.universe_size
        u2 = squared_universe(u)
        c = self.n_classes
        keys = np.arange(c * c)
        k1, k2 = keys // c, keys % c
        weights = self.weights[k1] * self.weights[k2]
        classes = None
        if track:
            pc = self.classes
            classes = (pc[:, None] * c + pc[None, :]).reshape(-1)
        out = ClassInstance(u2, weights, self.red[:, k1] & self.red[:, k2],
                            self.blue[:, k1] & self.blue[:, k2], classes)
        return out._merged()

    def drop_positions(self) -> "ClassInstance":
        return ClassInstance(self.universe_size, self.weights, self.red, self.blue, None)

    def materialize(self, budget: Optional[int] = None) -> BcpInstance:
        """Expand to explicit sets.

        Raises:
            CapacityError: if the sets hold more than ``budget`` ids in total
                (default :data:`MATERIALIZE_BUDGET`).
        """
        if self.classes is None:
            raise ValidationError("position classes were dropped; cannot materialise")
        budget = MATERIALIZE_BUDGET if budget is None else budget
        total = int(self.red_sizes().sum() + self.blue_sizes().sum())
        if total > budget:
            raise CapacityError(f"materialising needs {total} ids, above the budget of {budget}; "
                                "keep the instance compressed or use a smaller plan")
        pc = self.classes
        d = self.universe_size

        def build(mat: np.ndarray) -> Tuple[SparseSet, ...]:
            return tuple(SparseSet._trusted(np.flatnonzero(row[pc]).astype(ID_DTYPE), d)
                         for row in mat)

        return BcpInstance(build(self.red), build(self.blue), d)


Solvable = Union[BcpInstance, ClassInstance]


def square_and_sample(inst: BcpInstance, iterations: int, sample_sizes: Sequence[int],
                      seed: int) -> Tuple[BcpInstance, ReductionTrace]:
    """Iterated squaring with one shared sample per round.

    Round ``j`` (1-based) squares every set and applies the sample
    ``draw_sample(d**2, sample_sizes[j-1], derive_seed(seed, "sample", j))``.
    """
    if iterations < 1 or len(sample_sizes) != iterations:
        raise ValidationError("need iterations >= 1 and one sample size per iteration")
    ci = ClassInstance.from_instance(inst)
    stages = []
    for j, s in enumerate(sample_sizes, start=1):
        before = ci.universe_size
        ci = ci.square_and_sample(int(s), sample_seed(seed, j))
        stages.append(TraceStage("square_and_sample",
                                 {"j": j, "sample_size": int(s), "seed": sample_seed(seed, j)},
                                 before, ci.universe_size))
    return ci.materialize(), ReductionTrace(tuple(stages))


def sample_seed(seed: int, j: int) -> int:
    return derive_seed(seed, "sample", j)


# --------------------------------------------------------------------------
# pipeline

def check_pipeline_shape(inst: Solvable, plan: ParamPlan) -> None:
    tm, m = plan.T * plan.m, plan.m
    if inst.universe_size != 2 * tm:
        raise ValidationError(f"universe {inst.universe_size} != 2*T*m = {2 * tm}")
    if np.any(inst.red_sizes() != tm) or np.any(inst.blue_sizes() != m):
        raise ValidationError(f"red sets must have size T*m={tm} and blue sets size m={m}")
    if inst.n > plan.n:
        raise ValidationError(f"instance has {inst.n} sets per color, plan was built for {plan.n}")


def _h_ell(max_size: int, alpha: float) -> int:
    return math.ceil(max_size * (1 / alpha - 1)) if alpha < 1 else 0


def harden_pipeline(inst: Solvable, plan: ParamPlan, seed: int, *,
                    materialize: bool = True) -> Tuple[Solvable, ReductionTrace]:
    """add_common(l_delta) -> ``plan.i`` squaring-and-sampling rounds -> add_red(l_alpha).

    ``l_alpha`` is ``ceil(max set size * (1/alpha - 1))`` on the sampled
    instance, so the final upper threshold is ``alpha * j1s = j1``. With
    ``materialize=False`` the compressed :class:`ClassInstance` is returned,
    which the brute-force solver accepts directly.
    """
    check_pipeline_shape(inst, plan)
    st = plan.stage_thresholds
    ci = inst if isinstance(inst, ClassInstance) else ClassInstance.from_instance(inst)
    stages = []
    base = (float(plan.base_thresholds[0]), float(plan.base_thresholds[1]))

    before = ci.universe_size
    ci = ci.add_common(plan.ell_delta)
    stages.append(TraceStage("add_common", {"ell": plan.ell_delta}, before, ci.universe_size,
                             base, (st["j1d"], st["j2d"])))
    prev = (st["j1d"], st["j2d"])
    for j, s in enumerate(plan.sample_sizes, start=1):
        before = ci.universe_size
        track = materialize or j < plan.i
        ci = ci.square_and_sample(s, sample_seed(seed, j), track=track)
        after = (st["j1s"], st["j2s"]) if j == plan.i else None
        stages.append(TraceStage("square_and_sample",
                                 {"j": j, "sample_size": int(s), "seed": sample_seed(seed, j),
                                  "rule": plan.sample_size_rule},
                                 before, ci.universe_size, prev, after))
        prev = after
    if not materialize and ci.classes is not None:
        ci = ci.drop_positions()
    max_size = int(max(ci.red_sizes().max(), ci.blue_sizes().max()))
    ell_alpha = _h_ell(max_size, plan.alpha)
    before = ci.universe_size
    ci = ci.add_red(ell_alpha)
    stages.append(TraceStage("add_red", {"ell": ell_alpha, "alpha": plan.alpha},
                             before, ci.universe_size, prev, (st["j1a"], st["j2a"])))
    trace = ReductionTrace(tuple(stages), plan.to_dict())
    if materialize:
        return ci.materialize(), trace
    return ci, trace
