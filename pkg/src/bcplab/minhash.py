"""MinHash signatures and the LSH decision solver."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional, Set, Tuple

import numpy as np

from ._parallel import ordered_map, worker_count
from .core import BcpInstance, DecisionOutcome, SparseSet, Thresholds, intersection_size
from .errors import UndefinedSimilarityError, ValidationError

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finaliser on Python ints."""
    z = (z + _GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    """splitmix64 finaliser, elementwise on uint64 arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def hash_key(seed: int, rep: int, t: int) -> int:
    """Key of the hash function for signature component ``t`` of repetition ``rep``."""
    return mix64((seed & MASK64) ^ mix64((rep & MASK64) ^ mix64(t & MASK64)))


def hash_keys(seed: int, reps: np.ndarray, t: int) -> np.ndarray:
    """Vectorised :func:`hash_key` over an array of repetition indices."""
    inner = np.uint64(mix64(t & MASK64))
    return mix64_array(np.uint64(seed & MASK64) ^ mix64_array(np.asarray(reps, np.uint64) ^ inner))


def element_hash(key: int, x: np.ndarray) -> np.ndarray:
    return mix64_array(np.asarray(x, dtype=np.uint64) ^ np.uint64(key))


def minhash_signature(a: SparseSet, k: int, rep: int, seed: int) -> np.ndarray:
    """``k`` MinHash values of ``a``; component ``t`` is ``min_x H(seed, rep, t, x)``."""
    if len(a) == 0:
        raise UndefinedSimilarityError("MinHash signature of an empty set is undefined")
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    e = a.elements.astype(np.uint64)
    return np.array([element_hash(hash_key(seed, rep, t), e).min() for t in range(k)],
                    dtype=np.uint64)


def _signatures(indptr: np.ndarray, indices: np.ndarray, k: int, rep: int, seed: int
                ) -> np.ndarray:
    e = indices.astype(np.uint64)
    out = np.empty((indptr.size - 1, k), dtype=np.uint64)
    starts = indptr[:-1]
    for t in range(k):
        out[:, t] = np.minimum.reduceat(element_hash(hash_key(seed, rep, t), e), starts)
    return out


@dataclass(frozen=True)
class LshParams:
    """Concatenation length ``k``, repetitions ``L``, exponent ``rho``."""

    k: int
    L: int
    rho: float
    eta: float
    seed: int
    derived_for_n: int
    upper: float = 0.0
    lower: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _check_similarity_thresholds(th: Thresholds) -> Tuple[float, float]:
    if th.units != "similarity":
        raise ValidationError("LSH needs similarity thresholds")
    j1, j2 = float(th.upper), float(th.lower)
    if not (0 < j2 < j1 < 1):
        raise ValidationError(f"need 0 < j2 < j1 < 1, got j1={j1}, j2={j2}")
    return j1, j2


def derive_lsh_params(n: int, th: Thresholds, eta: float, seed: int) -> LshParams:
    """Calibrate ``k`` so a ``j2`` pair collides with probability ``<= 1/n``.

    ``L`` is ``ceil(ln(1/eta) / j1**k)``: with that many repetitions a pair of
    similarity ``j1`` collides at least once with probability ``>= 1 - eta``.
    It equals ``n**rho * ln(1/eta)`` whenever ``ln n / ln(1/j2)`` is integral
    and is larger otherwise, since ``k`` is rounded up.
    """
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    if not (0 < eta < 1):
        raise ValidationError(f"eta must lie in (0, 1), got {eta}")
    j1, j2 = _check_similarity_thresholds(th)
    rho = math.log(1 / j1) / math.log(1 / j2)
    k = max(1, math.ceil(math.log(n) / math.log(1 / j2) - 1e-9))
    L = max(1, math.ceil(math.log(1 / eta) * math.exp(k * math.log(1 / j1)) - 1e-9))
    return LshParams(k=k, L=L, rho=rho, eta=float(eta), seed=int(seed), derived_for_n=int(n),
                     upper=j1, lower=j2)


@dataclass(frozen=True)
class LshResult:
    outcome: DecisionOutcome
    repetitions: int
    candidates: int
    verified: int


def _rep_candidates(inst: BcpInstance, k: int, rep: int, seed: int) -> np.ndarray:
    """Red/blue index pairs that share a bucket in one repetition, sorted."""
    rs = _signatures(*inst.csr("red"), k, rep, seed)
    bs = _signatures(*inst.csr("blue"), k, rep, seed)
    _, inv = np.unique(np.vstack([rs, bs]), axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    r_key, b_key = inv[:inst.n_red], inv[inst.n_red:]
    r_order = np.argsort(r_key, kind="stable")
    b_order = np.argsort(b_key, kind="stable")
    r_sorted, b_sorted = r_key[r_order], b_key[b_order]
    shared = np.intersect1d(r_sorted, b_sorted, assume_unique=False)
    if shared.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    pairs = []
    r_lo, r_hi = np.searchsorted(r_sorted, shared), np.searchsorted(r_sorted, shared, "right")
    b_lo, b_hi = np.searchsorted(b_sorted, shared), np.searchsorted(b_sorted, shared, "right")
    for a, b, c, d in zip(r_lo, r_hi, b_lo, b_hi):
        rr, bb = np.meshgrid(r_order[a:b], b_order[c:d], indexing="ij")
        pairs.append(np.stack([rr.ravel(), bb.ravel()], axis=1))
    out = np.concatenate(pairs)
    return out[np.lexsort((out[:, 1], out[:, 0]))]


def _check_params(inst: BcpInstance, th: Thresholds, params: LshParams) -> None:
    j1, j2 = _check_similarity_thresholds(th)
    if params.derived_for_n != inst.n:
        raise ValidationError(f"params derived for n={params.derived_for_n}, instance has n={inst.n}")
    rho = math.log(1 / j1) / math.log(1 / j2)
    if abs(rho - params.rho) > 1e-12:
        raise ValidationError(f"params rho={params.rho} does not match thresholds (rho={rho})")


def lsh_search(inst: BcpInstance, th: Thresholds, params: LshParams,
               workers: Optional[int] = None) -> LshResult:
    """:func:`lsh_decide` plus counters (repetitions used, candidates seen/verified).

    Repetitions are bucketed in parallel batches but verified strictly in
    repetition order, so outcome and counters do not depend on ``workers``.
    """
    _check_params(inst, th, params)
    inst.require_nonempty_sets()
    lower = th.lower
    workers = worker_count(workers)
    rejected: Set[Tuple[int, int]] = set()
    seen = verified = 0
    batch = max(1, workers)
    for start in range(0, params.L, batch):
        reps = list(range(start, min(start + batch, params.L)))
        cands = ordered_map(lambda r: _rep_candidates(inst, params.k, r, params.seed),
                            reps, workers)
        for rep, pairs in zip(reps, cands):
            seen += len(pairs)
            for r, b in pairs.tolist():
                if (r, b) in rejected:
                    continue
                verified += 1
                a, c = inst.red[r], inst.blue[b]
                x = intersection_size(a, c)
                union = len(a) + len(c) - x
                if x * lower.denominator >= lower.numerator * union:
                    return LshResult(DecisionOutcome((r, b), Fraction(x, union)),
                                     rep + 1, seen, verified)
                rejected.add((r, b))
    return LshResult(DecisionOutcome(), params.L, seen, verified)


def lsh_decide(inst: BcpInstance, th: Thresholds, params: LshParams,
               workers: Optional[int] = None) -> DecisionOutcome:
    """Decide BCP by bucketing k-concatenated MinHash signatures.

    Every bucket-sharing red/blue pair is verified exactly, so a returned pair
    always has Jaccard ``>= th.lower``. The first hit (lowest repetition, then
    lexicographic pair order) is returned.
    """
    return lsh_search(inst, th, params, workers).outcome
