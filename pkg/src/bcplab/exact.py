"""Quadratic brute-force oracle for Bichromatic Closest Pair.

Works on anything exposing ``n_red``, ``n_blue``, ``red_sizes()``,
``blue_sizes()``, ``require_nonempty_sets()`` and ``cross_intersections(rows)``:
plain :class:`~bcplab.core.BcpInstance` objects and the position-class
instances produced by the reductions.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Optional, Tuple

import numpy as np

from ._parallel import ordered_map
from .core import DecisionOutcome, Thresholds
from .errors import ValidationError

Candidate = Tuple[int, int, int, int]  # (red, blue, numerator, denominator)

_BLOCK_CELLS = 1 << 22
_REL_WINDOW = 1e-12


def _better(a: Candidate, b: Optional[Candidate]) -> bool:
    # strictly larger similarity; ties keep the earlier (lexicographic) pair
    if b is None:
        return True
    return a[2] * b[3] > b[2] * a[3]


def _block_best(inst, measure: str, red_sizes: np.ndarray, blue_sizes: np.ndarray,
                start: int, stop: int) -> Candidate:
    x = inst.cross_intersections(slice(start, stop))
    ya = red_sizes[start:stop, None]
    if measure == "jaccard":
        den = ya + blue_sizes[None, :] - x
    else:
        den = np.maximum(ya, blue_sizes[None, :])
    val = x / den
    top = float(val.max())
    if top == 0.0:
        return (start, 0, 0, int(den[0, 0]))
    rows, cols = np.nonzero(val >= top * (1.0 - _REL_WINDOW))
    best: Optional[Candidate] = None
    for r, c in zip(rows.tolist(), cols.tolist()):
        cand = (start + r, c, int(x[r, c]), int(den[r, c]))
        if _better(cand, best):
            best = cand
    return best


def _scan(inst, measure: str, workers: Optional[int]) -> Candidate:
    if measure not in ("jaccard", "braun_blanquet"):
        raise ValidationError(f"unknown measure {measure!r}")
    inst.require_nonempty_sets()
    red_sizes = np.asarray(inst.red_sizes(), dtype=np.int64)
    blue_sizes = np.asarray(inst.blue_sizes(), dtype=np.int64)
    step = max(1, _BLOCK_CELLS // max(1, inst.n_blue))
    bounds = [(s, min(s + step, inst.n_red)) for s in range(0, inst.n_red, step)]
    results = ordered_map(
        lambda b: _block_best(inst, measure, red_sizes, blue_sizes, *b), bounds, workers)
    best: Optional[Candidate] = None
    for cand in results:  # block order = red-index order, so ties resolve lexicographically
        if _better(cand, best):
            best = cand
    return best


def brute_force_max(inst, measure: str = "jaccard", workers: Optional[int] = None
                    ) -> Tuple[Tuple[int, int], Fraction]:
    """Most similar red/blue pair and its similarity.

    Ties go to the lexicographically smallest ``(red, blue)`` index pair, so
    the answer does not depend on how the scan is split across threads.

    Raises:
        UndefinedSimilarityError: if any set is empty.
    """
    r, b, num, den = _scan(inst, measure, workers)
    return (r, b), Fraction(num, den)


def brute_force_decide(inst, th: Thresholds, measure: str = "jaccard",
                       workers: Optional[int] = None) -> DecisionOutcome:
    """Exact decision: the maximum pair if it reaches ``th.lower``, else nothing.

    Gray-zone instances (``lower <= max < upper``) also return the maximum
    pair, which is a valid answer for the decision problem.
    """
    if th.units != "similarity":
        raise ValidationError("brute_force_decide needs similarity thresholds")
    pair, sim = brute_force_max(inst, measure, workers)
    if sim >= th.lower:
        return DecisionOutcome(pair, sim)
    return DecisionOutcome()
