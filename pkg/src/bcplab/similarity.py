"""Set similarity and distance measures, all exact over integers."""

from __future__ import annotations

from fractions import Fraction

from .core import SparseSet, _same_universe, intersection_size
from .errors import UndefinedSimilarityError, ValidationError


def jaccard(a: SparseSet, b: SparseSet) -> Fraction:
    """Jaccard similarity ``|a ∩ b| / |a ∪ b|`` as an exact rational.

    Raises:
        UndefinedSimilarityError: if both sets are empty.
    """
    x = intersection_size(a, b)
    union = len(a) + len(b) - x
    if union == 0:
        raise UndefinedSimilarityError("Jaccard similarity of two empty sets is undefined")
    return Fraction(x, union)


def hamming_distance(a: SparseSet, b: SparseSet) -> int:
    """Size of the symmetric difference of the characteristic vectors."""
    x = intersection_size(a, b)
    return len(a) + len(b) - 2 * x


def jaccard_from_hamming(size_a: int, size_b: int, dh: int) -> Fraction:
    """Jaccard similarity recovered from set sizes and Hamming distance.

    Uses ``(|a| + |b| - dh) / (|a| + |b| + dh)``, which follows from
    ``|a ∩ b| = (|a| + |b| - dh) / 2``.
    """
    total = size_a + size_b
    if size_a < 0 or size_b < 0 or dh < 0:
        raise ValidationError("sizes and distance must be non-negative")
    if dh > total:
        raise ValidationError(f"distance {dh} exceeds |a|+|b| = {total}")
    if (total - dh) % 2:
        raise ValidationError(
            f"|a|+|b|-dh = {total - dh} is odd, no integral intersection exists")
    if 2 * max(size_a, size_b) - total > dh:
        # |a ∩ b| would exceed min(|a|, |b|)
        raise ValidationError("distance too small for the given set sizes")
    if total + dh == 0:
        raise UndefinedSimilarityError("Jaccard similarity of two empty sets is undefined")
    return Fraction(total - dh, total + dh)


def braun_blanquet(a: SparseSet, b: SparseSet) -> Fraction:
    """Braun-Blanquet similarity ``|a ∩ b| / max(|a|, |b|)``."""
    _same_universe(a, b)
    denom = max(len(a), len(b))
    if denom == 0:
        raise UndefinedSimilarityError("Braun-Blanquet similarity of two empty sets is undefined")
    return Fraction(intersection_size(a, b), denom)


MEASURES = {"jaccard": jaccard, "braun_blanquet": braun_blanquet}
