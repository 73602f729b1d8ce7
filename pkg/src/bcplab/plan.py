"""Closed-form parameter planner for the hardening pipeline.

The pipeline starts from a base instance with red sets of size ``T*m``, blue
sets of size ``m`` and universe ``2*T*m`` (close pairs at Jaccard ``1/T``, far
pairs at ``1/(2T+1)``), then

1. adds ``ceil(T*m*(1/delta - 1))`` common elements (thresholds ``j1d, j2d``),
2. squares-and-samples ``i`` times with sample sizes ``s_1..s_i``
   (thresholds ``j1s, j2s``),
3. adds elements to red sets only so that the upper threshold drops from
   ``j1s`` to exactly ``j1`` (factor ``alpha``; thresholds ``j1a, j2a``).

Every threshold formula below is normalised by the red-set size so that large
powers ``2**i`` neither overflow nor underflow.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

from .core import as_fraction
from .errors import CapacityError, ValidationError

DEFAULT_SAMPLE_CAP = 1 << 31  # keeps squared position ids inside int64
MAX_ROUNDS = 8
SAMPLE_RULE = "30 ln(n) (d/x2)^(2^j) / (gamma^2 (1-gamma)^(2^j))"
SAMPLE_RULE_LOOSE = "30 ln(n) (d/x2)^(2^j) / (gamma^2 (1-gamma)^(2^j - 2))"


def _check_delta_T(delta: float, T: int) -> None:
    if not (0 < delta <= 1):
        raise ValidationError(f"delta must lie in (0, 1], got {delta}")
    if int(T) != T or T < 1:
        raise ValidationError(f"T must be a positive integer, got {T}")


def _envelope_factors(i: int, gamma: float) -> Tuple[float, float]:
    """``((1-g)/(1+4g))**(2**i)`` and ``((1+g)/(1-4g))**(2**i)``."""
    if not (0 <= gamma < 0.25):
        raise ValidationError(f"gamma must lie in [0, 1/4), got {gamma}")
    k = 2.0 ** i
    lo = math.exp(k * (math.log1p(-gamma) - math.log1p(4 * gamma)))
    hi = math.exp(k * (math.log1p(gamma) - math.log1p(-4 * gamma)))
    return lo, hi


def _near_far_ratios(delta: float, T: int) -> Tuple[float, float]:
    # near: (m + l)/(T m / delta) = delta/T + 1 - delta, far: (m/2 + l)/(T m / delta)
    return delta / T + 1 - delta, delta / (2 * T) + 1 - delta


def stage_thresholds_after_g(delta: float, T: int) -> Tuple[float, float]:
    """Thresholds after adding ``T*m*(1/delta - 1)`` common elements."""
    _check_delta_T(delta, T)
    near, far = _near_far_ratios(delta, T)
    return near, far / (1 + delta / (2 * T))


def stage_thresholds_after_f(delta: float, T: int, i: int, gamma: float) -> Tuple[float, float]:
    """Thresholds after ``i`` squaring-and-sampling rounds with slack ``gamma``.

    ``i = 0`` with ``gamma = 0`` reproduces :func:`stage_thresholds_after_g`.
    """
    _check_delta_T(delta, T)
    if i < 0:
        raise ValidationError(f"i must be non-negative, got {i}")
    lo, hi = _envelope_factors(i, gamma)
    near, far = _near_far_ratios(delta, T)
    k = 2.0 ** i
    near_k, far_k = near ** k, far ** k
    return lo * near_k, hi * far_k / (1 + near_k - far_k)


def _j1s(delta: float, T: int, i: int, gamma: float) -> float:
    if i == 0:
        return stage_thresholds_after_g(delta, T)[0]
    return stage_thresholds_after_f(delta, T, i, gamma)[0]


def choose_i_and_alpha(delta: float, T: int, gamma: float, j1: float) -> Tuple[int, float]:
    """Largest number of squaring rounds keeping the upper threshold ``>= j1``.

    Returns ``(i, alpha)`` with ``alpha = j1 / j1s(i)``. When ``j1`` is already
    at or above the post-common-elements threshold no squaring is needed and
    ``(0, j1 / j1d)`` is returned.
    """
    if not (0 < j1 < 1):
        raise ValidationError(f"j1 must lie in (0, 1), got {j1}")
    j1d = _j1s(delta, T, 0, gamma)
    if j1 >= j1d:
        return 0, j1 / j1d
    i = 0
    while _j1s(delta, T, i + 1, gamma) >= j1:
        i += 1
        if i > 64:
            raise ValidationError("squaring depth exceeds 64 rounds")
    return i, j1 / _j1s(delta, T, i, gamma)


def master_inequality(i: int, gamma: float) -> Tuple[float, float]:
    """Both sides of ``(1+g)**(2**i) <= 1 + 1.5 * 2**i * g``."""
    k = 2.0 ** i
    return math.exp(k * math.log1p(gamma)), 1 + 1.5 * k * gamma


def gamma_inequality_sides(i: int, gamma: float) -> List[Tuple[float, float]]:
    """(lhs, rhs) of the three sufficient conditions for the envelope algebra."""
    k = 2.0 ** i
    p = math.exp(k * math.log1p(gamma))
    q = math.exp(k * math.log1p(-gamma))
    r = math.exp(k * math.log1p(-4 * gamma))
    s = math.exp(k * math.log1p(4 * gamma))
    return [master_inequality(i, gamma), (p, 2 * q - r), (2 * p, s + q)]


def check_gamma_inequalities(i: int, gamma: float, slack: float = 1e-12) -> bool:
    """True iff all three conditions hold (each up to ``slack``).

    Conditions, with ``k = 2**i``: ``(1+g)^k <= 1 + 1.5 k g``,
    ``(1+g)^k <= 2(1-g)^k - (1-4g)^k`` and ``2(1+g)^k <= (1+4g)^k + (1-g)^k``.
    """
    if i < 1:
        raise ValidationError(f"i must be >= 1, got {i}")
    if not (0 < gamma < 0.25):
        raise ValidationError(f"gamma must lie in (0, 1/4), got {gamma}")
    return all(lhs - rhs <= slack for lhs, rhs in gamma_inequality_sides(i, gamma))


def compute_x2(delta: float, T: int, m: int) -> Fraction:
    """Intersection size of a far pair after adding common elements."""
    _check_delta_T(delta, T)
    dl = as_fraction(delta)
    return Fraction(m, 2) + T * m * (1 / dl - 1)


def subsample_size(n: int, gamma: float, m_prime: float) -> int:
    """Positions needed so a set of density ``>= m_prime**2`` keeps its
    ``(1 +- gamma)`` size bounds: ``ceil(30 ln n / (gamma^2 m_prime^2))``."""
    if n < 2 or not (0 < gamma < 1) or not (0 < m_prime <= 1):
        raise ValidationError("need n >= 2, 0 < gamma < 1, 0 < m_prime <= 1")
    return math.ceil(30 * math.log(n) / (gamma ** 2 * m_prime ** 2))


def compute_sample_sizes(gamma: float, i: int, x2: Fraction, d: int, n: int,
                         cap: Optional[int] = DEFAULT_SAMPLE_CAP,
                         loose: bool = False) -> List[int]:
    """Sample size for every squaring round ``j = 1..i``.

    ``d`` is the universe after common elements were added and ``x2`` the far
    intersection in that universe; the density ``(x2/d)**(2**j)`` of a far
    intersection after ``j`` rounds does not depend on earlier sample sizes.
    The default uses the ``(1-gamma)**(2**j)`` denominator, the more
    conservative of the two forms; ``loose=True`` uses ``(1-gamma)**(2**j-2)``.

    Raises:
        CapacityError: if some ``s_j`` exceeds ``cap``.
    """
    if n < 2:
        raise ValidationError("sample sizes need n >= 2 (ln n > 0)")
    if not (0 < gamma < 1):
        raise ValidationError(f"gamma must lie in (0, 1), got {gamma}")
    if not (0 < x2 <= d):
        raise ValidationError(f"need 0 < x2 <= d, got x2={x2}, d={d}")
    ratio = math.log(d) - math.log(float(x2))
    sizes = []
    for j in range(1, i + 1):
        k = 2.0 ** j
        exponent = k - 2 if loose else k
        log_s = (math.log(30 * math.log(n)) + k * ratio
                 - 2 * math.log(gamma) - exponent * math.log1p(-gamma))
        if cap is not None and log_s > math.log(cap):
            raise CapacityError(f"sample size s_{j} = {math.exp(log_s):.3g} exceeds cap {cap}")
        sizes.append(max(1, math.ceil(math.exp(log_s))))
    return sizes


def epsilon_bound(delta: float, T: int, gamma: float) -> float:
    """Gap exponent ``eps = 1 - log(q^2) / log(q r)``.

    ``q = ((1-g)/(1+4g)) (delta/T + 1 - delta)`` and
    ``r = ((1+g)/(1-4g)) (delta/(2T) + 1 - delta)``; the number of squaring
    rounds cancels out, so ``i`` is not an argument.
    """
    _check_delta_T(delta, T)
    if not (0 <= gamma < delta / (20 * T)):
        raise ValidationError(f"gamma={gamma} must be below delta/(20T) = {delta / (20 * T)}")
    lo, hi = _envelope_factors(0, gamma)
    near, far = _near_far_ratios(delta, T)
    q, r = lo * near, hi * far
    if q * r >= 1 or q <= 0:
        raise ValidationError(f"degenerate gap: q*r = {q * r}")
    return 1 - 2 * math.log(q) / math.log(q * r)


@dataclass(frozen=True)
class ParamPlan:
    """All derived constants of one hardening run."""

    delta: float
    T: int
    m: int
    n: int
    j1: float
    j2: float
    gamma: float
    i: int
    alpha: float
    epsilon_bound: Optional[float]
    x2: Fraction
    sample_sizes: Tuple[int, ...]
    stage_thresholds: Dict[str, float]
    universe_bound: float
    ell_delta: int
    universe_after_common: int
    hardness_applies: bool
    gamma_source: str = "default"
    sample_size_rule: str = SAMPLE_RULE
    sample_sizes_loose: Tuple[int, ...] = ()
    base_thresholds: Tuple[Fraction, Fraction] = (Fraction(0), Fraction(0))
    rounds: int = 1
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def invariant_violations(self) -> List[str]:
        out = []
        st = self.stage_thresholds
        gamma_cap = min(1 / 2 ** (self.i + 1), self.delta / (20 * self.T))
        if not self.gamma < gamma_cap:
            out.append(f"gamma={self.gamma} not below min(1/2^(i+1), delta/(20T))={gamma_cap}")
        if self.i >= 1 and not check_gamma_inequalities(self.i, self.gamma):
            out.append(f"gamma inequalities fail at i={self.i}, gamma={self.gamma}")
        if abs(self.alpha - self.j1 / st["j1s"]) > 1e-12:
            out.append("alpha != j1 / j1s")
        if self.i >= 1:
            if not self.alpha >= st["j1s"]:
                out.append(f"alpha={self.alpha} < j1s={st['j1s']}")
        elif not self.alpha * st["j1s"] >= _j1s(self.delta, self.T, 1, self.gamma):
            out.append("i=0 is not maximal")
        if not self.alpha <= 1:
            out.append(f"alpha={self.alpha} > 1")
        if abs(st["j1a"] - self.j1) > 1e-12:
            out.append(f"j1a={st['j1a']} != j1={self.j1}")
        if not self.alpha * st["j2star"] > st["j2a"]:
            out.append("j2a >= alpha * j2star")
        for name, value in st.items():
            if not (0 < value < 1):
                out.append(f"{name}={value} outside (0, 1)")
        for hi, lo in (("j1d", "j2d"), ("j1s", "j2s"), ("j1a", "j2a")):
            if not st[lo] < st[hi]:
                out.append(f"{lo}={st[lo]} >= {hi}={st[hi]}")
        return out

    @property
    def sample_universes(self) -> Tuple[int, ...]:
        """Universe size entering each squaring round (``d, s_1, ..``)."""
        return (self.universe_after_common,) + tuple(self.sample_sizes[:-1])

    def to_dict(self) -> dict:
        raw = asdict(self)
        raw["x2"] = str(self.x2)
        raw["sample_sizes"] = list(self.sample_sizes)
        raw["sample_sizes_loose"] = list(self.sample_sizes_loose)
        raw["base_thresholds"] = [str(t) for t in self.base_thresholds]
        raw["notes"] = list(self.notes)
        return raw

    @classmethod
    def from_dict(cls, raw: dict) -> "ParamPlan":
        try:
            data = dict(raw)
            data["x2"] = Fraction(data["x2"])
            data["sample_sizes"] = tuple(int(s) for s in data["sample_sizes"])
            data["sample_sizes_loose"] = tuple(int(s) for s in data.get("sample_sizes_loose", ()))
            data["base_thresholds"] = tuple(Fraction(t) for t in data["base_thresholds"])
            data["stage_thresholds"] = {k: float(v) for k, v in data["stage_thresholds"].items()}
            data["notes"] = tuple(data.get("notes", ()))
            return cls(**data)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed plan: {exc}") from exc


def _default_gamma(i: int, delta: float, T: int) -> Tuple[float, bool]:
    gamma = 0.5 * min(1 / 2 ** (i + 1), delta / (20 * T))
    shrunk = False
    if i >= 1:
        while not check_gamma_inequalities(i, gamma):
            gamma /= 2
            shrunk = True
    return gamma, shrunk


def build_plan(delta: float, T: int, m: int, n: int, j1: float, j2: float, *,
               gamma: Optional[float] = None,
               sample_cap: Optional[int] = DEFAULT_SAMPLE_CAP) -> ParamPlan:
    """Run the whole planner for target thresholds ``j2 < j1 < 1 - delta``.

    By default ``gamma`` is half its admissible ceiling
    ``min(1/2^(i+1), delta/(20T))`` (halved further while the three gamma
    inequalities fail), and ``i``/``gamma`` are iterated to a fixed point.
    Passing ``gamma`` pins it instead; such plans are marked
    ``gamma_source="override"`` and may violate plan invariants, which
    :meth:`ParamPlan.invariant_violations` reports.

    ``hardness_applies`` reports whether ``j1 <= j2**(1 - eps)`` holds for the
    computed gap exponent.
    """
    _check_delta_T(delta, T)
    if T < 2 or int(m) != m or m < 1 or int(n) != n or n < 2:
        raise ValidationError("need T >= 2, m >= 1 and n >= 2")
    if not (0 < j2 < j1 < 1 - delta):
        raise ValidationError(f"need 0 < j2 < j1 < 1 - delta, got j2={j2}, j1={j1}, delta={delta}")
    T, m, n = int(T), int(m), int(n)
    notes = []
    rounds = 1
    if gamma is None:
        i, _ = choose_i_and_alpha(delta, T, 0.0, j1)
        for rounds in range(1, MAX_ROUNDS + 1):
            g, shrunk = _default_gamma(i, delta, T)
            i_new, alpha = choose_i_and_alpha(delta, T, g, j1)
            if i_new == i:
                gamma = g
                if shrunk:
                    notes.append("gamma halved until the gamma inequalities hold")
                break
            i = i_new
        else:
            raise ValidationError(f"i/gamma fixed point did not converge in {MAX_ROUNDS} rounds")
        source = "default"
    else:
        gamma = float(gamma)
        if not (0 < gamma < 0.25):
            raise ValidationError(f"gamma must lie in (0, 1/4), got {gamma}")
        i, alpha = choose_i_and_alpha(delta, T, gamma, j1)
        source = "override"

    j1d, j2d = stage_thresholds_after_g(delta, T)
    if i >= 1:
        j1s, j2s = stage_thresholds_after_f(delta, T, i, gamma)
        _, hi = _envelope_factors(i, gamma)
    else:
        j1s, j2s, hi = j1d, j2d, 1.0
    near, far = _near_far_ratios(delta, T)
    k = 2.0 ** i
    near_k, far_k = near ** k, far ** k
    j2a = hi * far_k / (1 / alpha + near_k - far_k)
    stage = {"j1d": j1d, "j2d": j2d, "j1s": j1s, "j2s": j2s,
             "j1a": alpha * j1s, "j2a": j2a, "j2star": hi * far_k}

    x2 = compute_x2(delta, T, m)
    ell_delta = math.ceil(T * m * (1 / as_fraction(delta) - 1))
    d_common = 2 * T * m + ell_delta
    sizes = compute_sample_sizes(gamma, i, x2, d_common, n, sample_cap)
    loose = compute_sample_sizes(gamma, i, x2, d_common, n, None, loose=True)
    last = sizes[-1] if sizes else d_common
    try:
        eps: Optional[float] = epsilon_bound(delta, T, gamma)
    except ValidationError:
        eps = None
    applies = (eps is not None and eps > 0 and gamma < delta / (20 * T)
               and j1 <= j2 ** (1 - eps))
    return ParamPlan(
        delta=float(delta), T=T, m=m, n=n, j1=float(j1), j2=float(j2),
        gamma=gamma, i=i, alpha=alpha, epsilon_bound=eps, x2=x2,
        sample_sizes=tuple(sizes), stage_thresholds=stage,
        universe_bound=last / alpha, ell_delta=ell_delta,
        universe_after_common=d_common, hardness_applies=applies,
        gamma_source=source, sample_sizes_loose=tuple(loose),
        base_thresholds=(Fraction(1, T), Fraction(1, 2 * T + 1)),
        rounds=rounds, notes=tuple(notes))


def universe_bound(plan: ParamPlan) -> float:
    """Upper bound ``s_i / alpha`` on the hardened instance's universe."""
    last = plan.sample_sizes[-1] if plan.sample_sizes else plan.universe_after_common
    return last / plan.alpha
