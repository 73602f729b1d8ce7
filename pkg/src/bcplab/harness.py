"""Experiments that certify the reductions' guarantees and the solvers' scaling."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ._parallel import derive_seed
from .core import Thresholds, as_fraction
from .errors import ValidationError
from .exact import brute_force_decide
from .generators import gen_planted, gen_rubinstein_shape
from .minhash import derive_lsh_params, element_hash, hash_keys, lsh_search
from .plan import ParamPlan, check_gamma_inequalities
from .reductions import ClassInstance, envelope_factors, harden_pipeline, sample_seed

log = logging.getLogger(__name__)


@dataclass
class ExperimentReport:
    """Outcome of one experiment; ``config`` is enough to rerun it."""

    experiment: str
    config: dict
    trials: int
    metrics: Dict[str, object] = field(default_factory=dict)
    passed: bool = False

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "config": self.config, "trials": self.trials,
                "metrics": self.metrics, "pass": self.passed}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), default=str, **kw)

    def to_csv(self) -> str:
        """Flat ``experiment,metric,value`` rows; list metrics get one row per entry."""
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["experiment", "metric", "value"])
        for key, value in self.metrics.items():
            if isinstance(value, (list, tuple)):
                for idx, v in enumerate(value):
                    w.writerow([self.experiment, f"{key}[{idx}]", v])
            elif isinstance(value, dict):
                for sub, v in value.items():
                    w.writerow([self.experiment, f"{key}.{sub}", v])
            else:
                w.writerow([self.experiment, key, value])
        w.writerow([self.experiment, "pass", self.passed])
        return buf.getvalue()


# --------------------------------------------------------------------------
# envelope

def _envelope_trial(plan: ParamPlan, n: int, seed: int, sample_scale: float,
                    full_enumeration: bool, background: str) -> tuple:
    inst, _ = gen_rubinstein_shape(n, plan.T, plan.m, True, derive_seed(seed, "inst"),
                                   background)
    ci = ClassInstance.from_instance(inst).add_common(plan.ell_delta)
    x = ci.cross_intersections()
    y = ci.red_sizes()[:, None]
    z = ci.blue_sizes()[None, :]
    i = plan.i
    if full_enumeration:
        if i != 1:
            raise ValidationError("the full-enumeration control needs i = 1")
        out = ci.full_square(track=False)
    else:
        out = ci
        for j, s in enumerate(plan.sample_sizes, start=1):
            s = max(1, int(math.ceil(s * sample_scale)))
            out = out.square_and_sample(s, sample_seed(seed, j), track=j < i)
    xs = out.cross_intersections().astype(np.float64)
    with np.errstate(invalid="ignore"):
        # both sampled sets empty gives 0/0, counted as a violation below
        j_after = xs / (out.red_sizes()[:, None] + out.blue_sizes()[None, :] - xs)
    k = 2 ** i
    xf, yf, zf = (v.astype(np.float64) for v in (x, y, z))
    # (x/y)^k etc. keeps the pure-squaring value finite for large k
    e = (xf / yf) ** k / (1 + (zf / yf) ** k - (xf / yf) ** k)
    lo, hi = envelope_factors(i, 0.0 if full_enumeration else plan.gamma)
    slack = 1e-12
    bad = ~np.isfinite(j_after) | (j_after < lo * e * (1 - slack)) | (j_after > hi * e * (1 + slack))
    return int(np.count_nonzero(bad)), int(bad.size)


def verify_envelope(plan: ParamPlan, n: int, trials: int, seed: int, *,
                    tolerance: float = 0.01, sample_scale: float = 1.0,
                    full_enumeration: bool = False,
                    background: str = "uniform") -> ExperimentReport:
    """Fraction of (trial, pair) Jaccard values outside the sampling envelope.

    Each trial draws a planted base instance of the plan's shape, adds the
    plan's common elements and runs the plan's squaring-and-sampling rounds.
    The envelope is centred on the pure-squaring value of each pair's
    intersection and sizes as they enter the squaring rounds. The report only
    passes when the gamma inequalities hold for ``(plan.i, plan.gamma)``,
    since the envelope is not claimed otherwise.

    Args:
        sample_scale: multiplies every sample size (negative controls use < 1).
        full_enumeration: replace sampling by the full squared universe (needs
            ``i == 1``); the envelope then has zero width.
    """
    if n > 512:
        raise ValidationError("verify_envelope runs brute force; keep n <= 512")
    config = {"plan": plan.to_dict(), "n": n, "trials": trials, "seed": seed,
              "tolerance": tolerance, "sample_scale": sample_scale,
              "full_enumeration": full_enumeration, "background": background}
    bad = total = 0
    for t in range(trials):
        b, c = _envelope_trial(plan, n, derive_seed(seed, "trial", t), sample_scale,
                               full_enumeration, background)
        bad += b
        total += c
    rate = bad / total if total else 0.0
    gate = full_enumeration or (0 < plan.gamma < 0.25 and plan.i >= 1
                                and check_gamma_inequalities(plan.i, plan.gamma))
    return ExperimentReport("envelope", config, trials,
                            {"violation_rate": rate, "violations": bad, "pairs": total,
                             "gamma_gate": bool(gate)},
                            rate <= tolerance and gate)


# --------------------------------------------------------------------------
# pipeline equivalence

def verify_pipeline_equivalence(plan: ParamPlan, n: int, trials: int, seed: int, *,
                                tolerance: float = 0.02,
                                background: str = "far") -> ExperimentReport:
    """Agreement of brute-force verdicts before and after hardening.

    Every trial checks one planted and one unplanted base instance. The
    original is decided at ``(1/T, 1/(2T+1))``, the hardened one at
    ``(plan.j1, j2a)``. The default ``"far"`` background keeps every
    non-planted pair strictly below the base far threshold, so the base
    verdicts are exact.
    """
    if n > 256:
        raise ValidationError("verify_pipeline_equivalence runs brute force; keep n <= 256")
    if plan.n < n:
        raise ValidationError(f"plan was built for n={plan.n} < {n}")
    base = Thresholds(plan.base_thresholds[0], plan.base_thresholds[1])
    st = plan.stage_thresholds
    reduced = Thresholds(as_fraction(plan.j1), as_fraction(st["j2a"]))
    config = {"plan": plan.to_dict(), "n": n, "trials": trials, "seed": seed,
              "tolerance": tolerance, "background": background}
    agree = {True: 0, False: 0}
    found = {True: 0, False: 0}
    trace_ok = True
    for t in range(trials):
        for planted in (True, False):
            iseed = derive_seed(seed, "trial", t, int(planted))
            inst, _ = gen_rubinstein_shape(n, plan.T, plan.m, planted, iseed, background)
            before = brute_force_decide(inst, base).is_found
            hard, trace = harden_pipeline(inst, plan, derive_seed(iseed, "pipeline"),
                                          materialize=False)
            after = brute_force_decide(hard, reduced).is_found
            agree[planted] += before == after
            found[planted] += after
            trace_ok &= trace.final_thresholds == (st["j1a"], st["j2a"]) and not trace.violations()
    total = 2 * trials
    rate = (agree[True] + agree[False]) / total if total else 1.0
    metrics = {"agreement_rate": rate,
               "planted_agreement": agree[True] / trials if trials else 1.0,
               "unplanted_agreement": agree[False] / trials if trials else 1.0,
               "planted_found_after": found[True], "unplanted_found_after": found[False],
               "trace_consistent": bool(trace_ok)}
    return ExperimentReport("pipeline", config, trials, metrics,
                            rate >= 1 - tolerance and trace_ok)


# --------------------------------------------------------------------------
# MinHash collisions

def realize_jaccard(j: float, max_denominator: int = 64) -> tuple:
    """Small ``(x, y, z)`` with ``x / (y + z - x) == j`` exactly (``y == z``)."""
    frac = Fraction(j).limit_denominator(max_denominator)
    if abs(float(frac) - float(j)) > 1e-12 or not (0 <= frac <= 1):
        raise ValidationError(f"{j} is not a small rational in [0, 1]")
    p, q = frac.numerator, frac.denominator
    if p == 0:
        return 0, 1, 1
    # x/(2y - x) = p/q  with  x = 2p, y = p + q
    return 2 * p, p + q, p + q


def _collision_rate(j: float, k: int, trials: int, seed: int) -> tuple:
    x, y, z = realize_jaccard(j)
    a = np.arange(y, dtype=np.uint64)
    b = np.arange(y - x, y - x + z, dtype=np.uint64)
    hits = np.ones(trials, dtype=bool)
    reps = np.arange(trials, dtype=np.uint64)
    for t in range(k):
        keys = hash_keys(seed, reps, t)
        ha = element_hash(0, a[None, :] ^ keys[:, None]).min(axis=1)
        hb = element_hash(0, b[None, :] ^ keys[:, None]).min(axis=1)
        hits &= ha == hb
    return int(hits.sum()), Fraction(x, y + z - x)


def estimate_collision_rate(j_values: Sequence[float], k: int, trials: int, seed: int,
                            sigmas: float = 3.0) -> ExperimentReport:
    """Empirical probability that all ``k`` MinHash components of a pair agree.

    One repetition index per trial; the band is ``sigmas`` binomial standard
    deviations around ``j**k`` (exact equality when ``j`` is 0 or 1).
    """
    if k < 1 or trials < 1:
        raise ValidationError("need k >= 1 and trials >= 1")
    rows = []
    ok = True
    for j in j_values:
        hits, exact = _collision_rate(j, k, trials, seed)
        p = float(exact) ** k
        rate = hits / trials
        band = sigmas * math.sqrt(p * (1 - p) / trials)
        within = abs(rate - p) <= band
        ok &= within
        rows.append({"j": float(exact), "k": k, "expected": p, "rate": rate,
                     "band": band, "within": bool(within)})
    config = {"j_values": list(map(float, j_values)), "k": k, "trials": trials,
              "seed": seed, "sigmas": sigmas}
    return ExperimentReport("collisions", config, trials,
                            {"rows": rows, "collision_rate": [r["rate"] for r in rows]}, ok)


# --------------------------------------------------------------------------
# scaling

TIMER_FLOOR = 1e-4


def _bench_instance(n: int, seed: int):
    # planted pair at J = 7/13 above any j1 <= 0.5; background sets of 8..12 ids
    return gen_planted(n, 256, 10, 7, seed, size_hi=12)[0]


def _fit_slope(ns: Sequence[int], times: Sequence[float]) -> float:
    lx, ly = np.log(np.asarray(ns, float)), np.log(np.asarray(times, float))
    return float(np.polyfit(lx, ly, 1)[0])


def bench_scaling(solver: str, n_list: Sequence[int], th: Thresholds, eta: float, seed: int, *,
                  runs: int = 5, workers: int = 1,
                  clock: Callable[[], float] = time.perf_counter) -> ExperimentReport:
    """Median wall-clock time per ``n`` and the log-log slope.

    Pass bands: brute slope in ``[1.8, 2.2]``; LSH slope ``<= 2 - (1 - rho)/2``.
    BLAS threads are pinned to ``workers`` while timing.
    """
    from threadpoolctl import threadpool_limits

    if solver not in ("brute", "lsh"):
        raise ValidationError(f"unknown solver {solver!r}")
    n_list = [int(v) for v in n_list]
    if len(n_list) < 4 or n_list != sorted(n_list):
        raise ValidationError("n_list must be ascending with at least 4 points")
    if runs < 5:
        raise ValidationError("need at least 5 timed runs per point")
    medians, counts, kept, deterministic = [], [], [], True
    rho = None
    with threadpool_limits(limits=workers):
        for n in n_list:
            inst = _bench_instance(n, derive_seed(seed, "bench", n))
            if solver == "brute":
                def run():
                    return brute_force_decide(inst, th, workers=workers), None
            else:
                params = derive_lsh_params(n, th, eta, derive_seed(seed, "lsh", n))
                rho = params.rho

                def run():
                    res = lsh_search(inst, th, params, workers)
                    return res.outcome, (res.repetitions, res.verified)
            run()  # warm-up, discarded
            samples, seen = [], set()
            for _ in range(runs):
                t0 = clock()
                _, cnt = run()
                samples.append(clock() - t0)
                seen.add(cnt)
            deterministic &= len(seen) == 1
            med = float(np.median(samples))
            counts.append(None if solver == "brute" else list(next(iter(seen))))
            if med < TIMER_FLOOR:
                log.warning("n=%d: median %.2e s below timer floor; point dropped", n, med)
                continue
            kept.append(n)
            medians.append(med)
    slope = _fit_slope(kept, medians) if len(kept) >= 2 else float("nan")
    if solver == "brute":
        ok = 1.8 <= slope <= 2.2
        bound = None
    else:
        bound = 2 - (1 - rho) / 2
        ok = slope <= bound
    metrics = {"slope": slope, "n": kept, "runtimes": medians, "counts": counts,
               "deterministic_counts": deterministic, "slope_bound": bound, "rho": rho}
    config = {"solver": solver, "n_list": n_list, "thresholds": th.to_dict(), "eta": eta,
              "seed": seed, "runs": runs, "workers": workers}
    return ExperimentReport("bench", config, len(n_list) * runs, metrics, bool(ok and deterministic))
