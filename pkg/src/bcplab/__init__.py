"""Bichromatic Closest Pair under Jaccard similarity: solvers, reductions, planner, harness."""

from .core import (BcpInstance, DecisionOutcome, SparseSet, Thresholds, intersection_size,
                   make_sparse_set)
from .errors import CapacityError, UndefinedSimilarityError, ValidationError
from .exact import brute_force_decide, brute_force_max
from .generators import (GenSpec, audit_background, gen_ov, gen_planted, gen_random,
                         gen_rubinstein_shape, generate, ov_brute_check)
from .harness import (ExperimentReport, bench_scaling, estimate_collision_rate,
                      verify_envelope, verify_pipeline_equivalence)
from .io import read_instance, write_instance
from .minhash import LshParams, derive_lsh_params, lsh_decide, lsh_search, minhash_signature
from .plan import (ParamPlan, build_plan, check_gamma_inequalities, choose_i_and_alpha,
                   compute_sample_sizes, compute_x2, epsilon_bound, stage_thresholds_after_f,
                   stage_thresholds_after_g, subsample_size, universe_bound)
from .reductions import (ClassInstance, ReductionTrace, add_common, add_red, apply_sample,
                         draw_sample, harden_pipeline, jaccard_after_pure_squaring,
                         lemma43_envelope, square, square_and_sample)
from .similarity import braun_blanquet, hamming_distance, jaccard, jaccard_from_hamming

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
