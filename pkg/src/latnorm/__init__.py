"""latnorm: constant-factor SVP/CVP approximation in arbitrary norms.

Covering-based reductions to Euclidean (or any-norm) CVP oracles,
lattice sparsification, perturbation sieve samplers, and an algorithmic
M-ellipsoid construction, with exact enumeration oracles for
verification at desk scale.
"""

from .lattice import (Basis, GsoData, RankDeficiencyError, RankReduction,
                      fast_lll, gram_schmidt, hermite_normal_form, lll_reduce,
                      rank_reduce)
from .bodies import (Cylinder, Ellipsoid, KissingEstimate, LinearImage, LpBall,
                     NormBody, Polytope, SandwichRadii, Scaled, SectionBody,
                     body_from_json, body_to_json, cylinder_extend,
                     estimate_kissing_variant, minkowski_contains,
                     sample_in_body, sample_minkowski_sum)
from .oracle import BudgetExceededError, EnumerationResult, exact_cvp, exact_svp
from .sparsify import (SparsifiedCoset, is_prime, next_prime, retention_bound,
                       sparsify)
from .sieve import (SieveConfig, SieveDiagnostics, SieveFailure, SieveSample,
                    SieveSizingError, sample_with_retries, sieve_sampler,
                    svp_approx)
from .ellipsoid import (BodyPosition, CoverReport, LoopDivergenceError,
                        MEllipsoidResult, RandomCoverResult, build_m_ellipsoid,
                        certify_covering, estimate_m_dual, estimate_m_value,
                        random_cover, solve_l_position, symmetrization_step)
from .reductions import (ReductionConfig, ReductionResult, cvp_via_sieve2,
                         cvp_via_sieveQ, guess_scalings, kannan_embed,
                         make_exact_cvp_oracle, svp_via_cvp2, svp_via_cvpQ)
from .harness import (ExperimentConfig, InstanceSpec, generate_instance,
                      instance_from_json, instance_to_json, run_suite,
                      write_report)

__version__ = "0.1.0"
