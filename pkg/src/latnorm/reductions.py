"""The four headline pipelines: SVP via a CVP oracle (Euclidean or any
norm) with sparsification, and CVP via the sieve sampler with Kannan's
embedding.

All four share the same skeleton: position the norm bodies with the
M-ellipsoid transform, normalize scale with a geometric guessing grid,
randomize (sparsified cosets or perturbed targets), and read the answer
off stored vectors and their pairwise differences.  Coefficient vectors
are basis-invariant under the positioning map, so every stored vector is
certified exactly in coefficient arithmetic even though the geometry
runs in floats.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .bodies import (LinearImage, LpBall, NormBody, SectionBody, ball_radius,
                     cylinder_extend, sample_minkowski_sum)
from .ellipsoid import build_m_ellipsoid
from .lattice import (Basis, fast_lll, frac_inverse, frac_matrix, nearest_plane,
                      rank_reduce)
from .oracle import exact_cvp, exact_svp, float_gso
from .sieve import SieveConfig, SieveFailure, sample_with_retries
from .sparsify import next_prime, sparsify

__all__ = [
    "ReductionConfig",
    "ReductionResult",
    "guess_scalings",
    "kannan_embed",
    "svp_via_cvp2",
    "svp_via_cvpQ",
    "cvp_via_sieve2",
    "cvp_via_sieveQ",
    "make_exact_cvp_oracle",
]

Oracle = Callable[[Basis, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ReductionConfig:
    epsilon: float = 0.25
    repetition_budget: Optional[int] = None   # None: min(paper count, 2e4)
    p_min: int = 11
    scale_grid_ratio: Optional[float] = None  # None: 1 - 1/n
    grid_span: Optional[float] = None         # None: 2^n (grid spans [U/span, U])
    seed: int = 0
    outer_draws: int = 1
    pairs_per_draw: int = 24                  # sieve pairs per embedded target
    q_scale: Optional[float] = None           # None: c_eps = C^2 eps^-4
    ellipsoid_C: float = 2.0
    low_memory: bool = False
    compute_factor: bool = True               # exact-oracle factor when rank <= 6
    position_budget: int = 0                  # certification budget (0: skip)
    rational_tolerance: int = 10**6
    sieve_overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ReductionResult:
    mode: str
    vector: Optional[np.ndarray]        # embedding in the original space
    coeffs: Optional[np.ndarray]        # integer coefficients, original basis
    value: float                        # K-norm (SVP) / K-distance to t (CVP)
    achieved_factor: Optional[float]    # value / exact optimum when affordable
    gamma_realized: Optional[float]     # measured constant standing in for gamma_eps
    trace: list
    trace_digest: str
    failed: bool = False
    notes: dict = field(default_factory=dict)


def _digest(trace: list) -> str:
    blob = json.dumps(trace, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *key)))


def _rationalize(T: np.ndarray, tol: int) -> tuple[np.ndarray, np.ndarray]:
    """Rational approximation of a float matrix plus its float mirror."""
    out = np.empty(T.shape, dtype=object)
    for idx, v in np.ndenumerate(T):
        out[idx] = Fraction(float(v)).limit_denominator(tol)
    return out, out.astype(float)


def guess_scalings(basis: Basis, body: NormBody, ratio: Optional[float] = None,
                   span: Optional[float] = None) -> list[float]:
    """Geometric grid of candidate lambda_1 values from the LLL first vector.

    The grid descends from U = ||b_1||_K with the given ratio (default
    1 - 1/n) down to U/span (default span 2^n); some grid point ell has
    1 - 1/n <= lambda_1/ell <= 1.
    """
    red = fast_lll(basis)
    n = red.rank
    U = float(body.norm(red.as_float()[:, 0]))
    q = ratio if ratio is not None else 1.0 - 1.0 / n
    sp = span if span is not None else 2.0 ** n
    if not (0 < q < 1):
        raise ValueError("grid ratio must lie in (0,1)")
    count = max(1, math.ceil(math.log(sp) / math.log(1.0 / q)) + 1)
    return [U * q ** k for k in range(count)]


def kannan_embed(basis: Basis, target, height: Optional[Fraction] = None) -> Basis:
    """Append the target as an extra column with a small last coordinate.

    The embedded lattice has vectors (Bx + k*t, k*height); height
    defaults to 1/n.  Floats in the target are taken at their exact
    binary value, so last-coordinate arithmetic stays rational.
    """
    n = basis.rank
    d = basis.dim
    h = height if height is not None else Fraction(1, n)
    m = np.empty((d + 1, n + 1), dtype=object)
    m[:d, :n] = basis.matrix
    m[d, :n] = Fraction(0)
    for i, v in enumerate(np.asarray(target).ravel()):
        m[i, n] = v if isinstance(v, Fraction) else Fraction(float(v))
    m[d, n] = Fraction(h)
    return Basis(m)


def make_exact_cvp_oracle(body_factory: Callable[[int], NormBody]) -> Oracle:
    """Exact enumeration oracle: (basis, target) -> coefficient vector."""

    def oracle(basis: Basis, target: np.ndarray) -> np.ndarray:
        body = body_factory(basis.dim)
        return exact_cvp(basis, target, body, fast_preprocess=True).coeffs

    return oracle


# ----------------------------------------------------------------------
# SVP via a CVP oracle (sections 2.2 and A.1)


def _position_instance(basis: Basis, body: NormBody, epsilon: float, C: float,
                       budget: int, tol: int, rng: np.random.Generator
                       ) -> tuple[Basis, NormBody, np.ndarray, float]:
    res = build_m_ellipsoid(body, epsilon, rng, C=C, certify_budget=budget)
    T = res.T_eps
    n = T.shape[0]
    # a scalar T repositions nothing the scale grid would not absorb;
    # skipping it keeps integer bases integer (and the arithmetic cheap)
    if np.allclose(T, T[0, 0] * np.eye(n), atol=1e-12 * abs(T[0, 0])):
        from .lattice import frac_matrix
        return basis, body, frac_matrix(np.eye(n, dtype=object)), res.c_eps
    That, Tf = _rationalize(T, tol)
    basis_p = Basis(That @ basis.matrix, trusted=True)
    body_p = LinearImage(Tf, body)
    return basis_p, body_p, That, res.c_eps


def _full_rank_svp(basis: Basis, body: NormBody) -> tuple[Basis, NormBody]:
    if basis.dim == basis.rank:
        return basis, body
    rr = rank_reduce(basis, np.zeros(basis.dim), body)
    return rr.reduced_basis, SectionBody(body, rr.back_map)


def _svp_core(basis: Basis, bodyK: NormBody, bodyQ: NormBody, oracle: Oracle,
              config: ReductionConfig, mode: str) -> ReductionResult:
    basis, bodyK = _full_rank_svp(basis, bodyK)
    n = basis.rank
    eps = config.epsilon
    euclidean_q = ball_radius(bodyQ) is not None

    basis_p, Kp, _, c_eps = _position_instance(
        basis, bodyK, eps, config.ellipsoid_C, config.position_budget,
        config.rational_tolerance, _stream(config.seed, 1))

    if euclidean_q:
        Qp: NormBody = LpBall(2.0, n)
        q_scale = 1.0
        p_exponent = 3.0 * eps * n
        conj_oracle = oracle
    else:
        _, Qp, That_q, _ = _position_instance(
            basis, bodyQ, eps, config.ellipsoid_C, config.position_budget,
            config.rational_tolerance, _stream(config.seed, 2))
        q_scale = config.q_scale if config.q_scale is not None else c_eps
        p_exponent = 5.0 * eps * n
        Tq_inv = frac_inverse(That_q)
        Tq_inv_f = Tq_inv.astype(float)

        def conj_oracle(sub: Basis, tgt: np.ndarray) -> np.ndarray:
            # CVP in the positioned Q-norm equals CVP_Q on the pulled-back data
            return oracle(Basis(Tq_inv @ sub.matrix), Tq_inv_f @ tgt)

    p = next_prime(max(math.ceil(2.0 ** p_exponent), config.p_min))
    budget = config.repetition_budget
    if budget is None:
        budget = min(math.ceil(n * n * 2.0 ** (5.0 * eps * n)), 20000)
    grid = guess_scalings(basis_p, Kp, config.scale_grid_ratio, config.grid_span)
    bpf = basis_p.as_float()

    stored_coeffs: list[np.ndarray] = []
    trace: list = []
    best_pair: Optional[np.ndarray] = None
    for gi, ell in enumerate(grid):
        tK = Kp.scaled(ell)
        tQ = Qp.scaled(ell * q_scale)
        for draw in range(config.outer_draws):
            rng_d = _stream(config.seed, 17, gi, draw)
            t = np.atleast_1d(sample_minkowski_sum(tK, tQ, rng_d))
            t_l2 = float(np.linalg.norm(t))
            prev: Optional[np.ndarray] = None
            for rep in range(budget):
                coset = sparsify(basis_p, p, rng_d)
                tgt = t - coset.shift.astype(float)
                ans = conj_oracle(coset.sublattice_basis, tgt)
                coeffs = coset.sub_coeffs_to_ambient(ans) + coset.shift_coeffs
                emb = bpf @ coeffs
                d_oracle = float(np.linalg.norm(tgt - coset.sublattice_basis.as_float() @ ans))
                v_l2 = float(np.linalg.norm(emb))
                member = bool(coset.contains_coeffs(coeffs))
                gate = v_l2 <= d_oracle + t_l2 + 1e-6 * max(1.0, t_l2)
                trace.append({
                    "grid": gi, "draw": draw, "rep": rep, "p": p,
                    "z": [int(z) for z in coset.z], "c": int(coset.c),
                    "coeffs": [int(x) for x in coeffs],
                    "oracle_l2": d_oracle, "vector_l2": v_l2,
                    "coset_member": member, "length_gate": bool(gate),
                })
                if config.low_memory:
                    for cand in ([coeffs] if np.any(coeffs) else []) + (
                            [coeffs - prev] if prev is not None and np.any(coeffs - prev) else []):
                        if best_pair is None or _knorm(Kp, bpf, cand) < _knorm(Kp, bpf, best_pair):
                            best_pair = cand.copy()
                    prev = coeffs
                else:
                    stored_coeffs.append(coeffs)

    candidates: list[np.ndarray] = []
    if config.low_memory:
        if best_pair is not None:
            candidates.append(best_pair)
    else:
        candidates.extend(c for c in stored_coeffs if np.any(c))
        m = len(stored_coeffs)
        for i in range(m):
            for j in range(i + 1, m):
                dc = stored_coeffs[i] - stored_coeffs[j]
                if np.any(dc):
                    candidates.append(dc)

    mode_name = mode
    if not candidates:
        return ReductionResult(mode=mode_name, vector=None, coeffs=None,
                               value=math.inf, achieved_factor=None,
                               gamma_realized=None, trace=trace,
                               trace_digest=_digest(trace), failed=True,
                               notes={"reason": "all iterations produced zero"})

    cmat = np.asarray(candidates)
    vals = np.atleast_1d(Kp.norm(cmat @ bpf.T))
    k = int(np.argmin(vals))
    coeffs = cmat[k]
    bf0 = basis.as_float()
    vector = bf0 @ coeffs
    value = float(bodyK.norm(vector))

    factor = None
    if config.compute_factor and n <= 6:
        opt = exact_svp(basis, bodyK, fast_preprocess=True).value
        factor = value / opt
    return ReductionResult(mode=mode_name, vector=vector, coeffs=coeffs,
                           value=value, achieved_factor=factor,
                           gamma_realized=factor, trace=trace,
                           trace_digest=_digest(trace),
                           notes={"p": p, "budget": budget, "grid": grid,
                                  "q_scale": q_scale})


def _knorm(body: NormBody, bf: np.ndarray, coeffs: np.ndarray) -> float:
    return float(body.norm(bf @ coeffs))


def svp_via_cvp2(basis: Basis, bodyK: NormBody, config: ReductionConfig,
                 cvp2_oracle: Oracle) -> ReductionResult:
    """Approximate SVP in the K gauge through an (exact or alpha-approximate)
    Euclidean-CVP oracle, via M-ellipsoid positioning and sparsification."""
    return _svp_core(basis, bodyK, LpBall(2.0, basis.rank), cvp2_oracle,
                     config, "svp-cvp2")


def svp_via_cvpQ(basis: Basis, bodyK: NormBody, bodyQ: NormBody,
                 config: ReductionConfig, cvpQ_oracle: Oracle) -> ReductionResult:
    """SVP_K through a CVP oracle for an arbitrary norm Q.

    A Euclidean Q specializes exactly to the svp_via_cvp2 pipeline (same
    prime size, unit sampling radius), reproducing its traces bit for
    bit on shared seeds.
    """
    mode = "svp-cvp2" if ball_radius(bodyQ) is not None else "svp-cvpQ"
    return _svp_core(basis, bodyK, bodyQ, cvpQ_oracle, config, mode)


# ----------------------------------------------------------------------
# CVP via the sieve sampler (section 3 and A.2)


def _cvp_core(basis: Basis, target, bodyK: NormBody, bodyQ: Optional[NormBody],
              config: ReductionConfig) -> ReductionResult:
    t_orig = np.asarray(target, dtype=float)
    rr = rank_reduce(basis, t_orig, bodyK,
                     rational_tolerance=config.rational_tolerance)
    work_basis = rr.reduced_basis
    work_body: NormBody = SectionBody(bodyK, rr.back_map) if basis.dim != basis.rank else bodyK
    if basis.dim == basis.rank:
        work_basis = basis
        t_work = t_orig
    else:
        t_work = rr.reduced_target
    n = work_basis.rank
    eps = config.epsilon

    basis_p, Kp, That_k, c_eps = _position_instance(
        work_basis, work_body, eps, config.ellipsoid_C, config.position_budget,
        config.rational_tolerance, _stream(config.seed, 1))
    t_p = That_k.astype(float) @ t_work

    euclidean_q = bodyQ is None or ball_radius(bodyQ) is not None
    if euclidean_q:
        sieve_base: NormBody = LpBall(2.0, n + 1)
        q_scale = 1.0
        translate_q: NormBody = LpBall(2.0, n)
    else:
        _, Qp, _, _ = _position_instance(
            work_basis, bodyQ, eps, config.ellipsoid_C, config.position_budget,
            config.rational_tolerance, _stream(config.seed, 2))
        q_scale = config.q_scale if config.q_scale is not None else c_eps
        sieve_base = cylinder_extend(Qp)
        translate_q = Qp

    bpf = basis_p.as_float()
    bstar, mu, norms_sq = float_gso(bpf)
    bx = nearest_plane(bpf, (bstar, mu, norms_sq), t_p)
    babai_dist = float(Kp.norm(t_p - bpf @ bx))
    floor = float(np.sqrt(norms_sq.min())) / (2.0 ** n * Kp.sandwich().R)
    U = max(babai_dist, floor)
    q = config.scale_grid_ratio if config.scale_grid_ratio is not None else 1.0 - 1.0 / n
    sp = config.grid_span if config.grid_span is not None else 2.0 ** n
    count = max(1, math.ceil(math.log(sp) / math.log(1.0 / q)) + 1)
    grid = [U * q ** k for k in range(count)]

    R_sieve = (1.0 + 1.0 / n) * max(q_scale, 1.0)
    trace: list = []
    best: Optional[tuple[float, np.ndarray]] = None
    accepted_total = 0
    for gi, ell in enumerate(grid):
        tK = Kp.scaled(ell)
        tQ = translate_q.scaled(ell * max(q_scale, 1.0))
        for draw in range(config.outer_draws):
            rng_d = _stream(config.seed, 23, gi, draw)
            t_tilde = t_p + np.atleast_1d(sample_minkowski_sum(tK, tQ, rng_d))
            emb = kannan_embed(_exact_scaled(basis_p, ell), t_tilde / ell)
            seed_i = int(np.random.SeedSequence((config.seed, 29, gi, draw)).generate_state(1)[0])
            scfg = SieveConfig(R=R_sieve, N=2 * config.pairs_per_draw, seed=seed_i,
                               epsilon=eps, **config.sieve_overrides)
            try:
                samples, _ = sample_with_retries(emb, sieve_base, scfg)
            except SieveFailure as err:
                trace.append({"grid": gi, "draw": draw, "sieve_failed": str(err)})
                continue
            for pi in range(config.pairs_per_draw):
                s1, s2 = samples[2 * pi], samples[2 * pi + 1]
                dk = int(s1.coeffs[n] - s2.coeffs[n])
                if abs(dk) != 1:
                    continue
                dc = (s1.coeffs - s2.coeffs) * dk
                cand = -dc[:n].astype(np.int64)
                dist = float(Kp.norm(t_p - bpf @ cand))
                accepted_total += 1
                trace.append({
                    "grid": gi, "draw": draw, "pair": pi,
                    "last_coeff_delta": dk,
                    "last_coordinate": f"{dk}/{n}",
                    "cand": [int(x) for x in cand],
                    "k_dist": dist,
                })
                if best is None or dist < best[0]:
                    best = (dist, cand)

    if best is None:
        return ReductionResult(
            mode="cvp-sieveQ" if not euclidean_q else "cvp-sieve2",
            vector=None, coeffs=None, value=math.inf, achieved_factor=None,
            gamma_realized=None, trace=trace, trace_digest=_digest(trace),
            failed=True, notes={"reason": "no accepted Kannan pair"})

    coeffs = best[1]
    vector = basis.as_float() @ coeffs
    value = float(bodyK.norm(t_orig - vector))
    factor = None
    if config.compute_factor and n <= 6 and rr.in_span:
        opt = exact_cvp(work_basis, t_work, work_body, fast_preprocess=True).value
        if opt > 1e-12:
            factor = float(work_body.norm(t_work - work_basis.as_float() @ coeffs)) / opt
    return ReductionResult(
        mode="cvp-sieveQ" if not euclidean_q else "cvp-sieve2",
        vector=vector, coeffs=coeffs, value=value, achieved_factor=factor,
        gamma_realized=factor, trace=trace, trace_digest=_digest(trace),
        notes={"grid": grid, "babai_dist": babai_dist,
               "accepted_pairs": accepted_total, "q_scale": q_scale,
               "approx_penalty": rr.approx_penalty()})


def _exact_scaled(basis: Basis, ell: float) -> Basis:
    return basis.scale(Fraction(1) / Fraction(float(ell)))


def cvp_via_sieve2(basis: Basis, target, bodyK: NormBody,
                   config: ReductionConfig) -> ReductionResult:
    """Approximate CVP in the K gauge via the Euclidean sieve sampler and
    Kannan embedding; accepted sample pairs differ by exactly one unit in
    the embedded coordinate."""
    return _cvp_core(basis, target, bodyK, None, config)


def cvp_via_sieveQ(basis: Basis, target, bodyK: NormBody, bodyQ: NormBody,
                   config: ReductionConfig) -> ReductionResult:
    """CVP_K via a sieve running in the cylinder extension of an arbitrary
    norm Q (Euclidean Q falls back to the ball sampler)."""
    return _cvp_core(basis, target, bodyK, bodyQ, config)
