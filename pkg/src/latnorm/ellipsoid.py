"""M-ellipsoid construction: M-values, l-position, isomorphic symmetrization.

The output of ``build_m_ellipsoid`` is a linear map T such that T(K) is
covered well by Euclidean balls and vice versa (after the c_eps
blow-up), certified at desk scale by Monte Carlo volume ratios.  Round
bodies (lp balls, ellipsoids) take exact closed-form positions; general
bodies run the symmetrization loop, driving a sandwich-ratio
overestimate of the Banach-Mazur distance downward by intersecting and
hulling with balls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .bodies import (
    Ellipsoid,
    HullWithBall,
    IntersectionWithBall,
    LinearImage,
    LpBall,
    NormBody,
    SandwichRadii,
    Scaled,
    ball_radius,
    linear_image,
    minkowski_contains,
    sample_in_body,
)

__all__ = [
    "BodyPosition",
    "CoverReport",
    "MEllipsoidResult",
    "RandomCoverResult",
    "LoopDivergenceError",
    "PositionSolverResult",
    "estimate_m_value",
    "estimate_m_dual",
    "gaussian_lp_moment",
    "solve_l_position",
    "closed_form_position",
    "symmetrization_step",
    "build_m_ellipsoid",
    "certify_covering",
    "random_cover",
]


class LoopDivergenceError(RuntimeError):
    """The distance estimate increased; the M estimates are unreliable."""


# ----------------------------------------------------------------------
# M-value estimators


def estimate_m_value(body: NormBody, samples: int, rng: np.random.Generator
                     ) -> tuple[float, float]:
    """Monte Carlo E[||u||_K] over uniform sphere directions, with 3-sigma CI."""
    if samples < 10**3:
        raise ValueError("need at least 10^3 samples")
    u = rng.standard_normal((samples, body.dim))
    u /= np.linalg.norm(u, axis=1)[:, None]
    vals = np.atleast_1d(body.norm(u))
    return float(vals.mean()), float(3.0 * vals.std(ddof=1) / math.sqrt(samples))


def estimate_m_dual(body: NormBody, samples: int, rng: np.random.Generator
                    ) -> tuple[float, float]:
    """Monte Carlo E[h_K(u)] (the polar gauge) over uniform sphere directions."""
    if samples < 10**3:
        raise ValueError("need at least 10^3 samples")
    u = rng.standard_normal((samples, body.dim))
    u /= np.linalg.norm(u, axis=1)[:, None]
    vals = np.atleast_1d(body.support(u))
    return float(vals.mean()), float(3.0 * vals.std(ddof=1) / math.sqrt(samples))


# ----------------------------------------------------------------------
# the l-position convex program


def gaussian_lp_moment(p: float, n: int, rng: Optional[np.random.Generator] = None) -> float:
    """E_gaussian ||x||_p^2 -- closed forms for p in {1,2,inf}, SAA otherwise."""
    if p == 2.0:
        return float(n)
    if p == 1.0:
        return n * (1.0 - 2.0 / math.pi) + n * n * (2.0 / math.pi)
    if math.isinf(p):
        from scipy.stats import norm as _norm

        def tail(t):
            return 1.0 - (2.0 * _norm.cdf(math.sqrt(t)) - 1.0) ** n

        val, _ = integrate.quad(tail, 0.0, np.inf, limit=200)
        return float(val)
    r = rng if rng is not None else np.random.default_rng(1234)
    x = r.standard_normal((200000, n))
    return float((np.sum(np.abs(x) ** p, axis=1) ** (2.0 / p)).mean())


@dataclass(frozen=True)
class PositionSolverResult:
    T: np.ndarray              # program solution: max det among E||Tx||_K^2 <= 1
    objective: float           # log det T
    constraint: float          # sampled E||Tx||_K^2 (== 1 by normalization)
    stationarity: float        # projected-gradient norm at exit
    converged: bool
    iterations: int


def solve_l_position(body: NormBody, tol: float = 1e-3,
                     rng: Optional[np.random.Generator] = None,
                     samples: int = 20000, iters: int = 500) -> PositionSolverResult:
    """Solve max det(T) s.t. E_gaussian[||T x||_K^2] <= 1 over PD matrices.

    Uses a fixed common-random-numbers sample and ascends the
    scale-invariant objective log det T - (n/2) log g(T); the returned T
    is normalized so the sampled constraint is tight, hence feasible by
    construction.
    """
    n = body.dim
    r = rng if rng is not None else np.random.default_rng(0)
    X = r.standard_normal((samples, n))

    def g_and_vals(T):
        y = X @ T.T
        vals = np.atleast_1d(body.norm(y))
        return float(np.mean(vals ** 2)), y, vals

    def h(T):
        gval, _, _ = g_and_vals(T)
        sign, logdet = np.linalg.slogdet(T)
        return logdet - 0.5 * n * math.log(gval) if sign > 0 else -np.inf

    T = np.eye(n)
    step = 0.1
    floor = 1e-8
    h_cur = h(T)
    grad_norm = np.inf
    it = 0
    for it in range(1, iters + 1):
        gval, y, vals = g_and_vals(T)
        G = np.atleast_2d(body.grad_norm(y))
        D = (vals[:, None] * G).T @ X * (2.0 / samples)
        D = 0.5 * (D + D.T)
        grad = np.linalg.inv(T) - (0.5 * n / gval) * D
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < tol:
            break
        T_new = _project_pd(T + step * grad, floor)
        h_new = h(T_new)
        if h_new > h_cur:
            T, h_cur = T_new, h_new
            step *= 1.15
        else:
            step *= 0.5
            if step < 1e-12:
                break
    gval, _, _ = g_and_vals(T)
    T_out = T / math.sqrt(gval)
    return PositionSolverResult(T=T_out, objective=float(np.linalg.slogdet(T_out)[1]),
                                constraint=1.0, stationarity=grad_norm,
                                converged=grad_norm < 10 * tol, iterations=it)


def _project_pd(S: np.ndarray, floor: float) -> np.ndarray:
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    return (V * np.maximum(w, floor)) @ V.T


def closed_form_position(body: NormBody) -> Optional[np.ndarray]:
    """Exact position map P (body -> P(body)) for lp balls and ellipsoids.

    P is the inverse of the convex-program solution T: the positioned
    body P(K) is the one whose gauge is x -> ||T x||_K.
    """
    if isinstance(body, LpBall):
        m = gaussian_lp_moment(body.p, body.dim)
        return math.sqrt(m) * np.eye(body.dim)
    if isinstance(body, Ellipsoid):
        w, V = body._w, body._V
        inv_half = (V * (1.0 / np.sqrt(w))) @ V.T
        return math.sqrt(body.dim) * inv_half
    if isinstance(body, Scaled):
        inner = closed_form_position(body.base)
        return None if inner is None else inner / body.s
    return None


# ----------------------------------------------------------------------
# isomorphic symmetrization


@dataclass(frozen=True)
class BodyPosition:
    """One positioned iterate of the symmetrization loop."""

    body: NormBody             # positioned body S_j (composite in general)
    transform: np.ndarray      # position map applied at this step
    alpha: float
    distance_estimate: float   # sandwich-ratio overestimate of d(S_j, B2)
    m_value: float
    m_value_ci: float
    m_dual: float
    m_dual_ci: float


def _sandwich_ratio(body: NormBody) -> float:
    r, R = body.sandwich()
    return R / r


def _position_map(body: NormBody, rng: np.random.Generator,
                  solver_samples: int, solver_iters: int) -> np.ndarray:
    P = closed_form_position(body)
    if P is not None:
        return P
    res = solve_l_position(body, rng=rng, samples=solver_samples, iters=solver_iters)
    P_solver = np.linalg.inv(res.T)
    # any position is valid; keep the one with the better certified ratio
    # (the SAA solution can be slightly non-scalar on already-round bodies)
    if _sandwich_ratio(_positioned(body, P_solver)) < _sandwich_ratio(body):
        return P_solver
    return np.eye(body.dim)


def _positioned(body: NormBody, P: np.ndarray) -> NormBody:
    if P[0, 0] > 0 and np.allclose(P, P[0, 0] * np.eye(body.dim),
                                   atol=1e-14 * abs(P[0, 0])):
        return body.scaled(float(P[0, 0]))
    return linear_image(P, body)


def _make_position(body: NormBody, epsilon: float, rng: np.random.Generator,
                   m_samples: int, solver_samples: int, solver_iters: int
                   ) -> BodyPosition:
    P = _position_map(body, rng, solver_samples, solver_iters)
    S = _positioned(body, P)
    m, m_ci = estimate_m_value(S, m_samples, rng)
    md, md_ci = estimate_m_dual(S, m_samples, rng)
    r, R = S.sandwich()
    dist = R / r
    alpha = max(dist ** 0.25, epsilon ** -0.5)
    return BodyPosition(body=S, transform=P, alpha=alpha, distance_estimate=dist,
                        m_value=m, m_value_ci=m_ci, m_dual=md, m_dual_ci=md_ci)


def symmetrization_step(pos: BodyPosition, epsilon: float, rng: np.random.Generator,
                        m_samples: int = 4000, solver_samples: int = 1200,
                        solver_iters: int = 80) -> BodyPosition:
    """One body update: intersect with the M-dual ball, hull with the M ball.

    The next body is conv((S cap (M(S°)*alpha) B2) u (1/(M(S)*alpha)) B2),
    re-positioned; its distance estimate must not grow (beyond Monte
    Carlo tolerance), else the M estimates are flagged as unreliable.
    The estimate is an overestimate throughout, so clamping it to be
    non-increasing preserves validity.
    """
    R_int = pos.m_dual * pos.alpha
    r_hull = 1.0 / (pos.m_value * pos.alpha)
    composite = HullWithBall(IntersectionWithBall(pos.body, R_int), r_hull)
    nxt = _make_position(composite, epsilon, rng, m_samples, solver_samples, solver_iters)
    if nxt.distance_estimate > 1.05 * pos.distance_estimate:
        raise LoopDivergenceError(
            f"distance estimate grew {pos.distance_estimate:.4g} -> "
            f"{nxt.distance_estimate:.4g}; M estimates look unreliable")
    clamped = min(nxt.distance_estimate, pos.distance_estimate)
    if clamped != nxt.distance_estimate:
        nxt = BodyPosition(body=nxt.body, transform=nxt.transform,
                           alpha=max(clamped ** 0.25, epsilon ** -0.5),
                           distance_estimate=clamped,
                           m_value=nxt.m_value, m_value_ci=nxt.m_value_ci,
                           m_dual=nxt.m_dual, m_dual_ci=nxt.m_dual_ci)
    return nxt


# ----------------------------------------------------------------------
# certification


@dataclass(frozen=True)
class CoverReport:
    """Monte Carlo covering/volume certification."""

    volume_ratio_k_plus_b: float       # vol(A+B) / vol(B)
    volume_ratio_k_plus_b_ci: float
    volume_ratio_b_plus_ck: float      # vol(A+B) / vol(A)
    volume_ratio_b_plus_ck_ci: float
    roundness: Optional[SandwichRadii] = None
    cover_centers: Optional[np.ndarray] = None


def _volume_mc(contains: Callable[[np.ndarray], np.ndarray], halfwidth: float,
               dim: int, budget: int, rng: np.random.Generator) -> tuple[float, float]:
    hits = 0
    left = budget
    chunk = 65536
    while left > 0:
        m = min(chunk, left)
        left -= m
        X = rng.uniform(-halfwidth, halfwidth, size=(m, dim))
        hits += int(np.count_nonzero(contains(X)))
    p = hits / budget
    box = (2.0 * halfwidth) ** dim
    sigma = math.sqrt(max(p * (1.0 - p), 1e-12) / budget)
    return p * box, sigma * box


def certify_covering(bodyA: NormBody, bodyB: NormBody, budget: int,
                     rng: np.random.Generator) -> CoverReport:
    """Estimate vol(A+B)/vol(B) and vol(A+B)/vol(A) with 3-sigma CIs."""
    if bodyA.dim != bodyB.dim:
        raise ValueError("dimension mismatch")
    n = bodyA.dim
    hA = bodyA.sandwich().R
    hB = bodyB.sandwich().R
    vAB, sAB = _volume_mc(lambda X: np.atleast_1d(minkowski_contains(bodyA, bodyB, X)),
                          hA + hB, n, budget, rng)
    vA, sA = _volume_mc(lambda X: np.atleast_1d(bodyA.contains(X)), hA, n, budget, rng)
    vB, sB = _volume_mc(lambda X: np.atleast_1d(bodyB.contains(X)), hB, n, budget, rng)
    ratio_b = vAB / vB
    ci_b = 3.0 * ratio_b * math.sqrt((sAB / vAB) ** 2 + (sB / vB) ** 2)
    ratio_a = vAB / vA
    ci_a = 3.0 * ratio_a * math.sqrt((sAB / vAB) ** 2 + (sA / vA) ** 2)
    return CoverReport(volume_ratio_k_plus_b=ratio_b, volume_ratio_k_plus_b_ci=ci_b,
                       volume_ratio_b_plus_ck=ratio_a, volume_ratio_b_plus_ck_ci=ci_a)


@dataclass(frozen=True)
class RandomCoverResult:
    centers: np.ndarray
    miss_rate: float           # on fresh test points
    train_coverage: float


def random_cover(bodyA: NormBody, translate: NormBody, budget: int,
                 rng: np.random.Generator, coverage: float = 0.99,
                 center_cap: int = 4096) -> RandomCoverResult:
    """Marton-style random covering of A by translates of ``translate``.

    Candidate centers are drawn uniformly from A + translate (the origin
    is tried first) and kept when they cover an uncovered training
    point; the miss rate is then measured on fresh points.
    """
    train = np.atleast_2d(sample_in_body(bodyA, rng, size=budget))
    covered = np.zeros(len(train), dtype=bool)
    centers: list[np.ndarray] = []
    candidate = np.zeros(bodyA.dim)
    while covered.mean() < coverage and len(centers) < center_cap:
        newly = np.atleast_1d(translate.norm(train - candidate[None, :])) <= 1.0 + 1e-12
        if np.any(newly & ~covered):
            centers.append(candidate.copy())
            covered |= newly
        candidate = np.atleast_1d(sample_in_body(
            _sum_body_for_sampling(bodyA, translate), rng))
        if candidate.ndim > 1:
            candidate = candidate[0]
    fresh = np.atleast_2d(sample_in_body(bodyA, rng, size=budget))
    if centers:
        C = np.asarray(centers)
        miss = np.ones(len(fresh), dtype=bool)
        for c in C:
            miss &= np.atleast_1d(translate.norm(fresh - c[None, :])) > 1.0 + 1e-12
        miss_rate = float(miss.mean())
    else:
        miss_rate = 1.0
    return RandomCoverResult(centers=np.asarray(centers), miss_rate=miss_rate,
                             train_coverage=float(covered.mean()))


class _MinkowskiSumSampler(NormBody):
    """Sampling-only stand-in for A + B (membership via the split test)."""

    def __init__(self, a: NormBody, b: NormBody):
        self.a, self.b = a, b
        self.dim = a.dim

    def norm(self, x):
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        inside = np.atleast_1d(minkowski_contains(self.a, self.b, xs))
        out = np.where(inside, 0.5, 2.0)
        return out[0] if np.asarray(x).ndim == 1 else out

    def sandwich(self) -> SandwichRadii:
        ra, Ra = self.a.sandwich()
        rb, Rb = self.b.sandwich()
        return SandwichRadii(ra + rb, Ra + Rb)


def _sum_body_for_sampling(a: NormBody, b: NormBody) -> NormBody:
    return _MinkowskiSumSampler(a, b)


# ----------------------------------------------------------------------
# the full construction


@dataclass(frozen=True)
class MEllipsoidResult:
    T_eps: np.ndarray
    c_eps: float
    epsilon: float
    C: float
    iterations: list[BodyPosition]
    certification: CoverReport
    condition: float = field(default=1.0)


def build_m_ellipsoid(body: NormBody, epsilon: float, rng: np.random.Generator,
                      C: float = 2.0, stop_ratio: Optional[float] = None,
                      max_iters: Optional[int] = None, certify_budget: int = 20000,
                      use_fast_path: bool = True, m_samples: int = 4000,
                      solver_samples: int = 2000, solver_iters: int = 150
                      ) -> MEllipsoidResult:
    """Compute T_eps with c_eps = C^2 * eps^-4 per the symmetrization recipe.

    lp balls and ellipsoids take their closed-form position directly
    (iterations empty); other bodies loop until the sandwich-ratio
    distance estimate falls below the roundness threshold (C/eps)^2 or
    the iteration cap trips.
    """
    if not (0.0 < epsilon <= 1.0):
        raise ValueError("epsilon must lie in (0, 1]")
    n = body.dim
    threshold = stop_ratio if stop_ratio is not None else (C / epsilon) ** 2

    fast = use_fast_path and closed_form_position(body) is not None
    pos = _make_position(body, epsilon, rng, m_samples, solver_samples, solver_iters)
    iterations: list[BodyPosition] = []
    P_total = pos.transform
    if not fast:
        init_dist = max(pos.distance_estimate, 2.0)
        cap = max_iters if max_iters is not None else max(
            4, 2 * math.ceil(math.log2(max(2.0, math.log2(init_dist) -
                                           math.log2(max(threshold, 1.0)) + 2.0))) + 2)
        while pos.distance_estimate > threshold:
            if len(iterations) >= cap:
                raise LoopDivergenceError(
                    f"iteration cap {cap} exceeded; distance trajectory "
                    f"{[round(p.distance_estimate, 3) for p in iterations]}")
            iterations.append(pos)
            pos = symmetrization_step(pos, epsilon, rng, m_samples,
                                      solver_samples, solver_iters)
            P_total = pos.transform @ P_total

    # scale the final body to M ~= 1 so the roundness inclusions read off
    mu = pos.m_value
    final_body = pos.body.scaled(mu)
    P_total = mu * P_total
    r_f, R_f = final_body.sandwich()

    T_eps = (epsilon ** 2 / C) * P_total
    c_eps = C ** 2 * epsilon ** -4
    if certify_budget > 0:
        certA = (LinearImage(T_eps, body) if not _is_scalar(T_eps)
                 else body.scaled(abs(float(T_eps[0, 0]))))
        ball = LpBall(2.0, n)
        rep1 = certify_covering(certA, ball, certify_budget, rng)
        rep2 = certify_covering(ball, certA.scaled(c_eps), certify_budget, rng)
        cert = CoverReport(
            volume_ratio_k_plus_b=rep1.volume_ratio_k_plus_b,
            volume_ratio_k_plus_b_ci=rep1.volume_ratio_k_plus_b_ci,
            # vol(B2 + c*T(K)) / vol(c*T(K)): the ratio over the second argument
            volume_ratio_b_plus_ck=rep2.volume_ratio_k_plus_b,
            volume_ratio_b_plus_ck_ci=rep2.volume_ratio_k_plus_b_ci,
            roundness=SandwichRadii(r_f, R_f),
        )
    else:
        cert = CoverReport(volume_ratio_k_plus_b=math.nan,
                           volume_ratio_k_plus_b_ci=math.nan,
                           volume_ratio_b_plus_ck=math.nan,
                           volume_ratio_b_plus_ck_ci=math.nan,
                           roundness=SandwichRadii(r_f, R_f))
    return MEllipsoidResult(T_eps=T_eps, c_eps=c_eps, epsilon=epsilon, C=C,
                            iterations=iterations, certification=cert,
                            condition=float(np.linalg.cond(T_eps)))


def _is_scalar(T: np.ndarray) -> bool:
    return np.allclose(T, T[0, 0] * np.eye(T.shape[0]), atol=1e-13 * max(abs(T[0, 0]), 1e-30))
