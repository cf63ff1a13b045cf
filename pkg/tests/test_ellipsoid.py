"""M-values, l-position, symmetrization, covering certification."""

import math

import numpy as np
import pytest
from scipy import integrate

from latnorm.bodies import Ellipsoid, LinearImage, LpBall, Polytope
from latnorm.ellipsoid import (LoopDivergenceError, build_m_ellipsoid,
                               certify_covering, estimate_m_dual,
                               estimate_m_value, gaussian_lp_moment,
                               random_cover, solve_l_position,
                               symmetrization_step)
from latnorm.ellipsoid import _make_position

L1_SQUARE = Polytope([[1, 1], [1, -1], [-1, 1], [-1, -1]], [1, 1, 1, 1])


def test_m_value_ball_and_scaling(rng):
    m, ci = estimate_m_value(LpBall(2.0, 5), 2000, rng)
    assert m == pytest.approx(1.0, abs=1e-12) and ci <= 1e-12
    m2, _ = estimate_m_value(LpBall(2.0, 5).scaled(2.0), 2000, rng)
    assert m2 == pytest.approx(0.5, abs=1e-12)


def test_m_value_linf_closed_form(rng):
    # E max(|cos|,|sin|) = 2*sqrt(2)/pi over the circle
    m, ci = estimate_m_value(LpBall(np.inf, 2), 10**5, rng)
    assert abs(m - 2 * math.sqrt(2) / math.pi) <= ci


def test_m_dual_closed_forms(rng):
    m, ci = estimate_m_dual(LpBall(2.0, 4), 2000, rng)
    assert m == pytest.approx(1.0, abs=1e-12)
    md, cid = estimate_m_dual(LpBall(np.inf, 2), 10**5, rng)
    assert abs(md - 4 / math.pi) <= cid


def test_m_dual_ellipsoid_quadrature_oracle(rng):
    body = Ellipsoid(np.diag([4.0, 1.0]))
    expect = integrate.quad(
        lambda th: math.sqrt(4 * math.cos(th) ** 2 + math.sin(th) ** 2),
        0, 2 * math.pi)[0] / (2 * math.pi)
    md, ci = estimate_m_dual(body, 10**5, rng)
    assert abs(md - expect) <= ci


def test_m_value_requires_samples(rng):
    with pytest.raises(ValueError):
        estimate_m_value(LpBall(2.0, 2), 10, rng)


def test_gaussian_moments_closed_forms():
    assert gaussian_lp_moment(2.0, 7) == 7.0
    assert gaussian_lp_moment(1.0, 2) == pytest.approx(2 * (1 - 2 / math.pi) + 4 * (2 / math.pi))
    # E max(X^2, Y^2) = 1 + 2/pi for two standard normals
    assert gaussian_lp_moment(np.inf, 2) == pytest.approx(1 + 2 / math.pi, rel=1e-9)


def test_l_position_ball():
    tol = 1e-3
    res = solve_l_position(LpBall(2.0, 3), tol=tol,
                           rng=np.random.default_rng(1), samples=20000, iters=500)
    assert np.linalg.norm(res.T - np.eye(3) / math.sqrt(3)) <= 10 * tol
    assert res.constraint <= 1 + tol


def test_l_position_diag_ellipsoid():
    # separable closed form: T = A^{1/2}/sqrt(n)
    A = np.diag([4.0, 1.0])
    res = solve_l_position(Ellipsoid(A), tol=1e-3,
                           rng=np.random.default_rng(2), samples=20000, iters=500)
    expect = np.diag([2.0, 1.0]) / math.sqrt(2)
    assert np.linalg.norm(res.T - expect) <= 2e-2


def test_l_position_feasible_on_fresh_samples():
    res = solve_l_position(LpBall(1.0, 3), tol=1e-3,
                           rng=np.random.default_rng(3), samples=8000, iters=300)
    x = np.random.default_rng(99).standard_normal((20000, 3))
    g = float(np.mean(np.asarray(LpBall(1.0, 3).norm(x @ res.T.T)) ** 2))
    assert g <= 1.0 + 0.05  # fresh-sample feasibility up to SAA noise


def test_symmetrization_ball_fixed_point():
    rng = np.random.default_rng(4)
    pos = _make_position(LpBall(2.0, 3), 0.25, rng, 4000, 1200, 80)
    assert pos.distance_estimate == pytest.approx(1.0, rel=1e-9)
    assert pos.alpha == pytest.approx(0.25 ** -0.5)
    nxt = symmetrization_step(pos, 0.25, rng)
    assert nxt.distance_estimate == pytest.approx(1.0, rel=1e-6)


def test_symmetrization_step_linf_exact_m_geometry():
    # at eps = 1 the alpha floor is inactive, so the step uses alpha = d^{1/4}
    # with d = sqrt(2); with exact M values the composite radii are
    # M_dual*alpha (cut) and 1/(M*alpha) (fill), tightening sqrt(2) to ~1.362
    rng = np.random.default_rng(11)
    pos = _make_position(LpBall(np.inf, 2), 1.0, rng, 4000, 1200, 80)
    s = math.sqrt(1 + 2 / math.pi)            # closed-form position scaling
    M_exact = (2 * math.sqrt(2) / math.pi) / s
    Md_exact = (4 / math.pi) * s
    assert pos.m_value == pytest.approx(M_exact, rel=0.01)
    assert pos.m_dual == pytest.approx(Md_exact, rel=0.01)
    assert pos.distance_estimate == pytest.approx(math.sqrt(2), rel=1e-9)
    alpha = math.sqrt(2) ** 0.25
    r_cut = Md_exact * alpha
    r_fill = 1 / (M_exact * alpha)
    expect_ratio = min(r_cut, math.sqrt(2) * s) / max(r_fill, s)
    nxt = symmetrization_step(pos, 1.0, rng)
    assert nxt.distance_estimate == pytest.approx(expect_ratio, rel=0.02)
    assert nxt.distance_estimate < pos.distance_estimate


def test_build_ball_identity():
    res = build_m_ellipsoid(LpBall(2.0, 8), 0.25, np.random.default_rng(5),
                            certify_budget=4000)
    off = res.T_eps - np.diag(np.diag(res.T_eps))
    assert np.max(np.abs(off)) <= 1e-6
    assert res.T_eps[0, 0] == pytest.approx(0.25 ** 2 / 2.0, rel=1e-9)
    assert res.iterations == []
    assert res.c_eps == pytest.approx(2.0 ** 2 * 0.25 ** -4)


def test_build_ellipsoid_closed_form():
    A = np.diag([9.0, 1.0, 0.25])
    res = build_m_ellipsoid(Ellipsoid(A), 0.25, np.random.default_rng(6),
                            certify_budget=4000)
    # T_eps proportional to A^{-1/2}: T_eps @ A^{1/2} is a scalar matrix
    prod = res.T_eps @ np.diag(np.sqrt(np.diag(A)))
    assert np.allclose(prod, prod[0, 0] * np.eye(3), atol=1e-9 * abs(prod[0, 0]))
    assert np.isfinite(res.condition)
    r, R = res.certification.roundness
    assert R / r == pytest.approx(1.0, rel=1e-9)


def test_build_generic_polytope_roundness():
    res = build_m_ellipsoid(L1_SQUARE, 0.25, np.random.default_rng(7),
                            certify_budget=4000)
    r, R = res.certification.roundness
    assert R / r <= (2.0 / 0.25) ** 2
    assert np.isfinite(res.condition)
    assert res.certification.volume_ratio_k_plus_b >= 1.0 - res.certification.volume_ratio_k_plus_b_ci


def test_build_forced_loop_runs_and_tightens():
    res = build_m_ellipsoid(LpBall(np.inf, 2), 1.0, np.random.default_rng(8),
                            C=1.0, stop_ratio=1.39, use_fast_path=False,
                            certify_budget=2000)
    assert len(res.iterations) >= 1
    dists = [p.distance_estimate for p in res.iterations]
    r, R = res.certification.roundness
    assert all(b <= a + 1e-12 for a, b in zip(dists, dists[1:]))
    assert R / r <= 1.39


def test_build_iteration_cap_error():
    with pytest.raises(LoopDivergenceError):
        build_m_ellipsoid(LpBall(np.inf, 2), 1.0, np.random.default_rng(9),
                          C=1.0, stop_ratio=1.0, max_iters=1,
                          use_fast_path=False, certify_budget=0)


def test_certify_covering_disc_disc(rng):
    disc = LpBall(2.0, 2)
    rep = certify_covering(disc, disc, 200000, rng)
    assert abs(rep.volume_ratio_k_plus_b - 4.0) <= rep.volume_ratio_k_plus_b_ci
    assert abs(rep.volume_ratio_b_plus_ck - 4.0) <= rep.volume_ratio_b_plus_ck_ci


def test_certify_covering_near_degenerate(rng):
    tiny = LpBall(2.0, 2).scaled(1e-6)
    rep = certify_covering(tiny, LpBall(2.0, 2), 100000, rng)
    assert rep.volume_ratio_k_plus_b == pytest.approx(1.0, abs=0.05)


def test_certify_covering_swap_consistency(rng):
    a = LpBall(np.inf, 2)
    b = LpBall(2.0, 2)
    r1 = certify_covering(a, b, 150000, rng)
    r2 = certify_covering(b, a, 150000, rng)
    # both normalizations estimate the same vol(A+B)
    vol_ab_1 = r1.volume_ratio_k_plus_b * math.pi
    vol_ab_2 = r2.volume_ratio_k_plus_b * 4.0
    ci = r1.volume_ratio_k_plus_b_ci * math.pi + r2.volume_ratio_k_plus_b_ci * 4.0
    assert abs(vol_ab_1 - vol_ab_2) <= ci


def test_build_equivariance_via_ratios():
    # the certified ratios are affine invariants of the input body
    body = L1_SQUARE
    S = np.array([[3.0, 1.0], [0.0, 0.5]])
    imaged = LinearImage(S, LpBall(1.0, 2))
    r1 = build_m_ellipsoid(body, 0.25, np.random.default_rng(10),
                           certify_budget=30000).certification
    r2 = build_m_ellipsoid(imaged, 0.25, np.random.default_rng(11),
                           certify_budget=30000).certification
    joint = r1.volume_ratio_k_plus_b_ci + r2.volume_ratio_k_plus_b_ci
    assert abs(r1.volume_ratio_k_plus_b - r2.volume_ratio_k_plus_b) <= joint + 0.02


def test_random_cover_containment(rng):
    res = random_cover(LpBall(2.0, 2).scaled(0.5), LpBall(2.0, 2), 2000, rng)
    assert len(res.centers) == 1
    assert res.miss_rate == 0.0


def test_random_cover_square_by_discs(rng):
    # numerical optimization puts the best 3-disc covering radius of the
    # 2x2 square at ~1.01 > 1, so four or more unit discs are required
    res = random_cover(LpBall(np.inf, 2), LpBall(2.0, 2), 4000, rng)
    assert len(res.centers) >= 4
    assert res.miss_rate <= 0.01


@pytest.mark.parametrize("pair", [
    (LpBall(np.inf, 2), LpBall(2.0, 2)),
    (LpBall(1.0, 3), LpBall(2.0, 3)),
])
def test_random_cover_miss_rates(pair, rng):
    a, t = pair
    res = random_cover(a, t, 3000, rng)
    assert res.miss_rate <= 0.01
