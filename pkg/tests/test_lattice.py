"""Exact lattice core: GSO, LLL, HNF, rank reduction."""

from fractions import Fraction

import numpy as np
import pytest

from latnorm.lattice import (Basis, RankDeficiencyError, fast_lll, gram_schmidt,
                             hermite_normal_form, lll_reduce, rank_reduce,
                             solve_coefficients)
from latnorm.bodies import LpBall
from latnorm.oracle import exact_cvp

from conftest import box_cvp, random_basis


def test_gso_identity():
    b = Basis.from_integers(np.eye(2, dtype=int))
    g = gram_schmidt(b)
    assert g.bstar[0, 0] == 1 and g.bstar[1, 1] == 1
    assert g.mu[1, 0] == 0


def test_gso_hand_example():
    # columns (2,1), (0,3): mu21 = 3/5 and b*_2 = (-6/5, 12/5)
    b = Basis.from_rows_of_columns([[2, 1], [0, 3]])
    g = gram_schmidt(b)
    assert g.mu[1, 0] == Fraction(3, 5)
    assert list(g.bstar[:, 1]) == [Fraction(-6, 5), Fraction(12, 5)]
    # reconstruction identity b_i = b*_i + sum mu_ij b*_j, exactly
    for i in range(2):
        rec = g.bstar[:, i].copy()
        for j in range(i):
            rec = rec + g.mu[i, j] * g.bstar[:, j]
        assert all(rec[k] == b.matrix[k, i] for k in range(2))
    # exact orthogonality
    assert sum(g.bstar[k, 0] * g.bstar[k, 1] for k in range(2)) == 0


def test_gso_rank_deficiency():
    with pytest.raises(RankDeficiencyError):
        Basis.from_rows_of_columns([[1, 0], [2, 0]])


def test_lll_identity_fixed_point():
    b = Basis.from_integers(np.eye(3, dtype=int))
    r = lll_reduce(b)
    assert (r.matrix == b.matrix).all()


def test_lll_short_first_vector():
    b = Basis.from_rows_of_columns([[1, 0], [10, 1]])
    r = lll_reduce(b)
    norms = np.linalg.norm(r.as_float(), axis=0)
    # exhaustive check over small unimodular images: lambda_1 = 1
    assert min(norms) == pytest.approx(1.0)
    assert (hermite_normal_form(b) == hermite_normal_form(r)).all()


def test_lll_lovasz_condition_exact():
    rng = np.random.default_rng(7)
    delta = Fraction(99, 100)
    for _ in range(5):
        b = random_basis(rng, 4)
        r = lll_reduce(b, delta)
        g = gram_schmidt(r)
        for k in range(1, r.rank):
            lhs = g.norms_sq[k]
            rhs = (delta - g.mu[k, k - 1] ** 2) * g.norms_sq[k - 1]
            assert lhs >= rhs
            for j in range(k):
                assert abs(g.mu[k, j]) <= Fraction(1, 2)


@pytest.mark.parametrize("n,d", [(3, 3), (4, 4), (3, 5)])
def test_lll_preserves_lattice(n, d):
    rng = np.random.default_rng(n * 10 + d)
    b = random_basis(rng, n, dim=d)
    assert (hermite_normal_form(lll_reduce(b)) == hermite_normal_form(b)).all()
    assert (hermite_normal_form(fast_lll(b)) == hermite_normal_form(b)).all()


def test_rank_reduce_target_in_span():
    b = random_basis(np.random.default_rng(3), 2, dim=4)
    t = b.as_float() @ np.array([2.0, -1.0])
    rr = rank_reduce(b, t, LpBall(2.0, 4))
    assert rr.in_span
    assert rr.approx_penalty(1.0) == 1.0
    assert np.allclose(rr.reduced_target, rr.rotation @ t, atol=1e-9)


def test_rank_reduce_euclidean_projection():
    b = Basis.from_rows_of_columns([[1, 0, 0], [0, 1, 0]])
    t = np.array([0.3, -0.2, 5.0])
    rr = rank_reduce(b, t, LpBall(2.0, 3))
    assert not rr.in_span
    assert np.allclose(rr.target_projection, [0.3, -0.2, 0.0], atol=1e-8)
    assert rr.approx_penalty(1.0) == 3.0


def test_rank_reduce_linf_projection():
    # L = span{(1,0)}, K = linf, t = (0.3, 0.7): t' = (0.3, 0), gap 0.7
    # (1-dim enumeration of the minimization confirms the optimum)
    b = Basis.from_rows_of_columns([[1, 0]])
    t = np.array([0.3, 0.7])
    body = LpBall(np.inf, 2)
    xs = np.linspace(-2, 2, 40001)
    vals = np.maximum(np.abs(t[0] - xs), np.abs(t[1]))
    grid_best = vals.min()
    rr = rank_reduce(b, t, body)
    assert grid_best == pytest.approx(0.7, abs=1e-9)
    assert rr.projection_gap == pytest.approx(grid_best, abs=1e-6)
    assert abs(rr.target_projection[1]) < 1e-9


def test_rotation_is_isometry_on_span():
    rng = np.random.default_rng(11)
    for _ in range(5):
        b = random_basis(rng, 3, dim=5)
        rr = rank_reduce(b, np.zeros(5), LpBall(2.0, 5))
        for _ in range(5):
            v = b.as_float() @ rng.integers(-3, 4, 3)
            assert np.linalg.norm(rr.rotation @ v) == pytest.approx(
                np.linalg.norm(v), rel=1e-9)
            assert np.allclose(rr.back_map @ (rr.rotation @ v), v, atol=1e-8)


@pytest.mark.parametrize("seed", range(4))
def test_rank_reduce_cvp_roundtrip_penalty(seed):
    # exact CVP on the reduced instance, mapped back, stays within
    # (2*1+1) * dist_K(t, L) of the original target
    rng = np.random.default_rng(seed)
    n, d = 3, 5
    b = random_basis(rng, n, dim=d, bound=3)
    body = LpBall(np.inf, d)
    t = rng.uniform(-3, 3, d)
    rr = rank_reduce(b, t, body)
    red_body = LpBall(np.inf, rr.reduced_basis.dim)
    # reduced body is the rotated section; for linf the section is not linf,
    # so solve in the section norm via the original body on lifted vectors
    from latnorm.bodies import SectionBody
    sec = SectionBody(body, rr.back_map)
    res = exact_cvp(rr.reduced_basis, rr.reduced_target, sec, fast_preprocess=True)
    mapped_val = float(body.norm(t - b.as_float() @ res.coeffs))
    true_dist, _ = box_cvp(b.as_float(), t, body.norm, 4)
    assert mapped_val <= 3.0 * true_dist + 1e-6


def test_solve_coefficients_exact():
    b = random_basis(np.random.default_rng(5), 3, dim=4)
    x = np.array([3, -2, 7])
    v = b.vector(x)
    got = solve_coefficients(b, v)
    assert [int(g) for g in got] == list(x)
    assert b.contains(v)
