"""Brute-force exact SVP/CVP oracles for small rank.

Schnorr-Euchner enumeration over the Euclidean norm provides the
candidate stream; the working norm only enters through the sandwich
conversion (a K-ball of radius rho lies inside the rho*R Euclidean
ball) and the final filtering.  This module is the ground truth the
randomized algorithms are measured against, so it favours completeness
and determinism over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import (Basis, fast_lll_with_transform, lll_reduce, nearest_plane,
                      solve_coefficients)
from .bodies import NormBody


def float_gso(bf: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Float Gram-Schmidt (bstar, mu, norms_sq) of the columns of bf."""
    d, n = bf.shape
    bstar = np.zeros((d, n))
    mu = np.eye(n)
    norms = np.zeros(n)
    for i in range(n):
        v = bf[:, i].copy()
        if i > 0:
            mu[i, :i] = (v @ bstar[:, :i]) / norms[:i]
            v = v - bstar[:, :i] @ mu[i, :i]
        bstar[:, i] = v
        norms[i] = float(v @ v)
    return bstar, mu, norms

__all__ = ["EnumerationResult", "BudgetExceededError", "exact_svp", "exact_cvp"]


@dataclass(frozen=True)
class EnumerationResult:
    coeffs: np.ndarray        # integer coefficients w.r.t. the input basis
    vector: np.ndarray        # float embedding of the lattice vector
    value: float              # K-norm (SVP) or K-distance (CVP)
    nodes_visited: int


class BudgetExceededError(RuntimeError):
    """Node budget exhausted; carries the best result found so far."""

    def __init__(self, message: str, best: EnumerationResult | None):
        super().__init__(message)
        self.best = best


def _enumerate(mu: np.ndarray, c: np.ndarray, tau: np.ndarray, rsq_init: float,
               visit, node_budget: int):
    """Schnorr-Euchner enumeration of all x with ||B x - t||_2^2 <= rsq.

    ``visit(x, dist_sq)`` is called for every full coefficient vector
    inside the current radius and may return a smaller squared radius to
    continue with (monotone shrinking only).  Returns the node count.
    """
    n = len(c)
    rsq = rsq_init
    x = np.zeros(n, dtype=np.int64)
    center = np.zeros(n)
    dist = np.zeros(n + 1)           # dist[i]: contribution of levels > i-1
    delta = np.zeros(n, dtype=np.int64)
    # center of level i given choices above: tau_i - sum_{j>i} mu[j,i] x_j
    nodes = 0
    i = n - 1
    center[i] = tau[i]
    x[i] = int(round(center[i]))
    delta[i] = 0
    while True:
        nodes += 1
        if nodes > node_budget:
            raise _BudgetSignal(nodes)
        diff = x[i] - center[i]
        d = dist[i + 1] + c[i] * diff * diff
        if d <= rsq:
            if i == 0:
                new_rsq = visit(x, d)
                if new_rsq is not None and new_rsq < rsq:
                    rsq = new_rsq
            else:
                dist[i] = d
                i -= 1
                center[i] = tau[i] - float(mu[i + 1:, i] @ x[i + 1:])
                x[i] = int(round(center[i]))
                delta[i] = 0
                continue
        else:
            # quadratic in x_i: once the zigzag overshoots, the level is done
            i += 1
            if i == n:
                return nodes
        # zigzag to the next value at the current level
        if delta[i] == 0:
            delta[i] = 1 if x[i] <= center[i] else -1
        else:
            delta[i] = -delta[i] - (1 if delta[i] > 0 else -1)
        x[i] += delta[i]


class _BudgetSignal(Exception):
    def __init__(self, nodes: int):
        self.nodes = nodes


def _canonical_sign(coeffs: np.ndarray) -> np.ndarray:
    for v in coeffs:
        if v != 0:
            return coeffs if v > 0 else -coeffs
    return coeffs


def _run(basis: Basis, body: NormBody, target: np.ndarray | None,
         node_budget: int, fast_preprocess: bool) -> EnumerationResult:
    is_svp = target is None
    if fast_preprocess:
        red, unimod = fast_lll_with_transform(basis)
    else:
        red, unimod = lll_reduce(basis), None
    bf = red.as_float()
    bstar, mu, c = float_gso(bf)
    n = red.rank
    R_sand = body.sandwich().R

    if is_svp:
        t = np.zeros(basis.dim)
        col_norms = np.atleast_1d(body.norm(bf.T))
        j0 = int(np.argmin(col_norms))
        best_val = float(col_norms[j0])
        best_x = np.zeros(n, dtype=np.int64)
        best_x[j0] = 1
    else:
        t = np.asarray(target, dtype=float)
        resid = t - bstar @ ((bstar.T @ t) / c)
        if np.linalg.norm(resid) > 1e-7 * max(1.0, np.linalg.norm(t)):
            raise ValueError("target lies outside span(L); apply rank_reduce first")
        bx = nearest_plane(bf, (bstar, mu, c), t)
        best_val = float(body.norm(bf @ bx - t))
        best_x = bx.astype(np.int64)

    tau = (bstar.T @ t) / c
    margin = 1.0 + 1e-9
    rsq0 = (best_val * R_sand * margin) ** 2 + 1e-12
    ties: list[tuple[float, np.ndarray]] = [(best_val, best_x.copy())]
    state = {"best": best_val}

    def visit(x: np.ndarray, dsq: float):
        if is_svp and not np.any(x):
            return None
        val = float(body.norm(bf @ x - t))
        tol = 1e-9 * max(1.0, state["best"])
        if val < state["best"] - tol:
            state["best"] = val
            ties.clear()
            ties.append((val, x.copy()))
            return (val * R_sand * margin) ** 2 + 1e-12
        if val <= state["best"] + tol:
            ties.append((val, x.copy()))
        return None

    try:
        nodes = _enumerate(mu, c, tau, rsq0, visit, node_budget)
        exceeded = None
    except _BudgetSignal as sig:
        nodes = sig.nodes
        exceeded = sig

    best = state["best"]
    tol = 1e-9 * max(1.0, best)
    cands = []
    for val, x in ties:
        if val <= best + tol:
            if unimod is not None:
                ci = (unimod @ x).astype(np.int64)
            else:
                coeffs_in = solve_coefficients(basis, red.vector(x))
                ci = np.array([int(v) for v in coeffs_in], dtype=np.int64)
            if is_svp:
                ci = _canonical_sign(ci)
            # ties order by |coeffs| first so the witness is the "plainest" one
            cands.append((tuple(abs(ci)), tuple(ci)))
    cands.sort()
    coeffs = np.array(cands[0][1], dtype=np.int64)
    vec_f = basis.as_float() @ coeffs
    value = float(body.norm(vec_f - t)) if not is_svp else float(body.norm(vec_f))
    result = EnumerationResult(coeffs=coeffs, vector=vec_f, value=value,
                               nodes_visited=nodes)
    if exceeded is not None:
        raise BudgetExceededError(
            f"enumeration node budget {node_budget} exceeded", result)
    return result


def exact_svp(basis: Basis, body: NormBody, node_budget: int = 10**8,
              fast_preprocess: bool = False) -> EnumerationResult:
    """Shortest nonzero lattice vector in the body gauge, by enumeration."""
    if body.dim != basis.dim:
        raise ValueError("body dimension must match basis dimension")
    return _run(basis, body, None, node_budget, fast_preprocess)


def exact_cvp(basis: Basis, target, body: NormBody,
              node_budget: int = 10**8, fast_preprocess: bool = False) -> EnumerationResult:
    """Closest lattice vector to an in-span target in the body gauge."""
    if body.dim != basis.dim:
        raise ValueError("body dimension must match basis dimension")
    return _run(basis, body, np.asarray(target, dtype=float), node_budget,
                fast_preprocess)
