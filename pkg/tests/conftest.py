"""Shared helpers: independent brute-force oracles for derived expectations.

The box enumerators here deliberately do not share code with the
library's Schnorr-Euchner enumeration: they sweep an explicit
coefficient box with itertools, so oracle agreement is a meaningful
check.
"""

import itertools

import numpy as np
import pytest

from latnorm.lattice import Basis


def box_svp(basis_float: np.ndarray, norm_fn, bound: int):
    """Min nonzero norm over all coefficient vectors in [-bound, bound]^n."""
    n = basis_float.shape[1]
    best = None
    best_x = None
    for coeffs in itertools.product(range(-bound, bound + 1), repeat=n):
        if not any(coeffs):
            continue
        v = basis_float @ np.array(coeffs, dtype=float)
        val = float(norm_fn(v))
        if best is None or val < best - 1e-12:
            best, best_x = val, coeffs
    return best, best_x


def box_cvp(basis_float: np.ndarray, target: np.ndarray, norm_fn, bound: int):
    """Min norm distance to target over the coefficient box."""
    n = basis_float.shape[1]
    best = None
    best_x = None
    for coeffs in itertools.product(range(-bound, bound + 1), repeat=n):
        v = basis_float @ np.array(coeffs, dtype=float)
        val = float(norm_fn(target - v))
        if best is None or val < best - 1e-12:
            best, best_x = val, coeffs
    return best, best_x


def random_basis(rng: np.random.Generator, n: int, bound: int = 5,
                 dim: int | None = None) -> Basis:
    d = dim if dim is not None else n
    while True:
        M = rng.integers(-bound, bound + 1, size=(d, n))
        try:
            return Basis.from_integers(M)
        except Exception:
            continue


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
