"""Mod-p lattice sparsification: random index-p shifted sublattices.

A draw picks z uniform in Z_p^n \\ {0} and c uniform in Z_p; the coset
u + L' = {Bx : <z,x> = c (mod p)} retains any fixed lattice vector with
probability about 1/p while deleting a given short list, which is the
engine behind the SVP-to-CVP-oracle reductions.  All membership
decisions are integer congruences.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .lattice import Basis, _integer_hnf, frac_vector, solve_coefficients

__all__ = ["SparsifiedCoset", "sparsify", "retention_bound", "is_prime", "next_prime"]


def is_prime(m: int) -> bool:
    """Deterministic Miller-Rabin, exact for every 64-bit integer."""
    if m < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if m % p == 0:
            return m == p
    d = m - 1
    s = 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        x = pow(a, d, m)
        if x in (1, m - 1):
            continue
        for _ in range(s - 1):
            x = x * x % m
            if x == m - 1:
                break
        else:
            return False
    return True


def next_prime(m: int) -> int:
    """Smallest prime >= m."""
    k = max(2, int(m))
    while not is_prime(k):
        k += 1
    return k


def retention_bound(p: int, N: int, n: int) -> float:
    """Lower bound 1/p - N/p^2 - N/p^n on the joint retention probability.

    May be negative, in which case the bound is vacuous at these
    parameters; interpretation is up to the caller.
    """
    if p < 2 or N < 0 or n < 1:
        raise ValueError("need p >= 2, N >= 0, n >= 1")
    return 1.0 / p - N / p**2 - N / float(p) ** n


@dataclass(frozen=True)
class SparsifiedCoset:
    """u + L' with L' = {Bx : <z,x> = 0 (mod p)} and <z, x_u> = c (mod p)."""

    p: int
    z: np.ndarray               # (n,) ints in [0, p)
    c: int
    shift_coeffs: np.ndarray    # x_0 with <z,x_0> = c (mod p)
    shift: np.ndarray           # u = B x_0, exact Fractions
    sublattice_basis: Basis     # basis of L'
    coeff_basis: np.ndarray     # integer n x n matrix: L' coefficients = coeff_basis Z^n

    def contains_coeffs(self, x) -> bool:
        """Exact membership of the lattice vector with coefficients x."""
        x = np.asarray(x)
        s = int(sum(int(zi) * int(xi) for zi, xi in zip(self.z, x)))
        return s % self.p == self.c % self.p

    def contains_vector(self, basis: Basis, v) -> bool:
        x = solve_coefficients(basis, frac_vector(v))
        if x is None or any(xi.denominator != 1 for xi in x):
            return False
        return self.contains_coeffs([int(xi) for xi in x])

    def sub_coeffs_to_ambient(self, y) -> np.ndarray:
        """Map L'-coefficients to coefficients w.r.t. the original basis."""
        return self.coeff_basis @ np.asarray(y, dtype=np.int64)


def _kernel_basis(z: np.ndarray, p: int) -> np.ndarray:
    """Integer basis of {x in Z^n : <z,x> = 0 (mod p)} as columns, via HNF."""
    n = len(z)
    piv = next(i for i in range(n) if z[i] % p != 0)
    zinv = pow(int(z[piv]), -1, p)
    gens = np.zeros((n, n + 1), dtype=object)
    col = 0
    for j in range(n):
        if j == piv:
            continue
        gens[j, col] = 1
        gens[piv, col] = (-int(z[j]) * zinv) % p
        col += 1
    gens[piv, col] = p
    gens[piv, col + 1] = 0  # padding column stays zero
    h = _integer_hnf(gens)
    return h[:, :n]


def sparsify(basis: Basis, p: int, rng: np.random.Generator) -> SparsifiedCoset:
    """Sample a shifted index-p sublattice of the given lattice.

    z is uniform in Z_p^n minus zero (retry-until-nonzero), c uniform in
    Z_p; the sublattice basis comes from the HNF of the congruence
    kernel generators.
    """
    if not is_prime(p):
        raise ValueError(f"{p} is not prime")
    n = basis.rank
    while True:
        z = rng.integers(0, p, size=n)
        if np.any(z % p != 0):
            break
    c = int(rng.integers(0, p))
    kern = _kernel_basis(z, p)
    sub = basis.transform_columns(_as_frac_matrix(kern), trusted=True)
    piv = next(i for i in range(n) if z[i] % p != 0)
    x0 = np.zeros(n, dtype=np.int64)
    x0[piv] = (c * pow(int(z[piv]), -1, p)) % p
    u = basis.vector(x0)
    coeff = np.array([[int(v) for v in row] for row in kern], dtype=np.int64)
    return SparsifiedCoset(p=p, z=z.astype(np.int64), c=c, shift_coeffs=x0,
                           shift=u, sublattice_basis=sub, coeff_basis=coeff)


def _as_frac_matrix(m: np.ndarray) -> np.ndarray:
    out = np.empty(m.shape, dtype=object)
    for idx, v in np.ndenumerate(m):
        out[idx] = Fraction(int(v))
    return out
