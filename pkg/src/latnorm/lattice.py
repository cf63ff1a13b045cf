"""Exact lattice arithmetic: bases, Gram-Schmidt, LLL, HNF and rank reduction.

Basis vectors are stored as columns with exact rational entries
(``fractions.Fraction`` inside object-dtype numpy arrays).  All lattice
identity decisions (rank, determinants, Hermite forms, coefficient
solves) happen in rational arithmetic; floating point appears only in
the geometric layers built on top.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "Basis",
    "GsoData",
    "RankReduction",
    "RankDeficiencyError",
    "gram_schmidt",
    "lll_reduce",
    "fast_lll",
    "fast_lll_with_transform",
    "rank_reduce",
    "hermite_normal_form",
    "frac_matrix",
    "frac_vector",
    "frac_inverse",
    "solve_coefficients",
    "nearest_plane",
]


class RankDeficiencyError(ValueError):
    """Raised when the supplied generators are linearly dependent."""


def _to_frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, float):
        return Fraction(x)  # exact binary expansion
    raise TypeError(f"cannot convert {type(x)} to Fraction")


def frac_matrix(rows) -> np.ndarray:
    """Object-dtype matrix of Fractions from any nested numeric data."""
    arr = np.empty((len(rows), len(rows[0])), dtype=object)
    for i, row in enumerate(rows):
        for j, x in enumerate(row):
            arr[i, j] = _to_frac(x)
    return arr


def frac_vector(entries) -> np.ndarray:
    out = np.empty(len(entries), dtype=object)
    for i, x in enumerate(entries):
        out[i] = _to_frac(x)
    return out


def _frac_dot(u: np.ndarray, v: np.ndarray) -> Fraction:
    return sum((a * b for a, b in zip(u, v)), Fraction(0))


def _gram_det(mat: np.ndarray) -> Fraction:
    """det(M^T M) by fraction-exact Gaussian elimination."""
    g = mat.T @ mat
    n = g.shape[0]
    g = g.copy()
    det = Fraction(1)
    for k in range(n):
        piv = None
        for i in range(k, n):
            if g[i, k] != 0:
                piv = i
                break
        if piv is None:
            return Fraction(0)
        if piv != k:
            g[[k, piv]] = g[[piv, k]]
            det = -det
        det *= g[k, k]
        inv = 1 / g[k, k]
        for i in range(k + 1, n):
            factor = g[i, k] * inv
            if factor:
                g[i, k:] = g[i, k:] - factor * g[k, k:]
    return det


@dataclass(frozen=True)
class Basis:
    """A rank-n lattice in R^d given by n linearly independent columns.

    ``trusted=True`` skips the (exact, hence costly) independence check;
    it is reserved for constructions that preserve full rank, such as
    unimodular transforms and index-p sublattices.
    """

    matrix: np.ndarray  # shape (d, n), object dtype of Fractions
    trusted: InitVar[bool] = False

    def __post_init__(self, trusted: bool):
        m = self.matrix
        if m.ndim != 2:
            raise ValueError("basis matrix must be 2-dimensional")
        if self.rank > self.dim:
            raise ValueError("rank exceeds dimension")
        if not trusted and _gram_det(m) == 0:
            raise RankDeficiencyError("basis columns are linearly dependent")

    @classmethod
    def from_rows_of_columns(cls, columns: Sequence[Sequence]) -> "Basis":
        """Build from a list of column vectors (each of length d)."""
        cols = [frac_vector(c) for c in columns]
        d = len(cols[0])
        mat = np.empty((d, len(cols)), dtype=object)
        for j, c in enumerate(cols):
            mat[:, j] = c
        return cls(mat)

    @classmethod
    def from_integers(cls, mat) -> "Basis":
        return cls(frac_matrix(np.asarray(mat, dtype=object)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.matrix.shape[1]

    @property
    def columns(self) -> list:
        return [self.matrix[:, j] for j in range(self.rank)]

    def as_float(self) -> np.ndarray:
        return self.matrix.astype(float)

    def vector(self, coeffs) -> np.ndarray:
        """Exact lattice vector B @ coeffs for an integer coefficient vector."""
        c = frac_vector(coeffs)
        return self.matrix @ c

    def vector_float(self, coeffs) -> np.ndarray:
        return self.as_float() @ np.asarray(coeffs, dtype=float)

    def gram_determinant(self) -> Fraction:
        return _gram_det(self.matrix)

    def determinant(self) -> float:
        """Lattice determinant sqrt(det(B^T B)) as a float."""
        g = self.gram_determinant()
        return math.sqrt(g.numerator / g.denominator)

    def scale(self, s) -> "Basis":
        return Basis(self.matrix * _to_frac(s), trusted=True)

    def transform_columns(self, cols_coeffs: np.ndarray, trusted: bool = False) -> "Basis":
        """New basis B @ U for an exact coefficient matrix U (n x m)."""
        return Basis(self.matrix @ cols_coeffs, trusted=trusted)

    def contains(self, vector) -> bool:
        """Exact membership of a rational vector in the lattice."""
        x = solve_coefficients(self, frac_vector(vector))
        if x is None:
            return False
        return all(v.denominator == 1 for v in x)


@dataclass(frozen=True)
class GsoData:
    """Exact Gram-Schmidt data: b_i = b*_i + sum_{j<i} mu_ij b*_j."""

    bstar: np.ndarray       # (d, n) object
    mu: np.ndarray          # (n, n) object, lower triangular, unit diagonal
    norms_sq: np.ndarray    # (n,) object, ||b*_i||^2

    def bstar_float(self) -> np.ndarray:
        return self.bstar.astype(float)

    def mu_float(self) -> np.ndarray:
        return self.mu.astype(float)

    def norms_sq_float(self) -> np.ndarray:
        return self.norms_sq.astype(float)


def gram_schmidt(basis: Basis) -> GsoData:
    """Exact classical Gram-Schmidt of the basis columns.

    Raises RankDeficiencyError if a column is dependent on its
    predecessors (zero orthogonal component).
    """
    d, n = basis.dim, basis.rank
    bstar = np.empty((d, n), dtype=object)
    mu = np.empty((n, n), dtype=object)
    mu[:] = Fraction(0)
    norms = np.empty(n, dtype=object)
    for i in range(n):
        v = basis.matrix[:, i].copy()
        for j in range(i):
            m = _frac_dot(basis.matrix[:, i], bstar[:, j]) / norms[j]
            mu[i, j] = m
            if m:
                v = v - m * bstar[:, j]
        mu[i, i] = Fraction(1)
        bstar[:, i] = v
        norms[i] = _frac_dot(v, v)
        if norms[i] == 0:
            raise RankDeficiencyError(f"column {i} depends on previous columns")
    return GsoData(bstar, mu, norms)


def lll_reduce(basis: Basis, delta: Fraction | float = Fraction(99, 100)) -> Basis:
    """Exact-rational LLL reduction (size reduction + Lovasz swaps).

    The returned basis generates the same lattice; only integer column
    operations are applied.
    """
    delta = _to_frac(delta)
    if not Fraction(1, 4) < delta < 1:
        raise ValueError("delta must lie in (1/4, 1)")
    n = basis.rank
    b = basis.matrix.copy()
    gso = gram_schmidt(basis)
    bstar, mu, norms = gso.bstar.copy(), gso.mu.copy(), gso.norms_sq.copy()

    def recompute_from(k0: int) -> None:
        # b*_i for i < k0 are unaffected by changes at columns >= k0
        for i in range(k0, n):
            v = b[:, i].copy()
            for j in range(i):
                m = _frac_dot(b[:, i], bstar[:, j]) / norms[j]
                mu[i, j] = m
                if m:
                    v = v - m * bstar[:, j]
            bstar[:, i] = v
            norms[i] = _frac_dot(v, v)

    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            m = mu[k, j]
            if abs(m) > Fraction(1, 2):
                q = Fraction(round(m))
                b[:, k] = b[:, k] - q * b[:, j]
                mu[k, :j + 1] = mu[k, :j + 1] - q * mu[j, :j + 1]
        if norms[k] >= (delta - mu[k, k - 1] ** 2) * norms[k - 1]:
            k += 1
        else:
            b[:, [k, k - 1]] = b[:, [k - 1, k]]
            recompute_from(k - 1)
            k = max(k - 1, 1)
    return Basis(b, trusted=True)


def fast_lll(basis: Basis, delta: float = 0.99, max_rounds: int = 200000) -> Basis:
    """LLL with float Gram-Schmidt decisions but exact column operations.

    Only integer size-reduction steps and column swaps touch the exact
    basis, so the output generates the same lattice exactly; the Lovasz
    condition is certified in floating point only.  Used as cheap
    preprocessing inside enumeration and sieving loops; the public
    ``lll_reduce`` is the fully rational variant.
    """
    return fast_lll_with_transform(basis, delta, max_rounds)[0]


def fast_lll_with_transform(basis: Basis, delta: float = 0.99,
                            max_rounds: int = 200000) -> tuple[Basis, np.ndarray]:
    """As ``fast_lll`` but also returns the unimodular U with B_out = B_in @ U.

    The loop runs entirely in floats plus an integer transform; the exact
    basis is reconstructed by one rational matmul at the end, so the same
    lattice is generated by construction.
    """
    F = basis.as_float().copy()
    d, n = F.shape
    U = np.empty((n, n), dtype=object)   # python ints: no overflow
    U[:] = 0
    for i in range(n):
        U[i, i] = 1
    bstar = np.zeros((d, n))
    mu = np.zeros((n, n))
    norms = np.zeros(n)

    def recompute(k0: int) -> None:
        for i in range(k0, n):
            v = F[:, i].copy()
            if i > 0:
                mu[i, :i] = (v @ bstar[:, :i]) / norms[:i]
                v = v - bstar[:, :i] @ mu[i, :i]
            bstar[:, i] = v
            norms[i] = float(v @ v)

    recompute(0)
    if np.any(norms <= 0):
        raise RankDeficiencyError("float GSO collapsed; basis is ill-conditioned")
    k = 1
    rounds = 0
    while k < n and rounds < max_rounds:
        rounds += 1
        for j in range(k - 1, -1, -1):
            q = round(mu[k, j])
            if q:
                F[:, k] = F[:, k] - q * F[:, j]
                U[:, k] = U[:, k] - q * U[:, j]
                mu[k, :j + 1] -= q * mu[j, :j + 1]
        if norms[k] >= (delta - mu[k, k - 1] ** 2) * norms[k - 1]:
            k += 1
        else:
            F[:, [k, k - 1]] = F[:, [k - 1, k]]
            U[:, [k, k - 1]] = U[:, [k - 1, k]]
            recompute(k - 1)
            k = max(k - 1, 1)
    out = basis.transform_columns(U, trusted=True)
    return out, np.array([[int(v) for v in row] for row in U], dtype=np.int64)


def hermite_normal_form(basis: Basis) -> np.ndarray:
    """Canonical column-style HNF of the lattice, as exact Fractions.

    Denominators are cleared first, the integer HNF is computed by
    column operations, then the scale is divided back out, so equal
    lattices yield identical forms.
    """
    lcm = 1
    for x in basis.matrix.flat:
        lcm = lcm * x.denominator // math.gcd(lcm, x.denominator)
    m = np.empty(basis.matrix.shape, dtype=object)
    for idx, x in np.ndenumerate(basis.matrix):
        m[idx] = int(x * lcm)
    m = _integer_hnf(m)
    out = np.empty(m.shape, dtype=object)
    for idx, x in np.ndenumerate(m):
        out[idx] = Fraction(int(x), lcm)
    return out


def _integer_hnf(m: np.ndarray) -> np.ndarray:
    """Lower-triangular column HNF of an integer matrix (full column rank)."""
    m = m.copy()
    d, n = m.shape
    row = 0
    col = 0
    while row < d and col < n:
        piv = None
        for j in range(col, n):
            if m[row, j] != 0:
                piv = j
                break
        if piv is None:
            row += 1
            continue
        m[:, [col, piv]] = m[:, [piv, col]]
        # eliminate the row entries to the right by gcd steps
        for j in range(col + 1, n):
            while m[row, j] != 0:
                q = m[row, j] // m[row, col]
                m[:, j] = m[:, j] - q * m[:, col]
                if m[row, j] != 0:
                    m[:, [col, j]] = m[:, [j, col]]
        if m[row, col] < 0:
            m[:, col] = -m[:, col]
        # reduce entries left of the pivot into [0, pivot)
        for j in range(col):
            q = m[row, j] // m[row, col]
            if q:
                m[:, j] = m[:, j] - q * m[:, col]
        row += 1
        col += 1
    return m


def frac_inverse(mat: np.ndarray) -> np.ndarray:
    """Exact inverse of a square matrix of Fractions (Gauss-Jordan)."""
    n = mat.shape[0]
    aug = np.empty((n, 2 * n), dtype=object)
    aug[:, :n] = mat
    aug[:, n:] = frac_matrix(np.eye(n, dtype=object))
    for c in range(n):
        piv = None
        for i in range(c, n):
            if aug[i, c] != 0:
                piv = i
                break
        if piv is None:
            raise ValueError("matrix is singular")
        if piv != c:
            aug[[c, piv]] = aug[[piv, c]]
        aug[c] = aug[c] * (1 / aug[c, c])
        for i in range(n):
            if i != c and aug[i, c] != 0:
                aug[i] = aug[i] - aug[i, c] * aug[c]
    return aug[:, n:]


def solve_coefficients(basis: Basis, vector: np.ndarray) -> Optional[np.ndarray]:
    """Exact rational solve of B x = v; None if v is outside span(B)."""
    d, n = basis.dim, basis.rank
    aug = np.empty((d, n + 1), dtype=object)
    aug[:, :n] = basis.matrix
    aug[:, n] = frac_vector(vector)
    aug = aug.copy()
    pivots = []
    r = 0
    for c in range(n):
        piv = None
        for i in range(r, d):
            if aug[i, c] != 0:
                piv = i
                break
        if piv is None:
            continue
        if piv != r:
            aug[[r, piv]] = aug[[piv, r]]
        inv = 1 / aug[r, c]
        aug[r] = aug[r] * inv
        for i in range(d):
            if i != r and aug[i, c] != 0:
                aug[i] = aug[i] - aug[i, c] * aug[r]
        pivots.append(c)
        r += 1
    # consistency: rows beyond the rank must have zero rhs
    for i in range(r, d):
        if aug[i, n] != 0:
            return None
    x = np.empty(n, dtype=object)
    x[:] = Fraction(0)
    for i, c in enumerate(pivots):
        x[c] = aug[i, n]
    return x


def nearest_plane(basis_float: np.ndarray, gso_float: tuple, target: np.ndarray) -> np.ndarray:
    """Babai nearest-plane coefficients (integer array) for a float target.

    ``gso_float`` is (bstar, mu, norms_sq) in floats; ``basis_float`` is the
    d x n float basis.
    """
    bstar, mu, norms = gso_float
    n = basis_float.shape[1]
    t = np.asarray(target, dtype=float).copy()
    coeffs = np.zeros(n, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        c = float(t @ bstar[:, i]) / norms[i]
        k = round(c)
        coeffs[i] = k
        if k:
            t = t - k * basis_float[:, i]
    return coeffs


@dataclass(frozen=True)
class RankReduction:
    """Full-dimensional restatement of a (rank n, dimension d) instance.

    ``rotation`` maps span(L) isometrically onto R^n; ``back_map`` is its
    inverse embedding.  ``reduced_basis`` is the rotated basis with
    entries re-rationalized to ``rational_tolerance``; the original
    coefficient vectors are preserved one-to-one.
    """

    rotation: np.ndarray           # (n, d) float, orthonormal rows
    back_map: np.ndarray           # (d, n) float
    reduced_basis: Basis           # n x n
    reduced_target: np.ndarray     # (n,) float
    target_projection: np.ndarray  # (d,) float, t' in the original space
    in_span: bool
    projection_gap: float          # achieved K-distance ||t - t'||_K
    condition: float = field(default=1.0)

    def approx_penalty(self, alpha: float = 1.0) -> float:
        """Approximation loss factor: 1 if t was in span, else 2*alpha+1."""
        return 1.0 if self.in_span else 2.0 * alpha + 1.0

    def lift_coefficients(self, coeffs) -> np.ndarray:
        """Coefficients are shared between reduced and original bases."""
        return np.asarray(coeffs)


def _orthonormal_rotation(basis: Basis) -> tuple[np.ndarray, float]:
    gso = gram_schmidt(basis)
    bstar = gso.bstar_float()
    norms = np.sqrt(gso.norms_sq_float())
    q = (bstar / norms).T  # (n, d), orthonormal rows
    # re-orthonormalize in float to suppress rounding drift
    u, _, vt = np.linalg.svd(q, full_matrices=False)
    q2 = u @ vt
    cond = float(np.linalg.cond(q2 @ q2.T))
    return q2, cond


def rank_reduce(basis: Basis, target, body, rational_tolerance: int = 10**12,
                max_iters: int = 2000) -> RankReduction:
    """Rotate a rank-n instance into R^n, projecting the target into span(L).

    The projection t' minimizes ||t - x||_K over span(L): exact for
    targets already in the span, the orthogonal projection for Euclidean
    bodies, and a projected-subgradient minimum (warm-started at the
    orthogonal projection) for general bodies.
    """
    t = np.asarray(target, dtype=float)
    if t.shape[0] != basis.dim:
        raise ValueError("target dimension mismatch")
    rot, cond = _orthonormal_rotation(basis)
    back = rot.T

    t_exact = frac_vector(target)
    coeffs = solve_coefficients(basis, t_exact)
    in_span = coeffs is not None

    if in_span:
        t_prime = t
        gap = 0.0
    else:
        proj = back @ (rot @ t)
        if getattr(body, "is_euclidean_ball", False):
            t_prime = proj
        else:
            t_prime = _project_target_k(body, t, rot, back, proj, max_iters)
        gap = float(body.norm(t - t_prime))

    reduced_target = rot @ t_prime
    red_f = rot @ basis.as_float()
    red = np.empty(red_f.shape, dtype=object)
    for idx, x in np.ndenumerate(red_f):
        red[idx] = Fraction(x).limit_denominator(rational_tolerance)
    reduced_basis = Basis(red)
    return RankReduction(
        rotation=rot,
        back_map=back,
        reduced_basis=reduced_basis,
        reduced_target=reduced_target,
        target_projection=t_prime,
        in_span=in_span,
        projection_gap=gap,
        condition=cond,
    )


def _project_target_k(body, t, rot, back, warm, max_iters):
    """min_{x in span} ||t - x||_K by projected subgradient descent."""
    proj_span = back @ rot
    x = warm.copy()
    best_x = x.copy()
    best = float(body.norm(t - x))
    scale = max(best, 1e-12)
    stall = 0
    for it in range(max_iters):
        g = body.grad_norm(t - x)
        g = proj_span @ g        # keep iterates in span(L)
        gn = float(np.linalg.norm(g))
        if gn < 1e-14:
            break
        step = 0.5 * scale / ((it + 1) ** 0.75 * gn)
        x = proj_span @ (x + step * g)
        val = float(body.norm(t - x))
        if val < best - 1e-6 * scale:
            best, best_x, stall = val, x.copy(), 0
        else:
            stall += 1
            if stall >= 50:
                break
    return best_x
