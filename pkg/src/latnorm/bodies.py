"""Symmetric convex bodies as first-class norm objects.

Every body exposes four primitives, all accepting single vectors or
batches of shape (m, n):

* ``norm(x)``      gauge value min{s >= 0 : x in s*K}
* ``project(x)``   Euclidean projection onto the body
* ``support(u)``   support function h_K(u) = max_{y in K} <u, y>
* ``sandwich()``   certified radii (r, R) with r*B2 <= K <= R*B2

plus a norm subgradient used by the convex-optimization layers.
Composite bodies (linear images, cylinders, sections, ball
intersections/hulls) reduce their primitives to the base body's.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

__all__ = [
    "SandwichRadii",
    "NormBody",
    "LpBall",
    "Ellipsoid",
    "Polytope",
    "Cylinder",
    "LinearImage",
    "Scaled",
    "SectionBody",
    "IntersectionWithBall",
    "HullWithBall",
    "cylinder_extend",
    "sample_in_body",
    "sample_minkowski_sum",
    "minkowski_contains",
    "ball_radius",
    "KissingEstimate",
    "estimate_kissing_variant",
    "cylinder_kissing_report",
    "body_to_json",
    "body_from_json",
    "SamplingInfeasibleError",
]

_EPS = 1e-300


class SamplingInfeasibleError(RuntimeError):
    """Rejection sampling acceptance rate fell below the configured floor."""


class SandwichRadii(NamedTuple):
    r: float
    R: float


def _as_batch(x) -> tuple[np.ndarray, bool]:
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        return a[None, :], True
    return a, False


def _unbatch(vals: np.ndarray, squeeze: bool):
    return vals[0] if squeeze else vals


class NormBody:
    """Base class; subclasses implement the batched primitives."""

    dim: int

    # -- primitives -------------------------------------------------
    def norm(self, x):
        raise NotImplementedError

    def project(self, x):
        raise NotImplementedError

    def support(self, u):
        raise NotImplementedError

    def grad_norm(self, x):
        raise NotImplementedError

    def sandwich(self) -> SandwichRadii:
        raise NotImplementedError

    # -- derived ----------------------------------------------------
    @property
    def is_euclidean_ball(self) -> bool:
        return ball_radius(self) is not None

    def contains(self, x, tol: float = 1e-9):
        xs, squeeze = _as_batch(x)
        return _unbatch(self.norm(xs) <= 1.0 + tol, squeeze)

    def scaled(self, s: float) -> "NormBody":
        return Scaled(self, float(s))


class LpBall(NormBody):
    """Unit ball of the l_p norm, p in [1, inf]."""

    def __init__(self, p: float, dim: int):
        if not (p >= 1):
            raise ValueError("p must be >= 1")
        self.p = float(p)
        self.dim = int(dim)

    def __repr__(self):
        return f"LpBall(p={self.p}, dim={self.dim})"

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        if math.isinf(self.p):
            v = np.max(np.abs(xs), axis=1)
        elif self.p == 1.0:
            v = np.sum(np.abs(xs), axis=1)
        elif self.p == 2.0:
            v = np.linalg.norm(xs, axis=1)
        else:
            v = np.sum(np.abs(xs) ** self.p, axis=1) ** (1.0 / self.p)
        return _unbatch(v, squeeze)

    def support(self, u):
        us, squeeze = _as_batch(u)
        if math.isinf(self.p):
            v = np.sum(np.abs(us), axis=1)
        elif self.p == 1.0:
            v = np.max(np.abs(us), axis=1)
        elif self.p == 2.0:
            v = np.linalg.norm(us, axis=1)
        else:
            q = self.p / (self.p - 1.0)
            v = np.sum(np.abs(us) ** q, axis=1) ** (1.0 / q)
        return _unbatch(v, squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        g = np.zeros_like(xs)
        nz = self.norm(xs) if xs.shape[0] > 1 else np.atleast_1d(self.norm(xs))
        nz = np.atleast_1d(nz)
        mask = nz > 0
        if math.isinf(self.p):
            idx = np.argmax(np.abs(xs), axis=1)
            rows = np.arange(xs.shape[0])
            g[rows, idx] = np.sign(xs[rows, idx])
        elif self.p == 1.0:
            g = np.sign(xs)
        elif self.p == 2.0:
            g[mask] = xs[mask] / nz[mask, None]
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                g[mask] = (np.sign(xs[mask]) * np.abs(xs[mask]) ** (self.p - 1.0)
                           / nz[mask, None] ** (self.p - 1.0))
        return _unbatch(g, squeeze)

    def sandwich(self) -> SandwichRadii:
        n = self.dim
        c = n ** (0.5 - 1.0 / self.p) if not math.isinf(self.p) else math.sqrt(n)
        return SandwichRadii(min(1.0, c), max(1.0, c))

    def project(self, x):
        xs, squeeze = _as_batch(x)
        if math.isinf(self.p):
            return _unbatch(np.clip(xs, -1.0, 1.0), squeeze)
        if self.p == 2.0:
            nrm = np.linalg.norm(xs, axis=1)
            scale = np.where(nrm > 1.0, 1.0 / np.maximum(nrm, _EPS), 1.0)
            return _unbatch(xs * scale[:, None], squeeze)
        if self.p == 1.0:
            return _unbatch(_project_l1(xs), squeeze)
        return _unbatch(_project_lp(xs, self.p), squeeze)


def _project_l1(xs: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Duchi et al. sort-based projection onto the l1 ball, batched."""
    out = xs.copy()
    norms = np.sum(np.abs(xs), axis=1)
    todo = norms > radius
    if not np.any(todo):
        return out
    v = np.abs(xs[todo])
    u = np.sort(v, axis=1)[:, ::-1]
    css = np.cumsum(u, axis=1)
    k = np.arange(1, v.shape[1] + 1)
    cond = u * k > (css - radius)
    rho = v.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = (css[np.arange(v.shape[0]), rho] - radius) / (rho + 1.0)
    w = np.maximum(v - theta[:, None], 0.0)
    out[todo] = np.sign(xs[todo]) * w
    return out


def _project_lp(xs: np.ndarray, p: float) -> np.ndarray:
    """Projection onto the unit l_p ball via bisection on the dual scale.

    KKT for min ||y-x||^2 s.t. sum |y_i|^p <= 1 gives, coordinatewise on
    magnitudes, t + lam*p*t^(p-1) = a; the outer multiplier lam is pinned
    by sum t^p = 1.
    """
    a = np.abs(xs)
    out = xs.copy()
    todo = np.sum(a ** p, axis=1) > 1.0
    if not np.any(todo):
        return out
    av = a[todo]

    def magnitudes(lam):
        lo = np.zeros_like(av)
        hi = av.copy()
        for _ in range(64):
            mid = 0.5 * (lo + hi)
            f = mid + lam[:, None] * p * np.maximum(mid, _EPS) ** (p - 1.0) - av
            hi = np.where(f > 0, mid, hi)
            lo = np.where(f > 0, lo, mid)
        return 0.5 * (lo + hi)

    lam_lo = np.zeros(av.shape[0])
    lam_hi = np.ones(av.shape[0])
    for _ in range(80):
        g = np.sum(magnitudes(lam_hi) ** p, axis=1) - 1.0
        grow = g > 0
        if not np.any(grow):
            break
        lam_hi[grow] *= 2.0
    for _ in range(80):
        mid = 0.5 * (lam_lo + lam_hi)
        g = np.sum(magnitudes(mid) ** p, axis=1) - 1.0
        lam_lo = np.where(g > 0, mid, lam_lo)
        lam_hi = np.where(g > 0, lam_hi, mid)
    t = magnitudes(0.5 * (lam_lo + lam_hi))
    out[todo] = np.sign(xs[todo]) * t
    return out


class Ellipsoid(NormBody):
    """{x : x^T A^{-1} x <= 1} for a positive-definite matrix A."""

    def __init__(self, A):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        w, V = np.linalg.eigh(0.5 * (A + A.T))
        if w[0] <= 0:
            raise ValueError("A must be positive definite")
        self.A = A
        self.dim = A.shape[0]
        self._w = w
        self._V = V

    def __repr__(self):
        return f"Ellipsoid(dim={self.dim})"

    def _coords(self, x):
        return x @ self._V

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        z = self._coords(xs)
        v = np.sqrt(np.sum(z * z / self._w, axis=1))
        return _unbatch(v, squeeze)

    def support(self, u):
        us, squeeze = _as_batch(u)
        z = self._coords(us)
        v = np.sqrt(np.sum(z * z * self._w, axis=1))
        return _unbatch(v, squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        z = self._coords(xs)
        nrm = np.sqrt(np.sum(z * z / self._w, axis=1))
        g = np.zeros_like(xs)
        mask = nrm > 0
        g[mask] = (z[mask] / self._w) @ self._V.T / nrm[mask, None]
        return _unbatch(g, squeeze)

    def sandwich(self) -> SandwichRadii:
        return SandwichRadii(math.sqrt(self._w[0]), math.sqrt(self._w[-1]))

    def project(self, x):
        xs, squeeze = _as_batch(x)
        z = self._coords(xs)
        val = np.sum(z * z / self._w, axis=1)
        out = xs.copy()
        todo = val > 1.0
        if np.any(todo):
            zt = z[todo]
            a = self._w[None, :]
            lam_lo = np.zeros(zt.shape[0])
            lam_hi = np.ones(zt.shape[0])

            def g(lam):
                y = zt * a / (a + lam[:, None])
                return np.sum(y * y / a, axis=1) - 1.0

            for _ in range(100):
                grow = g(lam_hi) > 0
                if not np.any(grow):
                    break
                lam_hi[grow] *= 2.0
            for _ in range(100):
                mid = 0.5 * (lam_lo + lam_hi)
                gm = g(mid)
                lam_lo = np.where(gm > 0, mid, lam_lo)
                lam_hi = np.where(gm > 0, lam_hi, mid)
            lam = 0.5 * (lam_lo + lam_hi)
            y = zt * a / (a + lam[:, None])
            out[todo] = y @ self._V.T
        return _unbatch(out, squeeze)


class Polytope(NormBody):
    """Symmetric polytope {x : F x <= b} given by facet normals and offsets.

    The facet list must be closed under negation (symmetric pairs).
    """

    def __init__(self, facets, offsets):
        F = np.asarray(facets, dtype=float)
        b = np.asarray(offsets, dtype=float)
        if F.ndim != 2 or b.ndim != 1 or F.shape[0] != b.shape[0]:
            raise ValueError("facets (m,n) and offsets (m,) required")
        if np.any(b <= 0):
            raise ValueError("offsets must be positive (0 interior)")
        self.F = F
        self.b = b
        self.dim = F.shape[1]
        self._check_symmetry()
        self._verts: Optional[np.ndarray] = None

    def _check_symmetry(self):
        scaled = self.F / self.b[:, None]
        for row in scaled:
            d = np.linalg.norm(scaled + row[None, :], axis=1)
            if d.min() > 1e-9 * max(1.0, np.linalg.norm(row)):
                raise ValueError("facet set is not symmetric")

    def __repr__(self):
        return f"Polytope(dim={self.dim}, facets={self.F.shape[0]})"

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        v = np.max(xs @ self.F.T / self.b[None, :], axis=1)
        return _unbatch(np.maximum(v, 0.0), squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        idx = np.argmax(xs @ self.F.T / self.b[None, :], axis=1)
        g = self.F[idx] / self.b[idx, None]
        g[np.all(xs == 0, axis=1)] = 0.0
        return _unbatch(g, squeeze)

    def vertices(self) -> np.ndarray:
        if self._verts is None:
            if self.dim == 1:
                hi = float(np.min(self.b / np.abs(self.F[:, 0])))
                self._verts = np.array([[hi], [-hi]])
            else:
                from scipy.spatial import HalfspaceIntersection

                hs = np.hstack([self.F / self.b[:, None], -np.ones((self.F.shape[0], 1))])
                inter = HalfspaceIntersection(hs, np.zeros(self.dim))
                self._verts = inter.intersections
        return self._verts

    def support(self, u):
        us, squeeze = _as_batch(u)
        V = self.vertices()
        v = np.max(us @ V.T, axis=1)
        return _unbatch(v, squeeze)

    def sandwich(self) -> SandwichRadii:
        r = float(np.min(self.b / np.linalg.norm(self.F, axis=1)))
        R = float(np.max(np.linalg.norm(self.vertices(), axis=1)))
        return SandwichRadii(r, R)

    def project(self, x, tol: float = 1e-10, max_cycles: int = 400):
        """Dykstra's algorithm over the facet halfspaces, batched."""
        xs, squeeze = _as_batch(x)
        m = self.F.shape[0]
        y = xs.copy()
        corr = np.zeros((m,) + xs.shape)
        fn2 = np.sum(self.F * self.F, axis=1)
        for _ in range(max_cycles):
            delta = 0.0
            for i in range(m):
                z = y + corr[i]
                viol = (z @ self.F[i] - self.b[i]) / fn2[i]
                step = np.maximum(viol, 0.0)
                y_new = z - step[:, None] * self.F[i][None, :]
                corr[i] = z - y_new
                delta = max(delta, float(np.max(np.abs(y_new - y))) if y.size else 0.0)
                y = y_new
            if delta < tol:
                break
        return _unbatch(y, squeeze)


class Cylinder(NormBody):
    """Q^{+1}: cylinder over a base body, norm max(||x||_Q, |x_last|)."""

    def __init__(self, base: NormBody):
        self.base = base
        self.dim = base.dim + 1

    def __repr__(self):
        return f"Cylinder(base={self.base!r})"

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        v = np.maximum(np.atleast_1d(self.base.norm(xs[:, :-1])), np.abs(xs[:, -1]))
        return _unbatch(v, squeeze)

    def support(self, u):
        us, squeeze = _as_batch(u)
        v = np.atleast_1d(self.base.support(us[:, :-1])) + np.abs(us[:, -1])
        return _unbatch(v, squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        bn = np.atleast_1d(self.base.norm(xs[:, :-1]))
        last = np.abs(xs[:, -1])
        g = np.zeros_like(xs)
        use_base = bn >= last
        gb = np.atleast_2d(self.base.grad_norm(xs[:, :-1]))
        g[use_base, :-1] = gb[use_base]
        g[~use_base, -1] = np.sign(xs[~use_base, -1])
        return _unbatch(g, squeeze)

    def sandwich(self) -> SandwichRadii:
        r, R = self.base.sandwich()
        return SandwichRadii(min(r, 1.0), math.sqrt(R * R + 1.0))

    def project(self, x):
        xs, squeeze = _as_batch(x)
        out = np.empty_like(xs)
        out[:, :-1] = np.atleast_2d(self.base.project(xs[:, :-1]))
        out[:, -1] = np.clip(xs[:, -1], -1.0, 1.0)
        return _unbatch(out, squeeze)


def cylinder_extend(base: NormBody) -> Cylinder:
    """The one-dimension-up cylinder body over ``base``."""
    return Cylinder(base)


class Scaled(NormBody):
    """s * base for a positive scalar s."""

    def __init__(self, base: NormBody, s: float):
        if s <= 0:
            raise ValueError("scale must be positive")
        self.base = base
        self.s = float(s)
        self.dim = base.dim

    def __repr__(self):
        return f"Scaled({self.base!r}, s={self.s})"

    def norm(self, x):
        return self.base.norm(x) / self.s

    def support(self, u):
        return self.s * self.base.support(u)

    def grad_norm(self, x):
        return self.base.grad_norm(x) / self.s

    def sandwich(self) -> SandwichRadii:
        r, R = self.base.sandwich()
        return SandwichRadii(self.s * r, self.s * R)

    def project(self, x):
        xs, squeeze = _as_batch(x)
        y = self.s * np.atleast_2d(self.base.project(xs / self.s))
        return _unbatch(y, squeeze)

    def scaled(self, s: float) -> "NormBody":
        return Scaled(self.base, self.s * float(s))


class LinearImage(NormBody):
    """T(base) for an invertible matrix T; norm(x) = ||T^{-1} x||_base."""

    def __init__(self, T, base: NormBody):
        T = np.asarray(T, dtype=float)
        if T.shape != (base.dim, base.dim):
            raise ValueError("T must be square of the base dimension")
        self.T = T
        self.base = base
        self.dim = base.dim
        self._Tinv = np.linalg.inv(T)
        svals = np.linalg.svd(T, compute_uv=False)
        self._smin, self._smax = float(svals[-1]), float(svals[0])
        if self._smin <= 0:
            raise ValueError("T must be invertible")

    def __repr__(self):
        return f"LinearImage(dim={self.dim}, base={self.base!r})"

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        v = np.atleast_1d(self.base.norm(xs @ self._Tinv.T))
        return _unbatch(v, squeeze)

    def support(self, u):
        us, squeeze = _as_batch(u)
        v = np.atleast_1d(self.base.support(us @ self.T))
        return _unbatch(v, squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        g = np.atleast_2d(self.base.grad_norm(xs @ self._Tinv.T)) @ self._Tinv
        return _unbatch(g, squeeze)

    def sandwich(self) -> SandwichRadii:
        r, R = self.base.sandwich()
        return SandwichRadii(r * self._smin, R * self._smax)

    def project(self, x, tol: float = 1e-8, max_iters: int = 1500):
        """Projection onto T(base): accelerated projected gradient on z.

        Minimizes ||T z - x||^2 over z in the base body (FISTA momentum;
        plain projected gradient needs cond(T)^2 iterations, this needs
        about cond(T)).
        """
        xs, squeeze = _as_batch(x)
        z = np.atleast_2d(self.base.project(xs @ self._Tinv.T))
        w = z
        eta = 1.0 / (self._smax * self._smax)
        thresh = tol * max(1.0, self._smax)
        t_mom = 1.0
        for _ in range(max_iters):
            resid = w @ self.T.T - xs
            z_new = np.atleast_2d(self.base.project(w - eta * (resid @ self.T)))
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_mom * t_mom))
            w = z_new + ((t_mom - 1.0) / t_new) * (z_new - z)
            move = np.max(np.abs(z_new - z)) if z.size else 0.0
            z, t_mom = z_new, t_new
            if move < thresh:
                break
        return _unbatch(z @ self.T.T, squeeze)


class SectionBody(NormBody):
    """K intersected with an n-dim subspace, in subspace coordinates.

    ``embed`` has orthonormal columns (d x n); the section norm of x is
    the ambient K-norm of embed @ x.
    """

    def __init__(self, base: NormBody, embed):
        E = np.asarray(embed, dtype=float)
        if E.shape[0] != base.dim:
            raise ValueError("embedding row count must match base dim")
        self.base = base
        self.E = E
        self.dim = E.shape[1]

    def __repr__(self):
        return f"SectionBody(dim={self.dim}, base={self.base!r})"

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        v = np.atleast_1d(self.base.norm(xs @ self.E.T))
        return _unbatch(v, squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        g = np.atleast_2d(self.base.grad_norm(xs @ self.E.T)) @ self.E
        return _unbatch(g, squeeze)

    def sandwich(self) -> SandwichRadii:
        # r_K * B2 cap V is the r_K ball of the subspace; R only shrinks
        return self.base.sandwich()

    def _project_ambient(self, pts: np.ndarray) -> np.ndarray:
        span = lambda y: (y @ self.E) @ self.E.T
        return _dykstra(lambda y: np.atleast_2d(self.base.project(y)), span, pts)

    def project(self, x):
        xs, squeeze = _as_batch(x)
        amb = self._project_ambient(xs @ self.E.T)
        return _unbatch(amb @ self.E, squeeze)

    def support(self, u):
        us, squeeze = _as_batch(u)
        v = _support_ascent(lambda p: self._project_ambient(p), us @ self.E.T,
                            self.base.sandwich().R)
        return _unbatch(v, squeeze)


class IntersectionWithBall(NormBody):
    """base cap radius*B2; gauge is the max of the two gauges."""

    def __init__(self, base: NormBody, radius: float):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.base = base
        self.radius = float(radius)
        self.dim = base.dim

    def __repr__(self):
        return f"IntersectionWithBall({self.base!r}, radius={self.radius})"

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        v = np.maximum(np.atleast_1d(self.base.norm(xs)),
                       np.linalg.norm(xs, axis=1) / self.radius)
        return _unbatch(v, squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        bn = np.atleast_1d(self.base.norm(xs))
        l2 = np.linalg.norm(xs, axis=1)
        g = np.zeros_like(xs)
        use_base = bn >= l2 / self.radius
        gb = np.atleast_2d(self.base.grad_norm(xs))
        g[use_base] = gb[use_base]
        rest = ~use_base & (l2 > 0)
        g[rest] = xs[rest] / (self.radius * l2[rest, None])
        return _unbatch(g, squeeze)

    def sandwich(self) -> SandwichRadii:
        r, R = self.base.sandwich()
        return SandwichRadii(min(r, self.radius), min(R, self.radius))

    def _clip_ball(self, y: np.ndarray) -> np.ndarray:
        nrm = np.linalg.norm(y, axis=1)
        s = np.where(nrm > self.radius, self.radius / np.maximum(nrm, _EPS), 1.0)
        return y * s[:, None]

    def project(self, x):
        xs, squeeze = _as_batch(x)
        y = _dykstra(lambda z: np.atleast_2d(self.base.project(z)), self._clip_ball, xs)
        return _unbatch(y, squeeze)

    def support(self, u):
        us, squeeze = _as_batch(u)
        v = _support_ascent(self.project, us, min(self.base.sandwich().R, self.radius))
        return _unbatch(np.atleast_1d(v), squeeze)


class HullWithBall(NormBody):
    """conv(base union radius*B2); gauge is the inf-convolution of gauges."""

    def __init__(self, base: NormBody, radius: float, iters: int = 140):
        if radius <= 0:
            raise ValueError("radius must be positive")
        self.base = base
        self.radius = float(radius)
        self.dim = base.dim
        self._iters = iters

    def __repr__(self):
        return f"HullWithBall({self.base!r}, radius={self.radius})"

    def _infconv(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """min_y gauge_base(y) + ||x-y||_2/radius, batched subgradient descent."""
        best_val = np.minimum(np.atleast_1d(self.base.norm(xs)),
                              np.linalg.norm(xs, axis=1) / self.radius)
        take_x = np.atleast_1d(self.base.norm(xs)) <= np.linalg.norm(xs, axis=1) / self.radius
        best_y = np.where(take_x[:, None], xs, 0.0)
        y = 0.5 * xs
        scale = np.maximum(np.linalg.norm(xs, axis=1), 1e-12)
        for k in range(1, self._iters + 1):
            diff = xs - y
            dn = np.linalg.norm(diff, axis=1)
            g = np.atleast_2d(self.base.grad_norm(y))
            gg = g - np.where(dn[:, None] > 1e-14, diff / (self.radius * np.maximum(dn, _EPS)[:, None]), 0.0)
            val = np.atleast_1d(self.base.norm(y)) + dn / self.radius
            better = val < best_val
            best_val = np.where(better, val, best_val)
            best_y = np.where(better[:, None], y, best_y)
            step = (0.35 * scale / (k ** 0.7))[:, None]
            gn = np.maximum(np.linalg.norm(gg, axis=1), 1e-14)[:, None]
            y = y - step * gg / gn
        return best_val, best_y

    def norm(self, x):
        xs, squeeze = _as_batch(x)
        val, _ = self._infconv(xs)
        return _unbatch(val, squeeze)

    def grad_norm(self, x):
        xs, squeeze = _as_batch(x)
        _, y = self._infconv(xs)
        diff = xs - y
        dn = np.linalg.norm(diff, axis=1)
        g = np.where(dn[:, None] > 1e-9,
                     diff / (self.radius * np.maximum(dn, _EPS)[:, None]),
                     np.atleast_2d(self.base.grad_norm(xs)))
        return _unbatch(g, squeeze)

    def support(self, u):
        us, squeeze = _as_batch(u)
        v = np.maximum(np.atleast_1d(self.base.support(us)),
                       self.radius * np.linalg.norm(us, axis=1))
        return _unbatch(v, squeeze)

    def sandwich(self) -> SandwichRadii:
        r, R = self.base.sandwich()
        return SandwichRadii(max(r, self.radius), max(R, self.radius))

    def project(self, x):
        raise NotImplementedError("projection onto hull composites is not needed downstream")


# ----------------------------------------------------------------------
# shared numerical helpers


def linear_image(T, base: NormBody) -> NormBody:
    """T(base), with compositions flattened and ellipsoid images exact.

    Flattening matters for certified sandwich radii: nested images would
    multiply their singular-value bounds instead of composing the maps.
    """
    T = np.asarray(T, dtype=float)
    if isinstance(base, LinearImage):
        return linear_image(T @ base.T, base.base)
    if isinstance(base, Scaled):
        return linear_image(T * base.s, base.base)
    if isinstance(base, Ellipsoid):
        return Ellipsoid(T @ base.A @ T.T)
    if isinstance(base, LpBall) and base.p == 2.0:
        return Ellipsoid(T @ T.T)
    return LinearImage(T, base)


def _dykstra(proj1, proj2, x0: np.ndarray, iters: int = 120, tol: float = 1e-9) -> np.ndarray:
    """Dykstra's alternating projections onto the intersection of two sets."""
    x = x0.copy()
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(iters):
        y = proj1(x + p)
        p = x + p - y
        x_new = proj2(y + q)
        q = y + q - x_new
        if np.max(np.abs(x_new - x)) < tol:
            x = x_new
            break
        x = x_new
    return x


def _support_ascent(project, us: np.ndarray, scale: float, iters: int = 80) -> np.ndarray:
    """max <u, x> over a projectable convex set by projected supergradient ascent."""
    un = us / np.maximum(np.linalg.norm(us, axis=1), _EPS)[:, None]
    x = project(scale * un)
    best = np.sum(us * x, axis=1)
    for k in range(1, iters + 1):
        x = project(x + (0.5 * scale / k) * un)
        val = np.sum(us * x, axis=1)
        best = np.maximum(best, val)
    return best


def ball_radius(body: NormBody) -> Optional[float]:
    """Radius if the body is a Euclidean ball, else None (enables fast paths)."""
    if isinstance(body, LpBall) and body.p == 2.0:
        return 1.0
    if isinstance(body, Scaled):
        r = ball_radius(body.base)
        return None if r is None else r * body.s
    if isinstance(body, Ellipsoid):
        w = body._w
        if np.allclose(w, w[0], rtol=1e-12, atol=0.0):
            return math.sqrt(float(w[0]))
        return None
    if isinstance(body, LinearImage):
        r = ball_radius(body.base)
        if r is not None and abs(body._smax - body._smin) <= 1e-12 * body._smax:
            T = body.T
            if np.allclose(T, T[0, 0] * np.eye(body.dim), atol=1e-12 * body._smax):
                return r * abs(float(T[0, 0]))
        return None
    return None


# ----------------------------------------------------------------------
# Minkowski sums: membership and uniform sampling


def minkowski_contains(bodyA: NormBody, bodyB: NormBody, x,
                       iters: int = 200, tol: float = 1e-7):
    """Membership x in A + B, batched.

    Euclidean-ball components take the exact distance path; otherwise an
    alternating split x = a + b with a in A, b in B is sought and
    membership is declared when the residual drops below ``tol``.
    """
    xs, squeeze = _as_batch(x)
    scale = max(bodyA.sandwich().R + bodyB.sandwich().R, 1e-30)
    tol_eff = tol * min(1.0, scale) if scale < 1.0 else tol
    rB = ball_radius(bodyB)
    if rB is not None:
        pa = np.atleast_2d(bodyA.project(xs))
        d = np.linalg.norm(xs - pa, axis=1)
        return _unbatch(d <= rB + tol_eff, squeeze)
    rA = ball_radius(bodyA)
    if rA is not None:
        pb = np.atleast_2d(bodyB.project(xs))
        d = np.linalg.norm(xs - pb, axis=1)
        return _unbatch(d <= rA + tol_eff, squeeze)
    b = np.zeros_like(xs)
    for _ in range(iters):
        a = np.atleast_2d(bodyA.project(xs - b))
        b = np.atleast_2d(bodyB.project(xs - a))
    resid = np.linalg.norm(xs - a - b, axis=1)
    return _unbatch(resid < tol_eff, squeeze)


def sample_in_body(body: NormBody, rng: np.random.Generator, size: Optional[int] = None,
                   min_rate: float = 1e-6):
    """Uniform samples from a body.

    Product/coordinate structure (lp balls, cylinders, linear images,
    scalings) is sampled directly; everything else falls back to
    rejection from the sandwich box, which is fine at desk dimensions.
    """
    squeeze = size is None
    m = 1 if size is None else int(size)
    direct = _direct_sample(body, rng, m)
    if direct is not None:
        return direct[0] if squeeze else direct
    return _rejection_sample(lambda X: np.atleast_1d(body.contains(X)),
                             body.sandwich().R, body.dim, rng, size, min_rate,
                             what=repr(body))


def _direct_sample(body: NormBody, rng: np.random.Generator, m: int) -> Optional[np.ndarray]:
    if isinstance(body, LpBall):
        n = body.dim
        if body.p == 2.0:
            g = rng.standard_normal((m, n))
            g /= np.maximum(np.linalg.norm(g, axis=1), _EPS)[:, None]
            r = rng.uniform(0.0, 1.0, size=m) ** (1.0 / n)
            return g * r[:, None]
        if math.isinf(body.p):
            return rng.uniform(-1.0, 1.0, size=(m, n))
        # p-generalized normal direction plus radial correction
        g = rng.gamma(1.0 / body.p, 1.0, size=(m, n)) ** (1.0 / body.p)
        g *= rng.choice([-1.0, 1.0], size=(m, n))
        g /= np.maximum(np.sum(np.abs(g) ** body.p, axis=1) ** (1.0 / body.p), _EPS)[:, None]
        r = rng.uniform(0.0, 1.0, size=m) ** (1.0 / n)
        return g * r[:, None]
    if isinstance(body, Scaled):
        inner = _direct_sample(body.base, rng, m)
        return None if inner is None else body.s * inner
    if isinstance(body, Cylinder):
        inner = _direct_sample(body.base, rng, m)
        if inner is None:
            return None
        last = rng.uniform(-1.0, 1.0, size=(m, 1))
        return np.hstack([inner, last])
    if isinstance(body, LinearImage):
        inner = _direct_sample(body.base, rng, m)
        return None if inner is None else inner @ body.T.T
    if isinstance(body, Ellipsoid):
        g = rng.standard_normal((m, body.dim))
        g /= np.maximum(np.linalg.norm(g, axis=1), _EPS)[:, None]
        r = rng.uniform(0.0, 1.0, size=m) ** (1.0 / body.dim)
        half = body._V @ np.diag(np.sqrt(body._w)) @ body._V.T
        return (g * r[:, None]) @ half.T
    return None


def sample_minkowski_sum(bodyA: NormBody, bodyB: NormBody, rng: np.random.Generator,
                         size: Optional[int] = None, min_rate: float = 1e-6):
    """Uniform samples from A + B by rejection from the summed sandwich box."""
    if bodyA.dim != bodyB.dim:
        raise ValueError("dimension mismatch")
    h = bodyA.sandwich().R + bodyB.sandwich().R
    return _rejection_sample(lambda X: np.atleast_1d(minkowski_contains(bodyA, bodyB, X)),
                             h, bodyA.dim, rng, size, min_rate,
                             what=f"{bodyA!r} + {bodyB!r}")


def _rejection_sample(accept_fn, halfwidth, dim, rng, size, min_rate, what=""):
    squeeze = size is None
    want = 1 if size is None else int(size)
    out = np.empty((want, dim))
    got = 0
    tried = 0
    chunk = max(64, min(8192, 4 * want))
    while got < want:
        X = rng.uniform(-halfwidth, halfwidth, size=(chunk, dim))
        ok = accept_fn(X)
        tried += chunk
        hits = X[ok]
        take = min(want - got, hits.shape[0])
        out[got:got + take] = hits[:take]
        got += take
        if tried >= 200000 and got / tried < min_rate:
            raise SamplingInfeasibleError(
                f"acceptance rate {got / tried:.2e} below {min_rate:.0e} for {what}; "
                f"box/body volume ratio too large")
    return out[0] if squeeze else out


# ----------------------------------------------------------------------
# kissing-number variant estimator


@dataclass(frozen=True)
class KissingEstimate:
    """Certified lower bound on the sieve kissing variant k~(L, gamma)."""

    gamma: float
    count: int
    budget: int
    points: np.ndarray = field(repr=False, default=None)


def _sample_shell(body: NormBody, gamma: float, rng: np.random.Generator, m: int) -> np.ndarray:
    u = rng.standard_normal((m, body.dim))
    u /= np.maximum(np.linalg.norm(u, axis=1), _EPS)[:, None]
    g = np.maximum(np.atleast_1d(body.norm(u)), _EPS)
    s = rng.uniform(1.0 - gamma / body.dim, 1.0, size=m)
    return u * (s / g)[:, None]


def estimate_kissing_variant(body: NormBody, gamma: float, budget: int,
                             rng: np.random.Generator) -> KissingEstimate:
    """Greedy maximal packing of shell points with pairwise gauge >= 1-gamma.

    The budget is split into independent greedy passes and the largest
    packing wins; a single pass can stall in a blocked maximal
    configuration.  The returned count is a certified lower bound either
    way: the kept points lie on the shell K \\ (1-gamma/n)K and are
    pairwise (1-gamma)-separated in the body gauge.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0,1)")
    if budget < 1:
        raise ValueError("budget must be >= 1")
    pass_size = max(120, 30 * body.dim)
    best: list[np.ndarray] = []
    remaining = budget
    while remaining > 0:
        m = min(pass_size, remaining)
        remaining -= m
        pts = _sample_shell(body, gamma, rng, m)
        kept: list[np.ndarray] = []
        for v in pts:
            if not kept:
                kept.append(v)
                continue
            diffs = v[None, :] - np.asarray(kept)
            if np.min(np.atleast_1d(body.norm(diffs))) >= 1.0 - gamma:
                kept.append(v)
        if len(kept) > len(best):
            best = kept
    return KissingEstimate(gamma=gamma, count=len(best), budget=budget,
                           points=np.asarray(best))


def cylinder_kissing_report(bodyQ: NormBody, gamma: float, budget: int,
                            rng: np.random.Generator) -> dict:
    """Monitored comparison of k~ estimates for Q and its cylinder Q^{+1}.

    Both sides are greedy lower bounds, so the comparison is reported,
    not asserted.
    """
    base = estimate_kissing_variant(bodyQ, gamma, budget, rng)
    cyl = estimate_kissing_variant(cylinder_extend(bodyQ), gamma, budget, rng)
    bound = math.ceil(2.0 / (1.0 - gamma) + 1.0) * base.count
    return {
        "base_count": base.count,
        "cylinder_count": cyl.count,
        "bound": bound,
        "within_bound": cyl.count <= bound,
    }


# ----------------------------------------------------------------------
# JSON wire format


def body_to_json(body: NormBody) -> dict:
    if isinstance(body, LpBall):
        return {"kind": "lp", "p": body.p if not math.isinf(body.p) else "inf",
                "dim": body.dim}
    if isinstance(body, Ellipsoid):
        return {"kind": "ellipsoid", "A": body.A.tolist()}
    if isinstance(body, Polytope):
        return {"kind": "polytope", "facets": body.F.tolist(), "offsets": body.b.tolist()}
    if isinstance(body, Cylinder):
        return {"kind": "cylinder", "base": body_to_json(body.base)}
    if isinstance(body, LinearImage):
        return {"kind": "image", "T": body.T.tolist(), "base": body_to_json(body.base)}
    if isinstance(body, Scaled):
        T = (body.s * np.eye(body.dim)).tolist()
        return {"kind": "image", "T": T, "base": body_to_json(body.base)}
    raise TypeError(f"no JSON form for {type(body).__name__}")


def body_from_json(data: dict) -> NormBody:
    kind = data["kind"]
    if kind == "lp":
        p = data["p"]
        p = math.inf if p in ("inf", "Infinity") else float(p)
        return LpBall(p, int(data["dim"]))
    if kind == "ellipsoid":
        return Ellipsoid(np.asarray(data["A"], dtype=float))
    if kind == "polytope":
        return Polytope(np.asarray(data["facets"], dtype=float),
                        np.asarray(data["offsets"], dtype=float))
    if kind == "cylinder":
        return Cylinder(body_from_json(data["base"]))
    if kind == "image":
        return LinearImage(np.asarray(data["T"], dtype=float), body_from_json(data["base"]))
    raise ValueError(f"unknown body kind {kind!r}")
