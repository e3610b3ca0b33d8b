"""Adapted and orthonormal local frames of a plane field.

A plane transverse to the third coordinate axis is the span of
X = d/dx1 + a d/dx3 and Y = d/dx2 + b d/dx3; the coefficient pair (a, b) is
the graph slope of the plane and is what all bracket computations consume.
Frames come from analytic formulas, from dynamical pullback at depth k, or
from a cached interpolation grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Diffeo, orbit
from .errors import ChartExitError, ChartUnsuitableError
from .geometry import Plane2, unit
from .splitting import _as_plane_field, _pull_back_basis

CHART_NORMAL_TOL = 1e-6


def adapted_coefficients(plane: Plane2):
    """Graph coefficients (a, b) of a plane with X = e1 + a e3, Y = e2 + b e3."""
    n = plane.normal
    if abs(n[2]) <= CHART_NORMAL_TOL:
        raise ChartUnsuitableError(
            f"chart unsuitable: |normal_3| = {abs(n[2]):.3e} <= {CHART_NORMAL_TOL:g}; "
            "permute coordinates so the plane is a graph over (x1, x2)"
        )
    return float(-n[0] / n[2]), float(-n[1] / n[2])


def plane_from_coefficients(a, b) -> Plane2:
    return Plane2.spanned_by([1.0, 0.0, a], [0.0, 1.0, b])


class AdaptedFrame:
    """Base class: a coefficient pair (a, b) evaluable over a chart domain."""

    domain = None  # None = whole torus; else (lo, hi) arrays for a box

    def coefficients(self, p):
        raise NotImplementedError

    def a(self, p):
        return self.coefficients(p)[0]

    def b(self, p):
        return self.coefficients(p)[1]

    def X(self, p):
        return np.array([1.0, 0.0, self.a(p)])

    def Y(self, p):
        return np.array([0.0, 1.0, self.b(p)])

    def plane(self, p) -> Plane2:
        a, b = self.coefficients(p)
        return plane_from_coefficients(a, b)

    def in_domain(self, p):
        if self.domain is None:
            return True
        lo, hi = self.domain
        return bool(np.all(p >= lo) and np.all(p <= hi))

    def _require_domain(self, p):
        if not self.in_domain(p):
            raise ChartExitError(f"point {np.asarray(p)} outside frame domain")

    def gradient_a(self, p, h=1e-6):
        return self._fd_gradient(0, p, h)

    def gradient_b(self, p, h=1e-6):
        return self._fd_gradient(1, p, h)

    def _fd_gradient(self, which, p, h):
        p = np.asarray(p, dtype=float)
        g = np.empty(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            g[i] = (self.coefficients(p + e)[which] - self.coefficients(p - e)[which]) / (2 * h)
        return g


class AnalyticFrame(AdaptedFrame):
    """Coefficients given by closed-form functions, with optional gradients."""

    def __init__(self, a, b, grad_a=None, grad_b=None, domain=None):
        self._a = a
        self._b = b
        self._grad_a = grad_a
        self._grad_b = grad_b
        self.domain = domain

    def coefficients(self, p):
        self._require_domain(np.asarray(p, dtype=float))
        p = np.asarray(p, dtype=float)
        return float(self._a(p)), float(self._b(p))

    def gradient_a(self, p, h=1e-6):
        if self._grad_a is not None:
            return np.asarray(self._grad_a(np.asarray(p, dtype=float)), dtype=float)
        return super().gradient_a(p, h)

    def gradient_b(self, p, h=1e-6):
        if self._grad_b is not None:
            return np.asarray(self._grad_b(np.asarray(p, dtype=float)), dtype=float)
        return super().gradient_b(p, h)


def constant_frame(a, b) -> AnalyticFrame:
    zero = lambda p: np.zeros(3)
    return AnalyticFrame(lambda p: a, lambda p: b, grad_a=zero, grad_b=zero)


def contact_frame() -> AnalyticFrame:
    """The kernel of dx3 - x1 dx2: a = 0, b = x1, bracket coefficient 1."""
    return AnalyticFrame(
        lambda p: 0.0,
        lambda p: p[0],
        grad_a=lambda p: np.zeros(3),
        grad_b=lambda p: np.array([1.0, 0.0, 0.0]),
    )


def pullback_plane_at(phi: Diffeo, p, E0=None, k=1) -> Plane2:
    """The depth-k pullback plane at a single point (no sequence bookkeeping)."""
    field = _as_plane_field(E0)
    pts = orbit(phi, p, k)
    diffs = [phi.differential(q) for q in pts[:-1]]
    B, _ = _pull_back_basis(diffs, field(pts[-1]).orthonormal_basis())
    return Plane2(B)


class PullbackFrame(AdaptedFrame):
    """Adapted frame of the depth-k pullback plane field, evaluated on demand.

    Evaluations are cached by point key; the field is pure, so the cache is
    write-once and thread-safe enough for grid sweeps.
    """

    def __init__(self, phi: Diffeo, k: int, E0=None):
        self.phi = phi
        self.k = int(k)
        self.E0 = E0
        self._cache = {}

    def coefficients(self, p):
        p = np.asarray(p, dtype=float)
        key = p.tobytes()
        hit = self._cache.get(key)
        if hit is None:
            if self.k == 0:
                plane = _as_plane_field(self.E0)(p)
            else:
                plane = pullback_plane_at(self.phi, p, self.E0, self.k)
            hit = adapted_coefficients(plane)
            self._cache[key] = hit
        return hit


class GridFrame(AdaptedFrame):
    """Coefficients sampled on a regular box grid with bilinear interpolation.

    The grid is a cache in the (x1, x2) chart footprint at a fixed x3 slab
    thickness of zero: coefficients of pullback fields vary in all three
    coordinates, so this is only appropriate for plotting dumps and fast
    previews, not for bracket stencils.
    """

    def __init__(self, lo, hi, values_a, values_b):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        self.values_a = np.asarray(values_a, dtype=float)
        self.values_b = np.asarray(values_b, dtype=float)
        self.domain = (self.lo, self.hi)

    @classmethod
    def from_frame(cls, frame: AdaptedFrame, lo, hi, n):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        xs = np.linspace(lo[0], hi[0], n)
        ys = np.linspace(lo[1], hi[1], n)
        A = np.empty((n, n))
        B = np.empty((n, n))
        for i, xv in enumerate(xs):
            for j, yv in enumerate(ys):
                A[i, j], B[i, j] = frame.coefficients(np.array([xv, yv, lo[2]]))
        return cls(lo, hi, A, B)

    def coefficients(self, p):
        p = np.asarray(p, dtype=float)
        self._require_domain(p)
        n = self.values_a.shape[0]
        t = (p[:2] - self.lo[:2]) / np.maximum(self.hi[:2] - self.lo[:2], 1e-300) * (n - 1)
        i0 = np.clip(np.floor(t).astype(int), 0, n - 2)
        f = t - i0
        out = []
        for V in (self.values_a, self.values_b):
            v00 = V[i0[0], i0[1]]
            v10 = V[i0[0] + 1, i0[1]]
            v01 = V[i0[0], i0[1] + 1]
            v11 = V[i0[0] + 1, i0[1] + 1]
            out.append(
                float(
                    v00 * (1 - f[0]) * (1 - f[1])
                    + v10 * f[0] * (1 - f[1])
                    + v01 * (1 - f[0]) * f[1]
                    + v11 * f[0] * f[1]
                )
            )
        return out[0], out[1]


@dataclass(frozen=True)
class OrthonormalPair:
    """Orthonormal basis of a plane aligned with the right singular vectors
    of the depth-k restricted cocycle, so the product of the image norms
    equals |det| of the restriction."""

    Z: np.ndarray
    W: np.ndarray
    log_image_norms: tuple  # (log ||D(phi^k) Z||, log ||D(phi^k) W||)
    isotropic: bool
    k: int

    @property
    def log_det(self):
        return self.log_image_norms[0] + self.log_image_norms[1]


def svd_orthonormal_pair(phi: Diffeo, x, E: Plane2, k: int, tie_tol=1e-12) -> OrthonormalPair:
    """Right-singular-vector pair of D(phi^k) restricted to E at x.

    On a singular-value tie the SVD direction is arbitrary; the stored basis
    is then used unchanged and the pair flagged isotropic.
    """
    Q0 = E.orthonormal_basis()
    if k == 0:
        return OrthonormalPair(Q0[:, 0], Q0[:, 1], (0.0, 0.0), True, 0)
    pts = orbit(phi, x, k)
    Q = Q0
    T = np.eye(2)
    log_acc = 0.0
    for j in range(k):
        M = phi.differential(pts[j]) @ Q
        Q, R = np.linalg.qr(M)
        T = R @ T
        scale = np.max(np.abs(T))
        log_acc += np.log(scale)
        T = T / scale
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[0] - sv[1] <= tie_tol * sv[0]:
        return OrthonormalPair(
            Q0[:, 0], Q0[:, 1], (np.log(sv[0]) + log_acc, np.log(sv[1]) + log_acc), True, k
        )
    _, _, Vt = np.linalg.svd(T)
    Z = Q0 @ Vt[0]
    W = Q0 @ Vt[1]
    return OrthonormalPair(
        Z, W, (np.log(sv[0]) + log_acc, np.log(sv[1]) + log_acc), False, k
    )


def normalized_pushforward(phi: Diffeo, x, v, k: int):
    """Unit vector D(phi^k) v / ||D(phi^k) v|| at phi^k(x), plus the log norm."""
    pts = orbit(phi, x, k)
    w = unit(np.asarray(v, dtype=float))
    log_n = 0.0
    for j in range(k):
        w = phi.differential(pts[j]) @ w
        n = np.linalg.norm(w)
        log_n += np.log(n)
        w = w / n
    return w, log_n


def normalized_images(pair: OrthonormalPair, phi: Diffeo, x, k: int):
    """The unit images of the pair under D(phi^k), spanning the plane at phi^k(x)."""
    Zt, _ = normalized_pushforward(phi, x, pair.Z, k)
    Wt, _ = normalized_pushforward(phi, x, pair.W, k)
    return Zt, Wt


def aligned_pair_field(phi: Diffeo, k: int, plane_field, ref_point):
    """Callable p -> (Z(p), W(p)): SVD pairs sign-aligned to a reference point.

    SVD vectors carry an arbitrary sign per point; aligning to the reference
    pair makes the field continuous over a finite-difference stencil.
    """
    ref_point = np.asarray(ref_point, dtype=float)
    ref = svd_orthonormal_pair(phi, ref_point, plane_field(ref_point), k)

    def field(p):
        p = np.asarray(p, dtype=float)
        pr = svd_orthonormal_pair(phi, p, plane_field(p), k)
        Z, W = pr.Z, pr.W
        if abs(Z @ ref.Z) < abs(W @ ref.Z):
            Z, W = W, Z  # singular directions crossed between stencil points
        if Z @ ref.Z < 0:
            Z = -Z
        if W @ ref.W < 0:
            W = -W
        return Z, W

    return field


def frame_change_determinant(Z, W, A, B) -> float:
    """Determinant of the change of basis from (A, B) to (Z, W) in their plane."""
    return float((Z @ A) * (W @ B) - (Z @ B) * (W @ A))


def coefficient_grid_rows(frames_by_k, lo, hi, n, x3=0.0):
    """Rows (x1, x2, x3, k, a, b) over a regular grid, for plotting dumps."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    xs = np.linspace(lo[0], hi[0], n)
    ys = np.linspace(lo[1], hi[1], n)
    rows = []
    for k, frame in frames_by_k:
        for xv in xs:
            for yv in ys:
                a, b = frame.coefficients(np.array([xv, yv, x3]))
                rows.append((float(xv), float(yv), float(x3), int(k), a, b))
    return rows


def transversal_difference_quotient(frame: AdaptedFrame, p, h=1e-4, direction=2):
    """|a(p + h e_dir) - a(p)| / h and the same for b (Lipschitz probes)."""
    p = np.asarray(p, dtype=float)
    e = np.zeros(3)
    e[direction] = h
    a0, b0 = frame.coefficients(p)
    a1, b1 = frame.coefficients(p + e)
    return abs(a1 - a0) / h, abs(b1 - b0) / h
