"""Chart-level linear algebra on the 3-torus.

Points live in [0,1)^3 with the flat wrap-around metric; 2-planes and lines
in a tangent space are carried by explicit spanning vectors.  Everything here
is plain numpy on small fixed-size arrays, immutable after construction, and
safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePlaneError, TransversalityError

GRAM_TOL = 1e-12

# Ordered basis of the wedge space Lambda^2(R^3).
WEDGE_PAIRS = ((0, 1), (0, 2), (1, 2))

# Hodge star on wedge coordinates: e1^e2 -> e3, e1^e3 -> -e2, e2^e3 -> e1.
HODGE_STAR = np.array([[0.0, 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])
HODGE_STAR.setflags(write=False)


def wrap_point(p):
    """Reduce chart coordinates to the fundamental domain [0,1)^3."""
    return np.asarray(p, dtype=float) % 1.0


def torus_delta(p, q):
    """Shortest signed displacement q -> p, componentwise in [-1/2, 1/2)."""
    d = (np.asarray(p, dtype=float) - np.asarray(q, dtype=float) + 0.5) % 1.0 - 0.5
    return d


def torus_distance(p, q):
    """Euclidean length of the wrap-around displacement."""
    return float(np.linalg.norm(torus_delta(p, q)))


def unit(v):
    n = np.linalg.norm(v)
    if n < GRAM_TOL:
        raise ValueError("cannot normalize a (near-)zero vector")
    return np.asarray(v, dtype=float) / n


def sign_normalize(v, tol=1e-12):
    """Flip the sign so the first component larger than ``tol`` is positive."""
    v = np.asarray(v, dtype=float)
    for c in v:
        if abs(c) > tol:
            return v if c > 0 else -v
    return v


def det3(M):
    """Determinant of a 3x3 matrix by cofactor expansion (exact for ints)."""
    M = np.asarray(M)
    return (
        M[0, 0] * (M[1, 1] * M[2, 2] - M[1, 2] * M[2, 1])
        - M[0, 1] * (M[1, 0] * M[2, 2] - M[1, 2] * M[2, 0])
        + M[0, 2] * (M[1, 0] * M[2, 1] - M[1, 1] * M[2, 0])
    )


def adjugate3(M):
    """Adjugate (transposed cofactor matrix); integer-exact for integer input."""
    M = np.asarray(M)
    out = np.empty((3, 3), dtype=M.dtype)
    for i in range(3):
        for j in range(3):
            r = [k for k in range(3) if k != j]
            c = [k for k in range(3) if k != i]
            minor = M[r][:, c]
            out[i, j] = (-1) ** (i + j) * (minor[0, 0] * minor[1, 1] - minor[0, 1] * minor[1, 0])
    return out


def condition_number(M):
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


@dataclass(frozen=True)
class Line1:
    """A 1-dimensional direction, unit length and sign-normalized."""

    direction: np.ndarray

    def __post_init__(self):
        d = sign_normalize(unit(self.direction))
        d.setflags(write=False)
        object.__setattr__(self, "direction", d)

    def angle_to(self, other: "Line1") -> float:
        # atan2 of cross and dot stays accurate for near-parallel lines
        c = abs(float(self.direction @ other.direction))
        s = float(np.linalg.norm(np.cross(self.direction, other.direction)))
        return float(np.arctan2(s, c))


@dataclass(frozen=True)
class Plane2:
    """A tangent 2-plane stored as a spanning pair with cached unit normal."""

    basis: np.ndarray  # shape (3, 2), columns span the plane
    normal: np.ndarray = field(init=False)

    def __post_init__(self):
        B = np.array(self.basis, dtype=float).reshape(3, 2)
        gram = np.linalg.det(B.T @ B)
        if gram <= GRAM_TOL:
            raise DegeneratePlaneError(f"degenerate plane: Gram determinant {gram:.3e}")
        n = sign_normalize(unit(np.cross(B[:, 0], B[:, 1])))
        B.setflags(write=False)
        n.setflags(write=False)
        object.__setattr__(self, "basis", B)
        object.__setattr__(self, "normal", n)

    @classmethod
    def spanned_by(cls, u, v):
        return cls(np.column_stack([np.asarray(u, dtype=float), np.asarray(v, dtype=float)]))

    def orthonormal_basis(self):
        """Gram-Schmidt of the stored pair, shape (3, 2)."""
        q1 = unit(self.basis[:, 0])
        w = self.basis[:, 1] - (self.basis[:, 1] @ q1) * q1
        return np.column_stack([q1, unit(w)])

    def contains(self, v, tol=1e-10):
        return abs(float(self.normal @ v)) <= tol * max(1.0, float(np.linalg.norm(v)))


def principal_angle(P: Plane2, Q: Plane2) -> float:
    """Largest principal angle between two 2-planes, in [0, pi/2].

    The cosine route loses resolution below sqrt(2 eps) ~ 1.5e-8, so small
    angles are recomputed from the projection onto the orthogonal complement
    (the sine of the angle), which is accurate down to machine precision.
    """
    A = P.orthonormal_basis()
    B = Q.orthonormal_basis()
    s = np.linalg.svd(A.T @ B, compute_uv=False)
    theta = float(np.arccos(np.clip(s.min(), -1.0, 1.0)))
    if theta < 1e-4:
        resid = B - A @ (A.T @ B)
        sines = np.linalg.svd(resid, compute_uv=False)
        return float(np.arcsin(np.clip(sines.max(), -1.0, 1.0)))
    return theta


def line_plane_angle(L: Line1, P: Plane2) -> float:
    """Angle between a line and a plane, in [0, pi/2]."""
    s = abs(float(P.normal @ L.direction))
    return float(np.arcsin(np.clip(s, -1.0, 1.0)))


def exterior_square(M):
    """Induced action on Lambda^2(R^3) in the basis e1^e2, e1^e3, e2^e3.

    Built from 2x2 minors, so it is defined for singular matrices too, and
    exterior_square(M @ N) == exterior_square(M) @ exterior_square(N).
    """
    M = np.asarray(M, dtype=float)
    out = np.empty((3, 3))
    for a, (i, j) in enumerate(WEDGE_PAIRS):
        for b, (k, l) in enumerate(WEDGE_PAIRS):
            out[a, b] = M[i, k] * M[j, l] - M[i, l] * M[j, k]
    return out


def wedge_coordinates(u, v):
    """Coordinates of u ^ v in the basis e1^e2, e1^e3, e2^e3."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return np.array(
        [
            u[0] * v[1] - u[1] * v[0],
            u[0] * v[2] - u[2] * v[0],
            u[1] * v[2] - u[2] * v[1],
        ]
    )


def restricted_singular_values(M, P: Plane2):
    """Singular values (s1 <= s2) of M restricted to the plane P.

    s2 is the operator norm of the restriction and s1*s2 its |det|, both with
    respect to the ambient flat metric; the result does not depend on the
    choice of orthonormal basis of P.
    """
    s = np.linalg.svd(np.asarray(M, dtype=float) @ P.orthonormal_basis(), compute_uv=False)
    return float(s[1]), float(s[0])


def restricted_determinant(M, P: Plane2) -> float:
    """|det| of M restricted to P (area expansion factor of the plane)."""
    s1, s2 = restricted_singular_values(M, P)
    return s1 * s2


def project_along(v, E: Plane2, F: Line1, min_angle=1e-8):
    """Component of v in F along E (the projection onto F with kernel E)."""
    ang = line_plane_angle(F, E)
    if ang <= min_angle:
        raise TransversalityError(
            f"transversality lost: line-plane angle {ang:.3e} <= {min_angle:.1e}", angle=ang
        )
    A = np.column_stack([E.basis, F.direction])
    coef = np.linalg.solve(A, np.asarray(v, dtype=float))
    return coef[2] * F.direction
