"""Numerical diagnostics for unique integrability.

Two families of checks: 1-form certificate data on a fixed x2-slice (sup-norm
convergence of the graph coefficient and boundedness of its transversal
derivative across pullback depths), and leaf comparisons (flow-order
commutator defect and Lipschitz dependence of patches on their seed point).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import Diffeo
from .frames import AdaptedFrame, PullbackFrame
from .surface import ChartBox, FlowSpec, SurfacePatch, build_patch


@dataclass(frozen=True)
class HartmanData:
    slice_x2: float
    ks: tuple
    sup_da_dx3: tuple  # per-k sup over the slice grid of |da^(k)/dx3|
    sup_distance: tuple  # per-k sup |a^(k) - a| on the slice
    bounded: bool  # every sup finite
    distances_decreasing: bool

    @property
    def max_sup(self):
        return max(self.sup_da_dx3)


def hartman_slice_report(
    frames,
    limit_frame: AdaptedFrame,
    slice_x2: float,
    grid_n: int = 12,
    h: float = 1e-5,
    decrease_slack: float = 1e-9,
) -> HartmanData:
    """Certificate data for a family of frames on the slice x2 = const.

    ``frames`` is a sequence of (k, AdaptedFrame).  The verdict reports what
    was measured: finiteness of the transversal-derivative sups and sup-norm
    distances to the limit coefficient that do not increase with k.
    """
    xs = np.linspace(0.0, 1.0, grid_n, endpoint=False)
    zs = np.linspace(0.0, 1.0, grid_n, endpoint=False)
    ks = []
    sup_d = []
    sup_dist = []
    for k, frame in frames:
        worst_d = 0.0
        worst_dist = 0.0
        for xv in xs:
            for zv in zs:
                p = np.array([xv, slice_x2, zv])
                a_k = frame.a(p)
                a_lim = limit_frame.a(p)
                da = (frame.a(p + np.array([0.0, 0.0, h])) - frame.a(p - np.array([0.0, 0.0, h]))) / (
                    2 * h
                )
                worst_d = max(worst_d, abs(da))
                worst_dist = max(worst_dist, abs(a_k - a_lim))
        ks.append(int(k))
        sup_d.append(float(worst_d))
        sup_dist.append(float(worst_dist))
    # two-step envelope: convergence with an alternating-sign transient is
    # not monotone at consecutive depths, but every other depth must shrink
    decreasing = all(
        sup_dist[i] <= sup_dist[i - 2] + decrease_slack for i in range(2, len(sup_dist))
    )
    return HartmanData(
        slice_x2=float(slice_x2),
        ks=tuple(ks),
        sup_da_dx3=tuple(sup_d),
        sup_distance=tuple(sup_dist),
        bounded=bool(np.all(np.isfinite(sup_d)) and np.all(np.isfinite(sup_dist))),
        distances_decreasing=bool(decreasing),
    )


def pullback_hartman_report(
    phi: Diffeo,
    slice_x2: float,
    k_max: int,
    E0=None,
    k_ref: int | None = None,
    grid_n: int = 12,
    h: float = 1e-5,
) -> HartmanData:
    """Hartman slice data for the pullback frames of a diffeomorphism."""
    if k_ref is None:
        # the slow plane converges at the (possibly mild) domination gap, so
        # the reference frame must sit far beyond the reported depths
        k_ref = max(200, 2 * k_max)
    frames = [(k, PullbackFrame(phi, k, E0=E0)) for k in range(1, k_max + 1)]
    limit = PullbackFrame(phi, k_ref, E0=E0)
    return hartman_slice_report(frames, limit, slice_x2, grid_n=grid_n, h=h)


@dataclass(frozen=True)
class LeafComparison:
    order_mismatch: float  # max node distance between xy- and yx-ordered patches
    delta: float
    lipschitz: float  # max patch displacement / seed displacement
    lipschitz_refined: float  # same at delta / 2
    stability: float  # |refined - original| / original


def _patch_distance(p1: SurfacePatch, p2: SurfacePatch) -> float:
    return float(np.max(np.linalg.norm(p1.points - p2.points, axis=2)))


def leaf_divergence(
    frame: AdaptedFrame,
    x0,
    epsilon: float,
    n: int,
    delta: float,
    spec: FlowSpec = FlowSpec(),
    chart: ChartBox | None = None,
) -> LeafComparison:
    """Order-commutation and seed-Lipschitz diagnostics for one frame.

    The seed displacement is along the first orthonormal direction of the
    frame's plane at x0, so both seeds lie on the same candidate leaf when
    the frame is integrable.
    """
    x0 = np.asarray(x0, dtype=float)
    if chart is None:
        chart = ChartBox(center=x0.copy(), halfwidth=0.45)
    p_xy = build_patch(frame, x0, epsilon, n, spec=spec, chart=chart, order="xy")
    p_yx = build_patch(frame, x0, epsilon, n, spec=spec, chart=chart, order="yx")
    mismatch = _patch_distance(p_xy, p_yx)

    u = frame.plane(x0).orthonormal_basis()[:, 0]

    def lip(d):
        shifted = build_patch(frame, x0 + d * u, epsilon, n, spec=spec, chart=chart, order="xy")
        return _patch_distance(p_xy, shifted) / d

    l1 = lip(delta)
    l2 = lip(delta / 2)
    return LeafComparison(
        order_mismatch=float(mismatch),
        delta=float(delta),
        lipschitz=float(l1),
        lipschitz_refined=float(l2),
        stability=float(abs(l2 - l1) / max(l1, 1e-300)),
    )
