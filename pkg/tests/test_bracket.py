import numpy as np
import pytest

from splitkit import Diffeo, Line1
from splitkit.bracket import (
    adapted_vs_orthonormal_ratio,
    bound_curve,
    bracket_coefficient,
    det_comparison,
    invariance_identity_residual,
    projected_bracket_norm,
    vector_field_bracket,
)
from splitkit.errors import ChartExitError
from splitkit.frames import (
    AnalyticFrame,
    GridFrame,
    constant_frame,
    contact_frame,
    plane_from_coefficients,
)
from splitkit.geometry import project_along
from conftest import RATE_VOL

E3_LINE = Line1(np.array([0.0, 0.0, 1.0]))


def tilt_frame():
    return AnalyticFrame(
        lambda p: 0.0,
        lambda p: 0.1 * np.sin(2 * np.pi * p[0]),
        grad_a=lambda p: np.zeros(3),
        grad_b=lambda p: np.array([0.2 * np.pi * np.cos(2 * np.pi * p[0]), 0.0, 0.0]),
    )


class TestBracketCoefficient:
    def test_constant_fields(self):
        bs = bracket_coefficient(constant_frame(0.7, -1.3), np.array([0.3, 0.3, 0.3]))
        assert abs(bs.c) < 1e-12
        assert not bs.resolved

    def test_contact_field(self):
        bs = bracket_coefficient(contact_frame(), np.array([0.2, 0.5, 0.7]), h=1e-4)
        assert bs.c == pytest.approx(1.0, abs=1e-8)
        assert bs.resolved

    def test_mixed_linear_field(self):
        # a = x3, b = x1: c = X(b) - Y(a) = 1 - x1
        fr = AnalyticFrame(lambda p: p[2], lambda p: p[0])
        bs = bracket_coefficient(fr, np.array([0.25, 0.4, 0.1]), h=1e-4)
        assert bs.c == pytest.approx(0.75, abs=1e-7)

    def test_tilt_field_closed_form(self):
        fr = tilt_frame()
        for x1 in (0.0, 0.15, 0.4, 0.8):
            bs = bracket_coefficient(fr, np.array([x1, 0.3, 0.6]), h=1e-4)
            assert bs.c == pytest.approx(0.2 * np.pi * np.cos(2 * np.pi * x1), abs=1e-8)

    def test_second_order_signature(self):
        fr = AnalyticFrame(
            lambda p: 0.3 * np.sin(2 * np.pi * p[2]) * np.cos(2 * np.pi * p[0]),
            lambda p: 0.2 * np.cos(2 * np.pi * p[1]) + 0.1 * np.sin(2 * np.pi * p[2]),
        )
        bs = bracket_coefficient(fr, np.array([0.12, 0.37, 0.81]), h=2e-3)
        assert bs.resolved
        assert 3.0 <= bs.order_ratio <= 5.0

    def test_halving_within_error_bar(self):
        fr = AnalyticFrame(
            lambda p: 0.3 * np.sin(2 * np.pi * p[2]) * np.cos(2 * np.pi * p[0]),
            lambda p: 0.2 * np.cos(2 * np.pi * p[1]),
        )
        x = np.array([0.21, 0.43, 0.65])
        coarse = bracket_coefficient(fr, x, h=2e-3)
        fine = bracket_coefficient(fr, x, h=1e-3)
        assert abs(coarse.c - fine.c) <= 4.0 * coarse.error + 1e-12

    def test_stencil_leaves_chart(self):
        base = constant_frame(0.1, 0.2)
        grid = GridFrame.from_frame(base, [0.0, 0.0, 0.0], [1.0, 1.0, 0.0], 5)
        with pytest.raises(ChartExitError, match="h <"):
            bracket_coefficient(grid, np.array([0.99999, 0.5, 0.0]), h=1e-4)


class TestProjectedBracket:
    def test_constant_plane_field(self):
        P = plane_from_coefficients(0.2, -0.4)
        pb = projected_bracket_norm(
            Diffeo.identity(), np.array([0.5, 0.5, 0.5]), 0, plane_field=lambda p: P,
            fast_line=E3_LINE,
        )
        assert pb.norm < 1e-8

    def test_contact_two_path_evaluation(self):
        # direct FD bracket of the orthonormal pair field versus the
        # adapted-frame route |c| * ||pi e3|| / |frame change det|
        fr = contact_frame()
        plane_field = lambda p: fr.plane(p)
        for x1 in (0.0, 0.3, 0.7):
            x = np.array([x1, 0.5, 0.5])
            pb = projected_bracket_norm(
                Diffeo.identity(), x, 0, plane_field=plane_field, fast_line=E3_LINE
            )
            c = bracket_coefficient(fr, x).c
            pi_e3 = np.linalg.norm(project_along([0.0, 0.0, 1.0], fr.plane(x), E3_LINE))
            change = np.sqrt(1.0 + x1 * x1)  # Gram factor of (X, Y) vs orthonormal
            indirect = abs(c) * pi_e3 / change
            assert pb.norm == pytest.approx(indirect, abs=1e-6)
            assert pb.norm == pytest.approx(1.0 / np.sqrt(1.0 + x1 * x1), abs=1e-6)

    def test_perturbed_depth_five(self, phi_perturbed, tilt_E0):
        pb = projected_bracket_norm(phi_perturbed, np.zeros(3), 5, h=1e-6, E0=tilt_E0)
        assert np.isfinite(pb.norm)

    def test_comparison_constant_on_contact(self):
        fr = contact_frame()
        pts = [np.array([u, v, w]) for u in (0.1, 0.5) for v in (0.2, 0.7) for w in (0.3,)]
        ratios = adapted_vs_orthonormal_ratio(fr, lambda p: fr.plane(p), E3_LINE, pts)
        for p, r in zip(pts, ratios):
            assert r == pytest.approx(np.sqrt(1.0 + p[0] ** 2), abs=1e-6)
        assert max(ratios) < 1.5

    def test_comparison_constant_uniform_over_grid(self):
        # the measured adapted-vs-orthonormal constant stays uniform over a
        # 10^3 sample grid of the chart
        fr = contact_frame()
        us = np.linspace(0.05, 0.95, 10)
        pts = [np.array([u, v, w]) for u in us for v in us for w in us]
        ratios = adapted_vs_orthonormal_ratio(fr, lambda p: fr.plane(p), E3_LINE, pts)
        assert len(ratios) == 1000
        assert max(ratios) < np.sqrt(2.0) + 1e-6
        expected = [np.sqrt(1.0 + p[0] ** 2) for p in pts]
        assert np.max(np.abs(np.array(ratios) - expected)) < 1e-6


class TestFrameIndependence:
    def test_rotated_pair_same_projected_norm(self):
        # two different smooth orthonormal frames of the contact planes give
        # the same projected bracket norm (unimodular change of frame)
        fr = contact_frame()

        def gs_pair(p):
            Q = fr.plane(p).orthonormal_basis()
            return Q[:, 0], Q[:, 1]

        def rotated_pair(p):
            Q = fr.plane(p).orthonormal_basis()
            th = 0.4 * np.sin(2 * np.pi * p[0] + 0.3)
            Z = np.cos(th) * Q[:, 0] + np.sin(th) * Q[:, 1]
            W = -np.sin(th) * Q[:, 0] + np.cos(th) * Q[:, 1]
            return Z, W

        x = np.array([0.35, 0.2, 0.6])
        norms = []
        for pair in (gs_pair, rotated_pair):
            br = vector_field_bracket(lambda p: pair(p)[0], lambda p: pair(p)[1], x, 1e-4)
            norms.append(np.linalg.norm(project_along(br, fr.plane(x), E3_LINE)))
        assert norms[0] == pytest.approx(norms[1], abs=1e-6)


class TestInvarianceIdentities:
    def test_linear_degenerate(self, phi_linear):
        res = invariance_identity_residual(phi_linear, np.zeros(3), 3, k_plane=400, k_line=600)
        assert res.degenerate
        assert res.residual == 0.0

    def test_contact_under_identity(self, tilt_E0):
        phi = Diffeo.identity()
        contact_field = lambda p: contact_frame().plane(p)
        res = invariance_identity_residual(
            phi, np.array([0.3, 0.4, 0.5]), 3, E0=contact_field, k_plane=2, k_line=2
        )
        assert not res.degenerate
        assert res.residual < 1e-12
        assert res.norm_identity_rel_err < 1e-12

    def test_perturbed_small_residual(self, phi_perturbed):
        res = invariance_identity_residual(
            phi_perturbed, np.zeros(3), 3, k_plane=500, k_line=800
        )
        assert not res.degenerate
        assert res.residual < 1e-3
        assert res.norm_identity_rel_err < 1e-8


class TestBoundCurve:
    def test_linear_involutive_initial(self, phi_linear):
        # the coordinate plane is involutive and pullbacks of involutive
        # fields stay involutive: the lhs is identically zero
        bc = bound_curve(phi_linear, np.zeros(3), 10, k_plane=400, k_line=600)
        for e in bc.entries:
            assert e.lhs < 1e-7
        assert bc.rate_rhs == pytest.approx(RATE_VOL, abs=1e-6)

    def test_linear_tilt_initial_bounded_quotient(self, phi_linear, tilt_E0):
        bc = bound_curve(
            phi_linear, np.zeros(3), 20, h=3e-6, E0=tilt_E0, k_plane=500, k_line=800
        )
        resolved = bc.resolved_quotients()
        assert len(resolved) >= 3
        assert all(q < 20.0 for _, q in resolved)
        rm = bc.running_max()
        assert rm[19] <= rm[9] * 1.05 + 1e-12
        assert bc.rate_rhs == pytest.approx(RATE_VOL, abs=1e-4)

    def test_perturbed_tilt_initial(self, phi_perturbed, tilt_E0):
        bc = bound_curve(
            phi_perturbed, np.zeros(3), 20, h=3e-6, E0=tilt_E0, k_plane=500, k_line=800
        )
        resolved = bc.resolved_quotients()
        assert len(resolved) >= 3
        assert all(np.isfinite(q) for _, q in resolved)
        rm = bc.running_max()
        assert abs(rm[19] - rm[9]) <= 0.05 * rm[9]

    def test_rhs_matches_domination_table(self, phi_linear, tilt_E0):
        from splitkit.splitting import swept_growth

        bc = bound_curve(phi_linear, np.zeros(3), 8, E0=tilt_E0, k_plane=400, k_line=600)
        g = swept_growth(phi_linear, np.zeros(3), 8, E0=tilt_E0, burn_in_plane=400, burn_in_line=600)
        for e, lv in zip(bc.entries, g.log_vol()):
            assert e.rhs == pytest.approx(float(np.exp(lv)), abs=1e-10)

    def test_limit_bracket_within_measurement_floor(self, phi_perturbed, tilt_E0):
        # the converged plane field is involutive up to what FD can resolve
        bc = bound_curve(
            phi_perturbed, np.zeros(3), 5, h=3e-6, E0=tilt_E0, k_plane=500, k_line=800
        )
        assert bc.limit_lhs <= 5.0 * max(bc.limit_lhs_error, 1e-11)


class TestDetComparison:
    def test_linear_quotient_bounded(self, phi_linear):
        q, valid = det_comparison(phi_linear, np.array([0.3, 0.4, 0.5]), 30, k_plane=400)
        assert valid.sum() >= 8  # float precision carries the slow plane this far
        assert np.all(q[valid] < 10.0)
        assert np.all(q[valid] > 0.0)
        # away from the precision boundary the quotients oscillate in a band
        assert np.all((1.5 < q[:9]) & (q[:9] < 3.0))

    def test_perturbed_valid_window(self, phi_perturbed, tilt_E0):
        q, valid = det_comparison(phi_perturbed, np.zeros(3), 12, E0=tilt_E0, k_plane=400)
        assert valid.sum() >= 6
        assert np.all(np.isfinite(q[valid]))
