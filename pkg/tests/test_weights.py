import math

import numpy as np
import pytest

from carleman_lab import grids
from carleman_lab.grids import Grid1D, TimeGrid
from carleman_lab.weights import (
    BOUNDARY,
    INTERNAL,
    WeightFunction,
    WeightSystem,
    build_boundary_psi,
    build_internal_psi,
    certify,
    constant_psi,
)

from conftest import fit_order


@pytest.fixture
def unit_grid():
    return Grid1D(1.0, 63)


class TestBuildInternal:
    def test_reference_window(self, unit_grid):
        # direct evaluation of the quadratic and its derivative
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        assert w.x0 == pytest.approx(0.4)
        assert float(np.min(w.psi(unit_grid.nodes))) == pytest.approx(2.0 - 0.36)
        assert 2.0 - 0.36 > 0.75 * 2.0
        assert w.normal_dpsi("left") == pytest.approx(-0.8)
        assert w.normal_dpsi("right") == pytest.approx(-1.2)
        assert w.mu == pytest.approx(4.0 * 0.1 ** 2)

    def test_narrow_window(self, unit_grid):
        w = build_internal_psi(unit_grid, (0.45, 0.55), k_const=2.0)
        assert w.mu == pytest.approx(4.0 * 0.05 ** 2)

    def test_window_touching_boundary_rejected(self, unit_grid):
        with pytest.raises(ValueError):
            build_internal_psi(unit_grid, (0.0, 0.2))

    def test_insufficient_headroom_rejected(self, unit_grid):
        with pytest.raises(ValueError, match="three-quarters"):
            build_internal_psi(unit_grid, (0.3, 0.5), k_const=1.44)

    def test_auto_constant_certifies(self, unit_grid):
        w = build_internal_psi(unit_grid, (0.3, 0.5))
        assert certify(w, unit_grid, INTERNAL).passed


class TestBuildBoundary:
    def test_right_side(self, unit_grid):
        w = build_boundary_psi(unit_grid, "right", delta=0.5, k_const=6.0)
        psi = w.psi(unit_grid.nodes)
        assert float(np.min(psi)) == pytest.approx(6.25)
        assert w.psi_sup() == pytest.approx(8.25)
        assert 6.25 > 0.75 * 8.25
        assert w.normal_dpsi("right") == pytest.approx(3.0)
        assert w.normal_dpsi("left") == pytest.approx(-1.0)
        assert w.mu == pytest.approx(1.0)

    def test_left_side_mirror(self, unit_grid):
        w = build_boundary_psi(unit_grid, "left", delta=0.5, k_const=6.0)
        mirror = build_boundary_psi(unit_grid, "right", delta=0.5, k_const=6.0)
        np.testing.assert_allclose(w.psi(unit_grid.nodes),
                                   mirror.psi(1.0 - unit_grid.nodes), rtol=1e-13)
        assert w.normal_dpsi("left") == pytest.approx(3.0)
        assert w.normal_dpsi("right") == pytest.approx(-1.0)
        assert certify(w, unit_grid, BOUNDARY).passed

    def test_zero_delta_rejected(self, unit_grid):
        with pytest.raises(ValueError, match="delta"):
            build_boundary_psi(unit_grid, "right", delta=0.0)


class TestCertify:
    def test_built_internal_passes_with_margins(self, unit_grid):
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        report = certify(w, unit_grid, INTERNAL)
        assert report.passed
        assert report.entry("pseudoconvex_outside_window").margin == pytest.approx(0.04)
        assert report.entry("normal_nonpositive_on_boundary").margin == pytest.approx(-0.8)
        assert report.entry("above_three_quarters_sup").margin == pytest.approx(0.14)

    def test_built_boundary_passes_with_margins(self, unit_grid):
        w = build_boundary_psi(unit_grid, "right", delta=0.5, k_const=6.0)
        report = certify(w, unit_grid, BOUNDARY)
        assert report.passed
        assert report.entry("pseudoconvex_everywhere").margin == pytest.approx(1.0)
        assert report.entry("normal_positive_on_observed_side").margin == pytest.approx(3.0)
        assert report.entry("above_three_quarters_sup").margin == pytest.approx(0.0625)

    def test_parabola_vanishing_at_boundary_fails(self, unit_grid):
        # psi = x(1-x) as a capped quadratic: cap 0.25 at x0 = 0.5
        w = WeightFunction(kind="internal_quadratic", length=1.0, k_const=0.25,
                           mu=4.0 * 0.1 ** 2, x0=0.5, omega=(0.4, 0.6))
        report = certify(w, unit_grid, INTERNAL)
        assert not report.passed
        assert not report.entry("above_three_quarters_sup").passed

    def test_constant_fails_gradient(self, unit_grid):
        w = constant_psi(unit_grid, 2.0, omega=(0.3, 0.5))
        report = certify(w, unit_grid, INTERNAL)
        assert not report.passed
        assert not report.entry("grad_nonzero_outside_window").passed


class TestEvalWeights:
    def test_constant_psi_theta(self):
        grid = Grid1D(1.0, 7)
        tgrid = TimeGrid(2.0, 4)
        w = constant_psi(grid, 1.3)
        ws = WeightSystem(w, grid, tgrid, s=1.0, lam=1.0)
        bundle = ws.eval_weights()
        # t = 1 is node 2; t*(T-t) = 1 there
        np.testing.assert_allclose(bundle.theta[2], math.e ** 1.3, rtol=1e-13)

    def test_closed_form_midpoint_value(self):
        # phi at the window midpoint equals (e^{2*3} - e^{2*2}) / 0.25
        grid = Grid1D(1.0, 4)  # h = 0.2, x = 0.4 is node 2
        tgrid = TimeGrid(1.0, 4)  # t = 0.5 is node 2
        w = build_internal_psi(grid, (0.3, 0.5), k_const=2.0)
        ws = WeightSystem(w, grid, tgrid, s=10.0, lam=2.0)
        phi = ws.eval_weights().phi
        expected = (math.exp(6.0) - math.exp(4.0)) / 0.25
        assert phi[2, 2] == pytest.approx(expected, rel=1e-13)

    def test_endpoint_slices_zero(self, unit_grid):
        tgrid = TimeGrid(1.0, 8)
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        ws = WeightSystem(w, unit_grid, tgrid, s=2.0, lam=1.0)
        b = ws.eval_weights()
        for arr in (b.theta, b.phi, b.phi_t, b.grad_phi, b.lap_phi,
                    b.grad_phi_sq, b.exp_weight):
            assert np.all(arr[0] == 0.0)
            assert np.all(arr[-1] == 0.0)

    def test_weight_peaks_at_mid_time(self, unit_grid):
        tgrid = TimeGrid(1.0, 16)
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        ws = WeightSystem(w, unit_grid, tgrid, s=1.0, lam=1.0)
        ew = ws.eval_weights().exp_weight
        mid = tgrid.n_steps // 2
        assert np.all(ew[1:-1] <= ew[mid][None, :] + 1e-300)

    def test_positivity_on_interior_slices(self, unit_grid):
        tgrid = TimeGrid(1.0, 8)
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        b = WeightSystem(w, unit_grid, tgrid, s=1.0, lam=1.0).eval_weights()
        inner = slice(1, -1)
        assert np.all(b.theta[inner] > 0.0)
        assert np.all(b.phi[inner] > 0.0)
        assert np.all((b.exp_weight[inner] > 0.0) & (b.exp_weight[inner] < 1.0))

    def test_monotone_in_s(self, unit_grid):
        tgrid = TimeGrid(1.0, 8)
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        e1 = WeightSystem(w, unit_grid, tgrid, s=1.0, lam=1.0).eval_weights().exp_weight
        e2 = WeightSystem(w, unit_grid, tgrid, s=2.0, lam=1.0).eval_weights().exp_weight
        assert np.all(e2[1:-1] < e1[1:-1])

    def test_gradient_chain_rule_order(self):
        errors, spacings = [], []
        tgrid = TimeGrid(1.0, 8)
        for n in (31, 63, 127):
            g = Grid1D(1.0, n)
            w = build_internal_psi(g, (0.3, 0.5), k_const=2.0)
            ws = WeightSystem(w, g, tgrid, s=1.0, lam=1.0)
            b = ws.eval_weights()
            err = np.abs(grids.gradient(g, b.phi[4]) - b.grad_phi[4])
            errors.append(np.max(err[1:-1]))
            spacings.append(g.spacing)
        assert fit_order(spacings, errors) >= 1.9

    def test_phi_t_chain_rule_order(self, unit_grid):
        errors, steps = [], []
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        for n_t in (32, 64, 128):
            tg = TimeGrid(1.0, n_t)
            ws = WeightSystem(w, unit_grid, tg, s=1.0, lam=1.0)
            b = ws.eval_weights()
            num = grids.time_derivative(tg, b.phi)
            mid = slice(n_t // 4, 3 * n_t // 4)  # away from the singular ends
            errors.append(np.max(np.abs(num - b.phi_t)[mid]))
            steps.append(tg.dt)
        assert fit_order(steps, errors) >= 1.9

    def test_phi_t_bound_by_theta_squared(self, unit_grid):
        # |phi_t| <= C1 * theta^2 with C1 = e^{lam*C_psi} * T * e^{-2*lam*min psi}
        tgrid = TimeGrid(1.0, 32)
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        ws = WeightSystem(w, unit_grid, tgrid, s=1.0, lam=2.0)
        b = ws.eval_weights()
        inner = slice(1, -1)
        ratio = np.abs(b.phi_t[inner]) / b.theta[inner] ** 2
        psi_min = float(np.min(w.psi(unit_grid.nodes)))
        c1 = math.exp(ws.lam * ws.c_psi) * tgrid.horizon * math.exp(-2.0 * ws.lam * psi_min)
        assert np.max(ratio) <= c1

    def test_measure_matches_raw_weight(self):
        # at moderate parameters the normalized measure re-scales exactly
        grid = Grid1D(1.0, 15)
        tgrid = TimeGrid(1.0, 8)
        w = build_internal_psi(grid, (0.3, 0.5), k_const=2.0)
        ws = WeightSystem(w, grid, tgrid, s=1.0, lam=1.0)
        b = ws.eval_weights()
        m0 = ws.measure(0.0)
        inner = slice(1, -1)
        np.testing.assert_allclose(
            m0[inner], b.exp_weight[inner] * math.exp(ws.log_scale), rtol=1e-12)
        m3 = ws.measure(3.0)
        np.testing.assert_allclose(
            m3[inner],
            b.theta[inner] ** 3 * b.exp_weight[inner] * math.exp(ws.log_scale),
            rtol=1e-11)

    def test_requires_unit_parameters(self, unit_grid):
        tgrid = TimeGrid(1.0, 8)
        w = build_internal_psi(unit_grid, (0.3, 0.5), k_const=2.0)
        with pytest.raises(ValueError):
            WeightSystem(w, unit_grid, tgrid, s=0.5, lam=1.0)
