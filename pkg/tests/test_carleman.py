import math

import numpy as np
import pytest

from carleman_lab.grids import Grid1D, TimeGrid
from carleman_lab.model import PotentialSet, SourcePair, transform, transform_sources
from carleman_lab.forward import BoundaryData, ForwardProblem, solve
from carleman_lab.weights import WeightSystem, build_boundary_psi, build_internal_psi
from carleman_lab.carleman import (
    assemble_operators,
    evaluate_boundary,
    evaluate_internal,
    manufactured_family,
    operators_on_conjugated,
    report_columns,
    report_rows,
    summarize,
    sweep,
)

from conftest import default_coupling, fit_order


def _weight_system(grid, tgrid, s=1.0, lam=1.0):
    w = build_internal_psi(grid, (0.3, 0.5), k_const=2.0)
    return WeightSystem(w, grid, tgrid, s=s, lam=lam)


def _zero_potentials(grid, y10, y20):
    zero = np.zeros(grid.n_nodes)
    return PotentialSet(grid, zero, zero, zero, zero, y10, y20)


class TestAssembleOperators:
    def test_zero_fields(self):
        grid, tgrid = Grid1D(1.0, 15), TimeGrid(1.0, 8)
        ws = _weight_system(grid, tgrid)
        tm = transform(default_coupling(grid))
        z = np.zeros((tgrid.n_nodes, grid.n_nodes), dtype=complex)
        ops = assemble_operators(z, z, ws, tm)
        for m in (ops.m11, ops.m12, ops.m21, ops.m22):
            assert np.max(np.abs(m)) == 0.0

    def test_grid_mismatch_rejected(self):
        grid, tgrid = Grid1D(1.0, 15), TimeGrid(1.0, 8)
        ws = _weight_system(grid, tgrid)
        tm = transform(default_coupling(grid))
        bad = np.zeros((tgrid.n_nodes, grid.n_nodes - 1), dtype=complex)
        with pytest.raises(ValueError):
            assemble_operators(bad, bad, ws, tm)

    def test_single_point_symbolic_oracle(self):
        # independent evaluation of the first operator pair at one node from
        # closed-form derivatives of y1 = exp(-t) sin(pi x), y2 = 0
        n = 63
        grid, tgrid = Grid1D(1.0, n), TimeGrid(1.0, n + 1)
        ws = _weight_system(grid, tgrid, s=1.0, lam=1.0)
        tm = transform(default_coupling(grid))
        x = grid.nodes
        t = tgrid.nodes[:, None]
        y1 = np.exp(-t) * np.sin(np.pi * x)[None, :]
        y2 = np.zeros_like(y1)
        ops = assemble_operators(y1, y2, ws, tm)

        ix, it = 16, 16  # x = 0.25, t = 0.25
        xv, tv = 0.25, 0.25
        s = lam = 1.0
        b11, b12 = 2.0 / 3.0, -1.0 / 3.0
        psi = 2.0 - (xv - 0.4) ** 2
        dpsi = -2.0 * (xv - 0.4)
        c_psi = 3.0
        tt = tv * (1.0 - tv)
        theta = math.exp(lam * psi) / tt
        amp = math.exp(lam * c_psi) - math.exp(lam * psi)
        phi_t = -amp * (1.0 - 2.0 * tv) / tt ** 2
        grad_phi = -lam * theta * dpsi
        lap_phi = -theta * (lam ** 2 * dpsi ** 2 + lam * (-2.0))
        grad_phi_sq = grad_phi ** 2

        y1v = math.exp(-tv) * math.sin(math.pi * xv)
        dy1v = math.pi * math.exp(-tv) * math.cos(math.pi * xv)
        dty1v = -y1v
        lap_y1v = -math.pi ** 2 * y1v

        m11_ref = (2.0 * s * grad_phi * dy1v
                   + (1j * s * b11 * phi_t + s * lap_phi
                      - 2.0 * s ** 2 * grad_phi_sq) * y1v)
        m12_ref = ((2.0 * s ** 2 * grad_phi_sq - 1j * s * b11 * phi_t
                    - s * lap_phi) * y1v
                   + 1j * b11 * dty1v - 2.0 * s * grad_phi * dy1v + lap_y1v)
        assert ops.m11[it, ix] == pytest.approx(m11_ref, rel=5e-3)
        assert ops.m12[it, ix] == pytest.approx(m12_ref, rel=5e-3)

    def test_sum_telescopes_to_sources(self):
        # solved homogeneous system: the pairwise sums reproduce the
        # rewritten-system right sides up to discretization error
        norms, spacings = [], []
        for n in (31, 63, 127):
            grid, tgrid = Grid1D(1.0, n), TimeGrid(0.5, n + 1)
            x = grid.nodes
            ps = _zero_potentials(grid, np.sin(np.pi * x).astype(complex),
                                  (0.4 * np.sin(np.pi * x)).astype(complex))
            cm = default_coupling(grid)
            tt = tgrid.nodes[:, None]
            src = SourcePair(np.sin(np.pi * x)[None, :] * np.exp(-1j * tt) * (1 + 0.5j),
                             0.3 * np.sin(np.pi * x)[None, :] * np.exp(-2j * tt))
            problem = ForwardProblem(grid, tgrid, cm, ps, src, BoundaryData.zero(tgrid))
            y1, y2 = solve(problem)
            ws = _weight_system(grid, tgrid, s=2.0, lam=2.0)
            tm = transform(cm)
            ops = assemble_operators(y1, y2, ws, tm)
            F = transform_sources(cm, src)
            r1 = ops.m11 + ops.m12 - F.f1
            r2 = ops.m21 + ops.m22 - F.f2
            inner = (slice(1, -1), grid.interior)
            cell = grid.spacing * tgrid.dt
            norms.append(np.sqrt(cell * (np.sum(np.abs(r1[inner]) ** 2)
                                         + np.sum(np.abs(r2[inner]) ** 2))))
            spacings.append(grid.spacing)
        assert fit_order(spacings, norms) >= 1.5

    def test_conjugation_consistency(self):
        # exp(-s*phi) * (operators on y) matches the second-order form on
        # u = exp(-s*phi) * y to O(h^2) on manufactured fields
        diffs, spacings = [], []
        for n in (31, 63):
            grid, tgrid = Grid1D(1.0, n), TimeGrid(1.0, 2 * (n + 1))
            ws = _weight_system(grid, tgrid, s=1.0, lam=1.0)
            tm = transform(default_coupling(grid))
            x = grid.nodes
            t = tgrid.nodes[:, None]
            y1 = np.exp(-t) * np.sin(np.pi * x)[None, :]
            y2 = (0.3 + 0.1j) * np.exp(-2.0 * t) * np.sin(2.0 * np.pi * x)[None, :]
            ops = assemble_operators(y1, y2, ws, tm)
            ew = ws.eval_weights().exp_weight
            conj_w = np.sqrt(ew)  # exp(-s*phi)
            u, v = conj_w * y1, conj_w * y2
            ref = operators_on_conjugated(u, v, ws, tm)
            # compare away from the time ends where the weight vanishes
            window = (slice(tgrid.n_nodes // 4, 3 * tgrid.n_nodes // 4), grid.interior)
            diff = max(
                np.max(np.abs((conj_w * ops.m11 - ref.m11)[window])),
                np.max(np.abs((conj_w * ops.m12 - ref.m12)[window])),
                np.max(np.abs((conj_w * ops.m21 - ref.m21)[window])),
                np.max(np.abs((conj_w * ops.m22 - ref.m22)[window])),
            )
            diffs.append(diff)
            spacings.append(grid.spacing)
        assert fit_order(spacings, diffs) >= 1.8


class TestEvaluateInternal:
    def _setup(self, n=31, s=2.0, lam=2.0):
        grid, tgrid = Grid1D(1.0, n), TimeGrid(1.0, n + 1)
        ws = _weight_system(grid, tgrid, s=s, lam=lam)
        tm = transform(default_coupling(grid))
        return grid, tgrid, ws, tm

    def test_zero_solution_zero_terms(self):
        grid, tgrid, ws, tm = self._setup()
        z = np.zeros((tgrid.n_nodes, grid.n_nodes), dtype=complex)
        rep = evaluate_internal(z, z, z, z, ws, tm, (0.3, 0.5))
        for name, val in rep.terms.items():
            if name != "log_scale":
                assert val == 0.0
        assert math.isnan(rep.ratio)

    def test_terms_nonnegative_and_finite(self):
        grid, tgrid, ws, tm = self._setup()
        members = manufactured_family(default_coupling(grid), grid, tgrid)
        for mem in members:
            rep = evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2, ws, tm, (0.3, 0.5),
                                    label=mem.label)
            for name, val in rep.terms.items():
                assert np.isfinite(val)
                if name != "log_scale":
                    assert val >= 0.0
            assert np.isfinite(rep.ratio)

    def test_raw_weighted_terms_decrease_in_s(self):
        # raw term = reported term * exp(-log_scale); fixed fields, s doubled
        grid, tgrid, ws1, tm = self._setup(s=2.0, lam=1.0)
        ws2 = WeightSystem(ws1.weight, grid, tgrid, s=4.0, lam=1.0)
        mem = manufactured_family(default_coupling(grid), grid, tgrid)[0]
        r1 = evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2, ws1, tm, (0.3, 0.5))
        r2 = evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2, ws2, tm, (0.3, 0.5))
        for name in ("lhs_zero_order", "lhs_gradient"):
            raw1 = r1.terms[name] * math.exp(-r1.terms["log_scale"])
            raw2 = r2.terms[name] * math.exp(-r2.terms["log_scale"])
            # the cubic-weight term also carries s^3: divide the powers out
            power = 3.0 if name == "lhs_zero_order" else 1.0
            assert raw2 / 4.0 ** power < raw1 / 2.0 ** power

    def test_full_window_restriction_is_identity(self):
        grid, tgrid, ws, tm = self._setup()
        mem = manufactured_family(default_coupling(grid), grid, tgrid)[2]
        full = (grid.spacing, 1.0 - grid.spacing)
        rep = evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2, ws, tm, full)
        assert rep.terms["rhs_zero_order_window"] == rep.terms["lhs_zero_order"]
        assert rep.terms["rhs_gradient_window"] == rep.terms["lhs_gradient"]

    def test_window_shrink_monotone(self):
        grid, tgrid, ws, tm = self._setup()
        mem = manufactured_family(default_coupling(grid), grid, tgrid)[2]
        wide = evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2, ws, tm, (0.3, 0.5))
        narrow = evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2, ws, tm, (0.35, 0.45))
        assert (narrow.terms["rhs_zero_order_window"]
                <= wide.terms["rhs_zero_order_window"])
        assert (narrow.terms["rhs_gradient_window"]
                <= wide.terms["rhs_gradient_window"])

    def test_eigenmode_regression_values(self):
        # golden values pinned from the first certified run of the solved
        # eigenmode pair at s = lam = 2 on the 63 x 64 grid
        grid, tgrid = Grid1D(1.0, 63), TimeGrid(1.0, 64)
        x = grid.nodes
        zero = np.zeros(grid.n_nodes)
        ps = _zero_potentials(grid, np.sin(np.pi * x).astype(complex),
                              np.sin(np.pi * x).astype(complex))
        from carleman_lab.forward import spectral_oracle
        p = ForwardProblem(grid, tgrid, default_coupling(grid), ps,
                           SourcePair.zero(grid, tgrid), BoundaryData.zero(tgrid))
        y1, y2 = spectral_oracle(p)
        ws = _weight_system(grid, tgrid, s=2.0, lam=2.0)
        f = np.zeros_like(y1)
        rep = evaluate_internal(y1, y2, f, f, ws, transform(default_coupling(grid)),
                                (0.3, 0.5), label="eigen")
        golden = {
            "log_scale": 5581.3585403751395,
            "lhs_operator": 15698.839392481692,
            "lhs_zero_order": 1719042.352474485,
            "lhs_gradient": 2.410039082988794,
            "lhs_trace_weighted": 2.1497420945863654e-102,
            "lhs_trace_plain": 2.6871776182329566e-102,
            "rhs_source": 0.0,
            "rhs_zero_order_window": 1719042.3479881282,
            "rhs_gradient_window": 2.4100390501623927,
        }
        for name, value in golden.items():
            assert rep.terms[name] == pytest.approx(value, rel=1e-10, abs=1e-300)
            if name != "log_scale":
                assert rep.terms[name] >= 0.0
        assert rep.ratio == pytest.approx(1.0091323066520315, rel=1e-10)

    def test_ratio_scale_invariant(self):
        grid, tgrid, ws, tm = self._setup()
        mem = manufactured_family(default_coupling(grid), grid, tgrid)[3]
        rep = evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2, ws, tm, (0.3, 0.5))
        c = 3.0 - 4.0j
        scaled = evaluate_internal(c * mem.y1, c * mem.y2, c * mem.f1, c * mem.f2,
                                   ws, tm, (0.3, 0.5))
        assert scaled.ratio == pytest.approx(rep.ratio, rel=1e-12)


class TestEvaluateBoundary:
    def test_trace_positive_and_ratio_finite(self):
        grid, tgrid = Grid1D(1.0, 63), TimeGrid(1.0, 64)
        w = build_boundary_psi(grid, "right", delta=0.5, k_const=6.0)
        ws = WeightSystem(w, grid, tgrid, s=1.0, lam=1.0)
        tm = transform(default_coupling(grid))
        mem = manufactured_family(default_coupling(grid), grid, tgrid)[0]
        rep = evaluate_boundary(mem.y1, mem.y2, mem.f1, mem.f2, ws, tm, "right")
        assert rep.terms["rhs_trace_weighted"] > 0.0
        assert np.isfinite(rep.ratio)
        # at this weight scale the volume measure collapses onto the
        # observed endpoint, so the plain variant differs by the slope factor
        assert rep.terms["rhs_trace_plain"] > 0.0


class TestSweep:
    def test_single_pair_single_report_per_member(self):
        grid, tgrid = Grid1D(1.0, 31), TimeGrid(1.0, 32)
        cm = default_coupling(grid)
        members = manufactured_family(cm, grid, tgrid)
        w = build_internal_psi(grid, (0.3, 0.5), k_const=2.0)
        reports = sweep(members, w, grid, tgrid, transform(cm), [2.0], [1.0],
                        "internal", omega=(0.3, 0.5))
        assert len(reports) == len(members)
        assert {r.label for r in reports} == {m.label for m in members}

    def test_parallel_matches_serial(self):
        grid, tgrid = Grid1D(1.0, 31), TimeGrid(1.0, 32)
        cm = default_coupling(grid)
        members = manufactured_family(cm, grid, tgrid)[:2]
        w = build_internal_psi(grid, (0.3, 0.5), k_const=2.0)
        tm = transform(cm)
        serial = sweep(members, w, grid, tgrid, tm, [1.0, 2.0], [1.0], "internal",
                       omega=(0.3, 0.5), jobs=1)
        parallel = sweep(members, w, grid, tgrid, tm, [1.0, 2.0], [1.0], "internal",
                         omega=(0.3, 0.5), jobs=2)
        assert [r.ratio for r in serial] == [r.ratio for r in parallel]
        for a, b in zip(serial, parallel):
            assert a.terms == b.terms

    def test_report_table_shape(self):
        grid, tgrid = Grid1D(1.0, 31), TimeGrid(1.0, 32)
        cm = default_coupling(grid)
        members = manufactured_family(cm, grid, tgrid)
        w = build_internal_psi(grid, (0.3, 0.5), k_const=2.0)
        reports = sweep(members, w, grid, tgrid, transform(cm), [2.0], [1.0],
                        "internal", omega=(0.3, 0.5))
        cols = report_columns("internal")
        rows = report_rows(reports)
        assert all(len(row) == len(cols) for row in rows)
        # format contract: 4 anchor columns plus the named terms
        assert len(cols) == 4 + len(reports[0].term_names())

    def test_summary_per_lambda(self):
        grid, tgrid = Grid1D(1.0, 31), TimeGrid(1.0, 32)
        cm = default_coupling(grid)
        members = manufactured_family(cm, grid, tgrid)[:1]
        w = build_internal_psi(grid, (0.3, 0.5), k_const=2.0)
        reports = sweep(members, w, grid, tgrid, transform(cm), [1.0, 2.0],
                        [1.0, 2.0], "internal", omega=(0.3, 0.5))
        summary = summarize(reports)
        assert set(summary) == {1.0, 2.0}
        assert [s for s, _ in summary[1.0]] == [1.0, 2.0]
