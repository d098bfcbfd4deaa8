"""Conjugated operators and empirical evaluation of the weighted inequalities.

Every inequality term is a quadrature of (positive weight) * |field|^2.
The factor exp(-2*s*phi) is normalized by its maximum exp(-2*s*phi_ref)
so that heavily concentrated weights stay representable; the common log
factor is reported per row and cancels in every left/right ratio.

Volume quadratures run over interior nodes only (weight h per node, zero
at the boundary): restricting the node mask to a subwindow is then the
identity on the retained nodes, and window terms are exact sub-sums of
their volume counterparts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grids
from .grids import Grid1D, TimeGrid, LEFT, RIGHT, boundary_index, trapezoid_weights
from .model import TransformedMatrix, CouplingMatrix
from .weights import WeightSystem, WeightFunction, INTERNAL, BOUNDARY
from .forward import coupling_eigenpairs
from .parallel import parallel_map

INTERNAL_TERMS = (
    "log_scale",
    "lhs_operator",
    "lhs_zero_order",
    "lhs_gradient",
    "lhs_trace_weighted",
    "lhs_trace_plain",
    "rhs_source",
    "rhs_zero_order_window",
    "rhs_gradient_window",
)
BOUNDARY_TERMS = (
    "log_scale",
    "lhs_operator",
    "lhs_zero_order",
    "lhs_gradient",
    "rhs_source",
    "rhs_trace_weighted",
    "rhs_trace_plain",
)


@dataclass(frozen=True)
class ConjugatedOperators:
    """The four first-order-conjugation fields applied to a solution pair."""

    m11: np.ndarray
    m12: np.ndarray
    m21: np.ndarray
    m22: np.ndarray


def assemble_operators(y1: np.ndarray, y2: np.ndarray, ws: WeightSystem,
                       tm: TransformedMatrix) -> ConjugatedOperators:
    """Pointwise evaluation of the conjugated operator quadruple.

    Spatial and temporal derivatives of the fields come from the discrete
    calculus; the weight derivatives come from the closed form.
    """
    grid, tgrid = ws.grid, ws.tgrid
    y1 = grids.check_space_time(grid, tgrid, y1)
    y2 = grids.check_space_time(grid, tgrid, y2)
    if tm.grid.n_nodes != grid.n_nodes:
        raise ValueError("transformed matrix grid does not match the weight grid")
    s = ws.s
    w = ws.eval_weights()
    b11, b12, b21, b22 = tm.b11, tm.b12, tm.b21, tm.b22

    dy1 = grids.gradient(grid, y1)
    dy2 = grids.gradient(grid, y2)
    lap1 = grids.laplacian(grid, y1)
    lap2 = grids.laplacian(grid, y2)
    dt1 = grids.time_derivative(tgrid, y1)
    dt2 = grids.time_derivative(tgrid, y2)

    m11 = (2.0 * s * w.grad_phi * dy1
           + (1j * s * b11 * w.phi_t + s * w.lap_phi - 2.0 * s ** 2 * w.grad_phi_sq) * y1
           + 1j * s * b12 * w.phi_t * y2)
    m12 = ((2.0 * s ** 2 * w.grad_phi_sq - 1j * s * b11 * w.phi_t - s * w.lap_phi) * y1
           - 1j * s * b12 * w.phi_t * y2
           + 1j * b11 * dt1 + 1j * b12 * dt2
           - 2.0 * s * w.grad_phi * dy1 + lap1)
    m21 = (2.0 * s * w.grad_phi * dy2
           + (1j * s * b22 * w.phi_t + s * w.lap_phi - 2.0 * s ** 2 * w.grad_phi_sq) * y2
           + 1j * s * b21 * w.phi_t * y1)
    m22 = (-1j * s * b21 * w.phi_t * y1
           + (2.0 * s ** 2 * w.grad_phi_sq - 1j * s * b22 * w.phi_t - s * w.lap_phi) * y2
           + 1j * b21 * dt1 + 1j * b22 * dt2
           - 2.0 * s * w.grad_phi * dy2 + lap2)
    return ConjugatedOperators(m11, m12, m21, m22)


def operators_on_conjugated(u: np.ndarray, v: np.ndarray, ws: WeightSystem,
                            tm: TransformedMatrix) -> ConjugatedOperators:
    """Second-order-form operators applied to already-conjugated fields.

    Reference implementation for the consistency check exp(-s*phi) *
    (conjugated operators on y) == (these operators on u = exp(-s*phi)*y),
    which holds exactly in the continuum and to O(h^2) discretely.
    """
    grid, tgrid = ws.grid, ws.tgrid
    s = ws.s
    w = ws.eval_weights()
    b11, b12, b21, b22 = tm.b11, tm.b12, tm.b21, tm.b22
    du = grids.gradient(grid, u)
    dv = grids.gradient(grid, v)
    lap_u = grids.laplacian(grid, u)
    lap_v = grids.laplacian(grid, v)
    ut = grids.time_derivative(tgrid, u)
    vt = grids.time_derivative(tgrid, v)
    m11 = (2.0 * s * w.grad_phi * du + s * w.lap_phi * u
           + 1j * s * w.phi_t * (b11 * u + b12 * v))
    m12 = 1j * (b11 * ut + b12 * vt) + lap_u + s ** 2 * w.grad_phi_sq * u
    m21 = (2.0 * s * w.grad_phi * dv + s * w.lap_phi * v
           + 1j * s * w.phi_t * (b21 * u + b22 * v))
    m22 = 1j * (b21 * ut + b22 * vt) + lap_v + s ** 2 * w.grad_phi_sq * v
    return ConjugatedOperators(m11, m12, m21, m22)


@dataclass(frozen=True)
class CarlemanReport:
    """Named quadrature terms of one inequality evaluation at fixed (s, lam).

    Every term carries the common normalization exp(2*s*phi_ref) recorded
    as terms['log_scale'] = 2*s*phi_ref; the ratio is unaffected.
    """

    mode: str
    s: float
    lam: float
    label: str
    terms: dict
    ratio: float

    def term_names(self):
        return INTERNAL_TERMS if self.mode == INTERNAL else BOUNDARY_TERMS


def _volume_weights(grid: Grid1D, mask: np.ndarray | None = None) -> np.ndarray:
    wx = np.full(grid.n_nodes, grid.spacing)
    wx[0] = wx[-1] = 0.0
    if mask is not None:
        wx = np.where(mask, wx, 0.0)
    return wx


def _quad(values: np.ndarray, wx: np.ndarray, wt: np.ndarray) -> float:
    return float(wt @ values @ wx)


def _weighted(measure: np.ndarray, magnitude_sq: np.ndarray) -> np.ndarray:
    prod = measure * magnitude_sq
    return np.where(measure == 0.0, 0.0, prod)


def _trace_terms(y1, y2, ws: WeightSystem, m1: np.ndarray, wt: np.ndarray,
                 sides) -> tuple:
    """Time quadrature of s*lam*theta*(normal-derivative moduli) per variant."""
    s, lam = ws.s, ws.lam
    weighted = 0.0
    plain = 0.0
    for side in sides:
        b = boundary_index(ws.grid, side)
        nd = (np.abs(grids.normal_derivative(ws.grid, y1, side)) ** 2
              + np.abs(grids.normal_derivative(ws.grid, y2, side)) ** 2)
        base = s * lam * float(wt @ _weighted(m1[:, b], nd))
        plain += base
        weighted += abs(ws.weight.normal_dpsi(side)) * base
    return weighted, plain


def _finite_or_raise(terms: dict, label: str):
    for name, val in terms.items():
        if not np.isfinite(val):
            raise FloatingPointError(f"non-finite term {name}={val} for {label}")


def evaluate_internal(y1, y2, f1, f2, ws: WeightSystem, tm: TransformedMatrix,
                      omega: tuple, label: str = "") -> CarlemanReport:
    """All terms of the internal-observation inequality plus their ratio.

    The left side carries the operator quadrature, the cubic-weight and
    gradient volume terms and the boundary trace (both the slope-weighted
    and the plain variant are reported; the slope-weighted one enters the
    ratio).  The right side carries the source quadrature and the two
    window-localized terms.
    """
    grid, tgrid = ws.grid, ws.tgrid
    s, lam = ws.s, ws.lam
    ops = assemble_operators(y1, y2, ws, tm)
    m0 = ws.measure(0.0)
    m1 = ws.measure(1.0)
    m3 = ws.measure(3.0)
    wx = _volume_weights(grid)
    wxo = _volume_weights(grid, grid.omega_mask(*omega))
    wt = trapezoid_weights(tgrid.n_nodes, tgrid.dt)

    op_sq = (np.abs(ops.m11) ** 2 + np.abs(ops.m12) ** 2
             + np.abs(ops.m21) ** 2 + np.abs(ops.m22) ** 2)
    zero_sq = np.abs(y1) ** 2 + np.abs(y2) ** 2
    grad_sq = (np.abs(grids.gradient(grid, y1)) ** 2
               + np.abs(grids.gradient(grid, y2)) ** 2)
    src_sq = np.abs(f1) ** 2 + np.abs(f2) ** 2

    trace_weighted, trace_plain = _trace_terms(y1, y2, ws, m1, wt, (LEFT, RIGHT))
    terms = {
        "log_scale": ws.log_scale,
        "lhs_operator": _quad(_weighted(m0, op_sq), wx, wt),
        "lhs_zero_order": s ** 3 * lam ** 4 * _quad(_weighted(m3, zero_sq), wx, wt),
        "lhs_gradient": s * lam ** 2 * _quad(_weighted(m1, grad_sq), wx, wt),
        "lhs_trace_weighted": trace_weighted,
        "lhs_trace_plain": trace_plain,
        "rhs_source": _quad(_weighted(m0, src_sq), wx, wt),
        "rhs_zero_order_window": s ** 3 * lam ** 4 * _quad(_weighted(m3, zero_sq), wxo, wt),
        "rhs_gradient_window": s * lam ** 2 * _quad(_weighted(m1, grad_sq), wxo, wt),
    }
    _finite_or_raise(terms, label)
    lhs = (terms["lhs_operator"] + terms["lhs_zero_order"]
           + terms["lhs_gradient"] + terms["lhs_trace_weighted"])
    rhs = (terms["rhs_source"] + terms["rhs_zero_order_window"]
           + terms["rhs_gradient_window"])
    ratio = lhs / rhs if rhs > 0.0 else (float("inf") if lhs > 0.0 else float("nan"))
    return CarlemanReport(INTERNAL, s, lam, label, terms, ratio)


def evaluate_boundary(y1, y2, f1, f2, ws: WeightSystem, tm: TransformedMatrix,
                      gamma_plus: str, label: str = "") -> CarlemanReport:
    """All terms of the boundary-observation inequality plus their ratio.

    No trace appears on the left; the right side carries the source
    quadrature and the observed-endpoint trace (slope-weighted variant in
    the ratio, plain variant reported alongside).
    """
    grid, tgrid = ws.grid, ws.tgrid
    s, lam = ws.s, ws.lam
    ops = assemble_operators(y1, y2, ws, tm)
    m0 = ws.measure(0.0)
    m1 = ws.measure(1.0)
    m3 = ws.measure(3.0)
    wx = _volume_weights(grid)
    wt = trapezoid_weights(tgrid.n_nodes, tgrid.dt)

    op_sq = (np.abs(ops.m11) ** 2 + np.abs(ops.m12) ** 2
             + np.abs(ops.m21) ** 2 + np.abs(ops.m22) ** 2)
    zero_sq = np.abs(y1) ** 2 + np.abs(y2) ** 2
    grad_sq = (np.abs(grids.gradient(grid, y1)) ** 2
               + np.abs(grids.gradient(grid, y2)) ** 2)
    src_sq = np.abs(f1) ** 2 + np.abs(f2) ** 2

    trace_weighted, trace_plain = _trace_terms(y1, y2, ws, m1, wt, (gamma_plus,))
    terms = {
        "log_scale": ws.log_scale,
        "lhs_operator": _quad(_weighted(m0, op_sq), wx, wt),
        "lhs_zero_order": s ** 3 * lam ** 4 * _quad(_weighted(m3, zero_sq), wx, wt),
        "lhs_gradient": s * lam ** 2 * _quad(_weighted(m1, grad_sq), wx, wt),
        "rhs_source": _quad(_weighted(m0, src_sq), wx, wt),
        "rhs_trace_weighted": trace_weighted,
        "rhs_trace_plain": trace_plain,
    }
    _finite_or_raise(terms, label)
    lhs = terms["lhs_operator"] + terms["lhs_zero_order"] + terms["lhs_gradient"]
    rhs = terms["rhs_source"] + terms["rhs_trace_weighted"]
    ratio = lhs / rhs if rhs > 0.0 else (float("inf") if lhs > 0.0 else float("nan"))
    return CarlemanReport(BOUNDARY, s, lam, label, terms, ratio)


@dataclass(frozen=True)
class FamilyMember:
    """One manufactured solution pair with its closed-form sources."""

    label: str
    y1: np.ndarray
    y2: np.ndarray
    f1: np.ndarray
    f2: np.ndarray


def manufactured_family(cm: CouplingMatrix, grid: Grid1D, tgrid: TimeGrid):
    """Eigenmode and forced manufactured solutions of the coupling-only system.

    The three homogeneous members ride the exact decoupled evolution of a
    constant coupling matrix; the forced member pairs closed-form fields
    with the sources obtained by applying the operator analytically.
    """
    A = cm.constant_matrix()  # raises for non-constant coefficients
    eigvals, V = coupling_eigenpairs(A)
    x = grid.nodes[None, :]
    t = tgrid.nodes[:, None]
    L = grid.length
    s1 = np.sin(np.pi * x / L)
    s2 = np.sin(2.0 * np.pi * x / L)
    k1 = (np.pi / L) ** 2
    k2 = (2.0 * np.pi / L) ** 2

    z_low = s1 * np.exp(-1j * eigvals[0] * k1 * t)
    z_high = s1 * np.exp(-1j * eigvals[1] * k1 * t)
    z_high2 = s2 * np.exp(-1j * eigvals[1] * k2 * t)
    zero = np.zeros_like(z_low)

    members = [
        FamilyMember("eigen_low", V[0, 0] * z_low, V[1, 0] * z_low, zero, zero),
        FamilyMember("eigen_high", V[0, 1] * z_high, V[1, 1] * z_high, zero, zero),
        FamilyMember(
            "two_mode",
            V[0, 0] * z_low + V[0, 1] * z_high2,
            V[1, 0] * z_low + V[1, 1] * z_high2,
            zero, zero,
        ),
    ]
    y1 = s1 * np.exp(-1j * t)
    y2 = 0.5 * s2 * np.exp(-3j * t)
    f1 = (1.0 - A[0, 0] * k1) * y1 - A[0, 1] * k2 * y2
    f2 = (3.0 - A[1, 1] * k2) * y2 - A[1, 0] * k1 * y1
    members.append(FamilyMember("forced", y1, y2, f1, f2))
    return members


def _sweep_point(args):
    (mode, weight, grid, tgrid, tm, s, lam, members, omega, gamma_plus) = args
    ws = WeightSystem(weight, grid, tgrid, s=s, lam=lam)
    out = []
    for mem in members:
        if mode == INTERNAL:
            out.append(evaluate_internal(mem.y1, mem.y2, mem.f1, mem.f2,
                                         ws, tm, omega, label=mem.label))
        else:
            out.append(evaluate_boundary(mem.y1, mem.y2, mem.f1, mem.f2,
                                         ws, tm, gamma_plus, label=mem.label))
    return out


def sweep(members, weight: WeightFunction, grid: Grid1D, tgrid: TimeGrid,
          tm: TransformedMatrix, s_values, lam_values, mode: str,
          omega: tuple | None = None, gamma_plus: str | None = None,
          jobs: int = 1):
    """Evaluate the chosen inequality over a parameter grid.

    Returns the reports ordered by (s, lam, member); points are
    independent and may run in parallel, the merge order is fixed.
    """
    if mode == INTERNAL and omega is None:
        raise ValueError("internal sweep needs the observation window")
    if mode == BOUNDARY and gamma_plus is None:
        raise ValueError("boundary sweep needs the observed side")
    points = [(mode, weight, grid, tgrid, tm, float(s), float(lam),
               members, omega, gamma_plus)
              for s in s_values for lam in lam_values]
    results = parallel_map(_sweep_point, points, jobs)
    return [report for group in results for report in group]


def summarize(reports):
    """Per-lam trajectory of the max ratio over the family as s grows."""
    per_lam = {}
    for r in reports:
        key = r.lam
        per_lam.setdefault(key, {})
        per_lam[key].setdefault(r.s, 0.0)
        per_lam[key][r.s] = max(per_lam[key][r.s], r.ratio)
    out = {}
    for lam, by_s in per_lam.items():
        out[lam] = sorted(by_s.items())
    return out


def report_rows(reports):
    """Fixed-order table rows: s, lam, label, named terms, ratio."""
    rows = []
    for r in reports:
        names = r.term_names()
        rows.append([r.s, r.lam, r.label] + [r.terms[n] for n in names] + [r.ratio])
    return rows


def report_columns(mode: str):
    names = INTERNAL_TERMS if mode == INTERNAL else BOUNDARY_TERMS
    return ["s", "lambda", "label", *names, "ratio"]
