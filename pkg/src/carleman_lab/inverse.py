"""Stability experiments and reconstruction of the stationary potential.

The stability pipelines solve the system twice (reference and perturbed
potential), form the difference fields, and compare the squared potential
difference against discrete observation norms.  The time-reversal pieces
(conjugate-even extension onto a doubled horizon, reversed time derivative,
terminal-slice identity) mirror the construction that converts the
coefficient problem into a terminal-value problem.

Reconstruction is Gauss-Newton over the interior nodal values of the
potential with an optional Tikhonov term; the Jacobian columns come from
linearized forward solves and are exact derivatives of the discrete
forward map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grids
from .grids import Grid1D, TimeGrid, trapezoid_weights
from .model import PotentialSet, SourcePair, REAL_DATUM, IMAGINARY_DATUM
from .forward import (
    BoundaryData,
    ForwardProblem,
    ObservationBoundary,
    ObservationInternal,
    observe_boundary,
    observe_internal,
    solve,
)
from .parallel import parallel_map


# ---------------------------------------------------------------------------
# conjugate-even extension and reversed time derivative


def extend_even_conjugate(field: np.ndarray, tgrid: TimeGrid, sign: float = 1.0):
    """Extend a space-time field to a doubled horizon by conjugate reflection.

    The original t=0 slice lands at the new mid time T; earlier slices are
    sign * conj of the mirrored ones.  Returns (extended field, extended
    time grid); the junction slice must be compatible with the reflection
    (sign * conj(slice) == slice), which holds for the difference fields
    (zero) and for real or purely imaginary initial slices with matching
    sign.
    """
    n_t = tgrid.n_steps
    out = np.empty((2 * n_t + 1,) + field.shape[1:], dtype=complex)
    out[n_t:] = field
    out[:n_t] = sign * np.conj(field[n_t:0:-1])
    ext = TimeGrid(2.0 * tgrid.horizon, 2 * n_t)
    return out, ext


def even_conjugate_extend(z1: np.ndarray, z2: np.ndarray, R: np.ndarray,
                          tgrid: TimeGrid, datum_kind: str, tol: float = 1e-10):
    """Extend the difference pair and the multiplier field together.

    The multiplier extension flips sign for a purely imaginary initial
    slice; a mismatch between ``datum_kind`` and the actual initial slice
    of R is rejected.
    """
    scale = max(float(np.max(np.abs(R[0]))), 1.0)
    if datum_kind == REAL_DATUM:
        if np.max(np.abs(R[0].imag)) > tol * scale:
            raise ValueError("datum kind 'real' but the initial slice of R is not real")
        sign = 1.0
    elif datum_kind == IMAGINARY_DATUM:
        if np.max(np.abs(R[0].real)) > tol * scale:
            raise ValueError(
                "datum kind 'imaginary' but the initial slice of R is not purely imaginary"
            )
        sign = -1.0
    else:
        raise ValueError(f"unknown datum kind {datum_kind!r}")
    z1_ext, ext = extend_even_conjugate(z1, tgrid, 1.0)
    z2_ext, _ = extend_even_conjugate(z2, tgrid, 1.0)
    R_ext, _ = extend_even_conjugate(R, tgrid, sign)
    return z1_ext, z2_ext, R_ext, ext


def time_reversed_derivative(z1_ext: np.ndarray, z2_ext: np.ndarray,
                             tgrid_ext: TimeGrid):
    """u_k(x, t) = d/dt z_k(x, 2T - t) on the doubled horizon."""
    u1 = grids.time_derivative(tgrid_ext, z1_ext)[::-1]
    u2 = grids.time_derivative(tgrid_ext, z2_ext)[::-1]
    return u1, u2


def terminal_condition_residual(u1: np.ndarray, u2: np.ndarray, f: np.ndarray,
                                R_ext: np.ndarray, grid: Grid1D,
                                tgrid_ext: TimeGrid) -> dict:
    """Mid-slice identity check: u1 ~ -i f R and u2 ~ 0 at the fold time.

    Norms are interior L2 (the identity holds almost everywhere in the
    open interval; boundary nodes carry the Dirichlet constraint instead).
    """
    mid = tgrid_ext.n_steps // 2
    wx = np.full(grid.n_nodes, grid.spacing)
    wx[0] = wx[-1] = 0.0

    target = -1j * f * R_ext[mid]
    target_norm = np.sqrt(float(wx @ np.abs(target) ** 2))
    res1 = np.sqrt(float(wx @ np.abs(u1[mid] - target) ** 2))
    res2 = np.sqrt(float(wx @ np.abs(u2[mid]) ** 2))
    return {
        "terminal_rel_u1": res1 / target_norm if target_norm > 0 else res1,
        "terminal_abs_u2": res2,
        "target_norm": target_norm,
    }


# ---------------------------------------------------------------------------
# difference system


@dataclass(frozen=True)
class DifferenceSystem:
    """Difference of two solutions sharing data but not the potential."""

    grid: Grid1D
    tgrid: TimeGrid
    z1: np.ndarray
    z2: np.ndarray
    f: np.ndarray  # perturbed minus reference potential
    R: np.ndarray  # solution of the perturbed system, first component


def build_difference_system(problem: ForwardProblem, a_tilde: np.ndarray,
                            base_solution=None) -> DifferenceSystem:
    if base_solution is None:
        base_solution = solve(problem)
    y1a, y2a = base_solution
    y1t, y2t = solve(problem.with_a(a_tilde))
    return DifferenceSystem(
        grid=problem.grid, tgrid=problem.tgrid,
        z1=y1a - y1t, z2=y2a - y2t,
        f=np.asarray(a_tilde, dtype=float) - problem.potentials.a,
        R=y1t,
    )


def difference_residual(ds: DifferenceSystem, problem: ForwardProblem,
                        z1=None, z2=None, R=None, tgrid=None) -> float:
    """Max interior residual of the difference equations (node-centered).

    Defaults to the stored fields; pass the extended fields and grid to
    check the doubled-horizon system.
    """
    z1 = ds.z1 if z1 is None else z1
    z2 = ds.z2 if z2 is None else z2
    R = ds.R if R is None else R
    tgrid = ds.tgrid if tgrid is None else tgrid
    grid = ds.grid
    cm, ps = problem.coupling, problem.potentials
    lap1 = grids.laplacian(grid, z1)
    lap2 = grids.laplacian(grid, z2)
    dt1 = grids.time_derivative(tgrid, z1)
    dt2 = grids.time_derivative(tgrid, z2)
    r1 = 1j * dt1 + cm.a11 * lap1 + cm.a12 * lap2 + ps.a * z1 + ps.b * z2 - ds.f * R
    r2 = 1j * dt2 + cm.a21 * lap1 + cm.a22 * lap2 + ps.c * z1 + ps.d * z2
    inner = (slice(1, -1), grid.interior)
    return max(float(np.max(np.abs(r1[inner]))), float(np.max(np.abs(r2[inner]))))


# ---------------------------------------------------------------------------
# discrete observation norms


def _window_h1_sq(field: np.ndarray, grid: Grid1D, mask: np.ndarray) -> np.ndarray:
    """Per-time-slice squared H1 norm over the masked nodes."""
    wx = np.where(mask, grid.spacing, 0.0)
    wx[0] = wx[-1] = 0.0
    grad = grids.gradient(grid, field)
    return (np.abs(field) ** 2 + np.abs(grad) ** 2) @ wx


def h1_time_h1_window_sq(field: np.ndarray, grid: Grid1D, tgrid: TimeGrid,
                         mask: np.ndarray) -> tuple:
    """Squared H1-in-time / H1-in-window norm and its derivative-only part."""
    wt = trapezoid_weights(tgrid.n_nodes, tgrid.dt)
    dt_field = grids.time_derivative(tgrid, field)
    value_part = float(wt @ _window_h1_sq(field, grid, mask))
    dt_part = float(wt @ _window_h1_sq(dt_field, grid, mask))
    return value_part + dt_part, dt_part


def h1_time_point_sq(series: np.ndarray, tgrid: TimeGrid) -> float:
    """Squared H1-in-time norm of one boundary time series."""
    wt = trapezoid_weights(tgrid.n_nodes, tgrid.dt)
    dt_series = grids.time_derivative(tgrid, series)
    return float(wt @ (np.abs(series) ** 2 + np.abs(dt_series) ** 2))


# ---------------------------------------------------------------------------
# stability pipelines


@dataclass(frozen=True)
class StabilityRecord:
    label: str
    diff_l2_sq: float
    obs_sq: float
    ratio: float | None
    obs_dt_sq: float
    degenerate: bool


def _stability_record(label: str, diff_sq: float, obs_sq: float,
                      obs_dt_sq: float) -> StabilityRecord:
    degenerate = diff_sq <= 0.0 or obs_sq <= 0.0
    ratio = None if degenerate else diff_sq / obs_sq
    return StabilityRecord(label, diff_sq, obs_sq, ratio, obs_dt_sq, degenerate)


def _ip1_worker(args):
    problem, base_solution, omega, label, a_tilde = args
    ds = build_difference_system(problem, a_tilde, base_solution)
    mask = problem.grid.omega_mask(*omega)
    obs1, dt1 = h1_time_h1_window_sq(ds.z1, problem.grid, problem.tgrid, mask)
    obs2, dt2 = h1_time_h1_window_sq(ds.z2, problem.grid, problem.tgrid, mask)
    diff_sq = grids.integrate_space(problem.grid, ds.f)
    return _stability_record(label, diff_sq, obs1 + obs2, dt1 + dt2)


def _ip2_worker(args):
    problem, base_solution, gamma_plus, label, a_tilde = args
    ds = build_difference_system(problem, a_tilde, base_solution)
    dn1 = grids.normal_derivative(problem.grid, ds.z1, gamma_plus)
    dn2 = grids.normal_derivative(problem.grid, ds.z2, gamma_plus)
    obs_sq = (h1_time_point_sq(dn1, problem.tgrid)
              + h1_time_point_sq(dn2, problem.tgrid))
    wt = trapezoid_weights(problem.tgrid.n_nodes, problem.tgrid.dt)
    dt_sq = (float(wt @ np.abs(grids.time_derivative(problem.tgrid, dn1)) ** 2)
             + float(wt @ np.abs(grids.time_derivative(problem.tgrid, dn2)) ** 2))
    diff_sq = grids.integrate_space(problem.grid, ds.f)
    return _stability_record(label, diff_sq, obs_sq, dt_sq)


def ip1_stability(problem: ForwardProblem, omega: tuple, perturbations,
                  jobs: int = 1):
    """Stability records for internal observations over a perturbation family.

    ``perturbations`` is a list of (label, perturbed potential field).
    """
    base_solution = solve(problem)
    items = [(problem, base_solution, omega, label, a_tilde)
             for label, a_tilde in perturbations]
    return parallel_map(_ip1_worker, items, jobs)


def ip2_stability(problem: ForwardProblem, gamma_plus: str, perturbations,
                  jobs: int = 1):
    """Stability records for boundary (normal-derivative) observations."""
    base_solution = solve(problem)
    items = [(problem, base_solution, gamma_plus, label, a_tilde)
             for label, a_tilde in perturbations]
    return parallel_map(_ip2_worker, items, jobs)


def stability_rows(records):
    rows = []
    for r in records:
        rows.append([r.label, r.diff_l2_sq, r.obs_sq,
                     "" if r.ratio is None else r.ratio, r.obs_dt_sq])
    return rows


STABILITY_COLUMNS = ["label", "potential_diff_l2_sq", "obs_norm_sq", "ratio",
                     "obs_dt_norm_sq"]


def time_reversal_terminal_check(problem: ForwardProblem, a_tilde: np.ndarray) -> dict:
    """Full pipeline behind the terminal-slice identity, returning residuals."""
    kind = problem.potentials.datum_kind()
    if kind is None:
        raise ValueError("initial datum is neither real nor purely imaginary")
    ds = build_difference_system(problem, a_tilde)
    z1e, z2e, Re, ext = even_conjugate_extend(ds.z1, ds.z2, ds.R, problem.tgrid, kind)
    u1, u2 = time_reversed_derivative(z1e, z2e, ext)
    return terminal_condition_residual(u1, u2, ds.f, Re, problem.grid, ext)


# ---------------------------------------------------------------------------
# observation noise


def add_observation_noise(obs, level: float, rng: np.random.Generator):
    """Additive complex Gaussian noise, amplitude relative to the RMS sample."""
    if level == 0.0:
        return obs
    if isinstance(obs, ObservationInternal):
        blocks = [obs.y1, obs.y2, obs.dy1, obs.dy2]
    elif isinstance(obs, ObservationBoundary):
        blocks = [obs.dn_y1, obs.dn_y2]
    else:
        raise TypeError(f"unsupported observation type {type(obs)!r}")
    total = np.concatenate([b.ravel() for b in blocks])
    rms = float(np.sqrt(np.mean(np.abs(total) ** 2)))
    noisy = []
    for b in blocks:
        eta = rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape)
        noisy.append(b + level * rms * eta / np.sqrt(2.0))
    if isinstance(obs, ObservationInternal):
        return ObservationInternal(obs.omega, obs.node_indices, *noisy)
    return ObservationBoundary(obs.gamma_plus, *noisy)


# ---------------------------------------------------------------------------
# Gauss-Newton reconstruction


@dataclass(frozen=True)
class ReconstructionResult:
    a_estimate: np.ndarray
    trace: list
    status: str
    iterations: int


def _observe(problem: ForwardProblem, data, y1, y2):
    if isinstance(data, ObservationInternal):
        return observe_internal(problem.grid, y1, y2, data.omega)
    return observe_boundary(problem.grid, y1, y2, data.gamma_plus)


def _sensitivity_column(args):
    problem, y1_current, data, j = args
    grid, tgrid = problem.grid, problem.tgrid
    chi = np.zeros(grid.n_nodes)
    chi[j] = 1.0
    f1 = -(y1_current * chi)
    sens_problem = ForwardProblem(
        grid, tgrid, problem.coupling,
        PotentialSet(grid, problem.potentials.a, problem.potentials.b,
                     problem.potentials.c, problem.potentials.d,
                     np.zeros(grid.n_nodes, dtype=complex),
                     np.zeros(grid.n_nodes, dtype=complex)),
        SourcePair(f1, np.zeros_like(f1)),
        BoundaryData.zero(tgrid),
    )
    w1, w2 = solve(sens_problem)
    return _observe(problem, data, w1, w2).stacked()


def _jacobian(problem: ForwardProblem, y1_current, data, jobs: int) -> np.ndarray:
    interior = range(1, problem.grid.n_interior + 1)
    items = [(problem, y1_current, data, j) for j in interior]
    cols = parallel_map(_sensitivity_column, items, jobs)
    return np.column_stack(cols)


def reconstruct(problem: ForwardProblem, data, alpha: float,
                a_init: np.ndarray, max_iterations: int = 50,
                gradient_tol: float = 1e-10, jobs: int = 1) -> ReconstructionResult:
    """Recover the stationary potential from internal or boundary data.

    Minimizes 0.5*||S(a) - d||^2 + 0.5*alpha*||a - a_init||^2 (the penalty
    uses the h-weighted interior inner product) by Gauss-Newton over the
    interior nodal values; boundary values stay at their initial values,
    which the interior equations never see.  Steps follow the normal-
    equation direction under Armijo backtracking (full steps along the
    nearly collinear boundary-node directions overshoot badly).  Aborts
    after three consecutive non-decreasing misfits, and retries a singular
    normal system once with a bumped penalty before giving up.
    """
    grid = problem.grid
    h = grid.spacing
    idx = grid.interior
    a = np.asarray(a_init, dtype=float).copy()
    a0_int = a[idx].copy()
    d = data.stacked()

    def objective(a_field):
        y1, y2 = solve(problem.with_a(a_field))
        r = _observe(problem, data, y1, y2).stacked() - d
        misfit = 0.5 * float(r @ r)
        penalty = 0.5 * alpha * h * float(np.sum((a_field[idx] - a0_int) ** 2))
        return y1, r, misfit, misfit + penalty

    trace = []
    status = "max_iterations"
    stall_count = 0
    prev_misfit = None
    iterations = 0

    for it in range(max_iterations + 1):
        iterations = it
        y1, r, misfit, total = objective(a)
        J = _jacobian(problem.with_a(a), y1, data, jobs)
        g = J.T @ r + alpha * h * (a[idx] - a0_int)
        grad_norm = float(np.linalg.norm(g))

        if prev_misfit is not None and misfit >= prev_misfit:
            stall_count += 1
        else:
            stall_count = 0
        prev_misfit = misfit

        if grad_norm < gradient_tol:
            trace.append([it, misfit, grad_norm, 0.0])
            status = "converged"
            break
        if stall_count >= 3:
            trace.append([it, misfit, grad_norm, 0.0])
            status = "stalled"
            break
        if it == max_iterations:
            trace.append([it, misfit, grad_norm, 0.0])
            break

        normal = J.T @ J + alpha * h * np.eye(J.shape[1])
        try:
            step = np.linalg.solve(normal, -g)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError("non-finite step")
        except np.linalg.LinAlgError:
            bumped = 10.0 * alpha if alpha > 0.0 else 1e-8
            normal = J.T @ J + bumped * h * np.eye(J.shape[1])
            try:
                step = np.linalg.solve(normal, -g)
                if not np.all(np.isfinite(step)):
                    raise np.linalg.LinAlgError("non-finite step")
            except np.linalg.LinAlgError:
                trace.append([it, misfit, grad_norm, 0.0])
                status = "singular"
                break

        slope = float(g @ step)
        scale = 1.0
        a_try = a.copy()
        for _ in range(25):
            a_try = a.copy()
            a_try[idx] += scale * step
            new_total = objective(a_try)[3]
            if new_total <= total + 1e-4 * scale * slope:
                break
            scale /= 2.0
        a = a_try
        trace.append([it, misfit, grad_norm, float(scale * np.linalg.norm(step))])

    return ReconstructionResult(a, trace, status, iterations)


TRACE_COLUMNS = ["iteration", "misfit", "gradient_norm", "step_norm"]
