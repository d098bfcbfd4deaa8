"""Crank-Nicolson time stepping for the coupled system, plus a spectral
oracle for constant coefficients and observation extraction.

The two complex components are interleaved per interior node, giving a
banded step matrix that is assembled and factorized once (coefficients are
time independent); each step is a pair of triangular solves.  Dirichlet
values are imposed strongly and lifted into the right-hand side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import grids
from .grids import Grid1D, TimeGrid
from .model import CouplingMatrix, PotentialSet, SourcePair, validate_coupling

GROWTH_GUARD = 10.0
BOUNDARY_COMPAT_TOL = 1e-10


class ForwardSolveError(RuntimeError):
    """Raised when a step matrix is singular or the growth guard fires."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet time series, shape (n_t + 1, 2): columns (x=0, x=L)."""

    g1: np.ndarray
    g2: np.ndarray

    @classmethod
    def zero(cls, tgrid: TimeGrid) -> "BoundaryData":
        z = np.zeros((tgrid.n_nodes, 2), dtype=complex)
        return cls(z, z.copy())

    @classmethod
    def from_initial(cls, tgrid: TimeGrid, y10: np.ndarray, y20: np.ndarray) -> "BoundaryData":
        """Hold the initial boundary values fixed in time."""
        g1 = np.tile(np.array([y10[0], y10[-1]]), (tgrid.n_nodes, 1)).astype(complex)
        g2 = np.tile(np.array([y20[0], y20[-1]]), (tgrid.n_nodes, 1)).astype(complex)
        return cls(g1, g2)


@dataclass(frozen=True)
class ForwardProblem:
    grid: Grid1D
    tgrid: TimeGrid
    coupling: CouplingMatrix
    potentials: PotentialSet
    sources: SourcePair
    boundary: BoundaryData = None

    def __post_init__(self):
        if self.boundary is None:
            object.__setattr__(self, "boundary", BoundaryData.zero(self.tgrid))
        report = validate_coupling(self.coupling)
        if not report.passed:
            failed = [e.name for e in report.entries if not e.passed]
            raise ValueError(f"coupling matrix not certified: {failed}")
        grids.check_space_time(self.grid, self.tgrid, self.sources.f1)
        for g, y0 in ((self.boundary.g1, self.potentials.y10),
                      (self.boundary.g2, self.potentials.y20)):
            mismatch = max(abs(g[0, 0] - y0[0]), abs(g[0, 1] - y0[-1]))
            if mismatch > BOUNDARY_COMPAT_TOL:
                raise ValueError(
                    f"boundary data at t=0 incompatible with initial data "
                    f"(mismatch {mismatch:.3e})"
                )

    def with_a(self, a_new) -> "ForwardProblem":
        return ForwardProblem(self.grid, self.tgrid, self.coupling,
                              self.potentials.with_a(a_new), self.sources,
                              self.boundary)


def _interleave(y1_int: np.ndarray, y2_int: np.ndarray) -> np.ndarray:
    out = np.empty(2 * y1_int.size, dtype=complex)
    out[0::2] = y1_int
    out[1::2] = y2_int
    return out


def _spatial_operator(problem: ForwardProblem) -> sp.csr_matrix:
    """Interleaved interior operator: coupling times Laplacian plus potentials."""
    grid = problem.grid
    n = grid.n_interior
    h2 = grid.spacing ** 2
    cm = problem.coupling
    ps = problem.potentials
    idx = grid.interior

    rows, cols, vals = [], [], []

    def add(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    a = np.stack([cm.a11[idx], cm.a12[idx], cm.a21[idx], cm.a22[idx]]).reshape(2, 2, n)
    p = np.stack([ps.a[idx], ps.b[idx], ps.c[idx], ps.d[idx]]).reshape(2, 2, n)

    for j in range(n):
        for comp in range(2):
            r = 2 * j + comp
            for comp2 in range(2):
                coef = a[comp, comp2, j] / h2
                add(r, 2 * j + comp2, -2.0 * coef + p[comp, comp2, j])
                if j > 0:
                    add(r, 2 * (j - 1) + comp2, coef)
                if j < n - 1:
                    add(r, 2 * (j + 1) + comp2, coef)
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n, 2 * n))


def solve(problem: ForwardProblem, growth_guard: float = GROWTH_GUARD):
    """March the Crank-Nicolson scheme; returns the (y1, y2) field pair.

    Each step solves (i/dt + H/2) W' = (i/dt - H/2) W + fbar + lift with H
    the interleaved spatial operator, fbar the source average of the two
    time levels, and lift carrying the Dirichlet neighbours.  Aborts with
    diagnostics when the per-step norm growth exceeds ``growth_guard``.
    """
    grid, tgrid = problem.grid, problem.tgrid
    n = grid.n_interior
    dt = tgrid.dt
    H = _spatial_operator(problem)
    ident = sp.identity(2 * n, dtype=complex, format="csr")
    m_plus = (1j / dt) * ident + 0.5 * H
    m_minus = (1j / dt) * ident - 0.5 * H
    try:
        lu = spla.splu(m_plus.tocsc())
    except RuntimeError as exc:
        raise ForwardSolveError(f"step matrix factorization failed: {exc}") from exc

    cm = problem.coupling
    h2 = grid.spacing ** 2
    # boundary-neighbour coupling coefficients at the first/last interior node
    lift_left = np.array([[cm.a11[1], cm.a12[1]], [cm.a21[1], cm.a22[1]]]) / h2
    lift_right = np.array([[cm.a11[-2], cm.a12[-2]], [cm.a21[-2], cm.a22[-2]]]) / h2

    y1 = np.empty((tgrid.n_nodes, grid.n_nodes), dtype=complex)
    y2 = np.empty_like(y1)
    y1[0] = problem.potentials.y10
    y2[0] = problem.potentials.y20
    y1[:, 0] = problem.boundary.g1[:, 0]
    y1[:, -1] = problem.boundary.g1[:, 1]
    y2[:, 0] = problem.boundary.g2[:, 0]
    y2[:, -1] = problem.boundary.g2[:, 1]

    w = _interleave(problem.potentials.y10[grid.interior],
                    problem.potentials.y20[grid.interior])
    f1, f2 = problem.sources.f1, problem.sources.f2
    g1, g2 = problem.boundary.g1, problem.boundary.g2

    for step in range(tgrid.n_steps):
        drive = _interleave(0.5 * (f1[step, grid.interior] + f1[step + 1, grid.interior]),
                            0.5 * (f2[step, grid.interior] + f2[step + 1, grid.interior]))
        gl = 0.5 * np.array([g1[step, 0] + g1[step + 1, 0], g2[step, 0] + g2[step + 1, 0]])
        gr = 0.5 * np.array([g1[step, 1] + g1[step + 1, 1], g2[step, 1] + g2[step + 1, 1]])
        drive[0:2] -= lift_left @ gl
        drive[-2:] -= lift_right @ gr
        rhs = m_minus @ w + drive
        w_new = lu.solve(rhs)
        if not np.all(np.isfinite(w_new.view(float))):
            raise ForwardSolveError(f"non-finite solution at step {step + 1}", step + 1)
        norm_old = np.linalg.norm(w)
        norm_new = np.linalg.norm(w_new)
        # a stable step obeys |w'| <= |w| + dt*|external drive| up to O(1)
        reference = norm_old + dt * np.linalg.norm(drive)
        if norm_new > growth_guard * reference:
            raise ForwardSolveError(
                f"instability guard: step {step + 1} grew the interior norm by "
                f"{norm_new / max(reference, 1e-300):.3e} (> {growth_guard})",
                step + 1,
            )
        w = w_new
        y1[step + 1, grid.interior] = w[0::2]
        y2[step + 1, grid.interior] = w[1::2]
    return y1, y2


def step_residuals(problem: ForwardProblem, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Max-norm residual of the midpoint discretization at every step."""
    grid, tgrid = problem.grid, problem.tgrid
    H = _spatial_operator(problem)
    dt = tgrid.dt
    cm = problem.coupling
    h2 = grid.spacing ** 2
    lift_left = np.array([[cm.a11[1], cm.a12[1]], [cm.a21[1], cm.a22[1]]]) / h2
    lift_right = np.array([[cm.a11[-2], cm.a12[-2]], [cm.a21[-2], cm.a22[-2]]]) / h2
    f1, f2 = problem.sources.f1, problem.sources.f2
    g1, g2 = problem.boundary.g1, problem.boundary.g2
    res = np.empty(tgrid.n_steps)
    for step in range(tgrid.n_steps):
        w_old = _interleave(y1[step, grid.interior], y2[step, grid.interior])
        w_new = _interleave(y1[step + 1, grid.interior], y2[step + 1, grid.interior])
        r = 1j * (w_new - w_old) / dt + 0.5 * (H @ (w_new + w_old))
        r -= _interleave(0.5 * (f1[step, grid.interior] + f1[step + 1, grid.interior]),
                         0.5 * (f2[step, grid.interior] + f2[step + 1, grid.interior]))
        gl = 0.5 * np.array([g1[step, 0] + g1[step + 1, 0], g2[step, 0] + g2[step + 1, 0]])
        gr = 0.5 * np.array([g1[step, 1] + g1[step + 1, 1], g2[step, 1] + g2[step + 1, 1]])
        r[0:2] += lift_left @ gl
        r[-2:] += lift_right @ gr
        res[step] = np.max(np.abs(r))
    return res


def coupling_eigenpairs(matrix: np.ndarray):
    """Real eigenpairs of the 2x2 coupling matrix, deterministically ordered."""
    eigvals, eigvecs = np.linalg.eig(matrix)
    if np.max(np.abs(eigvals.imag)) > 1e-12 * np.max(np.abs(eigvals)):
        raise ValueError("coupling matrix has complex eigenvalues")
    eigvals = eigvals.real
    eigvecs = eigvecs.real
    order = np.argsort(eigvals)
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    for k in range(2):
        lead = eigvecs[np.argmax(np.abs(eigvecs[:, k])), k]
        if lead < 0:
            eigvecs[:, k] = -eigvecs[:, k]
    return eigvals, eigvecs


def spectral_oracle(problem: ForwardProblem):
    """Exact decoupled evolution for the constant-coefficient case.

    Requires constant coupling, zero potentials, zero sources and zero
    boundary data.  The initial data is expanded in discrete sine modes
    (exact for band-limited data) and each decoupled component evolves by
    its exact phase factor.
    """
    cm = problem.coupling
    if not cm.is_constant:
        raise ValueError("spectral oracle needs constant coupling coefficients")
    ps = problem.potentials
    for name in ("a", "b", "c", "d"):
        if np.any(getattr(ps, name) != 0.0):
            raise ValueError("spectral oracle needs zero potentials")
    if np.any(problem.sources.f1 != 0) or np.any(problem.sources.f2 != 0):
        raise ValueError("spectral oracle needs zero sources")
    # closed-form endpoint values like sin(pi) leave harmless 1e-16 residue
    g_scale = max(np.max(np.abs(problem.boundary.g1)),
                  np.max(np.abs(problem.boundary.g2)))
    if g_scale > 1e-13:
        raise ValueError("spectral oracle needs homogeneous boundary data")

    grid, tgrid = problem.grid, problem.tgrid
    eigvals, V = coupling_eigenpairs(cm.constant_matrix())
    Vinv = np.linalg.inv(V)

    n = grid.n_interior
    L = grid.length
    j = np.arange(1, n + 1)
    modes = np.arange(1, n + 1)
    sine = np.sin(np.pi * np.outer(j, modes) / (n + 1))  # S @ S = (n+1)/2 * I

    y0 = np.stack([ps.y10[grid.interior], ps.y20[grid.interior]])
    z0 = Vinv @ y0  # decoupled components, shape (2, n)
    coef = (2.0 / (n + 1)) * (z0 @ sine)  # sine coefficients per component

    k2 = (np.pi * modes / L) ** 2
    t = tgrid.nodes
    y1 = np.zeros((tgrid.n_nodes, grid.n_nodes), dtype=complex)
    y2 = np.zeros_like(y1)
    for comp in range(2):
        phase = np.exp(-1j * eigvals[comp] * np.outer(t, k2))  # (n_t+1, n)
        z_t = (phase * coef[comp]) @ sine.T  # (n_t+1, n)
        y1[:, grid.interior] += V[0, comp] * z_t
        y2[:, grid.interior] += V[1, comp] * z_t
    return y1, y2


def eigencomponent_norms(problem: ForwardProblem, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
    """Interior l2 norm of each decoupled component per time node, shape (n_t+1, 2)."""
    cm = problem.coupling
    eigvals, V = coupling_eigenpairs(cm.constant_matrix())
    Vinv = np.linalg.inv(V)
    y = np.stack([y1[:, problem.grid.interior], y2[:, problem.grid.interior]])
    z = np.einsum("ck,kti->cti", Vinv, y)
    return np.sqrt(np.sum(np.abs(z) ** 2, axis=2) * problem.grid.spacing).T


@dataclass(frozen=True)
class ObservationInternal:
    """Solution pair and gradients restricted to the observation window."""

    omega: tuple
    node_indices: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    dy1: np.ndarray
    dy2: np.ndarray

    def stacked(self) -> np.ndarray:
        """Real data vector: re/im of values and gradients, fixed order."""
        blocks = [self.y1, self.y2, self.dy1, self.dy2]
        return np.concatenate([np.concatenate([b.real.ravel(), b.imag.ravel()])
                               for b in blocks])


@dataclass(frozen=True)
class ObservationBoundary:
    """Outward normal derivatives at the observed endpoint per time node."""

    gamma_plus: str
    dn_y1: np.ndarray
    dn_y2: np.ndarray

    def stacked(self) -> np.ndarray:
        blocks = [self.dn_y1, self.dn_y2]
        return np.concatenate([np.concatenate([b.real.ravel(), b.imag.ravel()])
                               for b in blocks])


def observe_internal(grid: Grid1D, y1: np.ndarray, y2: np.ndarray,
                     omega: tuple) -> ObservationInternal:
    mask = grid.omega_mask(*omega)
    idx = np.nonzero(mask)[0]
    return ObservationInternal(
        omega=tuple(omega), node_indices=idx,
        y1=y1[:, idx].copy(), y2=y2[:, idx].copy(),
        dy1=grids.gradient(grid, y1)[:, idx],
        dy2=grids.gradient(grid, y2)[:, idx],
    )


def observe_boundary(grid: Grid1D, y1: np.ndarray, y2: np.ndarray,
                     gamma_plus: str) -> ObservationBoundary:
    return ObservationBoundary(
        gamma_plus=gamma_plus,
        dn_y1=grids.normal_derivative(grid, y1, gamma_plus),
        dn_y2=grids.normal_derivative(grid, y2, gamma_plus),
    )


def save_solution(path, tgrid: TimeGrid, field: np.ndarray, header_lines=()) -> None:
    """One record per time slice: t then interleaved re/im per node.

    Values are written with shortest round-trip precision so a reload is
    bit exact.
    """
    with open(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        for n in range(tgrid.n_nodes):
            parts = [repr(float(tgrid.nodes[n]))]
            row = field[n]
            for v in row:
                parts.append(repr(float(v.real)))
                parts.append(repr(float(v.imag)))
            fh.write(" ".join(parts) + "\n")


def load_solution(path):
    """Inverse of save_solution: returns (times, field)."""
    times, rows = [], []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            vals = [float(tok) for tok in line.split()]
            times.append(vals[0])
            data = np.asarray(vals[1:])
            rows.append(data[0::2] + 1j * data[1::2])
    return np.asarray(times), np.asarray(rows)
