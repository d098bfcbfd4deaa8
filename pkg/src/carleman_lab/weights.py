"""Carleman weight functions and their space-time evaluators.

The generating function psi is a quadratic with closed-form derivatives:
a downward parabola capped over the observation subinterval for internal
observations, an increasing/decreasing parabola for one-sided boundary
observations.  From psi the system builds

    theta(x,t) = exp(lam*psi(x)) / (t*(T-t))
    phi(x,t)   = (exp(lam*C_psi) - exp(lam*psi(x))) / (t*(T-t))

with C_psi = 1.5 * sup|psi|, and evaluates every derived weight quantity
needed by the weighted-inequality quadratures.  All weight values on the
t=0 and t=T slices are defined as their limit value 0: exp(-2*s*phi)
decays faster than any power of theta grows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grids import Grid1D, TimeGrid, LEFT, RIGHT, SIDES
from .model import CertEntry, CertificationReport, CERT_MARGIN

INTERNAL = "internal"
BOUNDARY = "boundary"

_KIND_INTERNAL = "internal_quadratic"
_KIND_BOUNDARY = "boundary_quadratic"
_KIND_CONSTANT = "constant"


@dataclass(frozen=True)
class WeightFunction:
    """Weight-generating function with analytic first and second derivatives.

    ``k_const`` is the additive constant of the quadratic: psi = k_const -
    (x-x0)^2 for the internal kind, psi = k_const + (x+delta)^2 (or its
    mirror image) for the boundary kind, psi = k_const for the constant
    diagnostic kind.  ``mu`` is the pseudoconvexity constant min |psi'|^2
    over the relevant region, computed in closed form by the builders.
    """

    kind: str
    length: float
    k_const: float
    mu: float
    x0: float = 0.0
    delta: float = 0.0
    omega: tuple | None = None
    gamma_plus: str | None = None

    def psi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == _KIND_INTERNAL:
            return self.k_const - (x - self.x0) ** 2
        if self.kind == _KIND_BOUNDARY:
            if self.gamma_plus == RIGHT:
                return self.k_const + (x + self.delta) ** 2
            return self.k_const + (self.length - x + self.delta) ** 2
        return np.full_like(x, self.k_const)

    def dpsi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == _KIND_INTERNAL:
            return -2.0 * (x - self.x0)
        if self.kind == _KIND_BOUNDARY:
            if self.gamma_plus == RIGHT:
                return 2.0 * (x + self.delta)
            return -2.0 * (self.length - x + self.delta)
        return np.zeros_like(x)

    def d2psi(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == _KIND_INTERNAL:
            return np.full_like(x, -2.0)
        if self.kind == _KIND_BOUNDARY:
            return np.full_like(x, 2.0)
        return np.zeros_like(x)

    def normal_dpsi(self, side: str) -> float:
        """Outward normal derivative of psi at one endpoint."""
        if side == LEFT:
            return float(-self.dpsi(0.0))
        if side == RIGHT:
            return float(self.dpsi(self.length))
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")

    def psi_sup(self) -> float:
        """sup |psi| over the closed interval, from the closed form."""
        candidates = [0.0, self.length]
        if self.kind == _KIND_INTERNAL and 0.0 < self.x0 < self.length:
            candidates.append(self.x0)
        return float(np.max(np.abs(self.psi(np.array(candidates)))))

    def critical_points(self):
        """Abscissae where region extrema of psi or psi' can occur."""
        pts = [0.0, self.length]
        if self.kind == _KIND_INTERNAL:
            pts.append(self.x0)
            if self.omega is not None:
                pts.extend(self.omega)
        return np.array(sorted(set(pts)))


def build_internal_psi(
    grid: Grid1D, omega: tuple, k_const: float | None = None
) -> WeightFunction:
    """Downward parabola peaking at the midpoint of the observation window.

    The cap must dominate the boundary values by enough headroom for the
    three-quarters condition: k_const > 4*max(x0, L-x0)^2.
    """
    lo, hi = float(omega[0]), float(omega[1])
    L = grid.length
    if not (0.0 < lo < hi < L):
        raise ValueError(
            f"observation window ({lo}, {hi}) must lie strictly inside (0, {L})"
        )
    x0 = 0.5 * (lo + hi)
    k_min = 4.0 * max(x0, L - x0) ** 2
    if k_const is None:
        k_const = 1.25 * k_min
    if k_const <= k_min:
        raise ValueError(
            f"k_const={k_const} too small: need > {k_min} for the "
            f"three-quarters condition on ({0}, {L})"
        )
    mu = 4.0 * min(x0 - lo, hi - x0) ** 2
    return WeightFunction(
        kind=_KIND_INTERNAL, length=L, k_const=float(k_const), mu=mu,
        x0=x0, omega=(lo, hi),
    )


def build_boundary_psi(
    grid: Grid1D, gamma_plus: str, delta: float = 0.5, k_const: float | None = None
) -> WeightFunction:
    """Monotone parabola with outward slope on the observed endpoint.

    delta > 0 keeps |psi'| >= 2*delta on the closed interval; the additive
    constant must satisfy k_const > 3*(L+delta)^2 - 4*delta^2 for the
    three-quarters condition.
    """
    if gamma_plus not in SIDES:
        raise ValueError(f"gamma_plus must be one of {SIDES}, got {gamma_plus!r}")
    if delta <= 0.0:
        raise ValueError(f"delta must be positive (got {delta}): mu = 4*delta^2 "
                         "would lose strict pseudoconvexity")
    L = grid.length
    k_min = 3.0 * (L + delta) ** 2 - 4.0 * delta ** 2
    if k_const is None:
        k_const = 1.1 * k_min
    if k_const <= k_min:
        raise ValueError(
            f"k_const={k_const} too small: need > {k_min} for the "
            f"three-quarters condition"
        )
    return WeightFunction(
        kind=_KIND_BOUNDARY, length=L, k_const=float(k_const), mu=4.0 * delta ** 2,
        delta=float(delta), gamma_plus=gamma_plus,
    )


def constant_psi(grid: Grid1D, value: float, omega: tuple | None = None,
                 gamma_plus: str | None = None) -> WeightFunction:
    """Constant psi; fails certification, useful as a diagnostic mode."""
    return WeightFunction(
        kind=_KIND_CONSTANT, length=grid.length, k_const=float(value), mu=0.0,
        omega=omega, gamma_plus=gamma_plus,
    )


def _region_values(weight: WeightFunction, grid: Grid1D, region_mask: np.ndarray):
    """Node values plus analytic critical points inside the masked region."""
    xs = [grid.nodes[region_mask]]
    lo_img = grid.nodes[region_mask]
    for p in weight.critical_points():
        if lo_img.size and np.any(np.isclose(lo_img, p)):
            continue
        xs.append(np.array([p]))
    return np.concatenate(xs)


def certify(weight: WeightFunction, grid: Grid1D, mode: str) -> CertificationReport:
    """Evaluate every weight condition on the grid and at closed form.

    Strict inequalities are certified with margin CERT_MARGIN to avoid
    floating-point false passes; the report carries the achieved margins.
    """
    nodes = grid.nodes
    psi_all = weight.psi(nodes)
    sup = weight.psi_sup()
    gap = float(np.min(psi_all) - 0.75 * sup)
    entries = []

    if mode == INTERNAL:
        if weight.omega is None:
            raise ValueError("internal certification needs an observation window")
        lo, hi = weight.omega
        outside = (nodes <= lo) | (nodes >= hi)
        xs = np.concatenate([nodes[outside], [lo, hi]])
        dpsi_sq = weight.dpsi(xs) ** 2
        entries.append(CertEntry(
            "grad_nonzero_outside_window",
            bool(np.min(np.abs(weight.dpsi(xs))) > CERT_MARGIN),
            float(np.min(np.abs(weight.dpsi(xs)))), CERT_MARGIN,
            "min |psi'| on the complement of the window",
        ))
        worst_normal = max(weight.normal_dpsi(LEFT), weight.normal_dpsi(RIGHT))
        entries.append(CertEntry(
            "normal_nonpositive_on_boundary",
            worst_normal <= CERT_MARGIN, worst_normal, 0.0,
            f"dpsi/dnu = {weight.normal_dpsi(LEFT)!r} at x=0, "
            f"{weight.normal_dpsi(RIGHT)!r} at x=L",
        ))
        entries.append(CertEntry(
            "pseudoconvex_outside_window",
            bool(np.min(dpsi_sq) > CERT_MARGIN),
            float(np.min(dpsi_sq)), CERT_MARGIN,
            f"builder mu = {weight.mu!r}",
        ))
    elif mode == BOUNDARY:
        if weight.gamma_plus is None:
            raise ValueError("boundary certification needs the observed side")
        xs = _region_values(weight, grid, np.ones_like(nodes, dtype=bool))
        dpsi_sq = weight.dpsi(xs) ** 2
        entries.append(CertEntry(
            "grad_nonzero_everywhere",
            bool(np.min(np.abs(weight.dpsi(xs))) > CERT_MARGIN),
            float(np.min(np.abs(weight.dpsi(xs)))), CERT_MARGIN,
            "min |psi'| on the closed interval",
        ))
        off_side = LEFT if weight.gamma_plus == RIGHT else RIGHT
        off_normal = weight.normal_dpsi(off_side)
        on_normal = weight.normal_dpsi(weight.gamma_plus)
        entries.append(CertEntry(
            "normal_nonpositive_off_observed_side",
            off_normal <= CERT_MARGIN, off_normal, 0.0,
            f"dpsi/dnu at the unobserved endpoint ({off_side})",
        ))
        entries.append(CertEntry(
            "normal_positive_on_observed_side",
            on_normal > CERT_MARGIN, on_normal, CERT_MARGIN,
            f"dpsi/dnu at the observed endpoint ({weight.gamma_plus})",
        ))
        entries.append(CertEntry(
            "pseudoconvex_everywhere",
            bool(np.min(dpsi_sq) > CERT_MARGIN),
            float(np.min(dpsi_sq)), CERT_MARGIN,
            f"builder mu = {weight.mu!r}",
        ))
    else:
        raise ValueError(f"mode must be '{INTERNAL}' or '{BOUNDARY}', got {mode!r}")

    entries.append(CertEntry(
        "above_three_quarters_sup",
        gap > CERT_MARGIN, gap, CERT_MARGIN,
        f"min psi - 0.75*sup|psi| with sup = {sup!r}",
    ))
    return CertificationReport(tuple(entries))


@dataclass(frozen=True)
class WeightBundle:
    """Weight quantities on the full space-time grid (zero on the end slices)."""

    theta: np.ndarray
    phi: np.ndarray
    phi_t: np.ndarray
    grad_phi: np.ndarray
    lap_phi: np.ndarray
    grad_phi_sq: np.ndarray
    exp_weight: np.ndarray


@dataclass(frozen=True)
class WeightSystem:
    """A weight function with fixed parameters s >= 1, lam >= 1 on a grid pair."""

    weight: WeightFunction
    grid: Grid1D
    tgrid: TimeGrid
    s: float
    lam: float

    def __post_init__(self):
        if self.s < 1.0 or self.lam < 1.0:
            raise ValueError(f"need s, lam >= 1, got s={self.s}, lam={self.lam}")

    @property
    def c_psi(self) -> float:
        return 1.5 * self.weight.psi_sup()

    def _inv_tt(self) -> np.ndarray:
        """1/(t*(T-t)) at interior time nodes, 0 padded at the ends."""
        t = self.tgrid.nodes
        out = np.zeros_like(t)
        out[1:-1] = 1.0 / (t[1:-1] * (self.tgrid.horizon - t[1:-1]))
        return out

    def eval_weights(self) -> WeightBundle:
        x = self.grid.nodes
        t = self.tgrid.nodes
        T = self.tgrid.horizon
        psi = self.weight.psi(x)
        dpsi = self.weight.dpsi(x)
        d2psi = self.weight.d2psi(x)
        exp_psi = np.exp(self.lam * psi)
        amp = math.exp(self.lam * self.c_psi) - exp_psi  # positive: C_psi > psi

        inv_tt = self._inv_tt()
        theta = np.outer(inv_tt, exp_psi)
        phi = np.outer(inv_tt, amp)
        phi_t = -np.outer((T - 2.0 * t) * inv_tt ** 2, amp)
        grad_phi = -self.lam * theta * dpsi
        lap_phi = -theta * (self.lam ** 2 * dpsi ** 2 + self.lam * d2psi)
        grad_phi_sq = grad_phi ** 2
        exp_weight = np.zeros_like(phi)
        exp_weight[1:-1] = np.exp(-2.0 * self.s * phi[1:-1])
        return WeightBundle(
            theta=theta, phi=phi, phi_t=phi_t, grad_phi=grad_phi,
            lap_phi=lap_phi, grad_phi_sq=grad_phi_sq, exp_weight=exp_weight,
        )

    def phi_ref(self) -> float:
        """min of phi over interior time slices; normalization reference."""
        amp_min = math.exp(self.lam * self.c_psi) - math.exp(
            self.lam * float(np.max(self.weight.psi(self.grid.nodes)))
        )
        return float(amp_min * np.min(self._inv_tt()[1:-1]))

    @property
    def log_scale(self) -> float:
        """Common log factor 2*s*phi_ref pulled out of every quadrature."""
        return 2.0 * self.s * self.phi_ref()

    def measure(self, theta_power: float = 0.0) -> np.ndarray:
        """theta^p * exp(-2*s*(phi - phi_ref)), assembled in log space.

        One exponential per node avoids inf*0 artifacts in products like
        theta^3 * exp(-2*s*phi); the end slices are the limit value 0.
        The common factor exp(-2*s*phi_ref) is deliberately left out so
        that concentrated weights stay representable; ratios of
        quadratures sharing the same (s, lam) are unaffected.
        """
        x = self.grid.nodes
        t = self.tgrid.nodes[1:-1]
        T = self.tgrid.horizon
        psi = self.weight.psi(x)
        exp_psi = np.exp(self.lam * psi)
        amp = math.exp(self.lam * self.c_psi) - exp_psi
        inv_tt = 1.0 / (t * (T - t))
        log_theta = self.lam * psi[None, :] + np.log(inv_tt)[:, None]
        phi = np.outer(inv_tt, amp)
        exponent = theta_power * log_theta - 2.0 * self.s * (phi - self.phi_ref())
        out = np.zeros((self.tgrid.n_nodes, self.grid.n_nodes))
        out[1:-1] = np.exp(exponent)
        return out
