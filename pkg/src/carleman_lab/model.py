"""Coefficients of the coupled system and their certification.

The 2x2 coupling matrix multiplies the Laplacian pair, the potential set
collects the zeroth-order coefficients and the initial data.  Certification
checks the structural conditions the weighted-inequality machinery needs:
positivity of the off-diagonal product, a nonvanishing determinant with
a22*det > 0, and initial data that is uniformly bounded away from zero and
either everywhere real or everywhere purely imaginary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Grid1D, check_field, TimeGrid

CERT_MARGIN = 1e-12

REAL_DATUM = "real"
IMAGINARY_DATUM = "imaginary"


@dataclass(frozen=True)
class CertEntry:
    name: str
    passed: bool
    margin: float
    threshold: float
    detail: str = ""


@dataclass(frozen=True)
class CertificationReport:
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, name: str) -> CertEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def rows(self):
        return [
            (e.name, "pass" if e.passed else "FAIL", e.margin, e.threshold, e.detail)
            for e in self.entries
        ]


def _as_node_field(grid: Grid1D, value) -> np.ndarray:
    if np.isscalar(value):
        return np.full(grid.n_nodes, float(value))
    return np.asarray(value, dtype=float).copy()


@dataclass(frozen=True)
class CouplingMatrix:
    """Real 2x2 matrix field multiplying the Laplacian pair."""

    grid: Grid1D
    a11: np.ndarray
    a12: np.ndarray
    a21: np.ndarray
    a22: np.ndarray

    def __post_init__(self):
        for name in ("a11", "a12", "a21", "a22"):
            object.__setattr__(self, name, _as_node_field(self.grid, getattr(self, name)))
            check_field(self.grid, getattr(self, name))

    @property
    def det(self) -> np.ndarray:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def is_constant(self) -> bool:
        return all(
            np.ptp(getattr(self, name)) == 0.0 for name in ("a11", "a12", "a21", "a22")
        )

    def constant_matrix(self) -> np.ndarray:
        if not self.is_constant:
            raise ValueError("coupling matrix is not constant in x")
        return np.array(
            [[self.a11[0], self.a12[0]], [self.a21[0], self.a22[0]]], dtype=float
        )

    def at_nodes(self) -> np.ndarray:
        """Stack to shape (n_nodes, 2, 2)."""
        m = np.empty((self.grid.n_nodes, 2, 2))
        m[:, 0, 0] = self.a11
        m[:, 0, 1] = self.a12
        m[:, 1, 0] = self.a21
        m[:, 1, 1] = self.a22
        return m


def validate_coupling(cm: CouplingMatrix) -> CertificationReport:
    """Check the off-diagonal product, determinant and a22*det conditions.

    All three must hold with a strict margin at every node; the report
    carries the worst-case margins.
    """
    offdiag = cm.a12 * cm.a21
    det = cm.det
    a22det = cm.a22 * det
    entries = (
        CertEntry(
            "offdiag_product_positive",
            bool(np.min(offdiag) > CERT_MARGIN),
            float(np.min(offdiag)),
            CERT_MARGIN,
            "min over nodes of a12*a21",
        ),
        CertEntry(
            "determinant_nonzero",
            bool(np.min(np.abs(det)) > CERT_MARGIN),
            float(np.min(np.abs(det))),
            CERT_MARGIN,
            "min over nodes of |det|",
        ),
        CertEntry(
            "a22_det_positive",
            bool(np.min(a22det) > CERT_MARGIN),
            float(np.min(a22det)),
            CERT_MARGIN,
            "min over nodes of a22*det",
        ),
    )
    return CertificationReport(entries)


@dataclass(frozen=True)
class TransformedMatrix:
    """Entrywise inverse coefficients b = adj(a)/det(a) plus the symmetrizer.

    sigma = sqrt(a21/a12) (positive root) satisfies sigma^2 * b12 = b21 and
    sigma^2 * a12 = a21 identically; sigma0 is its minimum over the grid.
    """

    grid: Grid1D
    b11: np.ndarray
    b12: np.ndarray
    b21: np.ndarray
    b22: np.ndarray
    sigma: np.ndarray
    sigma0: float

    @property
    def det(self) -> np.ndarray:
        return self.b11 * self.b22 - self.b12 * self.b21


def transform(cm: CouplingMatrix) -> TransformedMatrix:
    report = validate_coupling(cm)
    if not report.passed:
        failed = [e.name for e in report.entries if not e.passed]
        raise ValueError(f"coupling matrix not certified: {failed}")
    det = cm.det
    sigma = np.sqrt(cm.a21 / cm.a12)
    return TransformedMatrix(
        grid=cm.grid,
        b11=cm.a22 / det,
        b12=-cm.a12 / det,
        b21=-cm.a21 / det,
        b22=cm.a11 / det,
        sigma=sigma,
        sigma0=float(np.min(sigma)),
    )


@dataclass(frozen=True)
class SourcePair:
    """Complex space-time source fields for the two equations."""

    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        f1 = np.asarray(self.f1, dtype=complex)
        f2 = np.asarray(self.f2, dtype=complex)
        if f1.shape != f2.shape:
            raise ValueError(f"source shapes differ: {f1.shape} vs {f2.shape}")
        if not (np.all(np.isfinite(f1.view(float))) and np.all(np.isfinite(f2.view(float)))):
            raise ValueError("source fields contain non-finite values")
        object.__setattr__(self, "f1", f1)
        object.__setattr__(self, "f2", f2)

    @classmethod
    def zero(cls, grid: Grid1D, tgrid: TimeGrid) -> "SourcePair":
        shape = (tgrid.n_nodes, grid.n_nodes)
        return cls(np.zeros(shape, dtype=complex), np.zeros(shape, dtype=complex))


def transform_sources(cm: CouplingMatrix, sources: SourcePair) -> SourcePair:
    """Map the original sources to the rewritten-system right-hand sides."""
    report = validate_coupling(cm)
    if not report.passed:
        failed = [e.name for e in report.entries if not e.passed]
        raise ValueError(f"coupling matrix not certified: {failed}")
    det = cm.det
    F1 = (cm.a22 * sources.f1 - cm.a12 * sources.f2) / det
    F2 = (cm.a11 * sources.f2 - cm.a21 * sources.f1) / det
    return SourcePair(F1, F2)


@dataclass(frozen=True)
class PotentialSet:
    """Zeroth-order coefficients a, b, c, d and the initial data pair.

    The coefficient fields are kept real-valued: the conjugate-reflection
    step of the stability pipeline maps solutions to solutions only for
    real coefficients.
    """

    grid: Grid1D
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    y10: np.ndarray
    y20: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c", "d"):
            object.__setattr__(self, name, _as_node_field(self.grid, getattr(self, name)))
            check_field(self.grid, getattr(self, name))
        for name in ("y10", "y20"):
            val = getattr(self, name)
            if np.isscalar(val):
                val = np.full(self.grid.n_nodes, complex(val))
            object.__setattr__(self, name, np.asarray(val, dtype=complex).copy())
            check_field(self.grid, getattr(self, name))

    def with_a(self, a_new) -> "PotentialSet":
        return PotentialSet(self.grid, a_new, self.b, self.c, self.d, self.y10, self.y20)

    def datum_kind(self, tol: float = 1e-12) -> str | None:
        """'real', 'imaginary', or None when the first datum is neither."""
        scale = max(float(np.max(np.abs(self.y10))), 1.0)
        if np.max(np.abs(self.y10.imag)) <= tol * scale:
            return REAL_DATUM
        if np.max(np.abs(self.y10.real)) <= tol * scale:
            return IMAGINARY_DATUM
        return None


def validate_potentials(ps: PotentialSet) -> CertificationReport:
    """Certify the initial-datum conditions; reports the achieved lower bound."""
    kind = ps.datum_kind()
    modulus_min = float(np.min(np.abs(ps.y10)))
    entries = (
        CertEntry(
            "datum_real_or_imaginary",
            kind is not None,
            0.0 if kind is None else 1.0,
            1.0,
            kind or "mixed real/imaginary parts",
        ),
        CertEntry(
            "datum_bounded_below",
            modulus_min > CERT_MARGIN,
            modulus_min,
            CERT_MARGIN,
            "achieved r = min |y10|",
        ),
    )
    return CertificationReport(entries)
