"""Experiment configuration: named INI sections with key=value pairs.

Field values are constants or closed-form expressions over x (coefficient
fields), over x and t (sources), or over t (boundary data); initial data
may use complex constants such as 1j.  Accessors raise ConfigError with a
best-effort line anchor so the command line can point at the offending
entry.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .expressions import ExpressionError, parse_expression
from .forward import BoundaryData, ForwardProblem
from .grids import Grid1D, TimeGrid, LEFT, RIGHT
from .model import CouplingMatrix, PotentialSet, SourcePair
from .weights import (
    BOUNDARY,
    INTERNAL,
    build_boundary_psi,
    build_internal_psi,
    constant_psi,
)


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    path: str
    text: str
    parser: configparser.ConfigParser
    sha256: str

    # -- loading ----------------------------------------------------------

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        try:
            parser.read_string(text, source=str(path))
        except configparser.ParsingError as exc:
            line = exc.errors[0][0] if exc.errors else None
            raise ConfigError(f"malformed config: {exc}", line=line) from exc
        digest = hashlib.sha256(text.encode()).hexdigest()
        return cls(str(path), text, parser, digest)

    # -- low-level accessors ------------------------------------------------

    def _key_line(self, section: str, key: str) -> int | None:
        in_section = False
        for lineno, line in enumerate(self.text.splitlines(), start=1):
            stripped = line.strip()
            if stripped.startswith("["):
                in_section = stripped == f"[{section}]"
            elif in_section and re.match(rf"{re.escape(key)}\s*[=:]", stripped):
                return lineno
        return None

    def _raw(self, section: str, key: str, default=None) -> str:
        if not self.parser.has_section(section):
            if default is not None:
                return default
            raise ConfigError(f"missing section [{section}]")
        if not self.parser.has_option(section, key):
            if default is not None:
                return default
            raise ConfigError(f"missing key {key!r} in section [{section}]",
                              line=self._key_line(section, key))
        return self.parser.get(section, key)

    def _float(self, section: str, key: str, default=None) -> float:
        raw = self._raw(section, key, default)
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a number",
                              line=self._key_line(section, key)) from exc

    def _int(self, section: str, key: str, default=None) -> int:
        raw = self._raw(section, key, default)
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not an integer",
                              line=self._key_line(section, key)) from exc

    def _expr(self, section: str, key: str, variables=("x",),
              allow_complex=False, default=None):
        raw = self._raw(section, key, default)
        try:
            return parse_expression(raw, variables, allow_complex)
        except ExpressionError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}",
                              line=self._key_line(section, key)) from exc

    def _float_list(self, section: str, key: str) -> list:
        raw = self._raw(section, key)
        items = [tok.strip() for tok in raw.split(",") if tok.strip()]
        if not items:
            raise ConfigError(f"[{section}] {key} must list at least one value",
                              line=self._key_line(section, key))
        try:
            return [float(tok) for tok in items]
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: not all numbers",
                              line=self._key_line(section, key)) from exc

    # -- assembled objects ----------------------------------------------------

    def grids(self) -> tuple:
        grid = Grid1D(self._float("geometry", "length"),
                      self._int("geometry", "n_x"))
        tgrid = TimeGrid(self._float("geometry", "horizon"),
                         self._int("geometry", "n_t"))
        return grid, tgrid

    def coupling(self, grid: Grid1D) -> CouplingMatrix:
        fields = {}
        for key in ("a11", "a12", "a21", "a22"):
            expr = self._expr("coupling", key)
            fields[key] = np.asarray(expr(x=grid.nodes), dtype=float)
        return CouplingMatrix(grid, **fields)

    def potentials(self, grid: Grid1D) -> PotentialSet:
        x = grid.nodes
        vals = {}
        for key in ("a", "b", "c", "d"):
            vals[key] = np.asarray(self._expr("potentials", key, default="0")(x=x),
                                   dtype=float)
        y10 = np.asarray(
            self._expr("potentials", "y10", allow_complex=True)(x=x), dtype=complex)
        y20 = np.asarray(
            self._expr("potentials", "y20", allow_complex=True)(x=x), dtype=complex)
        return PotentialSet(grid, vals["a"], vals["b"], vals["c"], vals["d"], y10, y20)

    def sources(self, grid: Grid1D, tgrid: TimeGrid) -> SourcePair:
        if not self.parser.has_section("sources"):
            return SourcePair.zero(grid, tgrid)
        xx = grid.nodes[None, :] + np.zeros((tgrid.n_nodes, 1))
        tt = tgrid.nodes[:, None] + np.zeros((1, grid.n_nodes))
        f1 = self._expr("sources", "f1", variables=("x", "t"),
                        allow_complex=True, default="0")(x=xx, t=tt)
        f2 = self._expr("sources", "f2", variables=("x", "t"),
                        allow_complex=True, default="0")(x=xx, t=tt)
        return SourcePair(np.broadcast_to(np.asarray(f1, dtype=complex), xx.shape).copy(),
                          np.broadcast_to(np.asarray(f2, dtype=complex), xx.shape).copy())

    def boundary(self, tgrid: TimeGrid, potentials: PotentialSet) -> BoundaryData:
        if not self.parser.has_section("boundary"):
            return BoundaryData.from_initial(tgrid, potentials.y10, potentials.y20)
        t = tgrid.nodes
        cols = {}
        for key in ("g1_left", "g1_right", "g2_left", "g2_right"):
            expr = self._expr("boundary", key, variables=("t",),
                              allow_complex=True, default="0")
            cols[key] = np.asarray(expr(t=t), dtype=complex)
        g1 = np.column_stack([cols["g1_left"], cols["g1_right"]])
        g2 = np.column_stack([cols["g2_left"], cols["g2_right"]])
        return BoundaryData(g1, g2)

    def forward_problem(self) -> ForwardProblem:
        grid, tgrid = self.grids()
        potentials = self.potentials(grid)
        return ForwardProblem(
            grid, tgrid, self.coupling(grid), potentials,
            self.sources(grid, tgrid), self.boundary(tgrid, potentials),
        )

    def weight_mode(self) -> str:
        mode = self._raw("weights", "mode").strip().lower()
        if mode not in (INTERNAL, BOUNDARY):
            raise ConfigError(f"[weights] mode must be '{INTERNAL}' or '{BOUNDARY}', "
                              f"got {mode!r}", line=self._key_line("weights", "mode"))
        return mode

    def observation_window(self) -> tuple:
        window = self._float_list("weights", "omega")
        if len(window) != 2:
            raise ConfigError("[weights] omega must be 'lo, hi'",
                              line=self._key_line("weights", "omega"))
        return tuple(window)

    def observed_side(self) -> str:
        side = self._raw("weights", "gamma_plus").strip().lower()
        if side not in (LEFT, RIGHT):
            raise ConfigError(f"[weights] gamma_plus must be '{LEFT}' or '{RIGHT}', "
                              f"got {side!r}",
                              line=self._key_line("weights", "gamma_plus"))
        return side

    def weight_function(self, grid: Grid1D) -> tuple:
        """Returns (WeightFunction, mode)."""
        mode = self.weight_mode()
        if self.parser.has_option("weights", "psi_constant"):
            value = self._float("weights", "psi_constant")
            omega = self.observation_window() if mode == INTERNAL else None
            side = self.observed_side() if mode == BOUNDARY else None
            return constant_psi(grid, value, omega=omega, gamma_plus=side), mode
        k_const = (self._float("weights", "k_const")
                   if self.parser.has_option("weights", "k_const") else None)
        try:
            if mode == INTERNAL:
                weight = build_internal_psi(grid, self.observation_window(), k_const)
            else:
                delta = self._float("weights", "delta", default="0.5")
                weight = build_boundary_psi(grid, self.observed_side(), delta, k_const)
        except ValueError as exc:
            raise ConfigError(f"[weights]: {exc}") from exc
        return weight, mode

    def sweep_values(self) -> tuple:
        return (self._float_list("sweep", "s"),
                self._float_list("sweep", "lambda"))

    def perturbation_family(self, grid: Grid1D, base_a: np.ndarray):
        """(label, perturbed potential) pairs from named shapes x amplitudes."""
        raw = self._raw("inverse", "family")
        if not self.parser.has_section("perturbations"):
            raise ConfigError("missing section [perturbations]")
        family = []
        for token in raw.split(","):
            token = token.strip()
            if not token:
                continue
            if ":" not in token:
                raise ConfigError(f"[inverse] family entry {token!r} must be "
                                  f"'shape:amplitude'",
                                  line=self._key_line("inverse", "family"))
            name, amp_text = token.split(":", 1)
            name = name.strip()
            try:
                amp = float(amp_text)
            except ValueError as exc:
                raise ConfigError(f"[inverse] family amplitude {amp_text!r} "
                                  f"is not a number",
                                  line=self._key_line("inverse", "family")) from exc
            shape = self._expr("perturbations", name)(x=grid.nodes)
            family.append((f"{name}:{amp_text.strip()}",
                           base_a + amp * np.asarray(shape, dtype=float)))
        if not family:
            raise ConfigError("[inverse] family lists no members",
                              line=self._key_line("inverse", "family"))
        return family

    def seed(self, override: int | None = None) -> int:
        if override is not None:
            return int(override)
        if self.parser.has_option("inverse", "seed"):
            return self._int("inverse", "seed")
        return 0

    def has_seed(self, override: int | None = None) -> bool:
        return override is not None or self.parser.has_option("inverse", "seed")

    def noise_level(self) -> float:
        return self._float("reconstruct", "noise", default="0")

    def reconstruct_params(self, grid: Grid1D) -> dict:
        kind = self._raw("reconstruct", "data", default="internal").strip().lower()
        if kind not in (INTERNAL, BOUNDARY):
            raise ConfigError(f"[reconstruct] data must be '{INTERNAL}' or "
                              f"'{BOUNDARY}', got {kind!r}",
                              line=self._key_line("reconstruct", "data"))
        return {
            "a_true": np.asarray(self._expr("reconstruct", "a_true")(x=grid.nodes),
                                 dtype=float),
            "a_init": np.asarray(self._expr("reconstruct", "a_init")(x=grid.nodes),
                                 dtype=float),
            "alpha": self._float("reconstruct", "alpha", default="0"),
            "noise": self.noise_level(),
            "max_iterations": self._int("reconstruct", "max_iterations", default="50"),
            "gradient_tol": self._float("reconstruct", "gradient_tol", default="1e-10"),
            "data_kind": kind,
        }
