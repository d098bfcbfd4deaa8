"""Command-line front door: configuration, orchestration, persistence.

Commands: check-weights, forward, carleman, ip1, ip2, reconstruct.
Exit codes: 0 success, 1 operation or certification failure, 2 config
failure.  Outputs are plain-text tables with a header block recording the
artifact version, the config hash and the seed; identical config and seed
reproduce every output byte for byte.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import carleman as carl
from . import inverse as inv
from .config import ConfigError, RunConfig
from .forward import (
    ForwardSolveError,
    eigencomponent_norms,
    observe_boundary,
    observe_internal,
    save_solution,
    solve,
    spectral_oracle,
)
from .model import transform
from .weights import INTERNAL, certify


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def _meta_lines(command: str, cfg: RunConfig, seed: int) -> list:
    return [
        f"carleman-lab {__version__}",
        f"command: {command}",
        f"config-sha256: {cfg.sha256}",
        f"seed: {seed}",
    ]


def _write_table(path: Path, meta: list, columns: list, rows: list) -> None:
    with open(path, "w") as fh:
        for line in meta:
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    print(f"wrote {path}")


def cmd_check_weights(cfg: RunConfig, out: Path, jobs: int, seed: int) -> int:
    grid, _ = cfg.grids()
    weight, mode = cfg.weight_function(grid)
    report = certify(weight, grid, mode)
    rows = list(report.rows())
    rows.append(("pseudoconvexity_mu", "pass" if weight.mu > 0 else "FAIL",
                 weight.mu, 0.0, "builder closed-form mu"))
    _write_table(out / "certification.csv",
                 _meta_lines("check-weights", cfg, seed),
                 ["condition", "status", "margin", "threshold", "detail"], rows)
    if not report.passed:
        print("certification FAILED", file=sys.stderr)
        return 1
    print("certification passed")
    return 0


def cmd_forward(cfg: RunConfig, out: Path, jobs: int, seed: int) -> int:
    problem = cfg.forward_problem()
    y1, y2 = solve(problem)
    meta = _meta_lines("forward", cfg, seed)
    save_solution(out / "solution_y1.txt", problem.tgrid, y1, meta)
    save_solution(out / "solution_y2.txt", problem.tgrid, y2, meta)
    print(f"wrote {out / 'solution_y1.txt'}")
    print(f"wrote {out / 'solution_y2.txt'}")

    if problem.coupling.is_constant:
        norms = eigencomponent_norms(problem, y1, y2)
        ref = np.where(norms[0] > 0.0, norms[0], 1.0)
        drift = np.abs(norms - norms[0]) / ref
        rows = [[problem.tgrid.nodes[n], norms[n, 0], norms[n, 1],
                 drift[n, 0], drift[n, 1]]
                for n in range(problem.tgrid.n_nodes)]
        _write_table(out / "conservation.csv", meta,
                     ["t", "norm_component_1", "norm_component_2",
                      "rel_drift_1", "rel_drift_2"], rows)
        try:
            o1, o2 = spectral_oracle(problem)
        except ValueError:
            pass  # oracle needs zero potentials/sources/boundary
        else:
            wx = np.full(problem.grid.n_nodes, problem.grid.spacing)
            wx[0] = wx[-1] = problem.grid.spacing / 2.0
            diff = np.sqrt((np.abs(y1 - o1) ** 2 + np.abs(y2 - o2) ** 2) @ wx)
            rows = [[problem.tgrid.nodes[n], diff[n]]
                    for n in range(problem.tgrid.n_nodes)]
            _write_table(out / "oracle_diff.csv", meta, ["t", "l2_diff"], rows)
    return 0


def cmd_carleman(cfg: RunConfig, out: Path, jobs: int, seed: int) -> int:
    grid, tgrid = cfg.grids()
    cm = cfg.coupling(grid)
    tm = transform(cm)
    weight, mode = cfg.weight_function(grid)
    s_values, lam_values = cfg.sweep_values()
    members = carl.manufactured_family(cm, grid, tgrid)
    omega = cfg.observation_window() if mode == INTERNAL else None
    gamma = cfg.observed_side() if mode != INTERNAL else None
    reports = carl.sweep(members, weight, grid, tgrid, tm, s_values, lam_values,
                         mode, omega=omega, gamma_plus=gamma, jobs=jobs)
    _write_table(out / f"carleman_{mode}.csv", _meta_lines("carleman", cfg, seed),
                 carl.report_columns(mode), carl.report_rows(reports))
    for lam, trajectory in carl.summarize(reports).items():
        path = " -> ".join(f"s={s:g}: {ratio:.6g}" for s, ratio in trajectory)
        print(f"max ratio (lambda={lam:g}): {path}")
    return 0


def _stability_command(name: str, cfg: RunConfig, out: Path, jobs: int,
                       seed: int) -> int:
    problem = cfg.forward_problem()
    family = cfg.perturbation_family(problem.grid, problem.potentials.a)
    if name == "ip1":
        records = inv.ip1_stability(problem, cfg.observation_window(), family,
                                    jobs=jobs)
    else:
        records = inv.ip2_stability(problem, cfg.observed_side(), family,
                                    jobs=jobs)
    _write_table(out / f"stability_{name}.csv", _meta_lines(name, cfg, seed),
                 inv.STABILITY_COLUMNS, inv.stability_rows(records))
    ratios = [r.ratio for r in records if r.ratio is not None]
    if ratios:
        print(f"ratio spread: min {min(ratios):.6g}, max {max(ratios):.6g}, "
              f"max/min {max(ratios) / min(ratios):.6g}")
    return 0


def cmd_reconstruct(cfg: RunConfig, out: Path, jobs: int, seed: int,
                    seed_given: bool = True) -> int:
    problem = cfg.forward_problem()
    params = cfg.reconstruct_params(problem.grid)
    if params["noise"] > 0.0 and not seed_given:
        raise ConfigError("noise > 0 requires a seed ([inverse] seed or --seed)")

    truth = problem.with_a(params["a_true"])
    y1, y2 = solve(truth)
    if params["data_kind"] == INTERNAL:
        data = observe_internal(problem.grid, y1, y2, cfg.observation_window())
    else:
        data = observe_boundary(problem.grid, y1, y2, cfg.observed_side())
    rng = np.random.default_rng(seed)
    data = inv.add_observation_noise(data, params["noise"], rng)

    result = inv.reconstruct(problem, data, params["alpha"], params["a_init"],
                             params["max_iterations"], params["gradient_tol"],
                             jobs=jobs)
    meta = _meta_lines("reconstruct", cfg, seed)
    _write_table(out / "reconstruct_trace.csv", meta, inv.TRACE_COLUMNS,
                 result.trace)
    rows = [[problem.grid.nodes[j], result.a_estimate[j], params["a_true"][j]]
            for j in range(problem.grid.n_nodes)]
    _write_table(out / "a_estimate.csv", meta, ["x", "a_estimate", "a_true"], rows)
    err = np.sqrt(np.trapezoid((result.a_estimate - params["a_true"]) ** 2,
                               problem.grid.nodes))
    norm = np.sqrt(np.trapezoid(params["a_true"] ** 2, problem.grid.nodes))
    print(f"status: {result.status} after {result.iterations} iterations, "
          f"relative L2 error {err / norm:.6g}")
    return 1 if result.status == "singular" else 0


COMMANDS = {
    "check-weights": cmd_check_weights,
    "forward": cmd_forward,
    "carleman": cmd_carleman,
    "ip1": lambda cfg, out, jobs, seed: _stability_command("ip1", cfg, out, jobs, seed),
    "ip2": lambda cfg, out, jobs, seed: _stability_command("ip2", cfg, out, jobs, seed),
    "reconstruct": cmd_reconstruct,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="carleman-lab",
        description="Coupled-Schrodinger numerical laboratory",
    )
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="path to the INI config")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--jobs", type=int, default=1, help="worker count")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed override")
    args = ap.parse_args(argv)

    try:
        cfg = RunConfig.load(args.config)
        seed = cfg.seed(args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "reconstruct":
            return cmd_reconstruct(cfg, out, args.jobs, seed,
                                   seed_given=cfg.has_seed(args.seed))
        return COMMANDS[args.command](cfg, out, args.jobs, seed)
    except ConfigError as exc:
        anchor = f"{args.config}:{exc.line}: " if exc.line else f"{args.config}: "
        print(f"config error: {anchor}{exc}", file=sys.stderr)
        return 2
    except ForwardSolveError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
