"""Batch front end: config parsing, run orchestration, artifact export.

One JSON config describes a run: either a named preset or an inline
grid/model/init triple, plus a method and its options.  Every run directory
receives trajectory.csv, summary.json, a binary field dump, and
per-component density slices as CSV grids with rendered PNG figures next
to them.

Exit codes: 0 ok, 2 config error, 3 divergence, 4 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import baselines, optimizer, presets, report as report_mod
from .model import ModelSpec, State, bulk_gradient, energy, residual
from .optimizer import BlockSchedule, DivergenceError, SolverOptions
from .spectral import (
    SpectralField,
    inner,
    make_grid,
    random_field,
    read_field_dump,
    write_field_dump,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INVARIANT = 4

SOLVER_METHODS = ("ab-bpg-2", "ab-bpg-4")
BASELINE_METHODS = ("sis", "bdf2", "sav", "ssav")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _model_from_config(mcfg: dict) -> ModelSpec:
    try:
        tau = {tuple(entry["degrees"]): float(entry["value"]) for entry in mcfg.get("tau", [])}
        return ModelSpec(q=tuple(mcfg["q"]), c=float(mcfg["c"]), tau=tau)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field 'model': {exc}") from exc


def _grid_from_config(gcfg: dict):
    try:
        return make_grid(
            int(gcfg["n"]),
            int(gcfg["d"]),
            gcfg["mode_counts"],
            gcfg.get("recip_basis", np.eye(int(gcfg["n"]))),
            gcfg.get("projection", np.eye(int(gcfg["d"]), int(gcfg["n"]))),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"field 'grid': {exc}") from exc


def _init_from_config(icfg: dict, grid, model: ModelSpec, seed: int) -> State:
    kind = icfg.get("type", "random")
    amplitude = float(icfg.get("amplitude", 0.1))
    if kind == "random":
        rng = np.random.default_rng(seed)
        return State([random_field(grid, rng, amplitude) for _ in range(model.s)])
    if kind == "lattice_points":
        return presets.init_from_lattice_points(grid, icfg["points"], amplitude)
    if kind == "shells":
        return presets.init_from_shells(grid, model.q, amplitude)
    if kind == "file":
        _, comps = read_field_dump(icfg["path"])
        return State([SpectralField(c, grid) for c in comps])
    raise ConfigError(f"field 'init.type': unknown initializer {kind!r}")


def build_problem(cfg: dict, seed: int):
    """Resolve a config into (grid, model, initial state, preset or None)."""
    has_preset = "preset" in cfg
    has_inline = "grid" in cfg or "model" in cfg
    if has_preset == has_inline:
        raise ConfigError("exactly one of 'preset' and inline 'grid'/'model' must be given")
    if has_preset:
        try:
            pre = presets.get_preset(cfg["preset"])
        except ValueError as exc:
            raise ConfigError(f"field 'preset': {exc}") from exc
        grid, model, state = pre.build(cfg.get("resolution"))
        if "init" in cfg:
            state = _init_from_config(cfg["init"], grid, model, seed)
        return grid, model, state, pre
    if "grid" not in cfg or "model" not in cfg:
        raise ConfigError("inline configs need both 'grid' and 'model'")
    grid = _grid_from_config(cfg["grid"])
    model = _model_from_config(cfg["model"])
    state = _init_from_config(cfg.get("init", {}), grid, model, seed)
    return grid, model, state, None


def _solver_options(cfg: dict, method: str, pre, seed: int) -> SolverOptions:
    opts = dict(pre.solver_overrides) if pre is not None else {}
    opts.update(cfg.get("solver", {}))
    sched = opts.pop("schedule", {})
    if isinstance(sched, str):
        sched = {"mode": sched}
    sched.setdefault("rng_seed", seed)
    opts["schedule"] = BlockSchedule(**sched)
    if method == "ab-bpg-2":
        opts["a"] = 0.0
    else:
        opts.setdefault("a", 1.0)
        if opts["a"] <= 0:
            raise ConfigError("field 'solver.a': ab-bpg-4 needs a > 0")
    try:
        return SolverOptions(**opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'solver': {exc}") from exc


def _baseline_options(cfg: dict, method: str, pre) -> baselines.BaselineOptions:
    opts = {}
    if pre is not None:
        opts.update(pre.baseline_overrides.get(method, {}))
    opts.update(cfg.get("baseline", {}))
    opts["scheme"] = method
    try:
        return baselines.BaselineOptions(**opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"field 'baseline': {exc}") from exc


def run_method(cfg: dict, method: str, grid, model, state0, pre, seed: int):
    """Dispatch one run; returns (final state, RunReport)."""
    if method in SOLVER_METHODS:
        return optimizer.solve(model, state0, _solver_options(cfg, method, pre, seed))
    if method in BASELINE_METHODS:
        return baselines.run_baseline(model, state0, _baseline_options(cfg, method, pre))
    raise ConfigError(
        f"field 'method': unknown method {method!r}; choose from {SOLVER_METHODS + BASELINE_METHODS}"
    )


def write_artifacts(out: Path, model: ModelSpec, state: State, rep) -> None:
    out.mkdir(parents=True, exist_ok=True)
    report_mod.write_trajectory_csv(rep, out / "trajectory.csv")
    report_mod.write_summary_json(rep, out / "summary.json")
    write_field_dump(out / "state.mcpf", state.components)
    report_mod.render_trajectory_figure({"run": rep}, out / "trajectory.png")
    for j, fld in enumerate(state.components, start=1):
        x, y, vals = report_mod.density_slice(fld)
        report_mod.write_slice_csv(x, y, vals, out / f"density_{j}.csv")
        report_mod.render_density_figure(x, y, vals, out / f"density_{j}.png", title=f"component {j}")


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out or cfg.get("out", "runs/solve"))
    grid, model, state0, pre = build_problem(cfg, seed)
    method = cfg.get("method", "ab-bpg-2")
    try:
        state, rep = run_method(cfg, method, grid, model, state0, pre, seed)
    except DivergenceError as exc:
        rep = report_mod.RunReport(termination="diverged", options_echo={"method": method})
        out.mkdir(parents=True, exist_ok=True)
        report_mod.write_summary_json(rep, out / "summary.json")
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    write_artifacts(out, model, state, rep)
    print(f"{method}: E = {rep.final_energy:.12g}, grad_inf = {rep.final_grad_inf:.3e}, "
          f"{rep.iterations} iterations ({rep.termination})")
    return EXIT_OK


def _worker_count() -> int:
    try:
        return max(1, int(os.environ.get("MCPFC_THREADS", "1")))
    except ValueError:
        return 1


def cmd_compare(args) -> int:
    cfg = _load_config(args.config)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise ConfigError("compare needs at least two methods")
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    out = Path(args.out or cfg.get("out", "runs/compare"))
    out.mkdir(parents=True, exist_ok=True)
    grid, model, state0, pre = build_problem(cfg, seed)

    def one(method):
        tick = time.perf_counter()
        try:
            state, rep = run_method(cfg, method, grid, model, state0.copy(), pre, seed)
            write_artifacts(out / method, model, state, rep)
            return method, rep, time.perf_counter() - tick, None
        except Exception as exc:  # per-run errors recorded, comparison continues
            return method, None, time.perf_counter() - tick, str(exc)

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        rows = list(pool.map(one, methods))

    import csv

    reports = {}
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "iterations", "wall_s", "final_energy", "final_grad_inf", "termination"])
        for method, rep, wall, err in rows:
            if rep is None:
                writer.writerow([method, "", f"{wall:.3f}", "", "", f"error: {err}"])
                continue
            reports[method] = rep
            writer.writerow(
                [
                    method,
                    rep.iterations,
                    f"{wall:.3f}",
                    f"{rep.final_energy:.17g}",
                    f"{rep.final_grad_inf:.6e}",
                    rep.termination,
                ]
            )
    if reports:
        report_mod.render_trajectory_figure(reports, out / "comparison.png")
    for method, rep, wall, err in rows:
        line = f"{method}: error: {err}" if rep is None else (
            f"{method}: {rep.iterations} iters, E = {rep.final_energy:.12g}, {rep.termination}"
        )
        print(line)
    return EXIT_OK


def gradcheck_max_error(model: ModelSpec, grid, trials: int = 20, seed: int = 0, corruption: float = 0.0) -> float:
    """Max relative error of directional derivatives vs centered differences."""
    rng = np.random.default_rng(seed)
    eps = 1e-6
    worst = 0.0
    for _ in range(trials):
        state = State([random_field(grid, rng, 0.3) for _ in range(model.s)])
        direction = [random_field(grid, rng, 1.0) for _ in range(model.s)]
        analytic = 0.0
        for j in range(1, model.s + 1):
            dop = model.diag_operators(grid)[j - 1]
            g = SpectralField(
                dop.entries * state.components[j - 1].coeffs + bulk_gradient(model, state, j).coeffs,
                grid,
            )
            analytic += inner(g, direction[j - 1])
        analytic += corruption
        plus = State(
            [SpectralField(c.coeffs + eps * v.coeffs, grid) for c, v in zip(state.components, direction)]
        )
        minus = State(
            [SpectralField(c.coeffs - eps * v.coeffs, grid) for c, v in zip(state.components, direction)]
        )
        fd = (energy(model, plus).total - energy(model, minus).total) / (2.0 * eps)
        scale = max(abs(analytic), abs(fd), 1e-12)
        worst = max(worst, abs(analytic - fd) / scale)
    return worst


def cmd_gradcheck(args) -> int:
    cfg = _load_config(args.config)
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    grid, model, _, _ = build_problem(cfg, seed)
    corruption = float(cfg.get("corrupt_gradient", 0.0))  # test hook
    worst = gradcheck_max_error(model, grid, seed=seed, corruption=corruption)
    print(f"max relative finite-difference error over 20 trials: {worst:.3e}")
    if worst >= 1e-6:
        print("gradient check FAILED (threshold 1e-6)", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_export(args) -> int:
    header, comps = read_field_dump(args.field)
    j = args.component
    if not 1 <= j <= header["s"]:
        raise ConfigError(f"component {j} out of range 1..{header['s']}")
    if args.config:
        cfg = _load_config(args.config)
        grid, _, _, _ = build_problem(cfg, 0)
        if grid.shape != tuple(header["mode_counts"]):
            raise ConfigError("config grid does not match the field dump resolution")
    else:
        n, d = header["n"], header["d"]
        if n != d:
            raise ConfigError("quasiperiodic dumps need --config to supply the grid geometry")
        grid = make_grid(n, d, header["mode_counts"], np.eye(n), np.eye(d))
    samples, extent = 0, 0.0
    if args.slice:
        parts = args.slice.split(",")
        samples = int(parts[0])
        if len(parts) > 1:
            extent = float(parts[1])
    fld = SpectralField(comps[j - 1], grid)
    x, y, vals = report_mod.density_slice(fld, samples=samples, extent=extent)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.field).stem
    report_mod.write_slice_csv(x, y, vals, out / f"{stem}_component{j}.csv")
    report_mod.render_density_figure(x, y, vals, out / f"{stem}_component{j}.png", title=f"component {j}")
    print(f"wrote {stem}_component{j}.csv and .png to {out}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcpfc", description="Stationary states of multicomponent coupled-mode phase-field-crystal models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one method and export its artifacts")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out")
    p_solve.add_argument("--seed", type=int)
    p_solve.set_defaults(func=cmd_solve)

    p_cmp = sub.add_parser("compare", help="run several methods from one initial state")
    p_cmp.add_argument("--config", required=True)
    p_cmp.add_argument("--methods", required=True, help="comma-separated method names")
    p_cmp.add_argument("--out")
    p_cmp.add_argument("--seed", type=int)
    p_cmp.set_defaults(func=cmd_compare)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of the energy gradient")
    p_grad.add_argument("--config", required=True)
    p_grad.add_argument("--seed", type=int)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_exp = sub.add_parser("export", help="density slice of a stored field dump")
    p_exp.add_argument("--field", required=True)
    p_exp.add_argument("--component", type=int, default=1)
    p_exp.add_argument("--slice", help="SAMPLES[,EXTENT] for quasiperiodic synthesis")
    p_exp.add_argument("--config", help="grid geometry for quasiperiodic dumps")
    p_exp.add_argument("--out")
    p_exp.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
