"""Command-line entry point: ``mdreach solve | compare | tdlearn``.

Exit codes: 0 converged, 2 solver did not converge, 1 configuration or
input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from mdreach.config import ConfigError, RunConfig, load_config, load_preset, preset_names
from mdreach.grid import coarsen, interpolate, read_values, write_values
from mdreach.problem import Problem
from mdreach.reach import ContourLayer, extract_contour, over_approx_threshold, write_contours_csv, write_svg
from mdreach.solver import (
    SolveReport,
    SolverConfig,
    multigrid_solve,
    policy_evaluation,
    policy_iteration,
    value_iteration,
    warm_start_solve,
)
from mdreach.tdlearn import TDConfig, nearest_node, node_samples, read_transitions_csv, rollout, td_train

logger = logging.getLogger("mdreach")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


@dataclass
class SolveResult:
    config: RunConfig
    problem: Problem
    values: np.ndarray
    report: SolveReport
    levels: list = field(default_factory=list)

    @property
    def field(self) -> np.ndarray:
        """Values on the reachability scale: Z = U + L for mdr, V for mr."""
        return self.values + self.problem.L if self.config.kind == "mdr" else self.values

    def summary(self) -> dict:
        out = {
            "name": self.config.name,
            "config": str(self.config.source) if self.config.source else f"preset:{self.config.name}",
            "method": self.config.method,
            "epsilon": self.config.epsilon,
            "tau_bar": self.config.tau_bar,
            **self.problem.metadata(),
            **self.report.to_dict(),
        }
        if self.levels:
            out["levels"] = [r.to_dict() for r in self.levels]
            out["total_iterations"] = sum(r.iterations for r in self.levels)
        return out


def solve_config(cfg: RunConfig) -> SolveResult:
    prob = cfg.problem()
    scfg = SolverConfig(epsilon=cfg.epsilon, max_iterations=cfg.max_iterations)
    levels = []
    if cfg.method == "vi":
        U, rep = value_iteration(prob.operator, cfg=scfg)
    elif cfg.method == "pi":
        U, rep = policy_iteration(prob.table, prob.h, scfg)
    elif cfg.method == "multigrid":
        grids = [cfg.grid]
        for _ in range(cfg.levels - 1):
            grids.insert(0, coarsen(grids[0]))
        U, levels = multigrid_solve(grids, prob, scfg)
        rep = levels[-1]
    else:
        old_grid, old, _ = read_values(cfg.warm_start)
        if old_grid != cfg.grid:
            raise ConfigError(f"warm start file {cfg.warm_start} was written on a different grid")
        U, rep = warm_start_solve(old, prob.operator, scfg, old_grid=old_grid)
    return SolveResult(cfg, prob, U, rep, levels)


def _contour_levels(res: SolveResult) -> dict[str, float]:
    cfg, prob = res.config, res.problem
    levels = {}
    for kind in cfg.output.contours:
        if kind == "over":
            if cfg.kind != "mdr":
                logger.warning("over-approximation contour needs an mdr problem; skipped")
                continue
            levels[kind] = over_approx_threshold(cfg.lam, cfg.tau_bar, prob.L)
        else:
            levels[kind] = 0.0
    return levels


_STYLES = {
    "target": dict(stroke="#1f4e9c", width=1.2, dash="2,2"),
    "under": dict(stroke="#2a8a2a", width=1.8),
    "zero": dict(stroke="#c0392b", width=1.8),
    "over": dict(stroke="#d35400", width=1.5, dash="6,3"),
}


def export(res: SolveResult, out_dir: Path) -> list[Path]:
    cfg, prob, grid = res.config, res.problem, res.config.grid
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if cfg.output.values:
        written.append(write_values(out_dir / "values.bin", grid, res.values, kind=cfg.kind,
                                    grid_hash=grid.digest(), L=prob.L, gamma=prob.gamma, dt=prob.time_step))
    levels = _contour_levels(res)
    if levels:
        slices = [None] if grid.dim == 2 else list(cfg.output.slice_indices)
        for k in slices:
            axis = None if k is None else cfg.output.slice_axis
            suffix = "" if k is None else f"_slice{k}"
            layers = [ContourLayer(extract_contour(prob.l, grid, 0.0, axis, k), "target boundary", **_STYLES["target"])]
            for kind, level in levels.items():
                lines = extract_contour(res.field, grid, level, axis, k)
                written.append(write_contours_csv(out_dir / f"contour_{kind}{suffix}.csv", lines))
                layers.append(ContourLayer(lines, f"{kind} (level {level:.4g})", **_STYLES[kind]))
            if cfg.output.svg:
                keep = [j for j in range(grid.dim) if j != axis]
                bounds = (grid.lower[keep[0]], grid.upper[keep[0]], grid.lower[keep[1]], grid.upper[keep[1]])
                title = cfg.name if k is None else f"{cfg.name}, axis {axis} = {grid.axis_coords(axis)[k]:.3f}"
                written.append(write_svg(out_dir / f"plot{suffix}.svg", layers, bounds, title=title))
    if cfg.output.report:
        path = out_dir / "report.json"
        path.write_text(json.dumps(res.summary(), indent=2) + "\n")
        written.append(path)
    return written


def compare_results(a: SolveResult, b: SolveResult) -> dict:
    if a.config.grid != b.config.grid:
        raise ConfigError("compared runs must share the same grid")
    za, zb = a.field, b.field
    diff = za - zb
    slack = 2 * max(a.config.epsilon, b.config.epsilon)
    return {
        "a": a.config.name,
        "b": b.config.name,
        "gap_inf": float(np.max(np.abs(diff))),
        "gap_1": float(np.sum(np.abs(diff))),
        "ordering_slack": slack,
        "violations_a_below_b": int(np.count_nonzero(za < zb - slack)),
        "violations_b_below_a": int(np.count_nonzero(zb < za - slack)),
        "iterations": {"a": a.report.iterations, "b": b.report.iterations},
        "converged": {"a": a.report.converged, "b": b.report.converged},
        "wall_time": {"a": a.report.wall_time, "b": b.report.wall_time},
    }


def run_tdlearn(cfg: RunConfig, seed: Optional[int], out_dir: Path) -> dict:
    td = cfg.tdlearn
    if td is None:
        raise ConfigError("config has no [tdlearn] section")
    prob = cfg.problem()
    grid, model, dt = cfg.grid, prob.model, prob.time_step
    policy = np.asarray(td.policy, dtype=np.int64)
    if policy.size and policy.shape != (grid.n_nodes,):
        raise ConfigError(f"[tdlearn] policy needs one control index per node ({grid.n_nodes})")
    if policy.size and (policy.min() < 0 or policy.max() >= model.n_controls):
        raise ConfigError(f"[tdlearn] policy indices must lie in [0, {model.n_controls})")
    if td.samples == "nodes":
        if not policy.size:
            raise ConfigError("[tdlearn] samples = 'nodes' needs a policy")
        data = node_samples(grid, model, dt, policy)
    elif td.samples == "rollout":
        if not policy.size or not td.x0 or td.horizon < 1:
            raise ConfigError("[tdlearn] rollout needs policy, x0 and horizon")

        def act(x):
            return model.controls[policy[nearest_node(grid, x)]]

        data = rollout(model, act, td.x0, dt, td.horizon, grid=grid)
    else:
        try:
            data = read_transitions_csv(td.samples)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not data:
            raise ConfigError(f"{td.samples}: dataset has no transitions")
        dt = data[0].dt
    h = prob.h
    tcfg = TDConfig.from_rate(cfg.lam, dt, alpha=td.alpha, passes=td.passes, shuffle=td.shuffle,
                              seed=td.seed if seed is None else seed)
    ref = None
    if td.reference and policy.size:
        ref, _ = policy_evaluation(prob.table, h, policy, epsilon=1e-12)
    theta, curve = td_train(data, grid, lambda x: interpolate(grid, h, x), tcfg, theta_ref=ref)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_values(out_dir / "theta.bin", grid, theta, kind="td", gamma=tcfg.gamma, dt=dt)
    curve.write_csv(out_dir / "learning_curve.csv")
    report = {"name": cfg.name, "samples": len(data), "passes": tcfg.passes, "gamma": tcfg.gamma, "dt": dt,
              "alpha": tcfg.alpha, "seed": tcfg.seed, "final_gap_inf": curve.gaps[-1] if curve.gaps else None}
    (out_dir / "td_report.json").write_text(json.dumps(report, indent=2) + "\n")
    return report


def _load(arg: Optional[str], preset: Optional[str]) -> RunConfig:
    if preset:
        if arg:
            raise ConfigError("give either a config file or --preset, not both")
        return load_preset(preset)
    if not arg:
        raise ConfigError("no config given; pass a file or --preset")
    if arg.startswith("preset:"):
        return load_preset(arg[len("preset:"):])
    return load_config(arg)


def _apply_flags(cfg: RunConfig, args, suffix: str = "") -> RunConfig:
    kw = {}
    if args.epsilon is not None:
        kw["epsilon"] = args.epsilon
    if args.output_dir is not None:
        kw["output"] = {"dir": Path(args.output_dir) / suffix if suffix else Path(args.output_dir)}
    return cfg.with_overrides(**kw) if kw else cfg


def _set_threads(n: Optional[int]):
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output-dir", help="override the config's output directory")
    common.add_argument("--epsilon", type=float, help="override the stopping tolerance")
    common.add_argument("--threads", type=int, help="worker threads for the backup sweeps")
    common.add_argument("--seed", type=int, help="RNG seed (TD sample shuffling)")
    common.add_argument("--preset", help=f"use a checked-in preset ({', '.join(preset_names())})")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mdreach", description="Grid-based reachability by discounted value iteration.")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", parents=[common], help="run one configured solve")
    s.add_argument("config", nargs="?", help="TOML config file or preset:NAME")
    c = sub.add_parser("compare", parents=[common], help="solve two configs and compare the results")
    c.add_argument("config_a")
    c.add_argument("config_b")
    t = sub.add_parser("tdlearn", parents=[common], help="TD learning from sampled transitions")
    t.add_argument("config", nargs="?")
    sub.add_parser("presets", help="list checked-in presets")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_OK
    _set_threads(args.threads)
    try:
        if args.command == "solve":
            cfg = _apply_flags(_load(args.config, args.preset), args)
            t0 = time.perf_counter()
            res = solve_config(cfg)
            export(res, cfg.output.dir)
            state = "converged" if res.report.converged else "NOT converged"
            print(f"{cfg.name}: {state} after {res.report.iterations} iterations "
                  f"({time.perf_counter() - t0:.1f} s); artifacts in {cfg.output.dir}")
            return EXIT_OK if res.report.converged else EXIT_NOT_CONVERGED
        if args.command == "compare":
            if args.preset:
                raise ConfigError("compare takes two configs; use preset:NAME for presets")
            a = _apply_flags(_load(args.config_a, None), args, "a")
            b = _apply_flags(_load(args.config_b, None), args, "b")
            if a.grid != b.grid:
                raise ConfigError("compared configs must share the same grid")
            ra, rb = solve_config(a), solve_config(b)
            report = compare_results(ra, rb)
            out = Path(args.output_dir) if args.output_dir else Path("out") / f"compare_{a.name}_{b.name}"
            out.mkdir(parents=True, exist_ok=True)
            (out / "compare.json").write_text(json.dumps(report, indent=2) + "\n")
            print(json.dumps(report, indent=2))
            ok = ra.report.converged and rb.report.converged
            return EXIT_OK if ok else EXIT_NOT_CONVERGED
        cfg = _apply_flags(_load(args.config, args.preset), args)
        report = run_tdlearn(cfg, args.seed, cfg.output.dir)
        print(json.dumps(report, indent=2))
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
