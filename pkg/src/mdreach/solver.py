"""Fixed-point drivers: value iteration, policy iteration, multigrid, warm start."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from mdreach.backup import BackupOperator, TransitionTable, greedy_policy, policy_backup
from mdreach.grid import GridSpec, prolong
from mdreach.problem import Problem

logger = logging.getLogger(__name__)

MR_ITERATION_CAP = 100_000


@dataclass
class SolverConfig:
    epsilon: float = 1e-3
    max_iterations: Optional[int] = None

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    init_provenance: str = "default"
    method: str = "vi"
    extra: dict = field(default_factory=dict)
    # evaluated value vectors (policy iteration only); not serialized
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("history")
        return d


def default_max_iterations(gamma: float, epsilon: float, scale: float) -> int:
    """Contraction worst case ``ceil(log(eps / scale) / log(gamma))`` times 10."""
    if gamma >= 1.0:
        return MR_ITERATION_CAP
    if scale <= epsilon:
        return 10
    return 10 * max(1, math.ceil(math.log(epsilon / scale) / math.log(gamma)))


def _iterate(step: Callable[[np.ndarray], np.ndarray], U: np.ndarray, epsilon: float, max_iterations: int,
             report: SolveReport) -> np.ndarray:
    start = time.perf_counter()
    for _ in range(max_iterations):
        U_next = step(U)
        res = float(np.max(np.abs(U_next - U))) if U.size else 0.0
        report.residuals.append(res)
        report.iterations += 1
        U = U_next
        if res <= epsilon:
            report.converged = True
            break
    report.wall_time += time.perf_counter() - start
    return U


def value_iteration(
    backup: BackupOperator,
    init: Optional[np.ndarray] = None,
    cfg: Optional[SolverConfig] = None,
    provenance: Optional[str] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Apply ``backup`` until consecutive iterates are within epsilon (inf-norm).

    The undiscounted (MR) operator is not a contraction, so it only accepts
    its own reward vector ``l`` as the starting point.
    """
    cfg = cfg or SolverConfig()
    if init is None:
        U = backup.default_init()
        provenance = provenance or "default"
    else:
        U = np.array(init, dtype=float)
        if U.shape != (backup.grid.n_nodes,):
            raise ValueError(f"init has shape {U.shape}, expected ({backup.grid.n_nodes},)")
        provenance = provenance or "supplied"
    if backup.kind == "mr" and not np.array_equal(U, backup.reward):
        raise ValueError("MR value iteration must start from l; other starts may converge to spurious fixed points")
    max_it = cfg.max_iterations or default_max_iterations(backup.gamma, cfg.epsilon, backup.value_scale())
    report = SolveReport(init_provenance=provenance, method="vi")
    U = _iterate(backup, U, cfg.epsilon, max_it, report)
    if not report.converged:
        logger.warning("value iteration stopped after %d iterations, residual %.3g", report.iterations,
                       report.residuals[-1] if report.residuals else float("nan"))
    return U, report


def policy_evaluation(
    table: TransitionTable,
    h,
    policy,
    epsilon: float,
    init: Optional[np.ndarray] = None,
    max_iterations: Optional[int] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Fixed point of the fixed-policy backup ``min(h, gamma Phi_pi U)`` by iteration."""
    h = np.asarray(h, dtype=float)
    U = h.copy() if init is None else np.array(init, dtype=float)
    max_it = max_iterations or default_max_iterations(table.gamma, epsilon, float(np.abs(h).max()))
    report = SolveReport(method="policy_evaluation", init_provenance="default" if init is None else "supplied")
    U = _iterate(lambda A: policy_backup(table, h, policy, A), U, epsilon, max_it, report)
    return U, report


def policy_iteration(
    table: TransitionTable,
    h,
    cfg: Optional[SolverConfig] = None,
    max_policies: int = 1000,
) -> tuple[np.ndarray, SolveReport]:
    """Alternate policy evaluation and greedy improvement (one player only).

    Each evaluation runs value iteration under the fixed-policy backup to
    ``epsilon / 10``, starting from the previous policy's value so the
    evaluated sequence climbs monotonically.
    """
    if table.two_player:
        raise ValueError("policy iteration is implemented for one-player problems only")
    cfg = cfg or SolverConfig()
    h = np.asarray(h, dtype=float)
    eps_inner = cfg.epsilon / 10
    report = SolveReport(method="pi", init_provenance="default")
    report.extra.update(epsilon_inner=eps_inner, inner_iterations=[], policy_changes=[])
    start = time.perf_counter()

    U = h.copy()
    policy = greedy_policy(table, h, U).control
    for _ in range(max_policies):
        U_new, inner = policy_evaluation(table, h, policy, eps_inner, init=U, max_iterations=cfg.max_iterations)
        report.extra["inner_iterations"].append(inner.iterations)
        res = float(np.max(np.abs(U_new - U)))
        report.residuals.append(res)
        report.iterations += 1
        report.history.append(U_new)
        U = U_new
        new_policy = greedy_policy(table, h, U).control
        changed = int(np.count_nonzero(new_policy != policy))
        report.extra["policy_changes"].append(changed)
        if changed == 0 or (report.iterations > 1 and res < cfg.epsilon):
            report.converged = True
            break
        policy = new_policy
    report.wall_time = time.perf_counter() - start
    return U, report


def _check_chain(grids: Sequence[GridSpec]):
    if not grids:
        raise ValueError("multigrid needs at least one grid")
    for coarse, fine in zip(grids[:-1], grids[1:]):
        if not coarse.same_domain(fine):
            raise ValueError("multigrid levels must share domain, dimension and periodicity")
        if any(c > f for c, f in zip(coarse.nodes_per_axis, fine.nodes_per_axis)) or coarse == fine:
            raise ValueError(f"grid {coarse.nodes_per_axis} is not coarser than {fine.nodes_per_axis}")


def multigrid_solve(
    grids: Sequence[GridSpec],
    problem: Problem,
    cfg: Optional[SolverConfig] = None,
    method: str = "vi",
) -> tuple[np.ndarray, list[SolveReport]]:
    """Solve on each grid in turn (coarse to fine), prolonging each solution
    to initialize the next level."""
    _check_chain(grids)
    cfg = cfg or SolverConfig()
    reports = []
    U, prev_grid = None, None
    for level, grid in enumerate(grids):
        prob = problem.with_grid(grid)
        if method == "pi" and U is None:
            U, rep = policy_iteration(prob.table, prob.h, cfg)
        else:
            init = None if U is None else prolong(U, prev_grid, grid)
            prov = "default" if U is None else f"prolonged:{'x'.join(map(str, prev_grid.nodes_per_axis))}"
            if prob.kind == "mr" and init is not None:
                raise ValueError("MR problems cannot be initialized from a coarse solution")
            U, rep = value_iteration(prob.operator, init, cfg, provenance=prov)
        rep.extra.update(level=level, nodes_per_axis=list(grid.nodes_per_axis), **prob.metadata())
        reports.append(rep)
        prev_grid = grid
    return U, reports


def select_init(candidates: Sequence[np.ndarray], backup: BackupOperator) -> tuple[int, np.ndarray]:
    """Pick the candidate with the smallest backup residual.

    Returns the winning index and, per candidate, the bound
    ``||B[A] - A|| / (1 - gamma)`` on its distance to the fixed point. Costs
    one backup per candidate.
    """
    if len(candidates) == 0:
        raise ValueError("need at least one candidate initialization")
    gamma = backup.gamma
    if gamma >= 1:
        raise ValueError("initialization bounds need a contraction (gamma < 1)")
    residuals = np.array([float(np.max(np.abs(backup(A) - np.asarray(A, dtype=float)))) for A in candidates])
    bounds = residuals / (1.0 - gamma)
    return int(np.argmin(residuals)), bounds


def warm_start_solve(
    old_solution,
    backup: BackupOperator,
    cfg: Optional[SolverConfig] = None,
    old_grid: Optional[GridSpec] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Value iteration from whichever of ``{default, old_solution}`` has the
    smaller contraction bound."""
    old = np.asarray(old_solution, dtype=float)
    if (old_grid is not None and old_grid != backup.grid) or old.shape != (backup.grid.n_nodes,):
        raise ValueError("warm start vector must live on the new problem's grid")
    candidates = [backup.default_init(), old]
    choice, bounds = select_init(candidates, backup)
    label = "default" if choice == 0 else "warm"
    U, report = value_iteration(backup, candidates[choice], cfg, provenance=label)
    report.extra.update(init_bounds={"default": float(bounds[0]), "warm": float(bounds[1])})
    return U, report
