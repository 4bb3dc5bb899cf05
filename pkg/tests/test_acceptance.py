"""Acceptance suite: one PASS/FAIL line per criterion.

Heavy solves are session fixtures shared between criteria. A criterion's
reported runtime is its own work plus the build time of every fixture it
uses, i.e. what it would cost when run on its own.

Run with ``pytest tests/test_acceptance.py -v`` (or execute this file).
"""

from __future__ import annotations

import math
import sys
import time

import numpy as np
import pytest

from mdreach.backup import BackupOperator, TransitionTable, mdr_backup, mr_backup
from mdreach.config import load_preset
from mdreach.grid import coarsen
from mdreach.reach import ApproximationParams, di_analytic_safe, shrink_or_grow_membership, z_from_u
from mdreach.solver import (
    SolverConfig,
    multigrid_solve,
    policy_evaluation,
    policy_iteration,
    select_init,
    value_iteration,
    warm_start_solve,
)
from mdreach.tdlearn import TDConfig, node_samples, td_train

from conftest import chain_problem, di_problem

EPS = 1e-3
COST: dict[str, float] = {}
RESULTS: dict[int, str] = {}


def report(capsys, number: int, title: str, ok: bool, detail: str, runtime: float, limit: float) -> bool:
    within = runtime <= limit
    passed = ok and within
    line = (f"{'PASS' if passed else 'FAIL'} criterion {number:2d} {title}: {detail}; "
            f"runtime {runtime:.1f} s (limit {limit:.0f} s{'' if within else ', EXCEEDED'})")
    RESULTS[number] = line
    with capsys.disabled():
        print("\n" + line)
    return passed


def timed(name, fn):
    t0 = time.perf_counter()
    out = fn()
    COST[name] = time.perf_counter() - t0
    return out


def cost(*names) -> float:
    return sum(COST[n] for n in names)


def solve(problem, **kw):
    return value_iteration(problem.operator, cfg=SolverConfig(epsilon=EPS), **kw)


# ------------------------------------------------------------ shared solves

@pytest.fixture(scope="session")
def di_mdr():
    def build():
        p = load_preset("di-mdr").problem()
        U, rep = solve(p)
        return p, U, rep

    return timed("di_mdr", build)


@pytest.fixture(scope="session")
def di_mdr_l02(di_mdr):
    def build():
        p = load_preset("di-mdr-l02").problem()
        assert p.time_step == di_mdr[0].time_step
        U, rep = solve(p)
        return p, U, rep

    return timed("di_mdr_l02", build)


@pytest.fixture(scope="session")
def di_mr(di_mdr):
    def build():
        p = load_preset("di-mr").problem()
        assert p.time_step == di_mdr[0].time_step
        V, rep = solve(p)
        return p, V, rep

    return timed("di_mr", build)


@pytest.fixture(scope="session")
def pe_mdr():
    def build():
        p = load_preset("pe-mdr").problem()
        U, rep = solve(p)
        return p, U, rep

    return timed("pe_mdr", build)


@pytest.fixture(scope="session")
def pe_mr(pe_mdr):
    def build():
        p = load_preset("pe-mr").problem()
        assert p.time_step == pe_mdr[0].time_step
        V, rep = solve(p)
        return p, V, rep

    return timed("pe_mr", build)


# ------------------------------------------------------------------ criteria

def test_criterion_01_contraction(capsys):
    t0 = time.perf_counter()
    base = di_problem(n=21)
    dt = base.time_step
    lam = -math.log(0.99) / dt
    table = TransitionTable(base.grid, base.model, dt, lam)
    gamma = table.gamma
    rng = np.random.default_rng(1)
    h = base.h
    worst = 0.0
    ok = True
    for _ in range(200):
        A1 = rng.uniform(-2 * base.L, 0, size=base.grid.n_nodes)
        A2 = rng.uniform(-2 * base.L, 0, size=base.grid.n_nodes)
        lhs = np.max(np.abs(mdr_backup(table, h, A1) - mdr_backup(table, h, A2)))
        rhs = np.max(np.abs(A1 - A2))
        ok &= bool(lhs <= gamma * rhs + 1e-12)
        worst = max(worst, lhs / rhs)
    runtime = time.perf_counter() - t0
    assert report(capsys, 1, "contraction", ok, f"gamma = {gamma:.6f}, worst ratio {worst:.6f} over 200 pairs",
                  runtime, 10)


def test_criterion_02_init_independence(capsys, di_mdr):
    t0 = time.perf_counter()
    p, U_h, _ = di_mdr
    U_0, rep0 = solve(p, init=np.zeros(p.grid.n_nodes))
    gap = float(np.max(np.abs(U_h - U_0)))
    runtime = time.perf_counter() - t0 + cost("di_mdr")
    assert report(capsys, 2, "init independence", gap <= 0.002,
                  f"||U(h) - U(0)||_inf = {gap:.6f} <= 0.002 (reference observation 0.000299)", runtime, 120)


def test_criterion_03_mr_non_contraction(capsys):
    t0 = time.perf_counter()
    p = load_preset("di-mr").problem()
    op = p.operator
    alpha = -p.L - 0.5
    A = np.full(p.grid.n_nodes, alpha)
    out = mr_backup(p.table, p.l, A)
    identical = bool(np.array_equal(out, A))
    try:
        value_iteration(op, init=A)
        rejected = False
    except ValueError:
        rejected = True
    runtime = time.perf_counter() - t0
    assert report(capsys, 3, "MR non-contraction", identical and rejected,
                  f"alpha = {alpha:.4f} < -L: backup bit-identical = {identical}, solver rejects = {rejected}",
                  runtime, 1)


def test_criterion_04_z_above_v(capsys, di_mdr, di_mr):
    t0 = time.perf_counter()
    p, U, _ = di_mdr
    _, V, _ = di_mr
    Z = z_from_u(U, p.L)
    bad = int(np.count_nonzero(Z < V - 2 * EPS))
    runtime = time.perf_counter() - t0 + cost("di_mdr", "di_mr")
    assert report(capsys, 4, "Z >= V", bad == 0, f"{bad} nodes with Z < V - 2 eps", runtime, 180)


def test_criterion_05_lambda_tightness(capsys, di_mdr, di_mdr_l02):
    t0 = time.perf_counter()
    p1, U1, _ = di_mdr
    p2, U2, _ = di_mdr_l02
    Z1, Z2 = z_from_u(U1, p1.L), z_from_u(U2, p2.L)
    bad = int(np.count_nonzero((Z2 <= 0) & ~(Z1 <= 0)))
    runtime = time.perf_counter() - t0 + cost("di_mdr", "di_mdr_l02")
    assert report(capsys, 5, "lambda tightness", bad == 0,
                  f"{bad} nodes in {{Z_0.2 <= 0}} outside {{Z_0.1 <= 0}} "
                  f"(sizes {int(np.sum(Z2 <= 0))} vs {int(np.sum(Z1 <= 0))})", runtime, 180)


def test_criterion_06_analytic_oracle(capsys, di_mdr):
    t0 = time.perf_counter()
    p, U, _ = di_mdr
    cfg = load_preset("di-mdr")
    u_max = p.model.params["u_max"]
    Z = z_from_u(U, p.L)
    nodes = p.grid.nodes()
    diag = float(np.hypot(*p.grid.spacing))

    def safe(x):
        return di_analytic_safe(x, u_max)

    under = Z <= 0
    thr = ApproximationParams(cfg.lam, cfg.tau_bar, p.L).threshold
    claimed_safe = Z > thr
    deep_safe = shrink_or_grow_membership(nodes[under], diag, safe, "shrink")
    near_safe = shrink_or_grow_membership(nodes[claimed_safe], diag, safe, "grow")
    bad_under = int(np.count_nonzero(deep_safe))
    bad_over = int(np.count_nonzero(~near_safe))
    runtime = time.perf_counter() - t0
    assert report(capsys, 6, "analytic oracle", bad_under == 0 and bad_over == 0,
                  f"{bad_under} under-approx nodes deep in the safe set, {bad_over} claimed-safe nodes "
                  f"farther than {diag:.4f} from it (threshold {thr:.4f})", runtime, 60)


def test_criterion_07_policy_iteration(capsys, di_mdr):
    t0 = time.perf_counter()
    p, U_vi, _ = di_mdr
    U_pi, rep = policy_iteration(p.table, p.h, SolverConfig(epsilon=EPS))
    gap = float(np.max(np.abs(U_pi - U_vi)))
    eps_inner = rep.extra["epsilon_inner"]
    monotone = all(bool(np.all(b >= a - eps_inner)) for a, b in zip(rep.history[:-1], rep.history[1:]))
    runtime = time.perf_counter() - t0 + cost("di_mdr")
    assert report(capsys, 7, "policy iteration", gap <= 2 * EPS and monotone,
                  f"||U_PI - U_VI||_inf = {gap:.6f} (need <= {2 * EPS}), {rep.iterations} policies, "
                  f"evaluations nondecreasing within eps_inner = {monotone}", runtime, 180)


def test_criterion_08_multigrid(capsys, di_mdr, pe_mdr):
    t0 = time.perf_counter()
    lines, ok = [], True
    for label, (p, _, cold) in (("DI 81->161", di_mdr), ("PE 21->41", pe_mdr)):
        _, reps = multigrid_solve([coarsen(p.grid), p.grid], p, SolverConfig(epsilon=EPS))
        fine = reps[-1].iterations
        ok &= fine < cold.iterations
        lines.append(f"{label}: fine {fine} vs cold {cold.iterations} (coarse {reps[0].iterations})")
    runtime = time.perf_counter() - t0 + cost("di_mdr", "pe_mdr")
    assert report(capsys, 8, "multigrid direction", ok, "; ".join(lines), runtime, 600)


def test_criterion_09_warm_start(capsys, di_mdr, pe_mdr):
    t0 = time.perf_counter()
    lines, ok = [], True
    for base, variants in ((di_mdr, ("di-ml", "di-mh")), (pe_mdr, ("pe-me", "pe-mp"))):
        _, U_n, _ = base
        for name in variants:
            prob = load_preset(name).problem()
            op = prob.operator
            choice, _ = select_init([op.default_init(), U_n], op)
            _, cold = value_iteration(op, cfg=SolverConfig(epsilon=EPS))
            _, warm = warm_start_solve(U_n, op, SolverConfig(epsilon=EPS))
            ok &= choice == 1 and warm.iterations <= cold.iterations
            lines.append(f"{name}: warm {warm.iterations} vs cold {cold.iterations}, "
                         f"select_init -> {'warm' if choice == 1 else 'default'}")
    runtime = time.perf_counter() - t0 + cost("di_mdr", "pe_mdr")
    assert report(capsys, 9, "warm-start direction", ok, "; ".join(lines), runtime, 900)


def test_criterion_10_pe_containment(capsys, pe_mdr, pe_mr):
    t0 = time.perf_counter()
    p, U, rep_u = pe_mdr
    _, V, rep_v = pe_mr
    Z = z_from_u(U, p.L)
    bad = int(np.count_nonzero((Z <= 0) & (V > 2 * EPS)))
    runtime = time.perf_counter() - t0 + cost("pe_mdr", "pe_mr")
    assert report(capsys, 10, "PE containment", bad == 0 and rep_u.converged and rep_v.converged,
                  f"{bad} nodes with Z <= 0 but V > 2 eps ({int(np.sum(Z <= 0))} vs {int(np.sum(V <= 0))} "
                  f"sublevel nodes; {rep_u.iterations} MDR / {rep_v.iterations} MR iterations)", runtime, 1200)


def test_criterion_11_td_consistency(capsys):
    t0 = time.perf_counter()
    p = chain_problem()
    policy = np.array([1, 0])
    ref, _ = policy_evaluation(p.table, p.h, policy, 1e-13)
    data = node_samples(p.grid, p.model, p.time_step, policy)
    h = p.h

    def h_fn(x):
        return h[int(round(x[0]))]

    theta, curve = td_train(data, p.grid, h_fn, TDConfig(gamma=p.gamma, alpha="visits", passes=500), theta_ref=ref)
    gap = float(np.max(np.abs(theta - ref)))
    runtime = time.perf_counter() - t0
    assert report(capsys, 11, "TD consistency", gap <= 0.01, f"||theta - U^pi||_inf = {gap:.5f} after 500 epochs",
                  runtime, 5)


def test_criterion_12_init_bound(capsys):
    t0 = time.perf_counter()
    p = di_problem(n=11, lam=0.5)
    op = BackupOperator("mdr", p.table, p.h)
    star, rep = value_iteration(op, cfg=SolverConfig(epsilon=1e-10))
    rng = np.random.default_rng(3)
    worst, ok = 0.0, True
    for _ in range(100):
        A = rng.uniform(-2 * p.L, 0, size=p.grid.n_nodes)
        _, bound = select_init([A], op)
        err = float(np.max(np.abs(star - A)))
        ok &= err <= bound[0]
        worst = max(worst, err / bound[0])
    runtime = time.perf_counter() - t0
    assert report(capsys, 12, "initialization bound", ok and rep.converged,
                  f"max ||A* - A|| / bound = {worst:.4f} over 100 vectors (gamma = {p.gamma:.4f})", runtime, 5)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
