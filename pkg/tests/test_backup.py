from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

from mdreach.backup import (
    BackupOperator,
    TransitionTable,
    build_transition_table,
    estimate_table_bytes,
    greedy_policy,
    maxmin,
    mdr_backup,
    mr_backup,
    policy_backup,
    sdr_backup,
)
from mdreach.grid import GridSpec
from mdreach.models import double_integrator, pursuit_evasion, velocity_chain

from conftest import CHAIN_LAM, chain_table, di_problem

H = np.array([-1.0, -3.0])


def test_single_node_self_row():
    g = GridSpec((0.0,), (1.0,), (1,))
    t = TransitionTable(g, velocity_chain((0.0,)), 1.0, 0.1)
    assert t.row(0, 0).as_dict() == {0: 1.0}


def test_chain_row_lands_on_next_node():
    t = chain_table()
    assert t.row(0, 0).as_dict() == {1: 1.0}
    assert t.row(1, 0).as_dict() == {1: 1.0}
    assert t.gamma == pytest.approx(0.9)


def test_rows_stochastic(rng):
    p = di_problem(n=15, dt=0.07)
    t = p.table
    for i in rng.integers(0, t.grid.n_nodes, size=40):
        for a in range(t.n_a):
            row = t.row(int(i), a)
            assert np.all(row.weights >= 0)
            assert abs(row.weights.sum() - 1) <= 1e-12
            assert len(set(row.indices.tolist())) == row.indices.size
    M = t.matrix(np.zeros(t.grid.n_nodes, dtype=int))
    np.testing.assert_allclose(np.asarray(M.sum(axis=1)).ravel(), 1.0, atol=1e-12)


def test_gamma_one_iff_lambda_zero():
    assert chain_table(lam=0.0).gamma == 1.0
    assert chain_table(lam=1e-9).gamma < 1.0


def test_lambda_zero_warns():
    g = GridSpec((0.0,), (1.0,), (2,))
    with pytest.warns(UserWarning):
        build_transition_table(g, velocity_chain(), 1.0, 0.0)


def test_mdr_constant_fixed_point(rng):
    p = di_problem(n=11, dt=0.1)
    c = -1.3
    h = np.full(p.grid.n_nodes, c)
    np.testing.assert_array_equal(mdr_backup(p.table, h, h), h)


def test_mdr_chain_hand_recursion():
    t = chain_table()
    out = mdr_backup(t, H, H)
    np.testing.assert_allclose(out, [-2.7, -3.0], rtol=0, atol=1e-15)
    np.testing.assert_allclose(mdr_backup(t, H, out), [-2.7, -3.0], rtol=0, atol=1e-15)


def test_mr_chain_and_spurious_fixed_point():
    t = chain_table()
    np.testing.assert_array_equal(mr_backup(t, H, H), [-3.0, -3.0])
    alpha = np.full(2, -7.5)
    assert np.array_equal(mr_backup(t, H, alpha), alpha)
    z = np.zeros(2)
    np.testing.assert_array_equal(mr_backup(t, z, z), z)


def test_mdr_with_gamma_one_equals_mr(rng):
    p = di_problem(n=21, dt=0.05)
    t1 = TransitionTable(p.grid, p.model, p.time_step, 0.0)
    for _ in range(5):
        V = rng.uniform(-3, 0, size=p.grid.n_nodes)
        assert np.array_equal(mdr_backup(t1, p.l, V), mr_backup(t1, p.l, V))


def test_sdr_examples():
    g = GridSpec((0.0,), (1.0,), (1,))
    t = TransitionTable(g, velocity_chain((0.0,)), 1.0, CHAIN_LAM)
    np.testing.assert_array_equal(sdr_backup(t, [0.0], [0.0]), [0.0])
    np.testing.assert_allclose(sdr_backup(t, [1.0], [10.0]), [10.0], rtol=1e-14)
    np.testing.assert_array_equal(sdr_backup(t, [1.0], [0.0]), [1.0])


def test_sdr_rejects_two_player():
    g = GridSpec((-1.0, -1.0, 0.0), (1.0, 1.0, 2 * math.pi), (3, 3, 4), (False, False, True))
    t = TransitionTable(g, pursuit_evasion(n_controls=2, n_disturbances=2), 0.1, 0.1)
    z = np.zeros(g.n_nodes)
    with pytest.raises(ValueError):
        sdr_backup(t, z, z)
    with pytest.raises(ValueError):
        policy_backup(t, z, np.zeros(g.n_nodes, dtype=int), z)
    with pytest.raises(ValueError):
        greedy_policy(t, z, z)


def test_policy_backup_chain():
    t = chain_table((0.0, 1.0))
    right = np.array([1, 0])
    np.testing.assert_allclose(policy_backup(t, H, right, H), [-2.7, -3.0], atol=1e-15)
    c = np.full(2, -2.0)
    np.testing.assert_array_equal(policy_backup(t, c, right, c), c)
    with pytest.raises(IndexError):
        policy_backup(t, H, np.array([2, 0]), H)


def test_greedy_policy_tie_break_lowest_index():
    # both controls equal: flow independent of u
    t = chain_table((0.5, 0.5, 0.5))
    assert greedy_policy(t, H, H).control.tolist() == [0, 0]
    single = chain_table((1.0,))
    assert greedy_policy(single, H, H).control.tolist() == [0, 0]


def test_greedy_policy_brakes_near_right_wall():
    # the top face binds here, so slowing down strictly helps
    p = di_problem(n=41)
    nodes = p.grid.nodes()
    i = int(np.argmin(np.linalg.norm(nodes - [3.65, 2.75], axis=1)))
    pol = greedy_policy(p.table, p.h, p.h).control
    assert p.model.controls[pol[i], 0] == -2.0
    # oracle: enumerate both actions by hand
    vals = [p.table.row(i, a).dot(p.h) for a in range(2)]
    assert vals[0] > vals[1]


def test_policy_backup_of_greedy_equals_mdr(rng):
    p = di_problem(n=31, dt=0.05)
    for _ in range(5):
        U = rng.uniform(-2 * p.L, 0, size=p.grid.n_nodes)
        pol = greedy_policy(p.table, p.h, U)
        np.testing.assert_array_equal(policy_backup(p.table, p.h, pol, U), mdr_backup(p.table, p.h, U))


def test_mdr_matches_dense_oracle(rng):
    # independent oracle: explicit sparse matrices per input pair
    g = GridSpec((-1.0, -1.0, 0.0), (1.0, 1.0, 2 * math.pi), (5, 5, 6), (False, False, True))
    m = pursuit_evasion(n_controls=3, n_disturbances=3)
    t = TransitionTable(g, m, 0.07, 0.2)
    h = -rng.uniform(0, 2, size=g.n_nodes)
    U = -rng.uniform(0, 2, size=g.n_nodes)
    G = g.n_nodes
    best = np.full(G, -np.inf)
    for a in range(3):
        worst = np.full(G, np.inf)
        for b in range(3):
            M = t.matrix(np.full(G, a), np.full(G, b))
            worst = np.minimum(worst, t.gamma * (M @ U))
        best = np.maximum(best, worst)
    np.testing.assert_allclose(mdr_backup(t, h, U), np.minimum(h, best), rtol=0, atol=1e-13)


@pytest.mark.parametrize("two_player", [False, True])
def test_table_and_on_the_fly_bit_identical(rng, two_player):
    if two_player:
        g = GridSpec((-6.0, -10.0, 0.0), (20.0, 10.0, 2 * math.pi), (9, 9, 8), (False, False, True))
        model = pursuit_evasion(n_controls=5, n_disturbances=5)
        dt = 0.2
    else:
        g = GridSpec((-1.0, -5.0), (5.0, 5.0), (25, 25))
        model = double_integrator(n_controls=5)
        dt = 0.05
    fast = TransitionTable(g, model, dt, 0.1, precompute=True)
    lean = TransitionTable(g, model, dt, 0.1, precompute=False)
    h = -rng.uniform(0, 3, size=g.n_nodes)
    for _ in range(3):
        U = -rng.uniform(0, 3, size=g.n_nodes)
        assert np.array_equal(mdr_backup(fast, h, U), mdr_backup(lean, h, U))
        assert np.array_equal(mr_backup(fast, h, U), mr_backup(lean, h, U))
        if not two_player:
            assert np.array_equal(sdr_backup(fast, h, U), sdr_backup(lean, h, U))
            pol = rng.integers(0, model.n_controls, size=g.n_nodes)
            assert np.array_equal(policy_backup(fast, h, pol, U), policy_backup(lean, h, pol, U))
            assert np.array_equal(greedy_policy(fast, h, U).control, greedy_policy(lean, h, U).control)


def test_auto_mode_falls_back_over_budget():
    p = di_problem(n=11)
    t = build_transition_table(p.grid, p.model, 0.1, 0.1, memory_budget=10)
    assert not t.precomputed
    assert estimate_table_bytes(p.grid, p.model) == 121 * 2 * (4 * 4 + 8 * 2)


def test_maxmin_matrix():
    assert maxmin([[1.0, 3.0], [2.0, 0.5]]) == 1.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        mdr_backup(chain_table(), H, np.zeros(3))


def test_operator_rejects_positive_mdr_reward():
    with pytest.raises(ValueError):
        BackupOperator("mdr", chain_table(), [0.5, -1.0])
