import numpy as np
import pytest

from hyperctl import (KernelField, SystemSpec, assemble_S, counterexample_build, kernel_residual,
                      solve_kernel)
from hyperctl.config import bump_coupling
from hyperctl.errors import InvalidSpecError
from hyperctl.kernel import _PairPlan, pair_case, right_edge_pairs
from hyperctl.characteristics import travel_times

from conftest import spec_k1m2


def test_zero_coupling_gives_zero_kernel():
    spec = SystemSpec(2, 2, (2.0, 1.0, 1.0, 2.0), np.zeros((4, 4)), [[1.0, 3.0], [2.0, 1.0]])
    Kf = solve_kernel(spec, 32)
    assert not Kf.K.any()
    assert not assemble_S(Kf, spec).any()
    assert all(v == 0 for v in kernel_residual(Kf, spec).values())
    assert not assemble_S(KernelField.zero(4, 16), spec).any()


def test_counterexample_kernel_reproduced():
    ce = counterexample_build(1.0, -1.0)          # alpha = beta = 1
    assert (ce.alpha, ce.beta) == (1.0, 1.0)
    assert not (ce.K @ ce.spec.coupling(0.3)).any()
    Kf = solve_kernel(ce.spec, 64, ce.gamma3())
    assert np.max(np.abs(Kf.K - KernelField.constant(ce.K, 64).K)) < 1e-8
    S = assemble_S(Kf, ce.spec)
    want = np.zeros((4, 4))
    want[1, 3] = want[2, 3] = 2.0                 # lambda_4 * alpha, lambda_4 * beta
    assert np.max(np.abs(S - want)) < 1e-8
    assert kernel_residual(Kf, ce.spec)["pde_residual"] < 1e-10


def test_S_stencil_two_by_three():
    rng = np.random.default_rng(3)
    C0 = rng.normal(size=(5, 5)) * (1 - np.eye(5))
    spec = SystemSpec(2, 3, (2.0, 1.0, 1.0, 1.5, 3.0), bump_coupling(C0), [[1.0, 2.0, 0.5], [0.3, 1.0, 1.0]],
                      gamma=0.3)
    S = assemble_S(solve_kernel(spec, 48), spec)
    stencil = np.zeros((5, 5), bool)
    stencil[:2, 2:] = True
    stencil[2:, 2:] = np.triu(np.ones((3, 3), bool), 1)
    peak = np.max(np.abs(S), axis=0)
    assert not peak[~stencil].any()
    assert np.all(peak[stencil] > 1e-3)


def test_residual_small_and_first_order():
    spec = spec_k1m2(0.1)
    r = {N: kernel_residual(solve_kernel(spec, N), spec) for N in (32, 64, 128)}
    for N, res in r.items():
        assert res["pde_residual"] < 5.0 / N
        assert res["bc1_residual"] < 1e-12 and res["bc2_residual"] < 1e-12 and res["bc3_residual"] == 0
    assert r[32]["pde_residual"] / r[64]["pde_residual"] >= 1.8
    assert r[64]["pde_residual"] / r[128]["pde_residual"] >= 1.8


def test_direct_and_sweep_routes_agree():
    spec = spec_k1m2(0.5)
    a = solve_kernel(spec, 32)
    b = solve_kernel(spec, 32, method="direct")
    assert np.max(np.abs(a.K - b.K)) < 1e-10


def test_first_order_in_gamma():
    spec = spec_k1m2(1.0)
    K3 = solve_kernel(spec.with_gamma(1e-3), 32).K / 1e-3
    K4 = solve_kernel(spec.with_gamma(1e-4), 32).K / 1e-4
    assert np.max(np.abs(K3 - K4)) <= 1e-2


def test_diagonal_entries_fed_by_bottom_edge_only():
    spec = SystemSpec(2, 2, (2.0, 1.0, 1.0, 2.0), np.ones((4, 4)) - np.eye(4), [[1.0, 3.0], [2.0, 1.0]])
    travel = travel_times(spec)
    for i in range(4):
        assert pair_case(i, i, 2) == "d"
        plan = _PairPlan(spec, i, i, 16, travel, {})
        exits = np.flatnonzero(~plan.interior)
        assert np.array_equal(exits, plan.bot_idx)
        assert not plan.data.any()


def test_right_edge_data_validated():
    assert right_edge_pairs(2, 2) == [(1, 0), (2, 3)]
    spec = SystemSpec(2, 2, (2.0, 1.0, 1.0, 2.0), np.zeros((4, 4)), [[1.0, 3.0], [2.0, 1.0]])
    with pytest.raises(InvalidSpecError):
        solve_kernel(spec, 16, {(0, 1): 1.0})
