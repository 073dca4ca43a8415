import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperctl import (GeneralSystem, KernelField, SystemSpec, assemble_S, counterexample_build, forward,
                      inverse, simulate, solve_kernel, target_residual)
from hyperctl.errors import InvalidSpecError

from conftest import smooth_data, spec_k1m2


def test_zero_kernel_is_identity():
    w = np.random.default_rng(0).normal(size=(3, 17))
    Kf = KernelField.zero(3, 16)
    assert np.array_equal(forward(Kf, w), w)
    assert np.array_equal(inverse(Kf, w), w)
    assert not forward(KernelField.constant(np.ones((3, 3)), 16), np.zeros((3, 17))).any()


def test_constant_kernel_on_unit_fields():
    ce = counterexample_build(1.0, 1.0)
    N = 32
    x = np.linspace(0, 1, N + 1)
    Kf = ce.kernel(N)
    e3 = np.zeros((4, N + 1))
    e3[2] = 1.0
    assert np.allclose(forward(Kf, e3), e3, atol=1e-15)
    e4 = np.zeros((4, N + 1))
    e4[3] = 1.0
    want = e4.copy()
    want[1] -= ce.alpha * x
    want[2] -= ce.beta * x
    assert np.allclose(forward(Kf, e4), want, atol=1e-14)


def test_scalar_resolvent():
    err = []
    for N in (32, 64):
        x = np.linspace(0, 1, N + 1)
        w = inverse(KernelField.constant([[1.0]], N), np.ones((1, N + 1)))[0]
        err.append(np.max(np.abs(w - np.exp(x))))
    assert err[1] < 1e-3
    assert err[0] / err[1] > 3.5


def test_shape_mismatch():
    with pytest.raises(InvalidSpecError):
        forward(KernelField.zero(2, 16), np.zeros((2, 16)))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(4, 40), st.integers(0, 2**31))
def test_round_trip(n, N, seed):
    rng = np.random.default_rng(seed)
    K = rng.normal(size=(n, n, N + 1, N + 1)) * np.tril(np.ones((N + 1, N + 1)))
    Kf = KernelField(np.linspace(0, 1, N + 1), K)
    w = rng.normal(size=(n, N + 1))
    u = forward(Kf, w)
    assert np.max(np.abs(inverse(Kf, u) - w)) <= 1e-10 * max(1.0, np.max(np.abs(w)))
    assert np.array_equal(u[:, 0], w[:, 0])


def test_target_residual_zero_and_transport():
    spec = SystemSpec(1, 1, (1.0, 1.0), np.zeros((2, 2)), [[0.5]])
    N = 64
    t = np.linspace(0, 0.5, 33)
    S = np.zeros((N + 1, 2, 2))
    assert target_residual(t, np.zeros((33, 2, N + 1)), S, spec) == 0.0
    tr = simulate(GeneralSystem.plant(spec), smooth_data(2, 4), 0.5, N)
    assert target_residual(tr.t, tr.values, S, spec) <= 5.0 / N


def test_transformed_trajectory_solves_target_system():
    spec = spec_k1m2(0.1)
    w0 = smooth_data(3, 2)
    res, wrong = [], []
    for N in (32, 64):
        Kf = solve_kernel(spec, N)
        S = assemble_S(Kf, spec)
        tr = simulate(GeneralSystem.plant(spec), w0, 1.0, N)
        u = forward(Kf, tr.values)
        res.append(target_residual(tr.t, u, S, spec))
        wrong.append(target_residual(tr.t, u, np.zeros_like(S), spec))
        assert res[-1] <= 10.0 / N
    assert res[0] / res[1] >= 1.8
    assert min(wrong) > 0.1
