import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hyperctl import GeneralSystem, SystemSpec, feedback_zero_C, simulate, trace_at_boundary
from hyperctl.broad_solver import choose_time_step, grid_aligned
from hyperctl.errors import InvalidSpecError, NonConvergenceError

from conftest import smooth_data, spec_feedback_1, spec_k1m2

TRANSPORT = SystemSpec(1, 1, (1.0, 1.0), np.zeros((2, 2)), [[0.0]])


def sines(x):
    return np.stack([np.sin(np.pi * x)] * 2)


def test_pure_transport():
    N = 64
    tr = simulate(GeneralSystem.plant(TRANSPORT), sines, 0.25, N)
    x = tr.x
    right = np.where(x >= 0.25, np.sin(np.pi * (x - 0.25)), 0.0)
    left = np.where(x <= 0.75, np.sin(np.pi * (x + 0.25)), 0.0)
    assert np.max(np.abs(tr.final[0] - right)) < 1e-12
    assert np.max(np.abs(tr.final[1] - left)) < 1e-12


def test_transport_trace():
    tr = simulate(GeneralSystem.plant(TRANSPORT), sines, 1.0, 64)
    tr0 = trace_at_boundary(tr, 0)
    assert np.max(np.abs(tr0[:, 1] - np.sin(np.pi * tr.t))) < 1e-12
    assert np.max(np.abs(tr0[:, 0])) == 0.0
    z = simulate(GeneralSystem.plant(TRANSPORT), np.zeros((2, 65)), 1.0, 64)
    assert not trace_at_boundary(z, 0).any() and not trace_at_boundary(z, 1).any()
    with pytest.raises(InvalidSpecError):
        trace_at_boundary(tr, 2)


def test_trace_coupling_self_convergence():
    system = GeneralSystem(1, 1, (1.0, 1.0), [[0.0]], D=np.array([[0.0, 1.0], [0.0, 0.0]]))
    w0 = smooth_data(2, 7)
    sol = {N: simulate(system, w0, 1.0, N, keep="final").final for N in (32, 64, 128)}
    ref = sol[128]
    for N in (32, 64):
        assert np.max(np.abs(sol[N] - ref[:, :: 128 // N])) <= 3.0 / N


def test_feedback_closed_loop_nulls_and_traces():
    spec = spec_feedback_1()
    law = feedback_zero_C(spec)
    N = 64

    def w0(x):
        return np.stack([np.zeros_like(x), np.ones_like(x), np.ones_like(x)])

    tr = simulate(GeneralSystem.plant(spec, boundary_terms=law.boundary_terms()), w0, 1.5, N)
    assert np.max(np.abs(tr.final)) < 1e-10
    tr0 = trace_at_boundary(tr, 0)
    assert np.max(np.abs(tr0[1:, 0] - tr0[1:, 1:] @ spec.B[0])) <= 1.0 / N


def test_finite_propagation():
    spec = SystemSpec(1, 2, (1.0, 0.5, 2.0), np.zeros((3, 3)), [[1.0, 1.0]])
    N, T = 100, 0.1

    def w0(x):
        bump = np.where((x > 0.4) & (x < 0.6), np.sin(np.pi * (x - 0.4) / 0.2) ** 2, 0.0)
        return np.stack([bump] * 3)

    tr = simulate(GeneralSystem.plant(spec), w0, T, N)
    outside = (tr.x < 0.4 - 2.0 * T - 1.0 / N) | (tr.x > 0.6 + 2.0 * T + 1.0 / N)
    assert not tr.final[:, outside].any()


def test_nonconvergence_reported():
    with pytest.raises(NonConvergenceError):
        simulate(GeneralSystem.plant(spec_k1m2(0.5)), smooth_data(3), 0.1, 16, max_iter=1)


def test_alignment():
    lam = GeneralSystem.plant(spec_feedback_1()).speeds
    assert choose_time_step(lam, 64) == pytest.approx(1 / 64)
    assert grid_aligned(lam, 64, 1.5)
    assert not grid_aligned(lam, 64, 1.5 + 1 / 300)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_linearity(a, b, seed):
    system = GeneralSystem.plant(spec_k1m2(0.4))
    N = 32
    x = np.linspace(0, 1, N + 1)
    rng = np.random.default_rng(seed)
    v, w = rng.normal(size=(3, N + 1)), rng.normal(size=(3, N + 1))
    lhs = simulate(system, a * v + b * w, 0.6, N).values
    rhs = a * simulate(system, v, 0.6, N).values + b * simulate(system, w, 0.6, N).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))
