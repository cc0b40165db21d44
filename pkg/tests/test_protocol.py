import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onebit_consensus.channel import NoiseModel
from onebit_consensus.errors import DimensionMismatch, MaskMismatch, NonPositiveRadius, ValidationError
from onebit_consensus.linsys import GainPair, LinearSystem
from onebit_consensus.protocol import (
    ControllerConfig,
    EstimatorState,
    agent_step,
    check_t0,
    control_input,
    default_t0,
    estimator_step,
    project,
)


def test_project_examples():
    assert project(3, 2) == 2
    assert project(-5, 2) == -2
    assert project(1.5, 2) == 1.5
    with pytest.raises(NonPositiveRadius):
        project(1.0, 0.0)


@settings(max_examples=500, deadline=None)
@given(
    v1=st.floats(-1e6, 1e6, allow_nan=False),
    v2=st.floats(-1e6, 1e6, allow_nan=False),
    M=st.floats(1e-3, 1e3),
)
def test_projection_nonexpansive(v1, v2, M):
    assert abs(project(v1, M) - project(v2, M)) <= abs(v1 - v2)
    assert abs(project(v1, M)) <= M


def test_t0_rules():
    assert default_t0(1.0, 3) == 3
    assert default_t0(2.4, 3) == 8
    assert default_t0(0.0, 3) == 1
    check_t0(3, 1.0, 3)
    with pytest.raises(ValidationError):
        check_t0(2, 1.0, 3)
    with pytest.raises(ValidationError):
        check_t0(0, 0.0, 3)


def test_estimator_zero_innovation():
    cdf = NoiseModel(1.0).cdf
    est = EstimatorState(np.array([0.3, -0.4]), M=2.0, beta=5.0, t=1)
    c = np.array([-1.0, 0.5])
    bits = cdf(c - est.z_hat)
    out = estimator_step(est, bits, c, cdf, t=2)
    np.testing.assert_allclose(out.z_hat, est.z_hat, atol=1e-15)


def test_estimator_substitution_and_clamp():
    cdf = NoiseModel(1.0).cdf
    est = EstimatorState(np.zeros(1), M=10.0, beta=1.0, t=0)
    assert estimator_step(est, [1.0], [0.0], cdf, t=1).z_hat[0] == pytest.approx(-0.5)
    # beta/t (F - s) = 30 * 0.5 = 15, clipped to M = 2
    est = EstimatorState(np.zeros(1), M=2.0, beta=30.0, t=0)
    assert estimator_step(est, [0.0], [0.0], cdf, t=1).z_hat[0] == 2.0


def test_estimator_mask():
    cdf = NoiseModel(1.0).cdf
    est = EstimatorState(np.array([0.1, 0.2, 0.3]), M=1.0, beta=1.0, t=0)
    out = estimator_step(est, [1.0], [0.0, 0.0, 0.0], cdf, t=1, active=[False, True, False])
    assert out.z_hat[0] == 0.1 and out.z_hat[2] == 0.3 and out.z_hat[1] != 0.2
    with pytest.raises(MaskMismatch):
        estimator_step(est, [1.0, 0.0], [0.0] * 3, cdf, t=1, active=[False, True, False])


def test_estimator_initial_bound():
    with pytest.raises(ValidationError):
        EstimatorState(np.array([3.0]), M=2.0, beta=1.0, t=0)


def test_control_input_examples():
    g = GainPair([0.5, -0.2], [0.3, 1.0], [0.3])
    x = np.array([1.0, 2.0])
    z = g.K2 @ x
    cfg = ControllerConfig(g, gamma=1.5, t0=1)
    assert control_input(x, [z, z, z], cfg, 4) == pytest.approx(g.K1 @ x)
    assert control_input(x, [9.0], ControllerConfig(g, 0.0, 1), 4) == pytest.approx(g.K1 @ x)
    assert control_input(x, [], cfg, 4) == pytest.approx(g.K1 @ x)
    scalar = ControllerConfig(GainPair([0.0], [1.0], []), gamma=1.0, t0=1)
    assert control_input([1.0], [3.0], scalar, 1) == pytest.approx(1.0)
    with pytest.raises(DimensionMismatch):
        control_input([1.0], [3.0], cfg, 1)


def test_agent_step():
    sys_ = LinearSystem(np.eye(2), [0.5, -1.0])
    np.testing.assert_array_equal(agent_step([1.0, 2.0], 0.0, sys_), [1.0, 2.0])
    np.testing.assert_array_equal(agent_step([0.0, 0.0], 1.0, sys_), [0.5, -1.0])
    with pytest.raises(DimensionMismatch):
        agent_step([1.0], 0.0, sys_)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.integers(1, 10_000), deg=st.integers(0, 5))
def test_compressed_state_recursion(seed, t, deg, aircraft, aircraft_gains):
    g = aircraft_gains.original
    rng = np.random.default_rng(seed)
    x = rng.normal(size=4)
    zh = rng.uniform(-2, 2, deg)
    gamma = rng.uniform(0, 3)
    u = control_input(x, zh, ControllerConfig(g, gamma, 1), t)
    z_next = g.K2 @ agent_step(x, u, aircraft)
    z = g.K2 @ x
    predicted = (1 - gamma * deg / (t + 1)) * z + gamma / (t + 1) * zh.sum()
    assert abs(z_next - predicted) <= 1e-10 * max(1.0, abs(z), np.abs(zh).sum())
