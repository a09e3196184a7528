import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from bprlab.errors import ConfigError, NumericsError
from bprlab.optim import MomentumTelemetry, OptimizerConfig, OptimizerState, apply_update, record_momentum


def _reference(kind, grads, lr, beta=0.9, rho=0.9, b1=0.9, b2=0.999, eps=1e-8, theta=0.0):
    """Scalar loop written straight from the textbook update rules."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        if kind == "sgd":
            theta -= lr * g
        elif kind == "momentum_sgd":
            m = beta * m + g
            theta -= lr * m
        elif kind == "rmsprop":
            v = rho * v + (1 - rho) * g * g
            theta -= lr * g / (math.sqrt(v) + eps)
        else:
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
        out.append(theta)
    return out


@pytest.mark.parametrize("kind", ["sgd", "momentum_sgd", "rmsprop", "adam"])
def test_updates_match_scalar_reference(kind):
    grads = np.random.default_rng(0).normal(size=40)
    cfg = OptimizerConfig(kind, learning_rate=0.01, beta=0.8, rho=0.95, beta1=0.7, beta2=0.99, eps=1e-6)
    state = OptimizerState(2, 1, kind)
    row = np.array([0.3])
    got = []
    for g in grads:
        row = apply_update(state, 1, row, [g], cfg)
        got.append(row[0])
    ref = _reference(kind, grads, 0.01, beta=0.8, rho=0.95, b1=0.7, b2=0.99, eps=1e-6, theta=0.3)
    assert_allclose(got, ref, rtol=1e-13, atol=1e-15)
    assert state.t.tolist() == [0, 40]


def test_adam_first_step_oracle():
    cfg = OptimizerConfig("adam", learning_rate=0.001)
    new = apply_update(OptimizerState(1, 1, "adam"), 0, np.zeros(1), [1.0], cfg)
    lr, eps = mpmath.mpf("0.001"), mpmath.mpf("1e-8")
    exact = float(-lr / (1 + eps))
    assert new[0] == pytest.approx(exact, rel=1e-14)
    assert abs(new[0] - -0.000999999995) < 1e-11


def test_adam_timestep_is_per_row():
    cfg = OptimizerConfig("adam", learning_rate=0.1)
    st = OptimizerState(2, 1, "adam")
    r0 = np.zeros(1)
    for _ in range(5):
        r0 = apply_update(st, 0, r0, [1.0], cfg)
    # first touch of row 1 after five updates of row 0 is still a step-1 update
    r1 = apply_update(st, 1, np.zeros(1), [1.0], cfg)
    assert r1[0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-14)
    assert st.t.tolist() == [5, 1]


def test_momentum_with_zero_beta_is_sgd():
    grads = np.random.default_rng(1).normal(size=(30, 3))
    a = b = np.ones(3)
    sm, ss = OptimizerState(1, 3, "momentum_sgd"), OptimizerState(1, 3, "sgd")
    c_m, c_s = OptimizerConfig("momentum_sgd", 0.05, beta=0.0), OptimizerConfig("sgd", 0.05)
    for g in grads:
        a = apply_update(sm, 0, a, g, c_m)
        b = apply_update(ss, 0, b, g, c_s)
        assert_array_equal(a, b)


def test_adam_zero_betas_is_sign_like():
    cfg = OptimizerConfig("adam", learning_rate=0.01, beta1=0.0, beta2=0.0)
    st = OptimizerState(1, 3, "adam")
    g = np.array([2.0, -0.5, 1e-3])
    new = apply_update(st, 0, np.zeros(3), g, cfg)
    assert_allclose(new, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-14)


def test_state_slots_per_kind():
    assert OptimizerState(3, 2, "sgd").m is None
    assert OptimizerState(3, 2, "momentum_sgd").v is None
    assert OptimizerState(3, 2, "rmsprop").m is None
    st = OptimizerState(3, 2, "adam")
    assert st.m.shape == st.v.shape == (3, 2)


@pytest.mark.parametrize(
    "kwargs", [{"kind": "adagrad"}, {"learning_rate": 0.0}, {"beta": 1.0}, {"beta2": -0.1}, {"eps": 0.0}]
)
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        OptimizerConfig(**kwargs)


def test_non_finite_update_raises_with_row():
    cfg = OptimizerConfig("sgd", learning_rate=1e300)
    with pytest.raises(NumericsError) as exc:
        apply_update(OptimizerState(4, 1, "sgd"), 3, np.array([1e10]), [1e300], cfg)
    assert exc.value.row == 3 and exc.value.step == 1


def test_telemetry_window_means():
    st = {"P": OptimizerState(3, 2, "adam"), "Q": OptimizerState(4, 2, "adam")}
    tel = MomentumTelemetry(window=2)
    st["P"].m[0] = [1.0, -1.0]
    st["Q"].m[2] = [0.5, 0.5]
    st["Q"].m[3] = [9.0, 9.0]  # never touched, never counted
    tel.touch("P", 0)
    record_momentum(st, tel, "adam")
    tel.touch("Q", 2)
    tel.touch("P", 0)
    record_momentum(st, tel, "adam")
    assert tel.iterations == [2]
    assert tel.values == [pytest.approx((1 + 1 + 0.5 + 0.5) / 4)]
    # sgd and rmsprop have no first moment
    record_momentum(st, tel, "sgd")
    record_momentum(st, tel, "rmsprop")
    assert tel._step == 2


def test_telemetry_csv_roundtrip(tmp_path):
    tel = MomentumTelemetry(window=10)
    tel.extend([10, 20], [0.25, 1 / 3])
    back = MomentumTelemetry.from_csv(tel.to_csv(tmp_path / "t.csv"))
    assert back.iterations == [10, 20] and back.values == [0.25, 1 / 3]
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "iteration,mean_abs_m"
