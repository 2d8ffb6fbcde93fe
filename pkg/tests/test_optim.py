"""Adam optimizer tests: fixed points, bias-corrected first step, a scalar
optimization oracle run, and determinism."""

import numpy as np
import pytest

from paircl.errors import ParameterError
from paircl.optim import Adam
from paircl.tensor import Param


def test_zero_gradient_is_fixed_point():
    p = Param("w", np.array([1.0, -2.0, 3.0]))
    opt = Adam([p], lr=0.1)
    before = p.value.copy()
    for _ in range(5):
        opt.zero_grads()
        opt.step()
    np.testing.assert_array_equal(p.value, before)
    assert opt.t == 5


@pytest.mark.parametrize("g", [1e-6, 1e-3, 1.0, 1e4])
def test_first_step_magnitude_is_lr(g):
    """After bias correction, step 1 moves by lr * sign(g) up to eps/|g|."""
    lr = 0.01
    p = Param("w", np.array([0.5]))
    opt = Adam([p], lr=lr)
    p.grad += g
    opt.step()
    delta = 0.5 - p.value[0]
    assert abs(delta - lr) <= lr * (opt.eps / g) + 1e-15
    assert np.sign(delta) == np.sign(g)


def test_quadratic_descent_oracle():
    """100 steps on f(x) = x^2 from x = 1 with lr 0.1 reach |x| < 0.05.
    (Oracle run observed |x| ~ 2.9e-3.)"""
    p = Param("x", np.array([1.0]))
    opt = Adam([p], lr=0.1)
    for _ in range(100):
        opt.zero_grads()
        p.grad += 2.0 * p.value
        opt.step()
    assert abs(p.value[0]) < 0.05


def test_second_moment_nonnegative_and_finite():
    rng = np.random.default_rng(0)
    p = Param("w", rng.normal(size=(4, 3)))
    opt = Adam([p], lr=1e-3)
    for _ in range(50):
        opt.zero_grads()
        p.grad += rng.normal(size=(4, 3)) * 100
        opt.step()
        assert (opt.v[p.name] >= 0).all()
        assert np.isfinite(p.value).all()


def test_deterministic_trajectories():
    def run():
        rng = np.random.default_rng(42)
        p = Param("w", np.ones(5))
        opt = Adam([p], lr=0.05)
        for _ in range(20):
            opt.zero_grads()
            p.grad += rng.normal(size=5)
            opt.step()
        return p.value

    np.testing.assert_array_equal(run(), run())


def test_state_round_trip():
    rng = np.random.default_rng(1)
    p = Param("w", np.ones(3))
    opt = Adam([p], lr=0.01)
    for _ in range(7):
        opt.zero_grads()
        p.grad += rng.normal(size=3)
        opt.step()
    arrays = {k: v.copy() for k, v in opt.state_arrays().items()}

    fresh = Adam([p], lr=0.01)
    fresh.load_state_arrays(arrays, t=opt.t)
    assert fresh.t == 7
    np.testing.assert_array_equal(fresh.m[p.name], opt.m[p.name])
    np.testing.assert_array_equal(fresh.v[p.name], opt.v[p.name])


def test_bad_hyperparameters_raise():
    p = Param("w", np.ones(2))
    with pytest.raises(ParameterError):
        Adam([p], lr=0.0)
    with pytest.raises(ParameterError):
        Adam([p], beta1=1.0)
    with pytest.raises(ParameterError):
        Adam([p, Param("w", np.ones(2))])
