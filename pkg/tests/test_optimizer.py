import numpy as np
import pytest

from affine_fence.services.exceptions import DimensionMismatchError
from affine_fence.services.optimizer import AdamOptimizer


def test_first_step_moves_by_learning_rate():
    param = np.array([1.0, -2.0])
    optimizer = AdamOptimizer([param], lr=0.1)
    optimizer.step([np.array([0.5, -4.0])])
    assert np.allclose(param, [0.9, -1.9], atol=1e-7)
    assert optimizer.t == 1


def test_updates_in_place():
    param = np.zeros(3)
    optimizer = AdamOptimizer([param], lr=0.1)
    optimizer.step([np.ones(3)])
    assert optimizer.params[0] is param
    assert np.all(param < 0.0)


def test_zero_gradient_is_a_no_op():
    param = np.array([[1.0, 2.0]])
    optimizer = AdamOptimizer([param])
    optimizer.step([np.zeros((1, 2))])
    assert np.array_equal(param, [[1.0, 2.0]])


def test_minimizes_quadratic():
    target = np.array([3.0, -1.0, 0.5])
    param = np.zeros(3)
    optimizer = AdamOptimizer([param], lr=0.05)
    for _ in range(3000):
        optimizer.step([2.0 * (param - target)])
    assert np.allclose(param, target, atol=1e-3)


def test_gradient_count_must_match():
    optimizer = AdamOptimizer([np.zeros(2), np.zeros(1)])
    with pytest.raises(DimensionMismatchError):
        optimizer.step([np.zeros(2)])
