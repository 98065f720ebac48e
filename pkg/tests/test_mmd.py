"""MMD tests: closed forms, brute-force oracle agreement, exact symmetry,
and gradient checks."""

import numpy as np
import pytest

from robustq import engine, mmd
from robustq.engine import Tape, Tensor, backward, grad_for
from robustq.mmd import (MMDError, gaussian_kernel_matrix, median_bandwidth,
                         mmd_distance, mmd_squared)


def brute_force_mmd2(s, t, sigma):
    """Independent double-loop biased V-statistic."""
    m, n = len(s), len(t)

    def k(a, b):
        return np.exp(-np.sum((a - b) ** 2) / (2.0 * sigma))

    ss = sum(k(s[i], s[j]) for i in range(m) for j in range(m)) / (m * m)
    tt = sum(k(t[i], t[j]) for i in range(n) for j in range(n)) / (n * n)
    st = sum(k(s[i], t[j]) for i in range(m) for j in range(n)) / (m * n)
    return ss + tt - 2.0 * st


def test_singleton_closed_form():
    # one point each, squared distance 2*sigma: mmd^2 = 2 - 2/e
    sigma = 1.7
    s = np.zeros((1, 1))
    t = np.full((1, 1), np.sqrt(2 * sigma))
    got = float(mmd_squared(None, Tensor(s), Tensor(t), sigma=sigma).data)
    assert abs(got - (2.0 - 2.0 * np.exp(-1.0))) < 1e-12


def test_kernel_matrix_frozen_value():
    a = np.zeros((1, 2))
    b = np.array([[1.0, 1.0]])
    k = gaussian_kernel_matrix(None, Tensor(a), Tensor(b), sigma=1.0).data
    assert abs(float(k[0, 0]) - np.exp(-1.0)) < 1e-15


def test_brute_force_agreement_float64():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(40):
        m, n = rng.integers(1, 9, 2)
        d = int(rng.integers(1, 6))
        s = rng.standard_normal((m, d))
        t = rng.standard_normal((n, d))
        sigma = float(rng.uniform(0.3, 4.0))
        got = float(mmd_squared(None, Tensor(s), Tensor(t), sigma=sigma).data)
        want = brute_force_mmd2(s, t, sigma)
        worst = max(worst, abs(got - want))
    assert worst < 1e-10


def test_symmetry_is_bitwise():
    rng = np.random.default_rng(1)
    s = rng.standard_normal((9, 5)).astype(np.float32)
    t = rng.standard_normal((6, 5)).astype(np.float32)
    ab = float(mmd_squared(None, Tensor(s), Tensor(t), sigma=2.0).data)
    ba = float(mmd_squared(None, Tensor(t), Tensor(s), sigma=2.0).data)
    assert ab == ba


def test_zero_on_identical_sets():
    rng = np.random.default_rng(2)
    s = rng.standard_normal((8, 4)).astype(np.float32)
    val = float(mmd_squared(None, Tensor(s), Tensor(s.copy()), sigma=1.0).data)
    assert val == 0.0


def test_median_bandwidth_oracle():
    f = np.array([[0.0], [2.0]])
    assert median_bandwidth(f) == 2.0  # median squared distance 4, halved
    g = np.array([[0.0], [0.0], [0.0]])
    assert median_bandwidth(g) == mmd.BANDWIDTH_FLOOR
    with pytest.raises(MMDError):
        median_bandwidth(np.array([[1.0]]))  # no pairs, no median


def test_median_bandwidth_used_when_sigma_none():
    rng = np.random.default_rng(3)
    s = rng.standard_normal((7, 3))
    t = rng.standard_normal((5, 3))
    auto = float(mmd_squared(None, Tensor(s), Tensor(t)).data)
    sigma = median_bandwidth(np.concatenate([s, t]))
    fixed = float(mmd_squared(None, Tensor(s), Tensor(t), sigma=sigma).data)
    assert auto == fixed


def test_gradient_against_finite_differences():
    rng = np.random.default_rng(4)
    t_feat = rng.standard_normal((5, 3))

    def build(tape, x):
        return mmd_squared(tape, x, Tensor(t_feat, requires_grad=False), sigma=1.3)

    err = engine.finite_diff_check(build, rng.standard_normal((4, 3)), step=1e-6)
    assert err < 1e-7


def test_gradient_flows_to_both_sides():
    rng = np.random.default_rng(5)
    s = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    t = Tensor(rng.standard_normal((5, 3)), requires_grad=True)
    tape = Tape()
    loss = mmd_squared(tape, s, t, sigma=1.0)
    grads = backward(tape, loss)
    assert grad_for(grads, s).shape == (4, 3)
    assert grad_for(grads, t).shape == (5, 3)


def test_mmd_distance_is_sqrt_and_nonnegative():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((6, 4)).astype(np.float32)
    b = rng.standard_normal((6, 4)).astype(np.float32)
    d = mmd_distance(a, b, sigma=1.0)
    m2 = float(mmd_squared(None, Tensor(a), Tensor(b), sigma=1.0).data)
    assert d >= 0.0
    assert abs(d * d - m2) < 1e-9
    assert mmd_distance(a, a.copy(), sigma=1.0) == 0.0


def test_errors():
    good = Tensor(np.zeros((3, 2)))
    with pytest.raises(MMDError):
        mmd_squared(None, Tensor(np.zeros((0, 2))), good)
    with pytest.raises(MMDError):
        mmd_squared(None, good, Tensor(np.zeros((3, 4))))
    with pytest.raises(MMDError):
        mmd_squared(None, good, good, sigma=0.0)
    with pytest.raises(MMDError):
        mmd_squared(None, Tensor(np.zeros(3)), good)
