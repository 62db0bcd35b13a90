import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from caada.autodiff import numeric_grad, relative_error
from caada.errors import ConfigError, DegenerateBatchError, DimensionError, LabelError
from caada.losses import combine, coral_loss, cross_entropy, domain_bce

from conftest import brute_coral


def test_cross_entropy_uniform():
    loss, grad = cross_entropy([[0.0, 0.0]], [0])
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(grad, [[-0.5, 0.5]], atol=1e-15)


def test_cross_entropy_stable_for_huge_logits():
    loss, grad = cross_entropy([[1000.0, 0.0]], [0])
    assert loss == pytest.approx(0.0, abs=1e-300)
    assert np.all(np.isfinite(grad))


def test_cross_entropy_finite_differences(rng):
    z = rng.normal(size=(4, 3))
    y = np.array([2, 0, 1, 1])
    _, g = cross_entropy(z, y)
    assert relative_error(g, numeric_grad(lambda v: cross_entropy(v, y)[0], z)) < 1e-6


def test_cross_entropy_errors():
    with pytest.raises(LabelError):
        cross_entropy([[0.0, 1.0]], [2])
    with pytest.raises(LabelError):
        cross_entropy([[0.0, 1.0]], [-1])
    with pytest.raises(DimensionError):
        cross_entropy(np.zeros((0, 2)), [])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (5, 3), elements=st.floats(-20, 20)),
       arrays(np.float64, (5, 1), elements=st.floats(-50, 50)))
def test_cross_entropy_shift_invariant(z, shift):
    y = np.array([0, 1, 2, 1, 0])
    assert abs(cross_entropy(z + shift, y)[0] - cross_entropy(z, y)[0]) <= 1e-10


def test_coral_identical_inputs(rng):
    f = rng.normal(size=(6, 3))
    loss, gs, gt = coral_loss(f, f.copy())
    assert loss == 0.0
    assert not gs.any() and not gt.any()


def test_coral_worked_example():
    # C_s = [[2,2],[2,2]], C_t = 0, ||C_s||^2 = 16, d = 2
    f_s, f_t = [[1, 2], [3, 4]], [[5, 5], [5, 5]]
    assert brute_coral(f_s, f_t) == 1.0
    assert coral_loss(f_s, f_t)[0] == pytest.approx(1.0, abs=1e-12)


def test_coral_finite_differences(rng):
    f_s, f_t = rng.normal(size=(8, 3)), 2.0 * rng.normal(size=(6, 3))
    _, gs, gt = coral_loss(f_s, f_t)
    assert relative_error(gs, numeric_grad(lambda v: coral_loss(v, f_t)[0], f_s)) < 1e-5
    assert relative_error(gt, numeric_grad(lambda v: coral_loss(f_s, v)[0], f_t)) < 1e-5


def test_coral_errors():
    with pytest.raises(DimensionError):
        coral_loss(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(DegenerateBatchError):
        coral_loss(np.ones((1, 2)), np.ones((3, 2)))


pairs = st.integers(1, 5).flatmap(lambda d: st.tuples(
    arrays(np.float64, st.tuples(st.integers(2, 9), st.just(d)), elements=st.floats(-5, 5)),
    arrays(np.float64, st.tuples(st.integers(2, 9), st.just(d)), elements=st.floats(-5, 5))))


@settings(max_examples=50, deadline=None)
@given(pairs)
def test_coral_properties(pair):
    f_s, f_t = pair
    loss = coral_loss(f_s, f_t)[0]
    assert loss >= 0
    assert abs(loss - coral_loss(f_t, f_s)[0]) <= 1e-12
    assert abs(loss - brute_coral(f_s, f_t)) <= 1e-10
    perm = np.random.default_rng(0).permutation(len(f_s))
    assert abs(loss - coral_loss(f_s[perm], f_t)[0]) <= 1e-10


def test_domain_bce_confused_discriminator():
    loss, _ = domain_bce(np.zeros((4, 2)), [0, 1, 1, 0])
    assert loss == pytest.approx(math.log(2))


def test_domain_bce_separating():
    assert domain_bce([[10.0, -10.0]], [0])[0] == pytest.approx(0.0, abs=1e-8)


def test_domain_bce_delegates_to_cross_entropy(rng):
    z = rng.normal(size=(4, 2))
    y = [0, 1, 0, 1]
    l1, g1 = domain_bce(z, y)
    l2, g2 = cross_entropy(z, y)
    assert l1 == l2 and np.array_equal(g1, g2)


def test_domain_bce_rejects_bad_inputs():
    with pytest.raises(DimensionError):
        domain_bce(np.zeros((2, 3)), [0, 1])
    with pytest.raises(LabelError):
        domain_bce(np.zeros((2, 2)), [0, 2])


def test_combine():
    assert combine(1.0, 0.5, 0.2, 0.1, 0.1) == pytest.approx(1.07, abs=1e-15)
    assert combine(1.3, 0.5, 0.2, 0.0, 0.0) == 1.3
    assert combine(1.0, 0.5, 0.2, 0.1, 0.0) == 1.0 + 0.1 * 0.5
    with pytest.raises(ConfigError):
        combine(1.0, 0.5, 0.2, -0.1, 0.1)
