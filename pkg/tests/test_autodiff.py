import numpy as np
import pytest

from caada.autodiff import (SGD, Affine, GradientReversal, LayerStack, ReLU, grad_check,
                            numeric_grad, relative_error, relu_backward, relu_forward, sgd_step)
from caada.errors import DimensionError, StateError


def affine(w, b):
    layer = Affine(len(w), len(w[0]))
    layer.weights.value[...] = w
    layer.bias.value[...] = b
    return layer


def squared(out):
    return 0.5 * float(np.sum(out ** 2)), out


def test_affine_forward_examples():
    np.testing.assert_array_equal(affine(np.eye(2), [[0, 0]]).forward([[3.0, 4.0]]), [[3, 4]])
    np.testing.assert_array_equal(affine(np.zeros((2, 2)), [[1, 2]]).forward([[9.0, -7.0]]),
                                  [[1, 2]])
    np.testing.assert_array_equal(affine([[1, 0], [1, 1]], [[0, 1]]).forward([[2.0, 3.0]]),
                                  [[5, 4]])


def test_affine_shape_error():
    with pytest.raises(DimensionError):
        Affine(3, 2).forward(np.ones((2, 2)))


def test_affine_backward_zero_and_identity():
    layer = affine(np.eye(2), [[0, 0]])
    layer.forward(np.array([[1.0, 2.0], [3.0, 4.0]]))
    np.testing.assert_array_equal(layer.backward(np.zeros((2, 2))), np.zeros((2, 2)))
    assert not layer.weights.grad.any() and not layer.bias.grad.any()
    g = np.array([[1.0, -2.0], [0.5, 3.0]])
    np.testing.assert_array_equal(layer.backward(g), g)


def test_affine_backward_accumulates():
    layer = affine(np.eye(2), [[0, 0]])
    x = np.array([[1.0, 2.0]])
    layer.forward(x)
    layer.backward(np.ones((1, 2)))
    layer.backward(np.ones((1, 2)))
    np.testing.assert_array_equal(layer.bias.grad, [[2.0, 2.0]])


def test_affine_backward_before_forward():
    with pytest.raises(StateError):
        Affine(2, 2).backward(np.zeros((1, 2)))


def test_affine_finite_differences(rng):
    layer = Affine(2, 2, rng=rng)
    x = rng.normal(size=(3, 2))
    assert grad_check(LayerStack([layer]), squared, x, 1e-5) < 1e-6
    layer.forward(x)
    analytic = layer.backward(layer.forward(x))
    numeric = numeric_grad(lambda v: squared(layer.forward(v))[0], x)
    assert relative_error(analytic, numeric) < 1e-6


def test_relu_examples():
    np.testing.assert_array_equal(relu_forward([[-1.0, 2.0]]), [[0, 2]])
    neg = -np.abs(np.random.default_rng(0).normal(size=(3, 3))) - 0.1
    np.testing.assert_array_equal(relu_forward(neg), 0)
    np.testing.assert_array_equal(relu_backward(np.ones((3, 3)), neg), 0)


def test_relu_tie_propagates_zero():
    np.testing.assert_array_equal(relu_backward([[5.0, 5.0]], [[0.0, 1.0]]), [[0.0, 5.0]])


def test_relu_finite_differences(rng):
    x = rng.normal(size=(4, 5))
    x[np.abs(x) <= 1e-3] = 0.5
    up = rng.normal(size=x.shape)
    layer = ReLU()
    layer.forward(x)
    numeric = numeric_grad(lambda v: float(np.sum(relu_forward(v) * up)), x)
    assert relative_error(layer.backward(up), numeric) < 1e-6


@pytest.mark.parametrize("strength", [0.0, 0.1, 1.0])
def test_grl_forward_is_identity(rng, strength):
    x = rng.normal(size=(4, 3))
    y = GradientReversal(strength).forward(x)
    assert y is x or np.array_equal(y, x)
    np.testing.assert_array_equal(GradientReversal(0.1).forward(np.array([[7.0]])), [[7.0]])


@pytest.mark.parametrize("strength, g, expected", [
    (1.0, [[2.0, -3.0]], [[-2.0, 3.0]]),
    (0.1, [[10.0]], [[-1.0]]),
    (0.0, [[4.0, -1.0]], [[0.0, 0.0]]),
])
def test_grl_backward(strength, g, expected):
    out = GradientReversal(strength).backward(np.array(g))
    np.testing.assert_array_equal(out, expected)


def test_grl_backward_exact_scaling(rng):
    g = rng.normal(size=(5, 4))
    assert np.array_equal(GradientReversal(0.37).backward(g), -0.37 * g)


def test_sgd_single_step():
    opt = SGD(0.001, 0.9, 5e-4)
    p = opt.update("w", np.array([[1.0]]), np.array([[1.0]]))
    assert opt.velocity["w"][0, 0] == pytest.approx(1.0005, abs=1e-15)
    assert p[0, 0] == pytest.approx(0.9989995, abs=1e-15)


def test_sgd_zero_grad_no_decay_is_noop():
    opt = SGD(0.1, 0.9, 0.0)
    p = np.array([[1.5, -2.0]])
    np.testing.assert_array_equal(sgd_step(opt, p, np.zeros_like(p)), p)


def scalar_sgd(p, grads, lr, mom, wd):
    v = 0.0
    for g in grads:
        v = mom * v + (g + wd * p)
        p = p - lr * v
    return p, v


def test_sgd_two_steps_against_scalar_reference():
    lr, mom, wd = 0.001, 0.9, 5e-4
    opt = SGD(lr, mom, wd)
    p = np.array([[1.0]])
    for _ in range(2):
        p = opt.update("w", p, np.array([[1.0]]))
    ref_p, ref_v = scalar_sgd(1.0, [1.0, 1.0], lr, mom, wd)
    assert p[0, 0] == ref_p
    assert opt.velocity["w"][0, 0] == ref_v
    # second velocity is roughly 1.9 times the first
    assert ref_v == pytest.approx(1.9 * 1.0005, rel=1e-5)


def test_sgd_plain_reduces_to_gradient_step(rng):
    p, g = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    np.testing.assert_array_equal(SGD(0.05, 0.0, 0.0).update("w", p, g), p - 0.05 * g)


def test_sgd_deterministic(rng):
    p, g = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    a, b = SGD(), SGD()
    for _ in range(3):
        pa, pb = a.update("w", p, g), b.update("w", p, g)
    assert np.array_equal(pa, pb)


def test_sgd_shape_mismatch():
    with pytest.raises(DimensionError):
        SGD().update("w", np.ones((2, 2)), np.ones((2, 3)))


def test_grad_check_stack_with_grl(rng):
    layer = Affine(3, 2, rng=rng)
    x = rng.normal(size=(4, 3))
    with_grl = LayerStack([GradientReversal(0.5), layer])
    plain = LayerStack([layer])
    assert grad_check(with_grl, squared, x, 1e-5) < 1e-6
    g_grl = with_grl.backward(with_grl.forward(x))
    g_plain = plain.backward(plain.forward(x))
    np.testing.assert_array_equal(g_grl, -0.5 * g_plain)


def test_grad_check_parameterless_stack(rng):
    assert grad_check(LayerStack([ReLU()]), squared, rng.normal(size=(2, 2))) == 0.0


def test_grad_check_deep_stack(rng):
    stack = LayerStack([Affine(3, 5, rng=rng), ReLU(), Affine(5, 4, rng=rng), ReLU(),
                        Affine(4, 2, rng=rng)])
    assert grad_check(stack, squared, rng.normal(size=(6, 3))) < 1e-5


def test_stack_rejects_incompatible_dims():
    with pytest.raises(DimensionError):
        LayerStack([Affine(3, 4), ReLU(), Affine(5, 2)])
