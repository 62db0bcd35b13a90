"""Hand-written differentiable layers, momentum SGD and a finite-difference checker.

Every layer exposes ``forward(x)``, ``backward(grad_out)`` and
``parameters()``. Parameter gradients accumulate into ``Param.grad`` until
``zero_grad`` is called; the trainer zeroes them before and after every step.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NonFiniteError, StateError
from .linalg import as_matrix, check_finite


@dataclass(eq=False)
class Param:
    name: str
    value: np.ndarray
    grad: np.ndarray = field(init=False)
    # set by backward; SGD skips parameters that took no part in the step
    active: bool = field(init=False, default=False)

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0
        self.active = False


def fan_uniform(rng, fan_in, fan_out):
    """Scaled-uniform init with bound sqrt(6 / (fan_in + fan_out))."""
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Affine:
    """``y = x @ W + b`` with ``W`` of shape (in_dim, out_dim)."""

    kind = "affine"

    def __init__(self, in_dim, out_dim, rng=None, init_std=None, name="affine"):
        if in_dim < 1 or out_dim < 1:
            raise ConfigError(f"affine dims must be positive, got {in_dim}x{out_dim}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        if init_std is None:
            w = fan_uniform(rng, in_dim, out_dim)
        else:
            w = rng.normal(0.0, init_std, size=(in_dim, out_dim))
        self.weights = Param(f"{name}.weights", w)
        self.bias = Param(f"{name}.bias", np.zeros((1, out_dim)))
        self._x = None

    def parameters(self):
        return [self.weights, self.bias]

    def forward(self, x):
        x = as_matrix(x, "affine input")
        if x.shape[1] != self.in_dim:
            raise DimensionError(
                f"affine expects {self.in_dim} input columns, got {x.shape[1]}")
        self._x = x
        return check_finite(x @ self.weights.value + self.bias.value, "affine output")

    def backward(self, grad_out):
        if self._x is None:
            raise StateError("affine backward called before forward")
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != (self._x.shape[0], self.out_dim):
            raise DimensionError(
                f"affine grad_out shape {grad_out.shape}, "
                f"expected {(self._x.shape[0], self.out_dim)}")
        self.weights.grad += self._x.T @ grad_out
        self.bias.grad += grad_out.sum(axis=0, keepdims=True)
        self.weights.active = self.bias.active = True
        return grad_out @ self.weights.value.T


class ReLU:
    kind = "relu"

    def __init__(self):
        self._x = None

    def parameters(self):
        return []

    def forward(self, x):
        x = as_matrix(x, "relu input")
        self._x = x
        return np.maximum(x, 0.0)

    def backward(self, grad_out):
        if self._x is None:
            raise StateError("relu backward called before forward")
        # subgradient at exactly 0 is 0
        return np.where(self._x > 0.0, grad_out, 0.0)


def relu_forward(x):
    return np.maximum(as_matrix(x), 0.0)


def relu_backward(grad_out, cached_x):
    return np.where(np.asarray(cached_x) > 0.0, grad_out, 0.0)


class GradientReversal:
    """Identity on the way forward, ``-strength * grad`` on the way back."""

    kind = "grl"

    def __init__(self, strength=1.0):
        self.strength = strength

    @property
    def strength(self):
        return self._strength

    @strength.setter
    def strength(self, value):
        if value < 0:
            raise ConfigError(f"gradient reversal strength must be >= 0, got {value}")
        self._strength = float(value)

    def parameters(self):
        return []

    def forward(self, x):
        return x

    def backward(self, grad_out):
        return -self._strength * grad_out


class LayerStack:
    """An ordered sequence of layers applied left to right."""

    def __init__(self, layers, name="stack"):
        self.layers = list(layers)
        self.name = name
        width = None
        for i, layer in enumerate(self.layers):
            if isinstance(layer, Affine):
                if width is not None and layer.in_dim != width:
                    raise DimensionError(
                        f"{name}: layer {i} expects {layer.in_dim} inputs "
                        f"but the previous layer emits {width}")
                width = layer.out_dim

    @property
    def in_dim(self):
        for layer in self.layers:
            if isinstance(layer, Affine):
                return layer.in_dim
        return None

    @property
    def out_dim(self):
        for layer in reversed(self.layers):
            if isinstance(layer, Affine):
                return layer.out_dim
        return None

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        for layer in reversed(self.layers):
            grad_out = layer.backward(grad_out)
        return grad_out


def mlp(dims, rng, name, final_relu=False, head_std=None):
    """Affine/ReLU stack through ``dims``; ``head_std`` selects N(0, std) for the last layer."""
    layers = []
    for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        layers.append(Affine(a, b, rng=rng, init_std=head_std if last else None,
                             name=f"{name}.{i}"))
        if not last or final_relu:
            layers.append(ReLU())
    return LayerStack(layers, name=name)


class SGD:
    """Momentum SGD with L2 weight decay folded into the velocity.

    v <- momentum * v + (grad + weight_decay * param)
    param <- param - learning_rate * v
    """

    def __init__(self, learning_rate=0.001, momentum=0.9, weight_decay=5e-4):
        if learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 <= momentum < 1:
            raise ConfigError("momentum must lie in [0, 1)")
        if weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {}

    def update(self, key, value, grad):
        """Return the updated copy of ``value``; velocity is tracked under ``key``."""
        value = np.asarray(value, dtype=np.float64)
        grad = np.asarray(grad, dtype=np.float64)
        if value.shape != grad.shape:
            raise DimensionError(f"sgd: param {value.shape} vs grad {grad.shape}")
        v = self.velocity.get(key)
        if v is None:
            v = np.zeros_like(value)
        elif v.shape != value.shape:
            raise DimensionError(f"sgd: velocity {v.shape} vs param {value.shape}")
        v = self.momentum * v + (grad + self.weight_decay * value)
        self.velocity[key] = v
        return value - self.learning_rate * v

    def step(self, params):
        """Update every parameter that received a gradient since its last zero_grad."""
        for p in params:
            if p.active:
                p.value[...] = self.update(p.name, p.value, p.grad)


def sgd_step(opt, params, grads, key="param"):
    return opt.update(key, params, grads)


def relative_error(analytic, numeric):
    """Norm-wise relative error ``|a - n| / max(|a|, |n|, 1e-8)``."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return float(np.linalg.norm(a - n) / denom)


def numeric_grad(f, x, eps=1e-5):
    """Central differences of the scalar function ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        orig = x[i]
        x[i] = orig + eps
        fp = f(x)
        x[i] = orig - eps
        fm = f(x)
        x[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"non-finite loss while perturbing index {i}")
        g[i] = (fp - fm) / (2 * eps)
    return g


def grad_check(stack, loss_fn, x, eps=1e-5):
    """Max relative error between analytic and central-difference parameter gradients.

    ``loss_fn(out)`` must return ``(loss, grad_out)``. The error for each
    parameter tensor is measured norm-wise; the maximum over tensors is
    returned. A stack with no parameters returns 0.0.
    """
    if eps <= 0:
        raise ConfigError("eps must be > 0")
    params = stack.parameters()
    stack.zero_grad()
    loss, grad_out = loss_fn(stack.forward(x))
    if not np.isfinite(loss):
        raise NonFiniteError("loss is not finite")
    stack.backward(grad_out)
    worst = 0.0
    for p in params:
        analytic = p.grad.copy()

        def perturbed(v, p=p):
            saved = p.value.copy()
            p.value[...] = v
            try:
                return loss_fn(stack.forward(x))[0]
            finally:
                p.value[...] = saved

        numeric = numeric_grad(perturbed, p.value, eps)
        worst = max(worst, relative_error(analytic, numeric))
    stack.zero_grad()
    return worst
