"""Finite-difference verification of every hand-written gradient.

:func:`gradcheck_report` returns ``{component: max relative error}``. The
composite check compares the model's gradients against the objective each
parameter group actually descends: the discriminator minimizes the domain
loss, every other parameter minimizes
``classification + sigma * discrepancy - gamma * adversarial``.
"""

import numpy as np

from . import losses
from .autodiff import Affine, GradientReversal, LayerStack, ReLU, grad_check, numeric_grad, relative_error
from .config import TrainConfig
from .model import _forward, backward, build

KERNEL_TOL = 1e-5
COMPOSITE_TOL = 1e-4

# module-level so the harness can be exercised with a broken kernel
coral_loss = losses.coral_loss


def _squared(out):
    return 0.5 * float(np.sum(out * out)), out


def check_affine(rng, eps):
    stack = LayerStack([Affine(3, 2, rng=rng)])
    return grad_check(stack, _squared, rng.normal(size=(4, 3)), eps)


def check_relu(rng, eps):
    x = rng.normal(size=(5, 4))
    x[np.abs(x) < 1e-2] += 0.1  # stay away from the kink
    up = rng.normal(size=x.shape)
    layer = ReLU()
    layer.forward(x)
    analytic = layer.backward(up)
    numeric = numeric_grad(lambda v: float(np.sum(np.maximum(v, 0) * up)), x, eps)
    stack = LayerStack([Affine(3, 4, rng=rng), ReLU(), Affine(4, 2, rng=rng)])
    return max(relative_error(analytic, numeric),
               grad_check(stack, _squared, rng.normal(size=(6, 3)), eps))


def check_cross_entropy(rng, eps):
    z = rng.normal(size=(4, 3))
    y = np.array([0, 2, 1, 2])
    _, g = losses.cross_entropy(z, y)
    return relative_error(g, numeric_grad(lambda v: losses.cross_entropy(v, y)[0], z, eps))


def check_domain_bce(rng, eps):
    z = rng.normal(size=(6, 2))
    y = np.array([0, 0, 0, 1, 1, 1])
    _, g = losses.domain_bce(z, y)
    return relative_error(g, numeric_grad(lambda v: losses.domain_bce(v, y)[0], z, eps))


def check_coral(rng, eps):
    f_s = rng.normal(size=(8, 3))
    f_t = rng.normal(size=(6, 3)) * 1.5
    _, g_s, g_t = coral_loss(f_s, f_t)
    n_s = numeric_grad(lambda v: losses.coral_loss(v, f_t)[0], f_s, eps)
    n_t = numeric_grad(lambda v: losses.coral_loss(f_s, v)[0], f_t, eps)
    return max(relative_error(g_s, n_s), relative_error(g_t, n_t))


def check_grl(rng, eps, strength=0.5):
    """Input gradient through GRL + affine equals -strength times the plain one."""
    x = rng.normal(size=(3, 2))
    layer = Affine(2, 2, rng=rng)
    grl_stack = LayerStack([GradientReversal(strength), layer])
    plain = LayerStack([layer])
    grl_stack.forward(x)
    analytic = grl_stack.backward(_squared(grl_stack.forward(x))[1])
    numeric = numeric_grad(lambda v: _squared(plain.forward(v))[0], x, eps)
    grl_stack.zero_grad()
    return max(relative_error(analytic, -strength * numeric),
               grad_check(grl_stack, _squared, x, eps))


def tiny_model(gamma=0.3, sigma=0.7, seed=3):
    cfg = TrainConfig(gamma=gamma, sigma=sigma, extractor_hidden_dims=(4,),
                      bottleneck_dim=4, discriminator_hidden_dim=4,
                      head_init_std=0.5, target_init="independent", seed=seed)
    return build(cfg, 3, 2)


def composite_errors(model, x_s, y_s, x_t, y_t=None, eps=1e-5):
    """Relative error per parameter of the assembled model gradient."""
    cfg = model.config
    disc_ids = {id(p) for p in model.discriminator.parameters()}

    def objectives():
        t = _forward(model, x_s, y_s, x_t, y_t).losses
        feature_obj = t.classification + cfg.sigma * t.discrepancy - cfg.gamma * t.adversarial
        return feature_obj, t.adversarial

    model.zero_grad()
    step = _forward(model, x_s, y_s, x_t, y_t)
    backward(model, step)
    errors = {}
    for p in model.parameters():
        analytic = p.grad.copy()
        which = 1 if id(p) in disc_ids else 0

        def f(v, p=p):
            saved = p.value.copy()
            p.value[...] = v
            try:
                return objectives()[which]
            finally:
                p.value[...] = saved

        errors[p.name] = relative_error(analytic, numeric_grad(f, p.value, eps))
    model.zero_grad()
    model._pending = None
    return errors


def kink_margin(model, x_s, x_t, y_s, y_t=None):
    """Smallest |ReLU input| seen in one forward pass."""
    _forward(model, x_s, y_s, x_t, y_t)
    model._pending = None
    margins = [np.abs(layer._x).min() for stack in model.stacks()
               for layer in stack.layers if isinstance(layer, ReLU)]
    return min(margins)


def _min_grad_norm(model, x_s, x_t, y_s):
    model.zero_grad()
    backward(model, _forward(model, x_s, y_s, x_t, None))
    smallest = min(np.linalg.norm(p.grad) for p in model.parameters())
    model.zero_grad()
    model._pending = None
    return smallest


def _relu_pattern(model, x_s, x_t, y_s):
    _forward(model, x_s, y_s, x_t, None)
    model._pending = None
    return [layer._x > 0 for stack in model.stacks()
            for layer in stack.layers if isinstance(layer, ReLU)]


def stencil_crosses_kink(model, x_s, x_t, y_s, eps):
    """True if nudging any single weight by +-eps flips some ReLU on or off."""
    base = _relu_pattern(model, x_s, x_t, y_s)
    for p in model.parameters():
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            for delta in (eps, -eps):
                flat[i] = saved + delta
                moved = _relu_pattern(model, x_s, x_t, y_s)
                flat[i] = saved
                if any((a != b).any() for a, b in zip(base, moved)):
                    return True
    return False


def kink_free_batch(model, rng, n=3, margin=1e-4, min_grad=1e-4, eps=None):
    """Draw (x_s, x_t) whose ReLU inputs all sit ``margin`` away from zero.

    Batches where some parameter tensor gets an almost-zero gradient are
    also rejected: rounding noise would swamp the relative error there.
    Given ``eps``, the whole finite-difference stencil must also stay on
    one linear piece of every ReLU.
    """
    y_s = np.array([0, 1, 1])
    for _ in range(1000):
        x_s = rng.normal(size=(n, model.input_dim))
        x_t = rng.normal(size=(n, model.input_dim)) + 0.5
        if (kink_margin(model, x_s, x_t, y_s) > margin
                and _min_grad_norm(model, x_s, x_t, y_s) > min_grad
                and (eps is None or not stencil_crosses_kink(model, x_s, x_t, y_s, eps))):
            return x_s, x_t
    raise RuntimeError("could not find a kink-free batch")


def check_composite(rng, eps):
    model = tiny_model()
    try:
        x_s, x_t = kink_free_batch(model, rng, eps=eps)
    except RuntimeError:
        return float("inf")  # eps too coarse for any batch to avoid the kinks
    y_s = np.array([0, 1, 1])
    da = max(composite_errors(model, x_s, y_s, x_t, eps=eps).values())
    dg = max(composite_errors(model, x_s, y_s, x_t, np.array([1, 0, 1]), eps=eps).values())
    return max(da, dg)


COMPONENTS = {
    "affine": check_affine,
    "relu": check_relu,
    "cross_entropy": check_cross_entropy,
    "domain_bce": check_domain_bce,
    "coral": check_coral,
    "grl": check_grl,
    "composite": check_composite,
}


def tolerance(component):
    return COMPOSITE_TOL if component == "composite" else KERNEL_TOL


def gradcheck_report(eps=1e-5, seed=0):
    rng = np.random.default_rng(seed)
    return {name: fn(rng, eps) for name, fn in COMPONENTS.items()}
