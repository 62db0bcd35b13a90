"""Two-stream network: unshared extractors, shared classifier head, GRL discriminator.

Data flow for one step (source rows first, target rows second)::

    x_s -> source_extractor -> h_s --+--> classifier_head -> z_s, z_t
    x_t -> target_extractor -> h_t --+--> GRL -> discriminator -> domain logits

The classification loss uses ``z_s``; the CORAL term compares ``z_s`` and
``z_t``; the domain loss uses the discriminator logits. The head and the
discriminator run once on the stacked bottleneck batch, which keeps a
single forward cache per layer.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import losses
from .autodiff import Affine, GradientReversal, LayerStack, ReLU, mlp
from .config import TrainConfig
from .data import derive_rng
from .errors import ConfigError, DataError, DimensionError, StateError
from .linalg import as_matrix

CHECKPOINT_MAGIC = b"CAADACKP"
CHECKPOINT_VERSION = 1


@dataclass
class StepOutput:
    losses: losses.LossTerms
    source_logits: np.ndarray
    target_logits: np.ndarray
    source_bottleneck: np.ndarray
    target_bottleneck: np.ndarray
    # gradients of the step objective w.r.t. head and discriminator outputs
    _grad_logits: np.ndarray = field(default=None, repr=False)
    _grad_domain: np.ndarray = field(default=None, repr=False)
    _target_head_grad: bool = field(default=True, repr=False)


class CaadaModel:
    def __init__(self, config, input_dim, num_classes, source_extractor,
                 target_extractor, classifier_head, discriminator):
        self.config = config
        self.input_dim = input_dim
        self.num_classes = num_classes
        self.source_extractor = source_extractor
        self.target_extractor = target_extractor
        self.classifier_head = classifier_head
        self.discriminator = discriminator
        self._pending = None

    @property
    def grl(self):
        return self.discriminator.layers[0]

    @property
    def mode(self):
        return self.config.mode

    def stacks(self):
        return [self.source_extractor, self.target_extractor,
                self.classifier_head, self.discriminator]

    def parameters(self):
        return [p for s in self.stacks() for p in s.parameters()]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def extractor_for_eval(self):
        return self.target_extractor if self.mode == "da" else self.source_extractor


def _check_input(x, input_dim, what):
    x = as_matrix(x, what)
    if x.shape[1] != input_dim:
        raise DimensionError(f"{what} has {x.shape[1]} columns, model expects {input_dim}")
    return x


def build(config, input_dim, num_classes):
    """Freshly initialized model, deterministic in ``config.seed``.

    The classifier head is drawn from N(0, head_init_std); other affine
    layers use scaled-uniform init. With ``target_init="copy"`` the target
    extractor starts from the source extractor's values in separate storage.
    """
    if not isinstance(config, TrainConfig):
        raise ConfigError("config must be a TrainConfig")
    if input_dim < 1 or num_classes < 2:
        raise ConfigError(f"need input_dim >= 1 and num_classes >= 2, "
                          f"got {input_dim}, {num_classes}")
    dims = [input_dim, *config.extractor_hidden_dims, config.bottleneck_dim]
    source = mlp(dims, derive_rng(config.seed, "init", "source"),
                 "source_extractor", final_relu=True)
    target = mlp(dims, derive_rng(config.seed, "init", "target"),
                 "target_extractor", final_relu=True)
    if config.target_init == "copy":
        for ps, pt in zip(source.parameters(), target.parameters()):
            pt.value[...] = ps.value
    head = LayerStack([Affine(config.bottleneck_dim, num_classes,
                              rng=derive_rng(config.seed, "init", "head"),
                              init_std=config.head_init_std,
                              name="classifier_head.0")], name="classifier_head")
    h = config.discriminator_hidden_dim
    drng = derive_rng(config.seed, "init", "discriminator")
    disc = LayerStack([
        GradientReversal(config.gamma),
        Affine(config.bottleneck_dim, h, rng=drng, name="discriminator.0"), ReLU(),
        Affine(h, h, rng=drng, name="discriminator.1"), ReLU(),
        Affine(h, 2, rng=drng, name="discriminator.2"),
    ], name="discriminator")
    return CaadaModel(config, input_dim, num_classes, source, target, head, disc)


def _forward(model, x_s, y_s, x_t, y_t):
    cfg = model.config
    x_s = _check_input(x_s, model.input_dim, "source batch")
    x_t = _check_input(x_t, model.input_dim, "target batch")
    n_s = x_s.shape[0]
    h_s = model.source_extractor.forward(x_s)
    h_t = model.target_extractor.forward(x_t)
    h = np.vstack([h_s, h_t])
    z = model.classifier_head.forward(h)
    d = model.discriminator.forward(h)
    z_s, z_t = z[:n_s], z[n_s:]

    l_c, g_zs = losses.cross_entropy(z_s, y_s)
    g_zt = np.zeros_like(z_t)
    if y_t is not None:
        l_ct, g_zt = losses.cross_entropy(z_t, y_t)
        l_c += l_ct
    l_dm, c_s, c_t = losses.coral_loss(z_s, z_t)
    dom = np.concatenate([np.zeros(n_s, dtype=np.int64),
                          np.ones(x_t.shape[0], dtype=np.int64)])
    l_adv, g_d = losses.domain_bce(d, dom)

    terms = losses.LossTerms(
        classification=l_c, discrepancy=l_dm, adversarial=l_adv,
        combined=losses.combine(l_c, l_adv, l_dm, cfg.gamma, cfg.sigma))
    grad_logits = np.vstack([g_zs + cfg.sigma * c_s, g_zt + cfg.sigma * c_t])
    out = StepOutput(terms, z_s, z_t, h_s, h_t, grad_logits, g_d,
                     _target_head_grad=y_t is not None or cfg.sigma != 0)
    model._pending = out
    return out


def forward_da(model, x_s, y_s, x_t):
    """Forward both streams; ``x_t`` is unlabeled."""
    return _forward(model, x_s, y_s, x_t, None)


def forward_dg(model, stream_a, stream_b):
    """Forward two labeled source streams; classification loss sums both."""
    (x_a, y_a), (x_b, y_b) = stream_a, stream_b
    return _forward(model, x_a, y_a, x_b, y_b)


def backward(model, step, detach_discriminator=False):
    """Accumulate gradients of the step objective into every parameter.

    The discriminator receives the plain domain-loss gradient; the GRL
    hands the extractors ``-gamma`` times its input gradient. With
    ``detach_discriminator`` the extractors get no adversarial gradient.
    """
    if step is None or step is not model._pending:
        raise StateError("backward requires the StepOutput of the latest forward pass")
    n_s = step.source_bottleneck.shape[0]
    grad_h = model.classifier_head.backward(step._grad_logits)
    grad_h_disc = model.discriminator.backward(step._grad_domain)
    adversarial = not detach_discriminator and model.grl.strength != 0.0
    if adversarial:
        grad_h = grad_h + grad_h_disc
    model.source_extractor.backward(grad_h[:n_s])
    # a target stream with no loss attached is left out of the step entirely
    if adversarial or step._target_head_grad:
        model.target_extractor.backward(grad_h[n_s:])


def backward_and_step(model, step, optimizer, detach_discriminator=False):
    model.zero_grad()
    backward(model, step, detach_discriminator=detach_discriminator)
    optimizer.step(model.parameters())
    model.zero_grad()
    model._pending = None
    return model


def logits(model, x, extractor=None):
    x = _check_input(x, model.input_dim, "input")
    ext = extractor or model.extractor_for_eval()
    return model.classifier_head.forward(ext.forward(x))


def embed(model, x, layer="fcb", extractor=None):
    """Bottleneck ("fcb") or classifier-output ("fc8") activations.

    Uses the evaluation-path extractor unless ``extractor`` is given.
    """
    x = _check_input(x, model.input_dim, "input")
    h = (extractor or model.extractor_for_eval()).forward(x)
    if layer == "fcb":
        return h
    if layer == "fc8":
        return model.classifier_head.forward(h)
    raise ConfigError(f"layer must be 'fcb' or 'fc8', got {layer!r}")


def predict(model, x, extractor=None):
    """Class indices by argmax; ties go to the lowest index."""
    return np.argmax(logits(model, x, extractor), axis=1)


# -- checkpoints ------------------------------------------------------------
#
# Layout: 8-byte magic, uint32 version, uint64 header length (little endian),
# UTF-8 JSON header, then every parameter as little-endian float64 in header
# order. The header carries the config, dims and the (name, shape) list.

def checkpoint_bytes(model):
    params = model.parameters()
    header = {
        "config": model.config.to_dict(),
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "params": [[p.name, list(p.value.shape)] for p in params],
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p.value, dtype="<f8").tobytes() for p in params)
    return CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(hb)) + hb + body


def save_checkpoint(model, path):
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    return model_from_bytes(blob)


def model_from_bytes(blob):
    if blob[:8] != CHECKPOINT_MAGIC or len(blob) < 20:
        raise DataError("not a checkpoint file")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    try:
        header = json.loads(blob[20:20 + hlen].decode("utf-8"))
        config = TrainConfig.from_dict(header["config"])
        model = build(config, header["input_dim"], header["num_classes"])
    except (ValueError, KeyError) as exc:
        raise DataError(f"corrupt checkpoint header: {exc}") from None
    named = model.named_parameters()
    offset = 20 + hlen
    for name, shape in header["params"]:
        p = named.get(name)
        if p is None or list(p.value.shape) != shape:
            raise DataError(f"checkpoint parameter {name} does not match the model")
        size = int(np.prod(shape)) * 8
        if offset + size > len(blob):
            raise DataError("truncated checkpoint")
        p.value[...] = np.frombuffer(blob, dtype="<f8", count=size // 8,
                                     offset=offset).reshape(shape)
        offset += size
    if offset != len(blob):
        raise DataError("trailing bytes in checkpoint")
    return model
