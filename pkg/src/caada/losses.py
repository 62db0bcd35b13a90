"""Classification, CORAL and domain-discriminator losses with input gradients.

All batch losses are means over the batch, so the weighting of the
adversarial and discrepancy terms does not depend on batch size.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateBatchError, DimensionError, LabelError
from .linalg import as_matrix, covariance


@dataclass(frozen=True)
class LossTerms:
    classification: float
    discrepancy: float
    adversarial: float
    combined: float


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = as_matrix(logits, "logits")
    labels = np.asarray(labels)
    n, k = logits.shape
    if n == 0:
        raise DimensionError("cross_entropy on an empty batch")
    if labels.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {labels.shape}")
    if not np.issubdtype(labels.dtype, np.integer):
        if not np.all(labels == np.round(labels)):
            raise LabelError("labels must be integers")
        labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= k:
        raise LabelError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    logp = _log_softmax(logits)
    rows = np.arange(n)
    loss = -logp[rows, labels].mean()
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return float(loss), grad / n


def coral_loss(f_s, f_t):
    """CORAL distance ``||C_s - C_t||_F^2 / (4 d^2)`` and gradients for both inputs."""
    f_s = as_matrix(f_s, "source features")
    f_t = as_matrix(f_t, "target features")
    if f_s.shape[1] != f_t.shape[1]:
        raise DimensionError(
            f"feature dims differ: source {f_s.shape[1]}, target {f_t.shape[1]}")
    n_s, d = f_s.shape
    n_t = f_t.shape[0]
    if n_s < 2 or n_t < 2:
        raise DegenerateBatchError(
            f"CORAL needs >= 2 rows per side, got {n_s} and {n_t}")
    diff = covariance(f_s) - covariance(f_t)
    loss = float(np.sum(diff * diff)) / (4.0 * d * d)
    centered_s = f_s - f_s.mean(axis=0, keepdims=True)
    centered_t = f_t - f_t.mean(axis=0, keepdims=True)
    grad_s = centered_s @ diff / (d * d * (n_s - 1))
    grad_t = -centered_t @ diff / (d * d * (n_t - 1))
    return loss, grad_s, grad_t


def domain_bce(d_out, domain_labels):
    """Two-way domain loss over raw discriminator logits (source=0, target=1)."""
    d_out = as_matrix(d_out, "discriminator output")
    if d_out.shape[1] != 2:
        raise DimensionError(f"discriminator must emit 2 logits, got {d_out.shape[1]}")
    labels = np.asarray(domain_labels)
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise LabelError("domain labels must be 0 (source) or 1 (target)")
    return cross_entropy(d_out, labels)


def combine(l_c, l_adv, l_dm, gamma, sigma):
    if gamma < 0 or sigma < 0:
        raise ConfigError(f"loss weights must be >= 0, got gamma={gamma}, sigma={sigma}")
    return l_c + gamma * l_adv + sigma * l_dm
