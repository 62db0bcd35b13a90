"""Canonical synthetic benchmarks used by the acceptance suite and the demos.

Each builder is a pure function of its seed, so a task and a training run
that share a seed reproduce bit for bit.
"""

import numpy as np

from .data import DomainShift, GaussianMixtureSpec, gen_gaussian_domains

# Elongated classes: a rotation swings the long axis, which changes the
# feature covariance and gives the alignment losses something to correct.
DA_SPEC = dict(centers=[[0.0, 0.0], [4.0, 0.0]], class_cov=np.diag([1.0, 0.3]), per_class=100)
DA_SHIFT = DomainShift(50.0, (1.0, -1.0))

DG_SPEC = dict(centers=[[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]], class_cov=np.diag([1.0, 0.3]),
               per_class=100)
DG_SOURCE_ANGLES = (0.0, 15.0, 30.0)
DG_HELD_OUT_ANGLE = 45.0


def da_task(seed, shift=DA_SHIFT):
    """Two-class source at rest and a target rotated 50 degrees and translated."""
    spec = GaussianMixtureSpec(**DA_SPEC)
    source, target = gen_gaussian_domains(spec, [DomainShift(0.0), shift], seed)
    return source, target


def sanity_task(seed):
    """Source and target drawn from the same distribution."""
    return da_task(seed, shift=DomainShift(0.0))


def dg_task(seed):
    """Three rotated source domains plus a held-out domain at 45 degrees.

    Returns ``(sources, held_out)``.
    """
    spec = GaussianMixtureSpec(**DG_SPEC)
    angles = DG_SOURCE_ANGLES + (DG_HELD_OUT_ANGLE,)
    domains = gen_gaussian_domains(spec, [DomainShift(a) for a in angles], seed)
    return domains[:-1], domains[-1]
