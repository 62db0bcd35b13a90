"""Domain-shifted datasets: generation, CSV I/O, DG splitting, subsampling, batching.

Randomness
----------
Every random stream is derived from ``(seed, tag, ...)`` through
:func:`derive_rng`, which hashes the tags with CRC-32 and feeds them to a
numpy ``SeedSequence``. Changing one tag (e.g. the batching epoch) never
disturbs another stream (e.g. initialization).

Label access
------------
Labels are kept private. Callers read them through
``DomainDataset.labels(purpose)`` and every read is tallied in
``label_reads[purpose]``, so tests can prove the trainer never looked at
target labels outside evaluation. Feature reads are tallied in
``feature_reads``.
"""

import csv
import io
import math
import zlib
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, DegenerateBatchError, LabelError
from .linalg import as_matrix


def _tag_int(tag):
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    return zlib.crc32(str(tag).encode("utf-8"))


def derive_seed(seed, *tags):
    """A 32-bit seed derived from the run seed and a sequence of purpose tags."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF] + [_tag_int(t) for t in tags])
    return int(ss.generate_state(1)[0])


def derive_rng(seed, *tags):
    return np.random.default_rng(derive_seed(seed, *tags))


class DomainDataset:
    """Samples from one domain (or an aggregate of several).

    ``domains`` holds a per-row domain id so aggregated streams remember
    where each sample came from.
    """

    def __init__(self, features, labels=None, domain_id=0, name="", domains=None):
        x = as_matrix(features, "features")
        if x.shape[0] < 1:
            raise DataError(f"dataset {name!r} is empty")
        n = x.shape[0]
        if labels is not None:
            labels = np.asarray(labels)
            if labels.shape != (n,):
                raise DataError(f"{n} samples but labels of shape {labels.shape}")
            if labels.size and (labels.min() < 0 or not np.all(labels == np.round(labels))):
                raise LabelError("labels must be nonnegative integers")
            labels = labels.astype(np.int64)
        if domains is None:
            domains = np.full(n, int(domain_id), dtype=np.int64)
        else:
            domains = np.asarray(domains, dtype=np.int64)
            if domains.shape != (n,):
                raise DataError(f"{n} samples but domains of shape {domains.shape}")
        self._features = x
        self._labels = labels
        self.domains = domains
        self.domain_id = int(domain_id)
        self.name = name
        self.label_reads = Counter()
        self.feature_reads = 0

    def __len__(self):
        return self._features.shape[0]

    def __repr__(self):
        lab = "labeled" if self.has_labels else "unlabeled"
        return f"DomainDataset({self.name!r}, n={len(self)}, d={self.dim}, {lab})"

    @property
    def dim(self):
        return self._features.shape[1]

    @property
    def has_labels(self):
        return self._labels is not None

    @property
    def features(self):
        self.feature_reads += 1
        return self._features

    def labels(self, purpose):
        """Return the labels, recording the read under ``purpose``."""
        if self._labels is None:
            raise LabelError(f"dataset {self.name!r} has no labels")
        self.label_reads[purpose] += 1
        return self._labels

    @property
    def num_classes(self):
        if self._labels is None:
            return None
        return int(self._labels.max()) + 1

    def take(self, idx, name=None):
        """Subset by row indices; does not count as a read of either attribute."""
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self._labels is None else self._labels[idx]
        return DomainDataset(self._features[idx], labels, domain_id=self.domain_id,
                             name=name or self.name, domains=self.domains[idx])

    def without_labels(self):
        return DomainDataset(self._features, None, domain_id=self.domain_id,
                             name=self.name, domains=self.domains)


def concat(datasets, name="aggregate"):
    if not datasets:
        raise DataError("nothing to concatenate")
    has = [d.has_labels for d in datasets]
    if any(has) and not all(has):
        raise DataError("cannot concatenate labeled with unlabeled datasets")
    labels = np.concatenate([d._labels for d in datasets]) if all(has) else None
    return DomainDataset(np.vstack([d._features for d in datasets]), labels,
                         domain_id=datasets[0].domain_id, name=name,
                         domains=np.concatenate([d.domains for d in datasets]))


# -- synthetic generation ---------------------------------------------------

@dataclass
class DomainShift:
    """Rigid transform applied to the base mixture: rotate, scale, then translate."""
    angle_deg: float = 0.0
    translation: tuple = (0.0, 0.0)
    scale: float = 1.0


@dataclass
class GaussianMixtureSpec:
    """Base class-conditional Gaussian mixture.

    ``class_cov`` is either one (d, d) matrix shared by all classes or a
    (K, d, d) stack. Rotations act in the plane of the first two features.
    """
    centers: np.ndarray
    class_cov: np.ndarray = None
    per_class: int = 100

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        k, d = self.centers.shape
        if k < 2:
            raise ConfigError(f"need at least 2 classes, got {k}")
        if d < 2:
            raise ConfigError("need at least 2 feature dimensions for rotation")
        if self.per_class < 2:
            raise ConfigError(f"per_class must be >= 2, got {self.per_class}")
        if self.class_cov is None:
            self.class_cov = np.eye(d)
        cov = np.asarray(self.class_cov, dtype=np.float64)
        if cov.shape == (d, d):
            cov = np.broadcast_to(cov, (k, d, d)).copy()
        if cov.shape != (k, d, d):
            raise ConfigError(f"class_cov must be ({d},{d}) or ({k},{d},{d})")
        self.class_cov = cov

    @property
    def num_classes(self):
        return self.centers.shape[0]

    @property
    def dim(self):
        return self.centers.shape[1]


def rotation_matrix(angle_deg, dim=2):
    t = math.radians(angle_deg)
    r = np.eye(dim)
    r[0, 0], r[0, 1] = math.cos(t), -math.sin(t)
    r[1, 0], r[1, 1] = math.sin(t), math.cos(t)
    return r


def apply_shift(x, shift):
    """Map row vectors through rotation about the origin, scaling and translation."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[1]
    t = np.zeros(d)
    tr = np.asarray(shift.translation, dtype=np.float64)
    t[:tr.size] = tr
    return shift.scale * x @ rotation_matrix(shift.angle_deg, d).T + t


def gen_gaussian_domains(spec, shifts, seed):
    """One labeled dataset per entry of ``shifts``; domain ids follow list order."""
    out = []
    for j, shift in enumerate(shifts):
        rng = derive_rng(seed, "gen", j)
        xs, ys = [], []
        for c in range(spec.num_classes):
            xs.append(rng.multivariate_normal(spec.centers[c], spec.class_cov[c],
                                              size=spec.per_class))
            ys.append(np.full(spec.per_class, c))
        x = apply_shift(np.vstack(xs), shift)
        out.append(DomainDataset(x, np.concatenate(ys), domain_id=j,
                                 name=f"domain{j}"))
    return out


# -- CSV --------------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def to_csv_text(dataset):
    """Serialize with header ``f0,...,f{d-1},label,domain`` and LF line endings."""
    buf = io.StringIO()
    d = dataset.dim
    buf.write(",".join([f"f{i}" for i in range(d)] + ["label", "domain"]) + "\n")
    labels = dataset._labels
    for i in range(len(dataset)):
        row = [_fmt(v) for v in dataset._features[i]]
        row.append("" if labels is None else str(int(labels[i])))
        row.append(str(int(dataset.domains[i])))
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def save_csv(dataset, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv_text(dataset))


def load_csv(path, name=None):
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = rows[0]
    d = len(header) - 2
    expected = [f"f{i}" for i in range(d)] + ["label", "domain"]
    if d < 1 or header != expected:
        raise DataError(f"{path}: header must be f0,...,f{{d-1}},label,domain")
    feats, labels, domains = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != d + 2:
            raise DataError(f"{path}:{lineno}: expected {d + 2} columns, got {len(row)}")
        try:
            feats.append([float(v) for v in row[:d]])
            labels.append(None if row[d] == "" else int(row[d]))
            domains.append(int(row[d + 1]))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if (labels[-1] is not None and labels[-1] < 0) or domains[-1] < 0:
            raise DataError(f"{path}:{lineno}: label and domain must be nonnegative")
    if not feats:
        raise DataError(f"{path}: no samples")
    present = [l is not None for l in labels]
    if any(present) and not all(present):
        raise DataError(f"{path}: mixes labeled and unlabeled rows")
    lab = np.array(labels, dtype=np.int64) if all(present) else None
    dom = np.array(domains, dtype=np.int64)
    return DomainDataset(np.array(feats), lab, domain_id=int(dom[0]),
                         name=name or path.stem, domains=dom)


# -- protocols --------------------------------------------------------------

def _floor_frac(fraction, n):
    return int(math.floor(fraction * n + 1e-9))


def dg_split(sources, fraction=0.7, seed=0):
    """Per-domain shuffled split; train parts and remainders are each pooled."""
    if not 0 < fraction < 1:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    if len(sources) < 2:
        raise ConfigError("domain generalization needs at least 2 source domains")
    train, val = [], []
    for j, ds in enumerate(sources):
        n = len(ds)
        k = _floor_frac(fraction, n)
        if k < 2 or n - k < 2:
            raise DegenerateBatchError(
                f"domain {ds.name!r}: split {k}/{n - k} leaves a side with < 2 samples")
        perm = derive_rng(seed, "split", j).permutation(n)
        train.append(ds.take(np.sort(perm[:k])))
        val.append(ds.take(np.sort(perm[k:])))
    return concat(train, "dg_train"), concat(val, "dg_val")


def subsample_target(target, fraction, seed=0):
    """Keep ``floor(fraction * n_c)`` randomly chosen samples of every class.

    Labels are read only to stratify (tallied as ``"stratify"``); the
    result keeps them for evaluation.
    """
    if not 0 < fraction <= 1:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    labels = target.labels("stratify")
    keep = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        k = _floor_frac(fraction, idx.size)
        if k < 2:
            raise DegenerateBatchError(f"class {c}: only {k} samples kept, need >= 2")
        chosen = derive_rng(seed, "subsample", int(c)).permutation(idx)[:k]
        keep.append(chosen)
    return target.take(np.sort(np.concatenate(keep)), name=f"{target.name}@{fraction:g}")


@dataclass
class BatchPlan:
    batch_size: int = 128
    seed: int = 0
    wrap: str = field(default="cycle", repr=False)

    def __post_init__(self):
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")


def _chunks(perm, bs):
    pieces = [perm[i:i + bs] for i in range(0, perm.size, bs)]
    if len(pieces) > 1 and pieces[-1].size == 1:
        pieces[-2] = np.concatenate([pieces[-2], pieces[-1]])
        pieces.pop()
    return pieces


def batch_indices(n_a, n_b, plan, epoch=0):
    """Paired row-index batches for one epoch.

    The longer stream is shuffled and chunked so each of its rows appears
    exactly once; a trailing 1-row chunk is merged into its predecessor.
    The shorter stream draws batches of matching size from a cursor over
    a permutation, reshuffling whenever too few rows remain.
    """
    if n_a < 2 or n_b < 2:
        raise DegenerateBatchError(f"both streams need >= 2 rows, got {n_a} and {n_b}")
    long_is_a = n_a >= n_b
    n_long, n_short = (n_a, n_b) if long_is_a else (n_b, n_a)
    long_rng = derive_rng(plan.seed, "batches", epoch, "long")
    short_rng = derive_rng(plan.seed, "batches", epoch, "short")
    long_chunks = _chunks(long_rng.permutation(n_long), plan.batch_size)
    if n_long == n_short:
        short_chunks = _chunks(short_rng.permutation(n_short), plan.batch_size)
    else:
        short_chunks = []
        perm, cursor = short_rng.permutation(n_short), 0
        for chunk in long_chunks:
            need = min(chunk.size, n_short)
            if n_short - cursor < need:
                perm, cursor = short_rng.permutation(n_short), 0
            short_chunks.append(perm[cursor:cursor + need])
            cursor += need
    pairs = list(zip(long_chunks, short_chunks))
    return pairs if long_is_a else [(s, l) for l, s in pairs]


def batches(a, b, plan, epoch=0):
    """Paired index batches for datasets ``a`` and ``b``."""
    return batch_indices(len(a), len(b), plan, epoch)
