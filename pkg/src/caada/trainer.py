"""Training runs, evaluation, ablations and sweeps."""

import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .autodiff import SGD
from .config import TrainConfig
from .data import BatchPlan, batches, derive_seed, dg_split, subsample_target
from .errors import CaadaError, ConfigError, DivergenceError, EvaluationError, NonFiniteError
from .model import backward_and_step, build, forward_da, forward_dg, predict

DIVERGENCE_PATIENCE = 3
DG_TRAIN_FRACTION = 0.7

METRICS_HEADER = "epoch,step,loss_cls,loss_dm,loss_adv,loss_total,src_acc,tgt_acc,wall_ms"


@dataclass
class MetricsRecord:
    epoch: int
    step: int
    loss_classification: float
    loss_discrepancy: float
    loss_adversarial: float
    loss_combined: float
    source_train_accuracy: float
    target_accuracy: float
    wall_time_ms: float = None


@dataclass
class TrainResult:
    model: object
    history: list

    def __iter__(self):
        return iter((self.model, self.history))


def _fmt(v):
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def metrics_csv(history, include_wall_time=False):
    """Metrics as CSV text. Wall time is left blank unless requested so reruns compare byte for byte."""
    buf = io.StringIO()
    buf.write(METRICS_HEADER + "\n")
    for r in history:
        row = [r.epoch, r.step, r.loss_classification, r.loss_discrepancy,
               r.loss_adversarial, r.loss_combined, r.source_train_accuracy,
               r.target_accuracy, r.wall_time_ms if include_wall_time else None]
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def write_metrics_csv(history, path, include_wall_time=False):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_csv(history, include_wall_time))


def evaluate(model, dataset, extractor=None):
    """Fraction of samples whose predicted class equals the label.

    Uses the model's evaluation path unless ``extractor`` is given.
    """
    if not dataset.has_labels:
        raise EvaluationError(f"dataset {dataset.name!r} has no labels to evaluate against")
    pred = predict(model, dataset.features, extractor)
    return float(np.mean(pred == dataset.labels("eval")))


def _make_optimizer(config):
    return SGD(config.learning_rate, config.momentum, config.weight_decay)


def _run(config, stream_a, stream_b, *, labeled_b, eval_set, num_classes):
    model = build(config, stream_a.dim, num_classes)
    opt = _make_optimizer(config)
    plan = BatchPlan(config.batch_size, derive_seed(config.seed, "batching"))
    x_a = stream_a.features
    y_a = stream_a.labels("train")
    x_b = stream_b.features
    y_b = stream_b.labels("train") if labeled_b else None

    steps_per_epoch = len(batches(stream_a, stream_b, plan, 0))
    total_steps = steps_per_epoch * config.epochs
    history = []
    step = 0
    bad_run = 0
    t0 = time.perf_counter()

    def record(epoch, sums, count):
        mean = sums / max(count, 1)
        history.append(MetricsRecord(
            epoch=epoch, step=step,
            loss_classification=float(mean[0]), loss_discrepancy=float(mean[1]),
            loss_adversarial=float(mean[2]), loss_combined=float(mean[3]),
            source_train_accuracy=evaluate(model, stream_a, model.source_extractor),
            target_accuracy=evaluate(model, eval_set) if eval_set is not None else None,
            wall_time_ms=(time.perf_counter() - t0) * 1000.0))

    for epoch in range(config.epochs):
        sums = np.zeros(4)
        count = 0
        for ia, ib in batches(stream_a, stream_b, plan, epoch):
            if config.grl_ramp:
                model.grl.strength = config.gamma * min(1.0, step / max(total_steps, 1))
            try:
                with np.errstate(over="raise", invalid="raise"):
                    if labeled_b:
                        out = forward_dg(model, (x_a[ia], y_a[ia]), (x_b[ib], y_b[ib]))
                    else:
                        out = forward_da(model, x_a[ia], y_a[ia], x_b[ib])
                    t = out.losses
                    vals = [t.classification, t.discrepancy, t.adversarial, t.combined]
                    if not np.all(np.isfinite(vals)):
                        raise NonFiniteError("non-finite loss")
                    backward_and_step(model, out, opt)
            except (NonFiniteError, FloatingPointError):
                model.zero_grad()
                model._pending = None
                bad_run += 1
                step += 1
                if bad_run >= DIVERGENCE_PATIENCE:
                    raise DivergenceError(
                        f"non-finite loss for {bad_run} consecutive steps (step {step})",
                        step=step, history=history) from None
                continue
            bad_run = 0
            step += 1
            sums += vals
            count += 1
            if config.eval_per_step:
                record(epoch, np.array(vals), 1)
        if not config.eval_per_step:
            record(epoch, sums, count)
    return TrainResult(model, history)


def _num_classes(*datasets):
    ks = [d.num_classes for d in datasets if d is not None and d.has_labels]
    return max(ks)


def train_da(config, source, target, evaluate_target=True):
    """Adapt from labeled ``source`` to unlabeled ``target``.

    Target labels are read only by :func:`evaluate`, for the per-epoch
    target accuracy; pass ``evaluate_target=False`` to skip even that.
    """
    if config.mode != "da":
        raise ConfigError("train_da requires mode='da'")
    if not source.has_labels:
        raise ConfigError("source dataset must be labeled")
    if source.dim != target.dim:
        raise ConfigError(f"feature dims differ: {source.dim} vs {target.dim}")
    if config.target_fraction < 1.0:
        target = subsample_target(target, config.target_fraction,
                                  derive_seed(config.seed, "target_fraction"))
    eval_set = target if evaluate_target and target.has_labels else None
    k = source.num_classes
    return _run(config, source, target, labeled_b=False, eval_set=eval_set, num_classes=k)


def train_dg(config, sources):
    """Train on pooled source domains split 70/30 into two labeled streams.

    The recorded ``target_accuracy`` is accuracy on the 30% stream; no
    held-out domain is ever passed in.
    """
    if config.mode != "dg":
        raise ConfigError("train_dg requires mode='dg'")
    if len(sources) < 2:
        raise ConfigError("domain generalization needs at least 2 source domains")
    if not all(s.has_labels for s in sources):
        raise ConfigError("all DG source domains must be labeled")
    dims = {s.dim for s in sources}
    if len(dims) != 1:
        raise ConfigError(f"source feature dims differ: {sorted(dims)}")
    a, b = dg_split(sources, DG_TRAIN_FRACTION, derive_seed(config.seed, "split"))
    k = _num_classes(*sources)
    return _run(config, a, b, labeled_b=True, eval_set=b, num_classes=k)


# -- ablations and sweeps ---------------------------------------------------

ABLATION_MODES = {
    "source_only": dict(gamma=0.0, sigma=0.0),
    "coral_only": dict(gamma=0.0),
    "adversarial_only": dict(sigma=0.0),
    "combined": {},
}


@dataclass
class ResultRow:
    key: object
    mean: float
    std: float
    accuracies: list


def _train_and_score(config, source, target):
    if config.mode == "da":
        model, _ = train_da(config, source, target, evaluate_target=False)
        return evaluate(model, target)
    model, _ = train_dg(config, source)
    return evaluate(model, target)


def _parallel(jobs, fn, tasks):
    if jobs <= 1:
        return [fn(*t) for t in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda t: fn(*t), tasks))


def _copy_target(target):
    # each run gets its own handle so read counters are not shared across threads
    return target.take(np.arange(len(target)))


def _rows(keys, configs_per_key, source, target, jobs):
    tasks = [(c, source, _copy_target(target)) for cs in configs_per_key for c in cs]
    accs = _parallel(jobs, _train_and_score, tasks)
    rows, i = [], 0
    for key, cs in zip(keys, configs_per_key):
        a = accs[i:i + len(cs)]
        i += len(cs)
        rows.append(ResultRow(key, float(np.mean(a)), float(np.std(a)), a))
    return rows


def run_ablation(config, source, target, seeds, jobs=1):
    """Mean and std of target accuracy per ablation mode over ``seeds``.

    In DG mode ``source`` is the list of source domains and ``target`` the
    held-out domain, used only after training.
    """
    seeds = list(seeds)
    if len(seeds) < 1:
        raise ConfigError("need at least one seed")
    keys = list(ABLATION_MODES)
    configs = [[config.with_(seed=s, **ABLATION_MODES[k]) for s in seeds] for k in keys]
    try:
        return _rows(keys, configs, source, target, jobs)
    except CaadaError as exc:
        raise type(exc)(f"ablation: {exc}") from exc


SWEEPABLE = ("target_fraction", "bottleneck_dim")


def run_sweep(config, parameter, values, source, target, seeds, jobs=1):
    if parameter not in SWEEPABLE:
        raise ConfigError(f"can only sweep {SWEEPABLE}, got {parameter!r}")
    seeds = list(seeds)
    if not seeds:
        raise ConfigError("need at least one seed")
    values = list(values)
    configs = [[config.with_(seed=s, **{parameter: v}) for s in seeds] for v in values]
    return _rows(values, configs, source, target, jobs)


def results_csv(rows):
    buf = io.StringIO()
    buf.write("mode_or_value,mean_acc,std_acc\n")
    for r in rows:
        key = r.key if isinstance(r.key, str) else _fmt(r.key)
        buf.write(f"{key},{_fmt(r.mean)},{_fmt(r.std)}\n")
    return buf.getvalue()


def config_fields():
    return [f.name for f in fields(TrainConfig)]
