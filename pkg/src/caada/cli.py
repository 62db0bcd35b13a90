"""Command-line entry point: ``caada <command> [flags]``.

Commands: gen, train, ablate, sweep, export-embeddings, gradcheck.
Exit codes: 0 success, 1 usage error, 2 data error, 3 divergence,
4 verification failure. ``CAADA_OUTPUT_ROOT`` picks the parent directory
for runs whose ``--out`` is omitted.
"""

import argparse
import hashlib
import json
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import verify
from .config import TrainConfig
from .data import DomainShift, GaussianMixtureSpec, gen_gaussian_domains, load_csv, save_csv
from .errors import CaadaError, ConfigError, DataError, DivergenceError, LabelError
from .model import embed, load_checkpoint, save_checkpoint
from .trainer import (SWEEPABLE, evaluate, metrics_csv, results_csv, run_ablation,
                      run_sweep, train_da, train_dg)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3, 4
OUTPUT_ROOT_ENV = "CAADA_OUTPUT_ROOT"
MANIFEST_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _seeds(text):
    # accepts "1,2,3" or "1..5"
    if ".." in text:
        lo, hi = text.split("..", 1)
        try:
            return list(range(int(lo), int(hi) + 1))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad seed range {text!r}")
    return _ints(text)


def _pairs(text):
    out = []
    for item in text.split(","):
        parts = item.split(":")
        try:
            out.append(tuple(float(p) for p in parts))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected x:y pairs, got {item!r}")
    return out


# -- config flags mirror TrainConfig field names ----------------------------

_CONFIG_FLAGS = {
    "gamma": float, "sigma": float, "learning_rate": float, "momentum": float,
    "weight_decay": float, "batch_size": int, "epochs": int, "bottleneck_dim": int,
    "extractor_hidden_dims": _ints, "discriminator_hidden_dim": int,
    "head_init_std": float, "seed": int, "target_fraction": float,
    "target_init": str,
}


def _add_config_flags(p):
    g = p.add_argument_group("training configuration")
    g.add_argument("--preset", choices=("desk", "full"), default="desk",
                   help="desk: small synthetic-scale defaults; full: full-scale defaults")
    for name, typ in _CONFIG_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    g.add_argument("--grl-ramp", action="store_true", default=None)
    g.add_argument("--eval-per-step", action="store_true", default=None)


def _config_from(args, mode):
    overrides = {k: getattr(args, k) for k in list(_CONFIG_FLAGS) + ["grl_ramp", "eval_per_step"]
                 if getattr(args, k, None) is not None}
    overrides["mode"] = mode
    if args.preset == "desk":
        return TrainConfig.desk(**overrides)
    return TrainConfig(**overrides)


def _add_data_flags(p, need_target=True):
    p.add_argument("--mode", choices=("da", "dg"), default="da")
    p.add_argument("--source", action="append", default=[], metavar="CSV",
                   help="labeled source domain CSV (repeat for DG)")
    p.add_argument("--target", metavar="CSV", required=need_target,
                   help="target CSV; for DG the held-out domain, read only after training")


def _load_sources(args):
    if not args.source:
        raise UsageError("at least one --source is required")
    sources = [load_csv(p) for p in args.source]
    if args.mode == "dg" and len(sources) < 2:
        raise UsageError("--mode dg needs at least two --source files")
    if args.mode == "da" and len(sources) != 1:
        raise UsageError("--mode da takes exactly one --source")
    return sources


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _manifest(command, args, config=None, extra=None):
    data = [{"role": "source", "path": str(p), "sha256": _sha256(p)}
            for p in getattr(args, "source", []) or []]
    if getattr(args, "target", None):
        data.append({"role": "target", "path": str(args.target),
                     "sha256": _sha256(args.target)})
    m = {"manifest_version": MANIFEST_VERSION, "command": command, "data": data}
    if config is not None:
        m["config"] = config.to_dict()
    if extra:
        m.update(extra)
    return json.dumps(m, indent=2, sort_keys=True) + "\n"


# -- output directories ------------------------------------------------------

def _resolve_out(args, command):
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
    key = hashlib.sha256(" ".join(sys.argv[1:]).encode()).hexdigest()[:10]
    return root / f"{command}-{key}"


class _OutputDir:
    """Write into a hidden temp directory, then rename into place."""

    def __init__(self, final):
        self.final = Path(final)

    def __enter__(self):
        if self.final.exists() and (not self.final.is_dir() or any(self.final.iterdir())):
            raise UsageError(f"output directory {self.final} already exists and is not empty")
        self.final.parent.mkdir(parents=True, exist_ok=True)
        self.tmp = Path(tempfile.mkdtemp(prefix=f".{self.final.name}.tmp-",
                                         dir=self.final.parent))
        return self.tmp

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and not issubclass(exc_type, DivergenceError):
            shutil.rmtree(self.tmp, ignore_errors=True)
            return False
        if self.final.exists():
            self.final.rmdir()
        os.replace(self.tmp, self.final)
        return False


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# -- commands ----------------------------------------------------------------

def cmd_gen(args):
    if args.classes < 2:
        raise UsageError("--classes must be >= 2")
    if args.per_class < 2:
        raise UsageError("--per-class must be >= 2 (covariance needs two samples)")
    if args.dim < 2:
        raise UsageError("--dim must be >= 2")
    centers = np.zeros((args.classes, args.dim))
    if args.centers:
        if len(args.centers) != args.classes:
            raise UsageError("--centers needs one point per class")
        for row, point in zip(centers, args.centers):
            if len(point) > args.dim:
                raise UsageError("--centers point has more coordinates than --dim")
            row[:len(point)] = point
    else:
        centers[:, 0] = args.spacing * np.arange(args.classes)
    var = np.ones(args.dim)
    var[:len(args.class_var)] = args.class_var[:args.dim]
    translations = args.translations or [(0.0, 0.0)] * len(args.domains)
    if len(translations) != len(args.domains):
        raise UsageError("--translations needs one x:y pair per domain")
    spec = GaussianMixtureSpec(centers, np.diag(var), per_class=args.per_class)
    shifts = [DomainShift(a, t, args.scale) for a, t in zip(args.domains, translations)]
    datasets = gen_gaussian_domains(spec, shifts, args.seed)
    out = _resolve_out(args, "gen")
    with _OutputDir(out) as tmp:
        for ds in datasets:
            save_csv(ds, tmp / f"{ds.name}.csv")
        gen = {k: v for k, v in vars(args).items() if k not in ("out", "func")}
        _write(tmp / "manifest.json", _manifest("gen", args, extra={"generator": gen}))
    print(f"wrote {len(datasets)} domain CSVs to {out}")
    return EXIT_OK


def cmd_train(args):
    config = _config_from(args, args.mode)
    sources = _load_sources(args)
    target = load_csv(args.target) if args.target else None
    if args.mode == "da" and target is None:
        raise UsageError("--mode da needs --target")
    out = _resolve_out(args, "train")
    with _OutputDir(out) as tmp:
        _write(tmp / "manifest.json", _manifest("train", args, config,
                                                {"wall_time": bool(args.wall_time)}))
        try:
            if args.mode == "da":
                model, history = train_da(config, sources[0], target)
            else:
                model, history = train_dg(config, sources)
        except DivergenceError as exc:
            _write(tmp / "metrics.csv", metrics_csv(exc.history, args.wall_time))
            raise
        _write(tmp / "metrics.csv", metrics_csv(history, args.wall_time))
        save_checkpoint(model, tmp / "model.ckpt")
        if target is not None and target.has_labels:
            acc = evaluate(model, target)
            line = f"final_target_accuracy={acc!r}"
        else:
            line = f"final_source_accuracy={history[-1].source_train_accuracy!r}"
        _write(tmp / "summary.txt", line + "\n")
    print(line)
    return EXIT_OK


def _study_inputs(args):
    config = _config_from(args, args.mode)
    sources = _load_sources(args)
    target = load_csv(args.target)
    if not target.has_labels:
        raise DataError("target CSV needs labels for evaluation")
    if not args.seeds:
        raise UsageError("--seeds must name at least one seed")
    source = sources[0] if args.mode == "da" else sources
    return config, source, target


def cmd_ablate(args):
    config, source, target = _study_inputs(args)
    rows = run_ablation(config, source, target, args.seeds, jobs=args.jobs)
    return _write_results("ablate", args, config, rows)


def cmd_sweep(args):
    config, source, target = _study_inputs(args)
    if not args.values:
        raise UsageError("--values must list at least one value")
    values = args.values
    if args.param == "bottleneck_dim":
        if any(v != int(v) for v in values):
            raise UsageError("bottleneck_dim values must be integers")
        values = [int(v) for v in values]
    rows = run_sweep(config, args.param, values, source, target, args.seeds, jobs=args.jobs)
    return _write_results("sweep", args, config, rows)


def _write_results(command, args, config, rows):
    out = _resolve_out(args, command)
    extra = {"seeds": args.seeds}
    if command == "sweep":
        extra.update(param=args.param, values=args.values)
    with _OutputDir(out) as tmp:
        _write(tmp / "manifest.json", _manifest(command, args, config, extra))
        _write(tmp / "results.csv", results_csv(rows))
    print(results_csv(rows), end="")
    return EXIT_OK


def cmd_export_embeddings(args):
    try:
        model = load_checkpoint(args.checkpoint)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint: {exc}") from None
    ds = load_csv(args.data)
    acts = embed(model, ds.features, args.layer)
    labels = ds.labels("eval") if ds.has_labels else None
    lines = [",".join([f"dim{i}" for i in range(acts.shape[1])] + ["label", "domain"])]
    for i, row in enumerate(acts):
        lab = "" if labels is None else str(int(labels[i]))
        lines.append(",".join([repr(float(v)) for v in row] + [lab, str(int(ds.domains[i]))]))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _write(out, "\n".join(lines) + "\n")
    print(f"wrote {acts.shape[0]} x {acts.shape[1]} {args.layer} activations to {out}")
    return EXIT_OK


def cmd_gradcheck(args):
    report = verify.gradcheck_report(eps=args.eps, seed=args.seed)
    failed = []
    for name, err in report.items():
        tol = verify.tolerance(name) if args.tol is None else args.tol
        ok = err < tol
        print(f"{name:14s} max_rel_err={err:.3e} {'PASS' if ok else 'FAIL'}")
        if not ok:
            failed.append(name)
    if failed:
        print("FAILED: " + ", ".join(failed))
        return EXIT_VERIFY
    return EXIT_OK


def build_parser():
    p = _Parser(prog="caada", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate rotated Gaussian-mixture domains as CSV")
    g.add_argument("--classes", type=int, default=2)
    g.add_argument("--per-class", type=int, default=100)
    g.add_argument("--dim", type=int, default=2)
    g.add_argument("--domains", type=_floats, default=[0.0, 50.0],
                   help="rotation angle in degrees per domain, e.g. 0,30")
    g.add_argument("--translations", type=_pairs, default=None,
                   help="x:y translation per domain, e.g. 0:0,1:-1")
    g.add_argument("--scale", type=float, default=1.0)
    g.add_argument("--spacing", type=float, default=4.0,
                   help="distance between consecutive class centers along f0")
    g.add_argument("--centers", type=_pairs, default=None,
                   help="explicit class centers, e.g. 0:0,4:0,0:4 (overrides --spacing)")
    g.add_argument("--class-var", type=_floats, default=[1.0, 0.3],
                   help="per-feature class variances (remaining features get 1)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a DA or DG model")
    _add_data_flags(t, need_target=False)
    _add_config_flags(t)
    t.add_argument("--wall-time", action="store_true",
                   help="fill the wall_ms metrics column (breaks byte-identical reruns)")
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    for name, fn, helptext in (("ablate", cmd_ablate, "run the four ablation modes"),
                               ("sweep", cmd_sweep, "sweep target_fraction or bottleneck_dim")):
        s = sub.add_parser(name, help=helptext)
        _add_data_flags(s)
        _add_config_flags(s)
        s.add_argument("--seeds", type=_seeds, default=[1, 2, 3, 4, 5])
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--out")
        if name == "sweep":
            s.add_argument("--param", choices=SWEEPABLE, required=True)
            s.add_argument("--values", type=_floats, required=True)
        s.set_defaults(func=fn)

    e = sub.add_parser("export-embeddings", help="dump fcb or fc8 activations as CSV")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--layer", choices=("fcb", "fc8"), default="fcb")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_export_embeddings)

    c = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    c.add_argument("--eps", type=float, default=1e-5, help="finite-difference step")
    c.add_argument("--tol", type=float, default=None,
                   help="relative error bound for every component "
                        "(default: 1e-5 for kernels, 1e-4 for the composite model)")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LabelError, CaadaError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
