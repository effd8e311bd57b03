"""Command-line entry point: ``tfw <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
Diagnostics go to standard error; results go to files under ``--out``
(``weave-inspect`` and ``gradcheck`` also print their table to standard output).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from contextlib import nullcontext
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

import tfw
from tfw.core.gradsuite import CASES, run_suite
from tfw.core.params import FORMAT_VERSION, load_params, save_params
from tfw.data.index import DatasetIndex, load_index, resolve_label_set
from tfw.data.synthetic import SyntheticSpec, gen_synthetic
from tfw.errors import ConfigError
from tfw.models.heads import build_model
from tfw.models.spec import ModelSpec
from tfw.models.weave import weave_table
from tfw.training import PRESETS, TrainConfig, cross_validate, evaluate, train

THREADS_ENV = "TFW_THREADS"


class UsageError(Exception):
    """Bad command line; reported with exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---------------------------------------------------------------- run configuration

@dataclass(frozen=True)
class RunConfig:
    """A JSON run file: dataset and output locations plus training options.

    Any key that is not one of the run fields below must be a training
    option (see :class:`TrainConfig`); ``recipe`` names a training preset the
    options are applied on top of. Relative paths resolve against the file's
    directory.
    """

    train: TrainConfig
    dataset: Path
    out: Path | None = None
    label_set: tuple[str, ...] | None = None
    k: int = 5
    recipe: str | None = None

    @classmethod
    def from_dict(cls, d: dict, base: Path = Path("."), seed: int | None = None,
                  label_preset: str | None = None) -> "RunConfig":
        own = {f.name for f in fields(cls)} - {"train"}
        train_keys = {f.name for f in fields(TrainConfig)}
        unknown = set(d) - own - train_keys
        if unknown:
            raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("run config needs a 'dataset' path")
        options = {k: v for k, v in d.items() if k in train_keys}
        if seed is not None:
            options["seed"] = seed
        recipe = d.get("recipe")
        if recipe is None:
            train_cfg = TrainConfig.from_dict(options)
        elif recipe in PRESETS:
            parsed = TrainConfig.from_dict(options)
            train_cfg = PRESETS[recipe](**{k: getattr(parsed, k) for k in options})
        else:
            raise ConfigError(f"unknown recipe {recipe!r}; expected one of {sorted(PRESETS)}")
        try:
            labels = resolve_label_set(label_preset or d.get("label_set"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        k = d.get("k", 5)
        if not isinstance(k, int) or k < 1:
            raise ConfigError(f"k must be a positive integer, got {k!r}")
        out = d.get("out")
        return cls(train=train_cfg, dataset=(base / d["dataset"]).resolve(),
                   out=None if out is None else (base / out).resolve(), label_set=labels, k=k,
                   recipe=recipe)

    @classmethod
    def load(cls, path, **kw) -> "RunConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(d, base=path.resolve().parent, **kw)

    def to_dict(self) -> dict:
        return {"train": self.train.to_dict(), "dataset": str(self.dataset),
                "label_set": None if self.label_set is None else list(self.label_set),
                "k": self.k, "recipe": self.recipe}

    def hash(self) -> str:
        return config_hash(self.to_dict())


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# ---------------------------------------------------------------- outputs

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def write_run_meta(out: Path, command: str, config: dict, seed: int) -> None:
    """Record what produced ``out``: no timestamps, so identical runs write identical files."""
    _write_json(out / "run_meta.json", {
        "command": command,
        "config_sha256": config_hash(config),
        "seed": seed,
        "versions": {"tfw": tfw.__version__, "params_format": FORMAT_VERSION, "numpy": np.__version__,
                     "python": platform.python_version()},
    })


def _out_dir(args, run: RunConfig | None = None) -> Path:
    out = args.out if args.out is not None else (run.out if run else None)
    if out is None:
        raise ConfigError("no output directory: pass --out or set 'out' in the config")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_run(args) -> RunConfig:
    return RunConfig.load(args.config, seed=args.seed, label_preset=args.preset)


def _dataset(run: RunConfig) -> DatasetIndex:
    index = load_index(run.dataset, run.label_set)
    if not len(index):
        raise ConfigError(f"dataset {run.dataset} has no clips")
    return index


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------- subcommands

def cmd_synth(args) -> None:
    path = Path(args.spec)
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"spec file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if args.seed is not None:
        d["seed"] = args.seed
    spec = SyntheticSpec.from_dict(d)
    out = _out_dir(args)
    index = gen_synthetic(spec, out)
    write_run_meta(out, "synth", spec.to_dict(), spec.seed)
    _log(f"wrote {len(index)} clips from {spec.n_patients} patients to {out}")


def cmd_train(args) -> None:
    run = _load_run(args)
    out = _out_dir(args, run)
    index = _dataset(run)
    result = train(run.train, index)
    save_params(result.store, out / "params.bin")
    _write_json(out / "model.json", {"model": result.model.spec.to_dict(), "label_set": list(index.label_set)})
    _write_json(out / "config.json", run.train.to_dict())
    _write_text(out / "history.csv", result.history_csv())
    if result.pretrained is not None:
        _write_text(out / "pretrain_history.csv", result.pretrained.history_csv())
    write_run_meta(out, "train", run.to_dict(), run.train.seed)
    last = result.history[-1]
    _log(f"trained {run.train.kind} for {len(result.history)} epochs: loss {last['loss']:.4f}, "
         f"train accuracy {last['accuracy']:.2f}%")


def cmd_eval(args) -> None:
    run = _load_run(args)
    out = _out_dir(args, run)
    params = Path(args.params)
    model_file = Path(args.model) if args.model else params.parent / "model.json"
    try:
        saved = json.loads(model_file.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"model description not found: {model_file} (pass --model)") from None
    spec = ModelSpec.from_dict(saved["model"])
    labels = run.label_set or tuple(saved["label_set"])
    index = load_index(run.dataset, labels)
    model = build_model(spec, dtype=run.train.np_dtype)
    load_params(model.store, params)
    report = evaluate(model, index, config=run.train, n_frames=run.train.n_frames, seed=run.train.seed)
    _write_text(out / "metrics.json", report.to_json() + "\n")
    _write_text(out / "confusion.csv", report.confusion_csv())
    write_run_meta(out, "eval", {**run.to_dict(), "model": spec.to_dict()}, run.train.seed)
    _log(f"accuracy {report.accuracy:.2f}%  weighted F1 {report.f1:.2f}% on {report.n_samples} clips")


def cmd_crossval(args) -> None:
    run = _load_run(args)
    out = _out_dir(args, run)
    index = _dataset(run)
    seed = run.train.seed

    def on_fold(i, result, report):
        _write_text(out / f"confusion_{i}.csv", report.confusion_csv())
        _write_text(out / f"history_{i}.csv", result.history_csv())
        _log(f"fold {i}: accuracy {report.accuracy:.2f}%  weighted F1 {report.f1:.2f}%")

    cv = cross_validate(run.train, index, k=run.k, seed=seed, on_fold=on_fold)
    _write_text(out / "folds.csv", cv.to_csv())
    _write_text(out / "crossval.json", cv.to_json() + "\n")
    write_run_meta(out, "crossval", run.to_dict(), seed)
    _log(f"mean over {cv.k} folds: accuracy {cv.mean['accuracy']:.2f}%  weighted F1 {cv.mean['f1']:.2f}%")


def format_weave_table(n: int, d: int, k: int) -> str:
    """One line per weaved row; frames are 1-based, offsets within a frame 0-based."""
    lines = []
    for r, row in enumerate(weave_table(n, d, k), start=1):
        lines.append(f"W_{r}: " + ",".join(f"(f{f + 1},{o})" for f, o in row))
    return "\n".join(lines)


def cmd_weave_inspect(args) -> None:
    if min(args.n, args.d, args.k) < 1:
        raise ConfigError("--n, --d and --k must be positive")
    print(format_weave_table(args.n, args.d, args.k))


def cmd_gradcheck(args) -> None:
    if args.seeds < 1:
        raise ConfigError("--seeds must be positive")
    unknown = set(args.layers or ()) - set(CASES)
    if unknown:
        raise ConfigError(f"unknown layers {sorted(unknown)}; expected some of {list(CASES)}")
    result = run_suite(args.seeds, args.layers)
    print(result.table())
    if args.out is not None:
        out = _out_dir(args)
        _write_json(out / "gradcheck.json", {"n_seeds": result.n_seeds, "tolerance": args.tol,
                                             "max_rel_error": result.max_error,
                                             "worst_seed": {k: v[0] for k, v in result.worst.items()}})
    _log(f"{len(result.max_error)} layers x {result.n_seeds} seeds in {result.seconds:.1f} s")
    if not result.passed(args.tol):
        failed = [k for k, v in result.max_error.items() if v >= args.tol]
        raise RuntimeError(f"gradient check above {args.tol:g} for: {', '.join(failed)}")


# ---------------------------------------------------------------- parser and entry points

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tfw", description="Temporal feature weaving: data, training and evaluation.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_flags(p, out_required=False):
        p.add_argument("--config", required=True, help="run configuration JSON")
        p.add_argument("--out", required=out_required, help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="overrides the config seed")
        p.add_argument("--preset", choices=("ned12", "ned16"), help="built-in label set")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--spec", required=True, help="synthetic dataset JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model on the whole dataset")
    run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate saved parameters on a dataset")
    run_flags(p)
    p.add_argument("--params", required=True, help="params.bin written by train")
    p.add_argument("--model", help="model.json (default: next to --params)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("crossval", help="patient-wise K-fold cross-validation")
    run_flags(p)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("weave-inspect", help="print where each weaved feature comes from")
    p.add_argument("--n", type=int, required=True, help="frames")
    p.add_argument("--d", type=int, required=True, help="feature length per frame")
    p.add_argument("--k", type=int, required=True, help="weaved rows")
    p.set_defaults(func=cmd_weave_inspect)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks of every layer")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--layers", nargs="+", help=f"subset of: {' '.join(CASES)}")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return threadpool_limits(limits=n)


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        with _thread_limit():
            args.func(args)
    except SystemExit as exc:  # --help
        return 0 if exc.code is None else int(exc.code)
    except UsageError as exc:
        _log(str(exc))
        return 1
    except ConfigError as exc:
        _log(f"tfw: config error: {exc}")
        return 1
    except Exception as exc:
        _log(f"tfw: {type(exc).__name__}: {exc}")
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
