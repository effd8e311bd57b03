"""Patient-wise K-fold cross-validation."""
from __future__ import annotations

from collections.abc import Callable

import numpy as np

from tfw.data.folds import FoldPlan, check_no_leakage, patient_kfold
from tfw.data.index import DatasetIndex
from tfw.errors import FoldError, LeakageError
from tfw.training.config import TrainConfig
from tfw.training.metrics import CrossValReport, MetricsReport
from tfw.training.trainer import TrainResult, evaluate, predict, train

Splitter = Callable[[DatasetIndex, int, int], "FoldPlan | list"]


def _folds(dataset: DatasetIndex, k: int, seed: int, splitter: Splitter | None):
    """(train, test) pairs from a FoldPlan splitter or one returning the pairs directly."""
    plan = (splitter or patient_kfold)(dataset, k, seed)
    return list(plan.folds(dataset)) if isinstance(plan, FoldPlan) else list(plan)


def _eval_kwargs(config: TrainConfig, seed: int) -> dict:
    return dict(config=config, n_frames=config.n_frames, seed=seed)


def cross_validate(config: TrainConfig, dataset: DatasetIndex, k: int = 5, seed: int = 0,
                   splitter: Splitter | None = None, on_fold=None) -> CrossValReport:
    """Train on the other folds' patients, evaluate on the held-out fold, aggregate.

    Every fold is checked for patient leakage before training. Errors are
    re-raised as :class:`FoldError` carrying the fold index. ``on_fold(i,
    result, report)`` is called after each fold.
    """
    reports = []
    for i, (tr, te) in enumerate(_folds(dataset, k, seed, splitter)):
        try:
            check_no_leakage(tr, te)
            result = train(config, tr)
            report = evaluate(result.model, te, **_eval_kwargs(config, seed))
        except LeakageError:
            raise
        except Exception as exc:
            raise FoldError(i, exc) from exc
        reports.append(report)
        if on_fold is not None:
            on_fold(i, result, report)
    return CrossValReport(reports)


def compare_models(configs: dict[str, TrainConfig], classifier: TrainConfig, dataset: DatasetIndex,
                   k: int = 5, seed: int = 0, splitter: Splitter | None = None, folds: list[int] | None = None,
                   vote_frames: int | None = None):
    """Cross-validate several models, training the classifier once per fold.

    The classifier's backbone initializes every sequence config. Its own
    scores appear under ``"image"`` and, when ``vote_frames`` is given, as
    ``"mean_vote"``. Returns ({name: CrossValReport}, {name: [per-fold
    clip predictions]}, fold test sets).
    """
    pairs = _folds(dataset, k, seed, splitter)
    chosen = range(len(pairs)) if folds is None else folds
    reports: dict[str, list[MetricsReport]] = {}
    preds: dict[str, list[np.ndarray]] = {}
    tests = []

    def record(name, model, te, **kw):
        p = predict(model, te, **kw).argmax(axis=1)
        preds.setdefault(name, []).append(p)
        reports.setdefault(name, []).append(MetricsReport.from_predictions(p, te.labels(), te.n_classes,
                                                                           te.label_set))

    for i in chosen:
        tr, te = pairs[i]
        try:
            check_no_leakage(tr, te)
            base: TrainResult = train(classifier, tr)
            record("image", base.model, te, **_eval_kwargs(classifier, seed))
            if vote_frames:
                record("mean_vote", base.model, te, vote=True, **{**_eval_kwargs(classifier, seed),
                                                                  "n_frames": vote_frames})
            for name, cfg in configs.items():
                result = train(cfg, tr, init=base if cfg.sequence else None)
                record(name, result.model, te, **_eval_kwargs(cfg, seed))
        except LeakageError:
            raise
        except Exception as exc:
            raise FoldError(i, exc) from exc
        tests.append(te)
    return {n: CrossValReport(r) for n, r in reports.items()}, preds, tests
