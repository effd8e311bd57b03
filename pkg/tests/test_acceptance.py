"""Acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per criterion.

Tolerances and thresholds are pinned here. The temporal-signature experiment
(criterion 4) trains nine models and takes several minutes on one core.
"""
import itertools
import json
import time

import numpy as np
import pytest

from tfw.cli import run
from tfw.core import count_macs
from tfw.core.gradsuite import CASES, run_suite
from tfw.data import SyntheticSpec, check_no_leakage, gen_synthetic, load_index
from tfw.errors import LeakageError
from tfw.models import BackboneSpec, HeadSpec, ModelSpec, build_model, param_count, unweave, weave
from tfw.training import MetricsReport, TrainConfig, cross_validate, temporal_signature, weighted_prf
from tfw.training.experiment import MAX_IMAGE_AMBIGUOUS_ACC, MIN_TFW_F1_GAIN

from oracles import clipwise_splitter, fraction_prf, weave_loop

GRAD_TOL = 1e-4
GRAD_SEEDS = 20
GRAD_BUDGET_S = 60.0
WEAVE_CASES = 1000
EXPERIMENT_BUDGET_S = 600.0
METRIC_SETS = 100
FIXTURE_TOL = 0.01
ROUND_TRIP_SPECS = 10
REQUIRED_LAYERS = {"dense", "conv", "relu", "avgpool", "maxpool", "meanpool", "dropout_off", "gru", "softmax_ce",
                   "attention"}


# ---------------------------------------------------------------- 1. gradients

def test_c1_gradient_suite(criterion):
    result = run_suite(GRAD_SEEDS)
    worst = max(result.max_error.values())
    ok = (REQUIRED_LAYERS <= set(result.max_error) and result.passed(GRAD_TOL)
          and result.seconds < GRAD_BUDGET_S)
    print(result.table())
    criterion(ok, f"{len(CASES)} layers x {GRAD_SEEDS} seeds, worst rel err {worst:.2e} "
                  f"(< {GRAD_TOL:g}), {result.seconds:.1f} s (< {GRAD_BUDGET_S:g} s)")
    assert ok


# ---------------------------------------------------------------- 2. weave algebra

def test_c2_weave_algebra(criterion):
    rng = np.random.default_rng(2024)
    failures = 0
    for _ in range(WEAVE_CASES):
        n = int(rng.integers(1, 9))
        d = int(rng.integers(1, 65))
        k = int(rng.choice([v for v in range(1, d + 1) if d % v == 0]))
        x = rng.normal(size=(n, d))
        w = weave(x, k)
        failures += not np.array_equal(unweave(w, n, d, k), x)
        failures += not np.array_equal(np.sort(w, axis=None), np.sort(x, axis=None))
        failures += not np.array_equal(w, weave_loop(x.tolist(), k))
        c = int(rng.integers(1, 64 // n + 1))
        y = rng.normal(size=(n, n * c))
        failures += not np.array_equal(weave(weave(y, n), n), y)
    example = np.array([np.arange(8) + 10 * f for f in range(4)], dtype=float)
    expected = [[f * 10 + o for f in range(4) for o in (2 * r, 2 * r + 1)] for r in range(4)]
    example_ok = np.array_equal(weave(example, 4), expected)
    ok = failures == 0 and example_ok
    criterion(ok, f"{WEAVE_CASES} random cases, {failures} failed checks; worked example "
                  f"{'exact' if example_ok else 'MISMATCH'}")
    assert ok


# ---------------------------------------------------------------- 3. parameter parity and zero MACs

def test_c3_parameter_parity_and_zero_macs(criterion):
    mismatches, mac_mismatches, grid = [], [], 0
    rng = np.random.default_rng(3)
    for d, n, hidden, classes in itertools.product((8, 16, 32), (1, 2, 4, 8), (3, 16), (2, 12)):
        backbone = BackboneSpec(input_size=8, stem_channels=4, stages=((4, 1, False), (8, 1, True)), feature_dim=d)
        models = {kind: build_model(ModelSpec(HeadSpec(kind, classes, n_frames=n, hidden=hidden), backbone))
                  for kind in ("gru", "gru_tfw")}
        grid += 1
        if param_count(models["gru"]) != param_count(models["gru_tfw"]):
            mismatches.append((d, n, hidden, classes))
        feats = rng.normal(size=(2, n, d))
        macs = {}
        for kind, m in models.items():
            with count_macs() as counter:
                m.head_logits(feats)
            m.clear()
            macs[kind] = counter.total
        if macs["gru"] != macs["gru_tfw"]:
            mac_mismatches.append((d, n, hidden, classes))
    with count_macs() as counter:
        weave(rng.normal(size=(4, 64)), 4)
    ok = not mismatches and not mac_mismatches and counter.total == 0
    criterion(ok, f"{grid} configs: {len(mismatches)} parameter mismatches, {len(mac_mismatches)} head MAC "
                  f"mismatches; weave MACs = {counter.total}")
    assert ok


# ---------------------------------------------------------------- 4-5. temporal experiment and leakage

@pytest.fixture(scope="module")
def experiment(tmp_path_factory):
    spec = SyntheticSpec(seed=0)
    root = tmp_path_factory.mktemp("temporal")
    gen_synthetic(spec, root)
    index = load_index(root)
    start = time.perf_counter()
    result = temporal_signature(index, spec, seeds=(0, 1, 2), epochs=10, cycle_epochs=10)
    return spec, index, result, time.perf_counter() - start


def test_c4_temporal_signature(experiment, criterion):
    spec, _, result, seconds = experiment
    print(result.table())
    checks = result.checks()
    ok = all(checks.values()) and seconds < EXPERIMENT_BUDGET_S
    criterion(ok, f"median image ambiguous acc {result.median('image_ambiguous_acc'):.1f} "
                  f"(<= {MAX_IMAGE_AMBIGUOUS_ACC:g}), F1 image {result.median('image_f1'):.2f} / "
                  f"gru_tfw {result.median('tfw_f1'):.2f} (gain >= {MIN_TFW_F1_GAIN:g}) / "
                  f"gru {result.median('gru_f1'):.2f}, oracle {result.median('oracle_ambiguous_acc'):.1f}, "
                  f"{seconds:.0f} s (< {EXPERIMENT_BUDGET_S:g} s)")
    assert ok, checks


def test_c5_patient_leakage(experiment, criterion):
    _, index, result, _ = experiment
    patients = set(index.patients())
    n_folds = 0
    for plan in result.plans:
        tests = [set(t) for t in plan.test_patients]
        assert set().union(*tests) == patients
        assert sum(map(len, tests)) == len(patients)
        for tr, te in plan.folds(index):
            check_no_leakage(tr, te)
            assert not {c.patient_id for c in tr} & {c.patient_id for c in te}
            n_folds += 1
    cfg = TrainConfig(backbone=BackboneSpec(input_size=32, stem_channels=4, stages=((4, 1, False),), feature_dim=8),
                      epochs=1)
    caught = False
    try:
        cross_validate(cfg, index, 5, 0, splitter=clipwise_splitter)
    except LeakageError:
        caught = True
    criterion(caught, f"{len(result.plans)} plans, {n_folds} folds leak-free; clip-wise splitter "
                      f"{'caught' if caught else 'NOT caught'}")
    assert caught


# ---------------------------------------------------------------- 6. metrics convention

def test_c6_metrics_convention(criterion):
    rng = np.random.default_rng(6)
    unequal = 0
    for _ in range(METRIC_SETS):
        c = int(rng.integers(2, 13))
        n = int(rng.integers(1, 300))
        labels, preds = rng.integers(0, c, n), rng.integers(0, c, n)
        if rng.random() < 0.5:  # mostly-correct predictions too
            keep = rng.random(n) < 0.8
            preds = np.where(keep, labels, preds)
        report = MetricsReport.from_predictions(preds, labels, c)
        unequal += report.accuracy != report.recall
    cm = [[8, 2], [3, 7]]
    got, want = weighted_prf(cm), fraction_prf(cm)
    fixture_ok = all(abs(g - w) <= FIXTURE_TOL for g, w in zip(got, want))
    ok = unequal == 0 and fixture_ok
    criterion(ok, f"accuracy == weighted recall on {METRIC_SETS - unequal}/{METRIC_SETS} sets; fixture "
                  f"P/R/F1 {got[0]:.4f}/{got[1]:.4f}/{got[2]:.4f} vs exact {want[0]:.4f}/{want[1]:.4f}/"
                  f"{want[2]:.4f} (tol {FIXTURE_TOL})")
    assert ok


# ---------------------------------------------------------------- 7. crossval determinism

def test_c7_crossval_cli_determinism(tmp_path, criterion):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"n_classes": 4, "n_patients": 5, "clips_per_patient": 2, "frames_per_clip": 8,
                                "image_size": 16, "seed": 7}))
    assert run(["synth", "--spec", str(spec), "--out", str(tmp_path / "data")]) == 0
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "dataset": "data", "recipe": "gru_tfw", "epochs": 2, "k": 5, "seed": 3, "n_frames": 4,
        "pretrain": {"kind": "image", "epochs": 2, "seed": 3,
                     "backbone": {"input_size": 16, "stem_channels": 4, "stages": [[4, 1, False]], "feature_dim": 8}},
        "backbone": {"input_size": 16, "stem_channels": 4, "stages": [[4, 1, False]], "feature_dim": 8},
    }))
    codes, outputs = [], []
    for name in ("a", "b"):
        codes.append(run(["crossval", "--config", str(config), "--out", str(tmp_path / name)]))
        outputs.append((tmp_path / name / "folds.csv").read_bytes())
    rows = outputs[0].decode().splitlines()
    ok = codes == [0, 0] and outputs[0] == outputs[1] and len(rows) == 1 + 5 + 1
    criterion(ok, f"exit codes {codes}; folds.csv {len(rows) - 1} rows, "
                  f"{'byte-identical' if outputs[0] == outputs[1] else 'DIFFERENT'}")
    assert ok


# ---------------------------------------------------------------- 8. data round trip

def test_c8_data_round_trip(tmp_path, criterion):
    rng = np.random.default_rng(8)
    equal = 0
    for i in range(ROUND_TRIP_SPECS):
        spec = SyntheticSpec(n_classes=int(rng.integers(2, 7)), n_patients=int(rng.integers(1, 5)),
                             clips_per_patient=int(rng.integers(1, 3)), frames_per_clip=int(rng.integers(8, 12)),
                             image_size=int(rng.integers(8, 17)), noise_level=float(rng.uniform(0, 0.1)),
                             seed=int(rng.integers(2**31)))
        declared = gen_synthetic(spec, tmp_path / f"spec{i}")
        equal += load_index(tmp_path / f"spec{i}") == declared
    ok = equal == ROUND_TRIP_SPECS
    criterion(ok, f"{equal}/{ROUND_TRIP_SPECS} random specs reload to the declared index")
    assert ok
