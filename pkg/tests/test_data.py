import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tfw.data import (
    NED12,
    AugmentSpec,
    FrameSequence,
    SyntheticSpec,
    augment_sequence,
    auto_contrast,
    check_no_leakage,
    gen_synthetic,
    load_index,
    load_sequence,
    patient_holdout,
    patient_kfold,
    read_frame,
    render_frame,
    resize_then_crop,
    rotate,
    sample_consecutive,
    sample_spaced,
    template_oracle,
    write_manifest,
)
from tfw.data.index import ClipRecord, DatasetIndex, write_frame
from tfw.data.synthetic import class_models, patient_jitter
from tfw.errors import ConfigError, LeakageError

# chi-square critical value, 6 degrees of freedom, upper tail 0.001
CHI2_6DF_999 = 22.4577


def make_tree(root, layout, size=4):
    """layout: {(patient, viewpoint, clip): n_frames}"""
    for (p, v, c), n in layout.items():
        d = root / p / v / c
        d.mkdir(parents=True)
        for i in range(n):
            write_frame(d / f"frame_{i:04d}.png", np.full((size, size), i / 10))
    return root


def fake_index(n_patients, clips_each=2, label_set=("A", "B")):
    clips = [ClipRecord(f"P{p:03d}", label_set[c % len(label_set)], f"c{c}", ("x",) * 8)
             for p in range(n_patients) for c in range(clips_each)]
    return DatasetIndex(clips, label_set)


# ---------------------------------------------------------------- index

def test_load_single_clip(tmp_path):
    make_tree(tmp_path, {("P1", "APICAL_5C", "c1"): 5})
    idx = load_index(tmp_path)
    assert len(idx) == 1 and len(idx.clips[0].frame_paths) == 5
    assert [p.name for p in idx.clips[0].frame_paths] == [f"frame_{i:04d}.png" for i in range(5)]


def test_load_with_preset_label_set(tmp_path):
    make_tree(tmp_path, {("P1", "APICAL_5C", "c1"): 2})
    idx = load_index(tmp_path, "ned12")
    assert idx.label_set == NED12 and idx.labels().tolist() == [1]


def test_shuffled_manifest_gives_same_index(tmp_path):
    make_tree(tmp_path, {("P2", "A", "c1"): 3, ("P1", "B", "c2"): 2, ("P1", "A", "c3"): 4})
    sorted_idx = load_index(tmp_path)
    write_manifest(sorted_idx, tmp_path)
    lines = (tmp_path / "manifest.csv").read_text().splitlines()
    rng = np.random.default_rng(0)
    body = [lines[1:][i] for i in rng.permutation(len(lines) - 1)]
    (tmp_path / "manifest.csv").write_text("\n".join([lines[0], *body]) + "\n")
    assert load_index(tmp_path) == sorted_idx
    assert load_index(tmp_path / "manifest.csv") == sorted_idx


def test_manifest_format(tmp_path):
    make_tree(tmp_path, {("P1", "A", "c1"): 2})
    write_manifest(load_index(tmp_path), tmp_path)
    raw = (tmp_path / "manifest.csv").read_bytes()
    assert b"\r\n" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["patient_id", "viewpoint", "clip_id", "frame_index", "path"]
    assert rows[2] == ["P1", "A", "c1", "1", "P1/A/c1/frame_0001.png"]


def test_manifest_wins_over_tree(tmp_path):
    make_tree(tmp_path, {("P1", "A", "c1"): 3, ("P2", "A", "c2"): 3})
    idx = load_index(tmp_path)
    write_manifest(idx.subset(["P1"]), tmp_path)
    assert load_index(tmp_path).patients() == ["P1"]


def test_empty_clip_warns_and_is_skipped(tmp_path):
    make_tree(tmp_path, {("P1", "A", "c1"): 2, ("P1", "A", "empty"): 0})
    with pytest.warns(UserWarning, match="empty"):
        idx = load_index(tmp_path)
    assert [c.clip_id for c in idx] == ["c1"]


def test_unknown_viewpoint_lists_valid_labels(tmp_path):
    make_tree(tmp_path, {("P1", "NOT_A_VIEW", "c1"): 1})
    with pytest.raises(ValueError, match="APICAL_4C_LVRV.*PSAX_AV"):
        load_index(tmp_path, "ned12")


def test_duplicate_patient_clip_is_error(tmp_path):
    make_tree(tmp_path, {("P1", "A", "c1"): 1, ("P1", "B", "c1"): 1})
    with pytest.raises(ValueError, match="duplicate clip"):
        load_index(tmp_path)


def test_frames_are_unit_interval_float(tmp_path):
    make_tree(tmp_path, {("P1", "A", "c1"): 3})
    idx = load_index(tmp_path)
    f = idx.frames(idx.clips[0])
    assert f.dtype == np.float32 and f.shape == (3, 4, 4)
    np.testing.assert_allclose(f[:, 0, 0], [0.0, 26 / 255, 51 / 255])


def test_png_is_8bit_grayscale(tmp_path):
    write_frame(tmp_path / "f.png", np.linspace(0, 1, 16).reshape(4, 4))
    from PIL import Image
    with Image.open(tmp_path / "f.png") as im:
        assert im.mode == "L"
    assert read_frame(tmp_path / "f.png").max() == 1.0


# ---------------------------------------------------------------- sampling

def test_consecutive_only_start():
    assert sample_consecutive(4, 4, np.random.default_rng(0)) == [0, 1, 2, 3]


def test_consecutive_contiguous():
    rng = np.random.default_rng(1)
    for _ in range(100):
        idx = sample_consecutive(10, 4, rng)
        assert 0 <= idx[0] <= 6 and idx == list(range(idx[0], idx[0] + 4))


def test_consecutive_start_is_uniform():
    rng = np.random.default_rng(2)
    counts = np.bincount([sample_consecutive(10, 4, rng)[0] for _ in range(10_000)], minlength=7)
    expected = 10_000 / 7
    assert ((counts - expected) ** 2 / expected).sum() < CHI2_6DF_999


def test_short_clip_error_names_clip_and_lengths():
    clip = ClipRecord("P7", "A", "c3", ("x",) * 3)
    with pytest.raises(ValueError, match=r"P7/c3 has 3 frames.*4"):
        sample_consecutive(clip, 4, np.random.default_rng(0))
    with pytest.raises(ValueError, match="3 frames"):
        sample_spaced(clip, 4)


@pytest.mark.parametrize("length,n,expected", [(10, 4, [0, 3, 6, 9]), (4, 4, [0, 1, 2, 3]),
                                               (30, 4, [0, 10, 19, 29]), (7, 1, [0])])
def test_spaced_examples(length, n, expected):
    assert sample_spaced(length, n) == expected


@settings(max_examples=300, deadline=None)
@given(st.integers(2, 200), st.integers(2, 32))
def test_spaced_properties(length, n):
    if n > length:
        return
    idx = sample_spaced(length, n)
    assert idx[0] == 0 and idx[-1] == length - 1
    assert all(b > a for a, b in zip(idx, idx[1:]))
    # round half up of i * (L - 1) / (n - 1)
    assert idx == [math.floor(i * (length - 1) / (n - 1) + 0.5 + 1e-12) for i in range(n)]


def test_load_sequence(tmp_path):
    make_tree(tmp_path, {("P1", "A", "c1"): 10})
    idx = load_index(tmp_path)
    seq = load_sequence(idx, idx.clips[0], 4, "spaced", np.random.default_rng(0))
    assert seq.indices == (0, 3, 6, 9) and seq.label == 0 and seq.sampling_mode == "spaced"
    np.testing.assert_allclose(seq.frames[:, 0, 0], np.rint(np.array([0, 3, 6, 9]) / 10 * 255) / 255, atol=1e-7)


# ---------------------------------------------------------------- augmentation

def test_identity_augmentation():
    x = np.random.default_rng(0).random((3, 8, 8))
    np.testing.assert_array_equal(augment_sequence(x, AugmentSpec(), np.random.default_rng(1)), x)


def test_rotate_90_hand_computed():
    pattern = np.array([[1, 2, 3], [4, 5, 6], [7, 8, 9]], dtype=float)
    np.testing.assert_allclose(rotate(pattern, 90), [[3, 6, 9], [2, 5, 8], [1, 4, 7]], atol=1e-9)


def test_rotation_zero_fills_corners():
    # the 45 degree source of a 7x7 corner lies 3*sqrt(2) - 3 > 1 pixel outside the frame
    out = rotate(np.ones((7, 7)), 45)
    assert out[0, 0] == 0 and out[3, 3] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sequence_wide_transform(seed):
    rng = np.random.default_rng(seed)
    frame = rng.random((8, 8))
    spec = AugmentSpec(rotation_max_deg=25, auto_contrast=True, scale_range=(0.9, 1.1), shift_range=0.1,
                       hflip_prob=0.5, vflip_prob=0.5)
    seq = FrameSequence(np.stack([frame, frame]), ClipRecord("P", "A", "c", ("x",) * 2), 0, "consecutive", (0, 1))
    out = augment_sequence(seq, spec, rng)
    assert isinstance(out, FrameSequence)
    np.testing.assert_array_equal(out.frames[0], out.frames[1])


def test_augment_spec_validation():
    with pytest.raises(ConfigError):
        AugmentSpec(rotation_max_deg=360)
    with pytest.raises(ConfigError):
        AugmentSpec(hflip_prob=1.5)
    assert AugmentSpec().hflip_prob == 0 and AugmentSpec().is_identity


def test_auto_contrast_examples():
    full = np.array([[0.0, 0.5], [1.0, 0.25]])
    np.testing.assert_array_equal(auto_contrast(full), full)
    np.testing.assert_array_equal(auto_contrast(np.full((3, 3), 0.5)), 0.5)
    x = np.array([[0.2, 0.3], [0.5, 0.6]])
    np.testing.assert_allclose(auto_contrast(x), (x - 0.2) / 0.4)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auto_contrast_idempotent(seed):
    x = np.random.default_rng(seed).random((6, 6))
    once = auto_contrast(x)
    np.testing.assert_allclose(auto_contrast(once), once, atol=1e-12)


def test_resize_crop_identity():
    x = np.random.default_rng(0).random((8, 8))
    np.testing.assert_array_equal(resize_then_crop(x, 8, 8, center=True), x)


def test_resize_checkerboard_bilinear():
    out = resize_then_crop(np.array([[1.0, 0.0], [0.0, 1.0]]), 4, 4, center=True)
    # half-pixel centres map output 0..3 to source -0.25, 0.25, 0.75, 1.25, clamped at the edges
    np.testing.assert_allclose(out, [[1.0, 0.75, 0.25, 0.0],
                                     [0.75, 0.625, 0.375, 0.25],
                                     [0.25, 0.375, 0.625, 0.75],
                                     [0.0, 0.25, 0.75, 1.0]])


def test_center_crop_rows_and_cols():
    x = np.arange(36.0).reshape(6, 6)
    np.testing.assert_array_equal(resize_then_crop(x, 6, 4, center=True), x[1:5, 1:5])


def test_random_crop_shares_offset_across_frames():
    x = np.stack([np.arange(36.0).reshape(6, 6)] * 3)
    out = resize_then_crop(x, 6, 4, rng=np.random.default_rng(3))
    assert all(np.array_equal(out[0], o) for o in out)


def test_crop_larger_than_resize():
    with pytest.raises(ConfigError):
        resize_then_crop(np.zeros((4, 4)), 4, 5)


# ---------------------------------------------------------------- folds

def test_kfold_one_patient_each():
    plan = patient_kfold(fake_index(5), 5, 0)
    assert [len(f) for f in plan.test_patients] == [1] * 5


def test_kfold_34_patients():
    plan = patient_kfold(fake_index(34), 5, 0)
    assert sorted(len(f) for f in plan.test_patients) == [6, 7, 7, 7, 7]


def test_kfold_deterministic_and_seed_dependent():
    idx = fake_index(20)
    assert patient_kfold(idx, 5, 3) == patient_kfold(idx, 5, 3)
    assert patient_kfold(idx, 5, 3) != patient_kfold(idx, 5, 4)


def test_kfold_too_few_patients():
    with pytest.raises(ValueError, match="3 patients into 5"):
        patient_kfold(fake_index(3), 5, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 40), st.integers(2, 10), st.integers(0, 1000))
def test_kfold_partitions_patients(n, k, seed):
    if n < k:
        return
    idx = fake_index(n)
    plan = patient_kfold(idx, k, seed)
    assert plan.patients == idx.patients()
    seen = []
    for train, test in plan.folds(idx):
        check_no_leakage(train, test)
        assert len(train) + len(test) == len(idx)
        seen += [c.key for c in test]
    assert sorted(seen) == sorted(c.key for c in idx)


def test_holdout_split():
    plan = patient_holdout(fake_index(20), 0.1, 0)
    assert plan.k == 1 and len(plan.test_patients[0]) == 2


def test_leakage_detected():
    idx = fake_index(4)
    with pytest.raises(LeakageError, match="P001"):
        check_no_leakage(idx.subset(["P000", "P001"]), idx.subset(["P001", "P002"]))


# ---------------------------------------------------------------- synthetic generator

def test_spec_validation():
    with pytest.raises(ConfigError, match="frames_per_clip"):
        SyntheticSpec(frames_per_clip=7)
    with pytest.raises(ConfigError, match="outside class range"):
        SyntheticSpec(n_classes=4, ambiguous_pairs=((0, 4),))
    with pytest.raises(ConfigError, match="unknown"):
        SyntheticSpec.from_dict({"n_classes": 4, "colour": 1})


def test_default_pairs_and_names():
    spec = SyntheticSpec()
    assert spec.ambiguous_pairs == ((0, 1), (9, 10))
    assert [spec.class_names[c] for c in (0, 1, 9, 10)] == ["APICAL_4C_LVRV", "APICAL_5C", "PSAX_PAPS", "PSAX_MV"]
    assert SyntheticSpec.from_dict(spec.to_dict()) == spec


def test_ambiguous_pair_frames_coincide_at_equal_phase():
    spec = SyntheticSpec(noise_level=0.0)
    models = class_models(spec)
    jitter = patient_jitter(spec, 3)
    for a, b in spec.ambiguous_pairs:
        assert models[a].freq != models[b].freq
        for phase in np.linspace(0, 2 * np.pi, 7):
            np.testing.assert_array_equal(render_frame(models[a], jitter, phase, 32),
                                          render_frame(models[b], jitter, phase, 32))


def test_distinct_classes_differ():
    spec = SyntheticSpec(noise_level=0.0)
    models = class_models(spec)
    jitter = patient_jitter(spec, 0)
    assert not np.allclose(render_frame(models[0], jitter, 0.0, 32), render_frame(models[2], jitter, 0.0, 32))


def test_patients_differ():
    spec = SyntheticSpec()
    assert patient_jitter(spec, 0) != patient_jitter(spec, 1)


@pytest.fixture(scope="module")
def full_synthetic(tmp_path_factory):
    root = tmp_path_factory.mktemp("syn")
    spec = SyntheticSpec(seed=0)
    return spec, root, gen_synthetic(spec, root)


def test_generator_counts(full_synthetic):
    spec, root, idx = full_synthetic
    assert len(idx) == 960
    assert sum(len(c) for c in idx) == 15360 == len(list(root.glob("P*/*/*/frame_*.png")))
    assert (root / "manifest.csv").exists() and (root / "synthetic.json").exists()


def test_generator_round_trip(full_synthetic):
    _, root, idx = full_synthetic
    assert load_index(root) == idx


def test_template_oracle_is_near_chance_on_ambiguous_pairs(full_synthetic):
    spec, _, idx = full_synthetic
    train, test = next(patient_kfold(idx, 5, 0).folds(idx))
    rng = np.random.default_rng(0)
    tr_frames = [idx.frames(c)[rng.integers(len(c))] for c in train]
    amb = [c for c in test if test.label(c) in spec.ambiguous_classes]
    te_frames = np.concatenate([idx.frames(c) for c in amb])
    te_labels = np.repeat([test.label(c) for c in amb], spec.frames_per_clip)
    pred = template_oracle(tr_frames, train.labels(), te_frames, spec.n_classes)
    assert abs((pred == te_labels).mean() - 0.5) <= 0.05


@settings(max_examples=5, deadline=None)
@given(st.integers(2, 5), st.integers(1, 3), st.integers(1, 2), st.integers(8, 10), st.integers(0, 1000))
def test_round_trip_random_specs(tmp_path_factory, n_classes, n_patients, clips, frames, seed):
    spec = SyntheticSpec(n_classes=n_classes, n_patients=n_patients, clips_per_patient=clips,
                         frames_per_clip=frames, image_size=8, seed=seed)
    root = tmp_path_factory.mktemp("rt")
    declared = gen_synthetic(spec, root)
    assert load_index(root) == declared
