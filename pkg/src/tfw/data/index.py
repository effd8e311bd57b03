"""Dataset index: clips organized by patient, viewpoint and clip id.

On disk a dataset is either a directory tree

    root/<patient_id>/<viewpoint>/<clip_id>/frame_0000.png

or a CSV manifest with header ``patient_id,viewpoint,clip_id,frame_index,path``.
When a directory holds ``manifest.csv`` the manifest wins over the tree.
"""
from __future__ import annotations

import csv
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

NED12 = (
    "APICAL_4C_LVRV", "APICAL_5C", "APICAL_3C_RV", "APICAL_3C_LV", "APICAL_2C_LV",
    "PLAX_LV", "PLAX_RV_IN", "PLAX_RV_OUT", "PSAX_APEX", "PSAX_PAPS", "PSAX_MV", "PSAX_AV",
)
NED16 = NED12 + ("BRANCH_PA", "DUCTAL_CUT", "ARCH", "SUBCOSTAL_IVC")
PRESETS = {"ned12": NED12, "ned16": NED16}

MANIFEST_NAME = "manifest.csv"
LABELS_NAME = "labels.txt"
MANIFEST_HEADER = ("patient_id", "viewpoint", "clip_id", "frame_index", "path")
_FRAME_RE = re.compile(r"^frame_(\d+)\.png$")


def resolve_label_set(labels) -> tuple[str, ...] | None:
    if labels is None:
        return None
    if isinstance(labels, str):
        try:
            return PRESETS[labels.lower().replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown label preset {labels!r}; expected one of {sorted(PRESETS)}") from None
    return tuple(labels)


def frame_name(i: int) -> str:
    return f"frame_{i:04d}.png"


@dataclass(frozen=True)
class ClipRecord:
    patient_id: str
    viewpoint: str
    clip_id: str
    frame_paths: tuple[Path, ...]

    @property
    def key(self) -> tuple[str, str]:
        return self.patient_id, self.clip_id

    def __len__(self) -> int:
        return len(self.frame_paths)


@dataclass
class DatasetIndex:
    clips: list[ClipRecord]
    label_set: tuple[str, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self):
        return len(self.clips)

    def __iter__(self):
        return iter(self.clips)

    @property
    def n_classes(self) -> int:
        return len(self.label_set)

    def label(self, clip: ClipRecord) -> int:
        return self.label_set.index(clip.viewpoint)

    def labels(self) -> np.ndarray:
        return np.array([self.label(c) for c in self.clips], dtype=np.int64)

    def patients(self) -> list[str]:
        return sorted({c.patient_id for c in self.clips})

    def subset(self, patients) -> "DatasetIndex":
        keep = set(patients)
        sub = DatasetIndex([c for c in self.clips if c.patient_id in keep], self.label_set)
        sub._cache = self._cache  # frames are shared read-only
        return sub

    def frames(self, clip: ClipRecord) -> np.ndarray:
        """All frames of ``clip`` as float32 (L, H, W) in [0, 1]; cached."""
        arr = self._cache.get(clip.key)
        if arr is None:
            arr = np.stack([read_frame(p) for p in clip.frame_paths])
            self._cache[clip.key] = arr
        return arr


def read_frame(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=np.float32) / 255.0


def write_frame(path, frame) -> None:
    arr = np.clip(np.rint(np.asarray(frame) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path)


def _finish(rows: dict, label_set, source) -> DatasetIndex:
    """rows: (patient, viewpoint, clip) -> list of (frame_index, path)."""
    if label_set is None:
        label_set = tuple(sorted({vp for _, vp, _ in rows}))
    seen: dict[tuple[str, str], str] = {}
    clips = []
    for (patient, vp, clip_id) in sorted(rows):
        frames = sorted(rows[(patient, vp, clip_id)])
        if not frames:
            warnings.warn(f"{source}: clip {patient}/{vp}/{clip_id} has no frames; skipped")
            continue
        if vp not in label_set:
            raise ValueError(f"{source}: unknown viewpoint {vp!r} for clip {patient}/{clip_id}; "
                             f"valid labels: {', '.join(label_set)}")
        if (patient, clip_id) in seen:
            raise ValueError(f"{source}: duplicate clip {clip_id!r} for patient {patient!r} "
                             f"(viewpoints {seen[(patient, clip_id)]!r} and {vp!r})")
        seen[(patient, clip_id)] = vp
        idx = [i for i, _ in frames]
        if len(set(idx)) != len(idx):
            raise ValueError(f"{source}: clip {patient}/{clip_id} repeats a frame index")
        clips.append(ClipRecord(patient, vp, clip_id, tuple(p for _, p in frames)))
    return DatasetIndex(clips, tuple(label_set))


def _read_manifest(path: Path) -> dict:
    rows: dict = {}
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != MANIFEST_HEADER:
            raise ValueError(f"{path}: manifest header must be {','.join(MANIFEST_HEADER)}, "
                             f"got {reader.fieldnames}")
        for r in reader:
            p = Path(r["path"])
            if not p.is_absolute():
                p = path.parent / p
            key = (r["patient_id"], r["viewpoint"], r["clip_id"])
            rows.setdefault(key, []).append((int(r["frame_index"]), p.resolve()))
    return rows


def _walk(root: Path) -> dict:
    rows: dict = {}
    for patient in sorted(p for p in root.iterdir() if p.is_dir()):
        for vp in sorted(p for p in patient.iterdir() if p.is_dir()):
            for clip in sorted(p for p in vp.iterdir() if p.is_dir()):
                frames = []
                for f in clip.iterdir():
                    m = _FRAME_RE.match(f.name)
                    if m:
                        frames.append((int(m.group(1)), f.resolve()))
                rows[(patient.name, vp.name, clip.name)] = frames
    return rows


def load_index(path, label_set=None) -> DatasetIndex:
    """Build a deterministic index from a manifest CSV or a dataset directory.

    ``label_set`` may be a preset name (``"ned12"``/``"ned16"``), an explicit
    sequence of names, or None: then ``labels.txt`` in the root is used when
    present, else the sorted set of viewpoints found.
    """
    path = Path(path)
    labels = resolve_label_set(label_set)
    if path.is_dir():
        root = path
        manifest = path / MANIFEST_NAME
        rows = _read_manifest(manifest) if manifest.exists() else _walk(path)
    elif path.is_file():
        root = path.parent
        rows = _read_manifest(path)
    else:
        raise FileNotFoundError(path)
    if labels is None and (root / LABELS_NAME).exists():
        labels = tuple(l.strip() for l in (root / LABELS_NAME).read_text(encoding="utf-8").splitlines() if l.strip())
    return _finish(rows, labels, path)


def write_manifest(index: DatasetIndex, root) -> Path:
    """Write ``manifest.csv`` (paths relative to ``root``) and ``labels.txt``."""
    root = Path(root).resolve()
    out = root / MANIFEST_NAME
    with open(out, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for c in index.clips:
            for pos, p in enumerate(c.frame_paths):
                m = _FRAME_RE.match(p.name)
                i = int(m.group(1)) if m else pos
                w.writerow([c.patient_id, c.viewpoint, c.clip_id, i, p.relative_to(root).as_posix()])
    (root / LABELS_NAME).write_text("\n".join(index.label_set) + "\n", encoding="utf-8")
    return out
