"""Patient-wise train/test partitioning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tfw.data.index import DatasetIndex
from tfw.errors import LeakageError


@dataclass(frozen=True)
class FoldPlan:
    k: int
    seed: int
    test_patients: tuple[tuple[str, ...], ...]

    @property
    def patients(self) -> list[str]:
        return sorted(p for fold in self.test_patients for p in fold)

    def folds(self, index: DatasetIndex):
        """Yield (train, test) sub-indices for each fold."""
        for test in self.test_patients:
            held = set(test)
            train = [p for p in index.patients() if p not in held]
            yield index.subset(train), index.subset(test)


def patient_kfold(index: DatasetIndex, k: int = 5, seed: int = 0) -> FoldPlan:
    """Shuffle patients with ``seed`` and deal them round-robin into k test sets."""
    patients = index.patients()
    if k < 1 or len(patients) < k:
        raise ValueError(f"cannot split {len(patients)} patients into {k} folds")
    order = np.random.default_rng(seed).permutation(len(patients))
    shuffled = [patients[i] for i in order]
    return FoldPlan(k, seed, tuple(tuple(sorted(shuffled[i::k])) for i in range(k)))


def patient_holdout(index: DatasetIndex, test_fraction: float = 0.1, seed: int = 0) -> FoldPlan:
    """A single patient-wise train/test split (the 90/10 protocol)."""
    patients = index.patients()
    n_test = max(1, int(round(test_fraction * len(patients))))
    if n_test >= len(patients):
        raise ValueError(f"test fraction {test_fraction} leaves no training patients")
    order = np.random.default_rng(seed).permutation(len(patients))
    return FoldPlan(1, seed, (tuple(sorted(patients[i] for i in order[:n_test])),))


def check_no_leakage(train: DatasetIndex, test: DatasetIndex) -> None:
    shared = set(train.patients()) & set(test.patients())
    if shared:
        raise LeakageError(f"patients present in both train and test: {sorted(shared)}")
