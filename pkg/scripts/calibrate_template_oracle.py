"""Single-frame chance level of the synthetic set's ambiguous pairs.

    python scripts/calibrate_template_oracle.py --data /tmp/tfw_synth

A nearest class-mean frame classifier is fit on one random frame per training
clip and scored on every frame of the held-out ambiguous clips, for fold 0 of
each seed's patient-wise split. Values near 50% mean no single frame separates
the pair; this is the reference for the single-frame classifier's threshold.
"""
import argparse
from pathlib import Path

import numpy as np

from tfw.data import SyntheticSpec, gen_synthetic, load_index, patient_kfold
from tfw.training.experiment import oracle_ambiguous_accuracy


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--data-seed", type=int, default=0)
    args = p.parse_args()

    spec = SyntheticSpec(seed=args.data_seed)
    if not (args.data / "manifest.csv").exists():
        gen_synthetic(spec, args.data)
    index = load_index(args.data)
    accs = []
    for seed in args.seeds:
        row = []
        for i, (tr, te) in enumerate(patient_kfold(index, args.folds, seed).folds(index)):
            row.append(oracle_ambiguous_accuracy(index, tr, te, spec.ambiguous_classes, seed))
        accs.append(row)
        print(f"seed {seed}: " + " ".join(f"{a:5.1f}" for a in row))
    accs = np.array(accs)
    print(f"template oracle on ambiguous pairs: mean {accs.mean():.1f}%  min {accs.min():.1f}%  max {accs.max():.1f}%")


if __name__ == "__main__":
    main()
