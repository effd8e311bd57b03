"""Temporal-signature experiment on the synthetic echo set.

    python scripts/temporal_signature.py --data /tmp/tfw_synth --out results/temporal

Generates the 12-class dataset (20 patients) if ``--data`` has none, then for
each seed trains the single-frame classifier and fine-tunes GRU-TFW and a
plain GRU from it on fold 0 of a patient-wise 5-fold split.
"""
import argparse
import sys
from pathlib import Path

from tfw.data import SyntheticSpec, gen_synthetic, load_index
from tfw.training import temporal_signature


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", type=Path, required=True, help="dataset directory (generated when missing)")
    p.add_argument("--out", type=Path, help="directory for temporal.json")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--epochs", type=int, default=10, help="sequence fine-tuning epochs")
    p.add_argument("--data-seed", type=int, default=0)
    args = p.parse_args()

    spec = SyntheticSpec(seed=args.data_seed)
    if not (args.data / "manifest.csv").exists():
        print(f"generating {args.data}", file=sys.stderr)
        gen_synthetic(spec, args.data)
    index = load_index(args.data)
    result = temporal_signature(index, spec, seeds=args.seeds, epochs=args.epochs,
                                cycle_epochs=min(10, args.epochs),
                                log=lambda r: print(f"seed {r.seed} done in {r.seconds:.0f} s", file=sys.stderr))
    print(result.table())
    for name, ok in result.checks().items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "temporal.json").write_text(result.to_json() + "\n")


if __name__ == "__main__":
    main()
