"""Target accuracy of each compared setup on the default dataset.

    python3 scripts/ablation.py --seeds 0 1 2 --out runs/ablation

Writes ablation.json (per seed and mean) and prints a table.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from rcgan import experiments as ex
from rcgan.synthdata import make_dataset
from rcgan.trainer import TrainConfig


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, default=TrainConfig.steps)
    p.add_argument("--n-shot", type=int, default=1)
    p.add_argument("--presets", nargs="+", default=list(ex.PRESETS), choices=ex.PRESETS)
    p.add_argument("--out", default="runs/ablation")
    args = p.parse_args()

    table = {}
    for name in args.presets:
        accs = []
        t0 = time.perf_counter()
        for seed in args.seeds:
            ds = make_dataset(n_shot=args.n_shot, seed=seed)
            _, acc = ex.run_preset(name, ds, TrainConfig(steps=args.steps, seed=seed))
            accs.append(acc)
        table[name] = {"per_seed": dict(zip(map(str, args.seeds), accs)), "mean": float(np.mean(accs))}
        print(f"{name:24s} " + " ".join(f"{a:.4f}" for a in accs) + f"  mean {np.mean(accs):.4f}"
              f"  ({time.perf_counter() - t0:.0f}s)", flush=True)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"steps": args.steps, "n_shot": args.n_shot, "seeds": args.seeds, "accuracy": table}
    (out / "ablation.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
