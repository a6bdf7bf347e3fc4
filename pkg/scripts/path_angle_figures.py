"""Path-angle traces for trained relaxed and preliminary runs.

Trains each variant once and writes the trace CSV plus cosine and norm SVGs
per variant, and one overlay chart of both cosine curves.

    python3 scripts/path_angle_figures.py --seed 0 --out runs/path_angle
"""

import argparse
from pathlib import Path

from rcgan import diagnostics as dg
from rcgan import experiments as ex
from rcgan.synthdata import make_dataset
from rcgan.trainer import TrainConfig

COLORS = {"relaxed": "#1f77b4", "preliminary": "#d62728"}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=TrainConfig.steps)
    p.add_argument("--out", default="runs/path_angle")
    args = p.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = make_dataset(seed=args.seed)
    series = []
    for name in ("relaxed", "preliminary"):
        result, acc = ex.run_preset(name, ds, TrainConfig(steps=args.steps, seed=args.seed))
        trace = dg.path_angle(result, ds, seed=args.seed)
        (out / f"{name}_path_angle.csv").write_text(trace.to_csv())
        cos_svg, norm_svg = dg.path_angle_charts(trace, name)
        (out / f"{name}_cosine.svg").write_text(cos_svg)
        (out / f"{name}_norm.svg").write_text(norm_svg)
        series.append(dg.Series(name, trace.ts, trace.cosines, COLORS[name]))
        end = min(range(len(trace.ts)), key=lambda i: abs(trace.ts[i] - 1.0))
        print(f"{name}: target accuracy {acc:.4f}, cosine at t=1 {trace.cosines[end]:.3f}", flush=True)
    chart = dg.Chart("path angle, relaxed vs preliminary", "t", "cosine", series)
    (out / "cosine_overlay.svg").write_text(dg.svg_line_chart(chart))


if __name__ == "__main__":
    main()
