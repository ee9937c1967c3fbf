"""Near-homoclinic oscillator: orbit, PRC, IRC and the in-box exponential comparison.

Writes to ``out_dir``:

- ``orbit.csv`` / ``orbit.svg``: one period of (x, y) against phase, anchored at the box entry
- ``prc.csv``, ``irc.csv`` and their SVGs
- ``irc_vs_exponential.csv`` / ``.svg``: the max-abs normalized IRC next to
  ``e^{lambda_u theta/omega}`` and ``e^{lambda_s theta/omega}``, each scaled to the numerical
  curve at the first in-box sample (the amplitude of the stable component is not determined
  by the asymptotics)
- ``summary.txt``: period, exponent, eigenvector, box statistics and timings

Usage::

    python scripts/sandstede_box.py --out-dir out/sandstede
"""

import argparse
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from augphase.cli import write_curve_csv, write_manifest, write_svg
from augphase.models import make_model
from augphase.validate import DEFAULT_BOX_DELTA, compute_reduction, homoclinic_box_analysis


@dataclass
class BoxConfig:
    mu: float = 1e-13
    a: float = -1.0
    b: float = 2.0
    delta: float = DEFAULT_BOX_DELTA
    n_grid: int = 4000
    out_dir: str = "out/sandstede"


def run(cfg: BoxConfig) -> dict:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    red = compute_reduction(make_model("sandstede", mu=cfg.mu, a=cfg.a, b=cfg.b), cfg.n_grid, delta=cfg.delta)
    t_red = time.perf_counter() - t0
    box = homoclinic_box_analysis(red.field, red.orbit, red.irc, cfg.delta)

    th = red.prc.theta
    X = red.orbit.state_at_time(th / red.orbit.omega)
    X[0] = red.orbit.anchor
    for name, vals, labels in (("orbit", X, ["x", "y"]), ("prc", red.prc.values, ["Z_x", "Z_y"]),
                               ("irc", red.irc.values, ["I_x", "I_y"])):
        write_curve_csv(out / f"{name}.csv", th, vals)
        write_svg(out / f"{name}.svg", th, vals, f"sandstede {name}", labels)

    # exponential rates in phase units, matched at theta = 0
    w = red.orbit.omega
    I = red.irc.values
    ana = np.c_[I[0, 0] * np.exp(box.lambda_s * th / w), I[0, 1] * np.exp(box.lambda_u * th / w)]
    # beyond the box the exponential form has no meaning; clip so the plot stays readable
    ana = np.clip(ana, -1.0, 1.0)
    cmp_vals = np.c_[I, ana]
    with open(out / "irc_vs_exponential.csv", "w") as fh:
        fh.write("theta,I_x,I_y,exp_x,exp_y\n")
        for t, row in zip(th, cmp_vals):
            fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")
    write_svg(out / "irc_vs_exponential.svg", th, cmp_vals, "IRC and in-box exponentials",
              ["I_x", "I_y", "exp lambda_s", "exp lambda_u"])

    summary = {**{f"config.{k}": v for k, v in asdict(cfg).items()},
               "T": red.orbit.period, "k": red.floquet.k, "lambda_method": red.floquet.method,
               "v1": float(red.floquet.v[0]), "v2": float(red.floquet.v[1]),
               "irc_normalization": red.irc.normalization["type"],
               "box.fraction": box.fraction, "box.strip_fraction": box.strip_fraction,
               "box.time": box.box_time, "box.rate_y": box.rate_y, "box.rate_x": box.rate_x,
               "box.lambda_u": box.lambda_u, "box.lambda_s": box.lambda_s,
               "box.return_mismatch": box.return_mismatch, "box.sign_changes_x": box.sign_changes_x,
               "time.reduction_s": t_red}
    for c in ("x", "y"):
        summary.update({f"box.window_rate_{c}.{i}": r for i, r in enumerate(box.window_rates[c])})
    write_manifest(out / "summary.txt", list(summary.items()))
    return summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f, default in asdict(BoxConfig()).items():
        ap.add_argument(f"--{f.replace('_', '-')}", type=type(default), default=default)
    cfg = BoxConfig(**vars(ap.parse_args()))
    s = run(cfg)
    print(f"T={s['T']:.6f} k={s['k']:.6f} v=({s['v1']:.5f}, {s['v2']:.5f}) "
          f"box fraction={s['box.fraction']:.4f} strip={s['box.strip_fraction']:.4f} "
          f"rate_y={s['box.rate_y']:.4f} rate_x={s['box.rate_x']:.4f} ({s['time.reduction_s']:.0f}s)")
    print(f"wrote {cfg.out_dir}")


if __name__ == "__main__":
    main()
