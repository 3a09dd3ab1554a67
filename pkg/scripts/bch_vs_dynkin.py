"""BCH via exp/log against the degree-4 Dynkin series.

The gap should shrink like the fifth power of the element norm.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from microgen.liegroup import bch, random_element


@dataclass
class Config:
    algebra: str = "so3"
    norms: tuple[float, ...] = (0.4, 0.2, 0.1, 0.05)
    trials: int = 20
    seed: int = 0


def _comm(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return X @ Y - Y @ X


def dynkin4(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    XY = _comm(X, Y)
    return X + Y + XY / 2 + (_comm(X, XY) - _comm(Y, XY)) / 12 - _comm(Y, _comm(X, XY)) / 24


def run(cfg: Config) -> list[tuple[float, float]]:
    rng = np.random.default_rng(cfg.seed)
    rows = []
    for r in cfg.norms:
        worst = 0.0
        for _ in range(cfg.trials):
            v = random_element(rng, cfg.algebra, r)
            w = random_element(rng, cfg.algebra, r)
            gap = np.linalg.norm(bch(v, w).entries - dynkin4(v.entries, w.entries))
            worst = max(worst, float(gap))
        rows.append((r, worst))
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--algebra", default=Config.algebra, choices=["so3", "sl2"])
    ap.add_argument("--trials", type=int, default=Config.trials)
    ap.add_argument("--seed", type=int, default=Config.seed)
    args = ap.parse_args()
    cfg = Config(algebra=args.algebra, trials=args.trials, seed=args.seed)
    prev = None
    print(f"{'norm':>8} {'gap':>10} {'log2 ratio':>11}")
    for r, gap in run(cfg):
        ratio = f"{np.log2(prev / gap):11.2f}" if prev and gap > 0 else f"{'':>11}"
        print(f"{r:8.3f} {gap:10.2e} {ratio}")
        prev = gap


if __name__ == "__main__":
    main()
