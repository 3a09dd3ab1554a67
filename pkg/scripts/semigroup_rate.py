"""Semigroup defect |F_t2 * F_t1 - F_(t1+t2)| as the step halves."""

from __future__ import annotations

import argparse
import warnings
from dataclasses import dataclass

import numpy as np

from microgen.genfun import TruncationWarning
from microgen.hamjac import Hamiltonian, hj_series, semigroup_defect


@dataclass
class Config:
    H: str = "(p^2+q^2)/2"
    order: int = 10
    start: float = 0.4
    halvings: int = 4
    grid_n: int = 5
    radius: float = 0.5


def run(cfg: Config) -> list[tuple[float, float]]:
    H = Hamiltonian.from_expr(cfg.H)
    S = hj_series(H, cfg.order)
    axis = np.linspace(-cfg.radius, cfg.radius, cfg.grid_n)
    grid = [([p], [q]) for p in axis for q in axis]
    rows = []
    t = cfg.start
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        for _ in range(cfg.halvings):
            rows.append((t, semigroup_defect(H, t, t, grid, cfg.order, S)))
            t /= 2
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--H", default=Config.H)
    ap.add_argument("--order", type=int, default=Config.order)
    ap.add_argument("--start", type=float, default=Config.start)
    ap.add_argument("--halvings", type=int, default=Config.halvings)
    args = ap.parse_args()
    cfg = Config(H=args.H, order=args.order, start=args.start, halvings=args.halvings)
    prev = None
    print(f"{'t1=t2':>8} {'defect':>10} {'log2 ratio':>11}")
    for t, d in run(cfg):
        ratio = f"{np.log2(prev / d):11.2f}" if prev and d > 0 else f"{'':>11}"
        print(f"{t:8.4f} {d:10.2e} {ratio}")
        prev = d


if __name__ == "__main__":
    main()
