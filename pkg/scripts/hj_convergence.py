"""Flow-recovery gap against RK4 as the time step shrinks.

Prints one row per ``t``: the worst gap over a ring of phase points and the
log2 ratio to the previous row.  For an order-``n`` series the ratio should
approach ``n + 1``.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from microgen.dynamics import PhasePoint, recover_flow, reference_flow_batch
from microgen.hamjac import Hamiltonian, hj_series


@dataclass
class Config:
    H: str = "p^2/2 + cos(q)"
    order: int = 10
    times: tuple[float, ...] = (0.8, 0.4, 0.2, 0.1)
    radius: float = 0.5
    points: int = 8
    steps: int = 20_000


def run(cfg: Config) -> list[tuple[float, float]]:
    H = Hamiltonian.from_expr(cfg.H)
    S = hj_series(H, cfg.order)
    angles = np.linspace(0, 2 * np.pi, cfg.points, endpoint=False)
    pts = cfg.radius * np.column_stack([np.cos(angles), np.sin(angles)])
    rows = []
    for t in cfg.times:
        ref_p, ref_q = reference_flow_batch(H, pts[:, :1], pts[:, 1:], t, cfg.steps)
        gap = 0.0
        for z, rp, rq in zip(pts, ref_p, ref_q):
            w = recover_flow(S, t, PhasePoint(z[:1], z[1:]))
            gap = max(gap, float(np.max(np.abs(w.as_array() - np.concatenate([rp, rq])))))
        rows.append((t, gap))
    return rows


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--H", default=Config.H)
    ap.add_argument("--order", type=int, default=Config.order)
    ap.add_argument("--times", type=float, nargs="+", default=list(Config.times))
    args = ap.parse_args()
    cfg = Config(H=args.H, order=args.order, times=tuple(args.times))
    prev = None
    print(f"{'t':>8} {'gap':>10} {'log2 ratio':>11}")
    for t, gap in run(cfg):
        ratio = f"{np.log2(prev / gap):11.2f}" if prev and gap > 0 else f"{'':>11}"
        print(f"{t:8.3f} {gap:10.2e} {ratio}")
        prev = gap


if __name__ == "__main__":
    main()
