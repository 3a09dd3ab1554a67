"""Command-line front end: ``microgen <command> [options]``.

Exit codes: 0 success, 1 check failure, 2 usage or parse error, 3 numeric
failure.  Results go to stdout (or ``--out``) as JSON, or CSV for ``flow``;
errors are written to stderr as ``{"error": ..., "detail": ...}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import compose, dynamics, genfun, hamjac, liegroup
from .errors import CheckFailure, MicrogenError, NumericFailure, ParseError, UsageError
from .expr import compile_expr, free_vars, parse

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunConfig:
    command: str
    options: dict[str, Any] = field(default_factory=dict)
    order: int = 8
    tol: float = 1e-9
    seed: int = 0
    time_reversed: bool = False
    output: str | None = None

    def __post_init__(self):
        if self.order < 1:
            raise UsageError("order must be at least 1")
        if not self.tol > 0:
            raise UsageError("tolerances must be positive")

    def get(self, key: str, default=None):
        value = self.options.get(key)
        return default if value is None else value


def default_seed() -> int:
    raw = os.environ.get("MICROGEN_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError as exc:
        raise UsageError(f"MICROGEN_SEED must be an integer, got {raw!r}") from exc


# --------------------------------------------------------------------------
# input helpers


def _floats(text: str | None, name: str) -> list[float]:
    if text is None or text == "":
        return []
    try:
        return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from exc


def _names(text: str | None, default: list[str]) -> list[str]:
    if not text:
        return default
    return [v.strip() for v in text.split(",") if v.strip()]


def _load_json(text: str, name: str) -> Any:
    """Inline JSON, or a path to a JSON file."""
    src = text.strip()
    if not src.startswith(("{", "[")):
        path = Path(src)
        if not path.exists():
            raise UsageError(f"{name}: {src!r} is neither JSON nor an existing file")
        src = path.read_text()
    try:
        return json.loads(src)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{name}: invalid JSON: {exc.msg}", exc.pos) from exc


def _load_gf(text: str | None, name: str, order: int) -> genfun.GeneratingFunction:
    if text is None:
        raise UsageError(f"--{name} is required")
    data = _load_json(text, name)
    try:
        return genfun.GeneratingFunction.from_json(data, order=order)
    except KeyError as exc:
        raise UsageError(f"{name}: missing field {exc}") from exc
    except TypeError as exc:
        raise UsageError(f"{name}: malformed generating function: {exc}") from exc


def _hamiltonian(cfg: RunConfig) -> hamjac.Hamiltonian:
    src = cfg.get("H")
    if src is None:
        raise UsageError("--H is required")
    p_vars = _names(cfg.get("p_vars"), [])
    q_vars = _names(cfg.get("q_vars"), [])
    q0 = _floats(cfg.get("q0"), "q0") or None
    return hamjac.Hamiltonian.from_expr(src, p_vars or None, q_vars or None, q0=q0)


def _grid(n: int, radius: float, dim: int = 1) -> list[tuple[list[float], list[float]]]:
    axis = np.linspace(-radius, radius, n)
    return [([float(p)] * dim, [float(q)] * dim) for p in axis for q in axis]


# --------------------------------------------------------------------------
# commands; each returns (payload, passed)


def cmd_hj(cfg: RunConfig):
    H = _hamiltonian(cfg)
    S = hamjac.hj_series(H, cfg.order, cfg.get("space_order"))
    res = S.max_residual()
    payload = S.to_json()
    payload["order"] = cfg.order
    return payload, res <= cfg.get("residual_tol", 1e-10)


def cmd_compose(cfg: RunConfig):
    F = _load_gf(cfg.get("F"), "F", cfg.order)
    G = _load_gf(cfg.get("G"), "G", cfg.order)
    mode = cfg.get("mode", "series")
    payload: dict[str, Any] = {}
    if mode in ("series", "both"):
        payload["series"] = compose.star_series(F, G, cfg.order).to_json()
    if mode in ("numeric", "both"):
        pts = cfg.get("point") or []
        if not pts:
            raise UsageError("--point p1;x3 is required for numeric mode")
        rows = []
        for spec in pts:
            vals = _floats(spec, "point")
            if len(vals) != F.k + G.l:
                raise UsageError(f"--point needs {F.k + G.l} numbers")
            r = compose.star_numeric(F, G, vals[: F.k], vals[F.k:])
            row = r.to_json()
            row["p1"], row["x3"] = vals[: F.k], vals[F.k:]
            rows.append(row)
        payload["numeric"] = rows
    if not payload:
        raise UsageError(f"unknown compose mode {mode!r}")
    return payload, True


FLOW_COLUMNS = ["t", "p0", "q0", "P_rec", "Q_rec", "P_ref", "Q_ref", "gap", "sympl_defect",
                "energy_drift"]


def cmd_flow(cfg: RunConfig):
    H = _hamiltonian(cfg)
    if H.dim != 1:
        raise UsageError("the flow table supports one degree of freedom")
    S = hamjac.hj_series(H, cfg.order)
    times = _floats(cfg.get("t", "0.05"), "t")
    points = [_floats(z, "z") for z in (cfg.get("z") or [])]
    if not points:
        rng = np.random.default_rng(cfg.seed)
        radius = cfg.get("radius", 0.5)
        while len(points) < cfg.get("random", 10):
            z = rng.uniform(-radius, radius, 2)
            if np.linalg.norm(z) <= radius:
                points.append(z.tolist())
    steps = cfg.get("steps", 10_000)
    rec = dynamics.recovered_flow_map(S)
    rows = []
    passed = True
    if any(len(z) != 2 for z in points):
        raise UsageError("--z takes p,q")
    pts = np.array(points, dtype=float).reshape(-1, 2)
    for t in times:
        # all reference trajectories for this t in one batched RK4 run
        ref_p, ref_q = dynamics.reference_flow_batch(H, pts[:, :1], pts[:, 1:], t, steps,
                                                     cfg.time_reversed)
        for z, rp, rq in zip(points, ref_p, ref_q):
            zp = dynamics.PhasePoint([z[0]], [z[1]])
            w = dynamics.recover_flow(S, t, zp)
            ref = dynamics.PhasePoint(rp, rq)
            gap = float(np.max(np.abs(w.as_array() - ref.as_array())))
            sd = dynamics.symplecticity_defect(rec, t, zp)
            ed = dynamics.energy_drift(H, rec, zp, t) if not H.time_dependent else float("nan")
            rows.append([t, z[0], z[1], w.p[0], w.q[0], ref.p[0], ref.q[0], gap, sd, ed])
            if gap > cfg.tol or sd > 1e-6:
                passed = False
    return {"columns": FLOW_COLUMNS, "rows": rows}, passed


def _core_map(cfg: RunConfig, key: str,
              default_vars: list[str]) -> tuple[genfun.CoreMap, list[str]]:
    exprs = cfg.get(key)
    if not exprs:
        raise UsageError(f"--{key} is required")
    x_vars = _names(cfg.get("x_vars"), [])
    if not x_vars:
        found = sorted(set().union(*(free_vars(parse(e)) for e in exprs)))
        x_vars = found or default_vars
    base = _floats(cfg.get("base"), "base") or None
    return genfun.CoreMap.from_expr(exprs, x_vars, base), x_vars


def cmd_lift(cfg: RunConfig):
    phi, x_vars = _core_map(cfg, "phi", ["x"])
    p_vars = _names(cfg.get("p_vars"), ["p"] if phi.dim_target == 1 else
                    [f"p{i + 1}" for i in range(phi.dim_target)])
    F = genfun.cotangent_lift(phi, cfg.order, p_vars, x_vars)
    samples = []
    for spec in cfg.get("sample") or []:
        vals = _floats(spec, "sample")
        if len(vals) != F.k + F.l:
            raise UsageError(f"--sample needs {F.k + F.l} numbers")
        samples.append(genfun.sample_relation(F, vals[: F.k], vals[F.k:]).to_json())
    return {"genfun": F.to_json(), "samples": samples}, True


def cmd_decompose(cfg: RunConfig):
    F = _load_gf(cfg.get("F"), "F", cfg.order)
    x2 = _floats(cfg.get("x2"), "x2")
    p1_grid = [[v] for v in _floats(cfg.get("p1_grid", "-1,-0.5,0,0.5,1"), "p1-grid")]
    if F.k != 1:
        p1_grid = [[v] * F.k for v, in p1_grid]
    fg = dynamics.fiber_decomposition(F, x2)
    fibers = []
    for p1 in p1_grid:
        src = fg.L_param(p1)
        dst = fg.Psi(src)
        fibers.append({"fiber_point": [src[0].tolist(), src[1].tolist()],
                       "image": [dst[0].tolist(), dst[1].tolist()]})
    return {"x2": x2, "fibers": fibers}, True


def cmd_check_semigroup(cfg: RunConfig):
    H = _hamiltonian(cfg)
    t1, t2 = float(cfg.get("t1", 0.05)), float(cfg.get("t2", 0.05))
    grid = _grid(cfg.get("grid_n", 5), cfg.get("radius", 0.5), H.dim)
    defect = hamjac.semigroup_defect(H, t1, t2, grid, cfg.order)
    return {"defect": defect, "t1": t1, "t2": t2, "order": cfg.order,
            "tol": cfg.tol}, defect < cfg.tol


def cmd_check_module_core(cfg: RunConfig):
    if cfg.get("F"):
        F = _load_gf(cfg.get("F"), "F", cfg.order)
    else:
        F = hamjac.evolution_genfun(hamjac.hj_series(_hamiltonian(cfg), cfg.order))
    report = hamjac.core_form_check(F, seed=cfg.seed, tol=min(cfg.tol, 1e-10))
    payload = report.to_json()
    samples = [F.base + d for d in np.linspace(-0.5, 0.5, 5)[:, None] * np.ones(F.l)]
    payload["U_samples"] = [[x.tolist(), report.U(x)] for x in samples]
    return payload, report.passed


def cmd_check_monoid_group(cfg: RunConfig):
    rng = np.random.default_rng(cfg.seed)
    algebras = ["so3", "sl2"] if cfg.get("algebra", "both") == "both" else [cfg.get("algebra")]
    trials = cfg.get("trials", 100)
    norm = cfg.get("norm", 0.1)
    tol = cfg.get("assoc_tol", 1e-10)
    results = {}
    worst = 0.0
    for alg in algebras:
        if alg not in liegroup.BASES:
            raise UsageError(f"unknown algebra {alg!r}")
        d = 0.0
        dim = len(liegroup.BASES[alg])
        for _ in range(trials):
            u, v, w = (liegroup.random_element(rng, alg, rng.uniform(0, norm)) for _ in range(3))
            mu = liegroup.CoAlgebraElement(rng.normal(size=dim))
            d = max(d, liegroup.assoc_defect(u, v, w, mu))
        results[alg] = d
        worst = max(worst, d)
    return {"assoc_defect": results, "tol": tol, "trials": trials}, worst < tol


def _matrix(text: str, name: str) -> np.ndarray:
    data = _load_json(text, name)
    M = np.array(data, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    return M


def cmd_bch(cfg: RunConfig):
    if cfg.get("v") is None or cfg.get("w") is None:
        raise UsageError("--v and --w are required")
    alg = cfg.get("algebra", "generic")
    v = liegroup.MatLieElement(_matrix(cfg.get("v"), "v"), alg)
    w = liegroup.MatLieElement(_matrix(cfg.get("w"), "w"), alg)
    z = liegroup.bch(v, w)
    payload: dict[str, Any] = {"bch": z.entries.tolist()}
    if cfg.get("mu") is not None:
        payload["S_G"] = liegroup.symmetry_genfun(v, w, liegroup.CoAlgebraElement(
            _floats(cfg.get("mu"), "mu")))
    return payload, True


def cmd_morse_bott(cfg: RunConfig):
    src = cfg.get("f")
    if src is None or cfg.get("C") is None:
        raise UsageError("--f and --C are required")
    tree = parse(src)
    C_exprs = [parse(e) for e in cfg.get("C").split(",")]
    params = _names(cfg.get("params"), [])
    x_vars = _names(cfg.get("vars"), [])
    if not x_vars:
        x_vars = sorted(free_vars(tree)) or ["x"]
    if len(C_exprs) != len(x_vars):
        raise UsageError(f"--C needs {len(x_vars)} components for variables {x_vars}")
    f = compile_expr(tree, x_vars)
    comps = [compile_expr(e, params) for e in C_exprs]

    def critical_param(s):
        return np.array([c(*s) for c in comps])

    raw = cfg.get("samples")
    if params:
        samples = [[v] for v in _floats(raw or "-0.5,0,0.5", "samples")] if len(params) == 1 \
            else [_floats(s, "samples") for s in (raw or "").split(";") if s]
    else:
        samples = [[]]
    report = genfun.morse_bott_check(lambda x: f(*x), critical_param, samples,
                                     tol=cfg.get("mb_tol", 1e-6))
    return report.to_json(), report.clean


def cmd_lagrangian_check(cfg: RunConfig):
    tol = cfg.get("lag_tol", 1e-5)
    h = cfg.get("h", 1e-4)
    trials = cfg.get("trials", 50)
    if cfg.get("so3"):
        sampler = liegroup.symmetry_sampler(liegroup.so3_action, liegroup.so3_momentum)
        base = _floats(cfg.get("base"), "base") or [0.05, -0.03, 0.1, 1.0, 0.2, 0.0, 0.0, 1.0, 0.3]
        if len(base) != 9:
            raise UsageError("the SO(3) sampler takes 9 parameters (v, p, q)")
    else:
        F = _load_gf(cfg.get("F"), "F", cfg.order)
        sampler = genfun.relation_sampler(F)
        base = _floats(cfg.get("base"), "base") or [0.1] * (F.k + F.l)
        if len(base) != F.k + F.l:
            raise UsageError(f"--base needs {F.k + F.l} numbers")
    defect = genfun.lagrangian_defect(sampler, base, h=h, trials=trials, seed=cfg.seed)
    return {"defect": defect, "h": h, "trials": trials, "tol": tol}, defect < tol


COMMANDS: dict[str, Callable[[RunConfig], tuple[dict, bool]]] = {
    "hj": cmd_hj,
    "compose": cmd_compose,
    "flow": cmd_flow,
    "lift": cmd_lift,
    "decompose": cmd_decompose,
    "check-semigroup": cmd_check_semigroup,
    "check-module-core": cmd_check_module_core,
    "check-monoid-group": cmd_check_monoid_group,
    "bch": cmd_bch,
    "morse-bott": cmd_morse_bott,
    "lagrangian-check": cmd_lagrangian_check,
}


# --------------------------------------------------------------------------
# output and dispatch


def _to_csv(payload: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(payload["columns"])
    for row in payload["rows"]:
        writer.writerow(["%.12g" % v for v in row])
    return buf.getvalue()


def _emit(text: str, output: str | None) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _error(kind: str, detail: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "detail": detail}) + "\n")


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit code."""
    try:
        handler = COMMANDS[cfg.command]
    except KeyError:
        _error("usage", f"unknown command {cfg.command!r}")
        return EXIT_USAGE
    try:
        with np.errstate(all="ignore"):
            payload, passed = handler(cfg)
    except CheckFailure as exc:
        _error("check_failed", str(exc))
        return EXIT_CHECK
    except NumericFailure as exc:
        _error("numeric_failure", str(exc))
        return EXIT_NUMERIC
    except (UsageError, MicrogenError, ValueError) as exc:
        kind = "parse_error" if isinstance(exc, ParseError) else "usage"
        _error(kind, str(exc))
        return EXIT_USAGE
    except ArithmeticError as exc:
        _error("numeric_failure", str(exc))
        return EXIT_NUMERIC
    if cfg.command == "flow" and cfg.get("format", "csv") == "csv":
        _emit(_to_csv(payload), cfg.output)
    else:
        payload["passed"] = passed
        _emit(json.dumps(payload, indent=2) + "\n", cfg.output)
    return EXIT_OK if passed else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="microgen", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--order", type=int, default=None)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--time-reversed", action="store_true")
    common.add_argument("--out", default=None, help="write output here instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, parents=[common], help=help_text)

    ham_args = [("--H", {}), ("--p-vars", {}), ("--q-vars", {}), ("--q0", {})]

    p = add("hj", "Hamilton-Jacobi series for S(t, p, Q)")
    for flag, kw in ham_args:
        p.add_argument(flag, **kw)
    p.add_argument("--space-order", type=int)

    p = add("compose", "G * F by series or Newton")
    p.add_argument("--F", required=True)
    p.add_argument("--G", required=True)
    p.add_argument("--mode", choices=["series", "numeric", "both"], default="series")
    p.add_argument("--point", action="append", help="p1 and x3 values, comma-separated")

    p = add("flow", "recovered flow vs RK4 reference (CSV)")
    for flag, kw in ham_args:
        p.add_argument(flag, **kw)
    p.add_argument("--t", default="0.05")
    p.add_argument("--z", action="append", help="initial point p,q")
    p.add_argument("--random", type=int)
    p.add_argument("--radius", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--format", choices=["csv", "json"], default="csv")

    p = add("lift", "cotangent lift of a core map")
    p.add_argument("--phi", action="append", help="core component expression")
    p.add_argument("--x-vars")
    p.add_argument("--p-vars")
    p.add_argument("--base")
    p.add_argument("--sample", action="append", help="p1 and x2 values, comma-separated")

    p = add("decompose", "fiber-graph decomposition at x2")
    p.add_argument("--F", required=True)
    p.add_argument("--x2", required=True)
    p.add_argument("--p1-grid")

    p = add("check-semigroup", "S_t2 * S_t1 against S_(t1+t2)")
    for flag, kw in ham_args:
        p.add_argument(flag, **kw)
    p.add_argument("--t1", type=float)
    p.add_argument("--t2", type=float)
    p.add_argument("--grid-n", type=int)
    p.add_argument("--radius", type=float)

    p = add("check-module-core", "core of the evolution micromorphism is (U(q), q)")
    for flag, kw in ham_args:
        p.add_argument(flag, **kw)
    p.add_argument("--F")

    p = add("check-monoid-group", "BCH associativity over random triples")
    p.add_argument("--algebra", choices=["so3", "sl2", "both"], default="both")
    p.add_argument("--trials", type=int)
    p.add_argument("--norm", type=float)
    p.add_argument("--assoc-tol", type=float)

    p = add("bch", "log(exp v exp w) and S_G")
    p.add_argument("--v")
    p.add_argument("--w")
    p.add_argument("--mu")
    p.add_argument("--algebra", choices=["so3", "sl2", "abelian", "generic"], default="generic")

    p = add("morse-bott", "Hessian-kernel test along a critical set")
    p.add_argument("--f")
    p.add_argument("--C", help="components of the critical set parametrisation")
    p.add_argument("--vars")
    p.add_argument("--params")
    p.add_argument("--samples")
    p.add_argument("--mb-tol", type=float)

    p = add("lagrangian-check", "isotropy defect of a sampled relation")
    p.add_argument("--F")
    p.add_argument("--so3", action="store_true", help="check the SO(3) symmetry relation")
    p.add_argument("--base")
    p.add_argument("--h", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--lag-tol", type=float)
    return parser


_DEFAULT_ORDER = {"hj": 8, "check-semigroup": 10, "flow": 10, "check-module-core": 10}
_DEFAULT_TOL = {"check-semigroup": 1e-9, "flow": 1e-8}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    opts = {k: v for k, v in vars(ns).items()
            if k not in ("command", "order", "tol", "seed", "time_reversed", "out")}
    return RunConfig(
        command=ns.command,
        options=opts,
        order=ns.order if ns.order is not None else _DEFAULT_ORDER.get(ns.command, 8),
        tol=ns.tol if ns.tol is not None else _DEFAULT_TOL.get(ns.command, 1e-9),
        seed=ns.seed if ns.seed is not None else default_seed(),
        time_reversed=ns.time_reversed,
        output=ns.out,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage and 0 on --help
        return int(exc.code or 0)
    try:
        cfg = config_from_args(ns)
    except UsageError as exc:
        _error("usage", str(exc))
        return EXIT_USAGE
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
