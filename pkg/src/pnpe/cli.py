"""
Command-line front end producing the tabulated and swept datasets.

Every output starts with ``#`` metadata lines (version, command, resolved
config and its hash, column units) followed by the data as CSV, or a single
JSON document with ``metadata`` and ``rows``. Nothing time-dependent is
written, so identical inputs give byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 a regression check failed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .analytic import LossParams, PathFamily, chsh
from .metrics import (
    POLARISATION_THRESHOLD,
    PSI_FAMILY_THRESHOLD,
    ProtocolVariant,
    VariantKind,
    di_metrics,
    success_probability,
    variant_p1,
)
from .optimize import (
    NoViolationError,
    Objective,
    OptimizationProblem,
    generic_threshold,
    maximize_chsh,
    maximize_generic_chsh,
)
from .protocol import ProtocolParams, measure_chsh_sim
from .table_s1 import ROWS, nearest_rows

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK = 3
TABLE_TOL = 1e-3

# key -> (type, default)
DEFAULTS: dict[str, tuple[type, Any]] = {
    "source.g": (float, 0.33),
    "source.t_b": (float, 0.8),
    "source.t_c": (float, 0.5),
    "source.eta_s": (float, 1.0),
    "source.phi_a": (float, 0.0),
    "source.phi_b": (float, 0.0),
    "source.t_sppe": (float, 0.1),
    "loss.eta_D": (float, 1.0),
    "loss.eta_H": (float, 1.0),
    "optimizer.restarts": (int, 8),
    "optimizer.warm_starts": (int, 3),
    "optimizer.xatol": (float, 1e-9),
    "optimizer.fatol": (float, 1e-14),
    "optimizer.maxfev": (int, 20000),
    "optimizer.symmetric_ansatz": (bool, False),
    "optimizer.objective": (str, "analytic"),
    "sweep.eta": (str, "0.65:1.0:0.05"),
    "sweep.eta_c": (str, "1e-4:1:9"),
    "sweep.eta_h": (str, "0.1:1.0:0.1"),
    "threshold.tol": (float, 1e-3),
    "metrics.rate": (float, 0.0),
    "run.seed": (int, 0),
    "run.cutoff": (int, 6),
    "run.workers": (int, 1),
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- configuration


def _coerce(key: str, raw: str) -> Any:
    typ = DEFAULTS[key][0]
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return typ(raw.strip())
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {typ.__name__}") from exc


def parse_assignments(lines: Iterable[str], source: str) -> dict[str, Any]:
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, raw)
    return out


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = {k: v for k, (_, v) in DEFAULTS.items()}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg.update(parse_assignments(fh, args.config))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    cfg.update(parse_assignments(args.set or [], "--set"))
    for flag, key in (("seed", "run.seed"), ("cutoff", "run.cutoff"), ("workers", "run.workers")):
        if getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    if cfg["optimizer.objective"] not in ("analytic", "simulated"):
        raise ConfigError("optimizer.objective must be 'analytic' or 'simulated'")
    return cfg


def parse_linear_grid(spec: str) -> list[float]:
    """``start:stop:step`` inclusive of ``stop`` (to within half a step)."""
    try:
        start, stop, step = (float(p) for p in spec.split(":"))
    except ValueError as exc:
        raise ConfigError(f"malformed grid {spec!r}; expected start:stop:step") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"grid {spec!r} needs step > 0 and stop >= start")
    n = int(math.floor((stop - start) / step + 0.5)) + 1
    return [round(start + i * step, 12) for i in range(n)]


def parse_log_grid(spec: str) -> list[float]:
    """``min:max:count`` log-spaced."""
    try:
        lo, hi, count = spec.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
    except ValueError as exc:
        raise ConfigError(f"malformed grid {spec!r}; expected min:max:count") from exc
    if not 0 < lo < hi or count < 2:
        raise ConfigError(f"grid {spec!r} needs 0 < min < max and count >= 2")
    return [float(x) for x in np.logspace(math.log10(lo), math.log10(hi), count)]


def _efficiencies(grid: list[float]) -> list[float]:
    for v in grid:
        if not 0.0 <= v <= 1.0:
            raise ConfigError(f"efficiency {v} outside [0, 1]")
    return grid


def _problem(cfg: dict, eta_D: float, eta_H: Optional[float] = None) -> OptimizationProblem:
    return OptimizationProblem(
        eta_D=eta_D,
        objective=Objective(cfg["optimizer.objective"]),
        symmetric_ansatz=cfg["optimizer.symmetric_ansatz"],
        eta_H=cfg["loss.eta_H"] if eta_H is None else eta_H,
        t_c=cfg["source.t_c"],
        restarts=cfg["optimizer.restarts"],
        warm_starts=cfg["optimizer.warm_starts"],
        seed=cfg["run.seed"],
        xatol=cfg["optimizer.xatol"],
        fatol=cfg["optimizer.fatol"],
        maxfev=cfg["optimizer.maxfev"],
        cutoff=cfg["run.cutoff"],
    )


def _pmap(cfg: dict, fn: Callable, items: Sequence) -> list:
    # results come back in input order whatever the completion order
    if cfg["run.workers"] > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=cfg["run.workers"]) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- commands


def _opt_row(args) -> dict:
    cfg, eta = args
    r = maximize_chsh(_problem(cfg, eta))
    return {
        "eta_D": eta, "S_optimal": r.S, "t_b": r.source.t_b, "g": r.source.g,
        "alpha1": r.settings.alpha1, "alpha2": r.settings.alpha2,
        "beta1": r.settings.beta1, "beta2": r.settings.beta2,
    }


def cmd_table_s1(cfg: dict, args) -> tuple[list[dict], dict, dict]:
    rows = ROWS
    if args.eta is not None:
        rows = [r for r in ROWS if abs(r.eta_D - args.eta) < 1e-9]
        if not rows:
            raise ConfigError(f"no tabulated row at eta_D = {args.eta}")
    out, failures = [], []
    for row in rows:
        params = ProtocolParams(row.source(t_c=cfg["source.t_c"]), LossParams(eta_D=row.eta_D), cutoff=cfg["run.cutoff"])
        s_sim = measure_chsh_sim(params, row.settings()).S
        s_an = chsh(row.source(t_c=cfg["source.t_c"]), row.eta_D, row.settings()).S
        rec = {
            "eta_D": row.eta_D, "t_b": row.t_b, "t_b_transmittance": row.transmittance, "g": row.g,
            "alpha1": row.alpha1, "alpha2": row.alpha2, "beta1": row.beta1, "beta2": row.beta2,
            "S_analytic": s_an, "S_simulated": s_sim, "S_tabulated": row.S, "delta": s_sim - row.S,
        }
        if abs(s_sim - row.S) > TABLE_TOL:
            failures.append(f"eta_D={row.eta_D}: |S_sim - S_tab| = {abs(s_sim - row.S):.2e}")
        out.append(rec)
    if args.verify_optimizer:
        opt = _pmap(cfg, _opt_row, [(cfg, r["eta_D"]) for r in out])
        for rec, o in zip(out, opt):
            rec["S_optimized"] = o["S_optimal"]
            if o["S_optimal"] < rec["S_tabulated"] - TABLE_TOL:
                failures.append(f"eta_D={rec['eta_D']}: optimizer reached {o['S_optimal']:.6f}")
    units = {"eta_D": "1", "t_b": "amplitude", "t_b_transmittance": "1", "g": "1", "S_*": "1", "alpha*/beta*": "sqrt(photons)"}
    return out, units, {"failures": failures}


def cmd_sweep_eta(cfg: dict, args) -> tuple[list[dict], dict, dict]:
    grid = _efficiencies(parse_linear_grid(args.grid or cfg["sweep.eta"]))
    rows = _pmap(cfg, _opt_row, [(cfg, e) for e in grid])
    for r in rows:
        r["classical_bound"] = 2.0
    meta = {"marker_psi_family_threshold": PSI_FAMILY_THRESHOLD, "marker_eberhard": POLARISATION_THRESHOLD}
    return rows, {"eta_D": "1", "S_optimal": "1", "t_b": "transmittance", "g": "1"}, meta


def cmd_success_prob(cfg: dict, args) -> tuple[list[dict], dict, dict]:
    grid = _efficiencies(parse_log_grid(args.grid or cfg["sweep.eta_c"]))
    g, t_b, t_s = cfg["source.g"], cfg["source.t_b"], cfg["source.t_sppe"]
    variants = {
        "two_tmsv": ProtocolVariant.from_g(VariantKind.TWO_TMSV, g),
        "hybrid": ProtocolVariant.from_g(VariantKind.HYBRID, g, t_b),
        "two_sppe": ProtocolVariant.from_g(VariantKind.TWO_SPPE, g, t_s),
    }
    rows = []
    for eta_c in grid:
        rec = {"eta_C": eta_c}
        for name, v in variants.items():
            rec["P_" + name] = success_probability(*variant_p1(v), eta_c)
        rows.append(rec)
    for i, rec in enumerate(rows):
        j, k = (i, i + 1) if i + 1 < len(rows) else (i - 1, i)
        rec["slope_hybrid"] = math.log(rows[k]["P_hybrid"] / rows[j]["P_hybrid"]) / math.log(
            rows[k]["eta_C"] / rows[j]["eta_C"]
        )
        rec["ordered"] = int(rec["P_two_tmsv"] >= rec["P_hybrid"] >= rec["P_two_sppe"])
    meta = {"small_t_regime": variants["two_sppe"].small_t_regime}
    return rows, {"eta_C": "1", "P_*": "probability per attempt", "slope_hybrid": "d log P / d log eta_C"}, meta


def _di_row(args) -> dict:
    cfg, eta = args
    hyb = maximize_chsh(_problem(cfg, eta)).S
    psi = maximize_generic_chsh(PathFamily.ANTICORRELATED, eta, cfg["optimizer.restarts"], cfg["run.seed"]).abs_S
    rate = cfg["metrics.rate"] or None
    rec = {"eta_D": eta}
    for name, S in (("hybrid", hyb), ("psi", psi)):
        m = di_metrics(max(S, 2.0), rate)
        rec[f"S_{name}"] = S
        rec[f"h_min_{name}"] = m.h_min
        rec[f"chi_max_{name}"] = m.chi_max
        if rate is not None:
            rec[f"rate_{name}"] = m.rate_lower_bound
    return rec


def cmd_di_metrics(cfg: dict, args) -> tuple[list[dict], dict, dict]:
    grid = _efficiencies(parse_linear_grid(args.grid or cfg["sweep.eta"]))
    rows = _pmap(cfg, _di_row, [(cfg, e) for e in grid])
    return rows, {"eta_D": "1", "S_*": "1", "h_min_*": "bits", "chi_max_*": "bits", "rate_*": "bits/s"}, {}


def _compare_row(args) -> dict:
    cfg, eta = args
    r = {"eta": eta}
    for kind in (PathFamily.CORRELATED, PathFamily.ANTICORRELATED):
        o = maximize_generic_chsh(kind, eta, cfg["optimizer.restarts"], cfg["run.seed"])
        r[f"S_{kind.value}"] = o.S
        r[f"abs_S_{kind.value}"] = o.abs_S
    return r


def _loss_row(args) -> dict:
    cfg, eta_H, eta_D = args
    row = nearest_rows(eta_D, 1)[0]
    params = ProtocolParams(row.source(), LossParams.symmetric(eta_H, eta_D), cutoff=cfg["run.cutoff"])
    fixed = measure_chsh_sim(params, row.settings()).S
    best = maximize_chsh(_problem(cfg, eta_D, eta_H=eta_H)).S
    return {"eta_H": eta_H, "eta_D": eta_D, "S_table_settings": fixed, "S_reoptimized": best}


def cmd_compare_states(cfg: dict, args) -> tuple[list[dict], dict, dict]:
    if args.fig_s2:
        eta_h = _efficiencies(parse_linear_grid(args.grid or cfg["sweep.eta_h"]))
        rows = _pmap(cfg, _loss_row, [(cfg, h, cfg["loss.eta_D"]) for h in eta_h])
        return rows, {"eta_H": "1", "eta_D": "1", "S_*": "1"}, {}
    grid = _efficiencies(parse_linear_grid(args.grid or cfg["sweep.eta"]))
    rows = _pmap(cfg, _compare_row, [(cfg, e) for e in grid])
    meta = {}
    for kind in (PathFamily.CORRELATED, PathFamily.ANTICORRELATED):
        try:
            meta[f"threshold_{kind.value}"] = generic_threshold(
                kind, cfg["threshold.tol"], cfg["run.seed"], cfg["optimizer.restarts"]
            )
        except NoViolationError:
            meta[f"threshold_{kind.value}"] = None
    return rows, {"eta": "1", "S_*": "1"}, meta


def cmd_optimize(cfg: dict, args) -> tuple[list[dict], dict, dict]:
    r = maximize_chsh(_problem(cfg, cfg["loss.eta_D"]))
    rec = {
        "eta_D": cfg["loss.eta_D"], "eta_H": cfg["loss.eta_H"], "S": r.S, "t_b": r.source.t_b, "g": r.source.g,
        "alpha1": r.settings.alpha1, "alpha2": r.settings.alpha2,
        "beta1": r.settings.beta1, "beta2": r.settings.beta2,
        "evaluations": r.evaluations, "restarts": r.restarts_used, "seed": r.seed, "degenerate": int(r.degenerate),
    }
    return [rec], {"S": "1", "t_b": "transmittance", "g": "1"}, {}


COMMANDS = {
    "table-s1": cmd_table_s1,
    "sweep-eta": cmd_sweep_eta,
    "success-prob": cmd_success_prob,
    "di-metrics": cmd_di_metrics,
    "compare-states": cmd_compare_states,
    "optimize": cmd_optimize,
}


# ---------------------------------------------------------------- output


def _fmt(v: Any) -> Any:
    if isinstance(v, bool) or v is None or isinstance(v, (int, str)):
        return v
    if isinstance(v, float):
        return float(f"{v:.9g}")
    return v


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def render(command: str, cfg: dict, rows: list[dict], units: dict, meta: dict, fmt: str) -> str:
    header = {
        "artifact_version": __version__,
        "command": command,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "units": units,
        **{k: _fmt(v) for k, v in meta.items()},
    }
    if fmt == "json":
        doc = {"metadata": header, "rows": [{k: _fmt(v) for k, v in r.items()} for r in rows]}
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"
    buf = io.StringIO()
    for key, val in header.items():
        buf.write(f"# {key}: {json.dumps(val, sort_keys=True)}\n")
    columns = list(rows[0]) if rows else []
    for r in rows:
        for k in r:
            if k not in columns:
                columns.append(k)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow(["" if r.get(c) is None else (f"{r[c]:.9g}" if isinstance(r.get(c), float) else r[c]) for c in columns])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file with section prefixes (source.g, loss.eta_D, ...)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--cutoff", type=int, default=None, help="Fock cutoff for simulations")
    common.add_argument("--workers", type=int, default=None, help="process-pool size for sweeps")

    parser = argparse.ArgumentParser(prog="pnpe", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("table-s1", parents=[common], help="regress the tabulated optimal settings")
    p.add_argument("--eta", type=float, help="only the row at this eta_D")
    p.add_argument("--verify-optimizer", action="store_true", help="re-optimise each row")
    p = sub.add_parser("sweep-eta", parents=[common], help="optimal S versus eta_D")
    p.add_argument("--grid", help="start:stop:step")
    p = sub.add_parser("success-prob", parents=[common], help="success probability of three architectures")
    p.add_argument("--grid", help="min:max:count, log-spaced in eta_C")
    p = sub.add_parser("di-metrics", parents=[common], help="min-entropy and Holevo bound versus eta_D")
    p.add_argument("--grid", help="start:stop:step")
    p = sub.add_parser("compare-states", parents=[common], help="correlated versus anticorrelated families")
    p.add_argument("--grid", help="start:stop:step (eta, or eta_H with --fig-s2)")
    p.add_argument("--fig-s2", action="store_true", help="emit the (eta_H, eta_D, S) loss grid instead")
    sub.add_parser("optimize", parents=[common], help="single optimisation at loss.eta_D")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if not 1 <= cfg["run.cutoff"] <= 12:
            raise ConfigError("cutoff must lie in [1, 12]")
        rows, units, meta = COMMANDS[args.command](cfg, args)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = render(args.command, cfg, rows, units, meta, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failures = meta.get("failures") or []
    for f in failures:
        print(f"check failed: {f}", file=sys.stderr)
    return EXIT_CHECK if failures else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
