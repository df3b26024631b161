"""Command-line entry point: micropolar <subcommand> [options]."""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment as ex
from . import lindyn as ld
from . import nonlin as nl
from . import spectral as sp
from .output import to_csv, to_json
from .params import (PARAM_KEYS, PRESETS, ZERO_MODE_PRESET, PhysicalParams, classify_shape,
                     derive_constants, params_from_mapping, validate)

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_CONFIG, EXIT_PARAMS = 0, 1, 2, 3, 4

SIM_KEYS = {"N": int, "dt": float, "iota": float, "horizon_factor": float, "theta_emp": float,
            "diagnostics_stride": int, "t_end": float, "initial": str}


class CliError(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)


# ---------------------------------------------------------------- config

def read_config(path: str | None) -> dict:
    """key = value lines; '#' starts a comment.  A 'preset' key selects base parameters."""
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_CONFIG, "config", f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(EXIT_CONFIG, "config", f"{path}:{n}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def resolve_params(cfg: dict, args) -> PhysicalParams:
    name = cfg.get("preset", "zero-mode")
    if name not in PRESETS:
        raise CliError(EXIT_CONFIG, "config", f"unknown preset {name!r}")
    base = PRESETS[name]
    if getattr(args, "preset", None):
        base = PRESETS[args.preset]
    vals = base.as_dict()
    for k in PARAM_KEYS:
        if k in cfg:
            try:
                vals[k] = float(cfg[k])
            except ValueError as exc:
                raise CliError(EXIT_CONFIG, "config", f"parameter {k} is not a number: {cfg[k]!r}") from exc
        flag = getattr(args, "p_" + k, None)
        if flag is not None:
            vals[k] = flag
    return params_from_mapping(vals)


def require_valid(p: PhysicalParams) -> None:
    bad = validate(p)
    if bad:
        raise CliError(EXIT_PARAMS, "params", "inadmissible parameters: " + ", ".join(bad))


def sim_options(cfg: dict, args) -> dict:
    opts = {"N": 16, "dt": 1e-3, "iota": 1e-4, "horizon_factor": 2.0, "theta_emp": None,
            "diagnostics_stride": 100, "t_end": None, "initial": None}
    for k, typ in SIM_KEYS.items():
        if k in cfg:
            try:
                opts[k] = typ(cfg[k])
            except ValueError as exc:
                raise CliError(EXIT_CONFIG, "config", f"{k}: bad value {cfg[k]!r}") from exc
        v = getattr(args, k.lower(), None)
        if v is not None:
            opts[k] = v
    return opts


def write_out(out_dir: str | None, name: str, text: str) -> None:
    if out_dir is None:
        sys.stdout.write(text)
        return
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / name).write_text(text)


# ---------------------------------------------------------------- subcommands

def cmd_validate(p, cfg, args) -> int:
    bad = validate(p)
    res = {"params": p.as_dict(), "admissible": not bad, "violations": bad, "shape": classify_shape(p)}
    if not bad:
        dc = derive_constants(p)
        res["derived"] = {"mu_tilde": dc.mu_tilde, "alpha_tilde": dc.alpha_tilde,
                          "gamma_tilde": dc.gamma_tilde, "d": dc.d, "phi": dc.phi, "c": dc.c,
                          "s": dc.s, "c_sigma": dc.c_sigma}
    write_out(args.out, "validate.json", to_json(res) + "\n")
    return EXIT_OK if not bad else EXIT_PARAMS


def _parse_k(text: str) -> np.ndarray:
    try:
        k = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise CliError(EXIT_USAGE, "usage", f"bad wavenumber {text!r}") from exc
    if k.shape != (3,):
        raise CliError(EXIT_USAGE, "usage", f"wavenumber needs 3 components: {text!r}")
    return k


def cmd_spectrum(p, cfg, args) -> int:
    require_valid(p)
    if classify_shape(p) != "oblong":
        raise CliError(EXIT_PARAMS, "params", "spectrum of the real symbol needs lambda > nu")
    ks = [_parse_k(s) for s in (args.k or [])]
    if args.kmax is not None:
        r = int(args.kmax)
        for _, pts in sp.lattice_shells(0, r * r):
            ks += [np.array(v, float) for v in pts]
    if not ks:
        ks = [np.zeros(3)]
    header = (["k1", "k2", "k3"] + [f"re_w{i}" for i in range(1, 9)] + [f"im_w{i}" for i in range(1, 9)]
              + ["max_sigma_s", "bound_re", "bound_im", "bound_s", "bounds_ok"])
    rows = []
    ok = True
    for k in ks:
        rep = sp.spectrum_at(p, k, strict=False)
        good = all(rep.flags.values())
        ok &= good
        w = rep.values
        rows.append(list(k) + list(w.real) + list(w.imag)
                    + [rep.max_sigma_s, rep.bound_re, rep.bound_im, rep.bound_s, good])
    write_out(args.out, "spectrum.csv", to_csv(header, rows))
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_max_mode(p, cfg, args) -> int:
    require_valid(p)
    res = sp.find_max_unstable(p, guard=args.guard, fallback_radius=args.fallback_radius,
                               max_radius=args.max_radius)
    out = res.to_dict()
    out["params"] = p.as_dict()
    write_out(args.out, "max_mode.json", to_json(out) + "\n")
    return EXIT_OK


def cmd_growing_mode(p, cfg, args) -> int:
    require_valid(p)
    if classify_shape(p) != "oblong":
        raise CliError(EXIT_PARAMS, "params", "growing mode needs lambda > nu")
    gm = ld.build_growing_mode(p)
    out = gm.to_dict()
    out["params"] = p.as_dict()
    write_out(args.out, "growing_mode.json", to_json(out) + "\n")
    n = 2 * max([1] + [abs(x) for x in gm.k_star]) + 1
    pts, vals = ld.real_space_snapshot(gm.field(n, 0.0), args.grid)
    header = ["x1", "x2", "x3", "u1", "u2", "u3", "w1", "w2", "w3", "a1", "a2"]
    if args.out is not None:
        write_out(args.out, "growing_mode_snapshot.csv", to_csv(header, np.hstack([pts, vals]).tolist()))
    return EXIT_OK


def cmd_simulate(p, cfg, args) -> int:
    require_valid(p)
    o = sim_options(cfg, args)
    header = list(nl.DiagnosticsRecord.FIELDS)
    initial = o["initial"] or ("growing-mode" if classify_shape(p) == "oblong" else "random")
    if initial == "growing-mode":
        if classify_shape(p) != "oblong":
            raise CliError(EXIT_PARAMS, "params", "growing-mode initial data needs lambda > nu")
        config = ex.ExperimentConfig(n=o["N"], dt=o["dt"], theta_emp=o["theta_emp"],
                                     diagnostics_stride=o["diagnostics_stride"])
        log = ex.run_bootstrap_experiment(p, o["iota"], o["horizon_factor"], config)
        summary = log.summary()
        records = log.records
        final = log.final_state
    elif initial == "random":
        grid = nl.SpectralGrid(o["N"])
        rng = np.random.default_rng(args.seed)
        z0 = nl.random_state(grid, rng, o["iota"], kmax=min(2, grid.kmax))
        t_end = o["t_end"] if o["t_end"] is not None else 10.0
        log = ex.run_trajectory(p, z0, o["dt"], t_end, o["diagnostics_stride"])
        summary = log.summary()
        summary["config"] = {k: v for k, v in o.items()}
        summary["seed"] = args.seed
        records = log.records
        final = log.final_state
    else:
        raise CliError(EXIT_CONFIG, "config", f"unknown initial data {initial!r}")
    summary["params"] = p.as_dict()
    summary["initial"] = initial
    write_out(args.out, "diagnostics.csv", to_csv(header, [r.row() for r in records]))
    if args.out is not None:
        write_out(args.out, "summary.json", to_json(summary) + "\n")
        if args.checkpoint:
            write_out(args.out, "checkpoint.txt", nl.dump_checkpoint(p, final))
    return EXIT_OK


def cmd_verify(p, cfg, args) -> int:
    from .verify import run_suite
    res = run_suite(seed=args.seed, bound_cases=args.bound_cases, poly_cases=args.poly_cases,
                    symbol_cases=args.symbol_cases)
    rep = res["report"]
    write_out(args.out, "verify.json", to_json(rep) + "\n")
    return EXIT_OK if rep["ok"] else EXIT_VIOLATION


def _parse_values(text: str) -> list[float]:
    if ":" in text:
        lo, hi, n = text.split(":")
        return [float(x) for x in np.linspace(float(lo), float(hi), int(n))]
    return [float(x) for x in text.split(",")]


def cmd_sweep(p, cfg, args) -> int:
    cases = []
    if args.param:
        if args.param not in PARAM_KEYS:
            raise CliError(EXIT_USAGE, "usage", f"unknown parameter {args.param!r}")
        for v in _parse_values(args.values):
            q = params_from_mapping({**p.as_dict(), args.param: v})
            cases.append((f"{args.param}={v:.17g}", q))
    else:
        cases = list(PRESETS.items())
    header = ["label"] + list(PARAM_KEYS) + ["shape", "found", "k1", "k2", "k3", "eta_star",
                                             "im_w_star", "zero_mode", "n_maximizers", "radius"]
    rows = []
    for label, q in cases:
        if validate(q):
            rows.append([label] + list(q.as_dict().values()) + ["inadmissible"] + [None] * 9)
            continue
        if classify_shape(q) == "isotropic-degenerate":
            rows.append([label] + list(q.as_dict().values()) + ["isotropic-degenerate"] + [None] * 9)
            continue
        r = sp.find_max_unstable(q)
        if r.found:
            k = list(r.k_star)
            rows.append([label] + list(q.as_dict().values())
                        + [r.shape, True] + k + [r.eta_star, r.w_star.imag, not any(k),
                                                 len(r.maximizers), r.search_radius_used])
        else:
            rows.append([label] + list(q.as_dict().values())
                        + [r.shape, False, None, None, None, None, None, None, 0, r.search_radius_used])
    write_out(args.out, "sweep.csv", to_csv(header, rows))
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "spectrum": cmd_spectrum, "max-mode": cmd_max_mode,
            "growing-mode": cmd_growing_mode, "simulate": cmd_simulate, "verify": cmd_verify,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    common.add_argument("--out", help="output directory (default: stdout)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--preset", choices=sorted(PRESETS))
    common.add_argument("--threads", type=int, help="worker cap (sets MICROPOLAR_THREADS)")
    for k in PARAM_KEYS:
        common.add_argument(f"--{k}", dest="p_" + k, type=float, help=f"override {k}")
    ap = _Parser(prog="micropolar", description="Linear and nonlinear instability toolkit for "
                 "anisotropic micropolar fluids on the periodic box.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("validate", parents=[common], help="check admissibility and print derived constants")
    s = sub.add_parser("spectrum", parents=[common], help="per-wavenumber eigenvalues and bounds (CSV)")
    s.add_argument("--k", action="append", help="wavenumber k1,k2,k3 (repeatable)")
    s.add_argument("--kmax", type=int, help="all lattice points with |k| <= kmax")
    s = sub.add_parser("max-mode", parents=[common], help="maximally unstable lattice mode (JSON)")
    s.add_argument("--guard", type=float, default=0.0)
    s.add_argument("--max-radius", type=float, default=128.0)
    s.add_argument("--fallback-radius", type=float, default=sp.OBLATE_FALLBACK_RADIUS)
    s = sub.add_parser("growing-mode", parents=[common], help="growing solution (JSON) and snapshot (CSV)")
    s.add_argument("--grid", type=int, default=16, help="snapshot grid points per axis")
    s = sub.add_parser("simulate", parents=[common], help="nonlinear run with diagnostics")
    s.add_argument("--N", dest="n", type=int)
    s.add_argument("--dt", type=float)
    s.add_argument("--iota", type=float)
    s.add_argument("--horizon-factor", dest="horizon_factor", type=float)
    s.add_argument("--theta-emp", dest="theta_emp", type=float)
    s.add_argument("--diagnostics-stride", dest="diagnostics_stride", type=int)
    s.add_argument("--t-end", dest="t_end", type=float)
    s.add_argument("--initial", choices=["growing-mode", "random"])
    s.add_argument("--checkpoint", action="store_true")
    s = sub.add_parser("verify", parents=[common], help="randomised check of every bound (JSON)")
    s.add_argument("--bound-cases", type=int, default=10_000)
    s.add_argument("--poly-cases", type=int, default=1000)
    s.add_argument("--symbol-cases", type=int, default=1000)
    s = sub.add_parser("sweep", parents=[common], help="max-mode over a parameter grid (CSV)")
    s.add_argument("--param", help="parameter to vary (default: the preset table)")
    s.add_argument("--values", default="", help="comma list or lo:hi:n")
    return ap


def dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None:
            os.environ["MICROPOLAR_THREADS"] = str(max(1, args.threads))
        cfg = read_config(args.config)
        p = resolve_params(cfg, args)
        return COMMANDS[args.command](p, cfg, args)
    except CliError as exc:
        sys.stderr.write(json.dumps({"error": exc.kind, "message": str(exc), "exit_code": exc.code}) + "\n")
        return exc.code
    except (ValueError, KeyError) as exc:
        sys.stderr.write(json.dumps({"error": "params", "message": str(exc), "exit_code": EXIT_PARAMS}) + "\n")
        return EXIT_PARAMS


def main() -> None:
    sys.exit(dispatch())
