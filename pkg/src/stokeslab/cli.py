"""Command-line entry point and experiment orchestration.

Subcommands: solve, greens, assumptions, experiment, all.  Every run writes
CSV and JSON reports (plus SVG ratio plots) into --out; the `all` command
additionally writes a manifest describing the run.  Wall-clock timings go
to a separate sidecar file so repeated runs with one config and seed are
byte-identical in every other output.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import Domain, build_structured_mesh
from .greens import GreensCase, GreensLab, dyadic_profile, interpolation_error_lambda0
from .manufactured import polynomial_stokes, pressure_gradient_scenario
from .regularization import build_bump
from .report import emit_plot, write_csv, write_json
from .space import norm
from .stokes import compute_infsup, infsup_dense_oracle, infsup_spectrum, solve_body_force
from .verification import (EXPERIMENT_KINDS, ExperimentConfig, LevelLadder,
                           RatioSeries, run_assumption_suite,
                           run_stability_experiment, variation)


class ConfigError(Exception):
    pass


DEFAULTS = {
    "out": "out",
    "levels": [8, 16, 32],
    "experiment_levels": [16, 32],
    "base_n": 8,
    "degree": 2,
    "kappa": 4.0,
    "kappa_bar": 4.0,
    "K": 4.0,
    "alpha": 0.5,
    "oracle_gap": 2,
    "jobs": 1,
    "seed": 0,
    "x0": [0.3, 0.7],
    "scenario": "smooth",
    "x_tilde": [0.65, 0.65],
    "r": 0.12,
    "r_tilde": 0.52,
    "corner_delta0": 0.24,
}


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(t) for t in inner.split(",")]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def parse_config_file(path) -> dict:
    """Flat key = value lines; a TOML-compatible subset."""
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        out[key.strip()] = _parse_value(value)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stokeslab",
        description="2D Stokes max-norm stability laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "greens", "assumptions", "experiment", "all"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None)
        p.add_argument("--out", type=str, default=None)
        p.add_argument("--levels", type=str, default=None,
                       help="comma-separated n values, e.g. 8,16,32")
        p.add_argument("--degree", type=int, default=None)
        p.add_argument("--kappa", type=float, default=None)
        p.add_argument("--K", type=float, default=None)
        p.add_argument("--alpha", type=float, default=None)
        p.add_argument("--oracle-gap", type=int, default=None, dest="oracle_gap")
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        if name == "experiment":
            p.add_argument("--kind", type=str, default=None,
                           choices=EXPERIMENT_KINDS)
            p.add_argument("--scenario", type=str, default=None)
        if name == "solve":
            p.add_argument("--scenario", type=str, default=None)
    return parser


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config is not None:
        cfg.update(parse_config_file(args.config))
    for key in ("out", "degree", "kappa", "K", "alpha", "oracle_gap",
                "jobs", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "levels", None):
        cfg["levels"] = [int(t) for t in args.levels.split(",")]
        cfg["experiment_levels"] = list(cfg["levels"])
    if getattr(args, "scenario", None):
        cfg["scenario"] = args.scenario
    if getattr(args, "kind", None):
        cfg["kind"] = args.kind
    all_levels = list(cfg["levels"]) + list(cfg["experiment_levels"])
    cfg["base_n"] = min([cfg["base_n"]] + all_levels)
    base = cfg["base_n"]
    for n in all_levels:
        k = n / base
        if k < 1 or 2 ** round(math.log2(k)) != k:
            raise ConfigError(
                f"level n={n} is not base_n={base} times a power of two")
    return cfg


def make_ladder(cfg) -> LevelLadder:
    base = build_structured_mesh(Domain.unit_square(), cfg["base_n"])
    return LevelLadder(base, degree=cfg["degree"])


# ----------------------------------------------------------------------
# subcommand bodies; each returns (verdict_ok, outputs dict)

def cmd_solve(cfg, outdir: Path, ladder: LevelLadder):
    scenario = cfg.get("scenario", "smooth")
    if scenario == "null_velocity":
        man = pressure_gradient_scenario()
    else:
        man = polynomial_stokes()
    rows = []
    for n in cfg["levels"]:
        space = ladder.space(n, cfg["degree"])
        sol = solve_body_force(space, man["f"])
        e_h1 = norm(man["u"], sol.velocity, kind="L2", deriv=1, space=space)
        e_p = norm(man["p"], sol.pressure, kind="L2", space=space)
        rows.append([scenario, space.mesh.h, e_h1, e_p,
                     norm(sol.velocity, kind="Linf"), sol.residual])
    hs = np.array([r[1] for r in rows])
    errs = np.array([r[2] + r[3] for r in rows])
    if scenario == "null_velocity":
        rate = 0.0
        ok = max(r[4] for r in rows) <= 1e-10
    else:
        rate = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
        ok = abs(rate - 2.0) <= 0.15
    write_csv(outdir / "solve.csv",
              ["scenario", "h", "h1_velocity_error", "l2_pressure_error",
               "velocity_linf", "residual"], rows)
    write_json(outdir / "solve.json",
               {"scenario": scenario, "rate": rate, "pass": ok,
                "rows": [dict(zip(["scenario", "h", "h1_velocity_error",
                                   "l2_pressure_error", "velocity_linf",
                                   "residual"], r)) for r in rows]})
    return ok, {"solve.csv": outdir / "solve.csv",
                "solve.json": outdir / "solve.json"}


GREENS_CASES = (GreensCase("G0", 0), GreensCase("G1", 0, 0),
                GreensCase("G1", 0, 1), GreensCase("PressureGreen"))


def cmd_greens(cfg, outdir: Path, ladder: LevelLadder):
    domain = Domain.unit_square()
    bump = build_bump(domain)
    rows = []
    series = {}
    base_mesh = ladder.mesh(cfg["base_n"])
    x0 = base_mesh.centroids[base_mesh.locate_point(np.asarray(cfg["x0"], float))]
    for n in cfg["levels"]:
        space = ladder.space(n, cfg["degree"])
        provider = (lambda gap, n=n: ladder.space(n * 2 ** gap,
                                                  cfg["degree"] + 1))
        lab = GreensLab(space, x0, kappa=cfg["kappa"], K=cfg["K"],
                        oracle_gap=cfg["oracle_gap"], bump=bump,
                        space_provider=provider)
        decomp = lab.decomposition()
        for case in GREENS_CASES:
            pair = lab.reference(case)
            errs = lab.error_norms(pair)
            prof = dyadic_profile(pair.fine.velocity, pair.fine.pressure,
                                  lab.decomposition(pair.fine_space.mesh))
            h = space.mesh.h
            lh = abs(math.log(h))
            row = [case.label(), h, decomp.J,
                   errs["grad_err_l1"], errs["grad_err_sigma_l2"],
                   errs["grad_pressure_l1"], errs["grad_pressure_sigma_l2"],
                   errs["pressure_interp_l1"],
                   errs.get("Ph_err_l1", 0.0), errs.get("rh_err_l1", 0.0),
                   prof.slopes["max_grad_g"][0]]
            rows.append(row)
            key = case.label()
            series.setdefault(key, []).append((h, lh, errs))
    # normalized stability series per the 2D estimates
    verdicts = {}
    for key, triples in series.items():
        if len(triples) < 2:
            continue
        if key.startswith("G1"):
            vals = [e["grad_err_l1"] for (_, _, e) in triples]
            verdicts[f"{key}_grad_l1"] = variation(vals)
            vals = [e["grad_err_sigma_l2"] for (_, _, e) in triples]
            verdicts[f"{key}_grad_sigma_l2"] = variation(vals)
        elif key.startswith("G0"):
            vals = [e["grad_err_l1"] / (h * lh) for (h, lh, e) in triples]
            verdicts[f"{key}_grad_l1_over_hlogh"] = variation(vals)
            vals = [e["grad_err_sigma_l2"] / (h * math.sqrt(lh))
                    for (h, lh, e) in triples]
            verdicts[f"{key}_grad_sigma_l2_over_hsqrtlogh"] = variation(vals)
            vals = [e["grad_pressure_l1"] / lh for (h, lh, e) in triples]
            verdicts[f"{key}_pressure_grad_l1_over_logh"] = variation(vals)
            vals = [e["pressure_interp_l1"] / (h * lh) for (h, lh, e) in triples]
            verdicts[f"{key}_pressure_interp_over_hlogh"] = variation(vals)
        else:
            vals = [e["Ph_err_l1"] + e["rh_err_l1"] for (_, _, e) in triples]
            verdicts[f"{key}_l1_pair"] = variation(vals)
            vals = [e["Ph_err_sigma_l2"] + e["rh_err_sigma_l2"]
                    for (_, _, e) in triples]
            verdicts[f"{key}_sigma_pair"] = variation(vals)
    ok = all(v < 1.5 for v in verdicts.values()) if verdicts else True
    header = ["case", "h", "J", "grad_err_l1", "grad_err_sigma_l2",
              "grad_pressure_l1", "grad_pressure_sigma_l2",
              "pressure_interp_l1", "Ph_err_l1", "rh_err_l1",
              "profile_slope_max_grad"]
    write_csv(outdir / "greens.csv", header, rows)
    write_json(outdir / "greens.json",
               {"variations": verdicts, "pass": ok, "threshold": 1.5})
    return ok, {"greens.csv": outdir / "greens.csv",
                "greens.json": outdir / "greens.json"}


def cmd_assumptions(cfg, outdir: Path, ladder: LevelLadder):
    spaces = [ladder.space(n, cfg["degree"]) for n in cfg["levels"]]
    report = run_assumption_suite(spaces, alpha=cfg["alpha"],
                                  kappa=cfg["kappa"], seed=cfg["seed"])
    rows = []
    for name, sec in report.items():
        if isinstance(sec, dict):
            rows.append([name, sec.get("pass", True),
                         sec.get("variation", 0.0)])
    write_csv(outdir / "assumptions.csv", ["assumption", "pass", "variation"],
              rows)
    write_json(outdir / "assumptions.json", report)
    return bool(report["pass"]), {"assumptions.csv": outdir / "assumptions.csv",
                                  "assumptions.json": outdir / "assumptions.json"}


def _experiment_jobs(cfg):
    ex_levels = cfg.get("experiment_levels", cfg["levels"])
    jobs = []
    if "kind" in cfg and cfg["kind"]:
        kinds = [cfg["kind"]]
    else:
        kinds = list(EXPERIMENT_KINDS)
    for kind in kinds:
        scenario = cfg.get("scenario", "smooth")
        if "kind" not in cfg or not cfg.get("kind"):
            scenario = ("corner_bump" if kind.startswith("interior")
                        else "smooth")
        jobs.append((kind, scenario, tuple(ex_levels)))
    return jobs


def cmd_experiment(cfg, outdir: Path, ladder: LevelLadder):
    jobs = _experiment_jobs(cfg)
    # assemble shared spaces serially before any parallel dispatch
    for _, scenario, levels in jobs:
        for n in levels:
            ladder.space(n, cfg["degree"])
        if scenario == "corner_bump":
            ladder.space(max(levels) * 2 ** cfg["oracle_gap"], cfg["degree"] + 1)

    def run_job(job):
        kind, scenario, levels = job
        config = ExperimentConfig(
            base_n=cfg["base_n"], levels=levels, degree=cfg["degree"],
            x_tilde=cfg["x_tilde"], r=cfg["r"], r_tilde=cfg["r_tilde"],
            alpha=cfg["alpha"], kappa=cfg["kappa"], kappa_bar=cfg["kappa_bar"],
            K=cfg["K"], scenario=scenario, oracle_gap=cfg["oracle_gap"],
            seed=cfg["seed"], corner_delta0=cfg["corner_delta0"])
        return kind, run_stability_experiment(config, kind, ladder)

    if cfg["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(j) for j in jobs]
    results.sort(key=lambda kv: kv[0])

    outputs = {}
    ok = True
    rows = []
    payload = {}
    for kind, ser in results:
        ok = ok and ser.verdict == "bounded"
        for r in ser.rows:
            rows.append([ser.experiment_id, r["h"], r["lhs"], r["rhs"],
                         r["ratio"]])
        payload[ser.experiment_id] = ser.as_dict()
        svg = outdir / f"experiment_{kind}.svg"
        emit_plot(ser, svg)
        outputs[svg.name] = svg
    write_csv(outdir / "experiments.csv",
              ["experiment", "h", "lhs", "rhs", "ratio"], rows)
    write_json(outdir / "experiments.json", payload)
    outputs["experiments.csv"] = outdir / "experiments.csv"
    outputs["experiments.json"] = outdir / "experiments.json"
    return ok, outputs


def cmd_infsup(cfg, outdir: Path, ladder: LevelLadder):
    rows = []
    betas = []
    for n in cfg["levels"]:
        space = ladder.space(n, cfg["degree"])
        beta, n_kernel, above = infsup_spectrum(space)
        betas.append(beta)
        rows.append([n, space.mesh.h, beta, n_kernel, above])
    oracle = infsup_dense_oracle(ladder.space(cfg["levels"][0], cfg["degree"]))
    drift = abs(betas[-1] - betas[-2]) / betas[-1] if len(betas) > 1 else 0.0
    ok = drift < 0.05 and abs(betas[0] - oracle) < 1e-8
    write_csv(outdir / "infsup.csv",
              ["n", "h", "beta_h", "kernel_dim", "beta_above_kernel"], rows)
    write_json(outdir / "infsup.json",
               {"beta_h": betas, "oracle_coarsest": oracle,
                "finest_drift": drift, "pass": ok})
    return ok, {"infsup.csv": outdir / "infsup.csv",
                "infsup.json": outdir / "infsup.json"}


def run_command(command: str, cfg: dict, outdir: Path) -> int:
    outdir.mkdir(parents=True, exist_ok=True)
    ladder = make_ladder(cfg)
    t_start = time.time()
    stage_times = {}
    outputs = {}
    ok = True

    def stage(name, fn):
        nonlocal ok
        t0 = time.time()
        good, outs = fn(cfg, outdir, ladder)
        stage_times[name] = time.time() - t0
        ok = ok and good
        outputs.update({k: str(v) for k, v in outs.items()})

    if command == "solve":
        stage("solve", cmd_solve)
    elif command == "greens":
        stage("greens", cmd_greens)
    elif command == "assumptions":
        stage("assumptions", cmd_assumptions)
    elif command == "experiment":
        stage("experiment", cmd_experiment)
    elif command == "all":
        stage("solve", cmd_solve)
        stage("infsup", cmd_infsup)
        stage("greens", cmd_greens)
        stage("assumptions", cmd_assumptions)
        stage("experiment", cmd_experiment)
        manifest = {
            "tool": "stokeslab",
            "version": __version__,
            "config": {k: cfg[k] for k in sorted(cfg)},
            "mesh_inventory": [
                {"n": n, "h": ladder.mesh(n).h, "triangles": ladder.mesh(n).nt,
                 "vertices": ladder.mesh(n).nv}
                for n in sorted(set(cfg["levels"])
                                | set(cfg.get("experiment_levels", [])))],
            "outputs": {k: outputs[k] for k in sorted(outputs)},
            "verdict": "pass" if ok else "fail",
            "timings_file": str(outdir / "manifest.timings.json"),
        }
        write_json(outdir / "manifest.json", manifest)
        write_json(outdir / "manifest.timings.json",
                   {"total_seconds": time.time() - t_start,
                    "stages": stage_times})
        for path in outputs.values():
            if not Path(path).exists() or Path(path).stat().st_size == 0:
                print(f"error: missing or empty output {path}", file=sys.stderr)
                return 1
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(cfg["out"])
    try:
        return run_command(args.command, cfg, outdir)
    except Exception as exc:  # pragma: no cover - CLI guard
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
