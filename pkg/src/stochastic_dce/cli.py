"""Command-line surface: simulate | predict | compare | spectrum | noise-dump.

Exit codes: 0 success, 1 failed comparison or invariant violation,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
import time
import warnings

import numpy as np

from . import __version__
from .cavity import ModeIndex
from .config import ConfigError, RunConfig, Scenario, load_config
from .ensemble import (
    EnsembleConfig,
    InvariantViolationError,
    TooManyAbortsError,
    derive_seed,
    run_ensemble,
)
from .noise import NoiseKind, synthesize
from .theory import (
    cosmo_beta2,
    msa_deterministic_beta2,
    msa_mean_q,
    msa_mean_q2,
    msa_stochastic_beta2,
    slow_flow_rates,
    solve_occupations,
)

log = logging.getLogger("sdce")

SERIES_HEADER = ["t", "quantity", "mode", "mean", "stderr"]
PREDICT_HEADER = ["t", "quantity", "mode", "value"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.17g}"


def _sub_master(master: int, label: int, n_systems: int) -> int:
    # independent streams per k in a cosmology sweep
    if n_systems == 1:
        return master
    return derive_seed(master, (1 << 32) + label)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    changed = {}
    if args.seed is not None:
        changed["master_seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changed["workers"] = args.workers
    if changed:
        cfg = dataclasses.replace(
            cfg, ensemble=dataclasses.replace(cfg.ensemble, **changed)
        )
    return cfg


# ---------------------------------------------------------------------------
# simulate


def _truncation_check(cfg: RunConfig) -> None:
    """Warn when the retained z-family looks too small for the run."""
    if cfg.scenario is not Scenario.COUPLED_STOCHASTIC:
        return
    from .theory import perturbative_beta2

    top = ModeIndex(cfg.cavity.nz_max)
    n_in = ModeIndex(cfg.ensemble.in_mode)
    horizon = cfg.ensemble.horizon
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        top_n = float(perturbative_beta2(cfg.cavity, cfg.noise, top, n_in, horizon))
        total = sum(
            float(perturbative_beta2(cfg.cavity, cfg.noise, ModeIndex(nz), n_in, horizon))
            for nz in range(1, cfg.cavity.nz_max + 1)
        )
    if total > 0 and top_n > 0.01 * total:
        log.warning(
            "highest retained mode nz=%d carries %.1f%% of the predicted "
            "occupation; raise nz_max to control truncation error",
            cfg.cavity.nz_max, 100.0 * top_n / total,
        )


def cmd_simulate(cfg: RunConfig, out_dir) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    _truncation_check(cfg)
    systems = cfg.systems()
    rows = []
    seed_info = {
        "master_seed": cfg.ensemble.master_seed,
        "scheme": "seed_i = splitmix64(master + i*0x9E3779B97F4A7C15 mod 2^64)",
        "per_system": {},
    }
    summary = {
        "version": __version__,
        "scenario": cfg.scenario.value,
        "config": cfg.raw,
        "seeds": seed_info,
        "n_effective": {},
        "aborted": {},
        "violations": [],
    }
    started = time.time()
    code = 0
    try:
        for label, system in systems:
            sub = _sub_master(cfg.ensemble.master_seed, label, len(systems))
            ens = dataclasses.replace(cfg.ensemble, master_seed=sub)
            log.info("simulating system %d/%d (%d realizations)",
                     label, len(systems), ens.n_realizations)
            stats = run_ensemble(system, cfg.noise, cfg.integrator, ens)
            seed_info["per_system"][str(label)] = {
                "sub_master": sub,
                "realization_seeds": [derive_seed(sub, i)
                                      for i in range(ens.n_realizations)],
            }
            summary["n_effective"][str(label)] = stats.n_effective
            summary["aborted"][str(label)] = stats.aborted
            rows.extend(_series_rows(cfg, label, system, stats))
    except InvariantViolationError as err:
        summary["violations"] = err.entries
        code = 1
        log.error("invariant violation: %s", err)
    except TooManyAbortsError as err:
        summary["violations"] = [{"kind": "abort_fraction", "detail": str(err)}]
        code = 1
        log.error("%s", err)
    summary["runtime_seconds"] = time.time() - started

    with open(out_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    if code == 0:
        with open(out_dir / "series.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_HEADER)
            w.writerows(rows)
        log.info("wrote %s and %s", out_dir / "series.csv", out_dir / "summary.json")
    return code


def _series_rows(cfg, label, system, stats):
    rows = []
    cosmo = cfg.scenario is Scenario.COSMOLOGY
    for (quantity, mode), mean in stats.mean.items():
        out_mode = label if cosmo else mode
        err = stats.standard_error[(quantity, mode)]
        for p, t in enumerate(stats.times):
            rows.append([_fmt(t), quantity, out_mode, _fmt(mean[p]), _fmt(err[p])])
    return rows


# ---------------------------------------------------------------------------
# predict


def _grid_probes(cfg: RunConfig) -> np.ndarray:
    """Probe times rounded to the integrator grid, as simulate reports them."""
    nsteps = max(1, int(math.ceil(cfg.ensemble.horizon / cfg.integrator.dt - 1e-9)))
    dt = cfg.ensemble.horizon / nsteps
    idx = np.unique(np.clip(
        np.round(np.asarray(cfg.ensemble.probes, dtype=float) / dt).astype(np.intp),
        0, nsteps))
    return idx * dt


def cmd_predict(cfg: RunConfig, out_dir) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    t = _grid_probes(cfg)
    rows = []

    def emit(quantity, mode, values):
        vals = np.broadcast_to(np.asarray(values), t.shape)
        for p in range(t.size):
            rows.append([_fmt(t[p]), quantity, mode, _fmt(vals[p])])

    if cfg.scenario is Scenario.SINGLE_MODE_STOCHASTIC:
        w, eps = cfg.omega, cfg.epsilon
        if cfg.ensemble.initial == "vacuum":
            b2 = msa_stochastic_beta2(w, eps, cfg.noise, t)
            q = msa_mean_q(w, eps, cfg.noise, t, "vacuum")
            emit("beta2", 1, b2)
            emit("beta2_total", 0, b2)
            emit("q_re", 0, q.real)
            emit("q_im", 0, q.imag)
            emit("abs_q2", 0, (1.0 + 2.0 * b2) / (2.0 * w))
        else:
            q = msa_mean_q(w, eps, cfg.noise, t, "position_kick")
            q2 = msa_mean_q2(w, eps, cfg.noise, t)
            emit("q_re", 0, q.real)
            emit("q_im", 0, np.zeros_like(t))
            emit("q2_re", 0, q2)
            emit("q2_im", 0, np.zeros_like(t))
            emit("abs_q2", 0, q2)
    elif cfg.scenario is Scenario.SINGLE_MODE_DETERMINISTIC:
        w, eps = cfg.omega, cfg.epsilon
        resonant = abs(cfg.noise.omega_drive - 2.0 * w) <= math.pi / cfg.ensemble.horizon
        b2 = msa_deterministic_beta2(w, eps, t) if resonant else np.zeros_like(t)
        emit("beta2", 1, b2)
        emit("beta2_total", 0, b2)
    elif cfg.scenario is Scenario.COUPLED_STOCHASTIC:
        t_eval = t
        if cfg.integrator.window_ramp > 0:
            # the on/off window scales the drive power by w(t)^2, so the
            # slow flow sees the accumulated exposure int_0^t w^2 ds
            from .dynamics import Window

            win = Window(cfg.integrator.window_ramp, cfg.ensemble.horizon)
            s = np.linspace(0.0, cfg.ensemble.horizon, 40001)
            w2 = win.profile(s)[0] ** 2
            cum = np.concatenate(
                [[0.0], np.cumsum(0.5 * (w2[1:] + w2[:-1]) * np.diff(s))]
            )
            t_eval = np.interp(t, s, cum)
        rates = slow_flow_rates(cfg.cavity, cfg.noise)
        sol = solve_occupations(rates, cfg.cavity, ModeIndex(cfg.ensemble.in_mode),
                                t_eval)
        emit("beta2_total", 0, sol.beta2_total)
    else:
        for label, k in enumerate(cfg.k_grid, start=1):
            b2 = cosmo_beta2(k, cfg.mass, cfg.epsilon, cfg.noise, t)
            emit("beta2", label, b2)
            emit("beta2_total", label, b2)

    with open(out_dir / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PREDICT_HEADER)
        w.writerows(rows)
    log.info("wrote %s", out_dir / "predictions.csv")
    return 0


# ---------------------------------------------------------------------------
# compare


def _read_csv(path, expected_header):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            rows = list(reader)
    except FileNotFoundError:
        raise ConfigError(f"file not found: {path}")
    if header != expected_header:
        raise ConfigError(
            f"{path}: expected columns {expected_header}, found {header}"
        )
    return rows


def cmd_compare(cfg: RunConfig, simulated, predicted, out_dir) -> int:
    sim_rows = _read_csv(simulated, SERIES_HEADER)
    pre_rows = _read_csv(predicted, PREDICT_HEADER)
    tol = cfg.compare
    theory = {(float(r[0]), r[1], int(r[2])): float(r[3]) for r in pre_rows}
    points = []
    for r in sim_rows:
        key = (float(r[0]), r[1], int(r[2]))
        if key not in theory:
            continue
        mean = float(r[3])
        stderr = float(r[4]) if r[4] else math.nan
        ref = theory[key]
        diff = mean - ref
        bound = tol.rel_tol * abs(ref) + tol.abs_tol
        if not math.isnan(stderr):
            bound = max(bound, tol.k_sigma * stderr)
        points.append({
            "t": key[0], "quantity": key[1], "mode": key[2],
            "mc": mean, "theory": ref, "diff": diff, "bound": bound,
            "pass": abs(diff) <= bound,
        })
    if not points:
        raise ConfigError("no joinable (t, quantity, mode) points between inputs")

    points.sort(key=lambda p: (p["quantity"], p["mode"], p["t"]))
    n_pass = sum(p["pass"] for p in points)
    frac = n_pass / len(points)
    runs_z = _runs_test([p["diff"] for p in points])
    ok = frac >= 0.95 and (runs_z is None or abs(runs_z) <= 4.0)

    report = {
        "n_points": len(points),
        "n_pass": n_pass,
        "pass_fraction": frac,
        "runs_test_z": runs_z,
        "overall_pass": ok,
        "points": points,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "compare.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    log.info("compare: %d/%d points pass (runs z=%s) -> %s",
             n_pass, len(points), runs_z, "PASS" if ok else "FAIL")
    print(f"{n_pass}/{len(points)} points within tolerance; "
          f"{'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def _runs_test(diffs):
    """Wald-Wolfowitz z on the sign sequence; None if too few of a sign."""
    signs = [d > 0 for d in diffs if d != 0]
    n_pos = sum(signs)
    n_neg = len(signs) - n_pos
    if min(n_pos, n_neg) < 5:
        return None
    runs = 1 + sum(signs[i] != signs[i - 1] for i in range(1, len(signs)))
    n = n_pos + n_neg
    mu = 2.0 * n_pos * n_neg / n + 1.0
    var = (mu - 1.0) * (mu - 2.0) / (n - 1.0)
    return (runs - mu) / math.sqrt(var)


# ---------------------------------------------------------------------------
# spectrum and noise-dump


def cmd_spectrum(cfg: RunConfig) -> int:
    if cfg.cavity is None:
        raise ConfigError("spectrum needs a coupled_stochastic config with a "
                          "cavity section")
    w = csv.writer(sys.stdout)
    w.writerow(["nz", "omega_rad_per_time", "omega_z_rad_per_time"])
    for nz, (om, omz) in enumerate(zip(cfg.cavity.omegas(), cfg.cavity.omega_zs()),
                                   start=1):
        w.writerow([nz, _fmt(om), _fmt(omz)])
    return 0


def cmd_noise_dump(cfg: RunConfig, seed: int | None) -> int:
    if seed is None:
        seed = cfg.ensemble.master_seed
    horizon = cfg.ensemble.horizon
    real = synthesize(cfg.noise, seed, horizon)
    step = cfg.integrator.dt * cfg.integrator.record_stride
    t = np.arange(0.0, horizon + 0.5 * step, step)
    t[-1] = min(t[-1], horizon)
    cols = [real.eval(t, o) for o in (0, 1, 2)]
    w = csv.writer(sys.stdout)
    w.writerow(["t", "xi", "xi_dot", "xi_ddot"])
    for i in range(t.size):
        w.writerow([_fmt(t[i]), _fmt(cols[0][i]), _fmt(cols[1][i]), _fmt(cols[2][i])])
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sdce",
        description="Monte Carlo and analytic toolkit for noise-driven "
                    "particle creation",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("simulate", "run the ensemble and write series.csv + summary.json"),
        ("predict", "evaluate closed-form predictions on the probe grid"),
        ("compare", "check simulated series against predictions"),
        ("spectrum", "print the cavity mode table"),
        ("noise-dump", "print one noise realization with derivatives"),
    ):
        sp = sub.add_parser(name, help=doc)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the master seed")
        sp.add_argument("--workers", type=int, default=None,
                        help="override the worker count")
        sp.add_argument("--quiet", action="store_true")
        if name == "compare":
            sp.add_argument("--simulated", default=None,
                            help="series.csv path (default: OUT/series.csv)")
            sp.add_argument("--predicted", default=None,
                            help="predictions.csv path (default: OUT/predictions.csv)")
    return p


def main(argv=None) -> int:
    from pathlib import Path

    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out_dir = Path(args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out_dir)
        if args.command == "predict":
            return cmd_predict(cfg, out_dir)
        if args.command == "compare":
            sim = args.simulated or out_dir / "series.csv"
            pre = args.predicted or out_dir / "predictions.csv"
            return cmd_compare(cfg, sim, pre, out_dir)
        if args.command == "spectrum":
            return cmd_spectrum(cfg)
        return cmd_noise_dump(cfg, args.seed)
    except ConfigError as err:
        log.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
