"""Monte Carlo ensembles: reproducible seeds, batched runs, statistics.

Realizations are processed in fixed-size chunks; each chunk owns its
noise synthesis and integration and deposits per-realization values into
a staging buffer indexed by realization, so the final reduction (an
index-ordered compensated sum) is identical for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    GeometryCollapseError,
    IntegratorConfig,
    decompose,
    run_batch,
    wronskian,
)
from .noise import NoiseSpec, synthesize_many

__all__ = [
    "CHUNK_SIZE",
    "EnsembleConfig",
    "EnsembleStats",
    "InvariantViolationError",
    "TooManyAbortsError",
    "derive_seed",
    "splitmix64",
    "run_ensemble",
    "convergence_report",
    "ConvergenceReport",
]

CHUNK_SIZE = 1024           # fixed: reduction must not depend on worker count

WRONSKIAN_TOL = 1e-8
SUM_RULE_TOL = 1e-6
MAX_ABORT_FRACTION = 0.01

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One round of the splitmix64 mixer (public 64-bit avalanche)."""
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Collision-free per-realization seed stream from one master seed."""
    return splitmix64((master_seed + index * _GOLDEN) & _MASK64)


class InvariantViolationError(RuntimeError):
    """A realization violated a conserved-quantity bound."""

    def __init__(self, entries):
        self.entries = list(entries)   # dicts: realization, kind, value, time
        first = self.entries[0]
        super().__init__(
            f"{len(self.entries)} invariant violation(s); first: "
            f"{first['kind']}={first['value']:.3e} at t={first['time']} "
            f"(realization {first['realization']})"
        )


class TooManyAbortsError(RuntimeError):
    """More than the tolerated fraction of realizations collapsed."""


@dataclass(frozen=True)
class EnsembleConfig:
    n_realizations: int
    master_seed: int
    probes: tuple
    horizon: float
    workers: int = 0            # 0 = auto
    in_mode: int = 1
    initial: str = "vacuum"

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")
        if self.horizon <= 0:
            raise ValueError("horizon must be > 0")
        if self.workers < 0:
            raise ValueError("workers must be >= 0")
        if len(self.probes) == 0:
            raise ValueError("at least one probe time is required")


@dataclass
class EnsembleStats:
    """Ensemble means at the probe times, with sampling errors.

    Arrays are keyed by (quantity, mode); mode 0 marks quantities that
    are not per-mode.  standard_error is NaN when n_effective == 1.
    """

    times: np.ndarray
    mean: dict
    variance: dict
    standard_error: dict
    n_effective: int
    aborted: list = field(default_factory=list)
    violation_log: list = field(default_factory=list)

    def keys(self):
        return list(self.mean.keys())


def _quantity_panel(res, system, in_mode, initial):
    """Per-realization quantities at each probe: (B, P, nq) plus keys."""
    B, P, m = res.Q.shape
    kin = in_mode - 1
    keys = []
    cols = []
    beta2 = np.empty((B, P, m))
    for p in range(P):
        _, beta = decompose(res.Q[:, p, :], res.P[:, p, :], system.omegas,
                            res.times[p])
        beta2[:, p, :] = np.abs(beta) ** 2
    for k in range(m):
        keys.append(("beta2", k + 1))
        cols.append(beta2[:, :, k])
    keys.append(("beta2_total", 0))
    cols.append(beta2.sum(axis=2))
    q = res.Q[:, :, kin]
    for name, arr in (
        ("q_re", q.real), ("q_im", q.imag),
        ("q2_re", (q * q).real), ("q2_im", (q * q).imag),
        ("abs_q2", np.abs(q) ** 2),
    ):
        keys.append((name, 0))
        cols.append(arr)
    return keys, np.stack(cols, axis=2)


def _check_invariants(res, system, integrator, horizon, initial, chunk_start):
    """Conservation checks on every realization; returns violation entries."""
    B, P, m = res.Q.shape
    entries = []
    if m == 1:
        W0 = 1j if initial == "vacuum" else 0.0
        for p in range(P):
            drift = np.abs(wronskian(res.Q[:, p, :], res.P[:, p, :]) - W0)
            for b in np.nonzero(drift > WRONSKIAN_TOL)[0]:
                entries.append({
                    "realization": chunk_start + int(b), "kind": "wronskian",
                    "value": float(drift[b]), "time": float(res.times[p]),
                })
    elif integrator.window_ramp > 0 and abs(res.times[-1] - horizon) <= 0.5 * res.dt:
        # wall is exactly at rest at the windowed final time
        alpha, beta = decompose(res.Q[:, -1, :], res.P[:, -1, :],
                                system.omegas, res.times[-1])
        mismatch = np.abs(
            np.sum(np.abs(alpha) ** 2 - np.abs(beta) ** 2, axis=1) - 1.0
        )
        for b in np.nonzero(mismatch > SUM_RULE_TOL)[0]:
            entries.append({
                "realization": chunk_start + int(b), "kind": "sum_rule",
                "value": float(mismatch[b]), "time": float(res.times[-1]),
            })
    return entries


def _run_chunk(system, noise_spec, integrator, ensemble, start, stop):
    """Integrate realizations [start, stop); returns staged results."""
    idx = list(range(start, stop))
    seeds = [derive_seed(ensemble.master_seed, i) for i in idx]
    aborted = []
    while True:
        keep = [i for i in range(len(idx)) if idx[i] not in aborted]
        reals = synthesize_many(noise_spec, [seeds[i] for i in keep],
                                ensemble.horizon)
        try:
            res = run_batch(system, reals, integrator, ensemble.horizon,
                            ensemble.probes, noise_spec,
                            ensemble.initial, ensemble.in_mode)
            break
        except GeometryCollapseError as err:
            aborted.extend(idx[keep[b]] for b in err.batch_indices)
    keys, panel = _quantity_panel(res, system, ensemble.in_mode, ensemble.initial)
    violations = _check_invariants(res, system, integrator, ensemble.horizon,
                                   ensemble.initial, start)
    for entry in violations:
        # staged row numbers skip aborted members; map back to indices
        entry["realization"] = idx[keep[entry["realization"] - start]]
    return start, [idx[i] for i in keep], keys, panel, res.times, violations, aborted


def run_ensemble(system, noise_spec: NoiseSpec, integrator: IntegratorConfig,
                 ensemble: EnsembleConfig) -> EnsembleStats:
    """Run the full ensemble and aggregate statistics.

    Bit-identical output for any worker count: chunk boundaries are fixed
    and the reduction folds the staging buffer in realization order.
    Invariant violations raise; collapsed realizations are excluded
    (failing the run if they exceed 1% of the ensemble).
    """
    N = ensemble.n_realizations
    chunks = [(s, min(N, s + CHUNK_SIZE)) for s in range(0, N, CHUNK_SIZE)]
    results = []
    workers = ensemble.workers
    if workers == 0:
        import os
        workers = os.cpu_count() or 1
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(_run_chunk, system, noise_spec, integrator,
                            ensemble, s, e)
                for s, e in chunks
            ]
            results = [f.result() for f in futures]
    else:
        results = [_run_chunk(system, noise_spec, integrator, ensemble, s, e)
                   for s, e in chunks]

    results.sort(key=lambda r: r[0])
    keys = results[0][2]
    times = results[0][4]
    aborted = sorted(a for r in results for a in r[6])
    violations = sorted((v for r in results for v in r[5]),
                        key=lambda v: v["realization"])
    if violations:
        raise InvariantViolationError(violations)
    if len(aborted) > MAX_ABORT_FRACTION * N:
        raise TooManyAbortsError(
            f"{len(aborted)}/{N} realizations collapsed (> "
            f"{100 * MAX_ABORT_FRACTION:.0f}% tolerated)"
        )

    n_eff = N - len(aborted)
    P = times.size
    staged = np.empty((n_eff, P, len(keys)))
    row = 0
    for r in results:
        panel = r[3]
        staged[row:row + panel.shape[0]] = panel
        row += panel.shape[0]

    mean, var, sem = {}, {}, {}
    for j, key in enumerate(keys):
        mcol = np.empty(P)
        vcol = np.empty(P)
        for p in range(P):
            col = staged[:, p, j]
            mcol[p] = math.fsum(col) / n_eff
            if n_eff > 1:
                vcol[p] = math.fsum((col - mcol[p]) ** 2) / (n_eff - 1)
            else:
                vcol[p] = math.nan
        mean[key] = mcol
        var[key] = vcol
        sem[key] = np.sqrt(vcol / n_eff)
    return EnsembleStats(times, mean, var, sem, n_eff, aborted, violations)


@dataclass(frozen=True)
class ConvergenceReport:
    n_values: tuple
    errors: tuple
    exponent: float
    scaling_ok: bool           # exponent within [-0.6, -0.4]


def convergence_report(stats_list, key=("beta2_total", 0),
                       probe: int = -1) -> ConvergenceReport:
    """Fit the sampling-error decay against ensemble size.

    For iid realizations the standard error falls as N^(-1/2); the fitted
    log-log slope should sit in [-0.6, -0.4] over a decade of N.
    """
    ns = [s.n_effective for s in stats_list]
    errs = [float(s.standard_error[key][probe]) for s in stats_list]
    if len(ns) < 2 or any(e <= 0 or math.isnan(e) for e in errs):
        raise ValueError("need >= 2 ensembles with positive standard errors")
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    return ConvergenceReport(tuple(ns), tuple(errs), float(slope),
                             -0.6 <= slope <= -0.4)
