"""Monte Carlo machinery: seed derivation, worker invariance, aggregation,
abort handling, and sampling-error scaling."""

import math

import numpy as np
import pytest

import stochastic_dce.ensemble as ens
from stochastic_dce.dynamics import (
    GeometryCollapseError,
    IntegratorConfig,
    PlainOscillator,
    CavityModes,
    decompose,
    integrate,
    run_batch,
    suggest_dt,
)
from stochastic_dce.cavity import CavityConfig
from stochastic_dce.ensemble import (
    EnsembleConfig,
    InvariantViolationError,
    TooManyAbortsError,
    convergence_report,
    derive_seed,
    run_ensemble,
    splitmix64,
)
from stochastic_dce.noise import NoiseKind, NoiseSpec, synthesize, synthesize_many

BAND = NoiseSpec(kind=NoiseKind.BAND_LIMITED, sigma=1.0, nu_min=1.5, nu_max=2.5,
                 n_components=16)
SILENT = NoiseSpec(kind=NoiseKind.BAND_LIMITED, sigma=0.0, nu_min=1.5, nu_max=2.5)

SYS = PlainOscillator(omega=1.0, epsilon=0.05)


def small_cfg(n, seed=7, workers=1, horizon=10.0):
    return EnsembleConfig(n_realizations=n, master_seed=seed,
                          probes=(horizon,), horizon=horizon, workers=workers)


def integ(horizon=10.0):
    return IntegratorConfig(dt=suggest_dt(1.0, horizon))


# ---------------------------------------------------------------------------
# seeds


def test_splitmix64_reference_vectors():
    # published outputs of the splitmix64 stream seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert derive_seed(0, 0) == 0xE220A8397B1DCDAF
    assert derive_seed(0, 1) == 0x6E789E6AA1B965F4
    assert derive_seed(0, 2) == 0x06C45D188009454F


def test_splitmix64_matches_independent_implementation():
    def reference(state):
        state = (state + 0x9E3779B97F4A7C15) % 2**64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) % 2**64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) % 2**64
        return z ^ (z >> 31)

    for x in (0, 1, 42, 2**63, 2**64 - 1, 0xDEADBEEF):
        assert splitmix64(x) == reference(x)


def test_derived_seeds_unique_over_large_streams():
    seeds = {derive_seed(12345, i) for i in range(100_000)}
    assert len(seeds) == 100_000
    # different master seeds give disjoint short streams
    assert len({derive_seed(m, i) for m in (1, 2, 3) for i in range(1000)}) == 3000


def test_ensemble_config_validation():
    with pytest.raises(ValueError):
        EnsembleConfig(n_realizations=0, master_seed=1, probes=(1.0,), horizon=1.0)
    with pytest.raises(ValueError):
        EnsembleConfig(n_realizations=2, master_seed=1, probes=(), horizon=1.0)
    with pytest.raises(ValueError):
        EnsembleConfig(n_realizations=2, master_seed=1, probes=(1.0,), horizon=0.0)
    with pytest.raises(ValueError):
        EnsembleConfig(n_realizations=2, master_seed=1, probes=(1.0,), horizon=1.0,
                       workers=-1)


# ---------------------------------------------------------------------------
# aggregation correctness


def test_mean_matches_manual_reduction():
    cfg = small_cfg(8)
    stats = run_ensemble(SYS, BAND, integ(), cfg)
    seeds = [derive_seed(cfg.master_seed, i) for i in range(8)]
    reals = synthesize_many(BAND, seeds, cfg.horizon)
    res = run_batch(SYS, reals, integ(), cfg.horizon, cfg.probes, BAND)
    _, beta = decompose(res.Q[:, -1, :], res.P[:, -1, :], SYS.omegas,
                        res.times[-1])
    manual = np.mean(np.abs(beta[:, 0]) ** 2)
    assert stats.mean[("beta2_total", 0)][-1] == pytest.approx(manual, rel=1e-12)
    assert stats.n_effective == 8
    assert stats.aborted == []


def test_worker_count_does_not_change_results(monkeypatch):
    monkeypatch.setattr(ens, "CHUNK_SIZE", 16)
    cfg1 = small_cfg(64, workers=1, horizon=6.0)
    cfg3 = small_cfg(64, workers=3, horizon=6.0)
    s1 = run_ensemble(SYS, BAND, integ(6.0), cfg1)
    s3 = run_ensemble(SYS, BAND, integ(6.0), cfg3)
    for key in s1.keys():
        np.testing.assert_array_equal(s1.mean[key], s3.mean[key])
        np.testing.assert_array_equal(s1.standard_error[key], s3.standard_error[key])


def test_repeated_runs_are_identical():
    cfg = small_cfg(16, horizon=6.0)
    a = run_ensemble(SYS, BAND, integ(6.0), cfg)
    b = run_ensemble(SYS, BAND, integ(6.0), cfg)
    for key in a.keys():
        np.testing.assert_array_equal(a.mean[key], b.mean[key])


def test_silent_noise_has_zero_variance():
    cfg = small_cfg(4, horizon=6.0)
    stats = run_ensemble(SYS, SILENT, integ(6.0), cfg)
    traj = integrate(SYS, synthesize(SILENT, 0, 6.0), integ(6.0), 6.0, SILENT)
    np.testing.assert_allclose(stats.variance[("q_re", 0)], 0.0, atol=1e-28)
    assert stats.mean[("q_re", 0)][-1] == pytest.approx(traj.Q[-1, 0].real,
                                                        rel=1e-10)


def test_single_realization_has_nan_error():
    stats = run_ensemble(SYS, BAND, integ(6.0), small_cfg(1, horizon=6.0))
    assert stats.n_effective == 1
    assert math.isnan(stats.standard_error[("beta2_total", 0)][0])


# ---------------------------------------------------------------------------
# failure handling


def test_too_many_aborts_fails_the_run():
    noisy = NoiseSpec(kind=NoiseKind.BAND_LIMITED, sigma=3.0, nu_min=0.5,
                      nu_max=1.5, n_components=2)
    cav = CavityConfig(Lx=1e6, Ly=1e6, Lz0=1.0, epsilon=0.5, nz_max=1)
    sys_ = CavityModes(cav, "exact")
    cfg = EnsembleConfig(n_realizations=32, master_seed=0, probes=(30.0,),
                         horizon=30.0, workers=1)
    icfg = IntegratorConfig(dt=0.02, path="exact")
    with pytest.raises(TooManyAbortsError):
        run_ensemble(sys_, noisy, icfg, cfg)


def test_single_abort_is_excluded(monkeypatch):
    real_run_batch = ens.run_batch
    state = {"failed": False}

    def flaky(system, realizations, *args, **kwargs):
        if not state["failed"]:
            state["failed"] = True
            raise GeometryCollapseError([2])
        return real_run_batch(system, realizations, *args, **kwargs)

    monkeypatch.setattr(ens, "run_batch", flaky)
    cfg = EnsembleConfig(n_realizations=300, master_seed=7, probes=(6.0,),
                         horizon=6.0, workers=1)
    stats = run_ensemble(SYS, BAND, integ(6.0), cfg)
    assert stats.aborted == [2]
    assert stats.n_effective == 299

    # the surviving members match a clean run with realization 2 removed
    clean = run_ensemble(SYS, BAND, integ(6.0),
                         EnsembleConfig(n_realizations=300, master_seed=7,
                                        probes=(6.0,), horizon=6.0, workers=1))
    key = ("beta2_total", 0)
    kept = [i for i in range(300) if i != 2]
    seeds = [derive_seed(7, i) for i in kept]
    reals = synthesize_many(BAND, seeds, 6.0)
    res = real_run_batch(SYS, reals, integ(6.0), 6.0, (6.0,), BAND)
    _, beta = decompose(res.Q[:, -1, :], res.P[:, -1, :], SYS.omegas,
                        res.times[-1])
    assert stats.mean[key][-1] == pytest.approx(
        float(np.mean(np.abs(beta[:, 0]) ** 2)), rel=1e-12)
    assert stats.mean[key][-1] != clean.mean[key][-1]


def test_invariant_violation_raises(monkeypatch):
    monkeypatch.setattr(ens, "WRONSKIAN_TOL", 1e-30)
    with pytest.raises(InvariantViolationError) as err:
        run_ensemble(SYS, BAND, integ(6.0), small_cfg(4, horizon=6.0))
    entry = err.value.entries[0]
    assert entry["kind"] == "wronskian"
    assert 0 <= entry["realization"] < 4
    assert entry["value"] > 1e-30


# ---------------------------------------------------------------------------
# sampling-error scaling


def test_convergence_report_scaling():
    stats = [run_ensemble(SYS, BAND, integ(6.0), small_cfg(n, horizon=6.0))
             for n in (100, 300, 1000)]
    rep = convergence_report(stats)
    assert rep.n_values == (100, 300, 1000)
    assert rep.scaling_ok, f"exponent {rep.exponent}"
    assert -0.6 <= rep.exponent <= -0.4


def test_convergence_report_needs_two_points():
    stats = run_ensemble(SYS, BAND, integ(6.0), small_cfg(50, horizon=6.0))
    with pytest.raises(ValueError):
        convergence_report([stats])
