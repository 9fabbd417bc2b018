"""Stationary zero-mean noise processes and smooth realizations.

A process is described by its correlation R(u) = <xi(t) xi(t+u)> and the
one-sided spectrum S(nu) = int_0^inf R(u) e^{i nu u} du.  Re S sets the
stochastic resonance rates, Im S the frequency shifts.

Realizations are smooth (at least C^2) functions of time so that xi, xi'
and xi'' can all be fed to the mode equations:

* spectral kinds (band-limited, spectral lines, deterministic sinusoid)
  are finite cosine sums, differentiated term by term;
* the Ornstein-Uhlenbeck process is sampled exactly on a fine grid and
  interpolated with a C^2 cubic B-spline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

__all__ = [
    "NoiseKind",
    "NoiseSpec",
    "NoiseConfigError",
    "NotAStochasticProcessError",
    "correlation",
    "spectrum",
    "synthesize",
    "synthesize_many",
    "eval_batch",
    "SpectralRealization",
    "OUPathRealization",
]

# Exact marginals on a grid of t_c/50, interpolation error is bounded by
# the sub-grid roughness of the path (irrelevant at the drive frequencies).
OU_GRID_PER_TC = 50


class NoiseConfigError(ValueError):
    """Invalid noise specification."""


class NotAStochasticProcessError(TypeError):
    """Correlation/spectrum queried on a deterministic drive."""


class NoiseKind(enum.Enum):
    ORNSTEIN_UHLENBECK = "ornstein_uhlenbeck"
    BAND_LIMITED = "band_limited"
    SPECTRAL_LINES = "spectral_lines"
    DETERMINISTIC_SINUSOID = "deterministic_sinusoid"


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters of one noise process.

    sigma is the RMS amplitude (R(0) = sigma^2) for the stochastic kinds.
    t_c applies to the OU kind, [nu_min, nu_max] and n_components to the
    spectral-synthesis kinds, omega_drive to the deterministic sinusoid.
    """

    kind: NoiseKind
    sigma: float = 1.0
    t_c: float | None = None
    nu_min: float | None = None
    nu_max: float | None = None
    n_components: int = 256
    omega_drive: float | None = None

    def __post_init__(self):
        k = self.kind
        if k is not NoiseKind.DETERMINISTIC_SINUSOID and self.sigma < 0:
            raise NoiseConfigError(f"sigma must be >= 0, got {self.sigma}")
        if k is NoiseKind.ORNSTEIN_UHLENBECK:
            if self.t_c is None or self.t_c <= 0:
                raise NoiseConfigError(f"OU noise needs t_c > 0, got {self.t_c}")
        elif k in (NoiseKind.BAND_LIMITED, NoiseKind.SPECTRAL_LINES):
            if self.nu_min is None or self.nu_max is None:
                raise NoiseConfigError(f"{k.value} noise needs nu_min and nu_max")
            if not (0 <= self.nu_min < self.nu_max):
                raise NoiseConfigError(
                    f"need 0 <= nu_min < nu_max, got [{self.nu_min}, {self.nu_max}]"
                )
            if self.n_components < 1:
                raise NoiseConfigError("n_components must be >= 1")
        elif k is NoiseKind.DETERMINISTIC_SINUSOID:
            if self.omega_drive is None or self.omega_drive <= 0:
                raise NoiseConfigError("sinusoid drive needs omega_drive > 0")

    @property
    def is_stochastic(self) -> bool:
        return self.kind is not NoiseKind.DETERMINISTIC_SINUSOID

    def line_frequencies(self) -> np.ndarray:
        """Deterministic line positions: centers of equal strata in the band."""
        n = self.n_components
        edges = np.linspace(self.nu_min, self.nu_max, n + 1)
        return 0.5 * (edges[:-1] + edges[1:])


def correlation(spec: NoiseSpec, u) -> np.ndarray | float:
    """R(u) = <xi(t) xi(t+u)> of the target process; even in u."""
    if not spec.is_stochastic:
        raise NotAStochasticProcessError(
            "a deterministic sinusoid drive has no ensemble correlation"
        )
    u = np.asarray(u, dtype=float)
    s2 = spec.sigma**2
    if spec.kind is NoiseKind.ORNSTEIN_UHLENBECK:
        out = s2 * np.exp(-np.abs(u) / spec.t_c)
    elif spec.kind is NoiseKind.BAND_LIMITED:
        dnu = spec.nu_max - spec.nu_min
        with np.errstate(invalid="ignore", divide="ignore"):
            out = s2 * (np.sin(spec.nu_max * u) - np.sin(spec.nu_min * u)) / (dnu * u)
        out = np.where(u == 0.0, s2, out)
    else:  # spectral lines
        nu = spec.line_frequencies()
        out = s2 * np.mean(np.cos(np.multiply.outer(u, nu)), axis=-1)
    return out if out.ndim else float(out)


def spectrum(spec: NoiseSpec, nu) -> np.ndarray | complex:
    """One-sided S(nu) = int_0^inf R(u) e^{i nu u} du, in closed form.

    Negative arguments use S(-nu) = conj(S(nu)).  For the spectral-line
    kind this is the smooth flat-band target the synthesis draws from
    (the ensemble-intended spectrum), not the line comb of one draw.
    """
    if not spec.is_stochastic:
        raise NotAStochasticProcessError(
            "a deterministic sinusoid drive has no noise spectrum"
        )
    nu = np.asarray(nu, dtype=float)
    anu = np.abs(nu)
    s2 = spec.sigma**2
    if spec.kind is NoiseKind.ORNSTEIN_UHLENBECK:
        tc = spec.t_c
        out = s2 * tc * (1.0 + 1j * anu * tc) / (1.0 + (anu * tc) ** 2)
    else:
        # flat band: Re S = pi sigma^2 / (2 dnu) inside [nu_min, nu_max]
        n1, n2 = spec.nu_min, spec.nu_max
        dnu = n2 - n1
        re = np.where((anu >= n1) & (anu <= n2), np.pi * s2 / (2.0 * dnu), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs((anu + n2) * (anu - n1)) / np.abs((anu - n2) * (anu + n1))
            im = s2 / (2.0 * dnu) * np.log(ratio)
        im = np.where(np.isfinite(im), im, 0.0)
        out = re + 1j * im
    out = np.where(nu < 0, np.conj(out), out)
    return out if out.ndim else complex(out)


# ---------------------------------------------------------------------------
# cubic B-spline interpolation on a uniform grid (C^2, vectorized over rows)

_POLE = math.sqrt(3.0) - 2.0


def bspline_coefficients(samples: np.ndarray) -> np.ndarray:
    """Interpolating cubic B-spline coefficients, mirror boundaries.

    Works along the last axis; O(n) via the standard forward/backward
    recursive filter, so it stays cheap for long multi-row sample arrays.
    """
    x = np.asarray(samples, dtype=float)
    n = x.shape[-1]
    if n < 2:
        raise ValueError("need at least two samples")
    z = _POLE
    horizon = int(math.ceil(math.log(1e-17) / math.log(abs(z))))
    if horizon <= n:
        powers = z ** np.arange(horizon)
        init = x[..., :horizon] @ powers
    else:
        # short arrays: sum over the mirror-periodized sequence so the
        # causal-filter state is exact rather than truncated
        period = 2 * (n - 1) if n > 1 else 1
        idx = _mirror(np.arange(horizon) % period, n)
        powers = z ** np.arange(horizon)
        init = x[..., idx] @ powers
    zi = (init - x[..., 0])[..., None]
    cplus = lfilter([1.0], [1.0, -z], x, axis=-1, zi=zi)[0]
    # backward pass on the reversed forward output
    last = (z / (z * z - 1.0)) * (cplus[..., -1] + z * cplus[..., -2])
    rev = cplus[..., ::-1]
    zi_b = (last + z * rev[..., 0])[..., None]
    cminus = lfilter([-z], [1.0, -z], rev, axis=-1, zi=zi_b)[0][..., ::-1]
    return 6.0 * cminus


def _mirror(idx: np.ndarray, n: int) -> np.ndarray:
    idx = np.abs(idx)
    return np.where(idx >= n, 2 * (n - 1) - idx, idx)


def bspline_evaluate(coeffs: np.ndarray, u: np.ndarray, order: int = 0) -> np.ndarray:
    """Evaluate the spline (or a derivative) at grid coordinates u.

    coeffs has the grid on its last axis; u is in grid units.  Returns an
    array broadcasting leading coeff axes against u.  Derivatives are per
    grid unit (caller rescales by the grid step).
    """
    c = np.asarray(coeffs)
    u = np.asarray(u, dtype=float)
    n = c.shape[-1]
    j = np.floor(u).astype(np.intp)
    j = np.clip(j, 0, n - 1)
    w = u - j
    if order == 0:
        w2 = w * w
        w3 = w2 * w
        b = (
            (1.0 - w) ** 3 / 6.0,
            (4.0 - 6.0 * w2 + 3.0 * w3) / 6.0,
            (1.0 + 3.0 * (w + w2 - w3)) / 6.0,
            w3 / 6.0,
        )
    elif order == 1:
        w2 = w * w
        b = (
            -0.5 * (1.0 - w) ** 2,
            0.5 * w * (3.0 * w - 4.0),
            0.5 * (1.0 + 2.0 * w - 3.0 * w2),
            0.5 * w2,
        )
    elif order == 2:
        b = (1.0 - w, 3.0 * w - 2.0, 1.0 - 3.0 * w, w)
    else:
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    out = None
    for tap, weight in enumerate(b):
        idx = _mirror(j + tap - 1, n)
        term = c[..., idx] * weight
        out = term if out is None else out + term
    return out


# ---------------------------------------------------------------------------
# realizations


@dataclass(frozen=True)
class SpectralRealization:
    """xi(t) = sum_j a_j cos(nu_j t + phi_j); derivatives are analytic."""

    spec: NoiseSpec
    seed: int
    horizon: float
    amplitudes: np.ndarray
    frequencies: np.ndarray
    phases: np.ndarray

    def eval(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        _check_range(t, self.horizon)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        out = np.zeros(tt.shape, dtype=float)
        # block the outer product to bound memory on long time arrays
        block = max(1, int(4_000_000 / max(1, self.frequencies.size)))
        if order == 0:
            weights = self.amplitudes
        elif order == 1:
            weights = -self.amplitudes * self.frequencies
        elif order == 2:
            weights = -self.amplitudes * self.frequencies**2
        else:
            raise ValueError(f"order must be 0, 1 or 2, got {order}")
        trig = np.sin if order == 1 else np.cos
        for s in range(0, tt.size, block):
            sl = slice(s, s + block)
            phase = np.multiply.outer(tt[sl], self.frequencies) + self.phases
            out[sl] = trig(phase) @ weights
        return float(out[0]) if scalar else out


@dataclass(frozen=True)
class OUPathRealization:
    """Exactly-discretized OU path with a C^2 spline interpolant.

    Paths produced together by synthesize_many keep their spline
    coefficients as rows of one shared 2-d array (stack/stack_row), so
    batch evaluation needs no per-call restacking.
    """

    spec: NoiseSpec
    seed: int
    horizon: float
    grid_step: float
    samples: np.ndarray
    coeffs: np.ndarray = field(repr=False, default=None)
    stack: np.ndarray = field(repr=False, default=None)
    stack_row: int = -1

    def eval(self, t, order: int = 0):
        t = np.asarray(t, dtype=float)
        _check_range(t, self.horizon)
        scalar = t.ndim == 0
        u = np.atleast_1d(t) / self.grid_step
        out = bspline_evaluate(self.coeffs, u, order) / self.grid_step**order
        return float(out[0]) if scalar else out


def _check_range(t: np.ndarray, horizon: float):
    tiny = 1e-9 * max(1.0, horizon)
    if np.any(t < -tiny) or np.any(t > horizon + tiny):
        raise ValueError(f"time outside [0, {horizon}]")


def synthesize(spec: NoiseSpec, seed: int, horizon: float):
    """Draw one realization; pure in (spec, seed, horizon)."""
    if horizon <= 0:
        raise NoiseConfigError(f"horizon must be > 0, got {horizon}")
    if spec.kind is NoiseKind.DETERMINISTIC_SINUSOID:
        # xi(t) = sin(omega_drive t), independent of the seed
        return SpectralRealization(
            spec,
            seed,
            horizon,
            amplitudes=np.array([1.0]),
            frequencies=np.array([spec.omega_drive]),
            phases=np.array([-0.5 * np.pi]),
        )
    rng = np.random.default_rng(np.uint64(seed))
    if spec.kind is NoiseKind.ORNSTEIN_UHLENBECK:
        return _synthesize_ou(spec, seed, horizon, rng)
    n = spec.n_components
    if spec.kind is NoiseKind.BAND_LIMITED:
        # stratified frequency sampling over the flat band
        strata = (np.arange(n) + rng.random(n)) / n
        freqs = spec.nu_min + strata * (spec.nu_max - spec.nu_min)
    else:
        freqs = spec.line_frequencies()
    phases = rng.uniform(0.0, 2.0 * np.pi, n)
    amps = np.full(n, spec.sigma * math.sqrt(2.0 / n))
    return SpectralRealization(spec, seed, horizon, amps, freqs, phases)


def _ou_grid(spec: NoiseSpec, horizon: float):
    target = spec.t_c / OU_GRID_PER_TC
    n_grid = max(2, int(math.ceil(horizon / target)) + 1)
    return n_grid, horizon / (n_grid - 1)


def _ou_samples(spec: NoiseSpec, seed: int, n_grid: int, step: float) -> np.ndarray:
    rng = np.random.default_rng(np.uint64(seed))
    z = rng.standard_normal(n_grid)
    a = math.exp(-step / spec.t_c)
    drive = spec.sigma * math.sqrt(1.0 - a * a) * z
    drive[0] = spec.sigma * z[0]  # stationary start
    return lfilter([1.0], [1.0, -a], drive)


def _synthesize_ou(spec: NoiseSpec, seed: int, horizon: float, rng) -> OUPathRealization:
    n_grid, step = _ou_grid(spec, horizon)
    samples = _ou_samples(spec, seed, n_grid, step)
    coeffs = bspline_coefficients(samples)
    return OUPathRealization(spec, seed, horizon, step, samples, coeffs)


def synthesize_many(spec: NoiseSpec, seeds, horizon: float) -> list:
    """Draw one realization per seed, same law as synthesize(spec, seed, horizon).

    The same seed gives the same path up to floating-point roundoff
    (~1e-15); bitwise output is reproducible within either entry point.

    OU paths land in one shared coefficient stack (rows processed in
    small batches to bound transient memory); other kinds just loop.
    """
    seeds = list(seeds)
    if spec.kind is not NoiseKind.ORNSTEIN_UHLENBECK:
        return [synthesize(spec, s, horizon) for s in seeds]
    if horizon <= 0:
        raise NoiseConfigError(f"horizon must be > 0, got {horizon}")
    n_grid, step = _ou_grid(spec, horizon)
    stack = np.empty((len(seeds), n_grid))
    row_block = 128
    for s in range(0, len(seeds), row_block):
        rows = np.stack([_ou_samples(spec, sd, n_grid, step)
                         for sd in seeds[s:s + row_block]])
        stack[s:s + row_block] = bspline_coefficients(rows)
    return [
        OUPathRealization(spec, sd, horizon, step, None, stack[i],
                          stack=stack, stack_row=i)
        for i, sd in enumerate(seeds)
    ]


def eval_batch(realizations, times: np.ndarray, orders) -> dict[int, np.ndarray]:
    """Evaluate many realizations on one shared time grid.

    Returns {order: array (n_realizations, n_times)}.  OU paths sharing a
    grid are evaluated together (one gather for the whole stack).
    """
    times = np.asarray(times, dtype=float)
    out = {o: np.empty((len(realizations), times.size)) for o in orders}
    ou = [
        i
        for i, r in enumerate(realizations)
        if isinstance(r, OUPathRealization)
    ]
    if ou and all(
        realizations[i].grid_step == realizations[ou[0]].grid_step for i in ou
    ):
        first = realizations[ou[0]]
        shared = first.stack
        if shared is not None and all(
            realizations[i].stack is shared for i in ou
        ):
            rows = [realizations[i].stack_row for i in ou]
            if rows == list(range(rows[0], rows[0] + len(rows))):
                stack = shared[rows[0]:rows[0] + len(rows)]
            else:
                stack = shared[rows]
        else:
            stack = np.stack([realizations[i].coeffs for i in ou])
        step = first.grid_step
        u = times / step
        for o in orders:
            out_o = bspline_evaluate(stack, u, o) / step**o
            out[o][ou] = out_o
        rest = [i for i in range(len(realizations)) if i not in set(ou)]
    else:
        rest = range(len(realizations))
    for i in rest:
        r = realizations[i]
        if isinstance(r, SpectralRealization) and len(orders) > 1:
            # share the phase/trig evaluation between derivative orders
            block = max(1, int(4_000_000 / max(1, r.frequencies.size)))
            for s in range(0, times.size, block):
                sl = slice(s, min(times.size, s + block))
                phase = np.multiply.outer(times[sl], r.frequencies) + r.phases
                cos = np.cos(phase)
                sin = np.sin(phase) if 1 in orders else None
                for o in orders:
                    if o == 0:
                        out[o][i, sl] = cos @ r.amplitudes
                    elif o == 1:
                        out[o][i, sl] = sin @ (-r.amplitudes * r.frequencies)
                    else:
                        out[o][i, sl] = cos @ (-r.amplitudes * r.frequencies**2)
        else:
            for o in orders:
                out[o][i] = r.eval(times, o)
    return out
