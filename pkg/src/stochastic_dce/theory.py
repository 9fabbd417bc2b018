"""Closed-form predictions: perturbative short-time laws and the slow-flow
(two-time) resummation for single and coupled modes.

Conventions: S(nu) is the one-sided spectrum of the noise, tau = eps^2 t
is the slow time for stochastic driving and eps*t for deterministic
resonance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cavity import CavityConfig, ModeIndex, omega as mode_omega, omega_z as mode_omega_z, v as coupling_v
from .noise import NoiseKind, NoiseSpec, NotAStochasticProcessError, spectrum

__all__ = [
    "DegenerateSpectrumError",
    "FlaggedValue",
    "SlowFlowRates",
    "OccupationSolution",
    "perturbative_beta2",
    "perturbative_number",
    "deterministic_beta2",
    "msa_deterministic_beta2",
    "msa_mean_q",
    "msa_mean_q2",
    "msa_stochastic_beta2",
    "slow_flow_rates",
    "solve_occupations",
    "cosmo_beta2",
]


class DegenerateSpectrumError(ValueError):
    """Slow-flow rates assume a nondegenerate mode spectrum."""


class FlaggedValue(float):
    """Float carrying a validity flag for perturbative estimates."""

    def __new__(cls, value, perturbative_ok=True):
        obj = super().__new__(cls, value)
        obj.perturbative_ok = bool(perturbative_ok)
        return obj


def _require_stochastic(noise: NoiseSpec, what: str):
    if noise.kind is NoiseKind.DETERMINISTIC_SINUSOID:
        raise NotAStochasticProcessError(
            f"{what} needs a stochastic noise kind; use deterministic_beta2 "
            "for a sinusoidal drive"
        )


def perturbative_beta2(cavity: CavityConfig, noise: NoiseSpec, n: ModeIndex,
                       k: ModeIndex, T: float) -> FlaggedValue:
    """Short-time pair creation 2 eps^2 T v_nk^2 Re S(w_n + w_k).

    Linear in T; valid while eps^2 w T stays below order one (flagged on
    the returned value).
    """
    _require_stochastic(noise, "perturbative_beta2")
    wn = mode_omega(cavity, n)
    wk = mode_omega(cavity, k)
    if (wn + wk) * T < 10.0:
        warnings.warn(
            f"drive length T={T} resolves frequencies only to ~pi/T; "
            f"(w_n + w_k) T = {(wn + wk) * T:.3g} should be >> 1",
            stacklevel=2,
        )
    vnk = coupling_v(cavity, n, k)
    val = 2.0 * cavity.epsilon**2 * T * vnk**2 * spectrum(noise, wn + wk).real
    return FlaggedValue(val, cavity.epsilon**2 * max(wn, wk) * T <= 1.0)


def perturbative_number(cavity: CavityConfig, noise: NoiseSpec, k: ModeIndex,
                        T: float) -> FlaggedValue:
    """N_k = sum_n <|beta_nk|^2> over the retained family."""
    terms = [perturbative_beta2(cavity, noise, n, k, T) for n in cavity.modes()]
    return FlaggedValue(sum(terms), all(t.perturbative_ok for t in terms))


def deterministic_beta2(cavity: CavityConfig, Omega: float, n: ModeIndex,
                        k: ModeIndex, T: float, resonance_width: float | None = None) -> float:
    """|beta_nk|^2 = (1/4) eps^2 v_nk^2 T^2 on resonance Omega = w_n + w_k.

    A drive of length T resolves frequencies to ~pi/T, which is the
    default width of the resonance window; off resonance the quadratic
    growth is absent and 0 is returned.
    """
    wn = mode_omega(cavity, n)
    wk = mode_omega(cavity, k)
    if resonance_width is None:
        resonance_width = math.pi / T
    if abs(Omega - (wn + wk)) > resonance_width:
        return 0.0
    return 0.25 * cavity.epsilon**2 * coupling_v(cavity, n, k) ** 2 * T**2


def msa_deterministic_beta2(omega: float, epsilon: float, t) -> np.ndarray | float:
    """Resonant sinusoidal drive xi = sin(2wt): |beta|^2 = sinh^2(w eps t / 4)."""
    return np.sinh(0.25 * omega * epsilon * np.asarray(t, dtype=float)) ** 2


def msa_mean_q(omega: float, epsilon: float, noise: NoiseSpec, t,
               ics: str = "vacuum") -> np.ndarray | complex:
    """Slow-flow <Q(t)> for the noisy oscillator.

    ics="vacuum": Q(0)=1/sqrt(2w), Q'(0)=-i sqrt(w/2); the mean rotates
    at the shifted frequency w - eps^2 w^2 Im S(2w)/4 and its modulus
    changes at rate (w^2/4)(Re S(2w) - S(0)) eps^2.
    ics="position_kick": Q(0)=1, Q'(0)=0 gives the damped-cosine form.
    """
    _require_stochastic(noise, "msa_mean_q")
    t = np.asarray(t, dtype=float)
    S2 = spectrum(noise, 2.0 * omega)
    S0 = spectrum(noise, 0.0).real
    slow = 0.25 * omega**2 * epsilon**2
    if ics == "vacuum":
        return (np.exp(-1j * omega * t + slow * (S2 - S0) * t)
                / math.sqrt(2.0 * omega))
    if ics == "position_kick":
        shifted = omega - slow * S2.imag
        return (np.exp(slow * (S2.real - S0) * t) * np.cos(shifted * t)).astype(complex)
    raise ValueError(f"unknown initial conditions {ics!r}")


def msa_mean_q2(omega: float, epsilon: float, noise: NoiseSpec, t) -> np.ndarray | float:
    """Slow-flow <Q^2(t)> for Q(0)=1, Q'(0)=0: damped cosine plus growth term."""
    _require_stochastic(noise, "msa_mean_q2")
    t = np.asarray(t, dtype=float)
    S2 = spectrum(noise, 2.0 * omega)
    S0 = spectrum(noise, 0.0).real
    e2 = epsilon**2
    osc = (0.5 * np.exp(0.5 * omega**2 * (S2.real - 2.0 * S0) * e2 * t)
           * np.cos((2.0 * omega - 0.5 * omega**2 * e2 * S2.imag) * t))
    return osc + 0.5 * np.exp(omega**2 * S2.real * e2 * t)


def msa_stochastic_beta2(omega: float, epsilon: float, noise: NoiseSpec, t,
                         omega_z: float | None = None) -> np.ndarray | float:
    """<|beta|^2> = (e^{rate eps^2 t} - 1)/2 for one noisy mode.

    rate = w^2 Re S(2w) for the plain oscillator; passing omega_z selects
    the cavity single-mode rate 4 w_z^4 / w^2 Re S(2w).
    """
    _require_stochastic(noise, "msa_stochastic_beta2")
    t = np.asarray(t, dtype=float)
    ReS = spectrum(noise, 2.0 * omega).real
    if omega_z is None:
        rate = omega**2 * ReS
    else:
        rate = 4.0 * omega_z**4 / omega**2 * ReS
    return 0.5 * (np.exp(rate * epsilon**2 * t) - 1.0)


def cosmo_beta2(k, M: float, epsilon: float, noise: NoiseSpec, eta) -> np.ndarray | float:
    """Created quanta per comoving mode k for a noisy mass term.

    <|beta_k|^2> = (e^{(k^2+M^2) Re S(2 sqrt(k^2+M^2)) eps^2 eta} - 1)/2;
    identical to msa_stochastic_beta2 at omega = sqrt(k^2 + M^2).
    """
    _require_stochastic(noise, "cosmo_beta2")
    k = np.asarray(k, dtype=float)
    w = np.sqrt(k**2 + M**2)
    ReS = np.real(spectrum(noise, 2.0 * w))
    return 0.5 * (np.exp(w**2 * ReS * epsilon**2 * np.asarray(eta, dtype=float)) - 1.0)


# ---------------------------------------------------------------------------
# coupled slow flow


@dataclass(frozen=True)
class SlowFlowRates:
    """Per-mode slow-flow rates of the coupled family."""

    lambda_k: np.ndarray       # complex (m,): mean-amplitude rates
    gamma_k: np.ndarray        # real (m,): occupation self-rates
    rho: np.ndarray            # real (m, m): rho[m, k] couples T_m into T_k'
    epsilon: float


def slow_flow_rates(cavity: CavityConfig, noise: NoiseSpec,
                    degeneracy_rtol: float = 1e-6) -> SlowFlowRates:
    """Rates of the slow-flow equations for the retained mode family.

    The derivation singles out resonant pairs and assumes a nondegenerate
    spectrum; nearly equal frequencies are refused.
    """
    _require_stochastic(noise, "slow_flow_rates")
    w = cavity.omegas()
    wz = cavity.omega_zs()
    m = w.size
    if m > 1:
        gaps = np.abs(w[:, None] - w[None, :])[~np.eye(m, dtype=bool)]
        if np.min(gaps) < degeneracy_rtol * np.mean(w):
            raise DegenerateSpectrumError(
                "two retained modes are (nearly) degenerate; slow-flow rates "
                "are not valid for this geometry"
            )
    g = cavity.g_matrix()
    S2 = np.asarray(spectrum(noise, 2.0 * w))
    S0 = spectrum(noise, 0.0).real
    Ssum = np.asarray(spectrum(noise, w[:, None] + w[None, :]))   # S(w_k + w_m)
    Sdif = np.asarray(spectrum(noise, w[:, None] - w[None, :]))   # S(w_k - w_m)

    pref = g**2 / (4.0 * w[:, None] * w[None, :]) * (w[:, None] ** 2 - w[None, :] ** 2) ** 2
    lam = wz**4 / w**2 * (S0 - S2) - np.sum(pref * (Ssum - Sdif), axis=1)
    gam = (-4.0 * wz**4 / w**2 * S2.real
           - np.sum(2.0 * pref * (Ssum - Sdif).real, axis=1))

    # rho[m, k]: feed of T_m into T_k'.  Written so that sum-frequency
    # noise creates pairs in both partner modes and difference-frequency
    # noise transfers quanta conservatively; this also makes the short-
    # time slope of the totals agree with the perturbative rates.
    wm = w[:, None]
    wk = w[None, :]
    rho = -(g.T**2 / (2.0 * wk**2)) * (wk**2 - wm**2) ** 2 * (
        np.real(spectrum(noise, wk + wm)) + np.real(spectrum(noise, wk - wm))
    )
    rho[np.eye(m, dtype=bool)] = 0.0
    return SlowFlowRates(lam, gam, rho, cavity.epsilon)


@dataclass(frozen=True)
class OccupationSolution:
    times: np.ndarray          # fast-time grid of the request
    T: np.ndarray              # (nt, m) occupations T_k
    beta2_total: np.ndarray    # (nt,) sum_k <|beta_nk|^2>
    went_negative: bool        # numerical underflow flag on totals


SLOW_FLOW_STEPS = 10_000


def solve_occupations(rates: SlowFlowRates, cavity: CavityConfig, n: ModeIndex,
                      t_grid) -> OccupationSolution:
    """Integrate the occupation flow T' = -(gamma + rho) T on tau = eps^2 t.

    Initial data T_k(0) = delta_nk / (2 w_k); the summed identity
    sum_k 2 w_k T_k = 1 + 2 sum_k <|beta_nk|^2> converts occupations to
    created particles.
    """
    w = cavity.omegas()
    m = w.size
    if not 1 <= n.nz <= m:
        raise ValueError(f"in-mode nz={n.nz} outside family (nz_max={m})")
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be nondecreasing and nonnegative")
    A = -(np.diag(rates.gamma_k) + rates.rho.T)   # T' = A T on the slow time
    T = np.zeros(m)
    T[n.nz - 1] = 1.0 / (2.0 * w[n.nz - 1])

    taus = rates.epsilon**2 * t_grid
    span = taus[-1] if taus.size and taus[-1] > 0 else 1.0
    out = np.empty((t_grid.size, m))
    tau_now = 0.0
    for i, tau in enumerate(taus):
        seg = tau - tau_now
        if seg > 0:
            steps = max(1, int(math.ceil(SLOW_FLOW_STEPS * seg / span)))
            h = seg / steps
            for _ in range(steps):
                k1 = A @ T
                k2 = A @ (T + 0.5 * h * k1)
                k3 = A @ (T + 0.5 * h * k2)
                k4 = A @ (T + h * k3)
                T = T + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
            tau_now = tau
        out[i] = T
    totals = 0.5 * (out @ (2.0 * w) - 1.0)
    went_negative = bool(np.any(totals < -1e-12))
    return OccupationSolution(t_grid, out, totals, went_negative)
