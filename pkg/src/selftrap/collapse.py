"""Stochastic collapse of the self-sustained trap.

The atom number falls one atom at a time.  With ``n`` atoms left the total
escape rate is

    (n / tau) * exp(-A / ((dc - n * u0)^2 + 1))

with the detuning ``dc`` and the per-atom light shift ``u0`` in units of
kappa.  For red detuning (dc, u0 < 0, |dc| > |n u0|) the exponent grows as
atoms leave, so the per-atom loss accelerates: a positive feedback that
makes the decay non-exponential.

Because the rate depends on ``n`` only, a trajectory is a sum of
independent exponential waiting times and is sampled exactly without a
time step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from .core import TWO_PI, photon_number
from .trace import TransmissionTrace


@dataclass(frozen=True)
class DecayModelParams:
    """Collapse-model parameters; ``tau`` in ms, ``kappa`` in rad/us."""

    delta_c_tilde: float
    u0_tilde: float
    n0: int
    a_param: float
    tau: float
    kappa: float = TWO_PI * 2.77

    def __post_init__(self):
        if self.n0 < 0 or int(self.n0) != self.n0:
            raise ValueError("n0 must be a non-negative integer")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.a_param < 0:
            raise ValueError("a_param must be >= 0")

    @classmethod
    def from_mhz(cls, delta_c_mhz, n0_u0_mhz, n0, a_param, tau_ms, kappa_mhz=2.77):
        """Build from plain frequencies: detuning and total pulling N(0) U0 in MHz."""
        if n0 <= 0:
            raise ValueError("n0 must be positive to define the per-atom shift")
        return cls(
            delta_c_tilde=delta_c_mhz / kappa_mhz,
            u0_tilde=n0_u0_mhz / kappa_mhz / n0,
            n0=int(n0),
            a_param=a_param,
            tau=tau_ms,
            kappa=TWO_PI * kappa_mhz,
        )

    @property
    def n0_u0_tilde(self) -> float:
        return self.n0 * self.u0_tilde


def escape_rate(n, model: DecayModelParams):
    """Total escape rate (1/ms) with ``n`` atoms in the trap."""
    n = np.asarray(n, dtype=float)
    if np.any(n < 0):
        raise ValueError("atom number must be >= 0")
    d = model.delta_c_tilde - n * model.u0_tilde
    rate = n / model.tau * np.exp(-model.a_param / (d * d + 1.0))
    return float(rate) if rate.ndim == 0 else rate


@dataclass
class DecayTrajectory:
    """Escape times (ms, ascending) and the atom number just after each one."""

    escape_times: np.ndarray
    counts: np.ndarray
    n0: int

    def n_at(self, t) -> np.ndarray:
        """Atom number at times ``t`` (right-continuous step function)."""
        return self.n0 - np.searchsorted(self.escape_times, np.asarray(t, dtype=float), side="right")


def simulate_decay(model: DecayModelParams, t_end: float, seed=None) -> DecayTrajectory:
    """One exact-event trajectory up to ``t_end`` ms."""
    rng = np.random.default_rng(seed)
    n0 = int(model.n0)
    if n0 == 0:
        return DecayTrajectory(np.empty(0), np.empty(0, dtype=int), 0)
    levels = np.arange(n0, 0, -1)
    waits = rng.standard_exponential(n0) / escape_rate(levels, model)
    times = np.cumsum(waits)
    keep = times < t_end
    return DecayTrajectory(times[keep], levels[keep] - 1, n0)


def meanfield_fraction(t, delta_c_tilde, n0_u0_tilde, a_param, tau, x_min=1e-12, n_grid=4001):
    """Surviving fraction x(t) = n/n0 of the deterministic rate equation.

    Solves dx/dt = -(x/tau) exp(-A L(x)) with L(x) = 1/((dc - x q)^2 + 1)
    through its inverse t(x) = tau * int_x^1 exp(A L(u)) du/u, evaluated on
    a logarithmic grid.  Below ``x_min`` the exact exponential tail is used.
    """
    t = np.asarray(t, dtype=float)
    # accumulate from x = 1 outwards (w = -ln x) so no large totals are subtracted
    w = np.linspace(0.0, -np.log(x_min), n_grid)
    u = np.exp(-w)
    d = delta_c_tilde - u * n0_u0_tilde
    integrand = np.exp(a_param / (d * d + 1.0))
    t_grid = tau * cumulative_simpson(integrand, x=w, initial=0.0)
    v = -w
    slope = -1.0 / (tau * integrand)
    # for very large A the far tail can stall at double precision; keep strictly increasing nodes
    keep = np.concatenate([[True], np.diff(t_grid) > 0])
    t_grid, v, slope = t_grid[keep], v[keep], slope[keep]
    tail_rate = np.exp(-a_param / (delta_c_tilde**2 + 1.0)) / tau
    inside = np.clip(t, 0.0, t_grid[-1])
    v_t = CubicHermiteSpline(t_grid, v, slope)(inside)
    beyond = t > t_grid[-1]
    v_t = np.where(beyond, v[-1] - (t - t_grid[-1]) * tail_rate, v_t)
    return np.where(t <= 0, 1.0, np.exp(v_t))


@dataclass
class DecayCurve:
    times: np.ndarray
    n_mean: np.ndarray
    n_std: np.ndarray
    n_meanfield: np.ndarray
    n_trajectories: int


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def mean_decay_curve(
    model: DecayModelParams,
    t_end: float,
    n_trajectories: int,
    master_seed: int = 0,
    n_points: int = 201,
) -> DecayCurve:
    """Trajectory-averaged n(t) on a uniform grid, with the mean-field curve."""
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    times = np.linspace(0.0, t_end, n_points)
    samples = np.empty((n_trajectories, n_points))
    for i in range(n_trajectories):
        traj = simulate_decay(model, t_end, seed=trajectory_seed(master_seed, i))
        samples[i] = traj.n_at(times)
    if model.n0 > 0:
        mf = model.n0 * meanfield_fraction(
            times, model.delta_c_tilde, model.n0_u0_tilde, model.a_param, model.tau
        )
    else:
        mf = np.zeros(n_points)
    return DecayCurve(
        times=times,
        n_mean=samples.mean(axis=0),
        n_std=samples.std(axis=0, ddof=1) if n_trajectories > 1 else np.zeros(n_points),
        n_meanfield=mf,
        n_trajectories=n_trajectories,
    )


def transmission_from_n(
    times, n_series, model: DecayModelParams, eta: Optional[float] = None
) -> TransmissionTrace:
    """Steady-state photon number for an atom-number series.

    ``eta`` defaults to kappa, i.e. photon numbers in units of eta^2/kappa^2.
    """
    n = np.asarray(n_series, dtype=float)
    kappa = model.kappa
    eta = kappa if eta is None else eta
    u0 = model.u0_tilde * kappa
    dc = model.delta_c_tilde * kappa
    photons = photon_number(eta, dc, n * u0, kappa)
    frac = n / model.n0 if model.n0 > 0 else np.zeros_like(n)
    return TransmissionTrace(
        times=np.asarray(times, dtype=float),
        photon_number=photons,
        n_eff=n,
        trapped_fraction=frac,
        empty_level=float(photon_number(eta, dc, 0.0, kappa)),
        search_from=float(np.asarray(times)[0]) if len(n) else 0.0,
    )
