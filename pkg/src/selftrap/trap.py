"""Scalar dipole-trap estimates: depth, recoil heating, trapping times."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import SystemParams, uk_to_angular

# Recoil heating per transverse axis, in units of hbar*omega_rec*gamma*s.
# The second axis is the one along the atomic polarization.
RECOIL_AXIS_COEFFS = (2.0 / 5.0, 1.0 / 5.0)
RECOIL_MEAN_COEFF = sum(RECOIL_AXIS_COEFFS) / len(RECOIL_AXIS_COEFFS)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class HeatingModel:
    """Empirical heating D0 + D1*s on top of recoil heating.

    ``d0`` and ``d1`` are in units of (3/10) hbar omega_rec gamma.
    ``temperature`` is k_B T / hbar in rad/us.
    """

    d0: float = 0.0
    d1: float = 0.0
    temperature: float = 0.0

    def __post_init__(self):
        if self.d0 < 0 or self.d1 < 0:
            raise ValueError("heating coefficients must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @classmethod
    def from_uK(cls, d0: float, d1: float, temperature_uK: float) -> "HeatingModel":
        return cls(d0=d0, d1=d1, temperature=uk_to_angular(temperature_uK))


# Published fits of the heating coefficients, keyed by delta_C / 2pi in MHz.
PUBLISHED_HEATING = {-1.0: (0.475, 0.759), -2.0: (0.627, 1.12), -3.0: (0.884, 1.32)}


def trap_depth(s, params: SystemParams, saturating: bool = False):
    """Antinode dipole trap depth V/hbar in rad/us."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("saturation must be >= 0")
    x = s / (1.0 + s) if saturating else s
    out = abs(params.delta_A) * x
    return float(out) if out.ndim == 0 else out


def recoil_heating_rate(s, params: SystemParams):
    """Mean per-axis recoil heating D/hbar in rad/us^2."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("saturation must be >= 0")
    out = RECOIL_MEAN_COEFF * params.omega_rec * params.gamma * s
    return float(out) if out.ndim == 0 else out


def recoil_axis_rates(s: float, params: SystemParams) -> Tuple[float, float]:
    """Heating rate on each of the two transverse axes (rad/us^2)."""
    base = params.omega_rec * params.gamma * s
    return tuple(c * base for c in RECOIL_AXIS_COEFFS)


def ideal_trapping_time(params: SystemParams) -> float:
    """Depth over recoil heating rate in ms; independent of the intensity."""
    tau_us = abs(params.delta_A) / (RECOIL_MEAN_COEFF * params.gamma * params.omega_rec)
    return tau_us * 1e-3


def trapping_threshold(heating: HeatingModel, params: SystemParams) -> float:
    """Saturation below which the saturating depth does not exceed k_B T."""
    da = abs(params.delta_A)
    if heating.temperature >= da:
        return math.inf
    return heating.temperature / (da - heating.temperature)


def trapping_time_curve(s, heating: HeatingModel, params: SystemParams) -> np.ndarray:
    """Vectorized empirical trapping time in ms; NaN where untrapped."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValueError("saturation must be >= 0")
    x = s / (s + 1.0)
    unit = RECOIL_MEAN_COEFF * params.gamma * params.omega_rec
    num = abs(params.delta_A) * x - heating.temperature
    den = unit * x + unit * (heating.d0 + heating.d1 * s)
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = num / den * 1e-3
    return np.where(num > 0, tau, np.nan)


def empirical_trapping_time(s: float, heating: HeatingModel, params: SystemParams) -> Optional[float]:
    """Trapping time (ms) with saturation and empirical heating.

    Returns None when the trap is shallower than k_B T (untrapped).
    """
    tau = float(trapping_time_curve(s, heating, params))
    return None if math.isnan(tau) else tau


def optimal_saturation(
    heating: HeatingModel,
    params: SystemParams,
    s_max: float = 1e3,
    rtol: float = 1e-6,
) -> Optional[Tuple[float, float]]:
    """Saturation maximizing the empirical trapping time, and that maximum.

    Golden-section search in log(s) over (threshold, s_max].  Returns None if
    no saturation up to ``s_max`` traps the atoms.
    """
    s_min = trapping_threshold(heating, params)
    if s_min >= s_max:
        return None
    lo = math.log(max(s_min, 1e-300))
    hi = math.log(s_max)

    def neg_tau(u):
        tau = trapping_time_curve(math.exp(u), heating, params)
        return math.inf if math.isnan(tau) else -float(tau)

    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = neg_tau(c), neg_tau(d)
    # tolerance on s is relative, i.e. absolute in log(s)
    while b - a > rtol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = neg_tau(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = neg_tau(d)
    u = 0.5 * (a + b)
    # the interior search cannot land exactly on the upper end
    if neg_tau(hi) < neg_tau(u):
        u = hi
    s_opt = math.exp(u)
    tau = empirical_trapping_time(s_opt, heating, params)
    if tau is None or tau <= 0:
        return None
    return s_opt, tau
