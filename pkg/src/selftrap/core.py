"""Dispersive atom-cavity steady state.

Internal unit system: angular frequencies in rad/us, lengths in um, times in
us.  Energies are carried as angular frequencies (E/hbar), so hbar never
appears explicitly.  Configuration and CSV I/O use plain frequencies in MHz
and times in ms; the helpers ``mhz`` / ``to_mhz`` do the 2*pi bookkeeping.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.constants import Boltzmann, hbar

TWO_PI = 2.0 * math.pi

# k_B * 1 uK / hbar, expressed in rad/us
UK_TO_RAD_PER_US = Boltzmann * 1e-6 / hbar * 1e-6


def mhz(nu: float) -> float:
    """Plain frequency in MHz -> angular frequency in rad/us."""
    return TWO_PI * nu


def to_mhz(omega: float) -> float:
    return omega / TWO_PI


def uk_to_angular(temperature_uK: float) -> float:
    """k_B T / hbar in rad/us for a temperature given in uK."""
    return temperature_uK * UK_TO_RAD_PER_US


@dataclass(frozen=True)
class SystemParams:
    """Fixed constants of the atom-cavity system (87Rb D2 defaults).

    All frequencies are angular, in rad/us; ``kappa`` and ``gamma`` are HWHM.
    ``gravity`` is the magnitude of the gravitational acceleration in um/us^2,
    acting along -z (transverse to the cavity axis, which is x).
    """

    kappa: float = mhz(2.77)
    g: float = mhz(0.33)
    gamma: float = mhz(3.03)
    delta_A: float = mhz(-1066.0)
    u0_factor: float = 0.7
    omega_rec: float = mhz(3.771e-3)
    wavelength: float = 0.780
    waist: float = 127.0
    gravity: float = 9.81e-6
    cavity_length: float = 15e3

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.omega_rec <= 0:
            raise ValueError("omega_rec must be positive")
        if self.waist <= 0 or self.wavelength <= 0:
            raise ValueError("waist and wavelength must be positive")
        if not 0.0 < self.u0_factor <= 1.0:
            raise ValueError("u0_factor must lie in (0, 1]")
        if self.gravity < 0:
            raise ValueError("gravity is a magnitude and must be >= 0")
        if abs(self.delta_A) < 100.0 * self.gamma:
            warnings.warn(
                f"|delta_A| = {abs(self.delta_A):.3g} rad/us is not far detuned "
                f"(< 100 gamma); the dispersive model is unreliable",
                stacklevel=2,
            )

    @property
    def k(self) -> float:
        """Wavenumber in 1/um."""
        return TWO_PI / self.wavelength

    @property
    def hbar_over_m(self) -> float:
        """hbar/m in um^2/us, from omega_rec = hbar k^2 / 2m."""
        return 2.0 * self.omega_rec / self.k**2


@dataclass(frozen=True)
class DriveConfig:
    """Laser drive.  Give either ``eta`` (rad/us) or ``power_uW``, not both."""

    delta_C: float
    eta: Optional[float] = None
    power_uW: Optional[float] = None

    def __post_init__(self):
        if (self.eta is None) == (self.power_uW is None):
            raise ValueError("exactly one of eta and power_uW must be given")
        if self.eta is not None and self.eta < 0:
            raise ValueError("eta must be >= 0")
        if self.power_uW is not None and self.power_uW < 0:
            raise ValueError("power_uW must be >= 0")

    @classmethod
    def from_ratio(cls, delta_C: float, eta_over_kappa: float, params: SystemParams):
        return cls(delta_C=delta_C, eta=eta_over_kappa * params.kappa)

    def resolved_eta(self, params: SystemParams, anchor: "PowerAnchor | None" = None) -> float:
        if self.eta is not None:
            return self.eta
        return calibrate_power_to_drive(self.power_uW, params, anchor or PowerAnchor())


@dataclass
class EnsembleState:
    """Weighted macro-particle cloud.

    positions: (M, 3) um; velocities: (M, 3) um/us; weights: (M,) atom counts.
    """

    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.velocities = np.asarray(self.velocities, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        m = len(self.weights)
        if self.positions.shape[0] != m or self.velocities.shape[0] != m:
            raise ValueError("positions, velocities and weights must have equal length")
        if np.any(self.weights <= 0):
            raise ValueError("all macro-particle weights must be positive")

    @property
    def n_atoms(self) -> float:
        return float(self.weights.sum())

    def copy(self) -> "EnsembleState":
        return EnsembleState(
            self.positions.copy(), self.velocities.copy(), self.weights.copy(), self.time
        )


@dataclass(frozen=True)
class FieldObservables:
    photon_number: float
    pulled_detuning: float
    saturation_max: float


def mode_function(r, params: SystemParams):
    """Standing-wave Gaussian mode, f(r) = cos(k x) exp(-(y^2 + z^2) / w^2).

    ``r`` may be a single 3-vector or an array of shape (..., 3).
    """
    r = np.asarray(r, dtype=float)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    return np.cos(params.k * x) * np.exp(-(y * y + z * z) / params.waist**2)


def effective_atom_number(state: EnsembleState, params: SystemParams) -> float:
    f = mode_function(state.positions, params)
    return float(np.dot(state.weights, f * f))


def light_shift_u0(params: SystemParams) -> float:
    """Single-atom light shift U0 (rad/us), including the multilevel factor."""
    if params.delta_A == 0:
        raise ValueError("delta_A = 0: the dispersive model does not apply on atomic resonance")
    da = params.delta_A
    return params.u0_factor * params.g**2 * da / (da * da + params.gamma**2)


def photon_number(eta, delta_C, n_eff_u0, kappa):
    """Lorentzian steady state eta^2 / ((delta_C - N_eff U0)^2 + kappa^2).

    Works elementwise on arrays.
    """
    d = delta_C - n_eff_u0
    return eta * eta / (d * d + kappa * kappa)


def steady_state_photon_number(drive: DriveConfig, n_eff_u0, params: SystemParams):
    eta = drive.resolved_eta(params)
    return photon_number(eta, drive.delta_C, n_eff_u0, params.kappa)


def intensity_change(drive: DriveConfig, n_eff_u0, params: SystemParams):
    """Photon-number change between the atom-filled and the empty cavity.

    Evaluated in the factored closed form rather than as a difference, so
    that it stays accurate when the shift is small.
    """
    eta = drive.resolved_eta(params)
    dc, kappa = drive.delta_C, params.kappa
    empty = eta * eta / (dc * dc + kappa * kappa)
    pulled = dc - n_eff_u0
    return empty * (2.0 * dc - n_eff_u0) * n_eff_u0 / (pulled * pulled + kappa * kappa)


def saturation_from_photon_number(n, params: SystemParams):
    """Antinode saturation s = g^2 n / (delta_A^2 + gamma^2) (two-level g)."""
    n = np.asarray(n, dtype=float) if np.ndim(n) else float(n)
    if np.any(np.asarray(n) < 0):
        raise ValueError("photon number must be >= 0")
    return params.g**2 * n / (params.delta_A**2 + params.gamma**2)


def field_observables(drive: DriveConfig, n_eff: float, params: SystemParams) -> FieldObservables:
    n_eff_u0 = n_eff * light_shift_u0(params)
    n = steady_state_photon_number(drive, n_eff_u0, params)
    return FieldObservables(
        photon_number=n,
        pulled_detuning=drive.delta_C - n_eff_u0,
        saturation_max=saturation_from_photon_number(n, params),
    )


@dataclass(frozen=True)
class PowerAnchor:
    """Single calibration point tying drive power to antinode saturation.

    The correspondence is taken to hold at ``delta_C`` with a frequency
    pulling of ``n_eff_u0`` (both rad/us).
    """

    power_uW: float = 0.7
    saturation: float = 0.02
    delta_C: float = mhz(-2.0)
    n_eff_u0: float = mhz(-1.0)

    def __post_init__(self):
        if self.power_uW <= 0:
            raise ValueError("anchor power must be positive")
        if self.saturation <= 0:
            raise ValueError("anchor saturation must be positive")


def anchor_eta(params: SystemParams, anchor: PowerAnchor = PowerAnchor()) -> float:
    n_anchor = anchor.saturation * (params.delta_A**2 + params.gamma**2) / params.g**2
    pulled = anchor.delta_C - anchor.n_eff_u0
    return math.sqrt(n_anchor * (pulled * pulled + params.kappa**2))


def calibrate_power_to_drive(
    power_uW: float, params: SystemParams, anchor: PowerAnchor = PowerAnchor()
) -> float:
    """Drive amplitude eta (rad/us) for a given power, with eta^2 proportional to P."""
    if power_uW < 0:
        raise ValueError(f"drive power must be >= 0, got {power_uW}")
    return anchor_eta(params, anchor) * math.sqrt(power_uW / anchor.power_uW)


def power_from_drive(eta: float, params: SystemParams, anchor: PowerAnchor = PowerAnchor()) -> float:
    """Inverse of :func:`calibrate_power_to_drive`."""
    return anchor.power_uW * (eta / anchor_eta(params, anchor)) ** 2


def saturation_at_power(
    power_uW,
    delta_C: float,
    n_eff_u0: float,
    params: SystemParams,
    anchor: PowerAnchor = PowerAnchor(),
):
    """Antinode saturation reached at ``power_uW`` for the given detunings."""
    power = np.asarray(power_uW, dtype=float)
    if np.any(power < 0):
        raise ValueError("drive power must be >= 0")
    eta = anchor_eta(params, anchor) * np.sqrt(power / anchor.power_uW)
    s = saturation_from_photon_number(photon_number(eta, delta_C, n_eff_u0, params.kappa), params)
    return float(s) if np.ndim(s) == 0 else s
