"""Semiclassical Monte Carlo simulation of the trapping protocol.

The cloud is released at t = 0 and expands ballistically under gravity until
the drive is switched on.  From then on every macro-particle moves in the
dipole potential U0 * n * f(r)^2, where the photon number n follows the
instantaneous effective atom number through the Lorentzian steady state
(adiabatically eliminated field).  Residual photon scattering heats the two
transverse axes.

Trajectory ensembles use one random stream per trajectory,
``SeedSequence(master_seed, spawn_key=(index,))``, so results do not depend
on how trajectories are scheduled across workers.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from . import _kernels
from .core import (
    DriveConfig,
    EnsembleState,
    PowerAnchor,
    SystemParams,
    light_shift_u0,
    mode_function,
    photon_number,
    uk_to_angular,
)
from .trace import TransmissionTrace, average_traces, extract_trapping_time
from .trap import RECOIL_AXIS_COEFFS

log = logging.getLogger(__name__)

MAX_DT_US = 0.05
# sampling intervals between refreshes of the set of particles near the mode
ACTIVE_REFRESH = 4
SeedLike = Union[int, np.random.SeedSequence]


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    """Timeline and sampling of one simulated experimental run.

    Times are in ms except ``dt_us`` and ``sample_us``.  ``dt_us = None``
    selects min(50 ns, T_axial/40) automatically.  ``cloud_offset`` shifts
    the release position vertically (um, +z is up).

    With ``focus_fraction > 0`` that share of the macro-particles is drawn
    from a narrower transverse Gaussian (``focus_sigma``, um) around the
    cloud centre and all weights are importance-corrected, so that far more
    particles sample the cavity mode at the same cost.  Weights then differ
    between particles but still sum to ``n_atoms``.
    """

    n_atoms: float = 1e6
    release_time: float = 0.0
    drive_on_time: float = 3.0
    shutter_ramp: float = 0.2
    record_until: float = 50.0
    dt_us: Optional[float] = None
    sample_us: float = 5.0
    cloud_sigma: float = 1000.0
    cloud_offset: float = 0.0
    temperature_uK: float = 100.0
    n_macroparticles: int = 2000
    focus_fraction: float = 0.0
    focus_sigma: float = 250.0
    seed: int = 0
    heating: bool = True
    trapped_radius: float = 2.0

    def __post_init__(self):
        if self.n_atoms < 0:
            raise ValueError("n_atoms must be >= 0")
        if self.n_macroparticles < 100:
            raise ValueError("n_macroparticles must be at least 100")
        if self.dt_us is not None and self.dt_us <= 0:
            raise ValueError("dt_us must be positive")
        if self.sample_us <= 0:
            raise ValueError("sample_us must be positive")
        if self.record_until <= self.release_time:
            raise ValueError("record_until must follow release_time")
        if self.cloud_sigma <= 0 or self.temperature_uK < 0 or self.shutter_ramp < 0:
            raise ValueError("cloud_sigma must be positive, temperature and ramp >= 0")
        if not 0.0 <= self.focus_fraction < 1.0:
            raise ValueError("focus_fraction must lie in [0, 1)")
        if self.focus_sigma <= 0:
            raise ValueError("focus_sigma must be positive")


def mode_overlap_per_atom(config: ProtocolConfig, params: SystemParams) -> float:
    """Expected f^2 of one atom of the freshly released Gaussian cloud."""
    sigma, w, k = config.cloud_sigma, params.waist, params.k
    axial = 0.5 * (1.0 + math.exp(-2.0 * (k * sigma) ** 2))
    s = 1.0 + 4.0 * sigma**2 / w**2
    vertical = math.exp(-2.0 * config.cloud_offset**2 / (w**2 * s)) / math.sqrt(s)
    return axial * vertical / math.sqrt(s)


def atoms_for_pulling(n_eff_u0: float, config: ProtocolConfig, params: SystemParams) -> float:
    """Atom number whose expected frequency pulling at release is ``n_eff_u0``."""
    return n_eff_u0 / (light_shift_u0(params) * mode_overlap_per_atom(config, params))


def axial_frequency(n_photons: float, params: SystemParams) -> float:
    """Harmonic axial trap frequency (rad/us) at an antinode on axis."""
    depth = abs(light_shift_u0(params)) * n_photons
    return math.sqrt(2.0 * depth * params.k**2 * params.hbar_over_m)


def choose_time_step(config: ProtocolConfig, eta: float, params: SystemParams) -> float:
    """Integrator step (us) resolving the deepest possible axial oscillation.

    The deepest trap occurs with the mode pulled onto resonance, n = eta^2/kappa^2.
    The step is shrunk so that it divides the sampling interval exactly.
    """
    n_peak = (eta / params.kappa) ** 2
    omega_ax = axial_frequency(n_peak, params)
    limit = MAX_DT_US if omega_ax == 0 else min(MAX_DT_US, 2 * math.pi / omega_ax / 40.0)
    if omega_ax > params.kappa / 4:
        warnings.warn(
            f"axial trap frequency {omega_ax:.3g} rad/us exceeds kappa/4; the adiabatic "
            "field approximation degrades",
            stacklevel=2,
        )
    if config.dt_us is not None:
        if config.dt_us > limit * (1 + 1e-12):
            raise SimulationError(
                f"dt = {config.dt_us} us does not resolve the axial motion (need <= {limit:.4g} us)"
            )
        limit = config.dt_us
    n_sub = math.ceil(config.sample_us / limit - 1e-9)
    return config.sample_us / n_sub


def _rng(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


def initialize_thermal_cloud(
    config: ProtocolConfig, params: SystemParams, seed: Optional[SeedLike] = None
) -> EnsembleState:
    """Gaussian cloud on the cavity axis with Maxwell-Boltzmann velocities."""
    if config.n_atoms <= 0:
        raise ValueError("an ensemble needs a positive atom number")
    rng = _rng(config.seed if seed is None else seed)
    m = config.n_macroparticles
    sigma = config.cloud_sigma
    pos = rng.normal(0.0, sigma, size=(m, 3))
    n_focus = int(round(config.focus_fraction * m))
    if n_focus:
        pos[:n_focus, 1:] *= config.focus_sigma / sigma
    v_rms = math.sqrt(uk_to_angular(config.temperature_uK) * params.hbar_over_m)
    vel = rng.normal(0.0, 1.0, size=(m, 3)) * v_rms
    if n_focus:
        r2 = pos[:, 1] ** 2 + pos[:, 2] ** 2
        alpha, sf = n_focus / m, config.focus_sigma
        # 2-D transverse density ratio p/q (common 1/2pi dropped)
        p = np.exp(-r2 / (2 * sigma**2)) / sigma**2
        q = (1 - alpha) * p + alpha * np.exp(-r2 / (2 * sf**2)) / sf**2
        weights = p / q
        weights *= config.n_atoms / weights.sum()
    else:
        weights = np.full(m, config.n_atoms / m)
    pos[:, 2] += config.cloud_offset
    return EnsembleState(pos, vel, weights, time=config.release_time * 1e3)


def dipole_force(r, n_photons: float, params: SystemParams) -> np.ndarray:
    """Acceleration (um/us^2) from the dipole potential plus gravity.

    ``r`` is a 3-vector or an (M, 3) array.
    """
    if n_photons < 0:
        raise ValueError("photon number must be >= 0")
    pos = np.atleast_2d(np.asarray(r, dtype=float))
    f2, s2, gauss = _kernels.mode_weights(pos, params.k, params.waist)
    out = np.empty_like(pos)
    _kernels.accelerations(
        pos, f2, s2, gauss, light_shift_u0(params) * n_photons,
        params.k, params.waist, params.hbar_over_m, params.gravity, out,
    )
    return out[0] if np.ndim(r) == 1 else out


def potential_energy(r, n_photons: float, params: SystemParams) -> np.ndarray:
    """Potential energy per unit mass (um^2/us^2): dipole plus gravity."""
    pos = np.asarray(r, dtype=float)
    f = mode_function(pos, params)
    return params.hbar_over_m * light_shift_u0(params) * n_photons * f * f + params.gravity * pos[..., 2]


def heating_kick(velocity, local_s, dt: float, rng: np.random.Generator, params: SystemParams):
    """Random recoil kicks on the transverse axes over a time ``dt`` (us).

    Each transverse axis gains kinetic energy at its own rate
    (2/5 on y, 1/5 on z, the polarization axis) times hbar*omega_rec*gamma*s.
    The cavity axis is not heated.
    """
    v = np.array(velocity, dtype=float)
    flat = v.reshape(-1, 3)
    s = np.broadcast_to(np.asarray(local_s, dtype=float), flat.shape[:1])
    if np.any(s < 0):
        raise ValueError("local saturation must be >= 0")
    base = 2.0 * params.hbar_over_m * params.omega_rec * params.gamma * s * dt
    noise = rng.standard_normal((flat.shape[0], 2))
    for axis, coeff in zip((1, 2), RECOIL_AXIS_COEFFS):
        flat[:, axis] += np.sqrt(coeff * base) * noise[:, axis - 1]
    return flat.reshape(v.shape)


def _eta_at(t_us: float, config: ProtocolConfig, eta: float) -> float:
    on = config.drive_on_time * 1e3
    ramp = config.shutter_ramp * 1e3
    if t_us <= on:
        return 0.0
    if t_us < on + ramp:
        return eta * (t_us - on) / ramp
    return eta


def _kernel_args(config, drive_eta, drive: DriveConfig, params):
    return dict(
        drive_on=config.drive_on_time * 1e3,
        ramp=config.shutter_ramp * 1e3,
        eta_full=drive_eta,
        delta_c=drive.delta_C,
        kappa=params.kappa,
        u0=light_shift_u0(params),
        k=params.k,
        w=params.waist,
        hbar_m=params.hbar_over_m,
        grav=params.gravity,
        sat_per_photon=params.g**2 / (params.delta_A**2 + params.gamma**2),
    )


def _field(state_pos, weights, eta, drive, params):
    f2, s2, gauss = _kernels.mode_weights(state_pos, params.k, params.waist)
    n_eff = float(np.dot(weights, f2))
    n = photon_number(eta, drive.delta_C, n_eff * light_shift_u0(params), params.kappa)
    return n, n_eff, f2, s2, gauss


def step(
    state: EnsembleState,
    drive: DriveConfig,
    config: ProtocolConfig,
    params: SystemParams,
    rng: np.random.Generator,
    dt: Optional[float] = None,
    frozen_photons: Optional[float] = None,
) -> EnsembleState:
    """Advance the ensemble by one velocity-Verlet step of ``dt`` us."""
    eta = drive.resolved_eta(params)
    if dt is None:
        dt = choose_time_step(config, eta, params)
    new = state.copy()
    t = state.time
    if frozen_photons is None:
        n0, _, f2, s2, gauss = _field(new.positions, new.weights, _eta_at(t, config, eta), drive, params)
    else:
        n0 = frozen_photons
        f2, s2, gauss = _kernels.mode_weights(new.positions, params.k, params.waist)
    acc = np.empty_like(new.positions)
    args = _kernel_args(config, eta, drive, params)
    _kernels.accelerations(
        new.positions, f2, s2, gauss, args["u0"] * n0, args["k"], args["w"],
        args["hbar_m"], args["grav"], acc,
    )
    s_accum = np.zeros(len(new.weights))
    everyone = np.arange(len(new.weights))
    _kernels.advance(
        new.positions, new.velocities, acc, new.weights, s_accum, everyone, 1, t, dt,
        frozen_n=-1.0 if frozen_photons is None else float(frozen_photons), **args,
    )
    if not np.all(np.isfinite(new.positions)):
        raise SimulationError(f"non-finite particle position at t = {t + dt} us")
    if config.heating:
        new.velocities = heating_kick(new.velocities, s_accum / dt, dt, rng, params)
    new.time = t + dt
    return new


def propagate(state: EnsembleState, n_photons: float, dt: float, n_steps: int, params: SystemParams) -> EnsembleState:
    """Velocity-Verlet in a frozen field of ``n_photons``, without heating."""
    if n_photons < 0:
        raise ValueError("photon number must be >= 0")
    new = state.copy()
    acc = dipole_force(new.positions, n_photons, params)
    s_accum = np.zeros(len(new.weights))
    everyone = np.arange(len(new.weights))
    drive = DriveConfig(delta_C=0.0, eta=0.0)
    args = _kernel_args(ProtocolConfig(), 0.0, drive, params)
    _kernels.advance(new.positions, new.velocities, acc, new.weights, s_accum, everyone,
                     int(n_steps), new.time, dt, frozen_n=float(n_photons), **args)
    if not np.all(np.isfinite(new.positions)):
        raise SimulationError("non-finite particle position")
    new.time = state.time + n_steps * dt
    return new


def _active_set(pos, vel, span, params):
    """Indices of particles that may come within the mode cutoff during ``span`` us."""
    r_perp = np.hypot(pos[:, 1], pos[:, 2])
    v_perp = np.hypot(vel[:, 1], vel[:, 2])
    reach = v_perp * span + 0.5 * params.gravity * span * span
    r_cut = _kernels.CUTOFF_RADIUS_IN_WAISTS * params.waist
    return np.nonzero(r_perp - reach <= r_cut * (1 + 1e-9))[0]


def _trapped_weight(pos, weights, radius):
    r2 = pos[:, 1] ** 2 + pos[:, 2] ** 2
    return float(weights[r2 < radius * radius].sum())


def run_protocol(
    config: ProtocolConfig,
    drive: DriveConfig,
    params: SystemParams,
    seed: Optional[SeedLike] = None,
    anchor: PowerAnchor = PowerAnchor(),
) -> TransmissionTrace:
    """Simulate one run from release to ``record_until``.

    Each sample after drive-on is the average over the preceding sampling
    interval, like a detector with that time resolution.

    ``trapped_fraction`` is the weight inside r_perp < trapped_radius * w,
    relative to that weight at release.
    """
    rng = _rng(config.seed if seed is None else seed)
    eta = drive.resolved_eta(params, anchor)
    dt = choose_time_step(config, eta, params)
    sample = config.sample_us
    t0 = config.release_time * 1e3
    n_samples = int(math.floor((config.record_until * 1e3 - t0) / sample + 1e-9)) + 1
    times = t0 + sample * np.arange(n_samples)
    if config.n_atoms == 0:
        ramp = np.array([_eta_at(t, config, eta) for t in times])
        photons = photon_number(ramp, drive.delta_C, 0.0, params.kappa)
        zeros = np.zeros(n_samples)
        return _finish(times, photons, zeros, zeros, 0.0, eta, drive, config, params)

    state = initialize_thermal_cloud(config, params, seed=rng.integers(2**63))
    radius = config.trapped_radius * params.waist
    pos, vel, weights = state.positions, state.velocities, state.weights
    ref_weight = _trapped_weight(pos, weights, radius)

    photons = np.zeros(n_samples)
    n_effs = np.zeros(n_samples)
    trapped = np.zeros(n_samples)

    # free flight is exact: jump analytically to the last sample before drive-on
    on = config.drive_on_time * 1e3
    i = 0
    pos0, vel0 = pos.copy(), vel.copy()
    while i < n_samples and times[i] <= on:
        tau = times[i] - t0
        pos = pos0 + vel0 * tau
        pos[:, 2] -= 0.5 * params.gravity * tau * tau
        f2, _, _ = _kernels.mode_weights(pos, params.k, params.waist)
        n_effs[i] = float(np.dot(weights, f2))
        trapped[i] = _trapped_weight(pos, weights, radius)
        i += 1
    if i == n_samples:
        return _finish(times, photons, n_effs, trapped, ref_weight, eta, drive, config, params)
    tau = times[i - 1] - t0
    vel = vel0.copy()
    vel[:, 2] -= params.gravity * tau
    pos = np.ascontiguousarray(pos)

    args = _kernel_args(config, eta, drive, params)
    t = times[i - 1]
    n_ph, _, f2, s2, gauss = _field(pos, weights, _eta_at(t, config, eta), drive, params)
    acc = np.empty_like(pos)
    _kernels.accelerations(pos, f2, s2, gauss, args["u0"] * n_ph, args["k"], args["w"],
                           args["hbar_m"], args["grav"], acc)
    s_accum = np.zeros(len(weights))
    n_sub = int(round(sample / dt))
    chunk = 0
    while i < n_samples:
        s_accum[:] = 0.0
        if chunk % ACTIVE_REFRESH == 0:
            active = _active_set(pos, vel, ACTIVE_REFRESH * sample, params)
        chunk += 1
        n_ph, n_eff = _kernels.advance(pos, vel, acc, weights, s_accum, active, n_sub, t, dt,
                                       frozen_n=-1.0, **args)
        t = times[i]
        if not np.all(np.isfinite(pos)):
            raise SimulationError(f"non-finite particle position at t = {t * 1e-3:.6g} ms")
        if config.heating:
            lit = np.nonzero(s_accum > 0)[0]
            vel[lit] = heating_kick(vel[lit], s_accum[lit] / sample, sample, rng, params)
        photons[i] = n_ph
        n_effs[i] = n_eff
        trapped[i] = _trapped_weight(pos, weights, radius)
        i += 1
    return _finish(times, photons, n_effs, trapped, ref_weight, eta, drive, config, params)


def _finish(times, photons, n_effs, trapped, ref_weight, eta, drive, config, params):
    frac = trapped / ref_weight if ref_weight > 0 else np.zeros_like(trapped)
    empty = photon_number(eta, drive.delta_C, 0.0, params.kappa)
    return TransmissionTrace(
        times=times * 1e-3,
        photon_number=photons,
        n_eff=n_effs,
        trapped_fraction=frac,
        empty_level=float(empty),
        search_from=config.drive_on_time + config.shutter_ramp,
    )


def trajectory_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(index,))


def _run_one(args):
    config, drive, params, master_seed, index, anchor = args
    return run_protocol(config, drive, params, seed=trajectory_seed(master_seed, index), anchor=anchor)


def run_ensemble(
    config: ProtocolConfig,
    drive: DriveConfig,
    params: SystemParams,
    n_traces: int,
    master_seed: Optional[int] = None,
    workers: int = 1,
    anchor: PowerAnchor = PowerAnchor(),
) -> List[TransmissionTrace]:
    """Independent trajectories, optionally spread over worker processes."""
    seed = config.seed if master_seed is None else master_seed
    jobs = [(config, drive, params, seed, i, anchor) for i in range(n_traces)]
    if workers <= 1 or n_traces <= 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def scan_atom_number(
    atom_numbers: Sequence[float],
    config: ProtocolConfig,
    drive: DriveConfig,
    params: SystemParams,
    n_traces: int = 10,
    master_seed: Optional[int] = None,
    workers: int = 1,
) -> List[Optional[float]]:
    """Trapping time of the trace averaged over ``n_traces`` per atom number.

    Each scan point reuses the same trajectory seeds.
    """
    out = []
    for n in atom_numbers:
        cfg = ProtocolConfig(**{**asdict(config), "n_atoms": float(n)})
        traces = run_ensemble(cfg, drive, params, n_traces, master_seed, workers)
        tau = extract_trapping_time(average_traces(traces))
        log.info("n_atoms=%.4g tau=%s", n, tau)
        out.append(tau)
    return out
