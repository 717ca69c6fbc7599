"""Compiled inner loops for the particle integrator."""

import math

import numba as nb
import numpy as np

# exp(-36) ~ 2e-16: beyond this the transverse Gaussian is zero to double precision
_GAUSS_CUTOFF = 36.0
CUTOFF_RADIUS_IN_WAISTS = math.sqrt(_GAUSS_CUTOFF / 2.0)


@nb.njit(cache=True)
def mode_weights_into(pos, k, w, f2, s2, gauss):
    """Fill f^2, sin(2kx) and the transverse Gaussian per particle."""
    inv_w2 = 1.0 / (w * w)
    for i in range(pos.shape[0]):
        arg = 2.0 * (pos[i, 1] ** 2 + pos[i, 2] ** 2) * inv_w2
        if arg < _GAUSS_CUTOFF:
            g = math.exp(-arg)
            c = math.cos(k * pos[i, 0])
            gauss[i] = g
            f2[i] = c * c * g
            s2[i] = 2.0 * math.sin(k * pos[i, 0]) * c
        else:
            gauss[i] = 0.0
            f2[i] = 0.0
            s2[i] = 0.0


@nb.njit(cache=True)
def mode_weights(pos, k, w):
    """Return (f^2, sin(2kx), transverse Gaussian) per particle."""
    m = pos.shape[0]
    f2 = np.zeros(m)
    s2 = np.zeros(m)
    gauss = np.zeros(m)
    mode_weights_into(pos, k, w, f2, s2, gauss)
    return f2, s2, gauss


@nb.njit(cache=True)
def accelerations(pos, f2, s2, gauss, u0n, k, w, hbar_m, grav, out):
    """-(hbar/m) grad(U0 n f^2) minus gravity along z, written into ``out``."""
    m = pos.shape[0]
    pref = hbar_m * u0n
    four_over_w2 = 4.0 / (w * w)
    for i in range(m):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
        out[i, 2] = -grav
        if gauss[i] > 0.0:
            out[i, 0] = pref * k * s2[i] * gauss[i]
            radial = pref * f2[i] * four_over_w2
            out[i, 1] = radial * pos[i, 1]
            out[i, 2] += radial * pos[i, 2]


@nb.njit(cache=True, fastmath=True)
def advance(
    pos,
    vel,
    acc,
    weights,
    s_accum,
    active,
    n_steps,
    t0,
    dt,
    drive_on,
    ramp,
    eta_full,
    delta_c,
    kappa,
    u0,
    k,
    w,
    hbar_m,
    grav,
    sat_per_photon,
    frozen_n,
):
    """Velocity-Verlet steps with the cavity field slaved to the atoms.

    Only the particles listed in ``active`` are stepped; every other particle
    must stay outside the mode for the whole call, where it feels gravity
    alone, and is moved along its exact parabola at the end.

    ``acc`` must hold the accelerations at the current positions on entry and
    holds them at the final positions on exit.  ``s_accum`` accumulates the
    time integral of the local saturation, used for heating kicks.  A
    non-negative ``frozen_n`` replaces the self-consistent photon number.
    Returns the photon number and N_eff averaged over the steps taken.
    Finiteness of the positions is left to the caller.
    """
    m = pos.shape[0]
    na = active.shape[0]
    f2 = np.zeros(m)
    s2 = np.zeros(m)
    gauss = np.zeros(m)
    inv_w2 = 1.0 / (w * w)
    pref0 = hbar_m * k
    four_over_w2 = 4.0 / (w * w)
    n_ph = 0.0
    n_ph_sum = 0.0
    n_eff_sum = 0.0
    for step in range(n_steps):
        t = t0 + (step + 1) * dt
        n_eff = 0.0
        for j in range(na):
            i = active[j]
            for a in range(3):
                vel[i, a] += 0.5 * dt * acc[i, a]
                pos[i, a] += dt * vel[i, a]
            arg = 2.0 * (pos[i, 1] * pos[i, 1] + pos[i, 2] * pos[i, 2]) * inv_w2
            if arg < _GAUSS_CUTOFF:
                g = math.exp(-arg)
                c = math.cos(k * pos[i, 0])
                gauss[i] = g
                f2[i] = c * c * g
                s2[i] = 2.0 * math.sin(k * pos[i, 0]) * c
                n_eff += weights[i] * f2[i]
            else:
                gauss[i] = 0.0
                f2[i] = 0.0
                s2[i] = 0.0
        if frozen_n >= 0.0:
            n_ph = frozen_n
        else:
            if t <= drive_on:
                eta = 0.0
            elif t < drive_on + ramp:
                eta = eta_full * (t - drive_on) / ramp
            else:
                eta = eta_full
            detune = delta_c - n_eff * u0
            n_ph = eta * eta / (detune * detune + kappa * kappa)
        n_ph_sum += n_ph
        n_eff_sum += n_eff
        u0n = u0 * n_ph
        s_max = sat_per_photon * n_ph
        for j in range(na):
            i = active[j]
            if gauss[i] > 0.0:
                acc[i, 0] = pref0 * u0n * s2[i] * gauss[i]
                radial = hbar_m * u0n * f2[i] * four_over_w2
                acc[i, 1] = radial * pos[i, 1]
                acc[i, 2] = radial * pos[i, 2] - grav
                s_accum[i] += s_max * f2[i] * dt
            else:
                acc[i, 0] = 0.0
                acc[i, 1] = 0.0
                acc[i, 2] = -grav
            for a in range(3):
                vel[i, a] += 0.5 * dt * acc[i, a]
    # ballistic particles
    span = n_steps * dt
    is_active = np.zeros(m, dtype=np.bool_)
    for j in range(na):
        is_active[active[j]] = True
    for i in range(m):
        if not is_active[i]:
            pos[i, 0] += vel[i, 0] * span
            pos[i, 1] += vel[i, 1] * span
            pos[i, 2] += vel[i, 2] * span - 0.5 * grav * span * span
            vel[i, 2] -= grav * span
            acc[i, 0] = 0.0
            acc[i, 1] = 0.0
            acc[i, 2] = -grav
    return n_ph_sum / n_steps, n_eff_sum / n_steps
