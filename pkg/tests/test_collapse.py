import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.stats import kstest

from selftrap.collapse import (
    DecayModelParams,
    escape_rate,
    mean_decay_curve,
    meanfield_fraction,
    simulate_decay,
    transmission_from_n,
)

REF = DecayModelParams.from_mhz(-1.87, -1.0, 10_000, 2.775, 1.0)


def test_reference_rate():
    assert REF.delta_c_tilde == pytest.approx(-0.675, abs=5e-4)
    assert REF.n0_u0_tilde == pytest.approx(-0.361, abs=5e-4)
    rate = escape_rate(REF.n0, REF)
    assert rate * REF.tau / REF.n0 == pytest.approx(0.0799, abs=5e-4)


def test_invalid_parameters():
    with pytest.raises(ValueError):
        DecayModelParams(-0.5, -0.01, 10, -1.0, 1.0)
    with pytest.raises(ValueError):
        DecayModelParams(-0.5, -0.01, 10, 1.0, 0.0)
    with pytest.raises(ValueError):
        DecayModelParams(-0.5, -0.01, 2.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        escape_rate(-1, REF)


def test_empty_trap():
    model = DecayModelParams(-0.5, -0.01, 0, 1.0, 1.0)
    traj = simulate_decay(model, 10.0, seed=0)
    assert len(traj.escape_times) == 0
    assert np.all(traj.n_at([0.0, 5.0]) == 0)
    curve = mean_decay_curve(model, 5.0, 3)
    assert np.all(curve.n_mean == 0)


def test_single_atom_escape_is_exponential():
    model = DecayModelParams(-0.5, -0.1, 1, 0.0, 2.0)
    times = [simulate_decay(model, math.inf, seed=i).escape_times[0] for i in range(2000)]
    assert kstest(times, "expon", args=(0, 2.0)).pvalue > 0.01


def test_linear_death_process_mean():
    model = DecayModelParams(-0.5, -1e-5, 10_000, 0.0, 1.0)
    curve = mean_decay_curve(model, 4.0, 50, master_seed=7, n_points=41)
    p = np.exp(-curve.times / model.tau)
    sigma = np.sqrt(model.n0 * p * (1 - p) / 50)
    assert np.all(np.abs(curve.n_mean - model.n0 * p) <= 3 * sigma + 1e-9)


def test_per_atom_rate_grows_as_atoms_leave():
    model = DecayModelParams.from_mhz(-1.87, -1.0, 500, 2.775, 1.0)
    traj = simulate_decay(model, math.inf, seed=3)
    n = np.concatenate([[model.n0], traj.counts])
    n = n[n > 0]
    per_atom = escape_rate(n, model) / n
    assert np.all(np.diff(per_atom) >= -1e-15)


def test_meanfield_against_ode_solver():
    t = np.linspace(0.0, 60.0, 121)
    dc, q, a, tau = REF.delta_c_tilde, REF.n0_u0_tilde, REF.a_param, REF.tau

    def rhs(_, x):
        return -x / tau * np.exp(-a / ((dc - x * q) ** 2 + 1.0))

    ref = solve_ivp(rhs, (0, 60.0), [1.0], t_eval=t, rtol=1e-12, atol=1e-14, method="DOP853").y[0]
    np.testing.assert_allclose(meanfield_fraction(t, dc, q, a, tau), ref, rtol=1e-7, atol=1e-12)


def test_meanfield_exponential_when_a_zero():
    t = np.linspace(0, 50, 11)
    np.testing.assert_allclose(meanfield_fraction(t, -0.5, -0.3, 0.0, 2.0), np.exp(-t / 2.0), rtol=1e-9)


def test_monte_carlo_mean_approaches_meanfield():
    curve = mean_decay_curve(REF, 60.0, 20, master_seed=1, n_points=121)
    assert np.max(np.abs(curve.n_mean - curve.n_meanfield)) / REF.n0 < 0.01


def test_seed_determinism():
    a = simulate_decay(REF, 10.0, seed=42)
    b = simulate_decay(REF, 10.0, seed=42)
    np.testing.assert_array_equal(a.escape_times, b.escape_times)


def test_transmission_flat_for_constant_n():
    t = np.linspace(0, 1, 5)
    tr = transmission_from_n(t, np.full(5, REF.n0), REF)
    assert np.ptp(tr.photon_number) == 0
    d = REF.delta_c_tilde - REF.n0_u0_tilde
    assert tr.photon_number[0] == pytest.approx(1.0 / (d * d + 1.0))


def test_transmission_decays_to_empty_level():
    curve = mean_decay_curve(REF, 80.0, 5, master_seed=2, n_points=161)
    tr = transmission_from_n(curve.times, curve.n_meanfield, REF)
    assert np.all(np.diff(tr.photon_number) <= 1e-15)
    assert tr.transmission_norm[0] > 1.3
    assert tr.transmission_norm[-1] == pytest.approx(1.0, abs=0.01)


@settings(max_examples=40, deadline=None)
@given(
    dc=st.floats(-3.0, -0.1),
    frac=st.floats(0.05, 0.95),
    a=st.floats(0.0, 6.0),
)
def test_meanfield_monotone_decreasing(dc, frac, a):
    q = dc * frac
    x = meanfield_fraction(np.linspace(0, 30, 61), dc, q, a, 1.0)
    assert x[0] == 1.0
    assert np.all(np.diff(x) <= 0)
    assert np.all(x > 0)
