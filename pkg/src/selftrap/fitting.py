"""Least-squares fits of the trapping-time and collapse models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .collapse import meanfield_fraction
from .core import PowerAnchor, SystemParams, mhz, saturation_at_power, to_mhz
from .trace import TransmissionTrace
from .trap import HeatingModel, trapping_time_curve


N_STARTS = 8
_LHS_SEED = 20240917


class FitError(RuntimeError):
    pass


class DegenerateDataError(FitError):
    pass


@dataclass
class FitResult:
    parameters: Dict[str, float]
    residual_rms: float
    n_evaluations: int
    converged: bool
    parameter_bounds_hit: List[str] = field(default_factory=list)
    objective: float = float("nan")
    extras: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "parameters": dict(self.parameters),
            "residual_rms": self.residual_rms,
            "n_evaluations": self.n_evaluations,
            "converged": self.converged,
            "parameter_bounds_hit": list(self.parameter_bounds_hit),
            "objective": self.objective,
            "extras": dict(self.extras),
        }


def _start_box(x0, lo, hi):
    span = np.maximum(np.abs(x0), 1.0)
    box_lo = np.where(np.isfinite(lo), lo, x0 - span)
    box_hi = np.where(np.isfinite(hi), hi, x0 + span)
    return box_lo, box_hi


def minimize(
    objective: Callable[[np.ndarray], float],
    initial: Sequence[float],
    bounds: Optional[Sequence[Tuple[Optional[float], Optional[float]]]] = None,
    names: Optional[Sequence[str]] = None,
    xtol: float = 1e-8,
    max_evaluations: int = 10_000,
    n_starts: int = N_STARTS,
) -> FitResult:
    """Multi-start bounded Nelder-Mead.

    The first start is ``initial``; the others come from a fixed Latin
    hypercube over the bounds (or over initial +- max(|initial|, 1) along
    unbounded directions).  Each start runs until the simplex is smaller than
    ``xtol`` relative to that box, or ``max_evaluations`` is spent.  The
    lowest objective wins, ties going to the earlier start.
    """
    x0 = np.asarray(initial, dtype=float)
    dim = len(x0)
    names = list(names) if names is not None else [f"x{i}" for i in range(dim)]
    if bounds is None:
        bounds = [(None, None)] * dim
    lo = np.array([-np.inf if b[0] is None else b[0] for b in bounds], dtype=float)
    hi = np.array([np.inf if b[1] is None else b[1] for b in bounds], dtype=float)
    if np.any(x0 < lo) or np.any(x0 > hi):
        raise FitError("initial point violates the bounds")
    box_lo, box_hi = _start_box(x0, lo, hi)
    scale = box_hi - box_lo

    n_eval = 0

    def scaled(u):
        nonlocal n_eval
        n_eval += 1
        x = box_lo + u * scale
        val = float(objective(x))
        if not math.isfinite(val):
            raise FitError(f"objective is not finite at {dict(zip(names, x))}")
        return val

    scaled(np.zeros(dim) + (x0 - box_lo) / scale)
    u_lo = (lo - box_lo) / scale
    u_hi = (hi - box_lo) / scale
    ubounds = optimize.Bounds(u_lo, u_hi)
    starts = [(x0 - box_lo) / scale]
    if n_starts > 1:
        lhs = qmc.LatinHypercube(d=dim, seed=_LHS_SEED).random(n_starts - 1)
        starts.extend(lhs)

    def descend(u_start):
        return optimize.minimize(
            scaled,
            u_start,
            method="Nelder-Mead",
            bounds=ubounds,
            options={"xatol": xtol, "fatol": np.inf, "maxfev": max_evaluations},
        )

    best = None
    all_converged = []
    for u_start in starts:
        res = descend(u_start)
        all_converged.append(bool(res.success))
        if best is None or res.fun < best.fun:
            best = res
    # a collapsed simplex can stall short of the minimum; restart it until it stops moving
    for _ in range(5):
        res = descend(best.x)
        moved = res.fun < best.fun
        if res.fun <= best.fun:
            best = res
        if not moved:
            break
    x_best = box_lo + best.x * scale
    hit = [
        n for n, x, a, b in zip(names, x_best, lo, hi)
        if (np.isfinite(a) and abs(x - a) <= 1e-6 * max(1.0, abs(a)))
        or (np.isfinite(b) and abs(x - b) <= 1e-6 * max(1.0, abs(b)))
    ]
    return FitResult(
        parameters=dict(zip(names, map(float, x_best))),
        residual_rms=math.sqrt(max(best.fun, 0.0)),
        n_evaluations=n_eval,
        converged=bool(best.success),
        parameter_bounds_hit=hit,
        objective=float(best.fun),
        extras={"starts_converged": all_converged},
    )


# -- heating coefficients from trapping time versus power --------------------


@dataclass(frozen=True)
class PowerCalibration:
    """How drive power maps onto antinode saturation for a trapping-time curve."""

    delta_C: float = mhz(-2.0)
    n_eff_u0: float = mhz(-1.0)
    anchor: PowerAnchor = PowerAnchor()

    def saturation(self, power_uW, params: SystemParams):
        return saturation_at_power(power_uW, self.delta_C, self.n_eff_u0, params, self.anchor)


def fit_heating_coefficients(
    power_uW: Sequence[float],
    tau_ms: Sequence[float],
    params: SystemParams,
    temperature: float,
    calibration: PowerCalibration = PowerCalibration(),
    initial: Tuple[float, float] = (1.0, 1.0),
) -> FitResult:
    """Fit (d0, d1) of the empirical trapping-time model to measured points.

    ``temperature`` is k_B T/hbar in rad/us.  NaN entries in ``tau_ms`` mark
    runs where no trapping was observed and are left out of the residuals.
    """
    power = np.asarray(power_uW, dtype=float)
    tau = np.asarray(tau_ms, dtype=float)
    if power.shape != tau.shape:
        raise ValueError("power and trapping-time arrays differ in length")
    trapped = np.isfinite(tau)
    if not trapped.any():
        raise DegenerateDataError("no data point shows trapping")
    if trapped.sum() < 4:
        raise DegenerateDataError("at least four trapped data points are needed")
    s = calibration.saturation(power[trapped], params)
    data = tau[trapped]

    def sse(x):
        model = trapping_time_curve(s, HeatingModel(max(x[0], 0.0), max(x[1], 0.0), temperature), params)
        r = np.nan_to_num(model, nan=0.0) - data
        return float(np.dot(r, r))

    fit = minimize(sse, initial, bounds=[(0.0, 100.0), (0.0, 100.0)], names=["d0", "d1"])
    fit.residual_rms = math.sqrt(fit.objective / len(data))
    fit.extras.update(n_points=int(len(data)), calibration_delta_C_MHz=to_mhz(calibration.delta_C))
    return fit


# -- collapse model from a transmission decay --------------------------------

COLLAPSE_NAMES = ["delta_c_tilde", "n0_u0_tilde", "a_param", "tau_ms"]


def collapse_shape(t, delta_c_tilde, n0_u0_tilde, a_param, tau):
    """Unscaled transmission 1/((dc - x(t) q)^2 + 1) of the mean-field decay."""
    x = meanfield_fraction(t, delta_c_tilde, n0_u0_tilde, a_param, tau)
    d = delta_c_tilde - x * n0_u0_tilde
    return 1.0 / (d * d + 1.0)


def _linear_scale_offset(basis, y):
    """Least-squares scale >= 0 and free offset for y ~ scale * basis + offset."""
    b = basis - basis.mean()
    denom = float(np.dot(b, b))
    scale = max(float(np.dot(b, y - y.mean())) / denom, 0.0) if denom > 0 else 0.0
    return scale, float(y.mean() - scale * basis.mean())


def _check_decay(y: np.ndarray):
    """Raise DegenerateDataError unless ``y`` clearly decays above its noise."""
    if len(y) < 8:
        raise DegenerateDataError("too few samples")
    seg = max(2, len(y) // 10)
    drop = abs(float(np.mean(y[:seg]) - np.mean(y[-seg:])))
    noise = float(np.median(np.abs(np.diff(y)))) / (0.6745 * math.sqrt(2.0))
    if drop <= 5.0 * noise / math.sqrt(seg) or drop <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        raise DegenerateDataError("series shows no decay above its noise level")


def _series(data, values):
    """Accept either (times, values) or a TransmissionTrace."""
    if isinstance(data, TransmissionTrace):
        if values is not None:
            raise ValueError("pass either a trace or times and values, not both")
        return data.times, data.photon_number
    if values is None:
        raise ValueError("values are required when times are given")
    return data, values


def _normalize(t, y):
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t.shape != y.shape:
        raise ValueError("times and values differ in length")
    t = t - t[0]
    lo, hi = float(np.min(y)), float(np.max(y))
    spread = hi - lo
    yn = (y - lo) / spread if spread > 0 else y - lo
    return t, yn


def _grid_initial(sse, tau_guess):
    """Best point of a coarse deterministic grid over the collapse parameters."""
    best, best_val = None, np.inf
    for dc in np.linspace(-3.0, 0.0, 7):
        for q in np.linspace(-3.0, 3.0, 13):
            for a in (0.0, 1.0, 2.5, 5.0, 10.0):
                for f in (0.3, 1.0, 3.0):
                    x = (dc, q, a, f * tau_guess)
                    val = sse(x)
                    if val < best_val:
                        best, best_val = x, val
    return best


def fit_collapse_model(
    times_ms,
    transmission: Optional[Sequence[float]] = None,
    kappa: float = mhz(2.77),
    initial: Optional[Sequence[float]] = None,
) -> FitResult:
    """Fit detuning, total pulling, A and tau to a transmission decay.

    An amplitude scale and a baseline offset are solved linearly at every
    evaluation, so the trace may be in arbitrary units.  The Lorentzian is
    symmetric under (dc, q) -> (-dc, -q); the fit keeps dc <= 0.
    ``times_ms`` may instead be a TransmissionTrace.
    """
    times_ms, transmission = _series(times_ms, transmission)
    t, y = _normalize(times_ms, transmission)
    _check_decay(y)
    span = float(t[-1])
    if initial is None:
        # time at which the excess has fallen by 1/e, as a timescale guess
        excess = np.abs(y - np.median(y[-max(2, len(y) // 10):]))
        below = np.nonzero(excess <= excess[0] / math.e)[0]
        tau0 = float(t[below[0]]) if len(below) and t[below[0]] > 0 else span / 3

    def sse(x):
        shape = collapse_shape(t, *x)
        scale, offset = _linear_scale_offset(shape, y)
        r = scale * shape + offset - y
        return float(np.dot(r, r))

    if initial is None:
        initial = _grid_initial(sse, tau0)

    bounds = [(-10.0, 0.0), (-10.0, 10.0), (0.0, 30.0), (1e-3 * span, 100.0 * span)]
    fit = minimize(sse, initial, bounds=bounds, names=COLLAPSE_NAMES)
    x = [fit.parameters[n] for n in COLLAPSE_NAMES]
    shape = collapse_shape(t, *x)
    scale, offset = _linear_scale_offset(shape, y)
    raw = np.asarray(transmission, dtype=float)
    spread = float(np.max(raw) - np.min(raw))
    fit.residual_rms = math.sqrt(fit.objective / len(y))
    fit.extras.update(
        scale=float(scale * spread),
        offset=float(offset * spread + np.min(raw)),
        delta_C_MHz=fit.parameters["delta_c_tilde"] * to_mhz(kappa),
        n0_u0_MHz=fit.parameters["n0_u0_tilde"] * to_mhz(kappa),
    )
    return fit


def collapse_model_curve(times_ms, fit: FitResult) -> np.ndarray:
    """Evaluate a fitted collapse model (in the units of the fitted data)."""
    t = np.asarray(times_ms, dtype=float)
    x = [fit.parameters[n] for n in COLLAPSE_NAMES]
    return fit.extras["scale"] * collapse_shape(t - t[0], *x) + fit.extras["offset"]


def bootstrap_collapse_fit(
    times_ms, transmission, n_boot: int = 20, seed: int = 0, kappa: float = mhz(2.77)
) -> Dict[str, float]:
    """Residual-bootstrap standard deviation of the collapse parameters."""
    t = np.asarray(times_ms, dtype=float)
    y = np.asarray(transmission, dtype=float)
    base = fit_collapse_model(t, y, kappa)
    model = collapse_model_curve(t, base)
    resid = y - model
    rng = np.random.default_rng(seed)
    start = [base.parameters[n] for n in COLLAPSE_NAMES]
    samples = []
    for _ in range(n_boot):
        yb = model + rng.choice(resid, size=len(resid), replace=True)
        fb = fit_collapse_model(t, yb, kappa, initial=start)
        samples.append([fb.parameters[n] for n in COLLAPSE_NAMES])
    spread = np.std(np.array(samples), axis=0, ddof=1)
    return dict(zip(COLLAPSE_NAMES, map(float, spread)))


# -- non-exponentiality ------------------------------------------------------


@dataclass
class NonExponentialityResult:
    improvement: float
    non_exponential: bool
    exponential_rms: float
    model_rms: float
    exponential_tau_ms: float
    model_fit: FitResult


def nonexponentiality_test(times_ms, values=None, threshold: float = 2.0) -> NonExponentialityResult:
    """Compare a single exponential against the collapse model on a decay.

    ``values`` may be an atom-number series or a transmission trace; both
    models get a free scale and offset.  The improvement is the ratio of the
    exponential's residual rms to the collapse model's.
    """
    times_ms, values = _series(times_ms, values)
    t, y = _normalize(times_ms, values)
    _check_decay(y)
    span = float(t[-1])

    def exp_sse(x):
        basis = np.exp(-t / x[0])
        scale, offset = _linear_scale_offset(basis, y)
        r = scale * basis + offset - y
        return float(np.dot(r, r))

    exp_fit = minimize(exp_sse, [span / 3], bounds=[(1e-3 * span, 100.0 * span)], names=["tau_ms"])

    def model_sse(x):
        frac = meanfield_fraction(t, *x)
        scale, offset = _linear_scale_offset(frac, y)
        r = scale * frac + offset - y
        return float(np.dot(r, r))

    bounds = [(-10.0, 0.0), (-10.0, 10.0), (0.0, 30.0), (1e-3 * span, 100.0 * span)]
    # a transmission trace is a monotone image of n(t) only approximately;
    # take the better of the n-shape and the transmission-shape models
    model_fit = minimize(model_sse, [-1.0, -0.5, 1.0, exp_fit.parameters["tau_ms"]],
                         bounds=bounds, names=COLLAPSE_NAMES)
    try:
        trans_fit = fit_collapse_model(t, y)
        if trans_fit.objective < model_fit.objective:
            model_fit = trans_fit
    except FitError:
        pass

    n = len(y)
    exp_rms = math.sqrt(exp_fit.objective / n)
    model_rms = math.sqrt(model_fit.objective / n)
    # residuals below ~1e-6 of the data range are at the optimizer's resolution
    floor = 1e-6
    improvement = (exp_rms + floor) / (model_rms + floor)
    return NonExponentialityResult(
        improvement=improvement,
        non_exponential=improvement > threshold,
        exponential_rms=exp_rms,
        model_rms=model_rms,
        exponential_tau_ms=exp_fit.parameters["tau_ms"],
        model_fit=model_fit,
    )
