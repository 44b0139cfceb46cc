"""Curve fits for Rabi, Ramsey and parity data.

Every fit returns a :class:`FitResult`. Standard errors come from the
Jacobian at the optimum; without explicit ``sigma`` the covariance is
rescaled by the reduced chi-square.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

RAMSEY_SHAPE = 0.95


@dataclass
class FitResult:
    params: np.ndarray
    std_errors: np.ndarray
    residual_norm: float
    converged: bool
    model: str
    names: tuple[str, ...] = ()
    flags: list[str] = field(default_factory=list)
    fn: Callable | None = field(default=None, repr=False, compare=False)

    def __getitem__(self, name: str) -> float:
        return float(self.params[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.std_errors[self.names.index(name)])

    def __call__(self, x):
        if self.fn is None:
            raise TypeError("fit result carries no model function")
        return self.fn(np.asarray(x, dtype=float), *self.params)

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": {n: float(v) for n, v in zip(self.names, self.params)},
            "std_errors": {n: float(v) for n, v in zip(self.names, self.std_errors)},
            "residual_norm": float(self.residual_norm),
            "converged": bool(self.converged),
            "flags": list(self.flags),
        }


def least_squares(
    fn: Callable,
    x,
    y,
    p0: Sequence[float],
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    sigma=None,
    names: Sequence[str] | None = None,
    model: str = "custom",
) -> FitResult:
    """Bounded nonlinear least squares (trust-region reflective).

    ``fn(x, *params)`` must return model values for every ``x``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("fit data contain NaN or infinite values")
    if len(y) < len(p0):
        raise ValueError(f"need at least {len(p0)} points to fit {len(p0)} parameters, got {len(y)}")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("sigma must be finite and non-zero")
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(len(p0)))
    lo, hi = bounds if bounds is not None else (-np.inf, np.inf)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), p0.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), p0.shape)
    p0 = np.clip(p0, lo, hi)

    def resid(p):
        return (fn(x, *p) - y) * w

    res = optimize.least_squares(resid, p0, bounds=(lo, hi), method="trf", x_scale="jac",
                                 ftol=1e-14, xtol=1e-14, gtol=1e-14, max_nfev=2000 * len(p0))
    params, fun, jac = res.x, res.fun, res.jac
    # Gauss-Newton polish: trf stops on its own scaled tolerances
    for _ in range(3):
        step, *_ = np.linalg.lstsq(jac, -fun, rcond=None)
        trial = np.clip(params + step, lo, hi)
        f_trial = resid(trial)
        if not np.sum(f_trial**2) <= np.sum(fun**2) * (1 + 1e-12):
            break
        params, fun = trial, f_trial
    flags = []
    converged = bool(res.success) and bool(np.all(np.isfinite(params)))
    chi2 = float(np.sum(fun**2))
    at_bound = np.zeros(len(params), dtype=bool)
    for i, n in enumerate(names):
        tol = 1e-9 * max(abs(hi[i] - lo[i]) if np.isfinite(hi[i] - lo[i]) else abs(params[i]), 1.0)
        if np.isfinite(hi[i]) and params[i] >= hi[i] - tol:
            flags.append(f"{n} at upper bound")
            at_bound[i] = True
        if np.isfinite(lo[i]) and params[i] <= lo[i] + tol:
            flags.append(f"{n} at lower bound")
            at_bound[i] = True
    # parameters pinned at a bound are held fixed for the covariance
    free = ~at_bound
    dof = len(y) - int(free.sum())
    std = np.full(len(params), np.nan)
    try:
        jf = jac[:, free]
        jtj = jf.T @ jf
        if free.any():
            if np.linalg.cond(jtj) > 1e14:
                raise np.linalg.LinAlgError("singular")
            cov = np.linalg.inv(jtj)
            if sigma is None:
                cov *= chi2 / dof if dof > 0 else np.nan
            std[free] = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        converged = False
        flags.append("singular Jacobian at optimum")
    return FitResult(params, std, math.sqrt(chi2), converged, model, names, flags, fn)


def _span(t) -> float:
    t = np.asarray(t, dtype=float)
    s = float(t.max() - t.min())
    if s <= 0:
        raise ValueError("scan has zero span")
    return s


def damped_rabi_model(t, rabi, tau, amplitude, offset):
    """offset + (amplitude/2) * (1 - exp(-t/tau) cos(rabi t))."""
    return offset + 0.5 * amplitude * (1.0 - np.exp(-t / tau) * np.cos(rabi * t))


def _rabi_frequency_guess(t, p) -> float:
    span = _span(t)
    n = len(t)
    grid = np.linspace(2 * math.pi / (4 * span), math.pi * n / span, 4000)
    best, best_chi = grid[0], np.inf
    ones = np.ones_like(t)
    for om in grid:
        a = np.column_stack([ones, np.cos(om * t)])
        coef, *_ = np.linalg.lstsq(a, p, rcond=None)
        chi = float(np.sum((a @ coef - p) ** 2))
        if chi < best_chi:
            best, best_chi = om, chi
    return best


def fit_damped_rabi(t, prob, sigma=None, tau_max_factor: float = 1e3) -> FitResult:
    """Damped Rabi flop; returns rabi (rad/s), tau (s), amplitude, offset.

    ``tau`` is bounded above by ``tau_max_factor`` times the scan length, the
    value reported when no damping is resolved.
    """
    t = np.asarray(t, dtype=float)
    prob = np.asarray(prob, dtype=float)
    span = _span(t)
    ts = t / span
    om0 = _rabi_frequency_guess(ts, prob)
    offset0 = prob[np.argmin(t)]
    amp0 = 2 * (np.mean(prob) - offset0) or 1.0
    starts = [(om0, 1.0), (om0, 10.0), (om0, 0.3)]
    best = None
    for om, tau in starts:
        fit = least_squares(
            damped_rabi_model, ts, prob, [om, tau, amp0, offset0],
            bounds=([0.0, 1e-3, -2.0, -1.0], [np.inf, tau_max_factor, 2.0, 2.0]),
            sigma=sigma, names=("rabi", "tau", "amplitude", "offset"), model="damped_rabi",
        )
        if best is None or fit.residual_norm < best.residual_norm - 1e-15:
            best = fit
    scale = np.array([1 / span, span, 1.0, 1.0])
    params = best.params * scale
    std = best.std_errors * scale
    return FitResult(params, std, best.residual_norm, best.converged, "damped_rabi", best.names,
                     best.flags, damped_rabi_model)


def exp_decay_model(T, t2, amplitude):
    return amplitude * np.exp(-T / t2)


def ramsey_envelope(T, t2star):
    """Inhomogeneous fringe decay [1 + 0.95 (T/T2*)^2]^(-3/2)."""
    return (1.0 + RAMSEY_SHAPE * (np.asarray(T, dtype=float) / t2star) ** 2) ** -1.5


def ramsey_t2star_model(T, t2star, amplitude=1.0):
    return amplitude * ramsey_envelope(T, t2star)


def _check_amplitudes(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if np.any(a < -1e-9) or np.any(a > 1 + 1e-9):
        raise ValueError("fringe amplitudes must lie in [0, 1]")
    return a


def fit_ramsey_echo(T, amplitude, sigma=None, t2_max_factor: float = 1e4) -> FitResult:
    """Exponential decay A0 exp(-T/T2'); returns t2 (s) and amplitude."""
    T = np.asarray(T, dtype=float)
    a = _check_amplitudes(amplitude)
    span = _span(T)
    fit = least_squares(
        exp_decay_model, T / span, a, [1.0, max(a.max(), 1e-3)],
        bounds=([1e-4, 0.0], [t2_max_factor, 1.5]), sigma=sigma,
        names=("t2", "amplitude"), model="exp_decay",
    )
    scale = np.array([span, 1.0])
    return FitResult(fit.params * scale, fit.std_errors * scale, fit.residual_norm, fit.converged,
                     "exp_decay", fit.names, fit.flags, exp_decay_model)


def fit_ramsey_t2star(T, amplitude, sigma=None, free_amplitude: bool = True,
                      t2_max_factor: float = 1e4) -> FitResult:
    """Fit the inhomogeneous envelope; returns t2star (s) and amplitude."""
    T = np.asarray(T, dtype=float)
    a = _check_amplitudes(amplitude)
    span = _span(T)
    Ts = T / span
    grid = np.linspace(T.min(), T.max(), 200)
    if np.any(np.diff(ramsey_envelope(grid[grid > 0], 1.0)) >= 0):
        raise AssertionError("Ramsey envelope is not strictly decreasing")
    if free_amplitude:
        fit = least_squares(
            ramsey_t2star_model, Ts, a, [0.5, max(a.max(), 1e-3)],
            bounds=([1e-4, 0.0], [t2_max_factor, 1.5]), sigma=sigma,
            names=("t2star", "amplitude"), model="ramsey_t2star",
        )
        scale = np.array([span, 1.0])
        params, std = fit.params * scale, fit.std_errors * scale
    else:
        fit = least_squares(
            lambda x, t2: ramsey_envelope(x, t2), Ts, a, [0.5],
            bounds=([1e-4], [t2_max_factor]), sigma=sigma, names=("t2star",), model="ramsey_t2star",
        )
        params = np.array([fit.params[0] * span, 1.0])
        std = np.array([fit.std_errors[0] * span, 0.0])
    return FitResult(params, std, fit.residual_norm, fit.converged, "ramsey_t2star",
                     ("t2star", "amplitude"), fit.flags, ramsey_t2star_model)


def fringe_model(x, mean, amplitude, frequency, phase):
    return mean + amplitude * np.cos(frequency * x + phase)


def _linear_fringe(x, p, frequency):
    a = np.column_stack([np.ones_like(x), np.cos(frequency * x), np.sin(frequency * x)])
    coef, *_ = np.linalg.lstsq(a, p, rcond=None)
    chi = float(np.sum((a @ coef - p) ** 2))
    return coef, chi


def fit_fringe(x, prob, frequency: float | None = None, fit_frequency: bool = False) -> FitResult:
    """Sinusoid mean + amplitude cos(frequency x + phase).

    With a known ``frequency`` the fit is linear; otherwise the frequency is
    located on a grid and refined (``fit_frequency`` refines a given guess).
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(prob, dtype=float)
    need = 3 if (frequency is not None and not fit_frequency) else 4
    if len(x) < need:
        raise ValueError(f"fringe scan needs at least {need} points, got {len(x)}")
    span = _span(x)
    if frequency is None:
        grid = np.linspace(math.pi / span, math.pi * (len(x) - 1) / span, 2000)
        chis = [_linear_fringe(x, p, f)[1] for f in grid]
        frequency = float(grid[int(np.argmin(chis))])
        fit_frequency = True
    coef, _ = _linear_fringe(x, p, frequency)
    amp = math.hypot(coef[1], coef[2])
    phase = math.atan2(-coef[2], coef[1])
    names = ("mean", "amplitude", "frequency", "phase")
    if not fit_frequency:
        resid = p - fringe_model(x, coef[0], amp, frequency, phase)
        dof = max(len(x) - 3, 1)
        a = np.column_stack([np.ones_like(x), np.cos(frequency * x), np.sin(frequency * x)])
        cov = np.linalg.pinv(a.T @ a) * float(resid @ resid) / dof
        std = np.array([math.sqrt(cov[0, 0]), math.sqrt(max(cov[1, 1], cov[2, 2])), 0.0, np.nan])
        return FitResult(np.array([coef[0], amp, frequency, phase]), std, float(np.linalg.norm(resid)),
                         True, "fringe", names, [], fringe_model)
    fit = least_squares(
        fringe_model, x, p, [coef[0], max(amp, 1e-6), frequency, phase],
        bounds=([-np.inf, 0.0, 0.0, -np.inf], [np.inf, np.inf, np.inf, np.inf]),
        names=names, model="fringe",
    )
    return fit


def fringe_visibility(x, prob, frequency: float | None = None, fit_frequency: bool = False) -> float:
    """Fringe amplitude over mean level, clipped to [0, 1]."""
    p = np.asarray(prob, dtype=float)
    if np.ptp(p) == 0:
        return 0.0
    fit = fit_fringe(x, p, frequency, fit_frequency)
    mean, amp = fit["mean"], fit["amplitude"]
    if mean <= 0:
        return 0.0
    return float(np.clip(amp / mean, 0.0, 1.0))


def parity(probs) -> float:
    """P00 + P11 - P01 - P10 from a mapping or an ordered (P00, P01, P10, P11)."""
    if isinstance(probs, dict):
        p00, p01, p10, p11 = (probs.get(k, 0.0) for k in ("P00", "P01", "P10", "P11"))
    else:
        p00, p01, p10, p11 = probs
    return float(p00 + p11 - p10 - p01)


def parity_model(theta, offset, a, b):
    return offset + a * np.cos(theta) + b * np.cos(2 * theta)


def fit_parity(theta, values, sigma=None) -> FitResult:
    """Fit P0 + A cos(theta) + B cos(2 theta) at known rotation angle."""
    theta = np.asarray(theta, dtype=float)
    if np.ptp(theta) < math.pi * (1 - 1.0 / max(len(theta), 2)) - 1e-9:
        warnings.warn("parity scan covers less than one period of cos(2 theta)", stacklevel=2)
    return least_squares(parity_model, theta, values, [0.0, 0.0, 0.0], sigma=sigma,
                         names=("P0", "A", "B"), model="parity")
