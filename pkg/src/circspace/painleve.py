"""Painleve route to the same gap probabilities and corrections.

Two families of sigma-form equations are solved.

sigma-PV, for the sine kernel on (0, s), t = pi s:

    (t s'')^2 + 4 (t s' - s)(t s' - s + s'^2) = 0,
    det(I - xi K_s) = exp(I0),           I0 = int_0^t sigma0(t')/t' dt',
    N^-2 coefficient of det(I - xi K^N_s) = exp(I0) I1,  I1 = int_0^t sigma1/t'.

sigma-PIII', for the reflected kernels K^-/K^+ on (0, s), w = (pi s)^2:

    w^2 f'' ^2 - f'^2/4 + 4 f f'^2 + w f'^2 - 4 w f'^3 - f f' = 0,
    det(I - z K^-_s) = exp(-Phi+),   det(I - z K^+_s) = exp(-Phi-),
    Phi = int_0^w f0/w',   J = int_0^w (w' f0 + 6 f1)/(6 w') dw',
    omega(z K^-+_s; L^-+_s) = -(4/z) exp(-Phi+-) J+-.

The second-order equations for sigma0 and f0 have a double root in the
highest derivative wherever it changes sign, and the linear equations for
sigma1 and f1 carry that derivative as their leading coefficient.  Both are
therefore integrated in differentiated, third-order form

    sigma-PV:   t^2 s''' + t s'' + 6 t s'^2 + 4 t^2 s' - 4 s s' - 4 t s = 0
    linear:     T'(sigma0)[y] = -(2t/3)(5 s^2 - 4 t s s' + s - t s' - 2 t^2 s'')
    sigma-PIII': 2 w^2 f''' + 2 w f'' - f'/2 + 8 f f' - f + 2 w f' - 12 w f'^2 = 0
    linear:     T'(f0)[y] = -(6 f^2 - 8 w f f' + 2 w f - 12 w^2 f'^2 + w f' + 2 w^2 f'')/6

whose solutions keep the original equations as conserved first integrals;
the original residual is monitored.  Near the origin, where the equations
are singular, Taylor series generated from the original equations are used.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import IntegrationError, InvalidArgument
from .spacings import Rescaling, SpacingCurve, curve_from_generating

SERIES_DEGREE = 24
SWITCH_RTOL = 1e-14
ODE_RTOL = 1e-12
ODE_ATOL = 1e-14


# --------------------------------------------------------------------------
# Truncated power series


def _mul(*factors, n):
    out = np.asarray(factors[0], dtype=float)[:n]
    for f in factors[1:]:
        out = np.convolve(out, np.asarray(f, dtype=float)[:n])[:n]
    if len(out) < n:
        out = np.pad(out, (0, n - len(out)))
    return out


def _der(a):
    a = np.asarray(a, dtype=float)
    return np.append(a[1:] * np.arange(1, len(a)), 0.0)


def _xpow(a, m, n):
    """x^m a(x) truncated to length n."""
    out = np.zeros(n)
    a = np.asarray(a, dtype=float)[: n - m]
    out[m : m + len(a)] = a
    return out


def _solve_series(residual: Callable[[np.ndarray], np.ndarray], n_coef: int, fixed: dict[int, float], lag: int):
    """Coefficients c_0..c_{n_coef-1} making ``residual`` vanish order by order.

    The unknown c_k must first appear, linearly, at order k + lag of the
    residual; free (resonant) coefficients have to be supplied in ``fixed``.
    """
    c = np.zeros(n_coef)
    for k, v in fixed.items():
        c[k] = v
    for k in range(n_coef):
        if k in fixed:
            continue
        j = k + lag
        c[k] = 0.0
        r0 = residual(c)[j]
        c[k] = 1.0
        slope = residual(c)[j] - r0
        if slope == 0.0:
            raise InvalidArgument(f"series coefficient {k} is not determined by the equation")
        c[k] = -r0 / slope
    return c


def _eval_series(c, x):
    return np.polynomial.polynomial.polyval(x, c)


def _switch_point(c, tol=SWITCH_RTOL, start=1e-3, limit=4.0):
    """Largest x on a geometric ladder where the last series term is below tol of the sum."""
    x = start
    best = None
    while x <= limit:
        total = abs(_eval_series(c, x))
        if total > 0 and abs(c[-1]) * x ** (len(c) - 1) <= tol * total:
            best = x
        else:
            break
        x *= 1.1
    if best is None:
        raise InvalidArgument("series does not reach the switching tolerance near the origin")
    return best


# --------------------------------------------------------------------------
# sigma-PV series


def _pv_residual(a):
    n = len(a) + 2
    s = np.pad(a, (0, 2))
    s1, s2 = _der(s), _der(_der(s))
    ts1 = _xpow(s1, 1, n)
    ts2 = _xpow(s2, 1, n)
    u = ts1 - s
    return _mul(ts2, ts2, n=n) + 4 * _mul(u, u + _mul(s1, s1, n=n), n=n)


def _sig2_parts(a, n):
    s = np.pad(a, (0, n - len(a)))
    s1, s2 = _der(s), _der(_der(s))
    t = lambda v, m=1: _xpow(v, m, n)
    u = t(s1) - s
    A = 2 * t(s2, 2)
    B = -8 * _mul(s1, s, n=n) + 12 * t(_mul(s1, s1, n=n)) + 8 * t(u)
    C = -4 * _mul(s1, s1, n=n) - 8 * u
    tv = _xpow([1.0], 1, n)
    bracket = 3 * _mul(s, s, n=n) + 2 * _mul(t(s), tv - s1, n=n) - 2 * _mul(t(s1, 2), tv + s1, n=n)
    D = (-4.0 / 3.0) * _mul(t(s2, 2), s - t(s1) - 0.5 * t(s2, 2), n=n) - (4.0 / 3.0) * _mul(u, bracket, n=n)
    return A, B, C, D


def sigma0_series(xi: float, degree: int = SERIES_DEGREE) -> np.ndarray:
    """Taylor coefficients of sigma0(t; xi) about t = 0."""
    a1 = -xi / math.pi
    return _solve_series(_pv_residual, degree + 1, {0: 0.0, 1: a1, 2: -a1 * a1}, lag=0)


def sigma1_series(xi: float, degree: int = SERIES_DEGREE) -> np.ndarray:
    """Taylor coefficients of sigma1(t; xi); the free linear coefficient is zero."""
    a = sigma0_series(xi, degree + 2)
    n = degree + 3
    A, B, C, D = _sig2_parts(a, n)

    def residual(b):
        y = np.pad(b, (0, n - len(b)))
        y1, y2 = _der(y), _der(_der(y))
        return _mul(A, y2, n=n) + _mul(B, y1, n=n) + _mul(C, y, n=n) - D

    return _solve_series(residual, degree + 1, {0: 0.0, 1: 0.0}, lag=0)


# --------------------------------------------------------------------------
# sigma-PIII' series in u = sqrt(w)


def _piii_residual(g):
    n = len(g) + 3
    g = np.pad(g, (0, 3))
    g1, g2 = _der(g), _der(_der(g))
    x = lambda v, m=1: _xpow(v, m, n)
    return (
        _mul(x(g2, 2), g2, n=n)
        - 2 * _mul(x(g1), g2, n=n)
        + 16 * _mul(g, g1, g1, n=n)
        + 4 * _mul(x(g1, 2), g1, n=n)
        - 8 * _mul(x(g1), g1, g1, n=n)
        - 8 * _mul(x(g), g1, n=n)
    )


def _piii_linear_residual(g, h):
    n = len(h) + 3
    g = np.pad(g, (0, max(0, n - len(g))))[:n]
    h = np.pad(h, (0, 3))
    gp, gpp = _der(g), _der(_der(g))
    hp, hpp = _der(h), _der(_der(h))
    x = lambda v, m=1: _xpow(v, m, n)
    m = lambda *f: _mul(*f, n=n)
    return (
        24 * x(m(g, g, gp)) - 12 * x(m(g, g), 2) - 8 * x(m(g, gp, gp), 2) + 96 * m(g, gp, hp)
        + 8 * x(m(g, gp), 3) - 24 * x(m(g, hp)) - 4 * x(m(gp, gp, gp), 3) + 48 * m(gp, gp, h)
        - 72 * x(m(gp, gp, hp)) - 3 * x(m(gp, gp), 2) + 2 * x(m(gp, gpp), 3) - 24 * x(m(gp, h))
        + 24 * x(m(gp, hp), 2) - 6 * x(m(gp, hpp)) - 6 * x(m(gpp, hp)) + 6 * x(m(gpp, hpp), 2)
    )


def f0_series(sign: int, z: float, degree: int = SERIES_DEGREE) -> np.ndarray:
    """Coefficients c_k of f0(w) = sum_k c_k w^(k/2)."""
    if sign > 0:
        fixed = {0: 0.0, 1: 0.0, 2: 0.0, 3: z / (3 * math.pi)}
        lag = 1
    else:
        fixed = {0: 0.0, 1: z / math.pi}
        lag = -1
    return _solve_series(_piii_residual, degree + 1, fixed, lag)


def f1_series(sign: int, z: float, degree: int = SERIES_DEGREE) -> np.ndarray:
    """Coefficients of f1(w) in powers of sqrt(w)."""
    g = f0_series(sign, z, degree + 3)
    res = lambda h: _piii_linear_residual(g, h)
    if sign > 0:
        return _solve_series(res, degree + 1, {0: 0.0, 1: 0.0, 2: 0.0, 3: -z / (12 * math.pi)}, lag=1)
    return _solve_series(res, degree + 1, {0: 0.0, 1: 0.0}, lag=-1)


# --------------------------------------------------------------------------
# Integration


def _series_eval(c, x, k=0):
    """k-th derivative of sum c_j x^j."""
    p = np.polynomial.polynomial
    return p.polyval(x, p.polyder(c, k) if k else c)


def _log_integral_series(c):
    """Coefficients of int_0^x (sum c_j t^j)/t dt; requires c_0 = 0."""
    out = np.zeros(len(c))
    out[1:] = c[1:] / np.arange(1, len(c))
    return out


@dataclass(frozen=True, eq=False)
class SigmaSolution:
    """One integrated Painleve function with its boundary series.

    ``grid`` holds the integrator's step points (in t for sigma-PV, in w for
    sigma-PIII'), starting at the switch point; below it the series applies.
    """

    equation: str
    parameter: float
    variable: str
    grid: np.ndarray
    values: np.ndarray
    series: np.ndarray
    switch: float
    _state: Callable = field(repr=False, default=None)

    def __call__(self, x):
        return self._state(np.asarray(x, dtype=float))["value"]

    def integral(self, x):
        """The log-type integral carried alongside: I0, I1, Phi or J."""
        return self._state(np.asarray(x, dtype=float))["integral"]

    def derivatives(self, x):
        st = self._state(np.asarray(x, dtype=float))
        return st["value"], st["d1"], st["d2"]

    def residual(self, x):
        """Relative residual of the defining second-order equation."""
        return self._state(np.asarray(x, dtype=float))["residual"]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(f"# equation: {self.equation}; parameter: {self.parameter!r}; switch: {self.switch!r}\n")
            w = csv.writer(fh)
            w.writerow([self.variable, "value"])
            for x, v in zip(self.grid, self.values):
                w.writerow([repr(float(x)), repr(float(v))])


def _run(rhs, x0, x1, y0, what):
    sol = solve_ivp(rhs, (x0, x1), y0, method="DOP853", rtol=ODE_RTOL, atol=ODE_ATOL, dense_output=True)
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        where = float(sol.t[-1]) if len(sol.t) else x0
        raise IntegrationError(f"{what}: integration stopped at {where:g}: {sol.message}", location=where)
    return sol


def _pv_rhs(t, Y):
    s, s1, s2, _, y, y1, y2, _ = Y
    tt = t * t
    s3 = -(t * s2 + 6 * t * s1 * s1 + 4 * tt * s1 - 4 * s * s1 - 4 * t * s) / tt
    q = -(2 * t / 3) * (5 * s * s - 4 * t * s * s1 + s - t * s1 - 2 * tt * s2)
    y3 = (q - (t * y2 + 12 * t * s1 * y1 + 4 * tt * y1 - 4 * s1 * y - 4 * s * y1 - 4 * t * y)) / tt
    return [s1, s2, s3, s / t, y1, y2, y3, y / t]


def _backward_scale(grad, state):
    return sum(np.abs(g) * np.abs(x) for g, x in zip(grad, state)) + 1e-300


def _pv_residuals(t, s, s1, s2, y, y1, y2):
    u = t * s1 - s
    terms0 = [(t * s2) ** 2, 4 * u * u, 4 * u * s1 * s1]
    g0 = sum(terms0)
    A = 2 * t * t * s2
    B = -8 * s1 * s + 12 * t * s1 * s1 + 8 * t * u
    C = -4 * s1 * s1 - 8 * u
    D = (-4 / 3) * t * t * s2 * (s - t * s1 - 0.5 * t * t * s2) - (4 / 3) * u * (
        3 * s * s + 2 * t * s * (t - s1) - 2 * t * t * s1 * (t + s1)
    )
    terms1 = [A * y2, B * y1, C * y, D]
    g1 = A * y2 + B * y1 + C * y - D
    # backward-error scale: g0 has double zeros where its terms all vanish together
    grad0 = [-(8 * u + 4 * s1 * s1), 8 * u * t + 4 * t * s1 * s1 + 8 * u * s1, 2 * t * t * s2]
    scale0 = _backward_scale(grad0, (s, s1, s2))
    scale1 = sum(np.abs(v) for v in terms1) + 1e-300
    return g0 / scale0, g1 / scale1


@lru_cache(maxsize=32)
def _pv_system(xi: float, t_max: float):
    if not 0 < xi <= 1:
        raise InvalidArgument("xi must lie in (0, 1]")
    if not t_max > 0:
        raise InvalidArgument("t_max must be positive")
    a = sigma0_series(xi)
    b = sigma1_series(xi)
    t0 = min(_switch_point(a), _switch_point(b) if np.any(b) else np.inf, t_max)
    ia, ib = _log_integral_series(a), _log_integral_series(b)
    y0 = [
        _series_eval(a, t0), _series_eval(a, t0, 1), _series_eval(a, t0, 2), _series_eval(ia, t0),
        _series_eval(b, t0), _series_eval(b, t0, 1), _series_eval(b, t0, 2), _series_eval(ib, t0),
    ]
    sol = _run(_pv_rhs, t0, t_max, y0, "sigma-PV") if t_max > t0 else None

    def state(t):
        t = np.atleast_1d(t)
        Y = np.empty((8, len(t)))
        inner = t <= t0
        if np.any(inner):
            ti = t[inner]
            Y[:, inner] = [
                _series_eval(a, ti), _series_eval(a, ti, 1), _series_eval(a, ti, 2), _series_eval(ia, ti),
                _series_eval(b, ti), _series_eval(b, ti, 1), _series_eval(b, ti, 2), _series_eval(ib, ti),
            ]
        if np.any(~inner):
            if sol is None or np.max(t) > t_max * (1 + 1e-12):
                raise InvalidArgument("evaluation beyond the integrated range")
            Y[:, ~inner] = sol.sol(t[~inner])
        return Y

    return a, b, t0, sol, state


def _pv_solution(which: str, xi: float, t_max: float) -> SigmaSolution:
    a, b, t0, sol, state = _pv_system(float(xi), float(t_max))
    off = 0 if which == "sigma0" else 4

    def view(t):
        Y = state(t)
        r0, r1 = _pv_residuals(t, *Y[0:3], *Y[4:7])
        return {
            "value": Y[off], "d1": Y[off + 1], "d2": Y[off + 2], "integral": Y[off + 3],
            "residual": r0 if off == 0 else r1,
        }

    grid = sol.t if sol is not None else np.array([t0])
    vals = view(grid)["value"]
    return SigmaSolution(
        equation="sigmaPV" if off == 0 else "sigma1_linear",
        parameter=float(xi), variable="t", grid=grid, values=vals,
        series=a if off == 0 else b, switch=t0, _state=view,
    )


def solve_sigma0(xi: float, t_max: float) -> SigmaSolution:
    """sigma0(t; xi) on [0, t_max] with exp(int_0^t sigma0/t') = det(I - xi K_{t/pi})."""
    return _pv_solution("sigma0", xi, t_max)


def solve_sigma1(xi: float, t_max: float) -> SigmaSolution:
    """sigma1(t; xi), the linear perturbation carrying the N^-2 correction."""
    return _pv_solution("sigma1", xi, t_max)


def _piii_rhs(u, Y):
    f, f1, f2, _, y, y1, y2, _ = Y
    w = u * u
    ww = w * w
    f3 = -(2 * w * f2 - f1 / 2 + 8 * f * f1 - f + 2 * w * f1 - 12 * w * f1 * f1) / (2 * ww)
    R = 6 * f * f - 8 * w * f * f1 + 2 * w * f - 12 * ww * f1 * f1 + w * f1 + 2 * ww * f2
    y3 = (-R / 6 - (2 * w * y2 - y1 / 2 + 8 * (f1 * y + f * y1) - y + 2 * w * y1 - 24 * w * f1 * y1)) / (2 * ww)
    du = 2 * u
    return [du * f1, du * f2, du * f3, 2 * f / u, du * y1, du * y2, du * y3, u * f / 3 + 2 * y / u]


def _piii_residuals(w, f, f1, f2, y, y1, y2):
    terms0 = [w * w * f2 * f2, -f1 * f1 / 4, 4 * f * f1 * f1, w * f1 * f1, -4 * w * f1**3, -f * f1]
    A1 = 2 * w * w * f2
    B1 = 8 * f * f1 + 2 * w * f1 - 12 * w * f1 * f1 - f - f1 / 2
    C1 = f1 * (4 * f1 - 1)
    D1 = f1 / 3 * (3 * f * f + w * w * f2 - 2 * w * w * f1 * f1 + w * f - w * f1 / 4 - 2 * w * f * f1) - f * f / 4
    terms1 = [A1 * y2, B1 * y1, C1 * y, D1]
    grad0 = [f1 * (4 * f1 - 1), B1, A1]
    return sum(terms0) / _backward_scale(grad0, (f, f1, f2)), sum(terms1) / (
        sum(np.abs(v) for v in terms1) + 1e-300
    )


def _u_to_w_derivs(c, u):
    g, g1, g2 = _series_eval(c, u), _series_eval(c, u, 1), _series_eval(c, u, 2)
    return g, g1 / (2 * u), (u * g2 - g1) / (4 * u**3)


@lru_cache(maxsize=64)
def _piii_system(sign: int, z: float, w_max: float):
    if sign not in (1, -1):
        raise InvalidArgument("sign must be +1 or -1")
    if not 0 < z <= 1:
        raise InvalidArgument("z must lie in (0, 1]")
    if not w_max > 0:
        raise InvalidArgument("w_max must be positive")
    g = f0_series(sign, z)
    h = f1_series(sign, z)
    u_max = math.sqrt(w_max)
    u0 = min(_switch_point(g), _switch_point(h), u_max)
    phi = 2 * _log_integral_series(g)
    jser = np.zeros(len(g) + 2)
    jser[2:] = g / (3 * (np.arange(len(g)) + 2))
    jser[: len(h)] += 2 * _log_integral_series(h)

    def series_state(u):
        f, fw, fww = _u_to_w_derivs(g, u)
        y, yw, yww = _u_to_w_derivs(h, u)
        return np.array([f, fw, fww, _series_eval(phi, u), y, yw, yww, _series_eval(jser, u)])

    sol = _run(_piii_rhs, u0, u_max, series_state(u0), "sigma-PIII'") if u_max > u0 else None

    def state(w):
        u = np.sqrt(np.atleast_1d(w))
        Y = np.empty((8, len(u)))
        inner = u <= u0
        if np.any(inner):
            ui = u[inner]
            with np.errstate(divide="ignore", invalid="ignore"):
                Y[:, inner] = series_state(ui)
            zero = ui == 0
            if np.any(zero):
                idx = np.flatnonzero(inner)[zero]
                Y[:, idx] = 0.0
        if np.any(~inner):
            if sol is None or np.max(u) > u_max * (1 + 1e-12):
                raise InvalidArgument("evaluation beyond the integrated range")
            Y[:, ~inner] = sol.sol(u[~inner])
        return Y

    return g, h, u0, sol, state


def _piii_solution(which: str, sign: int, z: float, w_max: float) -> SigmaSolution:
    g, h, u0, sol, state = _piii_system(int(sign), float(z), float(w_max))
    off = 0 if which == "f0" else 4

    def view(w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        Y = state(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            r0, r1 = _piii_residuals(w, *Y[0:3], *Y[4:7])
        return {
            "value": Y[off], "d1": Y[off + 1], "d2": Y[off + 2], "integral": Y[off + 3],
            "residual": r0 if off == 0 else r1,
        }

    grid = sol.t**2 if sol is not None else np.array([u0 * u0])
    label = ("f0_" if off == 0 else "f1_") + ("plus" if sign > 0 else "minus")
    return SigmaSolution(
        equation=label, parameter=float(z), variable="w", grid=grid, values=view(grid)["value"],
        series=g if off == 0 else h, switch=u0 * u0, _state=view,
    )


def solve_f0(sign: int, z: float, w_max: float) -> SigmaSolution:
    """f0^(+-)(w; z); ``integral`` returns Phi with exp(-Phi+-) = det(I - z K^-+)."""
    return _piii_solution("f0", sign, z, w_max)


def solve_f1(sign: int, z: float, w_max: float) -> SigmaSolution:
    """f1^(+-)(w; z); ``integral`` returns J = int (w f0 + 6 f1)/(6 w) dw."""
    return _piii_solution("f1", sign, z, w_max)


# --------------------------------------------------------------------------
# Spacing curves


def _cue_generating(xi, scale, t_max):
    *_, state = _pv_system(float(xi), float(t_max))

    def h(s):
        Y = state(scale * s)
        e = np.exp(Y[3])
        return np.array([e[0], e[0] * Y[7][0]])

    return h


def _reflected_generating(z, scale, w_max, weight_plus):
    """(H_p, H_r) with H_p = weight_plus exp(-Phi+) + exp(-Phi-), H_r likewise with J exp(-Phi)."""
    *_, sp = _piii_system(+1, float(z), float(w_max))
    *_, sm = _piii_system(-1, float(z), float(w_max))

    def h(s):
        w = (scale * s) ** 2
        P, M = sp(w), sm(w)
        ep, em = math.exp(-P[3][0]), math.exp(-M[3][0])
        return np.array([weight_plus * ep + em, weight_plus * P[7][0] * ep + M[7][0] * em])

    return h


def painleve_spacing(
    ensemble: str,
    which: str = "both",
    xi: float = 1.0,
    grid=None,
    statistic: str = "kth:0",
    rescaling: Rescaling = Rescaling(),
) -> SpacingCurve:
    """Spacing density p and correction r assembled from the Painleve functions.

    ``which`` selects the columns reported; an unrequested column is NaN.
    Supported: CUE with kth:0 or origin, COE and CSE with kth:0.
    """
    from .spacings import default_grid

    if which not in ("p", "r", "both"):
        raise InvalidArgument("which must be 'p', 'r' or 'both'")
    if not 0 < xi <= 1:
        raise InvalidArgument("xi must lie in (0, 1]")
    if rescaling.mode == "interior":
        raise InvalidArgument("interior rescaling changes the kernel and has no Painleve form here")
    g = np.asarray(default_grid() if grid is None else grid, dtype=float)
    top = max(float(g[-1]), 1e-3) * rescaling.alpha * 1.05

    if ensemble == "CUE" and statistic == "kth:0":
        h = _cue_generating(xi, math.pi, math.pi * top)
        spec = (2, 1.0, 1.0 / xi, 1.0 / xi)
    elif ensemble == "CUE" and statistic == "origin":
        h = _cue_generating(xi, 2 * math.pi, 2 * math.pi * top)
        spec = (1, -1.0, 1.0, 1.0)
    elif ensemble == "COE" and statistic == "kth:0":
        xb = 2 * xi - xi * xi
        h = _reflected_generating(xb, math.pi / 2, (math.pi * top / 2) ** 2, 1.0 - xi)
        spec = (2, 1.0, 1.0 / xb, -4.0 / xb)
    elif ensemble == "CSE" and statistic == "kth:0":
        h = _reflected_generating(xi, math.pi, (math.pi * top) ** 2, 1.0)
        spec = (2, 1.0, 1.0 / (2 * xi), -1.0 / (2 * xi))
    else:
        raise InvalidArgument(f"no Painleve form for {ensemble} {statistic}")

    curve = curve_from_generating(h, *spec, g, statistic, ensemble, xi, rescaling,
                                  meta={"route": "painleve"})
    if which == "both":
        return curve
    nan = np.full(len(g), np.nan)
    return SpacingCurve(
        curve.statistic, curve.ensemble, curve.xi, curve.grid,
        curve.p if which == "p" else nan, curve.r if which == "r" else nan,
        curve.rescaling, curve.meta, curve.p_fit if which == "p" else None, curve.r_fit if which == "r" else None,
    )


# --------------------------------------------------------------------------
# Small-s series


def _series_exp(a, n):
    """exp of a power series with a[0] = 0, truncated to n terms."""
    a = np.pad(np.asarray(a, dtype=float), (0, n))[:n]
    e = np.zeros(n)
    e[0] = 1.0
    k = np.arange(n)
    for m in range(1, n):
        e[m] = np.dot(k[1 : m + 1] * a[1 : m + 1], e[m - 1 :: -1][:m]) / m
    return e


def _rescale(c, scale):
    return np.asarray(c) * scale ** np.arange(len(c))


def series_small_s(ensemble: str, which: str, xi: float, order: int, statistic: str = "kth:0") -> np.ndarray:
    """Coefficients P_0..P_order of the small-s expansion of p or r.

    Generated from the Taylor data of the Painleve functions; orders beyond
    the printed expansions are available up to the internal series degree.
    """
    if which not in ("p", "r"):
        raise InvalidArgument("which must be 'p' or 'r'")
    if not 0 < xi <= 1:
        raise InvalidArgument("xi must lie in (0, 1]")
    if order < 0 or order > SERIES_DEGREE - 4:
        raise InvalidArgument(f"order must lie in [0, {SERIES_DEGREE - 4}]")
    n = order + 4
    mul = lambda a, b: _mul(a, b, n=n)

    if ensemble == "CUE" and statistic in ("kth:0", "origin"):
        scale = math.pi if statistic == "kth:0" else 2 * math.pi
        i0 = _rescale(_log_integral_series(sigma0_series(xi, n)), scale)[:n]
        i1 = _rescale(_log_integral_series(sigma1_series(xi, n)), scale)[:n]
        e = _series_exp(i0, n)
        hp, hr = e, mul(e, i1)
        if statistic == "kth:0":
            m, sign, pf, rf = 2, 1.0, 1 / xi, 1 / xi
        else:
            m, sign, pf, rf = 1, -1.0, 1.0, 1.0
    elif ensemble in ("COE", "CSE") and statistic == "kth:0":
        if ensemble == "COE":
            z, scale, wplus = 2 * xi - xi * xi, math.pi / 2, 1 - xi
            pf, rf = 1 / z, -4 / z
        else:
            z, scale, wplus = xi, math.pi, 1.0
            pf, rf = 1 / (2 * xi), -1 / (2 * xi)
        m, sign = 2, 1.0
        hp = np.zeros(n)
        hr = np.zeros(n)
        for sg, wt in ((+1, wplus), (-1, 1.0)):
            g = f0_series(sg, z, n)
            hh = f1_series(sg, z, n)
            phi = _rescale(2 * _log_integral_series(g), scale)[:n]
            jser = np.zeros(n + 2)
            jser[2:] = g[:n] / (3 * (np.arange(n) + 2))
            jser = _rescale(jser, scale)[:n] + _rescale(2 * _log_integral_series(hh), scale)[:n]
            e = _series_exp(-phi, n)
            hp += wt * e
            hr += wt * mul(jser, e)
    else:
        raise InvalidArgument(f"no series for {ensemble} {statistic}")

    h = hp if which == "p" else hr
    f = pf if which == "p" else rf
    for _ in range(m):
        h = _der(h)
    return sign * f * h[: order + 1]
