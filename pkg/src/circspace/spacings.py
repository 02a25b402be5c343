"""Gap probabilities and spacing densities with their 1/N^2 corrections.

Every statistic here is of the form

    p(s) = c_p * (d/ds)^m H_p(s),     r(s) = c_r * (d/ds)^m H_r(s)

where H_p is a combination of Fredholm determinants det(I - c K) over some
interval depending on s, and H_r the matching combination of the correction
functionals omega(c K; L).  H_p and H_r are sampled at Chebyshev points in s,
fitted, and differentiated.

For a fixed s the symmetrised Nystrom matrix of K is diagonalised once,
K = V diag(lam) V^T, after which

    det(I - c K)     = prod_i (1 - c lam_i)
    omega(c K; L)    = -sum_i (V^T L V)_ii prod_{j != i} (1 - c lam_j)

hold for every complex c at negligible cost.  The second form has no
resolvent and so stays finite where I - c K is singular.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument
from .kernels import KernelSpec, cue_kernel, make_kernel, sine_kernel
from .operators import NystromOperator, evaluate_term, fredholm_det, omega
from .quadrature import (
    ChebyshevInterpolant,
    chebyshev_derivative,
    chebyshev_fit_adaptive,
    contour_derivative_adaptive,
)

LAMBDA = 1.573151071324955
Q_CONST = 2.315846384958803

ENSEMBLES = ("CUE", "COE", "CSE")
CURVE_TOL = 2e-13
FIT_TOL = 1e-13


# --------------------------------------------------------------------------
# Riemann-zero constants and rescaling modes


@dataclass(frozen=True)
class RZConstants:
    Lambda: float
    Q: float
    rho_bar: float
    N_eff: float
    alpha: float
    alpha_bar: float
    eta: float


def rz_constants(E: float) -> RZConstants:
    """Density, effective CUE dimension and rescaling factors at height E."""
    if not E > 2 * math.pi:
        raise InvalidArgument("height E must exceed 2*pi")
    log_e = math.log(E / (2 * math.pi))
    rho_bar = log_e / (2 * math.pi)
    alpha = 1.0 + Q_CONST / (LAMBDA * log_e)
    return RZConstants(
        Lambda=LAMBDA,
        Q=Q_CONST,
        rho_bar=rho_bar,
        N_eff=log_e / math.sqrt(12 * LAMBDA),
        alpha=alpha,
        alpha_bar=1.0 + 2 * Q_CONST / (LAMBDA * log_e),
        eta=Q_CONST / (LAMBDA * math.sqrt(3 * LAMBDA)),
    )


@dataclass(frozen=True)
class Rescaling:
    """How the correction term is adapted to Riemann-zero data.

    ``exterior`` evaluates the correction's generating quantity at alpha*s;
    ``interior`` swaps the correction kernel for its frequency-rescaled form
    with factor alpha_bar.
    """

    mode: str = "none"
    factor: float = 1.0

    def __post_init__(self):
        if self.mode not in ("none", "exterior", "interior"):
            raise InvalidArgument(f"unknown rescaling mode {self.mode!r}")
        if not self.factor > 0:
            raise InvalidArgument("rescaling factor must be positive")

    @classmethod
    def none(cls):
        return cls()

    @classmethod
    def exterior(cls, alpha):
        return cls("exterior", float(alpha))

    @classmethod
    def interior(cls, alpha_bar):
        return cls("interior", float(alpha_bar))

    @classmethod
    def for_height(cls, mode: str, E: float):
        c = rz_constants(E)
        return {"none": cls(), "exterior": cls("exterior", c.alpha), "interior": cls("interior", c.alpha_bar)}[mode]

    @property
    def alpha_bar(self) -> float:
        return self.factor if self.mode == "interior" else 1.0

    @property
    def alpha(self) -> float:
        return self.factor if self.mode == "exterior" else 1.0

    def describe(self) -> str:
        return "none" if self.mode == "none" else f"{self.mode}({self.factor:.15g})"


# --------------------------------------------------------------------------
# Spectral evaluation of determinant and omega


def _sym(op: NystromOperator) -> np.ndarray:
    a = op.symmetrized()
    return 0.5 * (a + a.T)


def _spectrum(opK: NystromOperator, opL: NystromOperator | None = None):
    """Eigenvalues of K, plus the diagonal of L in that eigenbasis and tr L."""
    lam, vec = np.linalg.eigh(_sym(opK))
    if opL is None:
        return lam, None, 0.0
    d = np.einsum("ij,ik,kj->j", vec, _sym(opL), vec)
    return lam, d, float(np.trace(opL.matrix))


def _det_omega(lam, d, tr_l, c):
    """det(I - c K) and omega(c K; L) for an array of scalars c.

    omega uses tr((I - cK)^{-1} L) = tr L + c tr(K (I - cK)^{-1} L) so that
    eigenvalues near zero, which carry large cancelling d_i, drop out.
    """
    c = np.atleast_1d(np.asarray(c))
    if len(lam) == 0:
        return np.ones(len(c)), np.zeros(len(c))
    f = 1.0 - c[:, None] * lam[None, :]
    det = np.prod(f, axis=1)
    if d is None:
        return det, None
    ones = np.ones((len(c), 1), dtype=f.dtype)
    before = np.cumprod(np.hstack([ones, f[:, :-1]]), axis=1)
    after = np.cumprod(np.hstack([ones, f[:, :0:-1]]), axis=1)[:, ::-1]
    rest = np.sum((d * lam)[None, :] * before * after, axis=1)
    return det, -(tr_l * det + c * rest)


# --------------------------------------------------------------------------
# Generating functions at a single point


def _det_term(spec: KernelSpec, c, tol=5e-15):
    if spec.interval[1] <= spec.interval[0]:
        return 1.0
    res = evaluate_term(lambda op: fredholm_det(c * op), [make_kernel(spec)], tol=tol)
    return res.value


def _check_xi(xi):
    if not 0 < xi <= 1:
        raise InvalidArgument(f"thinning parameter must lie in (0, 1], got {xi}")


def _check_s(s):
    if s < 0:
        raise InvalidArgument("interval length must be nonnegative")


def cue_generating(s: float, z: complex, xi: float = 1.0, N: float = math.inf, tol=5e-15) -> complex:
    """det(I - xi z K^N) on (0, s); N = inf selects the sine kernel."""
    _check_xi(xi)
    _check_s(s)
    if s == 0 or z == 0:
        return 1.0
    fam = {"family": "sine"} if math.isinf(N) else {"family": "cueN", "N": int(N)}
    return _det_term(KernelSpec(interval=(0.0, s), **fam), xi * z, tol)


def cue_correction_generating(s: float, z: complex, xi: float = 1.0, alpha_bar: float = 1.0, tol=5e-15) -> complex:
    """xi z omega(xi z K_s; L_s), the N^-2 coefficient of :func:`cue_generating`."""
    _check_xi(xi)
    _check_s(s)
    c = xi * z
    if s == 0 or c == 0:
        return 0.0
    K = make_kernel(KernelSpec("sine", (0.0, s)))
    L = make_kernel(KernelSpec("correctionL", (0.0, s), alpha_bar=alpha_bar))
    res = evaluate_term(lambda a, b: c * omega(c * a, b), [K, L], tol=tol)
    return res.value


def _pm_spec(N, sign, interval):
    if math.isinf(N):
        return KernelSpec("pm_K", interval, sign=sign)
    return KernelSpec("cueN_pm", interval, N=int(N), sign=sign)


def coe_generating(s: float, z: complex, xi: float = 1.0, N: float = math.inf, tol=5e-15) -> complex:
    """Generating function of COE_N gap probabilities on the symmetric interval (-s, s)."""
    _check_xi(xi)
    _check_s(s)
    w = xi * z
    if s == 0 or w == 0:
        return 1.0
    zbar = 2 * w - w * w
    minus = _det_term(_pm_spec(N, -1, (0.0, s)), zbar, tol)
    plus = _det_term(_pm_spec(N, +1, (0.0, s)), zbar, tol)
    return ((1 - w) * minus + plus) / (2 - w)


def cse_generating(s: float, z: complex, xi: float = 1.0, N: float = math.inf, tol=5e-15) -> complex:
    """Generating function of CSE_N gap probabilities on the symmetric interval (-s, s)."""
    _check_xi(xi)
    _check_s(s)
    w = xi * z
    if s == 0 or w == 0:
        return 1.0
    M = math.inf if math.isinf(N) else 2 * int(N)
    minus = _det_term(_pm_spec(M, -1, (0.0, 2 * s)), w, tol)
    plus = _det_term(_pm_spec(M, +1, (0.0, 2 * s)), w, tol)
    return 0.5 * (minus + plus)


def _generating(ensemble: str, N, xi, s):
    """E(s; z) for an interval of total length s."""
    if ensemble == "CUE":
        return lambda z: cue_generating(s, z, xi, N)
    if ensemble == "COE":
        # the removable 0/0 at xi z = 2 sits on the unit circle around 1
        return lambda z: coe_generating(s / 2, z, xi, N)
    if ensemble == "CSE":
        return lambda z: cse_generating(s / 2, z, xi, N)
    raise InvalidArgument(f"unknown ensemble {ensemble!r}")


def gap_probabilities(ensemble: str, N, xi: float, s: float, n_max: int) -> list[float]:
    """E_xi(j; s) for j = 0..n_max: probability of exactly j points in an interval of length s."""
    if n_max < 0:
        raise InvalidArgument("n_max must be nonnegative")
    _check_xi(xi)
    _check_s(s)
    if s == 0:
        return [1.0] + [0.0] * n_max
    F = _generating(ensemble, N, xi, s)
    radius = 0.5 if ensemble == "COE" else 1.0
    out = [float(np.real(F(1.0)))]
    for j in range(1, n_max + 1):
        dj, _ = contour_derivative_adaptive(F, j, center=1.0, radius=radius)
        out.append(float(np.real(dj)) * (-1) ** j / math.factorial(j))
    return out


def two_point_cue(s: float, N: float = math.inf) -> float:
    """Pair correlation 1 - K^N(0, s)^2 of CUE_N at unit mean spacing."""
    k = sine_kernel(0.0, s) if math.isinf(N) else cue_kernel(N)(0.0, s)
    return float(1.0 - k * k)


def expansion_remainder(N: int, s: float) -> float:
    """det(I - K^N_s) - det(I - K_s) - N^-2 omega(K_s; L_s)."""
    return float(cue_generating(s, 1.0, 1.0, N) - cue_generating(s, 1.0) - cue_correction_generating(s, 1.0) / N**2)


# --------------------------------------------------------------------------
# Spacing statistics


@dataclass(frozen=True)
class _Block:
    """A kernel pair (K, L) on an interval that depends on s."""

    k_family: str
    l_family: str
    sign: int | None
    interval: Callable[[float], tuple[float, float]]

    def spectrum(self, s: float, alpha_bar: float, probe, tol: float):
        a, b = self.interval(s)
        if not b > a:
            return np.zeros(0), np.zeros(0), 0.0
        K = make_kernel(KernelSpec(self.k_family, (a, b), sign=self.sign))
        L = make_kernel(KernelSpec(self.l_family, (a, b), sign=self.sign, alpha_bar=alpha_bar))
        probe = np.asarray(probe)
        kept = {}

        def term(opK, opL):
            lam, d, tr_l = kept["sp"] = _spectrum(opK, opL)
            return np.concatenate(_det_omega(lam, d, tr_l, probe))

        evaluate_term(term, [K, L], tol=tol, relative=True)
        return kept["sp"]


def _block_values(spectrum, c):
    return _det_omega(*spectrum, c)


_EMPTY = (np.zeros(0), np.zeros(0), 0.0)


_SINE = _Block("sine", "correctionL", None, lambda s: (0.0, s))
_SINE_DOUBLE = _Block("sine", "correctionL", None, lambda s: (0.0, 2 * s))
_NN = _Block("nn_K", "nn_L", None, lambda s: (-s, s))


def _pm_block(sign, scale):
    return _Block("pm_K", "pm_L", sign, lambda s: (0.0, scale * s))


def _kth_weights(k: int, m: int) -> np.ndarray:
    """Contour weights w with sum_m w_m F(z_m) = sum_j (k-j+1) E_j, E_j = (-1)^j/j! F^(j)(1).

    Nodes are z_m = 1 + exp(2 pi i m / M); the trapezoid rule gives
    F^(j)(1)/j! ~ mean_m F(z_m) exp(-i j theta_m).
    """
    theta = 2 * np.pi * np.arange(m) / m
    w = np.zeros(m, dtype=complex)
    for j in range(k + 1):
        w += (k - j + 1) * (-1) ** j * np.exp(-1j * j * theta) / m
    return w


def _contour_nodes(m):
    return 1.0 + np.exp(2j * np.pi * np.arange(m) / m)


@dataclass(frozen=True)
class _Recipe:
    """p = sign * p_factor * H_p^(order), r = sign * r_factor * H_r^(order)."""

    h: Callable[[float], np.ndarray]
    order: int
    sign: float
    p_factor: float
    r_factor: float


def _parse_statistic(statistic: str) -> tuple[str, int]:
    if statistic in ("origin", "nn"):
        return statistic, 0
    if statistic.startswith("kth:"):
        try:
            k = int(statistic[4:])
        except ValueError:
            raise InvalidArgument(f"bad statistic {statistic!r}") from None
        if k < 0:
            raise InvalidArgument("k must be nonnegative")
        return "kth", k
    raise InvalidArgument(f"unknown statistic {statistic!r}; use kth:<k>, origin or nn")


def _recipe(statistic: str, ensemble: str, xi: float, alpha_bar: float, tol: float) -> _Recipe:
    _check_xi(xi)
    kind, k = _parse_statistic(statistic)
    if ensemble not in ENSEMBLES:
        raise InvalidArgument(f"unknown ensemble {ensemble!r}")
    if ensemble != "CUE" and statistic != "kth:0":
        raise InvalidArgument(f"{ensemble} supports only the consecutive spacing kth:0")

    if ensemble == "CUE" and kind in ("origin", "nn"):
        blk = _SINE_DOUBLE if kind == "origin" else _NN

        def h(s):
            sp = blk.spectrum(s, alpha_bar, [xi], tol) if s > 0 else _EMPTY
            D, W = _block_values(sp, xi)
            return np.array([D[0].real, xi * W[0].real])

        return _Recipe(h, 1, -1.0, 1.0, 1.0)

    if ensemble == "CUE":
        if k == 0:
            def h(s):
                sp = _SINE.spectrum(s, alpha_bar, [xi], tol) if s > 0 else _EMPTY
                D, W = _block_values(sp, xi)
                return np.array([D[0].real, xi * W[0].real])
        else:
            probe = xi * _contour_nodes(8)

            def h(s):
                sp = _SINE.spectrum(s, alpha_bar, probe, tol) if s > 0 else _EMPTY
                return _kth_contour(sp, k, xi)

        return _Recipe(h, 2, 1.0, 1.0 / xi, 1.0 / xi)

    if ensemble == "COE":
        xb = 2 * xi - xi * xi
        minus, plus = _pm_block(-1, 0.5), _pm_block(+1, 0.5)

        def h(s):
            out = np.zeros(2)
            for blk, wt in ((minus, 1.0 - xi), (plus, 1.0)):
                sp = blk.spectrum(s, alpha_bar, [xb], tol) if s > 0 else _EMPTY
                D, W = _block_values(sp, xb)
                out += wt * np.array([D[0].real, W[0].real])
            return out

        return _Recipe(h, 2, 1.0, 1.0 / xb, 1.0)

    minus, plus = _pm_block(-1, 1.0), _pm_block(+1, 1.0)

    def h(s):
        out = np.zeros(2)
        for blk in (minus, plus):
            sp = blk.spectrum(s, alpha_bar, [xi], tol) if s > 0 else _EMPTY
            D, W = _block_values(sp, xi)
            out += np.array([D[0].real, W[0].real])
        return out

    return _Recipe(h, 2, 1.0, 1.0 / (2 * xi), 1.0 / 8.0)


def _kth_contour(sp, k, xi, tol=1e-14):
    """(H_p, H_r) for the k-th neighbour by a contour rule doubled until stable."""
    prev = None
    m = 32
    while True:
        z = _contour_nodes(m)
        D, W = _block_values(sp, xi * z)
        w = _kth_weights(k, m)
        val = np.array([np.dot(w, D).real, np.dot(w, xi * z * W).real])
        if prev is not None and np.max(np.abs(val - prev)) < tol:
            return val
        if m >= 1024:
            return val
        prev = val
        m *= 2


# --------------------------------------------------------------------------
# Curves


@dataclass(frozen=True, eq=False)
class SpacingCurve:
    statistic: str
    ensemble: str
    xi: float
    grid: np.ndarray
    p: np.ndarray
    r: np.ndarray
    rescaling: str = "none"
    meta: dict = field(default_factory=dict)
    p_fit: ChebyshevInterpolant | None = field(default=None, repr=False)
    r_fit: ChebyshevInterpolant | None = field(default=None, repr=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or (len(g) > 1 and np.any(np.diff(g) <= 0)):
            raise InvalidArgument("curve grid must be strictly increasing")
        if not (len(g) == len(self.p) == len(self.r)):
            raise InvalidArgument("grid, p and r must have equal lengths")

    def metadata(self) -> dict:
        return {
            "statistic": self.statistic,
            "ensemble": self.ensemble,
            "xi": self.xi,
            "rescaling": self.rescaling,
            **self.meta,
        }

    def to_csv(self, path, header: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# config: " + json.dumps(header if header is not None else self.metadata(), sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["s", "p", "r"])
            for row in zip(self.grid, self.p, self.r):
                w.writerow([repr(float(v)) for v in row])

    def to_json(self, path) -> None:
        data = self.metadata()
        data.update(s=list(map(float, self.grid)), p=list(map(float, self.p)), r=list(map(float, self.r)))
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1, sort_keys=True)


def default_grid(s_max: float = 3.0, step: float = 0.01) -> np.ndarray:
    n = int(round(s_max / step))
    return np.linspace(0.0, n * step, n + 1)


def _check_grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) == 0:
        raise InvalidArgument("grid must be a nonempty list of s values")
    if np.any(g < 0) or np.any(np.diff(g) <= 0):
        raise InvalidArgument("grid must be nonnegative and strictly increasing")
    return g


def _fit_pair(h, order, s_max, alpha=1.0, fit_tol=FIT_TOL):
    """Chebyshev interpolants of the order-th derivatives of H_p(s) and H_r(alpha s)."""
    cache: dict[float, np.ndarray] = {}

    def hv(s):
        if s not in cache:
            cache[s] = h(s)
        return cache[s]

    domain = (0.0, float(s_max))
    fp = chebyshev_fit_adaptive(lambda s: hv(s)[0], domain, tol=fit_tol, refine=True)
    fr = chebyshev_fit_adaptive(lambda s: hv(alpha * s)[1], domain, tol=fit_tol, refine=True)
    return _differentiate(fp, order), _differentiate(fr, order)


def _differentiate(f: ChebyshevInterpolant, order: int) -> ChebyshevInterpolant:
    if f.degree <= order:
        # a (numerically) low-degree fit, e.g. an identically constant H
        pad = np.zeros(order + 2)
        pad[: len(f.coefficients)] = f.coefficients
        f = ChebyshevInterpolant(f.domain, pad)
    return chebyshev_derivative(f, order)


def _scaled(f: ChebyshevInterpolant, factor: float) -> ChebyshevInterpolant:
    return ChebyshevInterpolant(f.domain, factor * f.coefficients)


def curve_from_generating(
    h: Callable[[float], np.ndarray],
    order: int,
    sign: float,
    p_factor: float,
    r_factor: float,
    grid,
    statistic: str,
    ensemble: str,
    xi: float,
    rescaling: Rescaling = Rescaling(),
    s_max: float | None = None,
    meta: dict | None = None,
) -> SpacingCurve:
    """Assemble a curve from a sampler ``h(s) -> (H_p, H_r)`` of the generating quantities."""
    g = _check_grid(grid)
    top = float(s_max if s_max is not None else max(g[-1], 1e-3))
    dp, dr = _fit_pair(h, order, top, rescaling.alpha)
    dp = _scaled(dp, sign * p_factor)
    dr = _scaled(dr, sign * r_factor)
    return SpacingCurve(
        statistic=statistic,
        ensemble=ensemble,
        xi=float(xi),
        grid=g,
        p=dp(g),
        r=dr(g),
        rescaling=rescaling.describe(),
        meta=dict(meta or {}),
        p_fit=dp,
        r_fit=dr,
    )


def spacing_curve(
    statistic: str,
    ensemble: str = "CUE",
    xi: float = 1.0,
    grid=None,
    rescaling: Rescaling = Rescaling(),
    tol: float = CURVE_TOL,
    s_max: float | None = None,
) -> SpacingCurve:
    """Leading density p and 1/N^2 correction r of a spacing statistic."""
    if grid is None:
        grid = default_grid()
    rec = _recipe(statistic, ensemble, xi, rescaling.alpha_bar, tol)
    return curve_from_generating(
        rec.h, rec.order, rec.sign, rec.p_factor, rec.r_factor, grid,
        statistic, ensemble, xi, rescaling, s_max,
        meta={"route": "operator", "term_tol": tol},
    )


def kth_spacing_cue(k: int, xi: float = 1.0, grid=None, rescaling: Rescaling = Rescaling()) -> SpacingCurve:
    return spacing_curve(f"kth:{k}", "CUE", xi, grid, rescaling)


def origin_spacing(xi: float = 1.0, grid=None, rescaling: Rescaling = Rescaling()) -> SpacingCurve:
    return spacing_curve("origin", "CUE", xi, grid, rescaling)


def nn_spacing(xi: float = 1.0, grid=None, rescaling: Rescaling = Rescaling()) -> SpacingCurve:
    return spacing_curve("nn", "CUE", xi, grid, rescaling)


def coe_spacing(xi: float = 1.0, grid=None) -> SpacingCurve:
    return spacing_curve("kth:0", "COE", xi, grid)


def cse_spacing(xi: float = 1.0, grid=None) -> SpacingCurve:
    return spacing_curve("kth:0", "CSE", xi, grid)


# --------------------------------------------------------------------------
# Sum rules


@dataclass(frozen=True)
class Moments:
    p0: float
    p1: float
    r0: float
    r1: float
    cutoff: float


def tail_cutoff(h, tail: float = 1e-10, start: float = 4.0, limit: float = 400.0) -> float:
    """Smallest S in a geometric ladder where H_p and H_r (and their slopes) are below ``tail``."""
    S = start
    while S <= limit:
        a, b = h(S), h(0.97 * S)
        slope = np.abs(a - b) / (0.03 * S)
        if np.max(np.abs(a)) < tail and np.max(S * slope) < tail:
            return S
        S *= 1.25
    raise InvalidArgument("generating quantities do not decay below the tail tolerance")


def moments(statistic: str, ensemble: str = "CUE", xi: float = 1.0, tail: float = 1e-10) -> Moments:
    """Zeroth and first moments of p and r over [0, S] with S chosen from the tail."""
    rec = _recipe(statistic, ensemble, xi, 1.0, CURVE_TOL)
    S = tail_cutoff(rec.h, tail)
    curve = curve_from_generating(rec.h, rec.order, rec.sign, rec.p_factor, rec.r_factor,
                                  [0.0, S], statistic, ensemble, xi, s_max=S)
    return Moments(*_moments_of(curve.p_fit), *_moments_of(curve.r_fit), cutoff=S)


def _moments_of(f: ChebyshevInterpolant) -> tuple[float, float]:
    from .quadrature import gauss_legendre

    rule = gauss_legendre(f.degree // 2 + 2, f.domain)
    vals = f(rule.nodes)
    return float(rule.weights @ vals), float(rule.weights @ (rule.nodes * vals))
