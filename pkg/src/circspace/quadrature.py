"""Gauss-Legendre rules, Chebyshev interpolation in s and Cauchy contour derivatives in z.

These three primitives carry all the numerical calculus of the package:
operator terms are discretised with Gauss-Legendre rules, derivatives in
the interval length are taken from Chebyshev expansions, and derivatives in
the generating-function variable come from the trapezoid rule on a circle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.fft import dct

from .errors import EvaluationFailure, InvalidArgument, NonConvergence


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    interval: tuple[float, float]
    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f):
        return np.dot(self.weights, f(self.nodes))


def _legendre_with_derivative(n, x):
    p0 = np.ones_like(x)
    p1 = x.copy()
    for j in range(2, n + 1):
        p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
    return p1, n * (x * p1 - p0) / (x**2 - 1)


@lru_cache(maxsize=256)
def _legendre_reference(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point rule on [-1, 1] by Newton iteration."""
    k = np.arange(1, n + 1)
    # Tricomi's asymptotic guess for the k-th largest root
    theta = np.pi * (4 * k - 1) / (4 * n + 2)
    x = np.cos(theta) * (1 - (n - 1) / (8.0 * n**3) - (39 - 28 / np.sin(theta) ** 2) / (384.0 * n**4))
    for _ in range(100):
        p, dp = _legendre_with_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    _, dp = _legendre_with_derivative(n, x)
    w = 2.0 / ((1 - x**2) * dp**2)
    x = x[::-1].copy()
    w = w[::-1].copy()
    # enforce the exact reflection symmetry of the rule
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_legendre(n: int, interval: tuple[float, float] = (-1.0, 1.0)) -> QuadratureRule:
    """The n-point Gauss-Legendre rule mapped affinely to ``interval``."""
    a, b = float(interval[0]), float(interval[1])
    if n < 1:
        raise InvalidArgument(f"rule size must be positive, got {n}")
    if not a < b:
        raise InvalidArgument(f"empty or reversed interval ({a}, {b})")
    x, w = _legendre_reference(int(n))
    half = 0.5 * (b - a)
    return QuadratureRule((a, b), 0.5 * (a + b) + half * x, half * w)


# --------------------------------------------------------------------------
# Chebyshev interpolation


@dataclass(frozen=True, eq=False)
class ChebyshevInterpolant:
    domain: tuple[float, float]
    coefficients: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def _to_ref(self, x):
        a, b = self.domain
        return (2.0 * np.asarray(x, dtype=float) - (a + b)) / (b - a)

    def __call__(self, x):
        return C.chebval(self._to_ref(x), self.coefficients)

    def integral(self) -> float:
        """Definite integral over the whole domain."""
        a, b = self.domain
        anti = C.chebint(self.coefficients)
        return 0.5 * (b - a) * (C.chebval(1.0, anti) - C.chebval(-1.0, anti))


def chebyshev_points(m: int, domain: tuple[float, float]) -> np.ndarray:
    """m Chebyshev-Lobatto points on ``domain``, ascending."""
    a, b = domain
    x = np.cos(np.pi * np.arange(m - 1, -1, -1) / (m - 1))
    return 0.5 * (a + b) + 0.5 * (b - a) * x


def _coefficients_from_values(values: np.ndarray) -> np.ndarray:
    # values ascending in x, i.e. x_j = cos(pi (n - j) / n)
    v = np.asarray(values)[::-1]
    n = len(v) - 1
    c = dct(v, type=1) / n
    c[0] *= 0.5
    c[n] *= 0.5
    return c


def _sample(f, xs):
    vals = np.array([f(x) for x in xs], dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        node = float(xs[np.argmax(bad)])
        raise EvaluationFailure(f"non-finite sample at x = {node!r}", node=node)
    return vals


def chebyshev_fit(f: Callable[[float], float], domain: tuple[float, float], m: int) -> ChebyshevInterpolant:
    """Degree m-1 interpolant of f at the m Chebyshev-Lobatto points of ``domain``."""
    if m < 2:
        raise InvalidArgument("need at least two interpolation points")
    a, b = domain
    if not a < b:
        raise InvalidArgument(f"empty or reversed domain ({a}, {b})")
    xs = chebyshev_points(m, domain)
    return ChebyshevInterpolant((float(a), float(b)), _coefficients_from_values(_sample(f, xs)))


def chebyshev_fit_adaptive(
    f: Callable[[float], float],
    domain: tuple[float, float],
    tol: float = 1e-12,
    m0: int = 16,
    m_max: int = 2049,
    refine: bool = False,
) -> ChebyshevInterpolant:
    """Interpolate f with the degree doubled from ``m0`` until the coefficients decay.

    Lobatto grids nest under doubling, so each refinement only samples the new
    points.  Convergence means the three trailing coefficients fall below
    ``tol`` times the largest one.

    With ``refine`` one further doubling is made after convergence and the
    series is cut where it meets its noise plateau, estimated from the
    trailing quarter of coefficients.  This removes the aliasing error left
    at the stopping degree, which matters when the interpolant is
    differentiated.
    """
    a, b = domain
    if not a < b:
        raise InvalidArgument(f"empty or reversed domain ({a}, {b})")
    n = m0
    xs = chebyshev_points(n + 1, domain)
    vals = _sample(f, xs)
    while True:
        c = _coefficients_from_values(vals)
        scale = np.max(np.abs(c))
        if scale == 0.0 or np.max(np.abs(c[-3:])) <= tol * scale:
            if refine and scale > 0.0:
                vals = _refine(f, domain, n, vals)
                c = _coefficients_from_values(vals)
                plateau = np.max(np.abs(c[-(len(c) // 4) :]))
                return ChebyshevInterpolant((float(a), float(b)), _trim(c, 2 * plateau))
            return ChebyshevInterpolant((float(a), float(b)), _trim(c, tol * scale))
        if 2 * n + 1 > m_max:
            raise NonConvergence(
                f"Chebyshev series did not converge with {n + 1} points",
                value=ChebyshevInterpolant((float(a), float(b)), c),
                error_estimate=float(np.max(np.abs(c[-3:]))),
                dimension=n + 1,
            )
        vals = _refine(f, domain, n, vals)
        n *= 2


def _refine(f, domain, n, vals):
    """Values on the 2n+1 Lobatto grid, reusing those on the n+1 grid."""
    merged = np.empty(2 * n + 1)
    merged[0::2] = vals
    merged[1::2] = _sample(f, chebyshev_points(2 * n + 1, domain)[1::2])
    return merged


def _trim(c, floor):
    idx = np.nonzero(np.abs(c) > floor)[0]
    last = idx[-1] + 1 if len(idx) else 1
    return c[: max(last, 2)].copy()


def chebyshev_derivative(p: ChebyshevInterpolant, order: int = 1) -> ChebyshevInterpolant:
    """Interpolant of the ``order``-th derivative via the coefficient recurrence."""
    if order < 1:
        raise InvalidArgument("derivative order must be at least 1")
    if order >= p.degree:
        raise InvalidArgument(f"order {order} must be below the degree {p.degree}")
    a, b = p.domain
    d = C.chebder(p.coefficients, m=order, scl=2.0 / (b - a))
    return ChebyshevInterpolant(p.domain, d)


# --------------------------------------------------------------------------
# Contour derivatives


@dataclass(frozen=True)
class ContourSpec:
    center: complex = 1.0
    radius: float = 1.0
    node_count: int = 32

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidArgument("contour radius must be positive")
        if self.node_count < 8 or self.node_count % 2:
            raise InvalidArgument("node_count must be even and at least 8")

    def nodes(self) -> np.ndarray:
        theta = 2 * np.pi * np.arange(self.node_count) / self.node_count
        return self.center + self.radius * np.exp(1j * theta)


def derivative_weights(spec: ContourSpec, order: int) -> np.ndarray:
    """Weights c_m with sum_m c_m F(z_m) ~ F^(order)(center)."""
    m = spec.node_count
    theta = 2 * np.pi * np.arange(m) / m
    return math.factorial(order) / (m * spec.radius**order) * np.exp(-1j * order * theta)


def contour_derivative(F: Callable[[complex], complex], spec: ContourSpec, order: int) -> complex:
    """k-th derivative of an analytic F at ``spec.center`` by the trapezoid rule."""
    if order < 1:
        raise InvalidArgument("derivative order must be at least 1")
    z = spec.nodes()
    vals = np.array([F(zj) for zj in z], dtype=complex)
    if not np.all(np.isfinite(vals)):
        bad = z[np.argmax(~np.isfinite(vals))]
        raise EvaluationFailure(f"non-finite value at z = {bad!r}", node=bad)
    return complex(np.dot(derivative_weights(spec, order), vals))


def contour_derivative_adaptive(
    F: Callable[[complex], complex],
    order: int,
    center: complex = 1.0,
    radius: float = 1.0,
    tol: float = 1e-13,
    m0: int = 16,
    m_max: int = 1024,
) -> tuple[complex, int]:
    """Double the contour node count until two successive values agree to ``tol``.

    Returns the value and the node count used.
    """
    m = m0
    prev = contour_derivative(F, ContourSpec(center, radius, m), order)
    while True:
        m *= 2
        val = contour_derivative(F, ContourSpec(center, radius, m), order)
        if abs(val - prev) < tol * max(1.0, abs(val)):
            return val, m
        if m >= m_max:
            raise NonConvergence("contour derivative did not converge", value=val,
                                 error_estimate=abs(val - prev), dimension=m)
        prev = val
