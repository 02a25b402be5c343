"""Nystrom discretisation of integral operators and evaluation of operator terms.

An integral operator K on L^2(a, b) is replaced by the matrix
K_w[j, k] = K(x_j, x_k) w_k on a Gauss-Legendre rule.  Determinants, traces,
resolvents and the first-order correction functional

    omega(K; L) = -det(I - K) tr((I - K)^{-1} L)

are then evaluated on that matrix and converge exponentially fast in the
rule size for analytic kernels.  :func:`evaluate_term` wraps a term in the
adaptive dimension loop used for all tabulations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    EvaluationFailure,
    InvalidArgument,
    NearSingularWarning,
    NonConvergence,
    SingularOperator,
)
from .quadrature import QuadratureRule, gauss_legendre

# reciprocal condition numbers below this trigger a NearSingularWarning
RCOND_WARN = 1e-14


@dataclass(frozen=True, eq=False)
class KernelFunction:
    """A symmetric kernel ``evaluate(x, y)`` (vectorised) supported on ``interval``."""

    evaluate: Callable[[np.ndarray, np.ndarray], np.ndarray]
    interval: tuple[float, float]
    label: str = "kernel"

    def __call__(self, x, y):
        return self.evaluate(x, y)

    def on(self, interval) -> "KernelFunction":
        """The same kernel restricted to another interval."""
        return KernelFunction(self.evaluate, (float(interval[0]), float(interval[1])), self.label)


@dataclass(frozen=True, eq=False)
class NystromOperator:
    rule: QuadratureRule
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def __rmul__(self, scalar) -> "NystromOperator":
        return NystromOperator(self.rule, scalar * self.matrix)

    def __add__(self, other: "NystromOperator") -> "NystromOperator":
        return NystromOperator(self.rule, self.matrix + other.matrix)

    def symmetrized(self) -> np.ndarray:
        """D^{1/2} K_w D^{-1/2}, symmetric whenever the kernel is."""
        r = np.sqrt(self.rule.weights)
        return r[:, None] * self.matrix / r[None, :]


@dataclass(frozen=True)
class TermResult:
    value: float | complex
    error_estimate: float
    dimension: int
    warnings: tuple[str, ...] = field(default=())


def nystrom(kernel: KernelFunction, n: int) -> NystromOperator:
    if n < 1:
        raise InvalidArgument("Nystrom dimension must be positive")
    rule = gauss_legendre(n, kernel.interval)
    x = rule.nodes
    vals = np.asarray(kernel.evaluate(x[:, None], x[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (n, n))
    if not np.all(np.isfinite(vals)):
        j, k = np.argwhere(~np.isfinite(vals))[0]
        raise EvaluationFailure(
            f"kernel {kernel.label!r} not finite at ({x[j]!r}, {x[k]!r})", node=(x[j], x[k])
        )
    return NystromOperator(rule, vals * rule.weights[None, :])


def _lu(op: NystromOperator):
    a = np.eye(op.size) - op.matrix
    lu, piv = sla.lu_factor(a, check_finite=False)
    return a, lu, piv


def _det_from_lu(lu, piv):
    d = np.prod(np.diag(lu))
    swaps = np.count_nonzero(piv != np.arange(len(piv)))
    return -d if swaps % 2 else d


def _check_conditioning(a, lu):
    gecon = sla.get_lapack_funcs("gecon", (lu,))
    rcond, _ = gecon(lu, np.linalg.norm(a, 1), norm="1")
    if rcond < RCOND_WARN:
        warnings.warn(f"I - K is nearly singular (rcond = {rcond:.2e})", NearSingularWarning, stacklevel=3)


def fredholm_det(op: NystromOperator):
    """det(I - K_w), the Nystrom approximation of the Fredholm determinant."""
    if op.size == 0:
        return 1.0
    return np.linalg.det(np.eye(op.size) - op.matrix)


def op_trace(op: NystromOperator):
    return np.trace(op.matrix)


def omega(opK: NystromOperator, opL: NystromOperator):
    """-det(I - K_w) tr((I - K_w)^{-1} L_w) from a single LU factorisation."""
    if opK.rule is not opL.rule and not np.array_equal(opK.rule.nodes, opL.rule.nodes):
        raise InvalidArgument("omega needs both operators on the same quadrature rule")
    a, lu, piv = _lu(opK)
    d = _det_from_lu(lu, piv)
    if d == 0.0 or np.any(np.diag(lu) == 0.0):
        raise SingularOperator("I - K is exactly singular")
    _check_conditioning(a, lu)
    x = sla.lu_solve((lu, piv), opL.matrix, check_finite=False)
    return -d * np.trace(x)


def evaluate_term(
    term: Callable[..., float],
    kernels: Sequence[KernelFunction],
    tol: float = 5e-15,
    n_start: int = 7,
    growth: float = 1.41,
    n_max: int = 1000,
    relative: bool = False,
) -> TermResult:
    """Evaluate ``term(*operators)`` with Nystrom matrices of increasing size.

    Starting from ``n_start`` the dimension is grown by ``n <- floor(growth*n)``
    before every evaluation; the loop stops once two successive values differ
    by less than ``tol``.  A term may also return an array, in which case the
    largest componentwise difference is used.  With ``relative`` the threshold
    becomes ``tol * max(1, |val|)``.
    """
    if not tol > 0:
        raise InvalidArgument("tolerance must be positive")
    n = n_start
    prev = math.inf
    val = math.nan
    err = math.inf
    caught: list[str] = []
    while n < n_max:
        n = math.floor(growth * n)
        ops = [nystrom(k, n) for k in kernels]
        with warnings.catch_warnings(record=True) as rec:
            warnings.simplefilter("always", NearSingularWarning)
            val = term(*ops)
        caught.extend(str(w.message) for w in rec if issubclass(w.category, NearSingularWarning))
        err = float(np.max(np.abs(np.asarray(val) - prev)))
        scale = max(1.0, float(np.max(np.abs(val)))) if relative else 1.0
        if err < tol * scale:
            return TermResult(val, err, n, tuple(dict.fromkeys(caught)))
        prev = val
    raise NonConvergence(
        f"operator term not converged below {tol:g} by dimension {n}",
        value=val,
        error_estimate=err,
        dimension=n,
    )
