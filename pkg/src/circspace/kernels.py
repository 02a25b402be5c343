"""Kernel constructors for the sine-kernel family and its finite-N relatives.

All kernels depend on x - y (and, for the reflected families, on x + y) only
through ``np.sinc`` and ``sin``, so the removable singularities at x = y and
x = -y are resolved exactly by numpy's sinc rather than by cancellation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import InvalidArgument
from .operators import KernelFunction

FAMILIES = (
    "sine",
    "cueN",
    "correctionL",
    "correctionL_RZ",
    "nn_K",
    "nn_L",
    "pm_K",
    "pm_L",
    "cueN_pm",
    "conditioned_cueN",
)

_NEEDS_N = {"cueN", "cueN_pm", "conditioned_cueN"}
_NEEDS_SIGN = {"pm_K", "pm_L", "cueN_pm"}


@dataclass(frozen=True)
class KernelSpec:
    """Parameters selecting one kernel.

    ``alpha_bar`` rescales the frequency inside the correction kernel; it is
    required for ``correctionL_RZ`` and optional (default 1) for the other
    correction families so that interior rescaling applies to them as well.
    """

    family: str
    interval: tuple[float, float]
    N: int | None = None
    sign: int | None = None
    alpha_bar: float | None = None


# Elementary kernels as functions of the difference d = x - y.

def sine_kernel(x, y):
    return np.sinc(x - y)


def cue_kernel(N):
    def k(x, y):
        # reduce d = r + mN with |r| <= N/2 so the denominator stays away from 0
        d = np.asarray(x - y, dtype=float)
        m = np.floor(d / N + 0.5)
        r = d - m * N
        sign = np.where((m * (N + 1)) % 2 == 0, 1.0, -1.0)
        return sign * np.sinc(r) / np.sinc(r / N)

    return k


def correction_kernel(alpha_bar=1.0):
    def k(x, y):
        d = x - y
        return np.pi * d * np.sin(np.pi * alpha_bar * d) / 6.0

    return k


# Derived kernels.

def _reflected(k, sign):
    return lambda x, y: k(x, y) + sign * k(x, -y)


def _conditioned(k):
    """k(x,y) - k(x,0) k(0,y): the kernel conditioned on a point at the origin."""
    return lambda x, y: k(x, y) - k(x, 0.0) * k(0.0, y)


def _conditioned_correction(k, ell):
    """First-order variation of :func:`_conditioned` in direction ``ell``."""
    return lambda x, y: ell(x, y) - ell(x, 0.0) * k(0.0, y) - k(x, 0.0) * ell(0.0, y)


def _evaluator(spec: KernelSpec):
    fam = spec.family
    if fam not in FAMILIES:
        raise InvalidArgument(f"unknown kernel family {fam!r}")
    if fam in _NEEDS_N and (spec.N is None or spec.N < 1):
        raise InvalidArgument(f"family {fam!r} needs a dimension N >= 1")
    if fam in _NEEDS_SIGN and spec.sign not in (1, -1):
        raise InvalidArgument(f"family {fam!r} needs sign +1 or -1")
    if fam == "correctionL_RZ" and spec.alpha_bar is None:
        raise InvalidArgument("correctionL_RZ needs alpha_bar")
    abar = 1.0 if spec.alpha_bar is None else float(spec.alpha_bar)
    ell = correction_kernel(abar)

    if fam == "sine":
        return sine_kernel
    if fam == "cueN":
        return cue_kernel(spec.N)
    if fam in ("correctionL", "correctionL_RZ"):
        return ell
    if fam == "nn_K":
        return _conditioned(sine_kernel)
    if fam == "nn_L":
        return _conditioned_correction(sine_kernel, ell)
    if fam == "pm_K":
        return _reflected(sine_kernel, spec.sign)
    if fam == "pm_L":
        return _reflected(ell, spec.sign)
    if fam == "cueN_pm":
        return _reflected(cue_kernel(spec.N), spec.sign)
    return _conditioned(cue_kernel(spec.N))


def _label(spec: KernelSpec) -> str:
    parts = [spec.family]
    if spec.N is not None:
        parts.append(f"N={spec.N}")
    if spec.sign is not None:
        parts.append("+" if spec.sign > 0 else "-")
    if spec.alpha_bar is not None:
        parts.append(f"abar={spec.alpha_bar:g}")
    return ":".join(parts)


def make_kernel(spec: KernelSpec) -> KernelFunction:
    a, b = spec.interval
    if not a < b:
        raise InvalidArgument(f"empty or reversed interval ({a}, {b})")
    return KernelFunction(_evaluator(spec), (float(a), float(b)), _label(spec))


def kernel_expansion_residual(N: int, points: Iterable[tuple[float, float]]) -> float:
    """max |K^N - K - L/N^2| over ``points``; the remainder is O(N^-4)."""
    if N < 4:
        raise InvalidArgument("expansion residual needs N >= 4")
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    res = cue_kernel(N)(x, y) - sine_kernel(x, y) - correction_kernel()(x, y) / N**2
    return float(np.max(np.abs(res)))
