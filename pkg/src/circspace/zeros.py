"""Riemann zero height lists: parsing, unfolding and empirical spacing statistics.

Large heights (around 1e22) cannot be held in double precision to the
resolution of their spacings, so a dataset keeps an exact decimal ``base``
and double-precision offsets from it.  Unfolding only needs differences,
which are formed from the offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path
from typing import Iterator

import numpy as np

from .ensembles import Histogram, histogram_of
from .errors import DataError, InvalidArgument
from .spacings import _parse_statistic, rz_constants

FORMATS = ("plain_decimal", "offset_header")
UNFOLD_MODES = ("constant_density", "smooth_counting")
DEFAULT_MARGIN = 10.0


@dataclass(frozen=True, eq=False)
class ZeroDataset:
    offsets: np.ndarray
    base: Decimal = Decimal(0)
    source: str = ""

    @property
    def heights(self) -> np.ndarray:
        """Absolute heights in double precision (lossy when the base is huge)."""
        return float(self.base) + self.offsets

    def __len__(self):
        return len(self.offsets)


@dataclass(frozen=True, eq=False)
class UnfoldedSequence:
    points: np.ndarray
    window_mid_height: float
    N_eff: float

    @property
    def mean_spacing(self) -> float:
        p = self.points
        return float((p[-1] - p[0]) / (len(p) - 1)) if len(p) > 1 else math.nan


def low_zeros_path() -> Path:
    """Path of the bundled table of the first 10^4 zero heights."""
    return Path(str(resources.files("circspace") / "data" / "zeros_10k.txt"))


def _parse_number(text: str, lineno: int) -> Decimal:
    try:
        return Decimal(text.strip())
    except InvalidOperation:
        raise DataError(f"cannot parse {text.strip()!r} as a number", line=lineno) from None


def iter_zero_chunks(path, format: str = "plain_decimal", chunk_size: int = 100_000) -> Iterator[tuple[Decimal, np.ndarray]]:
    """Yield (base, offsets) blocks of at most ``chunk_size`` zeros, checking monotonicity across blocks."""
    if format not in FORMATS:
        raise InvalidArgument(f"format must be one of {FORMATS}")
    if chunk_size < 1:
        raise InvalidArgument("chunk_size must be positive")
    base = Decimal(0)
    prev = None
    prev_line = 0
    buf: list[float] = []
    with open(path) as fh:
        lineno = 0
        if format == "offset_header":
            for line in fh:
                lineno += 1
                if line.strip():
                    base = _parse_number(line, lineno)
                    break
        for line in fh:
            lineno += 1
            text = line.strip()
            if not text:
                continue
            try:
                v = float(text)
            except ValueError:
                raise DataError(f"cannot parse {text!r} as a number", line=lineno) from None
            if not math.isfinite(v):
                raise DataError("non-finite value", line=lineno)
            if prev is not None and v <= prev:
                raise DataError(
                    f"height does not increase (previous value on line {prev_line})", line=lineno
                )
            prev, prev_line = v, lineno
            buf.append(v)
            if len(buf) == chunk_size:
                yield base, np.array(buf)
                buf = []
    if buf:
        yield base, np.array(buf)


def parse_zeros(path, format: str = "plain_decimal") -> ZeroDataset:
    """Read zero heights: one per line, or a base line followed by offsets."""
    base = Decimal(0)
    parts = []
    for base, block in iter_zero_chunks(path, format):
        parts.append(block)
    offsets = np.concatenate(parts) if parts else np.empty(0)
    if len(offsets) and float(base) + offsets[0] <= 0:
        raise DataError("heights must be positive", line=2 if format == "offset_header" else 1)
    return ZeroDataset(offsets, base, str(Path(path)))


# --------------------------------------------------------------------------
# Unfolding


def smooth_counting(t):
    """Smooth zero counting function (t/2pi)(log(t/2pi) - 1) + 7/8."""
    x = np.asarray(t, dtype=float) / (2 * np.pi)
    return x * (np.log(x) - 1.0) + 7.0 / 8.0


def _counting_increment(base: float, x: np.ndarray) -> np.ndarray:
    """smooth_counting(base + x) - smooth_counting(base), without cancellation."""
    tb = base / (2 * np.pi)
    dx = x / (2 * np.pi)
    return dx * (np.log(tb + dx) - 1.0) + tb * np.log1p(dx / tb)


def effective_dimension(E: float) -> float:
    """CUE dimension matched to Riemann zeros at height E: log(E/2pi)/sqrt(12 Lambda)."""
    return rz_constants(E).N_eff


def unfold(ds: ZeroDataset, mode: str = "constant_density", rho: float | None = None) -> UnfoldedSequence:
    """Map heights to unit mean spacing.

    ``constant_density`` multiplies by the smooth density at the window
    midpoint (or by ``rho`` when given); ``smooth_counting`` applies the
    smooth counting function.
    """
    if mode not in UNFOLD_MODES:
        raise InvalidArgument(f"mode must be one of {UNFOLD_MODES}")
    if len(ds) < 2:
        raise InvalidArgument("unfolding needs at least two heights")
    base = float(ds.base)
    off = ds.offsets
    mid = base + 0.5 * (off[0] + off[-1])
    if base + off[0] <= 2 * np.pi:
        raise InvalidArgument("heights must exceed 2*pi for the smooth density")
    n_eff = effective_dimension(mid)
    if mode == "constant_density":
        r = rz_constants(mid).rho_bar if rho is None else float(rho)
        pts = off * r
    elif ds.base == 0:
        pts = smooth_counting(off)
    else:
        pts = _counting_increment(base, off)
    return UnfoldedSequence(pts, mid, n_eff)


def thin_mask(n: int, xi: float, rng: np.random.Generator) -> np.ndarray:
    """Index mask keeping each of n points with probability xi."""
    if not 0 < xi <= 1:
        raise InvalidArgument("xi must lie in (0, 1]")
    if xi == 1:
        return np.ones(n, dtype=bool)
    return rng.random(n) < xi


def thin_dataset(ds: ZeroDataset, xi: float, rng: np.random.Generator) -> ZeroDataset:
    return ZeroDataset(ds.offsets[thin_mask(len(ds), xi, rng)], ds.base, ds.source)


# --------------------------------------------------------------------------
# Statistics on a segment


def segment_values(
    x: np.ndarray,
    statistic: str,
    lo: float,
    hi: float,
    rng: np.random.Generator | None = None,
    n_origins: int = 0,
) -> np.ndarray:
    """Statistic values for anchors in [lo, hi) of the increasing points ``x``.

    Points outside the window still serve as neighbours.  Anchors lacking
    a needed neighbour are skipped.
    """
    kind, k = _parse_statistic(statistic)
    x = np.asarray(x, dtype=float)
    if kind == "origin":
        if n_origins < 1:
            raise InvalidArgument("origin statistic needs at least one origin")
        if rng is None:
            raise InvalidArgument("the origin statistic needs a random stream")
        if len(x) == 0:
            return np.empty(0)
        o = rng.uniform(lo, hi, size=n_origins)
        pos = np.searchsorted(x, o)
        right = np.where(pos < len(x), x[np.minimum(pos, len(x) - 1)] - o, np.inf)
        left = np.where(pos > 0, o - x[np.maximum(pos - 1, 0)], np.inf)
        d = np.minimum(left, right)
        return d[np.isfinite(d)]
    j = np.flatnonzero((x >= lo) & (x < hi))
    if kind == "kth":
        j = j[j + k + 1 < len(x)]
        return x[j + k + 1] - x[j]
    j = j[(j >= 1) & (j + 1 < len(x))]
    return np.minimum(x[j] - x[j - 1], x[j + 1] - x[j])


def zero_statistics(
    seq: UnfoldedSequence,
    statistic: str = "kth:0",
    xi: float = 1.0,
    rng: np.random.Generator | None = None,
    bin_width: float = 0.01,
    s_max: float = 3.0,
    margin: float = DEFAULT_MARGIN,
    origins_per_unit: float = 1.0,
) -> Histogram:
    """Histogram of a spacing statistic of an unfolded sequence on a line segment.

    Anchors and origins stay ``margin`` mean spacings away from both ends.
    Thinning with ``xi`` is applied first.
    """
    p = seq.points
    if len(p) < 2 or p[-1] - p[0] < 2 * margin:
        raise InvalidArgument("sequence is shorter than twice the margin")
    if xi < 1 and rng is None:
        raise InvalidArgument("thinning needs a random stream")
    x = p[thin_mask(len(p), xi, rng)] if xi < 1 else p
    lo, hi = p[0] + margin, p[-1] - margin
    n_orig = max(1, int(round((hi - lo) * origins_per_unit)))
    vals = segment_values(x, statistic, lo, hi, rng, n_orig)
    meta = {"statistic": statistic, "xi": xi, "margin": margin, "points": int(len(p))}
    return histogram_of(vals, bin_width, s_max, meta)


def stream_statistics(
    path,
    format: str = "plain_decimal",
    statistic: str = "kth:0",
    rho: float | None = None,
    mode: str = "constant_density",
    xi: float = 1.0,
    seed: int = 0,
    bin_width: float = 0.01,
    s_max: float = 3.0,
    margin: float = DEFAULT_MARGIN,
    chunk_size: int = 100_000,
    origins_per_unit: float = 1.0,
) -> Histogram:
    """Histogram accumulated over a zero file in bounded memory.

    Each block is unfolded with a fixed map (``rho`` times the offset, or
    the smooth counting function), joined to an overlap carried over from
    the previous block, and its anchors are binned once.  With
    ``constant_density`` and no ``rho``, the density at the first height is
    used.
    """
    from .ensembles import stream

    if mode not in UNFOLD_MODES:
        raise InvalidArgument(f"mode must be one of {UNFOLD_MODES}")
    n = None
    counts = None
    total = 0
    carry = np.empty(0)
    start = None
    done = -np.inf
    for idx, (base, block) in enumerate(iter_zero_chunks(path, format, chunk_size)):
        b = float(base)
        if mode == "constant_density":
            if rho is None:
                rho = rz_constants(b + block[0]).rho_bar
            pts = block * rho
        else:
            pts = smooth_counting(block) if base == 0 else _counting_increment(b, block)
        rng = stream(seed, idx)
        if xi < 1:
            pts = pts[thin_mask(len(pts), xi, rng)]
        x = np.concatenate([carry, pts])
        if start is None and len(x):
            start = x[0] + margin
        hi = x[-1] - margin
        lo = max(start, done)
        if hi > lo:
            n_orig = max(1, int(round((hi - lo) * origins_per_unit)))
            vals = segment_values(x, statistic, lo, hi, rng, n_orig)
            h = histogram_of(vals, bin_width, s_max)
            counts = h.counts if counts is None else counts + h.counts
            total += h.total_draws
            done = hi
        carry = x[x >= done - 2 * margin - s_max]
    if counts is None:
        raise InvalidArgument("file holds fewer zeros than twice the margin")
    n = len(counts)
    meta = {"statistic": statistic, "xi": xi, "margin": margin, "seed": seed, "source": str(path)}
    return Histogram(float(bin_width), n * float(bin_width), counts, total, meta)
