"""Monte Carlo sampling of the circular beta ensembles and empirical spacing statistics.

Eigen-angles are drawn from the CMV five-diagonal unitary model, whose
Verblunsky coefficients are independent with explicit laws.  Unitary
spectra are computed through the Cayley transform: for a unitary U with no
eigenvalue at -1, H = i (I - U)(I + U)^{-1} is Hermitian with eigenvalues
tan(theta/2), and a batched Hermitian eigensolver is several times faster
than a general one.  A random phase is applied to U first so that no
eigenvalue sits near -1.

Draws are organised in fixed-size chunks, each with its own counter-based
Philox stream keyed by (seed, chunk index).  Histogram counts are integers
merged in chunk order, so results are bitwise independent of the number of
workers.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import chebyshev as C
from scipy.interpolate import CubicSpline

from .errors import InvalidArgument, SamplingError
from .spacings import SpacingCurve, _parse_statistic

BETAS = (1, 2, 4)
DEFAULT_CHUNK = 10_000


def stream(seed: int, chunk: int = 0) -> np.random.Generator:
    """Counter-based random stream for one chunk of draws."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


# --------------------------------------------------------------------------
# Samples


@dataclass(frozen=True, eq=False)
class EigenAngleSample:
    """Sorted eigen-angles in (-pi, pi].

    ``N`` is the matrix dimension and fixes the unit-mean-spacing scale even
    after thinning has removed points.
    """

    beta: int
    N: int
    angles: np.ndarray

    @property
    def scaled(self) -> np.ndarray:
        return self.angles * self.N / (2 * np.pi)

    def __len__(self):
        return len(self.angles)


def _wrap(theta):
    """Map angles into (-pi, pi]."""
    t = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    return np.where(t == -np.pi, np.pi, t)


def _unitary_angles(U: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sorted eigen-angles of a stack of unitary matrices, shape (B, N)."""
    B, N, _ = U.shape
    phi = rng.uniform(-np.pi, np.pi, size=B)
    V = U * np.exp(-1j * phi)[:, None, None]
    eye = np.eye(N)
    # H = i (I - V)(I + V)^{-1}, formed as the solution of (I + V)^T H^T = (I - V)^T
    try:
        Ht = np.linalg.solve(np.swapaxes(eye + V, 1, 2), np.swapaxes(eye - V, 1, 2))
        H = 1j * np.swapaxes(Ht, 1, 2)
        H = 0.5 * (H + np.conj(np.swapaxes(H, 1, 2)))
        h = np.linalg.eigvalsh(H)
    except np.linalg.LinAlgError as exc:
        raise SamplingError(f"unitary eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(h)):
        raise SamplingError("unitary eigensolver returned non-finite values")
    return np.sort(_wrap(2 * np.arctan(h) + phi[:, None]), axis=1)


def verblunsky(beta: int, N: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """Verblunsky coefficients alpha_0..alpha_{N-1} for B independent draws."""
    k = np.arange(N - 1)
    mod2 = rng.beta(1.0, beta * (N - k - 1) / 2.0, size=(B, N - 1))
    phase = rng.uniform(0, 2 * np.pi, size=(B, N))
    alpha = np.empty((B, N), dtype=complex)
    alpha[:, :-1] = np.sqrt(mod2) * np.exp(1j * phase[:, :-1])
    alpha[:, -1] = np.exp(1j * phase[:, -1])
    return alpha


def cmv_matrices(alpha: np.ndarray) -> np.ndarray:
    """CMV matrices L M from Verblunsky coefficients, shape (B, N, N)."""
    B, N = alpha.shape
    rho = np.sqrt(np.clip(1.0 - np.abs(alpha) ** 2, 0.0, None))
    L = np.zeros((B, N, N), dtype=complex)
    M = np.zeros((B, N, N), dtype=complex)
    M[:, 0, 0] = 1.0
    for k in range(N):
        T = L if k % 2 == 0 else M
        if k == N - 1:
            T[:, k, k] = np.conj(alpha[:, k])
        else:
            T[:, k, k] = np.conj(alpha[:, k])
            T[:, k, k + 1] = rho[:, k]
            T[:, k + 1, k] = rho[:, k]
            T[:, k + 1, k + 1] = -alpha[:, k]
    return L @ M


def _check_beta_n(beta, N, minimum=2):
    if beta not in BETAS:
        raise InvalidArgument(f"beta must be one of {BETAS}")
    if N < minimum:
        raise InvalidArgument(f"N must be at least {minimum}")


def cbe_angles(beta: int, N: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """B draws of sorted CbetaE eigen-angles, shape (B, N)."""
    _check_beta_n(beta, N)
    return _unitary_angles(cmv_matrices(verblunsky(beta, N, B, rng)), rng)


def haar_angles(N: int, B: int, rng: np.random.Generator) -> np.ndarray:
    """B draws of Haar-unitary eigen-angles from QR with phase correction."""
    if N < 1:
        raise InvalidArgument("N must be positive")
    if N == 1:
        return np.sort(rng.uniform(-np.pi, np.pi, size=(B, 1)), axis=1)
    Z = (rng.standard_normal((B, N, N)) + 1j * rng.standard_normal((B, N, N))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    d = np.diagonal(R, axis1=1, axis2=2)
    Q = Q * (d / np.abs(d))[:, None, :]
    return _unitary_angles(Q, rng)


def sample_cbe(beta: int, N: int, rng: np.random.Generator) -> EigenAngleSample:
    """One draw from the circular beta ensemble via the CMV model."""
    return EigenAngleSample(beta, N, cbe_angles(beta, N, 1, rng)[0])


def haar_cue(N: int, rng: np.random.Generator) -> EigenAngleSample:
    return EigenAngleSample(2, N, haar_angles(N, 1, rng)[0])


def thin(sample: EigenAngleSample, xi: float, rng: np.random.Generator) -> EigenAngleSample:
    """Keep each angle independently with probability xi."""
    if not 0 < xi <= 1:
        raise InvalidArgument("xi must lie in (0, 1]")
    if xi == 1:
        return sample
    keep = rng.random(len(sample.angles)) < xi
    return EigenAngleSample(sample.beta, sample.N, sample.angles[keep])


# --------------------------------------------------------------------------
# Statistics on the circle


def _kth_values(X: np.ndarray, k: int, period: float) -> np.ndarray:
    n = X.shape[1]
    idx = np.arange(n) + k + 1
    return (X[:, idx % n] + period * (idx // n)) - X


def _nn_values(X: np.ndarray, period: float) -> np.ndarray:
    gaps = _kth_values(X, 0, period)
    return np.minimum(gaps, np.roll(gaps, 1, axis=1))


def _origin_values(X: np.ndarray, period: float, per_sample: int, rng: np.random.Generator) -> np.ndarray:
    """Distance from uniform random origins to the nearest point, per row."""
    B, n = X.shape
    ext = np.concatenate([X[:, -1:] - period, X, X[:, :1] + period], axis=1)
    shift = 3 * period * np.arange(B)[:, None]
    flat = (ext + shift).ravel()
    o = rng.uniform(X[:, :1], X[:, :1] + period, size=(B, per_sample)) + shift
    pos = np.searchsorted(flat, o.ravel())
    right = flat[pos] - o.ravel()
    left = o.ravel() - flat[pos - 1]
    return np.minimum(left, right).reshape(B, per_sample)


def statistic_values(
    X: np.ndarray,
    statistic: str,
    period: float,
    rng: np.random.Generator | None = None,
    origins_per_sample: int = 1,
) -> np.ndarray:
    """Flattened statistic values for rows of sorted scaled points on a circle of length ``period``."""
    kind, k = _parse_statistic(statistic)
    X = np.atleast_2d(X)
    if X.shape[1] == 0:
        return np.empty(0)
    if kind == "kth":
        return _kth_values(X, k, period).ravel()
    if kind == "nn":
        if X.shape[1] < 2:
            return np.empty(0)
        return _nn_values(X, period).ravel()
    if origins_per_sample < 1:
        raise InvalidArgument("origins_per_sample must be at least 1")
    if rng is None:
        raise InvalidArgument("the origin statistic needs a random stream")
    return _origin_values(X, period, origins_per_sample, rng).ravel()


# --------------------------------------------------------------------------
# Histograms


@dataclass(frozen=True, eq=False)
class Histogram:
    """Binned statistic on [0, s_max); draws beyond s_max count towards the total only."""

    bin_width: float
    s_max: float
    counts: np.ndarray
    total_draws: int
    meta: dict = field(default_factory=dict)

    @property
    def range(self) -> tuple[float, float]:
        return (0.0, self.s_max)

    @property
    def edges(self) -> np.ndarray:
        return self.bin_width * np.arange(len(self.counts) + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.bin_width * (np.arange(len(self.counts)) + 0.5)

    @property
    def density(self) -> np.ndarray:
        if self.total_draws == 0:
            return np.zeros(len(self.counts))
        return self.counts / (self.total_draws * self.bin_width)

    def merged(self, other: "Histogram") -> "Histogram":
        if other.bin_width != self.bin_width or len(other.counts) != len(self.counts):
            raise InvalidArgument("histograms have different binnings")
        return Histogram(self.bin_width, self.s_max, self.counts + other.counts,
                         self.total_draws + other.total_draws, self.meta)

    def rebinned(self, factor: int) -> "Histogram":
        """Merge ``factor`` adjacent bins; a trailing partial group is dropped."""
        if factor < 1:
            raise InvalidArgument("rebin factor must be positive")
        m = len(self.counts) // factor
        c = self.counts[: m * factor].reshape(m, factor).sum(axis=1)
        return Histogram(self.bin_width * factor, self.bin_width * factor * m, c, self.total_draws, self.meta)

    def to_csv(self, path, header: dict | None = None) -> None:
        """Write bin_center, density, count with a JSON header line.

        The header always records the binning and total draws so that
        :meth:`from_csv` can rebuild the histogram.
        """
        cfg = dict(self.meta if header is None else header)
        cfg.update(bin_width=self.bin_width, s_max=self.s_max, total_draws=self.total_draws)
        with open(path, "w", newline="") as fh:
            fh.write("# config: " + json.dumps(cfg, sort_keys=True) + "\n")
            w = csv.writer(fh)
            w.writerow(["bin_center", "density", "count"])
            for c, d, n in zip(self.centers, self.density, self.counts):
                w.writerow([repr(float(c)), repr(float(d)), int(n)])

    @classmethod
    def from_csv(cls, path) -> "Histogram":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# config: "):
                raise InvalidArgument(f"{path}: missing '# config:' header")
            cfg = json.loads(first[len("# config: "):])
            rows = list(csv.DictReader(fh))
        counts = np.array([int(r["count"]) for r in rows], dtype=np.int64)
        return cls(float(cfg["bin_width"]), float(cfg["s_max"]), counts, int(cfg["total_draws"]), cfg)


def _nbins(bin_width, s_max):
    if not bin_width > 0 or not s_max > 0:
        raise InvalidArgument("bin width and range must be positive")
    n = int(round(s_max / bin_width))
    if n < 1 or abs(n * bin_width - s_max) > 1e-9 * s_max:
        raise InvalidArgument("s_max must be a whole number of bins")
    return n


def histogram_of(values: np.ndarray, bin_width: float, s_max: float, meta: dict | None = None) -> Histogram:
    n = _nbins(bin_width, s_max)
    idx = np.floor(np.asarray(values) / bin_width).astype(np.int64)
    idx = idx[(idx >= 0) & (idx < n)]
    counts = np.bincount(idx, minlength=n).astype(np.int64)
    return Histogram(float(bin_width), n * float(bin_width), counts, int(np.size(values)), dict(meta or {}))


def _as_rows(samples) -> list[tuple[np.ndarray, float]]:
    """Group samples of equal length into 2-D blocks with their period."""
    if isinstance(samples, EigenAngleSample):
        samples = [samples]
    samples = list(samples)
    if not samples:
        raise InvalidArgument("no samples given")
    groups: dict[tuple[int, int], list[np.ndarray]] = {}
    for sm in samples:
        groups.setdefault((len(sm.angles), sm.N), []).append(sm.scaled)
    return [(np.array(rows), float(N)) for (_, N), rows in sorted(groups.items())]


def extract_statistic(
    samples,
    statistic: str,
    bin_width: float = 0.01,
    s_max: float = 3.0,
    origins_per_sample: int = 1000,
    rng: np.random.Generator | None = None,
) -> Histogram:
    """Histogram of a spacing statistic over eigen-angle samples, in scaled units.

    ``statistic`` is ``"kth:<k>"`` (distance to the (k+1)-th next point),
    ``"nn"`` (nearest neighbour of each point) or ``"origin"`` (distance from
    a uniform random origin to the nearest point, ``origins_per_sample``
    origins per sample).
    """
    kind, _ = _parse_statistic(statistic)
    if kind == "origin" and origins_per_sample < 1:
        raise InvalidArgument("origins_per_sample must be at least 1")
    vals = [statistic_values(X, statistic, period, rng, origins_per_sample) for X, period in _as_rows(samples)]
    meta = {"statistic": statistic}
    return histogram_of(np.concatenate(vals), bin_width, s_max, meta)


# --------------------------------------------------------------------------
# Chunked simulation


def _thin_rows(X: np.ndarray, xi: float, rng: np.random.Generator) -> list[np.ndarray]:
    keep = rng.random(X.shape) < xi
    return [row[m] for row, m in zip(X, keep)]


def _chunk_counts(args) -> tuple[np.ndarray, int]:
    beta, N, size, seed, chunk, statistic, xi, bin_width, s_max, origins, sampler = args
    rng = stream(seed, chunk)
    theta = haar_angles(N, size, rng) if sampler == "haar" else cbe_angles(beta, N, size, rng)
    X = theta * N / (2 * np.pi)
    if xi < 1:
        rows = _thin_rows(X, xi, rng)
        groups: dict[int, list[np.ndarray]] = {}
        for r in rows:
            groups.setdefault(len(r), []).append(r)
        vals = np.concatenate(
            [statistic_values(np.array(g), statistic, N, rng, origins) for _, g in sorted(groups.items())]
        )
    else:
        vals = statistic_values(X, statistic, N, rng, origins)
    h = histogram_of(vals, bin_width, s_max)
    return h.counts, h.total_draws


def _chunks(M: int, chunk: int):
    full, rest = divmod(M, chunk)
    sizes = [chunk] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def simulate(
    beta: int,
    N: int,
    M: int,
    statistic: str = "kth:0",
    seed: int = 0,
    xi: float = 1.0,
    bin_width: float = 0.01,
    s_max: float = 3.0,
    workers: int = 1,
    chunk: int = DEFAULT_CHUNK,
    origins_per_sample: int = 1000,
    sampler: str = "cmv",
) -> Histogram:
    """Histogram of a statistic over M independent draws.

    Results depend on (seed, chunk) only; ``workers`` just spreads chunks
    over processes.
    """
    _check_beta_n(beta, N)
    if M < 1 or chunk < 1:
        raise InvalidArgument("M and chunk must be positive")
    if not 0 < xi <= 1:
        raise InvalidArgument("xi must lie in (0, 1]")
    if sampler not in ("cmv", "haar") or (sampler == "haar" and beta != 2):
        raise InvalidArgument("sampler must be 'cmv', or 'haar' with beta = 2")
    _parse_statistic(statistic)
    n = _nbins(bin_width, s_max)
    jobs = [(beta, N, size, seed, idx, statistic, xi, bin_width, s_max, origins_per_sample, sampler)
            for idx, size in _chunks(M, chunk)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_chunk_counts, jobs))
    else:
        parts = [_chunk_counts(j) for j in jobs]
    counts = np.zeros(n, dtype=np.int64)
    total = 0
    for c, t in parts:
        counts += c
        total += t
    meta = {"beta": beta, "N": N, "M": M, "statistic": statistic, "seed": seed, "xi": xi,
            "bin_width": bin_width, "s_max": s_max, "chunk": chunk, "sampler": sampler}
    if statistic == "origin":
        meta["origins_per_sample"] = origins_per_sample
    return Histogram(float(bin_width), n * float(bin_width), counts, total, meta)


@dataclass(frozen=True)
class GapEstimate:
    s: np.ndarray
    value: np.ndarray
    standard_error: np.ndarray


def empty_arc_probability(
    beta: int, N: int, M: int, s, seed: int = 0, chunk: int = DEFAULT_CHUNK
) -> GapEstimate:
    """Monte Carlo estimate of E_N(0; s), the chance that an arc of scaled length s is empty.

    Each draw contributes the exact fraction of arc positions that miss every
    eigenvalue, sum_j max(0, gap_j - s) / N.
    """
    _check_beta_n(beta, N)
    s = np.atleast_1d(np.asarray(s, dtype=float))
    total = np.zeros(len(s))
    total2 = np.zeros(len(s))
    for idx, size in _chunks(M, chunk):
        X = cbe_angles(beta, N, size, stream(seed, idx)) * N / (2 * np.pi)
        gaps = _kth_values(X, 0, N)
        f = np.maximum(gaps[:, :, None] - s, 0.0).sum(axis=1) / N
        total += f.sum(axis=0)
        total2 += (f * f).sum(axis=0)
    mean = total / M
    var = np.maximum(total2 / M - mean**2, 0.0)
    return GapEstimate(s, mean, np.sqrt(var / max(M - 1, 1)))


# --------------------------------------------------------------------------
# Comparison with theory


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Empirical histogram against p + r/N^2.

    ``correlation`` is None when the scaled residuals are constant or at rounding level.
    """

    centers: np.ndarray
    residuals: np.ndarray
    scaled_residuals: np.ndarray
    reference_r: np.ndarray
    chi_square: float
    dof: int
    sup_norm: float
    correlation: float | None

    def to_json(self, path) -> None:
        data = {
            "chi_square": self.chi_square, "dof": self.dof, "sup_norm": self.sup_norm,
            "correlation": self.correlation, "s": self.centers.tolist(),
            "residuals": self.residuals.tolist(), "scaled_residuals": self.scaled_residuals.tolist(),
            "reference_r": self.reference_r.tolist(),
        }
        with open(path, "w") as fh:
            json.dump(data, fh, indent=1)


def bin_averages(curve: SpacingCurve, column: str, edges: np.ndarray) -> np.ndarray:
    """Average of p or r over each bin, exact for the curve's Chebyshev fit."""
    fit = curve.p_fit if column == "p" else curve.r_fit
    if fit is not None:
        a, b = fit.domain
        anti = C.chebint(fit.coefficients)
        F = 0.5 * (b - a) * C.chebval((2 * edges - (a + b)) / (b - a), anti)
    else:
        F = CubicSpline(curve.grid, getattr(curve, column)).antiderivative()(edges)
    return np.diff(F) / np.diff(edges)


def _correlation(x, y):
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def compare(hist: Histogram, curve: SpacingCurve, N: int, s_range: tuple[float, float] | None = None) -> ComparisonReport:
    """Residuals of the empirical density against p + r/N^2, bin by bin.

    The theory is averaged over each bin.  ``s_range`` restricts the bins
    used (by their centres); the chi-square uses Poisson variances of the
    expected counts.
    """
    edges = hist.edges
    g = curve.grid
    if edges[0] < g[0] - 1e-12 or edges[-1] > g[-1] + 1e-12:
        raise InvalidArgument("histogram range is not covered by the curve grid")
    keep = np.ones(len(hist.counts), dtype=bool)
    if s_range is not None:
        keep = (hist.centers >= s_range[0]) & (hist.centers <= s_range[1])
    p = bin_averages(curve, "p", edges)[keep]
    r = bin_averages(curve, "r", edges)[keep]
    dens = hist.density[keep]
    theory = p + r / N**2
    resid = dens - p
    expected = theory * hist.total_draws * hist.bin_width
    observed = hist.counts[keep]
    pos = expected > 0
    chi2 = float(np.sum((observed[pos] - expected[pos]) ** 2 / expected[pos]))
    # residuals at rounding level carry no signal; report the correlation as undefined
    scale = max(1.0, float(np.max(np.abs(p), initial=0.0)))
    at_rounding = float(np.max(np.abs(resid), initial=0.0)) <= 1e-12 * scale
    return ComparisonReport(
        centers=hist.centers[keep], residuals=resid, scaled_residuals=N**2 * resid, reference_r=r,
        chi_square=chi2, dof=int(np.count_nonzero(pos)), sup_norm=float(np.max(np.abs(dens - theory))),
        correlation=None if at_rounding else _correlation(N**2 * resid, r),
    )
