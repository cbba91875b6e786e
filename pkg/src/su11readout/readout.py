"""Monte Carlo readout: shot sampling, moment fits, SNR, error rate, bullseye maps."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .errors import InsufficientData, InvalidArgument
from .sampling import chunked


@dataclass(frozen=True, eq=False)
class ShotSet:
    """Heterodyne records ``(I_m, Q_m)``, one row per shot.

    ``axis`` and ``outcome`` hold optional tomography results: the axis letter
    (``x``, ``y`` or ``z``) and the +/-1 outcome of the final strong measurement.
    """

    records: np.ndarray
    seed: int
    label: str
    axis: np.ndarray = None
    outcome: np.ndarray = None

    def __len__(self):
        return len(self.records)

    @property
    def i(self):
        return self.records[:, 0]

    @property
    def q(self):
        return self.records[:, 1]


def _cholesky(cov):
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise InvalidArgument("covariance must be positive definite to sample from it") from None


def sample_shots(moments, n, seed, stream=0, label="", workers=1):
    """Draw ``n`` records from N(moments.mean, moments.cov)."""
    mean = np.asarray(moments.mean, dtype=float)
    L = _cholesky(moments.cov)

    def draw(rng, m):
        return (mean + rng.standard_normal((m, 2)) @ L.T,)

    (records,) = chunked(n, seed, stream, draw, workers)
    return ShotSet(records, int(seed), label)


def sample_mixture(moments_g, moments_e, n, seed, stream=0, label="superposition", workers=1):
    """Equal-weight mixture of the g and e outcome distributions.

    Each shot carries a z-tomography outcome equal to the projected qubit
    state (+1 for g), as for a QND noise measurement followed by a strong
    readout.
    """
    mg, me = np.asarray(moments_g.mean, float), np.asarray(moments_e.mean, float)
    Lg, Le = _cholesky(moments_g.cov), _cholesky(moments_e.cov)

    def draw(rng, m):
        is_g = rng.random(m) < 0.5
        z = rng.standard_normal((m, 2))
        rec = np.where(is_g[:, None], mg + z @ Lg.T, me + z @ Le.T)
        return rec, np.where(is_g, 1, -1).astype(np.int8)

    records, outcome = chunked(n, seed, stream, draw, workers)
    return ShotSet(records, int(seed), label, np.full(len(records), "z"), outcome)


@dataclass(frozen=True, eq=False)
class MomentFit:
    mean: np.ndarray
    cov: np.ndarray
    n: int
    degenerate: bool = False

    @property
    def sigma(self):
        return float(np.mean(np.sqrt(np.diag(self.cov))))


def fit_moments(shots):
    """Sample mean and unbiased covariance of a shot set.

    For Gaussian data these are the maximum-likelihood centre and (up to the
    n/(n-1) factor) width, so they stand in for a 2D Gaussian histogram fit.
    """
    x = np.asarray(shots.records if hasattr(shots, "records") else shots, dtype=float)
    if x.ndim != 2 or x.shape[1] != 2 or len(x) < 2:
        raise InsufficientData(f"need at least 2 records to fit moments, got {len(x)}")
    cov = np.cov(x, rowvar=False, ddof=1)
    degenerate = bool(np.linalg.matrix_rank(cov, tol=1e-12 * max(1.0, np.abs(cov).max())) < 2)
    return MomentFit(x.mean(axis=0), cov, len(x), degenerate)


@dataclass(frozen=True)
class SnrResult:
    snr: float
    normalized: float
    center_g: tuple
    center_e: tuple
    sigma_g: float
    sigma_e: float

    def recompute(self):
        d2 = (self.center_g[0] - self.center_e[0]) ** 2 + (self.center_g[1] - self.center_e[1]) ** 2
        return d2 / (self.sigma_g**2 + self.sigma_e**2)


def _state_variance(cov):
    return float(np.trace(np.asarray(cov)) / 2)


def snr(fit_g, fit_e, baseline=None):
    """Power SNR of two outcome distributions.

    Accepts anything with ``mean`` and ``cov`` (fits or model moments). The
    per-state variance is the average of the two quadrature variances.
    ``baseline`` is a reference SNR used for the ``normalized`` field.
    """
    vg, ve = _state_variance(fit_g.cov), _state_variance(fit_e.cov)
    if not vg + ve > 0:
        raise InvalidArgument("total variance is zero; SNR undefined")
    cg = tuple(float(v) for v in fit_g.mean)
    ce = tuple(float(v) for v in fit_e.mean)
    value = ((cg[0] - ce[0]) ** 2 + (cg[1] - ce[1]) ** 2) / (vg + ve)
    normalized = value / baseline if baseline else float("nan")
    return SnrResult(value, normalized, cg, ce, math.sqrt(vg), math.sqrt(ve))


def error_rate(snr_value):
    """Optimal-threshold misassignment probability for a given power SNR.

    Two equal-width Gaussians separated by ``d`` with ``snr = d^2 / (2 s^2)``
    overlap by ``Q(d / 2s) = erfc(sqrt(snr) / 2) / 2``.
    """
    if not snr_value >= 0:
        raise InvalidArgument(f"SNR must be >= 0, got {snr_value!r}")
    return float(0.5 * erfc(math.sqrt(snr_value) / 2))


@dataclass(frozen=True)
class BinSpec:
    """Square grid of ``n`` x ``n`` bins spanning ``+-extent * scale``."""

    n: int = 51
    extent: float = 5.0
    scale: float = 1.0

    @property
    def edges(self):
        return np.linspace(-self.extent, self.extent, self.n + 1) * self.scale

    @property
    def centers(self):
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])


@dataclass(frozen=True, eq=False)
class ConditionalMap:
    """Per-bin conditional Bloch component; NaN marks bins without data.

    ``values[i, j]`` belongs to the bin with I centre ``centers[i]`` and Q
    centre ``centers[j]``; axes are in units of ``bins.scale``.
    """

    bins: BinSpec
    values: np.ndarray
    counts: np.ndarray
    component: str = "z"

    @property
    def centers(self):
        return self.bins.centers / self.bins.scale

    def rows(self):
        c = self.centers
        for i in range(len(c)):
            for j in range(len(c)):
                yield c[i], c[j], self.values[i, j], int(self.counts[i, j])


def _bin_index(values, bins):
    idx = np.searchsorted(bins.edges, values, side="right") - 1
    # out-of-range shots land in the edge bins so counts sum to the total
    return np.clip(idx, 0, bins.n - 1)


def bin_counts(shots, bins):
    ii, qq = _bin_index(shots.i, bins), _bin_index(shots.q, bins)
    counts = np.zeros((bins.n, bins.n), dtype=np.int64)
    np.add.at(counts, (ii, qq), 1)
    return counts


def _log_density(x, moments):
    mu = np.asarray(moments.mean, float)
    cov = np.asarray(moments.cov, float)
    d = x - mu
    sol = np.linalg.solve(cov, d.reshape(-1, 2).T).T.reshape(d.shape)
    return -0.5 * np.sum(d * sol, axis=-1) - 0.5 * np.log(np.linalg.det(cov))


def bullseye_map(moments_g, moments_e, shots, bins=None):
    """Posterior <z> given an outcome, on a grid, with equal priors (z=+1 is g).

    Values are evaluated at bin centres from the two outcome distributions;
    counts come from ``shots``. Bins with no shots are NaN.
    """
    if bins is None:
        scale = 0.5 * (np.sqrt(_state_variance(moments_g.cov)) + np.sqrt(_state_variance(moments_e.cov)))
        bins = BinSpec(scale=float(scale))
    c = bins.centers
    grid = np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)
    llr = _log_density(grid, moments_g) - _log_density(grid, moments_e)
    values = np.tanh(0.5 * llr)
    counts = bin_counts(shots, bins)
    values = np.where(counts > 0, values, np.nan)
    return ConditionalMap(bins, values, counts, "z")


def conditional_map(shots, bins, component="z"):
    """Empirical conditional tomography map: mean outcome per bin."""
    if shots.outcome is None:
        raise InsufficientData("shot set carries no tomography outcomes")
    sel = shots.axis == component
    if not np.any(sel):
        raise InsufficientData(f"no {component}-axis tomography shots")
    ii = _bin_index(shots.i[sel], bins)
    qq = _bin_index(shots.q[sel], bins)
    counts = np.zeros((bins.n, bins.n), dtype=np.int64)
    sums = np.zeros((bins.n, bins.n))
    np.add.at(counts, (ii, qq), 1)
    np.add.at(sums, (ii, qq), shots.outcome[sel])
    with np.errstate(invalid="ignore", divide="ignore"):
        values = np.where(counts > 0, sums / counts, np.nan)
    return ConditionalMap(bins, values, counts, component)
