"""Post-processing of chains: traces, marginal densities, convergence and
the symmetry comparison of the off-diagonal factor entries."""
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import kernels
from .exceptions import InsufficientDataError

MIN_KDE_SAMPLES = 30


def trace(records):
    """``(iteration, log-posterior)`` pairs as an ``(N, 2)`` array.

    Accepts a :class:`~tensorgp.tmcmc.Chain` (its full per-iteration trace,
    burn-in included) or any sequence of ``ChainRecord``.
    """
    if hasattr(records, "trace") and hasattr(records, "config"):
        lp = np.asarray(records.trace, dtype=float)
        it = np.arange(1, lp.size + 1, dtype=float)
    else:
        records = list(records)
        it = np.array([r.iteration for r in records], dtype=float)
        lp = np.array([r.log_posterior for r in records], dtype=float)
    if lp.size == 0:
        raise InsufficientDataError("empty chain")
    return np.column_stack([it, lp])


def autocorrelation(x):
    x = np.asarray(x, dtype=float)
    n = x.size
    x = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[:n]
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x):
    """ESS with Geyer's initial monotone positive-pair truncation, capped at ``len(x)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorrelation(x)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    tau = -1.0
    running = np.inf
    for g in pairs:
        if g <= 0:
            break
        running = min(running, g)
        tau += 2.0 * running
    return float(min(n, max(1.0, n / tau)))


@dataclass
class MarginalDensity:
    name: str
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float

    def integral(self):
        return float(np.trapezoid(self.density, self.grid))

    @property
    def mode(self):
        return float(self.grid[np.argmax(self.density)])


def silverman_bandwidth(x):
    """Silverman's rule, floored at ``1e-6 * (range + max|x|)`` (with a tiny absolute minimum)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    sd = x.std(ddof=1) if n > 1 else 0.0
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * n ** (-0.2)
    floor = 1e-6 * (np.ptp(x) + max(np.abs(x).max(), 1e-300))
    return float(max(h, floor))


def kde_marginal(samples, grid_size=512, name="", bandwidth=None, grid=None):
    """Gaussian kernel density estimate over ``[min - 3h, max + 3h]``."""
    x = np.ascontiguousarray(samples, dtype=float).ravel()
    if x.size < MIN_KDE_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_KDE_SAMPLES} samples, got {x.size}")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if grid is None:
        grid = np.linspace(x.min() - 3 * h, x.max() + 3 * h, int(grid_size))
    grid = np.ascontiguousarray(grid, dtype=float)
    dens = kernels.gaussian_kde_eval(x, grid, h)
    return MarginalDensity(name, grid, np.asarray(dens), h)


def randomize_factor_rotation(a3_samples, rng):
    """Right-multiply each 2x2 factor by an independent uniform rotation.

    ``A @ R`` gives the same ``A @ A.T`` for every rotation ``R``, and the
    posterior density is constant along that orbit, so each randomized draw
    is still a draw from the posterior. The factor entries of a chain then
    reflect the posterior marginals rather than how far the chain happened
    to drift along the orbit.

    Parameters
    ----------
    a3_samples : array_like, shape (N, 4)
        Rows ``(a11, a12, a21, a22)``.
    """
    a = np.asarray(a3_samples, dtype=float).reshape(-1, 2, 2)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=a.shape[0])
    c, s = np.cos(theta), np.sin(theta)
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)
    return np.einsum("nij,njk->nik", a, rot).reshape(-1, 4)


@dataclass
class SymmetryReport:
    tv_distance: float
    ks_statistic: float
    ks_p_value: float
    n_effective: float
    log_ratio_mean: float
    log_ratio_sd: float
    p_value: float
    p_threshold: float
    rotation_randomized: bool
    flagged: bool

    def to_dict(self):
        return asdict(self)


def symmetry_report(a3_samples, rng=None, p_threshold=0.01, grid_size=512, rotate=True):
    """Compare the marginals of the two off-diagonal factor entries.

    Parameters
    ----------
    a3_samples : array_like, shape (N, 4)
        Factor draws ``(a11, a12, a21, a22)``.
    rng : numpy.random.Generator, optional
        Used for :func:`randomize_factor_rotation`; defaults to seed 0.
    rotate : bool
        Randomize the factor rotation first (recommended; without it the
        comparison mostly reflects how far the chain drifted along the
        unidentified rotation).

    Notes
    -----
    Descriptive statistics: the total-variation distance between the two
    KDEs and a two-sample Kolmogorov-Smirnov test whose sample sizes are
    the effective sample sizes of the streams (``ks_p_value``).

    After rotation randomization the two marginals coincide exactly when
    the two rows of the factor have equal norm, i.e. ``Sigma3[0, 0] ==
    Sigma3[1, 1]``. The KS test cannot tell posterior uncertainty from a
    real difference: with thousands of draws it detects the asymmetry that
    finite data always leave in the posterior. The flag therefore uses the
    posterior of ``r = log(Sigma3[0, 0] / Sigma3[1, 1])``: under equal
    diagonals its posterior mean is approximately normal around zero with
    the posterior standard deviation, so ``z = mean / sqrt(sd^2 (1 + 1/ess))``
    gives the two-sided ``p_value``. ``flagged`` is ``p_value < p_threshold``.
    """
    a3 = np.asarray(a3_samples, dtype=float).reshape(-1, 4)
    if a3.shape[0] < MIN_KDE_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_KDE_SAMPLES} draws, got {a3.shape[0]}")
    if rotate:
        a3 = randomize_factor_rotation(a3, rng if rng is not None else np.random.default_rng(0))
    a, b = a3[:, 1], a3[:, 2]
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    pad = 3 * max(silverman_bandwidth(a), silverman_bandwidth(b))
    grid = np.linspace(lo - pad, hi + pad, grid_size)
    fa = kde_marginal(a, grid=grid).density
    fb = kde_marginal(b, grid=grid).density
    tv = 0.5 * float(np.trapezoid(np.abs(fa - fb), grid))
    d = float(stats.ks_2samp(a, b).statistic)
    ea, eb = effective_sample_size(a), effective_sample_size(b)
    n_eff = ea * eb / (ea + eb)
    ks_p = 1.0 if d == 0 else float(stats.kstwobign.sf(d * np.sqrt(n_eff)))

    r = np.log(a3[:, 0] ** 2 + a3[:, 1] ** 2) - np.log(a3[:, 2] ** 2 + a3[:, 3] ** 2)
    r_mean, r_sd = float(r.mean()), float(r.std(ddof=1))
    se = r_sd * np.sqrt(1.0 + 1.0 / effective_sample_size(r))
    if se > 0:
        p = float(2 * stats.norm.sf(abs(r_mean) / se))
    else:
        p = 1.0 if r_mean == 0 else 0.0
    return SymmetryReport(tv, d, ks_p, n_eff, r_mean, r_sd, p, p_threshold, bool(rotate), p < p_threshold)


@dataclass
class StationarityReport:
    z_score: float
    mean_first: float
    mean_last: float
    var_first: float
    var_last: float
    window: int
    passed: bool

    def to_dict(self):
        return asdict(self)


def stationarity_check(series, window_fraction=0.25, min_window=10, z_threshold=2.0):
    """Geweke-style comparison of the first and last windows of ``series``.

    The z-score divides the difference of window means by a standard error
    built from each window's variance and effective sample size. The
    variances are reported alongside. Passes when ``|z| < z_threshold``.

    ``series`` may be a 1-d array or the ``(N, 2)`` output of :func:`trace`.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim == 2:
        x = x[:, 1]
    if not 0 < window_fraction <= 0.5:
        raise ValueError("window_fraction must be in (0, 0.5]")
    w = int(np.floor(window_fraction * x.size))
    if w < min_window:
        raise InsufficientDataError(
            f"series of length {x.size} gives windows of {w} < {min_window} points"
        )
    first, last = x[:w], x[-w:]
    v1, v2 = first.var(ddof=1), last.var(ddof=1)
    se2 = v1 / effective_sample_size(first) + v2 / effective_sample_size(last)
    diff = first.mean() - last.mean()
    if se2 > 0:
        z = diff / np.sqrt(se2)
    else:
        z = 0.0 if diff == 0 else np.inf * np.sign(diff)
    return StationarityReport(float(z), float(first.mean()), float(last.mean()), float(v1), float(v2), w,
                              bool(abs(z) < z_threshold))


def summarize(samples, names):
    """Posterior mean, sd, 5/50/95% quantiles and ESS per parameter."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    out = {}
    for j, name in enumerate(names):
        col = samples[:, j]
        q05, q50, q95 = np.percentile(col, [5, 50, 95])
        out[name] = {
            "mean": float(col.mean()),
            "sd": float(col.std(ddof=1)) if col.size > 1 else 0.0,
            "q05": float(q05),
            "q50": float(q50),
            "q95": float(q95),
            "ess": effective_sample_size(col),
        }
    return out


def sigma3_samples(a3_samples):
    """``A @ A.T`` for each row ``(a11, a12, a21, a22)``; shape ``(N, 2, 2)``."""
    a = np.asarray(a3_samples, dtype=float).reshape(-1, 2, 2)
    return np.einsum("nij,nkj->nik", a, a)


def mahalanobis_rank(samples, point):
    """Fraction of draws closer to the sample mean than ``point`` (sample-covariance metric).

    ``point`` lies inside the central ``c`` joint region iff the rank is <= c.
    """
    s = np.atleast_2d(np.asarray(samples, dtype=float))
    mu = s.mean(axis=0)
    cov = np.atleast_2d(np.cov(s, rowvar=False))
    prec = np.linalg.pinv(cov)
    dev = s - mu
    d_s = np.einsum("ni,ij,nj->n", dev, prec, dev)
    p = np.asarray(point, dtype=float) - mu
    return float(np.mean(d_s < p @ prec @ p))
