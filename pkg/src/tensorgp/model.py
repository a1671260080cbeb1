"""Tensor-normal likelihood, priors and the two posteriors.

The observation tensor has shape ``(n, m2, m3)``: mode 1 indexes design
points, mode 2 stars, mode 3 the velocity components (``m3 == 2``). Mode
covariances are

* ``Sigma1``: SQE kernel over the design points (smoothness ``q1``),
* ``Sigma2``: SQE kernel over per-star features (smoothness ``q2``),
* ``Sigma3 = A3 @ A3.T`` with ``A3`` a free 2x2 factor.

In prediction mode the unknown test design point is appended to the design
and the test slice is stacked onto mode 1.
"""
from dataclasses import dataclass, field
import math

import numpy as np

from .covariance import (
    DEFAULT_JITTER,
    FreeFactor2x2,
    SpdFactor,
    SqeParams,
    sigma3_from_factor,
    sqe_kernel,
    whiten_array,
)
from .exceptions import ConfigurationError, DomainError, FactorizationError, TensorShapeError
from .tensor import DenseTensor, _as_array

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_Q_MAX = 1e6


@dataclass(frozen=True)
class CovParams:
    """Covariance parameters, optionally with the unknown test design point.

    ``q1`` and ``q2`` are stored unvalidated so that points outside the
    prior support can still be represented (the prior rejects them).
    """

    q1: tuple
    q2: tuple
    a3: FreeFactor2x2
    s_test: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "q1", tuple(float(v) for v in self.q1))
        object.__setattr__(self, "q2", tuple(float(v) for v in self.q2))
        if not isinstance(self.a3, FreeFactor2x2):
            object.__setattr__(self, "a3", FreeFactor2x2.from_array(self.a3))
        if self.s_test is not None:
            object.__setattr__(self, "s_test", tuple(float(v) for v in self.s_test))

    def to_vector(self):
        a = self.a3
        parts = [self.q1, self.q2, (a.a11, a.a12, a.a21, a.a22)]
        if self.s_test is not None:
            parts.append(self.s_test)
        return np.concatenate([np.asarray(p, dtype=float) for p in parts])

    @classmethod
    def from_vector(cls, x, d1, d2=2, with_test=False):
        x = np.asarray(x, dtype=float)
        expected = d1 + d2 + 4 + (d1 if with_test else 0)
        if x.shape != (expected,):
            raise ConfigurationError(f"parameter vector has length {x.size}, expected {expected}")
        q1 = x[:d1]
        q2 = x[d1:d1 + d2]
        a3 = FreeFactor2x2.from_array(x[d1 + d2:d1 + d2 + 4])
        s_test = x[d1 + d2 + 4:] if with_test else None
        return cls(q1, q2, a3, s_test)

    def __len__(self):
        return len(self.q1) + len(self.q2) + 4 + (len(self.s_test) if self.s_test is not None else 0)


def param_names(d1, d2=2, with_test=False):
    names = [f"q1_{i}{i}" for i in range(1, d1 + 1)]
    names += [f"q2_{i}{i}" for i in range(1, d2 + 1)]
    names += ["a3_11", "a3_12", "a3_21", "a3_22"]
    if with_test:
        names += [f"s_test_{i}" for i in range(1, d1 + 1)]
    return names


@dataclass(frozen=True, eq=False)
class TrainingSet:
    """Design points paired with the ``(n, m2, m3)`` observation tensor.

    ``star_features`` defaults to each star's velocity averaged over the
    design points, i.e. ``data.mean(axis=0)``.
    """

    design: np.ndarray
    data: DenseTensor
    star_features: np.ndarray | None = None
    digest: str | None = None

    def __post_init__(self):
        design = np.atleast_2d(np.asarray(self.design, dtype=float))
        data = self.data if isinstance(self.data, DenseTensor) else DenseTensor(self.data)
        if data.ndim != 3:
            raise TensorShapeError(f"observation tensor must have 3 modes, got shape {data.shape}")
        if data.shape[2] != 2:
            raise TensorShapeError(f"mode 3 must have size 2 (free 2x2 factor), got {data.shape[2]}")
        if design.shape[0] != data.shape[0]:
            raise TensorShapeError(
                f"{design.shape[0]} design points but the tensor has {data.shape[0]} mode-1 slices"
            )
        if not (np.all(np.isfinite(design)) and np.all(np.isfinite(data.data))):
            raise DomainError("training inputs contain non-finite values")
        features = self.star_features
        if features is None:
            features = data.data.mean(axis=0)
        features = np.asarray(features, dtype=float)
        if features.shape[0] != data.shape[1]:
            raise TensorShapeError(f"{features.shape[0]} star features for {data.shape[1]} stars")
        design.setflags(write=False)
        features.setflags(write=False)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "star_features", features)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.design.shape[1]


@dataclass(frozen=True)
class PriorBounds:
    """Truncation of the flat priors.

    ``q_max`` caps every smoothness parameter; ``s_box`` is ``(lower, upper)``
    for the test design point.
    """

    q_max: float = DEFAULT_Q_MAX
    s_box: tuple | None = None


def log_likelihood(v, mean, factors):
    """Tensor-normal log-density of ``v``.

    ``-(m/2) log 2pi - sum_i (m / (2 m_i)) log|Sigma_i| - ||whiten(v - mean)||^2 / 2``
    with ``m = prod(m_i)``.
    """
    v = _as_array(v)
    mean = _as_array(mean)
    if v.shape != mean.shape:
        raise TensorShapeError(f"observation shape {v.shape} differs from mean shape {mean.shape}")
    if len(factors) != v.ndim:
        raise TensorShapeError(f"{len(factors)} factors for a {v.ndim}-mode tensor")
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(mean))):
        raise DomainError("non-finite value in observation or mean")
    return _log_likelihood_residual(v - mean, factors)


def _log_likelihood_residual(resid, factors):
    m = resid.size
    log_det_term = sum((m / f.dim) * f.log_det for f in factors)
    w = whiten_array(resid, factors).ravel()
    return -0.5 * (m * LOG_2PI + log_det_term + float(w @ w))


def mle_mean(training):
    """Average of the mode-1 slices, broadcast back over mode 1."""
    data = training.data.data if isinstance(training, TrainingSet) else _as_array(training)
    slice_mean = data.mean(axis=0, keepdims=True)
    return DenseTensor(np.broadcast_to(slice_mean, data.shape))


def log_prior(p, bounds=PriorBounds()):
    """Log prior density (up to a constant).

    Flat on ``(0, q_max]`` for every smoothness parameter, ``|Sigma3|^{-1/2}``
    for the covariance of mode 3 (``= 1 / |det A3|``) and flat over
    ``bounds.s_box`` for the test design point.
    """
    q = np.concatenate([p.q1, p.q2])
    if not np.all((q > 0) & (q <= bounds.q_max)):
        return -np.inf
    det = p.a3.det
    if det == 0 or not np.isfinite(det):
        return -np.inf
    lp = -math.log(abs(det))
    if p.s_test is not None and bounds.s_box is not None:
        s = np.asarray(p.s_test)
        lo, hi = (np.asarray(b, dtype=float) for b in bounds.s_box)
        if not np.all((s >= lo) & (s <= hi)):
            return -np.inf
    return lp


@dataclass(frozen=True, eq=False)
class PosteriorSpec:
    """Everything needed to evaluate the log-posterior.

    Calling an instance with a flat parameter vector returns the
    log-posterior, so it can be handed to the sampler directly.

    Parameters
    ----------
    training : TrainingSet
    test_slice : DenseTensor or array_like, optional
        Observation of shape ``(m2, m3)`` (or ``(1, m2, m3)``) at the unknown
        design point. Its presence switches on prediction mode.
    mean : DenseTensor, optional
        Fixed mean of the training tensor; defaults to :func:`mle_mean`.
    jitter : float
    bounds : PriorBounds
        When ``s_box`` is unset in prediction mode, the bounding box of the
        design points is used.
    """

    training: TrainingSet
    test_slice: DenseTensor | None = None
    mean: DenseTensor | None = None
    jitter: float = DEFAULT_JITTER
    bounds: PriorBounds = field(default_factory=PriorBounds)

    def __post_init__(self):
        tr = self.training
        mean = self.mean if self.mean is not None else mle_mean(tr)
        mean = mean if isinstance(mean, DenseTensor) else DenseTensor(mean)
        if mean.shape != tr.data.shape:
            raise TensorShapeError(f"mean shape {mean.shape} differs from data shape {tr.data.shape}")
        object.__setattr__(self, "mean", mean)
        resid = tr.data.data - mean.data
        test = self.test_slice
        if test is not None:
            test = _as_array(test).reshape((1,) + tr.data.shape[1:])
            if not np.all(np.isfinite(test)):
                raise DomainError("test slice contains non-finite values")
            # the mean is constant over mode 1 in the default case; reuse its first slice
            resid = np.concatenate([resid, test - mean.data[:1]], axis=0)
            object.__setattr__(self, "test_slice", DenseTensor(test[0]))
            if self.bounds.s_box is None:
                box = (tuple(tr.design.min(axis=0)), tuple(tr.design.max(axis=0)))
                object.__setattr__(self, "bounds", PriorBounds(self.bounds.q_max, box))
        resid = np.ascontiguousarray(resid)
        resid.setflags(write=False)
        object.__setattr__(self, "_resid", resid)

    @property
    def prediction(self):
        return self.test_slice is not None

    @property
    def d(self):
        return self.training.d

    @property
    def n_params(self):
        return self.d + 2 + 4 + (self.d if self.prediction else 0)

    @property
    def names(self):
        return param_names(self.d, 2, self.prediction)

    @property
    def residual(self):
        """Residual tensor the likelihood is evaluated on (stacked in prediction mode)."""
        return self._resid

    def training_only(self):
        """The same posterior without the test slice."""
        if not self.prediction:
            return self
        return PosteriorSpec(self.training, None, self.mean, self.jitter, PriorBounds(self.bounds.q_max))

    def unpack(self, x):
        return CovParams.from_vector(x, self.d, 2, self.prediction)

    def factors(self, p):
        """Build the three mode covariances; may raise Factorization/DomainError."""
        design = self.training.design
        if self.prediction:
            design = np.vstack([design, np.asarray(p.s_test)[None, :]])
        s1 = sqe_kernel(design, p.q1, self.jitter)
        s2 = sqe_kernel(self.training.star_features, p.q2, self.jitter)
        s3 = sigma3_from_factor(p.a3)
        return [s1, s2, s3]

    def __call__(self, x):
        return log_posterior(self, self.unpack(x))


def log_posterior(spec, p):
    """Log prior plus tensor-normal log-likelihood; ``-inf`` off-support.

    Raises
    ------
    ConfigurationError
        If ``p.s_test`` is present without a test slice or vice versa.
    """
    if (p.s_test is not None) != spec.prediction:
        raise ConfigurationError(
            "prediction mode needs both a test slice and s_test"
            if spec.prediction
            else "s_test given but the posterior has no test slice"
        )
    if len(p.q1) != spec.d or len(p.q2) != 2 or (p.s_test is not None and len(p.s_test) != spec.d):
        raise ConfigurationError("parameter dimensions do not match the training set")
    lp = log_prior(p, spec.bounds)
    if not np.isfinite(lp):
        return -np.inf
    try:
        factors = spec.factors(p)
    except (FactorizationError, DomainError):
        return -np.inf
    ll = _log_likelihood_residual(spec.residual, factors)
    if not np.isfinite(ll):
        return -np.inf
    return lp + ll


def _median_inverse_sq_spacing(points):
    points = np.atleast_2d(points)
    diff = points[:, None, :] - points[None, :, :]
    iu = np.triu_indices(points.shape[0], k=1)
    q = []
    for l in range(points.shape[1]):
        sq = diff[..., l][iu] ** 2
        sq = sq[sq > 0]
        q.append(1.0 / np.median(sq) if sq.size else 1.0)
    return np.asarray(q)


def initial_params(spec):
    """Data-driven starting point for the sampler.

    Smoothness parameters put correlation ``exp(-1)`` at the median spacing
    of each input coordinate; ``A3`` is the symmetric square root of the
    empirical mode-3 covariance of the residuals (no preferred component
    order); the test point starts at the best point of a coarse grid over
    its prior box.
    """
    tr = spec.training
    q1 = _median_inverse_sq_spacing(tr.design) if tr.n > 1 else np.ones(tr.d)
    q2 = _median_inverse_sq_spacing(tr.star_features) if tr.data.shape[1] > 1 else np.ones(2)
    resid = tr.data.data - spec.mean.data
    flat = resid.reshape(-1, 2)
    cov = flat.T @ flat / max(flat.shape[0], 1)
    if not np.all(np.isfinite(cov)) or np.linalg.det(cov) <= 1e-12 * max(np.trace(cov), 1e-300) ** 2:
        cov = cov + np.eye(2) * max(np.trace(cov) * 1e-3, 1e-6)
    w, u = np.linalg.eigh(cov)
    a3 = FreeFactor2x2.from_array(u @ np.diag(np.sqrt(np.maximum(w, 1e-12))) @ u.T)
    if not spec.prediction:
        return CovParams(q1, q2, a3)
    grid = _s_test_grid(spec)
    scores = [log_posterior(spec, CovParams(q1, q2, a3, s)) for s in grid]
    return CovParams(q1, q2, a3, grid[int(np.argmax(scores))])


def _s_test_grid(spec, per_dim=None):
    lo, hi = (np.asarray(b, dtype=float) for b in spec.bounds.s_box)
    d = spec.d
    per_dim = per_dim or max(4, int(round(400 ** (1.0 / d))))
    axes = [np.linspace(a, b, per_dim + 2)[1:-1] for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def starting_point(spec, optimize=True, n_candidates=3):
    """Flat starting vector for the sampler.

    With ``optimize``: locate the mode of the training-only posterior from
    :func:`initial_params`; in prediction mode, score a grid of test points
    at those covariance parameters and refine the best ``n_candidates``
    jointly, keeping the highest.
    """
    if not optimize:
        return initial_params(spec).to_vector()
    from .tmcmc import locate_mode

    base = spec.training_only()
    x_cov = locate_mode(base, initial_params(base))
    if not spec.prediction:
        return x_cov
    grid = _s_test_grid(spec)
    scores = np.array([spec(np.concatenate([x_cov, s])) for s in grid])
    best = None
    for idx in np.argsort(scores)[::-1][:n_candidates]:
        if not np.isfinite(scores[idx]):
            break
        x = locate_mode(spec, np.concatenate([x_cov, grid[idx]]))
        lp = spec(x)
        if best is None or lp > best[0]:
            best = (lp, x)
    if best is None:
        return initial_params(spec).to_vector()
    return best[1]


def sample_posterior(spec, cfg, chain_index=0, optimize=True, pilot_iterations=500):
    """Full sampling pipeline for one chain.

    Start at :func:`starting_point`, take curvature-based step sizes, jitter
    the start for ``chain_index > 0``, tune the scales with pilot runs, then
    run ``cfg`` (whose ``betas`` are replaced by the tuned ones).

    Returns
    -------
    chain : Chain
    history : list of (betas, acceptance_rate)
        Pilot-tuning record.
    """
    from .tmcmc import TmcmcConfig, chain_rng, curvature_scales, run_chain, tune_betas

    x = starting_point(spec, optimize)
    betas = curvature_scales(spec, x)
    if chain_index > 0:
        rng = chain_rng(cfg.seed, 10_000 + chain_index)
        trial = x + 3.0 * betas * rng.standard_normal(x.shape)
        if np.isfinite(spec(trial)):
            x = trial
    betas, x, history = tune_betas(
        spec, x, betas, cfg.forward_probs, seed=cfg.seed, pilot_iterations=pilot_iterations,
        shared_innovation=cfg.shared_innovation, chain_index=chain_index,
    )
    chain_cfg = TmcmcConfig(betas, cfg.forward_probs, cfg.iterations, cfg.burn_in, cfg.seed,
                            cfg.thinning, cfg.shared_innovation, cfg.warn_after)
    chain = run_chain(spec, x, chain_cfg, chain_index=chain_index)
    return chain, [(b.tolist(), r) for b, r in history]
