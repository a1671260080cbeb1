"""Transformation-based MCMC with additive transformations.

Every iteration moves all coordinates at once: coordinate ``i`` goes
forward (``x_i + beta_i * e_i``) with probability ``p_i`` and backward
otherwise, with ``e_i ~ Exponential(1)``. Because a backward move is
undone by a forward one with the same ``e``, the Metropolis-Hastings ratio
only needs the direction probabilities::

    log alpha = sum_{backward} log(p/(1-p)) + sum_{forward} log((1-p)/p)
                + log pi(x') - log pi(x)
"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math
import warnings

import numpy as np
from scipy.optimize import minimize

from .exceptions import ConfigurationError, InitializationError


@dataclass(frozen=True)
class TmcmcConfig:
    """Sampler settings.

    Parameters
    ----------
    betas : sequence of float
        Per-parameter step scales.
    forward_probs : sequence of float
        Per-parameter probability of a forward move, strictly in (0, 1).
    iterations : int
        Total number of transitions, burn-in included.
    burn_in : int
        Transitions discarded before recording starts.
    seed : int
    thinning : int
        Keep every ``thinning``-th post-burn-in state.
    shared_innovation : bool
        Use one ``e`` for all coordinates instead of one per coordinate.
    warn_after : int
        Emit a warning if nothing has been accepted after this many transitions.
    """

    betas: tuple
    forward_probs: tuple
    iterations: int
    burn_in: int = 0
    seed: int = 0
    thinning: int = 1
    shared_innovation: bool = False
    warn_after: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in np.atleast_1d(self.betas)))
        object.__setattr__(self, "forward_probs", tuple(float(p) for p in np.atleast_1d(self.forward_probs)))

    @classmethod
    def symmetric(cls, betas, **kwargs):
        """Config with every forward probability set to 0.5."""
        betas = tuple(np.atleast_1d(betas))
        return cls(betas=betas, forward_probs=(0.5,) * len(betas), **kwargs)

    @property
    def n_params(self):
        return len(self.betas)

    def validate(self, n_params=None):
        if len(self.betas) != len(self.forward_probs):
            raise ConfigurationError("betas and forward_probs differ in length")
        if n_params is not None and len(self.betas) != n_params:
            raise ConfigurationError(f"config has {len(self.betas)} scales for {n_params} parameters")
        if any(not (0.0 < p < 1.0) for p in self.forward_probs):
            raise ConfigurationError("forward probabilities must lie strictly inside (0, 1)")
        if any(not (b >= 0 and math.isfinite(b)) for b in self.betas):
            raise ConfigurationError("step scales must be finite and nonnegative")
        if self.iterations < 0 or not 0 <= self.burn_in <= self.iterations:
            raise ConfigurationError(
                f"need 0 <= burn_in <= iterations, got burn_in={self.burn_in}, iterations={self.iterations}"
            )
        if self.thinning < 1:
            raise ConfigurationError("thinning must be >= 1")


@dataclass(frozen=True)
class ChainRecord:
    iteration: int
    params: np.ndarray
    log_posterior: float
    accepted: bool


@dataclass(eq=False)
class Chain:
    """Retained states of one chain plus the full log-posterior trace.

    Iterating yields :class:`ChainRecord` objects.
    """

    iterations: np.ndarray
    samples: np.ndarray
    log_post: np.ndarray
    accepted: np.ndarray
    trace: np.ndarray
    n_accepted: int
    config: TmcmcConfig
    names: list = field(default_factory=list)
    final_state: np.ndarray | None = None
    final_log_post: float = float("nan")

    @property
    def acceptance_rate(self):
        n = len(self.trace)
        return self.n_accepted / n if n else float("nan")

    def __len__(self):
        return len(self.iterations)

    def __getitem__(self, i):
        return ChainRecord(int(self.iterations[i]), self.samples[i], float(self.log_post[i]), bool(self.accepted[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def chain_rng(seed, chain_index=0):
    """Generator for chain ``chain_index``; a pure function of both arguments."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(chain_index),)))


def propose(state, cfg, rng):
    """Draw one transformation of ``state``.

    Returns
    -------
    proposal : ndarray
    move_signs : ndarray of int8
        ``+1`` for forward moves, ``-1`` for backward moves.
    """
    state = np.asarray(state, dtype=float)
    k = state.shape[0]
    if cfg.shared_innovation:
        e = np.full(k, rng.standard_exponential())
    else:
        e = rng.standard_exponential(k)
    u = rng.random(k)
    signs = np.where(u < np.asarray(cfg.forward_probs), 1, -1).astype(np.int8)
    return state + signs * np.asarray(cfg.betas) * e, signs


def _log_odds(cfg):
    p = np.asarray(cfg.forward_probs)
    return np.log(p) - np.log1p(-p)


def acceptance_log_ratio(move_signs, cfg, log_post_new, log_post_old, log_odds=None):
    """Log Metropolis-Hastings ratio of a transformation move.

    ``min(1, exp(.))`` of the result is the acceptance probability.
    """
    if log_post_new == -np.inf:
        return -np.inf
    if log_odds is None:
        log_odds = _log_odds(cfg)
    transform = -float(np.dot(move_signs, log_odds))
    return transform + log_post_new - log_post_old


def acceptance_probability(log_ratio):
    return 1.0 if log_ratio >= 0 else math.exp(log_ratio)


def _as_vector(init):
    if hasattr(init, "to_vector"):
        return init.to_vector()
    return np.atleast_1d(np.asarray(init, dtype=float)).copy()


def run_chain(target, init, cfg, chain_index=0, names=None):
    """Run one chain.

    Parameters
    ----------
    target : callable
        Maps a flat parameter vector to its log-posterior (``-inf`` outside
        the support). A :class:`~tensorgp.model.PosteriorSpec` works as is.
    init : array_like or CovParams
    cfg : TmcmcConfig
    chain_index : int
        Selects the random substream; see :func:`chain_rng`.

    Raises
    ------
    InitializationError
        If the log-posterior at ``init`` is not finite.
    """
    x = _as_vector(init)
    cfg.validate(x.shape[0])
    lp = float(target(x))
    if not math.isfinite(lp):
        raise InitializationError(f"log-posterior at the initial state is {lp}")
    if names is None:
        names = list(getattr(target, "names", [f"x{i}" for i in range(x.shape[0])]))

    rng = chain_rng(cfg.seed, chain_index)
    log_odds = _log_odds(cfg)
    n_keep = len(range(cfg.burn_in, cfg.iterations, cfg.thinning))
    iters = np.empty(n_keep, dtype=np.int64)
    samples = np.empty((n_keep, x.shape[0]))
    log_post = np.empty(n_keep)
    acc_flags = np.empty(n_keep, dtype=bool)
    trace = np.empty(cfg.iterations)
    n_accepted = 0
    j = 0
    for it in range(cfg.iterations):
        prop, signs = propose(x, cfg, rng)
        lp_new = float(target(prop))
        log_a = acceptance_log_ratio(signs, cfg, lp_new, lp, log_odds)
        accepted = math.log(rng.random()) < min(0.0, log_a)
        if accepted:
            x, lp = prop, lp_new
            n_accepted += 1
        trace[it] = lp
        if it == cfg.warn_after - 1 and n_accepted == 0:
            warnings.warn(
                f"chain {chain_index}: no proposal accepted in {cfg.warn_after} iterations; "
                "step scales are probably too large",
                RuntimeWarning,
                stacklevel=2,
            )
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
            iters[j] = it + 1
            samples[j] = x
            log_post[j] = lp
            acc_flags[j] = accepted
            j += 1
    return Chain(iters, samples, log_post, acc_flags, trace, n_accepted, cfg, names, x.copy(), lp)


def locate_mode(target, init, max_evals=4000):
    """Nelder-Mead refinement of a starting point (maximizes ``target``).

    Returns the better of ``init`` and the optimizer's result, so the output
    is never worse than the input.
    """
    x0 = _as_vector(init)
    f0 = float(target(x0))

    def neg(x):
        v = float(target(x))
        return -v if math.isfinite(v) else 1e300

    res = minimize(neg, x0, method="Nelder-Mead",
                   options={"maxfev": max_evals, "adaptive": True, "xatol": 1e-9, "fatol": 1e-7})
    if math.isfinite(f0) and -res.fun <= f0:
        return x0
    return np.asarray(res.x, dtype=float)


def curvature_scales(target, x, rel_step=1e-4, fallback=0.1):
    """Step scales from the diagonal curvature of ``target`` at ``x``.

    Each scale is ``2.38 / sqrt(2 k) / sqrt(-d2f/dx_i^2)``, i.e. the usual
    random-walk scaling for ``k`` coordinates with the factor ``sqrt(2)``
    of the exponential step (``E[e^2] = 2``) taken out. Coordinates with
    nonnegative curvature fall back to ``fallback * max(|x_i|, 1e-3)``.
    """
    x = _as_vector(x)
    k = x.shape[0]
    f0 = float(target(x))
    out = np.empty(k)
    for i in range(k):
        h = rel_step * max(abs(x[i]), 1e-3)
        e = np.zeros(k)
        e[i] = h
        c = -(float(target(x + e)) - 2.0 * f0 + float(target(x - e))) / h**2
        if math.isfinite(c) and c > 0:
            out[i] = 2.38 / math.sqrt(2.0 * k) / math.sqrt(c)
        else:
            out[i] = fallback * max(abs(x[i]), 1e-3)
    return out


def tune_betas(
    target,
    init,
    betas,
    forward_probs=None,
    seed=0,
    pilot_iterations=500,
    target_range=(0.15, 0.40),
    min_rounds=3,
    max_rounds=15,
    shared_innovation=False,
    chain_index=0,
):
    """Pilot runs that rescale the step sizes until acceptance is in range.

    After each pilot, when at least 30 proposals were accepted the scales
    are reshaped to the pilot's per-parameter standard deviations (keeping
    their geometric mean), then multiplied by ``rate / centre`` of the
    target range. Stops once the rate is in range, ``min_rounds`` pilots
    have run and the scales have been reshaped at least once.

    Returns
    -------
    betas : ndarray
    state : ndarray
        Last pilot state, a good starting point for the main chain.
    history : list of (betas, acceptance_rate)
    """
    x = _as_vector(init)
    betas = np.asarray(betas, dtype=float).copy()
    if forward_probs is None:
        forward_probs = np.full(x.shape[0], 0.5)
    lo, hi = target_range
    centre = 0.5 * (lo + hi)
    history = []
    reshaped = False
    for r in range(max_rounds):
        cfg = TmcmcConfig(
            betas=betas,
            forward_probs=forward_probs,
            iterations=pilot_iterations,
            seed=seed,
            shared_innovation=shared_innovation,
            warn_after=pilot_iterations + 1,
        )
        chain = run_chain(target, x, cfg, chain_index=1000 * (chain_index + 1) + r)
        rate = chain.acceptance_rate
        history.append((betas.copy(), rate))
        x = chain.final_state
        if lo <= rate <= hi and r + 1 >= min_rounds and reshaped:
            break
        if chain.n_accepted >= 30:
            sd = chain.samples.std(axis=0)
            if np.all(sd > 0):
                betas = sd * math.exp(np.mean(np.log(betas)) - np.mean(np.log(sd)))
                reshaped = True
        betas = betas * float(np.clip(rate / centre, 0.2, 2.5)) if rate > 0 else betas * 0.2
    return betas, x, history


def _run_chain_job(args):
    target, init, cfg, index = args
    return run_chain(target, init, cfg, chain_index=index)


def run_chains(target, inits, cfg, workers=1):
    """Run one chain per entry of ``inits``; chain ``i`` uses substream ``i``.

    Chains share nothing but the read-only target. With ``workers > 1`` they
    run in a process pool; results are identical either way.
    """
    jobs = [(target, init, cfg, i) for i, init in enumerate(inits)]
    if workers <= 1 or len(jobs) == 1:
        return [_run_chain_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_chain_job, jobs))


def with_scales(cfg, betas):
    return replace(cfg, betas=tuple(float(b) for b in betas))
