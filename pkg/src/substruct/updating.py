"""Bayesian damage identification with Transitional MCMC.

The likelihood maps the modal discrepancy ``J`` to ``exp(-J / (2 eps^2))``;
the prior on each stiffness factor is log-normal with mean one.

TMCMC follows Ching & Chen (2007): tempering from prior to posterior
with the exponent increment chosen so that the plausibility weights
reach a target coefficient of variation, resampling in proportion to the
weights and one Metropolis-Hastings move per particle with a Gaussian
proposal scaled from the weighted sample covariance.
"""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import bisect
from scipy.special import logsumexp

from .errors import ConfigurationError, ConvergenceError, DomainError, SubstructError
from .modal import DEFAULT_N_MODES, ModalData, generalized_eig, match_modes, objective_j
from .model import DamageState, as_damage_state, damaged_full_model, global_layout

logger = logging.getLogger(__name__)

THREADS_ENV = "SUBSTRUCT_THREADS"
EXTRA_CANDIDATE_MODES = 4


# --------------------------------------------------------------------------
# prior


@dataclass(frozen=True)
class PriorSpec:
    """Independent log-normal priors on the stiffness factors.

    Defaults give ``log_sigma = 0.5`` and ``log_mean = -0.125``, so each
    factor has mean exactly one.
    """

    log_mean: tuple = (-0.125, -0.125)
    log_sigma: tuple = (0.5, 0.5)

    def __post_init__(self):
        log_mean = tuple(float(v) for v in np.atleast_1d(self.log_mean))
        log_sigma = tuple(float(v) for v in np.atleast_1d(self.log_sigma))
        if len(log_mean) != len(log_sigma):
            raise ConfigurationError("log_mean and log_sigma must have the same length")
        if not all(s > 0 for s in log_sigma):
            raise ConfigurationError("log_sigma must be > 0")
        object.__setattr__(self, "log_mean", log_mean)
        object.__setattr__(self, "log_sigma", log_sigma)

    @classmethod
    def with_unit_mean(cls, log_sigma=0.5, n_params=2):
        return cls((-0.5 * log_sigma**2,) * n_params, (log_sigma,) * n_params)

    @property
    def n_params(self):
        return len(self.log_mean)

    @property
    def mean(self):
        mu, s = np.array(self.log_mean), np.array(self.log_sigma)
        return np.exp(mu + 0.5 * s**2)

    @property
    def mode(self):
        mu, s = np.array(self.log_mean), np.array(self.log_sigma)
        return np.exp(mu - s**2)

    def log_density(self, theta):
        """Log-density of one parameter vector or of each row of a 2-D array."""
        theta = np.asarray(theta, dtype=float)
        mu, s = np.array(self.log_mean), np.array(self.log_sigma)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_t = np.log(np.where(theta > 0, theta, np.nan))
            terms = -log_t - np.log(s * math.sqrt(2.0 * math.pi)) - (log_t - mu) ** 2 / (2.0 * s**2)
        out = np.sum(terms, axis=-1)
        bad = np.any(~(theta > 0), axis=-1)
        return np.where(bad, -np.inf, out)

    def sample(self, rng, n):
        return np.exp(rng.normal(self.log_mean, self.log_sigma, size=(n, self.n_params)))


def log_prior(theta, spec):
    """Sum of log-normal log-densities; ``-inf`` outside ``theta > 0``."""
    return float(spec.log_density(np.asarray(theta, dtype=float)))


@dataclass(frozen=True)
class GaussianPrior:
    """Multivariate normal prior, mainly for checking the sampler."""

    mean: tuple
    cov: tuple

    @property
    def n_params(self):
        return len(self.mean)

    def log_density(self, theta):
        theta = np.asarray(theta, dtype=float)
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        chol = la.cholesky(cov, lower=True)
        d = np.atleast_2d(theta) - mean
        z = la.solve_triangular(chol, d.T, lower=True)
        out = (-0.5 * np.sum(z * z, axis=0) - np.sum(np.log(np.diag(chol)))
               - 0.5 * mean.size * math.log(2.0 * math.pi))
        return out if theta.ndim == 2 else float(out[0])

    def sample(self, rng, n):
        return rng.multivariate_normal(self.mean, self.cov, size=n)


# --------------------------------------------------------------------------
# likelihood


@dataclass(frozen=True, eq=False)
class LikelihoodSpec:
    """Settings of the modal likelihood ``exp(-J / (2 beta_error^2))``."""

    data: ModalData
    n_modes: int = DEFAULT_N_MODES
    beta_error: float = 0.01
    reduction_method: str = "CB"

    def __post_init__(self):
        if self.beta_error <= 0:
            raise ConfigurationError("beta_error must be > 0")
        if self.n_modes < 1:
            raise ConfigurationError("n_modes must be >= 1")
        if self.reduction_method.upper() not in ("CB", "DCB"):
            raise ConfigurationError(f"unknown reduction method '{self.reduction_method}'")
        if self.data.n_modes < self.n_modes:
            raise ConfigurationError(f"data hold {self.data.n_modes} modes, {self.n_modes} required")


def predict_modes(assembly, theta, n_modes, extra=EXTRA_CANDIDATE_MODES):
    """Modes of the reduced model at ``theta`` on the assembled-structure DOFs.

    ``extra`` additional modes are returned when available so that
    matching can pick up modes that changed order.
    """
    system = assembly.at(theta)
    n_total = min(n_modes + extra, system.n_dofs)
    try:
        return system.physical_modes(n_total)
    except SubstructError:
        if n_total == n_modes:
            raise
        return system.physical_modes(n_modes)


def modal_objective(assembly, theta, data, n_modes):
    """``J`` of the reduced model at ``theta`` against ``data`` after MAC matching."""
    model = predict_modes(assembly, theta, n_modes)
    ref = data.head(n_modes)
    match = match_modes(ref, model)
    return objective_j(model.take(match.permutation), ref, n_modes)


class ModalLikelihood:
    """Log-likelihood callable bound to one reduced assembly.

    Thread-safe; evaluations are counted in ``n_evaluations``.
    """

    def __init__(self, spec, assembly):
        if assembly.method != spec.reduction_method.upper():
            raise ConfigurationError(
                f"assembly method {assembly.method} does not match {spec.reduction_method}")
        self.spec = spec
        self.assembly = assembly
        self.n_evaluations = 0
        self._lock = threading.Lock()

    def objective(self, theta):
        return modal_objective(self.assembly, theta, self.spec.data, self.spec.n_modes)

    def __call__(self, theta):
        with self._lock:
            self.n_evaluations += 1
        try:
            J = self.objective(theta)
        except (SubstructError, np.linalg.LinAlgError, ValueError) as exc:
            logger.debug("likelihood rejected theta=%s: %s", np.asarray(theta), exc)
            return -math.inf
        return -J / (2.0 * self.spec.beta_error**2)


def log_likelihood(theta, spec, basis):
    """``-J / (2 eps^2)`` of the reduced model ``basis`` at ``theta``.

    ``basis`` is a `CbAssembly` or `DcbAssembly`. Pathological ``theta``
    (solver failure) gives ``-inf``.
    """
    return ModalLikelihood(spec, basis)(theta)


def synthesize_data(lower, upper, interface, theta, n_modes=DEFAULT_N_MODES,
                    noise=0.0, seed=None):
    """Modal data of the unreduced damaged structure.

    ``noise`` is a relative standard deviation applied to the eigenvalues;
    the default is noise-free.
    """
    theta = as_damage_state(theta)
    M, K = damaged_full_model(lower, upper, interface, theta)
    layout = global_layout(lower, upper, interface)
    data = generalized_eig(K, M, n_modes, layout.dof_labels)
    if noise > 0:
        rng = np.random.default_rng(seed)
        lam = data.eigenvalues * (1.0 + noise * rng.standard_normal(data.n_modes))
        data = ModalData(lam, data.mode_shapes, data.dof_labels, {"noise": noise})
    return data


# --------------------------------------------------------------------------
# TMCMC


@dataclass(frozen=True)
class TmcmcConfig:
    n_samples: int = 1000
    target_cov: float = 1.0
    proposal_scale: float = 0.2
    max_stages: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 100:
            raise ConfigurationError("n_samples must be >= 100")
        if not 0 < self.proposal_scale < 1:
            raise ConfigurationError("proposal_scale must lie in (0, 1)")
        if self.target_cov <= 0:
            raise ConfigurationError("target_cov must be > 0")
        if self.max_stages < 1:
            raise ConfigurationError("max_stages must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class PosteriorSample:
    theta: DamageState
    log_likelihood: float
    log_prior: float
    stage: int


@dataclass(frozen=True, eq=False)
class Stage:
    """Particle cloud at the end of one tempering stage."""

    index: int
    exponent: float
    theta: np.ndarray
    log_prior: np.ndarray
    log_likelihood: np.ndarray
    acceptance_rate: float = math.nan
    log_evidence_increment: float = 0.0

    def samples(self):
        for t, lp, ll in zip(self.theta, self.log_prior, self.log_likelihood):
            yield PosteriorSample(DamageState(tuple(t), len(t)), float(ll), float(lp), self.index)


@dataclass(frozen=True, eq=False)
class TmcmcResult:
    stages: list
    log_evidence: float
    n_evaluations: int
    wall_time: float = 0.0

    @property
    def final(self):
        return self.stages[-1]

    @property
    def exponents(self):
        return [s.exponent for s in self.stages]


def worker_count(default=1):
    """Worker pool size from ``SUBSTRUCT_THREADS`` (at least one)."""
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be an integer, got '{raw}'") from None


def _weight_cov(log_like, dp):
    finite = np.isfinite(log_like)
    w = np.zeros_like(log_like)
    w[finite] = np.exp(dp * (log_like[finite] - log_like[finite].max()))
    return np.std(w) / np.mean(w)


def next_exponent_increment(log_like, exponent, target_cov):
    """Tempering increment whose plausibility weights have the target CoV.

    The increment is capped at ``1 - exponent``.
    """
    remaining = 1.0 - exponent
    if not np.any(np.isfinite(log_like)):
        raise DomainError("every particle has zero likelihood")
    if _weight_cov(log_like, remaining) <= target_cov:
        return remaining
    return bisect(lambda dp: _weight_cov(log_like, dp) - target_cov, 0.0, remaining,
                  xtol=1e-14, rtol=1e-12, maxiter=200)


def systematic_resample(weights, rng):
    """Indices drawn in proportion to ``weights`` with one uniform offset."""
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions, side="right")


def _stream(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=key))


def _evaluate(log_likelihood_fn, thetas, pool):
    if pool is None:
        return np.array([log_likelihood_fn(t) for t in thetas], dtype=float)
    return np.array(list(pool.map(log_likelihood_fn, thetas)), dtype=float)


def tmcmc(prior, likelihood, config=None, workers=None, progress=None):
    """Sample the posterior by Transitional MCMC.

    Parameters
    ----------
    prior : PriorSpec or GaussianPrior
        Any object with ``log_density(theta)`` and ``sample(rng, n)``.
    likelihood : callable
        ``theta -> log-likelihood``; may return ``-inf``.
    config : TmcmcConfig
    workers : int, optional
        Likelihood worker threads; defaults to ``SUBSTRUCT_THREADS`` or 1.
    progress : callable, optional
        Called with each finished `Stage`.

    Returns
    -------
    TmcmcResult
        Stage 0 holds the prior draws; the last stage has exponent 1.

    Raises
    ------
    ConvergenceError
        The exponent has not reached 1 after ``max_stages`` stages.

    Notes
    -----
    Every random draw comes from a stream keyed by (seed, stage, particle),
    so results do not depend on the number of workers.
    """
    config = config or TmcmcConfig()
    workers = worker_count() if workers is None else max(1, int(workers))
    start = time.perf_counter()
    n = config.n_samples
    seed = config.seed
    n_evals = 0

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        theta = np.asarray(prior.sample(_stream(seed, 0), n), dtype=float)
        lp = np.asarray(prior.log_density(theta), dtype=float)
        ll = _evaluate(likelihood, theta, pool)
        n_evals += n
        stages = [Stage(0, 0.0, theta, lp, ll)]
        if progress:
            progress(stages[-1])
        exponent = 0.0
        log_evidence = 0.0
        d = theta.shape[1]

        for j in range(1, config.max_stages + 1):
            dp = next_exponent_increment(ll, exponent, config.target_cov)
            new_exponent = 1.0 if 1.0 - (exponent + dp) < 1e-12 else exponent + dp
            dp = new_exponent - exponent

            log_w = np.where(np.isfinite(ll), dp * ll, -np.inf)
            increment = float(logsumexp(log_w) - math.log(n))
            log_evidence += increment
            weights = np.exp(log_w - logsumexp(log_w))

            mean = weights @ theta
            centred = theta - mean
            cov = config.proposal_scale**2 * (centred.T * weights) @ centred
            cov = 0.5 * (cov + cov.T)
            jitter = 1e-12 * max(np.trace(cov) / d, 1e-300)
            chol = la.cholesky(cov + jitter * np.eye(d), lower=True)

            idx = systematic_resample(weights, _stream(seed, j, n))
            theta, lp, ll = theta[idx], lp[idx], ll[idx]

            proposals = np.empty_like(theta)
            log_u = np.empty(n)
            for k in range(n):
                rng = _stream(seed, j, k)
                proposals[k] = theta[k] + chol @ rng.standard_normal(d)
                log_u[k] = math.log(rng.random())
            lp_new = np.asarray(prior.log_density(proposals), dtype=float)
            ll_new = np.full(n, -np.inf)
            ok = np.isfinite(lp_new)
            ll_new[ok] = _evaluate(likelihood, proposals[ok], pool)
            n_evals += int(ok.sum())

            with np.errstate(invalid="ignore"):
                log_ratio = (lp_new + new_exponent * ll_new) - (lp + new_exponent * ll)
            accept = ok & np.isfinite(ll_new) & (log_u < log_ratio)
            theta = np.where(accept[:, None], proposals, theta)
            lp = np.where(accept, lp_new, lp)
            ll = np.where(accept, ll_new, ll)

            exponent = new_exponent
            stages.append(Stage(j, exponent, theta, lp, ll, float(accept.mean()), increment))
            logger.info("TMCMC stage %d: exponent %.6g, acceptance %.3f", j, exponent, accept.mean())
            if progress:
                progress(stages[-1])
            if exponent >= 1.0:
                return TmcmcResult(stages, log_evidence, n_evals, time.perf_counter() - start)
    finally:
        if pool is not None:
            pool.shutdown()
    raise ConvergenceError(f"TMCMC did not finish within {config.max_stages} stages", exponent)


# --------------------------------------------------------------------------
# summaries


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    mean: np.ndarray
    std: np.ndarray
    map: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    map_log_likelihood: float
    map_log_prior: float

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "map": self.map.tolist(),
            "ci95_low": self.ci_low.tolist(),
            "ci95_high": self.ci_high.tolist(),
            "map_log_likelihood": self.map_log_likelihood,
            "map_log_prior": self.map_log_prior,
        }


def posterior_summary(theta, log_prior_values=None, log_likelihood_values=None):
    """Mean, std, MAP and 95 % intervals of a particle set.

    ``theta`` may also be a `Stage`, whose stored log values are used.
    The MAP is the particle with the largest ``log_prior + log_likelihood``.
    """
    if isinstance(theta, Stage):
        theta, log_prior_values, log_likelihood_values = theta.theta, theta.log_prior, theta.log_likelihood
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    if theta.size == 0:
        raise DomainError("cannot summarise an empty sample set")
    n = theta.shape[0]
    lp = np.zeros(n) if log_prior_values is None else np.asarray(log_prior_values, dtype=float)
    ll = np.zeros(n) if log_likelihood_values is None else np.asarray(log_likelihood_values, dtype=float)
    best = int(np.argmax(lp + ll))
    return PosteriorSummary(
        mean=theta.mean(axis=0),
        std=theta.std(axis=0),
        map=theta[best].copy(),
        ci_low=np.quantile(theta, 0.025, axis=0),
        ci_high=np.quantile(theta, 0.975, axis=0),
        map_log_likelihood=float(ll[best]),
        map_log_prior=float(lp[best]),
    )
