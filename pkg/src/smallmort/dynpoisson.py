"""Hierarchical dynamic Poisson model fit by Metropolis-within-Gibbs.

    Y[i,x] ~ Poisson(E[i,x] * theta[i,x])
    log theta[i,x] = beta[i,x] + mu[i] * S[x]
    beta[i,0] | beta0[i]    ~ N(beta0[i], precision tau_beta)
    beta[i,x] | beta[i,x-1] ~ N(beta[i,x-1], precision tau_beta)
    mu[i]                   ~ N(0, precision tau_mu)
    tau_beta, tau_mu        ~ Gamma(a, b)   (shape, rate)
    beta0[i]                ~ N(0, precision init_precision)

The precisions are shared by all populations. Each beta[i,x] and mu[i] is
updated by random-walk Metropolis; beta0 and the precisions by conjugate
Gibbs draws.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln

from smallmort.core import FitResult, MortalityDataset, StandardSchedule, stack_standards

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class DynPoissonConfig:
    chains: int = 2
    burn_in: int = 100_000
    thin: int = 5000
    keep: int = 2000
    seed: int = 0
    proposal_scale_beta: float = 0.1
    proposal_scale_mu: float = 0.05
    adapt: bool = True
    prior_a: float = 0.01
    prior_b: float = 0.01
    init_precision: float = 100.0
    # Starting precisions; with sample_precisions=False they stay fixed.
    init_tau_beta: float = 100.0
    init_tau_mu: float = 1.0
    sample_precisions: bool = True
    target_acceptance: float = 0.44
    threads: int = 1

    def __post_init__(self):
        for name in ("chains", "thin", "keep", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.burn_in < 0:
            raise ValueError("burn_in must be non-negative")
        for name in (
            "proposal_scale_beta",
            "proposal_scale_mu",
            "prior_a",
            "prior_b",
            "init_precision",
            "init_tau_beta",
            "init_tau_mu",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must lie in (0, 1)")


@dataclass
class DynPoissonState:
    """Latent values of one sampler sweep. Update functions modify it in place."""

    beta: np.ndarray
    beta0: np.ndarray
    mu: np.ndarray
    tau_beta: float
    tau_mu: float

    def copy(self) -> "DynPoissonState":
        return DynPoissonState(
            self.beta.copy(), self.beta0.copy(), self.mu.copy(), self.tau_beta, self.tau_mu
        )

    def log_theta(self, S: np.ndarray) -> np.ndarray:
        return self.beta + self.mu[:, None] * S


@dataclass(frozen=True, eq=False)
class PosteriorSamples:
    """Thinned draws indexed by (chain, iteration)."""

    beta: np.ndarray  # (chains, keep, n, A)
    beta0: np.ndarray  # (chains, keep, n)
    mu: np.ndarray  # (chains, keep, n)
    tau_beta: np.ndarray  # (chains, keep)
    tau_mu: np.ndarray  # (chains, keep)
    acceptance_rates: dict
    config: DynPoissonConfig
    population_ids: tuple = ()
    sexes: tuple = ()

    @property
    def n_chains(self) -> int:
        return self.beta.shape[0]

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0] * self.beta.shape[1]

    def state(self, chain: int, iteration: int) -> DynPoissonState:
        return DynPoissonState(
            self.beta[chain, iteration].copy(),
            self.beta0[chain, iteration].copy(),
            self.mu[chain, iteration].copy(),
            float(self.tau_beta[chain, iteration]),
            float(self.tau_mu[chain, iteration]),
        )

    @property
    def draws(self):
        for c in range(self.beta.shape[0]):
            for t in range(self.beta.shape[1]):
                yield (c, t), self.state(c, t)

    def log_theta(self, S: np.ndarray) -> np.ndarray:
        """(chains * keep, n, A) draws of the log-rates."""
        lt = self.beta + self.mu[..., None] * S
        return lt.reshape((-1,) + lt.shape[2:])


def _arrays(dataset, standard):
    if isinstance(dataset, MortalityDataset):
        Y = dataset.deaths.astype(float)
        E = dataset.exposures
        S = stack_standards(standard, len(dataset), dataset.age_grid)
    else:
        Y, E = (np.atleast_2d(np.asarray(a, dtype=float)) for a in dataset)
        S = np.broadcast_to(np.asarray(standard, dtype=float), Y.shape)
    return Y, E, S


def log_likelihood(state: DynPoissonState, dataset, standard) -> float:
    """Poisson log-likelihood without the log(Y!) terms.

    ``dataset`` is a MortalityDataset or a (deaths, exposures) pair of arrays.
    """
    Y, E, S = _arrays(dataset, standard)
    eta = state.log_theta(S)
    keep = E > 0
    return float(np.sum(Y[keep] * (np.log(E[keep]) + eta[keep]) - E[keep] * np.exp(eta[keep])))


def _normal_logpdf(x, precision):
    return 0.5 * (np.log(precision) - LOG_2PI) - 0.5 * precision * np.square(x)


def _gamma_logpdf(x, a, b):
    return a * math.log(b) - gammaln(a) + (a - 1) * math.log(x) - b * x


def log_prior(
    state: DynPoissonState, prior_a=0.01, prior_b=0.01, init_precision=100.0
) -> float:
    increments = np.diff(np.column_stack([state.beta0, state.beta]), axis=1)
    lp = np.sum(_normal_logpdf(increments, state.tau_beta))
    lp += np.sum(_normal_logpdf(state.mu, state.tau_mu))
    lp += np.sum(_normal_logpdf(state.beta0, init_precision))
    lp += _gamma_logpdf(state.tau_beta, prior_a, prior_b)
    lp += _gamma_logpdf(state.tau_mu, prior_a, prior_b)
    return float(lp)


def metropolis_accept(log_ratio, log_u) -> np.ndarray:
    """Symmetric-proposal MH rule: accept iff log(u) < min(0, log_ratio)."""
    return np.asarray(log_u) < np.minimum(0.0, log_ratio)


def _beta_site_logpost(b, y, e_mu, left, right, tau):
    # e_mu = E * exp(mu * S); right is NaN-free with zero weight at the last age.
    lp = y * b - e_mu * np.exp(b) - 0.5 * tau * np.square(b - left)
    return lp - 0.5 * tau * right[1] * np.square(right[0] - b)


def update_beta(state: DynPoissonState, Y, E, S, rng, scales) -> np.ndarray:
    """One single-site Metropolis pass over every beta[i,x]; returns n x A accept flags.

    Even ages are visited first, then odd ages. Sites of equal parity are
    conditionally independent given the others, so each half is updated at
    once without changing the target of any site's move.
    """
    n, A = state.beta.shape
    scales = np.broadcast_to(scales, (n, A))
    e_mu = E * np.exp(state.mu[:, None] * S)
    accepted = np.zeros((n, A), dtype=bool)
    tau = state.tau_beta
    for parity in (0, 1):
        idx = np.arange(parity, A, 2)
        beta = state.beta
        cur = beta[:, idx]
        left = np.where(idx > 0, beta[:, np.maximum(idx - 1, 0)], state.beta0[:, None])
        has_right = idx < A - 1
        right_val = beta[:, np.minimum(idx + 1, A - 1)]
        right = (right_val, has_right.astype(float))
        prop = cur + scales[:, idx] * rng.standard_normal(cur.shape)
        y, em = Y[:, idx], e_mu[:, idx]
        log_ratio = _beta_site_logpost(prop, y, em, left, right, tau) - _beta_site_logpost(
            cur, y, em, left, right, tau
        )
        acc = metropolis_accept(log_ratio, np.log(rng.random(cur.shape)))
        beta[:, idx] = np.where(acc, prop, cur)
        accepted[:, idx] = acc
    return accepted


def _mu_logpost(m, Y, E, S, beta, tau_mu):
    return np.sum(Y * m[:, None] * S - E * np.exp(beta + m[:, None] * S), axis=1) - (
        0.5 * tau_mu * np.square(m)
    )


def update_mu(state: DynPoissonState, Y, E, S, rng, scale) -> np.ndarray:
    """Random-walk Metropolis on each mu[i]; returns length-n accept flags."""
    cur = state.mu
    prop = cur + np.broadcast_to(scale, cur.shape) * rng.standard_normal(cur.shape)
    log_ratio = _mu_logpost(prop, Y, E, S, state.beta, state.tau_mu) - _mu_logpost(
        cur, Y, E, S, state.beta, state.tau_mu
    )
    acc = metropolis_accept(log_ratio, np.log(rng.random(cur.shape)))
    state.mu = np.where(acc, prop, cur)
    return acc


def update_beta0(state: DynPoissonState, init_precision, tau_beta, rng) -> None:
    """Conjugate normal draw of each beta0[i] given beta[i,0]."""
    prec = init_precision + tau_beta
    mean = tau_beta * state.beta[:, 0] / prec
    state.beta0 = mean + rng.standard_normal(mean.shape) / math.sqrt(prec)


def precision_posteriors(state: DynPoissonState, prior_a=0.01, prior_b=0.01):
    """(shape, rate) of the Gamma full conditionals of tau_beta and tau_mu."""
    n, A = state.beta.shape
    increments = np.diff(np.column_stack([state.beta0, state.beta]), axis=1)
    beta_post = (prior_a + 0.5 * n * A, prior_b + 0.5 * float(np.sum(np.square(increments))))
    mu_post = (prior_a + 0.5 * n, prior_b + 0.5 * float(np.sum(np.square(state.mu))))
    return beta_post, mu_post


def update_precisions(state: DynPoissonState, prior_a, prior_b, init_precision, rng) -> None:
    # init_precision is accepted for signature symmetry; beta0 has its own update.
    (ab, bb), (am, bm) = precision_posteriors(state, prior_a, prior_b)
    state.tau_beta = float(rng.gamma(ab, 1.0 / bb))
    state.tau_mu = float(rng.gamma(am, 1.0 / bm))


def initial_state(Y, E, S, config: DynPoissonConfig, rng=None) -> DynPoissonState:
    """Start every population at the standard shifted by its best flat offset."""
    n, A = Y.shape
    expected = np.sum(E * np.exp(S), axis=1)
    total = np.sum(Y, axis=1)
    level = np.zeros(n)
    ok = expected > 0
    level[ok] = np.log(np.maximum(total[ok], 0.5) / expected[ok])
    beta = np.repeat(level[:, None], A, axis=1)
    if rng is not None:
        beta = beta + 0.05 * rng.standard_normal(beta.shape)
    return DynPoissonState(
        beta=beta,
        beta0=np.zeros(n),
        mu=np.ones(n),
        tau_beta=float(config.init_tau_beta),
        tau_mu=float(config.init_tau_mu),
    )


def _run_chain(Y, E, S, config: DynPoissonConfig, seed_seq, init: Optional[DynPoissonState]):
    rng = np.random.default_rng(seed_seq)
    state = init.copy() if init is not None else initial_state(Y, E, S, config, rng)
    n, A = Y.shape
    log_sb = np.full((n, A), math.log(config.proposal_scale_beta))
    log_sm = np.full(n, math.log(config.proposal_scale_mu))
    target = config.target_acceptance

    keep = config.keep
    out_beta = np.empty((keep, n, A))
    out_beta0 = np.empty((keep, n))
    out_mu = np.empty((keep, n))
    out_tb = np.empty(keep)
    out_tm = np.empty(keep)
    acc_beta = 0.0
    acc_mu = 0.0

    total = config.burn_in + config.thin * keep
    stored = 0
    for sweep in range(1, total + 1):
        burning = sweep <= config.burn_in
        ab = update_beta(state, Y, E, S, rng, np.exp(log_sb))
        am = update_mu(state, Y, E, S, rng, np.exp(log_sm))
        update_beta0(state, config.init_precision, state.tau_beta, rng)
        if config.sample_precisions:
            update_precisions(state, config.prior_a, config.prior_b, config.init_precision, rng)
        if burning:
            if config.adapt:
                gain = sweep ** -0.6
                log_sb += gain * (ab - target)
                log_sm += gain * (am - target)
            continue
        acc_beta += ab.mean()
        acc_mu += am.mean()
        k = sweep - config.burn_in
        if k % config.thin == 0:
            out_beta[stored] = state.beta
            out_beta0[stored] = state.beta0
            out_mu[stored] = state.mu
            out_tb[stored] = state.tau_beta
            out_tm[stored] = state.tau_mu
            stored += 1
    post = config.thin * keep
    return out_beta, out_beta0, out_mu, out_tb, out_tm, acc_beta / post, acc_mu / post


def run_mcmc(
    dataset: MortalityDataset,
    standard,
    config: DynPoissonConfig = DynPoissonConfig(),
    init: Optional[DynPoissonState] = None,
) -> PosteriorSamples:
    """Run ``config.chains`` independent chains; identical seeds give identical draws.

    Each chain draws from its own child of ``SeedSequence(config.seed)``.
    """
    if len(dataset) == 0:
        raise ValueError("dataset has no populations")
    Y, E, S = _arrays(dataset, standard)
    children = np.random.SeedSequence(config.seed).spawn(config.chains)
    if config.threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda ss: _run_chain(Y, E, S, config, ss, init), children))
    else:
        results = [_run_chain(Y, E, S, config, ss, init) for ss in children]
    beta, beta0, mu, tb, tm, acc_b, acc_m = (list(part) for part in zip(*results))
    return PosteriorSamples(
        beta=np.stack(beta),
        beta0=np.stack(beta0),
        mu=np.stack(mu),
        tau_beta=np.stack(tb),
        tau_mu=np.stack(tm),
        acceptance_rates={
            "beta": float(np.mean(acc_b)),
            "mu": float(np.mean(acc_m)),
            "beta_by_chain": [float(a) for a in acc_b],
            "mu_by_chain": [float(a) for a in acc_m],
        },
        config=config,
        population_ids=tuple(p.id for p in dataset.populations),
        sexes=tuple(p.sex for p in dataset.populations),
    )


def posterior_summary(
    samples: PosteriorSamples,
    dataset: MortalityDataset,
    standard,
    probs: Sequence[float] = (0.025, 0.975),
) -> list[FitResult]:
    """Pointwise posterior mean and quantile band of log theta per population."""
    n = samples.beta.shape[2]
    S = stack_standards(standard, n, dataset.age_grid)
    lt = samples.log_theta(S)
    mean = lt.mean(axis=0)
    lo, hi = np.quantile(lt, probs, axis=0)
    # Guard the mean-within-band contract against rounding in near-degenerate samples.
    lo = np.minimum(lo, mean)
    hi = np.maximum(hi, mean)
    return [
        FitResult(
            population_id=rec.id,
            sex=rec.sex,
            model="dyn-poisson",
            log_rates=mean[i],
            lower=lo[i],
            upper=hi[i],
            info={"acceptance": samples.acceptance_rates},
        )
        for i, rec in enumerate(dataset.populations)
    ]


def split_rhat(draws: np.ndarray) -> np.ndarray:
    """Split-chain potential scale reduction over axis 1 of (chains, draws, ...)."""
    draws = np.asarray(draws, dtype=float)
    half = draws.shape[1] // 2
    if half < 2:
        raise ValueError("need at least 4 draws per chain")
    split = np.concatenate([draws[:, :half], draws[:, half : 2 * half]], axis=0)
    m, t = split.shape[:2]
    chain_means = split.mean(axis=1)
    W = split.var(axis=1, ddof=1).mean(axis=0)
    B = t * chain_means.var(axis=0, ddof=1)
    var_plus = (t - 1) / t * W + B / t
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(np.where(W > 0, var_plus / W, 1.0))
