"""
Data-augmentation sampler for panel-observed two-state processes.

One sweep:

1. For every observation interval draw an honest-time pair (tau0, tau1) by
   rejection until the pair's indicator estimator reproduces the observed
   transition.  The indicator likelihood of the augmented data is then 1.
2. Given the augmentation, the joint density factorises into a channel-0
   part and a channel-1 part.  For each channel (0 first) update the shape
   by Metropolis-Hastings on its collapsed marginal (rate integrated against
   its Gamma prior) with a log-normal proposal, then draw the rate from its
   Gamma full conditional.  Constant rates skip the shape step.

Random streams are derived from a single seed: augmentation of block ``b``
at sweep ``i`` uses ``SeedSequence(seed, spawn_key=(0, i, b))`` and the
parameter updates at sweep ``i`` use ``spawn_key=(1, i)``.  Blocks have a
fixed size, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .honest_times import AugmentationExhausted, indicator_tpm_array, sample_constrained_pairs
from .panel_io import IntervalArrays, quantile
from .rate_models import ChannelPair, RateParams, cumulative_hazard, log_intensity_at
from .tpm_oracle import crude_initial_estimates

__all__ = [
    "MODELS",
    "PARAM_NAMES",
    "Prior",
    "ChainConfig",
    "ThetaState",
    "AugmentedData",
    "ChainOutput",
    "ChainAborted",
    "ParamSummary",
    "augment_all",
    "update_constant_channel",
    "weibull_log_accept_ratio",
    "collapsed_shape_log_target",
    "update_shape_channel",
    "update_weibull_channel",
    "update_gompertz_channel",
    "update_parameters",
    "run_chain",
    "posterior_summary",
    "truncation_report",
    "write_chain_csv",
    "read_chain_csv",
    "write_summary_csv",
]

log = logging.getLogger(__name__)

MODELS = ("constant", "weibull", "gompertz")
PARAM_NAMES = ("gamma0", "lambda0", "gamma1", "lambda1")
AUG_BLOCK = 1024


class ChainAborted(RuntimeError):
    """Too many intervals failed to augment within one sweep."""


@dataclass(frozen=True)
class Prior:
    """Independent Gamma(shape, rate) priors, one pair per channel.

    ``rate_a``/``rate_b`` govern lambda_k; ``shape_alpha``/``shape_beta``
    govern gamma_k.
    """

    rate_a: tuple = (0.1, 0.1)
    rate_b: tuple = (0.1, 0.1)
    shape_alpha: tuple = (1.0, 1.0)
    shape_beta: tuple = (1.0, 1.0)

    def __post_init__(self):
        for name in ("rate_a", "rate_b", "shape_alpha", "shape_beta"):
            v = getattr(self, name)
            if np.ndim(v) == 0:
                v = (float(v), float(v))
            v = tuple(float(x) for x in v)
            if len(v) != 2 or not all(x > 0 and np.isfinite(x) for x in v):
                raise ValueError(f"prior {name} must be two positive numbers, got {v}")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 5000
    burn_in: int = 1000
    proposal_sd: float = 0.1
    seed: int = 0
    thin: int = 1
    max_attempts: int = 10**6
    workers: int = 1
    adapt: bool = False
    target_accept: float = 0.3
    exhaustion_ceiling: float = 0.01
    check_augmentation: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(f"burn_in ({self.burn_in}) must be below iterations ({self.iterations})")
        if not self.proposal_sd > 0:
            raise ValueError("proposal_sd must be positive")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")


@dataclass(frozen=True)
class ThetaState:
    gamma0: float
    lambda0: float
    gamma1: float
    lambda1: float

    def __post_init__(self):
        if not all(v > 0 and np.isfinite(v) for v in self.as_array()):
            raise ValueError(f"parameters must be positive and finite: {self}")

    def as_array(self):
        return np.array([self.gamma0, self.lambda0, self.gamma1, self.lambda1], dtype=float)

    def shape(self, k):
        return self.gamma0 if k == 0 else self.gamma1

    def rate(self, k):
        return self.lambda0 if k == 0 else self.lambda1

    def channels(self, model):
        if model == "constant":
            return ChannelPair(RateParams.constant(self.lambda0), RateParams.constant(self.lambda1))
        return ChannelPair(RateParams(model, self.gamma0, self.lambda0),
                           RateParams(model, self.gamma1, self.lambda1))

    def with_channel(self, k, shape, rate):
        if k == 0:
            return replace(self, gamma0=float(shape), lambda0=float(rate))
        return replace(self, gamma1=float(shape), lambda1=float(rate))


@dataclass(frozen=True, eq=False)
class AugmentedData:
    """Observation intervals with one accepted honest-time pair each."""

    intervals: IntervalArrays
    tau0: np.ndarray
    tau1: np.ndarray
    attempts: np.ndarray
    exhausted: np.ndarray

    def tau(self, k):
        return self.tau0 if k == 0 else self.tau1

    def eta(self, k):
        return self.tau(k) > self.intervals.t_prev

    def truncation_fraction(self, k):
        if len(self.intervals) == 0:
            return float("nan")
        return float(1.0 - self.eta(k).mean())

    def augmented_likelihood(self):
        """Product over intervals of the indicator entry picked by the observed states."""
        iv = self.intervals
        if len(iv) == 0:
            return 1.0
        P = indicator_tpm_array(self.tau0, self.tau1)
        return float(np.prod(P[np.arange(len(iv)), iv.state_from, iv.state_to]))


def _as_intervals(data):
    return data if isinstance(data, IntervalArrays) else data.intervals()


def _block_rng(seed, sweep, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0, sweep, block))))


def _update_rng(seed, sweep):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, sweep))))


def augment_all(data, ch, rng=None, *, seed=None, sweep=0, workers=1,
                max_attempts=10**6, previous=None):
    """Draw a constrained honest-time pair for every observation interval.

    Either pass ``rng`` (one stream for all intervals) or ``seed``/``sweep``
    (fixed-size blocks with derived substreams, optionally run on
    ``workers`` threads).  Intervals that exhaust ``max_attempts`` keep their
    pair from ``previous``; without a previous augmentation that is an
    :class:`AugmentationExhausted` error.
    """
    iv = _as_intervals(data)
    n = len(iv)
    if rng is not None:
        parts = [sample_constrained_pairs(ch, iv.t_prev, iv.t_cur, iv.state_from, iv.state_to,
                                          rng, max_attempts)]
    else:
        if seed is None:
            raise ValueError("pass either rng or seed")
        starts = list(range(0, n, AUG_BLOCK))

        def run(b):
            sl = slice(starts[b], starts[b] + AUG_BLOCK)
            return sample_constrained_pairs(ch, iv.t_prev[sl], iv.t_cur[sl], iv.state_from[sl],
                                            iv.state_to[sl], _block_rng(seed, sweep, b), max_attempts)

        if workers > 1 and len(starts) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(run, range(len(starts))))
        else:
            parts = [run(b) for b in range(len(starts))]
    if parts:
        tau0, tau1, attempts, exhausted = (np.concatenate(x) for x in zip(*parts))
    else:
        tau0 = tau1 = np.empty(0)
        attempts = np.empty(0, dtype=np.int64)
        exhausted = np.empty(0, dtype=bool)
    if exhausted.any():
        if previous is None:
            bad = int(np.flatnonzero(exhausted)[0])
            raise AugmentationExhausted(
                f"interval {bad} ([{iv.t_prev[bad]}, {iv.t_cur[bad]}), "
                f"{iv.state_from[bad]}->{iv.state_to[bad]}) found no matching pair "
                f"in {max_attempts} attempts", int(attempts[bad]))
        tau0[exhausted] = previous.tau0[exhausted]
        tau1[exhausted] = previous.tau1[exhausted]
    return AugmentedData(iv, tau0, tau1, attempts, exhausted)


def update_constant_channel(aug, k, prior, rng):
    """Exact Gibbs draw of a constant rate.

    lambda_k ~ Gamma(a_k + sum eta, rate = b_k + sum (t - tau)).
    """
    t = aug.intervals.t_cur
    tau = aug.tau(k)
    shape = prior.rate_a[k] + aug.eta(k).sum()
    rate = prior.rate_b[k] + float(np.sum(t - tau))
    return float(rng.gamma(shape, 1.0 / rate))


def _events_and_exposure(aug, k, family, gamma):
    """(sum eta, sum over eta=1 of log g(tau), sum of H(tau, t)) at unit rate."""
    p = RateParams(family, gamma, 1.0)
    tau = aug.tau(k)
    eta = aug.eta(k)
    with np.errstate(over="ignore", invalid="ignore"):
        exposure = float(np.sum(cumulative_hazard(p, tau, aug.intervals.t_cur)))
    log_g = float(np.sum(log_intensity_at(p, tau[eta]))) if eta.any() else 0.0
    return int(eta.sum()), log_g, exposure


def collapsed_shape_log_target(aug, k, family, gamma, prior):
    """log p(gamma | augmentation) up to a constant, with the rate integrated out.

    log Gamma(gamma; alpha, beta) + sum_{eta=1} log g(tau; gamma)
        - (a + sum eta) log(b + sum H(tau, t; gamma)),
    where lambda(t) = rate * g(t; gamma) and H is the integral of g.
    """
    if gamma <= 0:
        return -np.inf
    alpha, beta = prior.shape_alpha[k], prior.shape_beta[k]
    a, b = prior.rate_a[k], prior.rate_b[k]
    n_ev, log_g, exposure = _events_and_exposure(aug, k, family, gamma)
    if not np.isfinite(exposure):
        return -np.inf
    return (alpha - 1) * math.log(gamma) - beta * gamma + log_g - (a + n_ev) * math.log(b + exposure)


def weibull_log_accept_ratio(aug, k, gamma, gamma_new, prior):
    """Metropolis-Hastings log-ratio for a log-normal Weibull shape proposal.

    (alpha + sum eta)(log g* - log g) + (-beta + sum eta log tau)(g* - g)
      + (a + sum eta) [log(b + S(g)) - log(b + S(g*))],
    S(g) = sum (t^g - tau^g).  The log-normal Jacobian is included.
    """
    alpha, beta = prior.shape_alpha[k], prior.shape_beta[k]
    a, b = prior.rate_a[k], prior.rate_b[k]
    tau = aug.tau(k)
    eta = aug.eta(k)
    n_ev = int(eta.sum())
    sum_log_tau = float(np.sum(np.log(tau[eta]))) if n_ev else 0.0
    t = aug.intervals.t_cur
    with np.errstate(over="ignore", invalid="ignore"):
        s_cur = float(np.sum(cumulative_hazard(RateParams.weibull(gamma, 1.0), tau, t)))
        s_new = float(np.sum(cumulative_hazard(RateParams.weibull(gamma_new, 1.0), tau, t)))
    if not (np.isfinite(s_cur) and np.isfinite(s_new)):
        return -np.inf
    return (
        (alpha + n_ev) * (math.log(gamma_new) - math.log(gamma))
        + (-beta + sum_log_tau) * (gamma_new - gamma)
        + (a + n_ev) * (math.log(b + s_cur) - math.log(b + s_new))
    )


@dataclass
class _ShapeStep:
    gamma: float
    rate: float
    accepted: bool
    overflow: bool = False


def update_shape_channel(aug, k, family, gamma_cur, prior, sigma, rng):
    """Collapsed MH step for the shape of channel k, then a Gibbs draw of its rate.

    Returns ``(gamma_new, rate_new, accepted)``.  A proposal whose exposure
    overflows is rejected (and logged).
    """
    step = _shape_step(aug, k, family, gamma_cur, prior, sigma, rng)
    return step.gamma, step.rate, step.accepted


def _shape_step(aug, k, family, gamma_cur, prior, sigma, rng):
    z = rng.standard_normal()
    u = rng.random()
    gamma_new = gamma_cur * math.exp(sigma * z)
    overflow = False
    if family == "weibull":
        ratio = weibull_log_accept_ratio(aug, k, gamma_cur, gamma_new, prior)
    else:
        ratio = (collapsed_shape_log_target(aug, k, family, gamma_new, prior)
                 - collapsed_shape_log_target(aug, k, family, gamma_cur, prior)
                 + math.log(gamma_new) - math.log(gamma_cur))
    if ratio == -np.inf:
        overflow = not np.isfinite(_events_and_exposure(aug, k, family, gamma_new)[2])
        if overflow:
            log.warning("shape proposal %.4g for channel %d overflowed; rejected", gamma_new, k)
    accepted = bool(np.log(u) < ratio)
    gamma = gamma_new if accepted else gamma_cur
    n_ev, _, exposure = _events_and_exposure(aug, k, family, gamma)
    rate = float(rng.gamma(prior.rate_a[k] + n_ev, 1.0 / (prior.rate_b[k] + exposure)))
    return _ShapeStep(gamma, rate, accepted, overflow)


def update_weibull_channel(aug, k, gamma_cur, prior, sigma, rng):
    return update_shape_channel(aug, k, "weibull", gamma_cur, prior, sigma, rng)


def update_gompertz_channel(aug, k, gamma_cur, prior, sigma, rng):
    return update_shape_channel(aug, k, "gompertz", gamma_cur, prior, sigma, rng)


def update_parameters(aug, theta, model, prior, sigma, rng):
    """Channel 0 then channel 1.  Returns ``(theta, accepted[2], overflows)``."""
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (2,))
    accepted = np.ones(2, dtype=bool)
    overflows = 0
    for k in (0, 1):
        if model == "constant":
            theta = theta.with_channel(k, 1.0, update_constant_channel(aug, k, prior, rng))
        else:
            step = _shape_step(aug, k, model, theta.shape(k), prior, float(sigma[k]), rng)
            theta = theta.with_channel(k, step.gamma, step.rate)
            accepted[k] = step.accepted
            overflows += step.overflow
    return theta, accepted, overflows


def initial_theta(panel, model):
    """Crude rates from observed state changes, unit shapes."""
    l0, l1 = crude_initial_estimates(panel)
    if model == "gompertz":
        # unit shape is a steep exponential growth for gompertz; start near flat
        return ThetaState(1e-3, l0, 1e-3, l1)
    return ThetaState(1.0, l0, 1.0, l1)


@dataclass(eq=False)
class ChainOutput:
    """Full trace of a run.

    ``draws`` holds one row per sweep (``PARAM_NAMES`` order); retained rows
    are those from ``burn_in`` on, every ``thin``-th.
    """

    model: str
    draws: np.ndarray
    accepted: np.ndarray
    truncation: np.ndarray
    iterations: np.ndarray
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    attempts_total: int = 0
    exhausted_total: int = 0
    overflow_rejections: int = 0
    likelihood_checks: int = 0
    proposal_sd: tuple = (float("nan"), float("nan"))
    meta: dict = field(default_factory=dict)

    @property
    def kept(self):
        return np.flatnonzero((self.iterations >= self.burn_in)
                              & ((self.iterations - self.burn_in) % self.thin == 0))

    def kept_draws(self):
        return self.draws[self.kept]

    def acceptance_rate(self):
        k = self.kept
        return self.accepted[k].mean(axis=0) if k.size else np.full(2, np.nan)

    def same_as(self, other):
        """Bitwise equality of draws and diagnostics."""
        return (
            self.model == other.model
            and np.array_equal(self.draws, other.draws)
            and np.array_equal(self.accepted, other.accepted)
            and np.array_equal(self.truncation, other.truncation)
            and self.attempts_total == other.attempts_total
        )


def run_chain(panel, model="weibull", prior=None, cfg=None, theta0=None, progress=None):
    """Run the augmentation sampler on a panel.

    Parameters
    ----------
    panel : PanelDataset
    model : {'constant', 'weibull', 'gompertz'}
    prior : Prior, optional
    cfg : ChainConfig, optional
    theta0 : ThetaState, optional
        Starting point; defaults to crude rates with unit shapes.
    progress : callable, optional
        Called as ``progress(sweep, theta)`` after each sweep.

    Raises
    ------
    ChainAborted
        When more than ``cfg.exhaustion_ceiling`` of the intervals exhaust
        their attempt budget in one sweep.
    """
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}")
    prior = Prior() if prior is None else prior
    cfg = ChainConfig() if cfg is None else cfg
    iv = panel.intervals()
    if len(iv) == 0:
        raise ValueError("panel has no observation intervals")
    theta = initial_theta(panel, model) if theta0 is None else theta0
    if model == "constant":
        theta = replace(theta, gamma0=1.0, gamma1=1.0)

    n_it = cfg.iterations
    draws = np.empty((n_it, 4))
    accepted = np.zeros((n_it, 2), dtype=bool)
    trunc = np.empty((n_it, 2))
    sigma = np.array([cfg.proposal_sd, cfg.proposal_sd])
    window_acc = np.zeros(2)
    attempts_total = exhausted_total = overflow_total = checks = 0
    aug = None
    for i in range(n_it):
        ch = theta.channels(model)
        try:
            aug = augment_all(iv, ch, seed=cfg.seed, sweep=i, workers=cfg.workers,
                              max_attempts=cfg.max_attempts, previous=aug)
        except AugmentationExhausted as exc:
            raise ChainAborted(f"initial augmentation failed at sweep {i}: {exc}") from exc
        n_exh = int(aug.exhausted.sum())
        if n_exh:
            exhausted_total += n_exh
            log.warning("sweep %d: %d intervals kept their previous augmentation", i, n_exh)
            if n_exh > cfg.exhaustion_ceiling * len(iv):
                raise ChainAborted(
                    f"sweep {i}: {n_exh} of {len(iv)} intervals exhausted "
                    f"{cfg.max_attempts} attempts (theta={theta})")
        if cfg.check_augmentation and aug.augmented_likelihood() != 1.0:
            raise AssertionError(f"sweep {i}: augmented likelihood differs from 1")
        checks += bool(cfg.check_augmentation)
        attempts_total += int(aug.attempts.sum())
        trunc[i] = (aug.truncation_fraction(0), aug.truncation_fraction(1))

        theta, acc, ovf = update_parameters(aug, theta, model, prior, sigma, _update_rng(cfg.seed, i))
        overflow_total += ovf
        draws[i] = theta.as_array()
        accepted[i] = acc

        if cfg.adapt and model != "constant" and i < cfg.burn_in:
            window_acc += acc
            if (i + 1) % 50 == 0:
                sigma = sigma * np.exp(window_acc / 50 - cfg.target_accept)
                window_acc[:] = 0
        if progress is not None:
            progress(i, theta)

    return ChainOutput(
        model=model, draws=draws, accepted=accepted, truncation=trunc,
        iterations=np.arange(n_it), burn_in=cfg.burn_in, thin=cfg.thin, seed=cfg.seed,
        attempts_total=attempts_total, exhausted_total=exhausted_total,
        overflow_rejections=overflow_total, likelihood_checks=checks, proposal_sd=tuple(float(s) for s in sigma),
        meta={"intervals": len(iv), "subjects": len(panel.subjects)},
    )


@dataclass(frozen=True)
class ParamSummary:
    median: float
    lo95: float
    hi95: float


def posterior_summary(chain):
    """Median and 2.5% / 97.5% quantiles of each retained parameter draw.

    Quantiles use linear interpolation between order statistics at
    position (n - 1) q.
    """
    x = chain.kept_draws() if isinstance(chain, ChainOutput) else np.asarray(chain, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise ValueError("no retained draws to summarise")
    q = quantile(x, [0.5, 0.025, 0.975])
    names = PARAM_NAMES if x.shape[1] == 4 else tuple(f"x{j}" for j in range(x.shape[1]))
    return {n: ParamSummary(float(q[0, j]), float(q[1, j]), float(q[2, j])) for j, n in enumerate(names)}


def truncation_report(chain):
    """Mean fraction of truncated honest times per channel over retained sweeps."""
    k = chain.kept
    if k.size == 0:
        raise ValueError("no retained sweeps")
    m = chain.truncation[k].mean(axis=0)
    return float(m[0]), float(m[1])


CHAIN_COLUMNS = ("iteration",) + PARAM_NAMES + ("accept0", "accept1", "trunc0", "trunc1")


def _open_w(dest):
    return (open(dest, "w", newline=""), True) if isinstance(dest, (str, os.PathLike)) else (dest, False)


def write_chain_csv(chain, dest, comment=None):
    """Retained draws and per-sweep diagnostics as CSV."""
    fh, owned = _open_w(dest)
    try:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(",".join(CHAIN_COLUMNS) + "\n")
        for i in chain.kept:
            row = [str(int(chain.iterations[i]))]
            row += [repr(float(v)) for v in chain.draws[i]]
            row += [str(int(v)) for v in chain.accepted[i]]
            row += [repr(float(v)) for v in chain.truncation[i]]
            fh.write(",".join(row) + "\n")
    finally:
        if owned:
            fh.close()


def read_chain_csv(source):
    """Load a chain CSV back as a :class:`ChainOutput` (all rows retained).

    Raises ``ValueError`` naming the offending line on malformed input.
    """
    owned = isinstance(source, (str, os.PathLike))
    fh = open(source) if owned else source
    try:
        lines = fh.read().splitlines()
    finally:
        if owned:
            fh.close()
    meta = {}
    rows = []
    header = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    key, val = tok.split("=", 1)
                    meta[key] = val
            continue
        fields = [f.strip() for f in line.split(",")]
        if header is None:
            if tuple(fields) != CHAIN_COLUMNS:
                raise ValueError(f"line {lineno}: expected chain header {','.join(CHAIN_COLUMNS)}")
            header = fields
            continue
        if len(fields) != len(CHAIN_COLUMNS):
            raise ValueError(f"line {lineno}: expected {len(CHAIN_COLUMNS)} fields")
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric field") from None
    if header is None:
        raise ValueError("chain file has no header")
    a = np.array(rows, dtype=float).reshape(-1, len(CHAIN_COLUMNS))
    return ChainOutput(
        model=meta.get("model", "unknown"), draws=a[:, 1:5], accepted=a[:, 5:7].astype(bool),
        truncation=a[:, 7:9], iterations=np.arange(len(a)), burn_in=0, thin=1,
        seed=int(meta["seed"]) if meta.get("seed", "").isdigit() else 0, meta=meta,
    )


def write_summary_csv(summary, dest, comment=None):
    fh, owned = _open_w(dest)
    try:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("# quantiles: linear interpolation between order statistics, position (n-1)q\n")
        fh.write("parameter,median,lo95,hi95\n")
        for name, s in summary.items():
            fh.write(f"{name},{s.median!r},{s.lo95!r},{s.hi95!r}\n")
    finally:
        if owned:
            fh.close()
