"""
Honest times of the two driving Poisson point processes and the unbiased
transition-probability estimators built from them.

On an observation interval [s, t) the honest time of channel k is

    tau^k = s v inf{r : Pi^k((r, t]) = 0},

the left end of the final point-free window.  It is sampled without
simulating the point process: draw y ~ Exp(1) and invert the remaining
hazard, ``tau = inverse_remaining_hazard(p, s, t, y)``.  ``eta = 1(tau > s)``
flags that a point was found; ``eta = 0`` is the truncated case.

Functions ending in ``_array`` are the vectorised workhorses; the others
wrap single draws in small value objects.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rate_models import cumulative_hazard, inverse_remaining_hazard, log_intensity_at
from .tpm_oracle import TransitionMatrix

__all__ = [
    "HonestDraw",
    "AugmentedInterval",
    "AugmentationExhausted",
    "sample_honest_time",
    "sample_honest_times",
    "honest_log_density",
    "honest_log_density_array",
    "indicator_tpm",
    "indicator_tpm_array",
    "indicator_match",
    "tau1_tpm",
    "tau1_tpm_array",
    "tau0_tpm",
    "tau0_tpm_array",
    "pair_exp_tpm",
    "pair_exp_tpm_array",
    "averaged_tpm",
    "sample_constrained_pair",
    "sample_constrained_pairs",
    "variance_formula_rhs",
]


class AugmentationExhausted(RuntimeError):
    """No pair matched the observed transition within the attempt budget."""

    def __init__(self, message, attempts):
        self.attempts = attempts
        super().__init__(message)


@dataclass(frozen=True)
class HonestDraw:
    channel: int
    tau: float
    eta: int
    t_prev: float
    t_cur: float

    def __post_init__(self):
        if self.channel not in (0, 1):
            raise ValueError("channel must be 0 or 1")
        if not (self.t_prev <= self.tau < self.t_cur):
            raise ValueError(f"tau={self.tau} outside [{self.t_prev}, {self.t_cur})")
        if self.eta != int(self.tau > self.t_prev):
            raise ValueError("eta inconsistent with tau")


@dataclass(frozen=True)
class AugmentedInterval:
    draw0: HonestDraw
    draw1: HonestDraw
    state_from: int
    state_to: int
    attempts: int = 1

    def __post_init__(self):
        if self.draw0.channel != 0 or self.draw1.channel != 1:
            raise ValueError("draw0 must be channel 0 and draw1 channel 1")
        if (self.draw0.t_prev, self.draw0.t_cur) != (self.draw1.t_prev, self.draw1.t_cur):
            raise ValueError("draws live on different intervals")
        if not indicator_match(self.draw0.tau, self.draw1.tau, self.state_from, self.state_to):
            raise ValueError("pair does not reproduce the observed transition")


def sample_honest_times(p, t_prev, t_cur, rng, size=None):
    """Vectorised honest-time sampler; returns ``tau`` (``eta = tau > t_prev``)."""
    t_prev = np.asarray(t_prev, dtype=float)
    t_cur = np.asarray(t_cur, dtype=float)
    if size is None:
        size = np.broadcast(t_prev, t_cur).shape
    y = rng.standard_exponential(size)
    return inverse_remaining_hazard(p, t_prev, t_cur, y)


def sample_honest_time(p, t_prev, t_cur, rng=None, channel=0, y=None):
    """Draw one honest time on [t_prev, t_cur).

    ``y`` overrides the unit-exponential variate (handy for checking the
    inversion by hand).
    """
    if not 0 <= t_prev < t_cur:
        raise ValueError(f"need 0 <= t_prev < t_cur, got [{t_prev}, {t_cur})")
    if y is None:
        y = rng.standard_exponential()
    tau = float(inverse_remaining_hazard(p, t_prev, t_cur, y))
    return HonestDraw(channel, tau, int(tau > t_prev), float(t_prev), float(t_cur))


def honest_log_density_array(tau, t_prev, t_cur, p):
    """log f(tau): log lambda(tau) - Lambda(tau, t) if tau > t_prev else -Lambda(t_prev, t)."""
    tau, t_prev, t_cur = np.broadcast_arrays(
        np.asarray(tau, dtype=float), np.asarray(t_prev, dtype=float), np.asarray(t_cur, dtype=float)
    )
    eta = tau > t_prev
    out = -cumulative_hazard(p, tau, t_cur)
    if np.any(eta):
        out = np.array(out, dtype=float, copy=True, ndmin=1).reshape(tau.shape)
        out[eta] += log_intensity_at(p, tau[eta])
    return out[()] if np.ndim(out) == 0 else out


def honest_log_density(d, p):
    """Log density of a draw: continuous part for eta = 1, point mass for eta = 0."""
    return float(honest_log_density_array(d.tau, d.t_prev, d.t_cur, p))


def indicator_match(tau0, tau1, state_from, state_to):
    """Whether the pair reproduces ``state_from -> state_to`` on its interval."""
    tau0, tau1 = np.asarray(tau0), np.asarray(tau1)
    state_from, state_to = np.asarray(state_from), np.asarray(state_to)
    from0 = np.where(state_to == 1, tau0 > tau1, tau1 >= tau0)
    from1 = np.where(state_to == 0, tau1 > tau0, tau0 >= tau1)
    out = np.where(state_from == 0, from0, from1)
    return out[()] if out.ndim == 0 else out


def indicator_tpm_array(tau0, tau1):
    """Indicator estimators stacked as (..., 2, 2) arrays of 0/1."""
    tau0, tau1 = np.broadcast_arrays(np.asarray(tau0, dtype=float), np.asarray(tau1, dtype=float))
    p01 = (tau0 > tau1).astype(float)
    p10 = (tau1 > tau0).astype(float)
    return np.stack([1 - p01, p01, p10, 1 - p10], axis=-1).reshape(tau0.shape + (2, 2))


def indicator_tpm(a):
    return TransitionMatrix.from_array(indicator_tpm_array(a.draw0.tau, a.draw1.tau))


def _stack(p00, p11):
    return np.stack([p00, 1 - p00, 1 - p11, p11], axis=-1).reshape(np.shape(p00) + (2, 2))


def tau1_tpm_array(tau1, s, t, ch):
    """Conditional TPM given the channel-1 honest time.

    P00 = exp(-Lambda0(tau1, t)); P10 = exp(-Lambda0(tau1, t)) (1 - exp(-Lambda0(s, tau1) - Lambda1(s, t))).
    The P10 form equals 1 - [exp(-Lambda0(s,t) - Lambda1(s,t)) + P01] but is
    never negative in floating point.
    """
    tau1, s, t = np.broadcast_arrays(np.asarray(tau1, float), np.asarray(s, float), np.asarray(t, float))
    stay = np.exp(-cumulative_hazard(ch.channel0, tau1, t))
    lead = cumulative_hazard(ch.channel0, s, tau1) + cumulative_hazard(ch.channel1, s, t)
    p10 = stay * -np.expm1(-lead)
    return _stack(stay, 1 - p10)


def tau0_tpm_array(tau0, s, t, ch):
    """Mirror image of :func:`tau1_tpm_array` with states relabelled."""
    swapped = tau1_tpm_array(tau0, s, t, ch.swapped())
    return swapped[..., ::-1, ::-1]


def pair_exp_tpm_array(tau1, tau0, t, ch):
    """P00 = exp(-Lambda0(tau1, t)), P11 = exp(-Lambda1(tau0, t))."""
    p00 = np.exp(-cumulative_hazard(ch.channel0, tau1, t))
    p11 = np.exp(-cumulative_hazard(ch.channel1, tau0, t))
    return _stack(*np.broadcast_arrays(p00, p11))


def _check_channel(d, k):
    if d.channel != k:
        raise ValueError(f"expected a channel-{k} draw, got channel {d.channel}")


def tau1_tpm(d1, ch):
    _check_channel(d1, 1)
    return TransitionMatrix.from_array(tau1_tpm_array(d1.tau, d1.t_prev, d1.t_cur, ch))


def tau0_tpm(d0, ch):
    _check_channel(d0, 0)
    return TransitionMatrix.from_array(tau0_tpm_array(d0.tau, d0.t_prev, d0.t_cur, ch))


def pair_exp_tpm(d1, d0, ch):
    _check_channel(d1, 1)
    _check_channel(d0, 0)
    if (d1.t_prev, d1.t_cur) != (d0.t_prev, d0.t_cur):
        raise ValueError("draws live on different intervals")
    return TransitionMatrix.from_array(pair_exp_tpm_array(d1.tau, d0.tau, d1.t_cur, ch))


def averaged_tpm(estimates):
    """Entrywise mean of several estimator outputs for the same interval."""
    estimates = list(estimates)
    if not estimates:
        raise ValueError("cannot average an empty list of estimates")
    arrs = np.array([e.as_array() if isinstance(e, TransitionMatrix) else np.asarray(e) for e in estimates])
    mean = arrs.mean(axis=0)
    # re-derive the complements so rows sum to one exactly
    return TransitionMatrix(1 - mean[0, 1], mean[0, 1], mean[1, 0], 1 - mean[1, 0])


def sample_constrained_pairs(ch, t_prev, t_cur, state_from, state_to, rng,
                             max_attempts=10**6, batch=4096):
    """Rejection-sample honest-time pairs reproducing each observed transition.

    Every interval draws independent ``(tau0, tau1)`` pairs until one matches
    its indicator constraint.  Candidates are generated in growing batches
    per interval, and the first match in sequence is kept, so the result is
    the plain one-at-a-time rejection sampler.

    Returns
    -------
    tau0, tau1 : ndarray
        Accepted pairs (NaN where exhausted).
    attempts : ndarray of int
        Pairs drawn per interval, including the accepted one.
    exhausted : ndarray of bool
        Intervals that used up ``max_attempts`` without a match.
    """
    t_prev = np.asarray(t_prev, dtype=float)
    t_cur = np.asarray(t_cur, dtype=float)
    state_from = np.asarray(state_from)
    state_to = np.asarray(state_to)
    n = len(t_prev)
    tau0 = np.full(n, np.nan)
    tau1 = np.full(n, np.nan)
    attempts = np.zeros(n, dtype=np.int64)
    pending = np.arange(n)
    used = 0
    p0, p1 = ch.channel0, ch.channel1
    while pending.size and used < max_attempts:
        k = int(min(max(batch // pending.size, 1), max(used, 1), max_attempts - used))
        tp = t_prev[pending, None]
        tc = t_cur[pending, None]
        y = rng.standard_exponential((2, pending.size, k))
        c0 = inverse_remaining_hazard(p0, tp, tc, y[0])
        c1 = inverse_remaining_hazard(p1, tp, tc, y[1])
        ok = indicator_match(c0, c1, state_from[pending, None], state_to[pending, None])
        hit = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = np.flatnonzero(hit)
        idx = pending[rows]
        tau0[idx] = c0[rows, first[rows]]
        tau1[idx] = c1[rows, first[rows]]
        attempts[idx] = used + first[rows] + 1
        used += k
        pending = pending[~hit]
    attempts[pending] = used
    exhausted = np.zeros(n, dtype=bool)
    exhausted[pending] = True
    return tau0, tau1, attempts, exhausted


def sample_constrained_pair(ch, t_prev, t_cur, state_from, state_to, rng, max_attempts=10**6):
    """One augmented interval conditioned on the observed transition.

    Raises
    ------
    AugmentationExhausted
        If ``max_attempts`` pairs are drawn without a match.
    """
    if not 0 <= t_prev < t_cur:
        raise ValueError(f"need 0 <= t_prev < t_cur, got [{t_prev}, {t_cur})")
    if max_attempts < 1:
        raise ValueError("max_attempts must be at least 1")
    tau0, tau1, att, exh = sample_constrained_pairs(
        ch, [t_prev], [t_cur], [state_from], [state_to], rng, max_attempts
    )
    if exh[0]:
        raise AugmentationExhausted(
            f"no pair matched {state_from}->{state_to} on [{t_prev}, {t_cur}) "
            f"after {att[0]} attempts", int(att[0])
        )
    t_prev, t_cur = float(t_prev), float(t_cur)
    d0 = HonestDraw(0, float(tau0[0]), int(tau0[0] > t_prev), t_prev, t_cur)
    d1 = HonestDraw(1, float(tau1[0]), int(tau1[0] > t_prev), t_prev, t_cur)
    return AugmentedInterval(d0, d1, int(state_from), int(state_to), int(att[0]))


def variance_formula_rhs(ch, s, t, n, rng, channel=1):
    """Monte Carlo value of P(tau'_1 v tau'_2 <= tau) - P(tau' <= tau)^2.

    With ``channel=1`` this is the variance of the tau^1-based estimators
    (tau = tau^1, tau' = tau^0); ``channel=0`` swaps the roles.

    Returns
    -------
    estimate, standard_error : float
        The standard error comes from the delta method over the n triples.
    """
    if n < 1000:
        raise ValueError("use at least 1000 triples")
    own, other = ch.channel(channel), ch.channel(1 - channel)
    tau = sample_honest_times(own, s, t, rng, size=n)
    o1 = sample_honest_times(other, s, t, rng, size=n)
    o2 = sample_honest_times(other, s, t, rng, size=n)
    a = (np.maximum(o1, o2) <= tau).astype(float)
    b = (o1 <= tau).astype(float)
    ma, mb = a.mean(), b.mean()
    cov = np.cov(np.vstack([a, b]))
    grad = np.array([1.0, -2.0 * mb])
    se = float(np.sqrt(grad @ cov @ grad / n))
    return float(ma - mb**2), se
