"""
Parametric transition intensities for the two-state jump process.

Each family exposes three primitives with exact closed forms:

* ``intensity_at``             -- lambda(t)
* ``cumulative_hazard``        -- Lambda(r, t) = int_r^t lambda(s) ds
* ``inverse_remaining_hazard`` -- lower v inf{r : Lambda(r, t) <= y}

plus ``forward_hazard_time`` (the r solving Lambda(start, r) = y) used by the
path simulators.  All functions broadcast over numpy arrays.

Families
--------
constant  : lambda(t) = lam
weibull   : lambda(t) = lam * gamma * t**(gamma - 1)
gompertz  : lambda(t) = lam * exp(gamma * t)

"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FAMILIES",
    "RateParams",
    "ChannelPair",
    "intensity_at",
    "log_intensity_at",
    "cumulative_hazard",
    "inverse_remaining_hazard",
    "forward_hazard_time",
]

FAMILIES = ("constant", "weibull", "gompertz")


@dataclass(frozen=True)
class RateParams:
    """Transition intensity of one channel.

    Parameters
    ----------
    family : {'constant', 'weibull', 'gompertz'}
    shape : float
        gamma; pinned to 1 for the constant family.
    rate : float
        lambda.  A zero rate is accepted and gives a channel that never fires.
    """

    family: str
    shape: float
    rate: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown rate family {self.family!r}")
        if not (np.isfinite(self.shape) and self.shape > 0):
            raise ValueError(f"shape must be positive, got {self.shape}")
        if not (np.isfinite(self.rate) and self.rate >= 0):
            raise ValueError(f"rate must be nonnegative, got {self.rate}")
        if self.family == "constant" and self.shape != 1:
            raise ValueError("constant family requires shape == 1")

    @classmethod
    def constant(cls, rate):
        return cls("constant", 1.0, float(rate))

    @classmethod
    def weibull(cls, shape, rate):
        return cls("weibull", float(shape), float(rate))

    @classmethod
    def gompertz(cls, shape, rate):
        return cls("gompertz", float(shape), float(rate))

    def with_rate(self, rate):
        return RateParams(self.family, self.shape, float(rate))

    def with_shape(self, shape):
        return RateParams(self.family, float(shape), self.rate)


@dataclass(frozen=True)
class ChannelPair:
    """Intensities of the 0->1 channel (``channel0``) and 1->0 channel (``channel1``)."""

    channel0: RateParams
    channel1: RateParams

    def channel(self, k):
        if k == 0:
            return self.channel0
        if k == 1:
            return self.channel1
        raise ValueError(f"channel must be 0 or 1, got {k}")

    def generator(self, t):
        """Intensity matrix Q(t); rows sum to zero."""
        l0 = float(intensity_at(self.channel0, t))
        l1 = float(intensity_at(self.channel1, t))
        return np.array([[-l0, l0], [l1, -l1]])

    def swapped(self):
        """Same process with the state labels 0 and 1 interchanged."""
        return ChannelPair(self.channel1, self.channel0)

    @property
    def is_constant(self):
        return self.channel0.family == "constant" and self.channel1.family == "constant"


def intensity_at(p, t):
    """Evaluate lambda(t).

    Raises
    ------
    ValueError
        For negative times, or a Weibull shape below one evaluated at t = 0
        where the intensity diverges.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("intensity requested at negative time")
    if p.family == "constant":
        out = np.full_like(t, p.rate)
    elif p.family == "weibull":
        if p.shape < 1 and np.any(t == 0):
            raise ValueError("Weibull intensity with shape < 1 diverges at t = 0")
        if p.shape == 1:
            out = np.full_like(t, p.rate)
        else:
            out = p.rate * p.shape * t ** (p.shape - 1)
    else:
        out = p.rate * np.exp(p.shape * t)
    return out[()] if out.ndim == 0 else out


def log_intensity_at(p, t):
    """log lambda(t), computed without overflow for large gompertz arguments."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        log_rate = np.log(p.rate)
    if p.family == "constant" or (p.family == "weibull" and p.shape == 1):
        out = np.full_like(t, log_rate)
    elif p.family == "weibull":
        if p.shape < 1 and np.any(t == 0):
            raise ValueError("Weibull intensity with shape < 1 diverges at t = 0")
        with np.errstate(divide="ignore"):
            out = log_rate + np.log(p.shape) + (p.shape - 1) * np.log(t)
    else:
        out = log_rate + p.shape * t
    return out[()] if out.ndim == 0 else out


def _check_interval(r, t):
    if np.any(r < 0):
        raise ValueError("cumulative hazard needs r >= 0")
    if np.any(r > t):
        raise ValueError("cumulative hazard needs r <= t")


def cumulative_hazard(p, r, t):
    """Integrated intensity over (r, t] in closed form.

    Weibull and gompertz use expm1-based forms so that short intervals keep
    full relative precision.
    """
    r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
    _check_interval(r, t)
    if p.rate == 0:
        out = np.zeros(r.shape)
    elif p.family == "constant" or (p.family == "weibull" and p.shape == 1):
        out = p.rate * (t - r)
    elif p.family == "weibull":
        g = p.shape
        with np.errstate(divide="ignore", invalid="ignore"):
            # lam * t^g * (1 - (r/t)^g)
            frac = -np.expm1(g * np.log(r / t))
            out = p.rate * t**g * np.where(r > 0, frac, 1.0)
        out = np.where(r == t, 0.0, out)
    else:
        g = p.shape
        # (lam/g) e^{g t} (1 - e^{-g (t - r)}) evaluated in log space
        with np.errstate(divide="ignore", over="ignore"):
            span = -np.expm1(-g * (t - r))
            out = np.exp(np.log(p.rate) - np.log(g) + g * t) * span
        out = np.where(r == t, 0.0, out)
    return out[()] if out.ndim == 0 else out


def inverse_remaining_hazard(p, lower, t, y):
    """Left endpoint of the window (r, t] carrying hazard mass y.

    Returns ``max(lower, r*)`` with Lambda(r*, t) = y, or ``lower`` when the
    hazard on (0, t] is smaller than y.  ``y = 0`` returns ``t``.
    """
    lower, t, y = np.broadcast_arrays(
        np.asarray(lower, dtype=float), np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    )
    if np.any(lower < 0) or np.any(lower > t):
        raise ValueError("need 0 <= lower <= t")
    if np.any(y < 0):
        raise ValueError("hazard mass y must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if p.rate == 0:
            r = np.where(y == 0, t, -np.inf)
        elif p.family == "constant" or (p.family == "weibull" and p.shape == 1):
            r = t - y / p.rate
        elif p.family == "weibull":
            g = p.shape
            # r = t * (1 - y / (lam t^g))^{1/g}
            u = y / (p.rate * t**g)
            r = np.where(u < 1, t * np.exp(np.log1p(-u) / g), -np.inf)
        else:
            g = p.shape
            # r = t + log(1 - y g e^{-g t} / lam) / g
            u = np.exp(np.log(y) + np.log(g) - g * t - np.log(p.rate))
            r = np.where(u < 1, t + np.log1p(-u) / g, -np.inf)
        r = np.where(y == 0, t, r)
    out = np.clip(r, lower, t)
    return out[()] if out.ndim == 0 else out


def forward_hazard_time(p, start, y):
    """Time r >= start with Lambda(start, r) = y (``inf`` if never reached)."""
    start, y = np.broadcast_arrays(np.asarray(start, dtype=float), np.asarray(y, dtype=float))
    if np.any(start < 0):
        raise ValueError("start must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if p.rate == 0:
            r = np.where(y == 0, start, np.inf)
        elif p.family == "constant" or (p.family == "weibull" and p.shape == 1):
            r = start + y / p.rate
        elif p.family == "weibull":
            g = p.shape
            r = (start**g + y / p.rate) ** (1.0 / g)
        else:
            g = p.shape
            r = np.logaddexp(g * start, np.log(y) + np.log(g) - np.log(p.rate)) / g
        r = np.where(y == 0, start, r)
    return r[()] if r.ndim == 0 else r


def scalar_callables(p):
    """Pure-Python ``(intensity(t), cumulative_hazard(r, t))`` for one channel.

    Same closed forms as the array functions without numpy call overhead;
    used inside scalar quadrature loops.
    """
    lam, g = p.rate, p.shape
    if lam == 0:
        return (lambda t: 0.0), (lambda r, t: 0.0)
    if p.family == "constant" or (p.family == "weibull" and g == 1):
        return (lambda t: lam), (lambda r, t: lam * (t - r))
    if p.family == "weibull":
        def haz(r, t):
            if r == t:
                return 0.0
            if r == 0:
                return lam * t**g
            return -lam * t**g * math.expm1(g * math.log(r / t))
        return (lambda t: lam * g * t ** (g - 1)), haz

    def ghaz(r, t):
        if r == t:
            return 0.0
        return math.exp(math.log(lam) - math.log(g) + g * t) * -math.expm1(-g * (t - r))
    return (lambda t: lam * math.exp(g * t)), ghaz


def scalar_inverse(p):
    """Pure-Python ``inverse_remaining_hazard(lower, t, y)`` for scalar arguments."""
    lam, g = p.rate, p.shape
    if lam == 0:
        return lambda lower, t, y: t if y == 0 else lower
    if p.family == "constant" or (p.family == "weibull" and g == 1):
        return lambda lower, t, y: min(max(lower, t - y / lam), t)

    if p.family == "weibull":
        def inv(lower, t, y):
            if y == 0:
                return t
            u = y / (lam * t**g)
            return lower if u >= 1 else min(max(lower, t * math.exp(math.log1p(-u) / g)), t)
        return inv

    def ginv(lower, t, y):
        if y == 0:
            return t
        u = math.exp(min(math.log(y) + math.log(g) - g * t - math.log(lam), 1.0))
        return lower if u >= 1 else min(max(lower, t + math.log1p(-u) / g), t)
    return ginv

