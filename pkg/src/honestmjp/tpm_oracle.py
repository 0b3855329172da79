"""
Reference transition probabilities and observed-data likelihood.

For constant intensities the TPM has a closed form.  For general intensities
the off-diagonal entries are one-dimensional integrals

    P01(s, t) = int_s^t exp(-Lambda0(v, t) - Lambda1(v, t)) lambda0(v) dv

with the inner integrals in closed form, so only the outer integral is done
numerically (adaptive Gauss-Kronrod via ``scipy.integrate.quad``) after the
substitution w = Lambda0(v, t).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .panel_io import validate_panel
from .rate_models import scalar_callables, scalar_inverse

__all__ = [
    "TransitionMatrix",
    "InitialDistribution",
    "QuadratureError",
    "ConvergenceError",
    "ExactFit",
    "tpm_closed_form_constant",
    "tpm_quadrature",
    "transition_matrix",
    "observed_log_likelihood",
    "exact_fit_constant",
    "crude_initial_estimates",
]

ROW_SLACK = 1e-12


class QuadratureError(RuntimeError):
    def __init__(self, message, achieved):
        self.achieved = achieved
        super().__init__(f"{message} (achieved error estimate {achieved:.3g})")


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransitionMatrix:
    p00: float
    p01: float
    p10: float
    p11: float

    def __post_init__(self):
        entries = np.array([self.p00, self.p01, self.p10, self.p11], dtype=float)
        if np.any(entries < 0) or np.any(entries > 1):
            raise ValueError(f"transition probabilities outside [0, 1]: {entries}")
        if abs(self.p00 + self.p01 - 1) > ROW_SLACK or abs(self.p10 + self.p11 - 1) > ROW_SLACK:
            raise ValueError(f"rows do not sum to one: {entries}")

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(float(a[0, 0]), float(a[0, 1]), float(a[1, 0]), float(a[1, 1]))

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 1.0)

    def as_array(self):
        return np.array([[self.p00, self.p01], [self.p10, self.p11]])

    def __getitem__(self, kl):
        return self.as_array()[kl]


@dataclass(frozen=True)
class InitialDistribution:
    pi0: float = 0.5
    pi1: float = 0.5

    def __post_init__(self):
        if not (0 <= self.pi0 <= 1 and 0 <= self.pi1 <= 1) or abs(self.pi0 + self.pi1 - 1) > 1e-12:
            raise ValueError(f"invalid initial distribution ({self.pi0}, {self.pi1})")

    def as_array(self):
        return np.array([self.pi0, self.pi1])


def _constant_off_diagonal(l0, l1, dt):
    """(p01, p10) arrays for constant rates; safe when l0 + l1 == 0."""
    tot = l0 + l1
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = -np.expm1(-tot * dt)
        p01 = np.where(tot > 0, l0 / tot * scale, 0.0)
        p10 = np.where(tot > 0, l1 / tot * scale, 0.0)
    return p01, p10


def tpm_closed_form_constant(lam0, lam1, s, t):
    """TPM over [s, t] for time-homogeneous intensities."""
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if lam0 < 0 or lam1 < 0:
        raise ValueError("rates must be nonnegative")
    p01, p10 = _constant_off_diagonal(lam0, lam1, t - s)
    p01, p10 = float(p01), float(p10)
    return TransitionMatrix(1.0 - p01, p01, p10, 1.0 - p10)


def _off_diagonal_integral(ch, src, s, t, rel_tol, limit):
    """P_{src, 1-src}(s, t) = int_s^t exp(-Lambda0(v,t) - Lambda1(v,t)) lambda_src(v) dv.

    Substituting w = Lambda_src(v, t) gives
    int_0^{Lambda_src(s,t)} exp(-w - Lambda_other(v(w), t)) dw, whose integrand
    is bounded by exp(-w).  This removes the Weibull singularity at 0 and the
    sliver next to t where a steep intensity concentrates its mass.
    """
    p_src, p_other = ch.channel(src), ch.channel(1 - src)
    if p_src.rate == 0 or s == t:
        return 0.0, 0.0
    _, haz_src = scalar_callables(p_src)
    _, haz_other = scalar_callables(p_other)
    inv = scalar_inverse(p_src)
    # exp(-w) underflows beyond this, so the tail is exactly negligible
    upper = min(haz_src(s, t), 745.0)

    def integrand(w):
        return math.exp(-w - haz_other(inv(s, t, w), t))

    pts = [w for w in (1.0, 5.0, 40.0) if w < upper]
    kw = dict(epsabs=rel_tol * 1e-3, epsrel=rel_tol, limit=max(limit, len(pts) + 1), points=pts or None)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(integrand, 0.0, upper, **kw)
        except integrate.IntegrationWarning as exc:
            val, err = integrate.quad(integrand, 0.0, upper, full_output=1, **kw)[:2]
            raise QuadratureError(f"quadrature did not converge on [{s}, {t}]: {exc}", err) from None
    return val, err


def tpm_quadrature(ch, s, t, rel_tol=1e-10, limit=500):
    """TPM over [s, t] by adaptive quadrature of the integral representation.

    Raises
    ------
    QuadratureError
        When the adaptive scheme cannot meet ``rel_tol``.
    """
    if s > t:
        raise ValueError(f"need s <= t, got s={s}, t={t}")
    if s < 0:
        raise ValueError("need s >= 0")
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    if s == t:
        return TransitionMatrix.identity()
    p01, _ = _off_diagonal_integral(ch, 0, s, t, rel_tol, limit)
    p10, _ = _off_diagonal_integral(ch, 1, s, t, rel_tol, limit)
    for name, v in (("p01", p01), ("p10", p10)):
        if v < -ROW_SLACK or v > 1 + ROW_SLACK:
            raise QuadratureError(f"{name} = {v!r} outside [0, 1]", abs(v))
    p01 = min(max(p01, 0.0), 1.0)
    p10 = min(max(p10, 0.0), 1.0)
    return TransitionMatrix(1.0 - p01, p01, p10, 1.0 - p10)


def transition_matrix(ch, s, t, rel_tol=1e-10):
    """Closed form when both channels are constant, quadrature otherwise."""
    if ch.is_constant:
        return tpm_closed_form_constant(ch.channel0.rate, ch.channel1.rate, s, t)
    return tpm_quadrature(ch, s, t, rel_tol=rel_tol)


def _interval_log_probs(ch, iv, rel_tol):
    if len(iv) == 0:
        return np.empty(0)
    if ch.is_constant:
        p01, p10 = _constant_off_diagonal(ch.channel0.rate, ch.channel1.rate, iv.lengths)
        P = np.stack([1 - p01, p01, p10, 1 - p10], axis=-1).reshape(-1, 2, 2)
    else:
        # panels on shared grids repeat the same (s, t) pairs many times
        keys = np.stack([iv.t_prev, iv.t_cur], axis=1)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        mats = np.array([tpm_quadrature(ch, a, b, rel_tol).as_array() for a, b in uniq])
        P = mats[inverse.ravel()]
    p = P[np.arange(len(iv)), iv.state_from, iv.state_to]
    with np.errstate(divide="ignore"):
        return np.log(p)


def observed_log_likelihood(panel, ch, init=None, rel_tol=1e-10):
    """Log of the product over subjects of init(X(t0)) * prod_i P_{x_{i-1} x_i}."""
    init = InitialDistribution() if init is None else init
    if len(panel.subjects) == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        log_init = np.log(init.as_array())[panel.initial_states()].sum()
    return float(log_init + _interval_log_probs(ch, panel.intervals(), rel_tol).sum())


@dataclass(frozen=True)
class ExactFit:
    """Maximum likelihood fit of the constant-rate model.

    Confidence intervals are Wald intervals on the log-rate scale, mapped back
    by exponentiation.  A rate whose estimate sits on the lower search bound
    is flagged in ``boundary``, reported as 0, and gets a NaN interval.
    """

    lambda0: float
    lambda1: float
    ci0: tuple
    ci1: tuple
    boundary: tuple
    log_likelihood: float
    se_log: tuple

    @property
    def estimates(self):
        return (self.lambda0, self.lambda1)


_LOG_BOUNDS = (np.log(1e-10), np.log(1e4))


def _constant_negloglik(log_rates, iv):
    l0, l1 = np.exp(log_rates)
    p01, p10 = _constant_off_diagonal(l0, l1, iv.lengths)
    P = np.stack([1 - p01, p01, p10, 1 - p10], axis=-1).reshape(-1, 2, 2)
    p = P[np.arange(len(iv)), iv.state_from, iv.state_to]
    with np.errstate(divide="ignore"):
        ll = np.log(p).sum()
    return -ll if np.isfinite(ll) else 1e300


def _hessian(f, x, h=1e-4):
    x = np.asarray(x, dtype=float)
    n = len(x)
    H = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n); ei[i] = h
            ej = np.zeros(n); ej[j] = h
            H[i, j] = H[j, i] = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4 * h * h)
    return H


def exact_fit_constant(panel, init=None, maxiter=2000, level=0.95):
    """Maximise the observed-data likelihood over constant rates.

    Optimises on the log-rate scale with L-BFGS-B; the observed information
    is a central finite-difference Hessian of the negative log-likelihood.
    """
    from scipy.stats import norm

    init = InitialDistribution() if init is None else init
    iv = panel.intervals()
    rep = validate_panel(panel)
    if rep.violations:
        raise ValueError("; ".join(rep.violations))
    if len(iv) == 0:
        raise ValueError("exact fit needs at least one observation interval")
    x0 = np.log([
        (max(rep.transition_counts[(k, 1 - k)], 0.5) / rep.exposure[k]) if rep.exposure[k] > 0 else 0.1
        for k in (0, 1)
    ])
    x0 = np.clip(x0, _LOG_BOUNDS[0] + 1, _LOG_BOUNDS[1] - 1)
    res = optimize.minimize(
        _constant_negloglik, x0, args=(iv,), method="L-BFGS-B",
        bounds=[_LOG_BOUNDS, _LOG_BOUNDS], options={"maxiter": maxiter, "ftol": 1e-14, "gtol": 1e-9},
    )
    if not res.success:
        raise ConvergenceError(f"exact fit did not converge: {res.message}")
    x = res.x
    # a rate is on the boundary when pushing it to the lower bound costs no likelihood
    boundary = tuple(
        bool(_constant_negloglik(_embed(_LOG_BOUNDS[0], x, [i]), iv) - res.fun < 1e-6) for i in range(2)
    )
    z = norm.ppf(0.5 + level / 2)
    se = [np.nan, np.nan]
    cis = [(np.nan, np.nan), (np.nan, np.nan)]
    interior = [i for i in range(2) if not boundary[i]]
    if interior:
        H = _hessian(lambda y: _constant_negloglik(_embed(y, x, interior), iv), x[interior])
        if np.all(np.linalg.eigvalsh(H) > 0):
            cov = np.linalg.inv(H)
            for pos, i in enumerate(interior):
                se[i] = float(np.sqrt(cov[pos, pos]))
                with np.errstate(over="ignore"):
                    cis[i] = (float(np.exp(x[i] - z * se[i])), float(np.exp(x[i] + z * se[i])))
    log_init = np.log(init.as_array())[panel.initial_states()].sum()
    rates = np.where(boundary, 0.0, np.exp(x))
    return ExactFit(
        float(rates[0]), float(rates[1]), cis[0], cis[1], boundary,
        float(log_init - res.fun), tuple(se),
    )


def _embed(y, x, idx):
    z = np.array(x, dtype=float)
    z[idx] = y
    return z


def crude_initial_estimates(panel):
    """Rates as if observed state changes were exact transition times.

    lambda_k = (#intervals k -> 1-k) / (total length of intervals starting in k).
    A zero count is replaced by 0.5 / (that exposure).
    """
    rep = validate_panel(panel)
    if rep.violations:
        raise ValueError("; ".join(rep.violations))
    out = []
    for k in (0, 1):
        exposure = rep.exposure[k]
        if rep.interval_counts[k] == 0 or exposure <= 0:
            raise ValueError(f"no observation interval starts in state {k}")
        count = rep.transition_counts[(k, 1 - k)]
        out.append((count if count > 0 else 0.5) / exposure)
    return tuple(out)
