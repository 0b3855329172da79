"""
Joint-distribution ("getting it right") check of the sampler.

Two simulators of (theta, data) should agree in their theta marginals:

* marginal-conditional: theta ~ prior, then data ~ p(data | theta);
* successive-conditional: alternate one augmentation + parameter sweep with
  a fresh data draw from the current theta.

Both target prior x likelihood, so the theta moments of the second chain
must match the prior moments from the first.  A mismatch points to a bug in
the augmentation or the parameter updates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctmc_simulator import simulate_panel
from .mcmc_engine import PARAM_NAMES, Prior, ThetaState, augment_all, update_parameters
from .tpm_oracle import InitialDistribution

__all__ = ["GewekeResult", "sample_prior", "geweke_test", "batch_means_se"]


@dataclass(frozen=True)
class GewekeResult:
    names: tuple
    mc_mean: np.ndarray
    mc_se: np.ndarray
    sc_mean: np.ndarray
    sc_se: np.ndarray
    sweeps: int

    @property
    def z(self):
        return (self.sc_mean - self.mc_mean) / np.sqrt(self.mc_se**2 + self.sc_se**2)

    def passed(self, n_se=3.0):
        return bool(np.all(np.abs(self.z) < n_se))

    def lines(self):
        return [
            f"{n:>10s}  marginal {m:.5g} +- {ms:.2g}   successive {s:.5g} +- {ss:.2g}   z={z:+.2f}"
            for n, m, ms, s, ss, z in zip(self.names, self.mc_mean, self.mc_se, self.sc_mean,
                                           self.sc_se, self.z)
        ]


def sample_prior(prior, model, rng, size=None):
    """Draws of (gamma0, lambda0, gamma1, lambda1) from the prior; shapes are 1 for constant."""
    n = 1 if size is None else size
    out = np.empty((n, 4))
    for k in (0, 1):
        if model == "constant":
            out[:, 2 * k] = 1.0
        else:
            out[:, 2 * k] = rng.gamma(prior.shape_alpha[k], 1.0 / prior.shape_beta[k], n)
        out[:, 2 * k + 1] = rng.gamma(prior.rate_a[k], 1.0 / prior.rate_b[k], n)
    return out[0] if size is None else out


def batch_means_se(x, n_batches=50):
    """Standard error of the mean of an autocorrelated series by batch means."""
    x = np.asarray(x, dtype=float)
    m = len(x) // n_batches
    b = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return b.std(ddof=1) / np.sqrt(n_batches)


def _moments(draws, model):
    cols = [1, 3] if model == "constant" else [0, 1, 2, 3]
    names = []
    feats = []
    for c in cols:
        names += [PARAM_NAMES[c], PARAM_NAMES[c] + "^2"]
        feats += [draws[:, c], draws[:, c] ** 2]
    return tuple(names), np.column_stack(feats)


def geweke_test(grid, model, prior, sweeps, rng, init=None, proposal_sd=0.5,
                max_attempts=10**6, n_batches=50):
    """Compare first and second theta moments of the two simulators.

    Parameters
    ----------
    grid : array_like
        Visit times of the single toy subject.
    model : {'constant', 'weibull', 'gompertz'}
    prior : Prior
        Should be proper and reasonably concentrated.
    sweeps : int
        Length of the successive-conditional chain; the marginal-conditional
        side uses the same number of independent prior draws.
    """
    init = InitialDistribution() if init is None else init
    grid = np.asarray(grid, dtype=float)

    mc = sample_prior(prior, model, rng, sweeps)
    names, f_mc = _moments(mc, model)

    theta = ThetaState(*sample_prior(prior, model, rng))
    panel = simulate_panel(theta.channels(model), [grid], init, rng)
    sc = np.empty((sweeps, 4))
    for i in range(sweeps):
        aug = augment_all(panel, theta.channels(model), rng, max_attempts=max_attempts)
        theta, _, _ = update_parameters(aug, theta, model, prior, proposal_sd, rng)
        sc[i] = theta.as_array()
        panel = simulate_panel(theta.channels(model), [grid], init, rng)
    _, f_sc = _moments(sc, model)

    return GewekeResult(
        names,
        f_mc.mean(axis=0),
        f_mc.std(axis=0, ddof=1) / np.sqrt(sweeps),
        f_sc.mean(axis=0),
        np.array([batch_means_se(f_sc[:, j], n_batches) for j in range(f_sc.shape[1])]),
        sweeps,
    )
