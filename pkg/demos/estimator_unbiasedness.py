"""
Unbiased transition-probability estimators from honest times
=============================================================

On an interval [s, t) each channel's honest time is the left end of the
last point-free stretch before t.  A single honest time (or a pair of them)
gives an unbiased estimate of the whole transition matrix.  Here we average
many such estimates and compare them with quadrature.
"""
import numpy as np

from honestmjp import ChannelPair, RateParams, tpm_quadrature
from honestmjp.honest_times import (
    indicator_tpm_array,
    pair_exp_tpm_array,
    sample_honest_times,
    tau0_tpm_array,
    tau1_tpm_array,
)

ch = ChannelPair(RateParams.weibull(1.2, 0.006), RateParams.weibull(0.8, 0.023))
s, t, n = 1.0, 10.0, 10**5
rng = np.random.default_rng(0)

tau0 = sample_honest_times(ch.channel0, s, t, rng, size=n)
tau1 = sample_honest_times(ch.channel1, s, t, rng, size=n)
print(f"truncated honest times: channel 0 {np.mean(tau0 == s):.3f}, channel 1 {np.mean(tau1 == s):.3f}")

target = tpm_quadrature(ch, s, t).as_array()
print(f"quadrature p01 = {target[0, 1]:.5f}, p10 = {target[1, 0]:.5f}\n")

# The indicator estimator is 0/1, so it is noisy; the others smooth over
# the uncovered part of the interval and have far smaller spread.
for name, est in [
    ("indicator", indicator_tpm_array(tau0, tau1)),
    ("tau1-based", tau1_tpm_array(tau1, s, t, ch)),
    ("tau0-based", tau0_tpm_array(tau0, s, t, ch)),
    ("pair-exp", pair_exp_tpm_array(tau1, tau0, t, ch)),
]:
    m = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(n)
    print(f"{name:>11s}  p01 {m[0, 1]:.5f} +- {se[0, 1]:.5f}   p10 {m[1, 0]:.5f} +- {se[1, 0]:.5f}")
