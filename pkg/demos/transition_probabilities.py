"""
Transition probabilities of a two-state process
===============================================

A two-state jump process flips 0 -> 1 at rate lambda0(t) and 1 -> 0 at
rate lambda1(t).  For constant rates the transition matrix has a closed
form; for time-varying rates it is a one-dimensional integral that we
evaluate by adaptive quadrature.
"""
import math

import numpy as np

from honestmjp import ChannelPair, RateParams, tpm_closed_form_constant, tpm_quadrature
from honestmjp.rate_models import cumulative_hazard

# Constant rates: closed form and quadrature should agree to rounding error.
const = ChannelPair(RateParams.constant(0.047), RateParams.constant(0.051))
for t in (1.0, 10.0, 50.0):
    closed = tpm_closed_form_constant(0.047, 0.051, 0.0, t)
    quad = tpm_quadrature(const, 0.0, t)
    print(f"t={t:5.1f}  p01 closed {closed.p01:.10f}  quadrature {quad.p01:.10f}")

# Weibull rates: one increasing hazard (shape 1.2), one decreasing (0.8).
wb = ChannelPair(RateParams.weibull(1.2, 0.006), RateParams.weibull(0.8, 0.023))
print("\nWeibull rates, starting at s = 1")
print("    t      p00      p01      p10      p11")
for t in np.linspace(2, 100, 8):
    P = tpm_quadrature(wb, 1.0, t)
    print(f"{t:5.1f}  {P.p00:.5f}  {P.p01:.5f}  {P.p10:.5f}  {P.p11:.5f}")

# The two rows differ by exactly the probability that neither channel fires.
P = tpm_quadrature(wb, 1.0, 10.0)
lam = cumulative_hazard(wb.channel0, 1.0, 10.0) + cumulative_hazard(wb.channel1, 1.0, 10.0)
print(f"\np11 - p01 = {P.p11 - P.p01:.12f}, exp(-Lambda) = {math.exp(-lam):.12f}")
