"""
Irregular visit schedules
=========================

Real clinics see subjects at irregular times and different frequencies.
We build 93 visit schedules over 48 months whose visit counts have range
(9, 48) and quartiles 17 / 29 / 39, simulate constant-rate data on them,
and fit the model by exact maximum likelihood.
"""
import numpy as np

from honestmjp import ChannelPair, RateParams, exact_fit_constant, simulate_panel
from honestmjp.ctmc_simulator import irregular_grids
from honestmjp.panel_io import validate_panel, visit_summary

# Each quarter of the sorted counts rises between consecutive quartiles.
x = np.linspace(0.0, 1.0, 24)
parts = [a + (b - a) * x**0.8 for a, b in [(9, 17), (17, 29), (29, 39), (39, 48)]]
counts = np.round(np.concatenate([p[:-1] for p in parts[:-1]] + [parts[-1]])).astype(int)

rng = np.random.default_rng(0)
grids = irregular_grids(counts, 48.0, rng)
truth = ChannelPair(RateParams.constant(0.047), RateParams.constant(0.051))
panel = simulate_panel(truth, grids, rng=rng)

print(visit_summary(panel).format())
rep = validate_panel(panel)
print(f"{rep.n_intervals} intervals; transitions 0->1: {rep.transition_counts[(0, 1)]}, "
      f"1->0: {rep.transition_counts[(1, 0)]}")

fit = exact_fit_constant(panel)
print(f"lambda0 {fit.lambda0:.4f} ({fit.ci0[0]:.4f}, {fit.ci0[1]:.4f})")
print(f"lambda1 {fit.lambda1:.4f} ({fit.ci1[0]:.4f}, {fit.ci1[1]:.4f})")
