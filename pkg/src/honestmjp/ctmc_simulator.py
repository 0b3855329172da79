"""
Exact simulation of the two-state non-homogeneous jump process.

Holding times come from inverting the cumulative hazard of the channel that
is currently active, so there is no time discretisation.  The Weibull clock
is absolute time: lambda(t) depends on t, not on the time spent in a state.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel_io import PanelDataset, Subject
from .rate_models import cumulative_hazard, forward_hazard_time
from .tpm_oracle import InitialDistribution

__all__ = [
    "SamplePath",
    "CouplingReport",
    "simulate_path",
    "states_at",
    "simulate_panel",
    "regular_grids",
    "irregular_grids",
    "propagate_states",
    "coupling_check",
]


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Right-continuous path: ``init_state`` on [start, first event), flipping at each event."""

    init_state: int
    event_times: np.ndarray
    horizon: float
    start: float = 0.0

    def __post_init__(self):
        ev = np.asarray(self.event_times, dtype=float)
        object.__setattr__(self, "event_times", ev)
        if self.init_state not in (0, 1):
            raise ValueError("init_state must be 0 or 1")
        if ev.size and (np.any(np.diff(ev) <= 0) or ev[0] <= self.start or ev[-1] > self.horizon):
            raise ValueError("event times must be strictly increasing inside (start, horizon]")

    @property
    def events(self):
        """List of ``(time, new_state)`` pairs."""
        states = (self.init_state + np.arange(1, len(self.event_times) + 1)) % 2
        return list(zip(self.event_times.tolist(), states.tolist()))


def simulate_path(ch, init_state, horizon, rng, start=0.0):
    """Simulate one path on [start, horizon] by successive hazard inversion."""
    if horizon <= start:
        raise ValueError("horizon must exceed the start time")
    if init_state not in (0, 1):
        raise ValueError("init_state must be 0 or 1")
    now, state = float(start), int(init_state)
    events = []
    while True:
        nxt = float(forward_hazard_time(ch.channel(state), now, rng.standard_exponential()))
        if nxt > horizon:
            break
        if nxt <= now:
            # rounding at astronomically large intensities; keep times strictly increasing
            nxt = np.nextafter(now, np.inf)
        events.append(nxt)
        now, state = nxt, 1 - state
    return SamplePath(int(init_state), np.array(events), float(horizon), float(start))


def states_at(path, grid):
    """States of a right-continuous path at the given (nondecreasing) times."""
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < path.start) or np.any(grid > path.horizon):
        raise ValueError(f"grid times must lie in [{path.start}, {path.horizon}]")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be nondecreasing")
    flips = np.searchsorted(path.event_times, grid, side="right")
    return ((path.init_state + flips) % 2).astype(np.int8)


def regular_grids(subjects, visits, horizon):
    """``subjects`` copies of ``linspace(0, horizon, visits)``."""
    if subjects < 1 or visits < 1:
        raise ValueError("need at least one subject and one visit")
    g = np.linspace(0.0, float(horizon), int(visits)) if visits > 1 else np.zeros(1)
    return [g.copy() for _ in range(int(subjects))]


def irregular_grids(visit_counts, horizon, rng):
    """Per-subject grids: a visit at 0 plus ``v - 1`` sorted uniform times on (0, horizon)."""
    out = []
    for v in visit_counts:
        v = int(v)
        if v < 1:
            raise ValueError("every subject needs at least one visit")
        g = np.concatenate([[0.0], np.sort(rng.uniform(0.0, horizon, v - 1))])
        if np.any(np.diff(g) <= 0):
            raise ValueError("duplicate visit times drawn; use a longer horizon")
        out.append(g)
    return out


def simulate_panel(ch, grids, init=None, rng=None, ids=None):
    """Simulate each subject's continuous path and record it on its grid."""
    init = InitialDistribution() if init is None else init
    rng = np.random.default_rng() if rng is None else rng
    subjects = []
    for j, g in enumerate(grids):
        g = np.asarray(g, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError(f"grid {j} is empty")
        if np.any(g < 0) or np.any(np.diff(g) <= 0):
            raise ValueError(f"grid {j} must be nonnegative and strictly increasing")
        x0 = int(rng.random() < init.pi1)
        if g.size == 1:
            states = np.array([x0], dtype=np.int8)
        else:
            path = simulate_path(ch, x0, g[-1], rng, start=g[0])
            states = states_at(path, g)
        sid = ids[j] if ids is not None else str(j + 1)
        subjects.append(Subject(sid, g, states))
    return PanelDataset(tuple(subjects))


def propagate_states(ch, states, s, t, rng):
    """Vectorised exact propagation of many independent chains from s to t.

    Only the end states are returned; useful for large Monte Carlo checks of
    transition probabilities.
    """
    state = np.array(states, dtype=np.int8, copy=True)
    now = np.full(state.shape, float(s))
    active = np.ones(state.shape, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        y = rng.standard_exponential(idx.size)
        nxt = np.empty(idx.size)
        for k in (0, 1):
            m = state[idx] == k
            nxt[m] = forward_hazard_time(ch.channel(k), now[idx[m]], y[m])
        fired = nxt <= t
        state[idx[fired]] ^= 1
        now[idx[fired]] = nxt[fired]
        active[idx[~fired]] = False
    return state


@dataclass(frozen=True)
class CouplingReport:
    n: int
    tv_empirical: float
    tv_standard_error: float
    tv_theory: float
    coupled_replicates: int
    no_event_fraction: float

    @property
    def all_coupled(self):
        return self.coupled_replicates == self.n

    @property
    def z_score(self):
        if self.tv_standard_error == 0:
            return 0.0 if self.tv_empirical == self.tv_theory else np.inf
        return (self.tv_empirical - self.tv_theory) / self.tv_standard_error


def coupling_check(ch, s, t, n, rng):
    """Run coupled chains X (from 1) and X' (from 0) on shared point processes.

    Both chains read the same points of Pi^0 (fires 0 -> 1) and Pi^1
    (fires 1 -> 0) on (s, t].  The report counts replicates in which the two
    chains agree at every event from the first merged point onwards, and
    compares the empirical total variation ``sum_j |P(X_t=j) - P(X'_t=j)|``
    with ``2 exp(-Lambda0(s,t) - Lambda1(s,t))``.
    """
    if not s < t:
        raise ValueError("need s < t")
    if n < 1000:
        raise ValueError("use at least 1000 replicates")
    x = np.ones(n, dtype=np.int8)
    xp = np.zeros(n, dtype=np.int8)
    nxt = np.vstack([
        forward_hazard_time(ch.channel(k), np.full(n, float(s)), rng.standard_exponential(n))
        for k in (0, 1)
    ])
    seen_event = np.zeros(n, dtype=bool)
    agree = np.ones(n, dtype=bool)
    while True:
        which = np.argmin(nxt, axis=0)
        when = nxt[which, np.arange(n)]
        live = np.flatnonzero(when <= t)
        if live.size == 0:
            break
        k = which[live]
        # a Pi^0 point sends state 0 to 1; a Pi^1 point sends 1 to 0
        x[live] = np.where(x[live] == k, 1 - k, x[live])
        xp[live] = np.where(xp[live] == k, 1 - k, xp[live])
        seen_event[live] = True
        agree[live] &= x[live] == xp[live]
        nxt[k, live] = _advance(ch, k, when[live], rng)
    # replicates without any point satisfy the property vacuously
    coupled = int(agree.sum())
    diff = (x - xp).astype(float)
    tv = 2.0 * abs(diff.mean())
    se = 2.0 * diff.std(ddof=1) / np.sqrt(n)
    lam = float(cumulative_hazard(ch.channel0, s, t) + cumulative_hazard(ch.channel1, s, t))
    return CouplingReport(n, float(tv), float(se), 2.0 * np.exp(-lam), coupled,
                          float(np.mean(~seen_event)))


def _advance(ch, k, start, rng):
    y = rng.standard_exponential(start.size)
    out = np.empty(start.size)
    for c in (0, 1):
        m = k == c
        out[m] = forward_hazard_time(ch.channel(c), start[m], y[m])
    return out
