"""
Panel data: per-subject visit times with the observed state (0 or 1) at each.

CSV layout is ``subject,time,state`` with an optional leading ``#`` comment
line carrying run metadata.  Rows may come in any order.
"""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Subject",
    "PanelDataset",
    "IntervalArrays",
    "PanelFormatError",
    "ValidationReport",
    "VisitSummary",
    "parse_panel_csv",
    "write_panel_csv",
    "validate_panel",
    "visit_summary",
    "quantile",
]

QUANTILE_RULE = "linear interpolation between order statistics (position (n-1)q)"


class PanelFormatError(ValueError):
    """Malformed panel input; ``line`` is the 1-based line number when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Subject:
    subject_id: str
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "states", np.asarray(self.states, dtype=np.int8))

    def __eq__(self, other):
        if not isinstance(other, Subject):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.states, other.states)
        )

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class IntervalArrays:
    """Flat view of every consecutive observation pair in a panel."""

    subject: np.ndarray
    t_prev: np.ndarray
    t_cur: np.ndarray
    state_from: np.ndarray
    state_to: np.ndarray

    def __len__(self):
        return len(self.t_prev)

    @property
    def lengths(self):
        return self.t_cur - self.t_prev

    def take(self, idx):
        return IntervalArrays(
            self.subject[idx], self.t_prev[idx], self.t_cur[idx],
            self.state_from[idx], self.state_to[idx],
        )


@dataclass(frozen=True)
class PanelDataset:
    subjects: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        problems = _structural_violations(self.subjects)
        if problems:
            raise PanelFormatError("; ".join(problems))

    @classmethod
    def from_arrays(cls, times, states, ids=None):
        """Build from per-subject sequences of times and states."""
        if ids is None:
            ids = [str(j + 1) for j in range(len(times))]
        return cls(tuple(Subject(i, t, s) for i, t, s in zip(ids, times, states)))

    def __len__(self):
        return len(self.subjects)

    def __iter__(self):
        return iter(self.subjects)

    @property
    def n_observations(self):
        return sum(len(s) for s in self.subjects)

    def intervals(self):
        subj, tp, tc, xf, xt = [], [], [], [], []
        for j, s in enumerate(self.subjects):
            n = len(s) - 1
            if n <= 0:
                continue
            subj.append(np.full(n, j))
            tp.append(s.times[:-1])
            tc.append(s.times[1:])
            xf.append(s.states[:-1])
            xt.append(s.states[1:])
        if not subj:
            e = np.empty(0)
            return IntervalArrays(e.astype(int), e, e.copy(), e.astype(np.int8), e.astype(np.int8))
        return IntervalArrays(
            np.concatenate(subj), np.concatenate(tp), np.concatenate(tc),
            np.concatenate(xf), np.concatenate(xt),
        )

    def initial_states(self):
        return np.array([s.states[0] for s in self.subjects], dtype=np.int8)

    def relabeled(self):
        """Copy with states 0 and 1 swapped."""
        return PanelDataset(tuple(Subject(s.subject_id, s.times, 1 - s.states) for s in self.subjects))


def _structural_violations(subjects):
    out = []
    seen = set()
    for s in subjects:
        sid = s.subject_id
        if sid in seen:
            out.append(f"duplicate subject id {sid!r}")
        seen.add(sid)
        if len(s.times) != len(s.states):
            out.append(f"subject {sid!r}: times and states differ in length")
            continue
        if len(s.times) == 0:
            out.append(f"subject {sid!r}: no observations")
            continue
        if not np.all(np.isfinite(s.times)) or np.any(s.times < 0):
            out.append(f"subject {sid!r}: times must be finite and nonnegative")
        if np.any(np.diff(s.times) <= 0):
            out.append(f"subject {sid!r}: times not strictly increasing")
        if not np.all(np.isin(s.states, (0, 1))):
            out.append(f"subject {sid!r}: states outside {{0, 1}}")
    return out


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline=""), True
    return source, False


def parse_panel_csv(source):
    """Read a ``subject,time,state`` CSV into a :class:`PanelDataset`.

    ``source`` is a path or an open text stream.  Leading ``#`` lines are
    skipped.  Subjects keep the order of first appearance; observations are
    sorted by time.
    """
    fh, owned = _open_text(source)
    try:
        text = fh.read()
    finally:
        if owned:
            fh.close()

    rows = {}
    order = []
    header_seen = False
    seen_times = {}
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = next(csv.reader([line]))
        fields = [f.strip() for f in fields]
        if not header_seen:
            if fields != ["subject", "time", "state"]:
                raise PanelFormatError(
                    f"expected header 'subject,time,state', got {line!r}", lineno
                )
            header_seen = True
            continue
        if len(fields) != 3:
            raise PanelFormatError(f"expected 3 fields, got {len(fields)}", lineno)
        sid, ts, xs = fields
        if not sid:
            raise PanelFormatError("empty subject id", lineno)
        try:
            t = float(ts)
        except ValueError:
            raise PanelFormatError(f"time {ts!r} is not a number", lineno) from None
        if not np.isfinite(t) or t < 0:
            raise PanelFormatError(f"time {ts!r} must be finite and nonnegative", lineno)
        if xs not in ("0", "1"):
            raise PanelFormatError(f"state {xs!r} not in {{0, 1}}", lineno)
        key = (sid, t)
        if key in seen_times:
            raise PanelFormatError(
                f"duplicate time {ts} for subject {sid!r} (first at line {seen_times[key]})",
                lineno,
            )
        seen_times[key] = lineno
        if sid not in rows:
            rows[sid] = []
            order.append(sid)
        rows[sid].append((t, int(xs)))
    if not header_seen:
        raise PanelFormatError("missing header 'subject,time,state'", 1)

    subjects = []
    for sid in order:
        obs = sorted(rows[sid])
        subjects.append(Subject(sid, [o[0] for o in obs], [o[1] for o in obs]))
    return PanelDataset(tuple(subjects))


def write_panel_csv(panel, dest, comment=None):
    """Write a panel as CSV; ``comment`` becomes a leading ``#`` line."""
    fh = open(dest, "w", newline="") if isinstance(dest, (str, os.PathLike)) else dest
    try:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write("subject,time,state\n")
        for s in panel.subjects:
            for t, x in zip(s.times, s.states):
                fh.write(f"{s.subject_id},{float(t)!r},{int(x)}\n")
    finally:
        if fh is not dest:
            fh.close()


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    n_subjects: int = 0
    n_observations: int = 0
    interval_counts: dict = field(default_factory=dict)
    exposure: dict = field(default_factory=dict)
    transition_counts: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    @property
    def n_intervals(self):
        return sum(self.interval_counts.values())


def validate_panel(panel):
    """Check panel invariants and tabulate interval counts and exposure.

    Never raises; problems are listed in ``violations`` (fatal for fitting)
    and ``warnings`` (usable but suspicious).
    """
    rep = ValidationReport()
    subjects = getattr(panel, "subjects", panel)
    rep.violations.extend(_structural_violations(subjects))
    rep.n_subjects = len(subjects)
    rep.n_observations = sum(len(s) for s in subjects)
    for s in subjects:
        if len(s) == 1:
            rep.warnings.append(f"subject {s.subject_id!r}: single observation, unusable for fitting")
    rep.interval_counts = {0: 0, 1: 0}
    rep.exposure = {0: 0.0, 1: 0.0}
    rep.transition_counts = {(a, b): 0 for a in (0, 1) for b in (0, 1)}
    if rep.violations:
        return rep
    iv = panel.intervals()
    for k in (0, 1):
        m = iv.state_from == k
        rep.interval_counts[k] = int(m.sum())
        rep.exposure[k] = float(iv.lengths[m].sum())
        for l in (0, 1):
            rep.transition_counts[(k, l)] = int((m & (iv.state_to == l)).sum())
    if len(iv) == 0:
        rep.warnings.append("panel has no observation intervals")
    return rep


def quantile(x, q, axis=0):
    """Empirical quantile using numpy's default linear rule."""
    return np.quantile(np.asarray(x, dtype=float), q, axis=axis, method="linear")


@dataclass(frozen=True)
class VisitSummary:
    minimum: float
    maximum: float
    median: float
    q1: float
    q3: float
    mean: float
    sd: float

    @property
    def range(self):
        return (self.minimum, self.maximum)

    def format(self):
        return (
            f"Range ({self.minimum:g}, {self.maximum:g}); "
            f"Median (Q1, Q3) {self.median:g} ({self.q1:g}, {self.q3:g}); "
            f"Mean (SD) {self.mean:.0f} ({self.sd:.0f})"
        )


def visit_summary(panel):
    """Descriptive statistics of the number of visits per subject.

    SD uses the n - 1 denominator.
    """
    if len(panel.subjects) == 0:
        raise ValueError("visit summary of an empty panel")
    v = np.array([len(s) for s in panel.subjects], dtype=float)
    q1, med, q3 = quantile(v, [0.25, 0.5, 0.75])
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return VisitSummary(float(v.min()), float(v.max()), float(med), float(q1), float(q3),
                        float(v.mean()), sd)
