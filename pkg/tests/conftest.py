import numpy as np
import pytest

from honestmjp.rate_models import ChannelPair, RateParams

# Weibull truths of the simulated-grid scenario
WEIBULL_TRUTH = dict(gamma0=1.2, lambda0=0.006, gamma1=0.8, lambda1=0.023)
# homogeneous truths with close rates
CONSTANT_TRUTH = dict(lambda0=0.047, lambda1=0.051)


def weibull_channels():
    t = WEIBULL_TRUTH
    return ChannelPair(RateParams.weibull(t["gamma0"], t["lambda0"]),
                       RateParams.weibull(t["gamma1"], t["lambda1"]))


def constant_channels(l0=CONSTANT_TRUTH["lambda0"], l1=CONSTANT_TRUTH["lambda1"]):
    return ChannelPair(RateParams.constant(l0), RateParams.constant(l1))


def clinic_visit_counts():
    """93 visit counts with range (9, 48), quartiles 17/29/39, mean ~29, SD ~12.

    Each quarter of the sorted sample rises from one quartile to the next
    along a concave curve, which lifts the mean from 28.4 to 28.9.
    """
    x = np.linspace(0.0, 1.0, 24)
    knots = [(9, 17), (17, 29), (29, 39), (39, 48)]
    parts = [a + (b - a) * x**0.8 for a, b in knots]
    v = np.concatenate([p[:-1] for p in parts[:-1]] + [parts[-1]])
    return np.round(v).astype(int)


def mc_z(samples, target):
    """z-scores of sample means against targets, entrywise along axis 0."""
    samples = np.asarray(samples, dtype=float)
    m = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])
    diff = m - target
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / np.where(se > 0, se, 1), np.where(diff == 0, 0.0, np.inf))
    return z


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def weibull_ch():
    return weibull_channels()


@pytest.fixture(scope="session")
def constant_ch():
    return constant_channels()


# one line per acceptance criterion, echoed again in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
