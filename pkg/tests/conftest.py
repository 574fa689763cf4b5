import math
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from skewlab.forcing import ForcingField, Term
from skewlab.pde_core import GridFunction

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TWO_PI = 2.0 * math.pi

FACTOR_NAMES = ("1", "u", "u2", "u3", "p", "p2", "up", "sin", "cos")


def random_field(rng, k=2, n_terms=6, factors=FACTOR_NAMES, **flags):
    """Random quasi-periodic field with modes in {-2..2}^k and unit-scale coefficients."""
    freqs = [1.0, math.sqrt(2.0), math.sqrt(3.0), math.pi][:k]
    terms = []
    for _ in range(n_terms):
        terms.append(Term(float(rng.normal()), tuple(int(m) for m in rng.integers(-2, 3, k)),
                          str(rng.choice(["cos", "sin"])), str(rng.choice(factors)),
                          float(rng.uniform(0.5, 2.0))))
    return ForcingField(tuple(freqs), tuple(terms), **flags)


def trig_profile(rng, n, L, n_modes=5, mean=True):
    """Random trig polynomial on the circle, with its analytic coefficients."""
    a = rng.normal(size=n_modes + 1)
    b = rng.normal(size=n_modes + 1)
    if not mean:
        a[0] = 0.0
    b[0] = 0.0
    x = np.arange(n) * (L / n)
    kx = TWO_PI * np.outer(np.arange(n_modes + 1), x) / L
    vals = a @ np.cos(kx) + b @ np.sin(kx)
    return GridFunction(vals, "circle", L), a, b


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion

_CRITERIA = {
    1: "analytic regressions (heat mode, drifting solution)",
    2: "zero number never increases; drops witnessed; tails settle",
    3: "shift-difference zero number constant on near-minimal orbits",
    4: "circle reduction c' = G at second order",
    5: "interval solves agree with extension to the circle",
    6: "common critical point and injective evaluation map",
    7: "trichotomy classification sanity",
    8: "torus example: rotation numbers, classification, derived equation",
    9: "determinism: byte-identical CSV artifacts",
}
_outcomes: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    crit = getattr(report, "criterion", None)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes[crit].append(report.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in _CRITERIA.items():
        runs = _outcomes.get(n)
        if not runs:
            status = "not run"
        else:
            status = "PASS" if all(runs) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {status:7s} {title}")
