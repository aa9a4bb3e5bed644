import numpy as np
import pytest

from scorelab.synthworld import make_extractor, make_population


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def linear_extractor():
    return make_extractor(11)


@pytest.fixture(scope="session")
def population():
    return make_population(21)


def brute_eer(gen, imp):
    """Exhaustive reference: try every candidate threshold one by one with plain loops."""
    pooled = sorted(set(gen) | set(imp))
    cands = [-1.0] + [(a + b) / 2 for a, b in zip(pooled, pooled[1:])]
    cands.append(1.0 if pooled[-1] < 1.0 else float(np.nextafter(1.0, 2.0)))
    best = None
    for t in cands:
        fa = sum(1 for s in imp if s >= t)
        miss = sum(1 for s in gen if s < t)
        key = (abs(fa * len(gen) - miss * len(imp)), fa, t)
        if best is None or key < best[0]:
            best = (key, fa / len(imp), miss / len(gen), t)
    _, far, frr, t = best
    return (far + frr) / 2, t


def brute_min_dcf(gen, imp, p=0.01, c_miss=1.0, c_fa=1.0):
    pooled = sorted(set(gen) | set(imp))
    cands = [-1.0] + [(a + b) / 2 for a, b in zip(pooled, pooled[1:])]
    cands.append(1.0 if pooled[-1] < 1.0 else float(np.nextafter(1.0, 2.0)))
    best = None
    for t in cands:
        far = sum(1 for s in imp if s >= t) / len(imp)
        frr = sum(1 for s in gen if s < t) / len(gen)
        cost = c_miss * frr * (1 - p) + c_fa * far * p
        if best is None or cost < best[0]:
            best = (cost, t)
    return best


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][2:])):
            terminalreporter.write_line(line)
