import itertools

import numpy as np
import pytest

from ltmnod import LtmInstance, WeightedDigraph

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def path3():
    g = WeightedDigraph.from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)])
    return LtmInstance(g, [0.5, 0.5, 0.5])


@pytest.fixture
def two_cycle():
    return WeightedDigraph.from_edges(2, [(0, 1, 1.0), (1, 0, 1.0)])


def naive_ltm(A, tau, seed):
    """Definition-level LTM: loop until no node changes, one node at a time."""
    n = len(tau)
    zeta = [1 if i in seed else 0 for i in range(n)]
    times = {i: 0 for i in seed}
    t = 0
    while True:
        new = list(zeta)
        for i in range(n):
            total = 0.0
            for j in range(n):
                if zeta[j]:
                    total += A[i][j]
            if zeta[i] == 1 or total > tau[i]:
                new[i] = 1
        if new == zeta:
            return set(i for i in range(n) if zeta[i]), times
        t += 1
        for i in range(n):
            if new[i] and not zeta[i]:
                times[i] = t
        zeta = new


def brute_reach(A):
    """Boolean transitive closure via Floyd-Warshall."""
    n = A.shape[0]
    r = (A > 0) | np.eye(n, dtype=bool)
    for k in range(n):
        r = r | (r[:, [k]] & r[[k], :])
    return r


def global_gap(A, tau, tol=1e-12):
    n = len(tau)
    best, tie = np.inf, False
    for bits in itertools.product([0.0, 1.0], repeat=n):
        drive = A @ np.array(bits)
        for i in range(n):
            d = tau[i] - drive[i]
            if abs(d) <= tol:
                tie = True
            elif d > 0:
                best = min(best, d)
    return best, tie
