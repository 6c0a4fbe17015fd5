"""Shared construction helpers for the test suite."""

import contextlib

import numpy as np

from greedyqn import symmetrize

# One line per acceptance criterion, echoed after the pytest summary so a
# plain `pytest -v` run ends with an explicit pass/fail scoreboard.
CRITERION_LINES = []


@contextlib.contextmanager
def criterion(number, label):
    try:
        yield
    except BaseException:
        CRITERION_LINES.append("[criterion %d] FAIL: %s" % (number, label))
        raise
    CRITERION_LINES.append("[criterion %d] PASS: %s" % (number, label))


def pytest_terminal_summary(terminalreporter):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in CRITERION_LINES:
        terminalreporter.write_line(line)


def rand_orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diagonal(r))


def rand_spd(rng, n, lo=1.0, hi=10.0):
    """Random SPD matrix with spectrum spanning exactly [lo, hi]."""
    if n == 1:
        return np.array([[lo]])
    eigs = np.empty(n)
    eigs[0], eigs[-1] = lo, hi
    eigs[1:-1] = rng.uniform(lo, hi, size=n - 2)
    q = rand_orthogonal(rng, n)
    return symmetrize((q * eigs) @ q.T)


def rand_psd(rng, n, scale=1.0):
    p = rng.standard_normal((n, n // 2 + 1)) * scale
    return symmetrize(p @ p.T)


def min_eig(a):
    return float(np.linalg.eigvalsh(a)[0])


def spectral_norm(a):
    return float(np.linalg.norm(a, 2))
