import numpy as np
import pytest

from heal.tensor import Tape


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fd_gradient(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of scalar ``fn`` at ``x`` (independent of the tape)."""
    x = x.astype(np.float64).copy()
    out = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + eps
        hi = fn(x)
        x[idx] = orig - eps
        lo = fn(x)
        x[idx] = orig
        out[idx] = (hi - lo) / (2 * eps)
    return out


def tape_value(build, *arrays):
    """Evaluate ``build(tape, *vars)`` on a fresh tape and return the float result."""
    tape = Tape()
    return float(build(tape, *(tape.const(a) for a in arrays)).value[0, 0])


def naive_matmul(a, b):
    n, m = len(a), len(a[0])
    p = len(b[0])
    out = [[0.0] * p for _ in range(n)]
    for i in range(n):
        for j in range(p):
            acc = 0.0
            for t in range(m):
                acc += a[i][t] * b[t][j]
            out[i][j] = acc
    return np.array(out)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def check(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
