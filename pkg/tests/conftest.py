import numpy as np
import pytest

from minplus import QuadForm, QuadSet


def random_form(rng, n, spd=True, scale=1.0):
    A = rng.normal(size=(n, n))
    q11 = A @ A.T + 0.5 * np.eye(n) if spd else A + A.T
    return QuadForm.from_blocks(q11, scale * rng.normal(size=n), scale * rng.normal())


def random_set(rng, n, size, spd=True):
    return QuadSet([random_form(rng, n, spd) for _ in range(size)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    def record(tag, ok, detail):
        ACCEPTANCE_LINES.append(f"{tag} {'PASS' if ok else 'FAIL'}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0].split("-")[1])):
            terminalreporter.write_line(line)
