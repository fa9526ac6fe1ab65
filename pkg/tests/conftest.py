import numpy as np
import pytest

from tramlab.synth import ClassificationTaskSpec, RegressionTaskSpec, gen_classification, gen_regression
from tramlab.tram import TramWidths

SMALL_WIDTHS = TramWidths(phi=(8, 8), psi_a=(), psi_joint=(8,), activation="tanh")


@pytest.fixture
def small_widths():
    return SMALL_WIDTHS


@pytest.fixture
def reg_data():
    return gen_regression(RegressionTaskSpec(n=300), seed=3)


@pytest.fixture
def cls_data():
    return gen_classification(ClassificationTaskSpec(n=400), seed=3)


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        up = f()
        x[i] = old - h
        down = f()
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


CRITERIA_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""

    def emit(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"[criterion {number:2d}] {'PASS' if passed else 'FAIL'} {title}: {detail}"
        CRITERIA_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)
