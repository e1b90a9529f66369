import numpy as np
import pytest

from rdode import canonical_model, constant_steady_states
from rdode.domain import build_grid, make_mask, pi_glyph_spec
from rdode.stationary import fixed_point_construct

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion (printed in the summary)."""

    def record(number, title, passed, detail=""):
        _ACCEPTANCE.append((number, title, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        tr.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")


@pytest.fixture(scope="session")
def model():
    return canonical_model()


@pytest.fixture(scope="session")
def states(model):
    return constant_steady_states(model, ((-1.0, 2.0), None), 4096)


@pytest.fixture(scope="session")
def grid64():
    return build_grid(64, 64, 1.0, 1.0)


@pytest.fixture(scope="session")
def glyph64(grid64):
    return make_mask(grid64, pi_glyph_spec(grid64, 0.01))


@pytest.fixture(scope="session")
def stable50(model, states, grid64, glyph64):
    return fixed_point_construct(model, grid64, glyph64, states[0], ("left", "right"), 50.0)


@pytest.fixture(scope="session")
def small_case(model, states):
    g = build_grid(16, 16, 1.0, 1.0)
    mask = make_mask(g, {"kind": "rectangle", "x0": 0.3, "y0": 0.3, "x1": 0.55, "y1": 0.55})
    return g, mask


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
