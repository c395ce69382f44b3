import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from oscham.kam import GOLDEN, kam_iterate
from oscham.perturbation import PerturbationSpec, assemble_P, element_table

DATA = Path(__file__).parent / "data"
ALPHA_BUNDLED = 1.0 / 18.0


@pytest.fixture(scope="session")
def bundled_spec():
    text = resources.files("oscham.data").joinpath("bundled_spec.json").read_text()
    return PerturbationSpec.from_dict(json.loads(text))


@pytest.fixture(scope="session")
def bundled_tables32(bundled_spec):
    return element_table(bundled_spec, 32)


@pytest.fixture(scope="session")
def bundled_P32(bundled_spec, bundled_tables32):
    return assemble_P(bundled_spec, 32, tables=bundled_tables32)


@pytest.fixture(scope="session")
def kam_runs(bundled_P32):
    """KAM states on the bundled spec for a ladder of eps."""
    out = {}
    for eps in (1e-3, 1.25e-4, 1e-4, 1e-5):
        out[eps] = kam_iterate(bundled_P32, eps, ALPHA_BUNDLED, 1.0, [GOLDEN])
    return out


@pytest.fixture(scope="session")
def oracle_m20():
    return json.loads((DATA / "oracle_m20.json").read_text())


def unit(dim, modes):
    xi = np.zeros(dim, dtype=complex)
    xi[np.asarray(modes) - 1] = 1.0
    return xi / np.linalg.norm(xi)


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_line():
    """Record a one-line verdict; printed immediately and again in the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
