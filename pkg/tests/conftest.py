"""Shared small scenarios; built once per session."""
from __future__ import annotations

import numpy as np
import pytest

from varext.dyadic import build_lattice
from varext.geometry import build_scenario
from varext.whitney import build_whitney


class Setup:
    def __init__(self, kind, scenario_kw, whitney_kw):
        self.model = build_scenario(kind, **scenario_kw)
        self.lattice = build_lattice(self.model)
        self.grid = build_whitney(self.model, self.lattice, **whitney_kw)


@pytest.fixture(scope="session")
def hp():
    """Unit half-plane window, 256 atoms, Whitney band down to generation 8."""
    return Setup("half_plane", dict(n_atoms=256), {})


@pytest.fixture(scope="session")
def fc():
    """Four-corner Cantor set of generation 3."""
    return Setup("four_corner_cantor", dict(generation=3), dict(j_hi=8))


@pytest.fixture(scope="session")
def ld():
    """Two-map Cantor set of dimension 1/2, generation 3."""
    return Setup("lower_dim_cantor", dict(generation=3), dict(j_hi=8))


@pytest.fixture(scope="session")
def graph():
    """Zigzag Lipschitz graph with 256 atoms."""
    return Setup("lipschitz_graph", dict(n_atoms=256), {})


@pytest.fixture(params=["hp", "fc", "ld", "graph"])
def any_setup(request):
    return request.getfixturevalue(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion(request):
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    rows = request.config.__dict__.setdefault("_acceptance_rows", [])

    def record(number, title, checks):
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{name}={'ok' if good else 'FAIL'} ({info})" for name, good, info in checks)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
        rows.append((number, line))
        print(line)
        failed = [c[0] for c in checks if not c[1]]
        assert not failed, f"criterion {number} failed checks: {failed}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.__dict__.get("_acceptance_rows")
    if not rows:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for _, line in sorted(rows, key=lambda r: r[0]):
        terminalreporter.write_line(line)
