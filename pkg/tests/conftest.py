import numpy as np
import pytest

from phasorgrid.assembly import build_model, initialize, solve_power_flow
from phasorgrid.config import bundled_case, load_config

ACCEPTANCE_LINES = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture(scope="session")
def case_cfg():
    return {c: load_config(bundled_case(c)) for c in ("case1", "case2")}


@pytest.fixture(scope="session")
def power_flows(case_cfg):
    return {c: solve_power_flow(cfg) for c, cfg in case_cfg.items()}


@pytest.fixture(scope="session")
def operating_points(case_cfg, power_flows):
    out = {}
    for c, cfg in case_cfg.items():
        for fw in ("spc", "qpc"):
            m = build_model(cfg, power_flows[c], fw)
            out[c, fw] = initialize(m, power_flows[c])
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
