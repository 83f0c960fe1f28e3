import sys
import dataclasses

import pytest

from epictl.experiments import preset_table1, preset_uk2021
from epictl.model import Controls, StateVector


@pytest.fixture(scope="session")
def table1_cfg():
    return preset_table1()


@pytest.fixture(scope="session")
def uk_cfg():
    return preset_uk2021()


@pytest.fixture(scope="session")
def table1(table1_cfg):
    return table1_cfg.params


@pytest.fixture
def x0():
    return StateVector(beta=1.0, s_pop=99.8, i_pop=0.1, r_pop=0.1)


@pytest.fixture
def u_table1():
    return Controls(e_lock=1.0, v_vacc=0.674)


def with_sigma(params, sigma):
    return params.replace(sigma=tuple(sigma))


def sim_cfg(cfg, **kw):
    return dataclasses.replace(cfg.sim, **kw)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in sorted(results):
            terminalreporter.write_line(line)
