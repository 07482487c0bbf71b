"""Shared fixtures: expensive trajectories are integrated once per session,
and acceptance checks are collected for a one-line-per-criterion summary."""

from __future__ import annotations

import time
from collections import OrderedDict

import pytest

from nashadapt.config import RunConfig, load_scenario, load_scenarios
from nashadapt.sim import integrate

# long horizon for the asymptotic parameter-convergence check
EX3_LONG_T_END = 600.0

_RESULTS: "OrderedDict[int, list]" = OrderedDict()


def record(criterion: int, label: str, ok: bool, detail: str = "") -> bool:
    _RESULTS.setdefault(criterion, []).append((label, bool(ok), detail))
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_RESULTS):
        checks = _RESULTS[crit]
        ok = all(c[1] for c in checks)
        tr.write_line(f"criterion {crit}: {'PASS' if ok else 'FAIL'} "
                      f"({sum(c[1] for c in checks)}/{len(checks)} checks)")
        for label, good, detail in checks:
            tr.write_line(f"    [{'ok' if good else 'FAIL'}] {label}: {detail}")


def _timed(s):
    t0 = time.perf_counter()
    tr = integrate(s)
    return tr, time.perf_counter() - t0


@pytest.fixture(scope="session")
def ex1_run():
    return _timed(load_scenario(RunConfig("example1")))


@pytest.fixture(scope="session")
def ex1_traj(ex1_run):
    return ex1_run[0]


@pytest.fixture(scope="session")
def ex2_trajs():
    return [integrate(s) for s in load_scenarios(RunConfig("example2"))]


@pytest.fixture(scope="session")
def ex2_noadapt_trajs():
    cfg = RunConfig("example2", overrides={"adaptation": "off"})
    return [integrate(s) for s in load_scenarios(cfg)]


@pytest.fixture(scope="session")
def ex3_traj():
    return integrate(load_scenario(RunConfig("example3")))


@pytest.fixture(scope="session")
def ex3_long_traj():
    return integrate(load_scenario(RunConfig("example3", overrides={"t_end": EX3_LONG_T_END})))
