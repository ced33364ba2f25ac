import functools

import pytest

from red.envs import generate_expert_dataset
from red.estimators import fit_autoencoder, fit_rnd


@functools.lru_cache(maxsize=None)
def simple_data(n, seed):
    return generate_expert_dataset("simple", n, seed=seed)


@functools.lru_cache(maxsize=None)
def default_rnd(n, seed):
    """Default-architecture, default-steps RND fit; cached across the session."""
    return fit_rnd(simple_data(n, seed), seed=seed)


@functools.lru_cache(maxsize=None)
def default_ae(n, seed):
    return fit_autoencoder(simple_data(n, seed), seed=seed)


@pytest.fixture(scope="session")
def rnd100():
    return simple_data(100, 0), default_rnd(100, 0)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def report(label, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
