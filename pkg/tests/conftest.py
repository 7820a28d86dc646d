import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from takg import toy  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def overfit_bundle():
    return toy.bundle(toy.overfit_facts())


@pytest.fixture(scope="session")
def split_bundle():
    facts = toy.overfit_facts(n_facts=70, seed=3)
    return toy.bundle(facts[:50], facts[50:60], facts[60:])


@pytest.fixture
def toy_dir(tmp_path):
    facts = toy.overfit_facts()
    toy.write_split_files(tmp_path / "toy", facts, facts[:10], facts[10:20])
    return tmp_path / "toy"


# ------------------------------------------------------ acceptance report

_CRITERIA = []


@pytest.fixture
def criterion():
    """``criterion(label, ok, detail)`` records a PASS/FAIL line, then asserts."""

    def record(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}" + (f"  ({detail})" if detail else "")
        _CRITERIA.append(line)
        print(line)
        assert ok, f"{label}: {detail}"

    def skip(label, reason):
        _CRITERIA.append(f"SKIP  {label}  ({reason})")
        pytest.skip(reason)

    record.skip = skip
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
