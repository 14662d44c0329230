"""Shared, cached filter banks for the semicircular-array study."""

from functools import lru_cache

import numpy as np
import pytest

from bsm.array import semi_circular_preset
from bsm.design import DesignSpec, design_filter_bank
from bsm.hrtf import sphere_head_surrogate


@lru_cache(maxsize=None)
def surrogate():
    return sphere_head_surrogate(freqs=[1.0])


@lru_cache(maxsize=None)
def study_bank(cutoff_hz: float, rotation_deg: float = 0.0):
    """Bank for the default study setup; ``cutoff_hz=inf`` is complex LS throughout."""
    spec = DesignSpec(semi_circular_preset(), cutoff_hz=cutoff_hz, rotation=(0.0, np.radians(rotation_deg)))
    return design_filter_bank(spec, surrogate())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -- acceptance reporting ----------------------------------------------------------

_SESSION = {"start": None, "lines": []}


def pytest_sessionstart(session):
    import time

    _SESSION["start"] = time.perf_counter()


def pytest_collection_modifyitems(items):
    """Run the suite-runtime check last so it sees the whole session."""
    last = [i for i in items if i.name == "test_criterion_8_suite_runtime"]
    items[:] = [i for i in items if i not in last] + last


def session_elapsed():
    import time

    return time.perf_counter() - _SESSION["start"]


@pytest.fixture
def criterion():
    """``criterion(label, passed, detail)`` records and prints one verdict line."""

    def record(label, passed, detail=""):
        line = f"criterion {label}: {'PASS' if passed else 'FAIL'}  {detail}".rstrip()
        _SESSION["lines"].append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _SESSION["lines"]:
        terminalreporter.section("acceptance criteria")
        for line in _SESSION["lines"]:
            terminalreporter.write_line(line)
