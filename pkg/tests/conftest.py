import numpy as np
import pytest

from ctopt.impl_lib import characterize_all, load_catalog
from ctopt.pipeline import default_liberty_path, load_library
from ctopt.sta import TimingModel
from ctopt.tree import build_tree


@pytest.fixture(scope="session")
def lib_path():
    return default_liberty_path()


@pytest.fixture(scope="session")
def lib(lib_path):
    return load_library(lib_path)


@pytest.fixture(scope="session")
def impls(lib):
    return characterize_all(load_catalog(), lib)


@pytest.fixture(scope="session")
def tree4():
    return build_tree(4, 4)


@pytest.fixture(scope="session")
def tree8():
    return build_tree(8, 8)


@pytest.fixture(scope="session")
def tm4(tree4, impls):
    return TimingModel(tree4, impls)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one pass/fail line per acceptance criterion."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[number] = (bool(ok), detail)
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
