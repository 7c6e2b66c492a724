import random

import numpy as np
import pytest

from colstore.model import ELEMENT_DTYPES, FUNDAMENTAL_TYPES, Dataset, FieldSpec, Schema

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and (rep.when == "call" or rep.failed):
        number, title = marker.args
        prev = _ACCEPTANCE.get(number, ("passed", title))[0]
        _ACCEPTANCE[number] = ("failed" if "failed" in (prev, rep.outcome) else rep.outcome, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        outcome, title = _ACCEPTANCE[number]
        status = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


def random_values(rng: np.random.Generator, element_type: str, n: int) -> np.ndarray:
    dtype = np.dtype(ELEMENT_DTYPES[element_type])
    if dtype.kind == "f":
        return rng.standard_normal(n).astype(dtype)
    info = np.iinfo(dtype)
    return rng.integers(info.min, info.max, size=n, dtype=dtype, endpoint=True)


def random_dataset(seed: int, max_entries: int = 2000, max_fields: int = 5, max_list: int = 4) -> Dataset:
    """Random schema (scalars and var-lists) filled with random values."""
    py = random.Random(seed)
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(py.randint(1, max_fields)):
        if py.random() < 0.3:
            specs.append(FieldSpec(f"f{i}", "var-list", py.choice(FUNDAMENTAL_TYPES)))
        else:
            specs.append(FieldSpec(f"f{i}", py.choice(FUNDAMENTAL_TYPES + ("index",))))
    schema = Schema(tuple(specs))
    n = py.randint(0, max_entries)
    columns = []
    for f in schema.fields:
        if f.is_var_list:
            lengths = rng.integers(0, max_list + 1, size=n).astype(np.uint64)
            offsets = np.cumsum(lengths, dtype=np.uint64)
            columns.append(offsets)
            columns.append(random_values(rng, f.element_type, int(offsets[-1]) if n else 0))
        else:
            columns.append(random_values(rng, f.type, n))
    return Dataset(schema, n, columns)


@pytest.fixture
def store_dir(tmp_path):
    return tmp_path / "store"
