import numpy as np
import pytest

from mdseg.maskcore import LabelSpace, SegCategory
from mdseg.semantics import ClassEmbeddingTable, normalize_embedding


def make_space(names, things=None, index="test-time"):
    things = things if things is not None else [True] * len(names)
    return LabelSpace(
        index,
        tuple(
            SegCategory(i + 1, n, t, index) for i, (n, t) in enumerate(zip(names, things))
        ),
    )


def make_table(names, vectors, index=1):
    space = make_space(names, index=index)
    return ClassEmbeddingTable(space, tuple(np.asarray(v, dtype=float) for v in vectors))


def basis_table(names, dim, offset=0, index=1):
    """Table whose class embeddings are distinct standard basis vectors."""
    vecs = []
    for i in range(len(names)):
        v = np.zeros(dim)
        v[(offset + i) % dim] = 1.0
        vecs.append(v)
    return make_table(names, vecs, index=index)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, report.outcome.upper()))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{name}: {outcome}")
