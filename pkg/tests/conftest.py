import numpy as np
import pytest

from rdc.episodes import Episode
from rdc.harness import benchmark_embeddings

_CRITERIA: list[tuple[str, bool, str]] = []


def make_episode(C: int, K: int, Q: int) -> Episode:
    """Episode whose rows are 0..n-1 in episode order (supports first)."""
    ns = C * K
    return Episode(
        support_rows=np.arange(ns),
        support_labels=np.repeat(np.arange(C), K),
        query_rows=np.arange(ns, ns + C * Q),
        query_true_labels=np.repeat(np.arange(C), Q),
        C=C,
        K=K,
        Q=Q,
    )


@pytest.fixture(scope="session")
def bench():
    return benchmark_embeddings()


@pytest.fixture
def criterion():
    """Record one pass/fail line for the acceptance summary."""

    def record(name: str, ok: bool, detail: str) -> bool:
        _CRITERIA.append((name, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _CRITERIA:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
