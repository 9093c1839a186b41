import io

import numpy as np
import pytest

from casper.embeddings import EmbeddingTable, load_table

TOY_TEXT = b"a 1.0 0.0\nb 0.0 1.0\nc -1.0 0.0\n"


@pytest.fixture
def toy():
    """Three 2-D tokens: a=(1,0), b=(0,1), c=(-1,0)."""
    return load_table(io.BytesIO(TOY_TEXT))


@pytest.fixture
def small_table():
    rng = np.random.default_rng(7)
    return EmbeddingTable([f"t{i}" for i in range(150)], rng.standard_normal((150, 8)))


def brute_force_nn(matrix, query, k, exclude=()):
    """Independent oracle: exact cosine distances, ties to the lower id."""
    m = np.asarray(matrix, dtype=np.float64)
    q = np.asarray(query, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1)
    d = []
    for i in range(len(m)):
        if i in exclude:
            continue
        cos = 0.0 if norms[i] == 0 else float(m[i] @ q) / (norms[i] * np.linalg.norm(q))
        d.append((1.0 - cos, i))
    d.sort()
    return [i for _, i in d[:k]], [x for x, _ in d[:k]]


# Acceptance tests append one line each here; printed after the run so the
# per-criterion verdicts appear in plain `pytest -v` output.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
