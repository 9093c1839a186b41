import gzip
import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from casper import embeddings as emb
from casper.embeddings import (
    EmbeddingTable,
    EmptyTable,
    MalformedLine,
    ZeroQuery,
    cosine_distances,
    embed,
    load_table,
    nearest_neighbors,
    nearest_neighbors_batch,
)

from conftest import TOY_TEXT, brute_force_nn


def test_load_toy(toy):
    assert len(toy) == 3 and toy.dim == 2
    assert list(toy.tokens) == ["a", "b", "c"]
    np.testing.assert_array_equal(toy.matrix, [[1, 0], [0, 1], [-1, 0]])


def test_arity_mismatch_reports_line():
    with pytest.raises(MalformedLine) as info:
        load_table(io.BytesIO(b"a 1.0 0.0\nb 0.5"))
    assert info.value.line_number == 2


def test_unparsable_number():
    with pytest.raises(MalformedLine) as info:
        load_table(io.BytesIO(b"a 1.0 0.0\nb x 0.5\n"))
    assert info.value.line_number == 2


def test_limit_truncates(toy):
    t = load_table(io.BytesIO(TOY_TEXT), limit=2)
    assert list(t.tokens) == ["a", "b"]


def test_empty_source_raises():
    with pytest.raises(EmptyTable):
        load_table(io.BytesIO(b"\n\n"))


def test_crlf_and_blank_lines():
    t = load_table(io.BytesIO(b"a 1 0\r\n\r\nb 0 1\r\n"))
    assert list(t.tokens) == ["a", "b"]


def test_duplicates_keep_first(caplog):
    t = load_table(io.BytesIO(b"a 1 0\na 0 1\nb 0 1\n"))
    assert list(t.tokens) == ["a", "b"] and t.duplicates == 1
    np.testing.assert_array_equal(t.matrix[0], [1, 0])


def test_gzip_path(tmp_path):
    p = tmp_path / "t.txt.gz"
    with gzip.open(p, "wb") as fh:
        fh.write(TOY_TEXT)
    assert list(load_table(str(p)).tokens) == ["a", "b", "c"]


def test_normalize_flag():
    t = load_table(io.BytesIO(b"a 3 4\nb 0 2\n"), normalize=True)
    np.testing.assert_allclose(np.linalg.norm(t.matrix, axis=1), 1.0)
    assert t.normalized


def test_matrix_is_read_only(toy):
    with pytest.raises(ValueError):
        toy.matrix[0, 0] = 5.0


def test_embed(toy):
    np.testing.assert_array_equal(embed(toy, "b"), [0, 1])
    assert embed(toy, "zzz") is None
    np.testing.assert_array_equal(embed(toy.normalized_copy(), "a"), [1, 0])


def test_toy_neighbors(toy):
    q = np.array([0.9, 0.1])
    res = nearest_neighbors(toy, q, 2)
    assert [i for i, _ in res] == [0, 1]
    # brute force: 0.0061 < 0.8896 < 1.9939
    assert res[0][1] == pytest.approx(0.0061, abs=1e-4)
    assert res[1][1] == pytest.approx(0.8896, abs=1e-4)
    assert [i for i, _ in nearest_neighbors(toy, q, 2, exclude={0})] == [1, 2]
    assert [i for i, _ in nearest_neighbors(toy, np.array([1.0, 0.0]), 10)] == [0, 1, 2]


def test_ties_go_to_lower_id(toy):
    # (0, 1) query: a and c are both at distance 1
    res = nearest_neighbors(toy, np.array([0.0, 1.0]), 3)
    assert [i for i, _ in res] == [1, 0, 2]


def test_zero_query_rejected(toy):
    with pytest.raises(ZeroQuery):
        nearest_neighbors(toy, np.zeros(2), 1)
    with pytest.raises(ZeroQuery):
        cosine_distances(toy, np.zeros(2))


def test_non_finite_query_rejected(toy):
    with pytest.raises(ValueError):
        nearest_neighbors(toy, np.array([np.nan, 1.0]), 1)


def test_zero_row_has_distance_one():
    t = EmbeddingTable(["z", "a"], np.array([[0.0, 0.0], [1.0, 0.0]]))
    d = cosine_distances(t, np.array([0.0, 1.0]))[0]
    assert d[0] == 1.0 and d[1] == pytest.approx(1.0)


def test_near_ties_resolved_exactly():
    # two rows whose cosines to the query differ by ~1e-12: float32 alone
    # cannot order them, the exact rescore must
    base = np.array([1.0, 0.3, 0.0])
    rows = np.array([base + [0, 0, 2e-6], base + [0, 0, 1e-6], [0.0, 1.0, 0.0]])
    t = EmbeddingTable(["x", "y", "z"], rows)
    q = base.copy()
    ids, d = nearest_neighbors_batch(t, q[None], 2)
    oracle_ids, oracle_d = brute_force_nn(rows, q, 2)
    assert ids[0].tolist() == oracle_ids
    np.testing.assert_allclose(d[0], oracle_d, atol=1e-15)


def test_batch_chunking_matches(monkeypatch, small_table):
    rng = np.random.default_rng(0)
    q = rng.standard_normal((40, 8))
    full = nearest_neighbors_batch(small_table, q, 4)
    monkeypatch.setattr(emb, "MAX_SCORE_ELEMS", 300)
    chunked = nearest_neighbors_batch(small_table, q, 4)
    np.testing.assert_array_equal(full[0], chunked[0])


def test_ragged_exclusions_are_padded(toy):
    ids, d = nearest_neighbors_batch(toy, np.array([[1.0, 0.0], [1.0, 0.0]]), 3,
                                     exclude=[{0}, None])
    assert ids.tolist() == [[1, 2, -1], [0, 1, 2]]
    assert math.isnan(d[0, 2])


@settings(max_examples=60, deadline=None, derandomize=True)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 120), dim=st.integers(1, 10),
       k=st.integers(1, 12), quantize=st.booleans())
def test_matches_brute_force(seed, n, dim, k, quantize):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((n, dim))
    if quantize:  # coarse grid => many exact ties and duplicate rows
        m = np.round(m)
    t = EmbeddingTable([str(i) for i in range(n)], m)
    q = rng.standard_normal(dim)
    if not np.linalg.norm(q) > 1e-6:
        q[0] = 1.0
    excl = set(rng.choice(n, size=min(n - 1, 2), replace=False).tolist()) if n > 1 else set()
    ids, d = nearest_neighbors_batch(t, q[None], k, exclude=[excl])
    o_ids, o_d = brute_force_nn(m, q, k, excl)
    got = [i for i in ids[0].tolist() if i >= 0]
    assert len(got) == len(o_ids) and not set(got) & excl
    np.testing.assert_allclose(d[0][: len(o_d)], o_d, atol=1e-12)
    # ids agree wherever the oracle ranking is not an exact tie
    everything, all_d = brute_force_nn(m, q, n, excl)
    exact = dict(zip(everything, all_d))
    for rank, i in enumerate(got):
        assert abs(exact[i] - o_d[rank]) <= 1e-12
        tied = [j for j in everything if abs(exact[j] - o_d[rank]) <= 1e-12]
        if len(tied) == 1:
            assert i == o_ids[rank]
