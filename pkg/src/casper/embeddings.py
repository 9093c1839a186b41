"""Embedding lookup table and exact cosine nearest-neighbour search.

The table keeps the raw rows in float64.  Search runs in two passes: a
float32 GEMM over unit rows screens candidates, then every candidate whose
screened score lies within a rigorous rounding bound of the k-th best is
rescored in float64.  The result is identical to an exhaustive float64 scan
but costs roughly half as much.
"""

from __future__ import annotations

import gzip
import io
import logging
import os
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

_F32_EPS = float(np.finfo(np.float32).eps) / 2  # unit roundoff 2**-24

# Upper bound on elements of one (queries x |V|) float32 score matrix.
MAX_SCORE_ELEMS = 1 << 26


class MalformedLine(ValueError):
    """A GloVe line had the wrong arity or a non-numeric value."""

    def __init__(self, line_number: int, reason: str = ""):
        self.line_number = line_number
        msg = f"malformed embedding line {line_number}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class EmptyTable(ValueError):
    pass


class ZeroQuery(ValueError):
    pass


@dataclass(eq=False)
class EmbeddingTable:
    """Vocabulary plus a ``|V| x dim`` float64 matrix.

    Instances are treated as immutable once built; ``matrix`` is marked
    read-only so sharing between threads is safe.
    """

    tokens: tuple[str, ...]
    matrix: np.ndarray
    normalized: bool = False
    duplicates: int = 0
    token_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        m = np.array(self.matrix, dtype=np.float64, copy=True)
        if m.ndim != 2 or m.shape[1] < 1:
            raise ValueError("embedding matrix must be 2-D with at least one column")
        if m.shape[0] != len(self.tokens):
            raise ValueError(f"{len(self.tokens)} tokens but {m.shape[0]} rows")
        if m.shape[0] == 0:
            raise EmptyTable("embedding table has no rows")
        if not np.all(np.isfinite(m)):
            raise ValueError("embedding matrix contains non-finite values")
        index = {t: i for i, t in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise ValueError("token strings must be unique")
        m.setflags(write=False)
        self.matrix = m
        self.token_index = index
        self._norms = np.sqrt(np.einsum("ij,ij->i", m, m))
        self._unit32 = None
        self._normalized = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.token_index

    @property
    def norms(self) -> np.ndarray:
        return self._norms

    def id_of(self, token: str) -> int | None:
        return self.token_index.get(token)

    def normalized_copy(self) -> "EmbeddingTable":
        if self.normalized:
            return self
        if self._normalized is None:
            self._normalized = EmbeddingTable(self.tokens, _unit_rows(self.matrix),
                                              normalized=True, duplicates=self.duplicates)
        return self._normalized

    def unit32(self) -> np.ndarray:
        # built lazily; a benign race at worst builds it twice
        if self._unit32 is None:
            out = np.empty(self.matrix.shape, dtype=np.float32)
            for b in range(0, len(out), 65536):
                out[b:b + 65536] = _unit_rows(self.matrix[b:b + 65536])
            self._unit32 = out
        return self._unit32


def _unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.sqrt(np.einsum("ij,ij->i", m, m))
    out = np.zeros_like(m, dtype=np.float64)
    nz = norms > 0
    out[nz] = m[nz] / norms[nz, None]
    return out


def _open_source(source) -> BinaryIO:
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)
        if path.endswith(".gz"):
            return gzip.open(path, "rb")
        return open(path, "rb")
    if isinstance(source, (bytes, bytearray)):
        return io.BytesIO(source)
    return source


def load_table(source, limit: int | None = None, normalize: bool = False) -> EmbeddingTable:
    """Parse GloVe text format (``token v1 v2 ...`` per line, no header).

    ``source`` may be a path (``.gz`` is decompressed), raw bytes, or a
    binary stream.  Blank lines are skipped and ``\\r\\n`` endings accepted.
    Duplicate tokens keep their first row; the number dropped is stored on
    ``table.duplicates``.
    """
    if limit is not None and limit < 1:
        raise ValueError("limit must be positive")
    stream = _open_source(source)
    close = stream is not source
    tokens: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    dim = None
    duplicates = 0
    try:
        for lineno, raw in enumerate(stream, start=1):
            line = raw.decode("utf-8").rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split(" ")
            token, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim < 1:
                    raise MalformedLine(lineno, "no values")
            if len(values) != dim:
                raise MalformedLine(lineno, f"expected {dim} values, got {len(values)}")
            try:
                row = np.array(values, dtype=np.float64)
            except ValueError as exc:
                raise MalformedLine(lineno, str(exc)) from None
            if not np.all(np.isfinite(row)):
                raise MalformedLine(lineno, "non-finite value")
            if token in seen:
                duplicates += 1
                continue
            seen.add(token)
            tokens.append(token)
            rows.append(row)
            if limit is not None and len(tokens) >= limit:
                break
    finally:
        if close:
            stream.close()
    if not tokens:
        raise EmptyTable("no embedding rows found")
    if duplicates:
        logger.warning("skipped %d duplicate vocabulary entries", duplicates)
    matrix = np.vstack(rows)
    if normalize:
        matrix = _unit_rows(matrix)
    return EmbeddingTable(tokens, matrix, normalized=normalize, duplicates=duplicates)


def embed(table: EmbeddingTable, token: str) -> np.ndarray | None:
    """Row for ``token``, or ``None`` when it is out of vocabulary."""
    idx = table.token_index.get(token)
    if idx is None:
        return None
    return table.matrix[idx]


def cosine_distances(table: EmbeddingTable, queries: np.ndarray) -> np.ndarray:
    """Exact float64 ``1 - cos`` between each query and every row.

    Zero rows have similarity 0 (distance 1) to everything.
    """
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    qn = np.linalg.norm(q, axis=1)
    if np.any(qn < 1e-12):
        raise ZeroQuery("query vector has (near) zero norm")
    sims = (q @ table.matrix.T) / qn[:, None]
    norms = table.norms
    nz = norms > 0
    sims[:, nz] /= norms[nz]
    sims[:, ~nz] = 0.0
    return 1.0 - sims


def _rescore(table, q, qnorm, cand):
    rows = table.matrix[cand]
    norms = table.norms[cand]
    dots = rows @ q
    sims = np.zeros(len(cand))
    nz = norms > 0
    sims[nz] = dots[nz] / (norms[nz] * qnorm)
    return 1.0 - sims


def nearest_neighbors_batch(
    table: EmbeddingTable,
    queries: np.ndarray,
    k: int,
    exclude: Sequence[Iterable[int] | None] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-``k`` cosine neighbours for a batch of queries.

    Returns ``(ids, distances)`` of shape ``(m, k')`` with
    ``k' = min(k, |V| - max excluded)``.  Rows are sorted by ascending
    distance, ties by lower id.  ``exclude[i]`` lists ids barred for query i.
    If the per-query exclusion sizes differ, the shorter rows are padded with
    ``-1`` / ``nan``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    m, dim = q.shape
    if dim != table.dim:
        raise ValueError(f"query dim {dim} != table dim {table.dim}")
    if not np.all(np.isfinite(q)):
        raise ValueError("query contains non-finite values")
    qnorm = np.linalg.norm(q, axis=1)
    if np.any(qnorm < 1e-12):
        raise ZeroQuery("query vector has (near) zero norm")
    nv = len(table)
    excl = [np.asarray(sorted(set(e)), dtype=np.int64) if e else np.empty(0, np.int64)
            for e in (exclude or [None] * m)]
    if len(excl) != m:
        raise ValueError("exclude must have one entry per query")
    kq = np.array([min(k, nv - len(e)) for e in excl])
    kmax = int(kq.max()) if m else 0
    out_ids = np.full((m, max(kmax, 0)), -1, dtype=np.int64)
    out_d = np.full((m, max(kmax, 0)), np.nan)
    if m == 0 or kmax <= 0:
        return out_ids, out_d

    unit = table.unit32()
    q32 = (q / qnorm[:, None]).astype(np.float32)
    # |float32 score - exact score| <= delta for unit vectors; doubled for margin
    delta = 2.0 * (dim + 4) * _F32_EPS
    step = max(1, min(m, MAX_SCORE_ELEMS // nv))
    for start in range(0, m, step):
        stop = min(m, start + step)
        scores = q32[start:stop] @ unit.T  # (batch, nv)
        for r, qi in enumerate(range(start, stop)):
            if len(excl[qi]):
                scores[r, excl[qi]] = -np.inf
        kk = kq[start:stop]
        if kmax == 1:
            tau = scores.max(axis=1)
        else:
            part = -np.partition(-scores, kmax - 1, axis=1)[:, :kmax]
            tau = part[np.arange(len(kk)), kk - 1]
        thresh = tau - 2.0 * delta
        for r, qi in enumerate(range(start, stop)):
            cand = np.flatnonzero(scores[r] >= thresh[r])
            d = _rescore(table, q[qi], qnorm[qi], cand)
            order = np.lexsort((cand, d))[: kq[qi]]
            out_ids[qi, : kq[qi]] = cand[order]
            out_d[qi, : kq[qi]] = d[order]
    return out_ids, out_d


def nearest_neighbors(
    table: EmbeddingTable,
    query: np.ndarray,
    k: int,
    exclude: Iterable[int] | None = None,
) -> list[tuple[int, float]]:
    """Ranked ``(token_id, cosine_distance)`` pairs for one query."""
    ids, dists = nearest_neighbors_batch(table, np.asarray(query)[None, :], k,
                                         exclude=[exclude])
    return [(int(i), float(d)) for i, d in zip(ids[0], dists[0]) if i >= 0]
