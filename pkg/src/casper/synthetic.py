"""Synthetic embedding tables and sentences for demos, tests and benchmarks."""

from __future__ import annotations

from typing import IO, Sequence

import numpy as np

from .embeddings import EmbeddingTable


def gaussian_table(n: int, dim: int, seed: int = 0, *, extra_tokens: Sequence[str] = (),
                   prefix: str = "w") -> EmbeddingTable:
    """``n`` random tokens ``w0, w1, ...`` with i.i.d. N(0, 1/dim) entries (norm near 1).

    ``extra_tokens`` (e.g. stopwords) are appended as further rows so
    sentences can mix content words with function words.
    """
    rng = np.random.default_rng(seed)
    tokens = [f"{prefix}{i}" for i in range(n)] + [t for t in extra_tokens]
    mat = rng.standard_normal((len(tokens), dim)) / np.sqrt(dim)
    return EmbeddingTable(tokens, mat)


def random_sentences(vocab: Sequence[str], count: int, length=(5, 20), seed: int = 0,
                     *, stopwords: Sequence[str] = (), stop_rate: float = 0.0,
                     oov_rate: float = 0.0) -> list[list[str]]:
    """Uniform random token sequences.

    ``stop_rate`` of positions are drawn from ``stopwords`` and ``oov_rate``
    are filled with tokens that are not in any table (``<oov123>``).
    """
    rng = np.random.default_rng(seed)
    lo, hi = (length, length) if np.isscalar(length) else length
    vocab = list(vocab)
    stopwords = list(stopwords)
    out = []
    for _ in range(count):
        n = int(rng.integers(lo, hi + 1))
        words = [vocab[j] for j in rng.integers(0, len(vocab), n)]
        u = rng.random(n)
        for i in range(n):
            if stopwords and u[i] < stop_rate:
                words[i] = stopwords[int(rng.integers(len(stopwords)))]
            elif u[i] > 1.0 - oov_rate:
                words[i] = f"<oov{int(rng.integers(10**6))}>"
        out.append(words)
    return out


def write_glove(table: EmbeddingTable, stream: IO[str], precision: int = 6) -> None:
    """Write ``table`` in the whitespace-separated GloVe text format."""
    fmt = f"{{:.{precision}g}}"
    for tok, row in zip(table.tokens, table.matrix):
        stream.write(tok + " " + " ".join(fmt.format(v) for v in row) + "\n")
