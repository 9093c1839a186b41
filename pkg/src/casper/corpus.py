"""Tokenisation, stopwords, and streaming corpus sanitisation."""

from __future__ import annotations

import json
import logging
import os
import string
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from typing import IO, Iterable, Iterator

import numpy as np

from .embeddings import EmbeddingTable
from .mechanisms import (
    MechanismConfig,
    SanitizedToken,
    plan_sentence,
    prepare_table,
    resolve_plans,
)
from .noise import RngState

logger = logging.getLogger(__name__)

_PUNCT = set(string.punctuation)


class CorpusError(RuntimeError):
    pass


def tokenize(text: str) -> list[str]:
    """Whitespace split; leading and trailing ASCII punctuation become tokens.

    >>> tokenize("The movie was great.")
    ['The', 'movie', 'was', 'great', '.']
    """
    out = []
    for chunk in text.split():
        lead = 0
        while lead < len(chunk) and chunk[lead] in _PUNCT:
            lead += 1
        if lead == len(chunk):
            out.extend(chunk)
            continue
        trail = len(chunk)
        while chunk[trail - 1] in _PUNCT:
            trail -= 1
        out.extend(chunk[:lead])
        out.append(chunk[lead:trail])
        out.extend(chunk[trail:])
    return out


class Stopwords:
    """Membership set; case-folded unless ``case_sensitive``."""

    def __init__(self, words: Iterable[str] = (), case_sensitive: bool = False):
        self.case_sensitive = case_sensitive
        fold = (lambda w: w) if case_sensitive else str.casefold
        self._words = frozenset(fold(w) for w in words)
        self._fold = fold

    def __contains__(self, word) -> bool:
        return isinstance(word, str) and self._fold(word) in self._words

    def __len__(self):
        return len(self._words)

    def __iter__(self):
        return iter(sorted(self._words))

    def __eq__(self, other):
        if isinstance(other, Stopwords):
            return self._words == other._words
        return self._words == set(other)


def load_stopwords(source, case_sensitive: bool = False) -> Stopwords:
    """One word per line from a path, text/binary stream or bytes."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    elif isinstance(source, (bytes, bytearray)):
        data = bytes(source)
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    words = [w.strip() for w in data.splitlines()]
    return Stopwords((w for w in words if w), case_sensitive=case_sensitive)


def default_stopwords(case_sensitive: bool = False) -> Stopwords:
    """The bundled 179-word English list."""
    data = resources.files("casper").joinpath("data/stopwords_en.txt").read_bytes()
    return load_stopwords(data, case_sensitive=case_sensitive)


@dataclass
class SentenceRecord:
    id: object
    original_tokens: list[str]
    sanitized_tokens: list[str]
    stopword_mask: list[bool]
    oov_mask: list[bool]

    def __post_init__(self):
        n = len(self.original_tokens)
        if not (len(self.sanitized_tokens) == len(self.stopword_mask) == len(self.oov_mask) == n):
            raise ValueError("record lists must have equal length")
        for i in range(n):
            if (self.stopword_mask[i] or self.oov_mask[i]) and \
                    self.sanitized_tokens[i] != self.original_tokens[i]:
                raise ValueError(f"masked position {i} was altered")

    @classmethod
    def from_tokens(cls, rec_id, sanitized: list[SanitizedToken]) -> "SentenceRecord":
        return cls(rec_id, [t.original for t in sanitized], [t.replacement for t in sanitized],
                   [t.was_stopword for t in sanitized], [t.was_oov for t in sanitized])

    @classmethod
    def from_dict(cls, d: dict) -> "SentenceRecord":
        return cls(d["id"], list(d["original_tokens"]), list(d["sanitized_tokens"]),
                   [bool(x) for x in d["stopword_mask"]], [bool(x) for x in d["oov_mask"]])

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "original_tokens": self.original_tokens,
            "sanitized_tokens": self.sanitized_tokens,
            "stopword_mask": self.stopword_mask,
            "oov_mask": self.oov_mask,
        }

    def evaluated_positions(self) -> list[int]:
        return [i for i, (s, o) in enumerate(zip(self.stopword_mask, self.oov_mask))
                if not (s or o)]


@dataclass
class CorpusStats:
    """Running totals over emitted records.

    ``replaced`` counts positions the mechanism ran on (neither stopword nor
    OOV), whether or not it returned the original token.
    """

    sentences: int = 0
    tokens: int = 0
    oov: int = 0
    stopwords: int = 0
    replaced: int = 0
    errors: int = 0
    _cos_sum: float = field(default=0.0, repr=False)

    @property
    def oov_rate(self) -> float:
        return self.oov / self.tokens if self.tokens else 0.0

    @property
    def stopword_rate(self) -> float:
        return self.stopwords / self.tokens if self.tokens else 0.0

    @property
    def replaced_rate(self) -> float:
        return self.replaced / self.tokens if self.tokens else 0.0

    @property
    def mean_cosine_similarity(self) -> float:
        # no evaluated tokens: nothing moved, report perfect similarity
        return self._cos_sum / self.replaced if self.replaced else 1.0

    def update(self, record: SentenceRecord, table: EmbeddingTable, lowercase: bool = False):
        self.sentences += 1
        self.tokens += len(record.original_tokens)
        self.oov += sum(record.oov_mask)
        self.stopwords += sum(s and not o for s, o in zip(record.stopword_mask, record.oov_mask))
        pos = record.evaluated_positions()
        self.replaced += len(pos)
        if pos:
            self._cos_sum += float(token_cosines(table, [record.original_tokens[i] for i in pos],
                                                 [record.sanitized_tokens[i] for i in pos],
                                                 lowercase).sum())

    @classmethod
    def from_records(cls, records: Iterable[SentenceRecord], table: EmbeddingTable,
                     lowercase: bool = False) -> "CorpusStats":
        stats = cls()
        for r in records:
            stats.update(r, table, lowercase)
        return stats

    def to_dict(self) -> dict:
        return {
            "sentences": self.sentences,
            "tokens": self.tokens,
            "errors": self.errors,
            "oov_rate": self.oov_rate,
            "stopword_rate": self.stopword_rate,
            "replaced_rate": self.replaced_rate,
            "mean_cosine_similarity": self.mean_cosine_similarity,
        }


def token_cosines(table: EmbeddingTable, originals, replacements, lowercase=False) -> np.ndarray:
    a = [table.token_index[t.lower() if lowercase else t] for t in originals]
    b = [table.token_index[t] for t in replacements]
    x, y = table.matrix[a], table.matrix[b]
    den = table.norms[a] * table.norms[b]
    dots = np.einsum("ij,ij->i", x, y)
    return np.divide(dots, den, out=np.zeros_like(dots), where=den > 0)


# -- record I/O -------------------------------------------------------------


@dataclass(frozen=True)
class BadRecord:
    line: int
    reason: str


def read_records(stream: IO[str], fmt: str = "auto") -> Iterator[dict | BadRecord]:
    """Parse JSONL ``{id, text}`` / ``{id, tokens}`` or TSV ``id<TAB>text``.

    Blank lines are skipped; unparsable lines come back as :class:`BadRecord`
    so the caller can apply its error budget.
    """
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        as_json = fmt == "jsonl" or (fmt == "auto" and line.lstrip().startswith("{"))
        if as_json:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield BadRecord(lineno, f"invalid JSON: {exc.msg}")
                continue
            if not isinstance(obj, dict) or "id" not in obj:
                yield BadRecord(lineno, "record must be an object with an 'id'")
            elif isinstance(obj.get("tokens"), list) and all(isinstance(t, str) for t in obj["tokens"]):
                yield {"id": obj["id"], "tokens": obj["tokens"]}
            elif isinstance(obj.get("text"), str):
                yield {"id": obj["id"], "text": obj["text"]}
            else:
                yield BadRecord(lineno, "record needs a string 'text' or a list 'tokens'")
        else:
            rec_id, tab, text = line.partition("\t")
            if not tab:
                yield BadRecord(lineno, "TSV line without a tab")
            else:
                yield {"id": rec_id, "text": text}


def write_records(records: Iterable[SentenceRecord], stream: IO[str]) -> int:
    n = 0
    for r in records:
        stream.write(json.dumps(r.to_dict(), ensure_ascii=False))
        stream.write("\n")
        n += 1
    return n


def read_sanitized(stream: IO[str]) -> Iterator[SentenceRecord]:
    for lineno, line in enumerate(stream, start=1):
        if line.strip():
            try:
                yield SentenceRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise CorpusError(f"line {lineno}: not a sanitized record ({exc})") from None


# -- sanitisation -----------------------------------------------------------


def _record_tokens(item: dict) -> list[str]:
    return list(item["tokens"]) if "tokens" in item else tokenize(item["text"])


def _process_chunk(chunk, table, config, stopwords, lowercase):
    """Sanitise ``[(index, item), ...]``; one batched NN search per chunk."""
    results: list = [None] * len(chunk)
    plans, slots = [], []
    for k, (index, item) in enumerate(chunk):
        if isinstance(item, BadRecord):
            results[k] = item
            continue
        try:
            rng = RngState(config.seed, index).generator()
            plans.append(plan_sentence(_record_tokens(item), table, config, stopwords, rng, lowercase))
            slots.append(k)
        except Exception as exc:  # noqa: BLE001 - per-record isolation
            results[k] = BadRecord(index, f"id={item.get('id')!r}: {exc}")
    try:
        done = resolve_plans(plans, table, config)
    except Exception:  # noqa: BLE001
        # isolate the failing record(s)
        done = []
        for p, k in zip(plans, slots):
            try:
                done.extend(resolve_plans([p], table, config))
            except Exception as exc:  # noqa: BLE001
                done.append(BadRecord(chunk[k][0], f"id={chunk[k][1].get('id')!r}: {exc}"))
    for k, sanitized in zip(slots, done):
        if isinstance(sanitized, BadRecord):
            results[k] = sanitized
        else:
            results[k] = SentenceRecord.from_tokens(chunk[k][1]["id"], sanitized)
    return results


def _chunks(items, size):
    buf = []
    for index, item in enumerate(items):
        buf.append((index, item))
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf


def sanitize_corpus(
    records: Iterable[dict | BadRecord],
    table: EmbeddingTable,
    config: MechanismConfig,
    stopwords=None,
    *,
    threads: int | None = None,
    lowercase: bool = False,
    chunk_size: int = 256,
    error_budget: float = 0.01,
) -> tuple[Iterator[SentenceRecord], CorpusStats]:
    """Stream records through the configured mechanism.

    Returns ``(records, stats)``: a lazy iterator of sanitized records in
    input order, and a :class:`CorpusStats` filled in as that iterator is
    consumed.  Record ``n`` (0-based, counting bad lines) always draws from
    random stream ``(config.seed, n)``, so the output does not depend on
    ``threads`` or ``chunk_size``.  If more than ``error_budget`` of records
    fail, :class:`CorpusError` is raised once the input is exhausted.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    table = prepare_table(table, config)
    threads = threads or os.cpu_count() or 1
    stats = CorpusStats()

    def work(chunk):
        return _process_chunk(chunk, table, config, stopwords, lowercase)

    def ordered_results():
        if threads <= 1:
            for chunk in _chunks(records, chunk_size):
                yield from work(chunk)
            return
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pending: deque = deque()
            for chunk in _chunks(records, chunk_size):
                pending.append(pool.submit(work, chunk))
                if len(pending) >= 2 * threads:
                    yield from pending.popleft().result()
            while pending:
                yield from pending.popleft().result()

    def stream():
        total = 0
        for res in ordered_results():
            total += 1
            if isinstance(res, BadRecord):
                stats.errors += 1
                logger.warning("skipping record %s: %s", res.line, res.reason)
                continue
            stats.update(res, table, lowercase)
            yield res
        if total and stats.errors > error_budget * total:
            raise CorpusError(f"{stats.errors} of {total} records failed "
                              f"(budget {error_budget:.0%})")

    return stream(), stats
