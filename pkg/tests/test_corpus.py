import io

import pytest

from casper.corpus import (
    BadRecord,
    CorpusError,
    CorpusStats,
    SentenceRecord,
    Stopwords,
    default_stopwords,
    load_stopwords,
    read_records,
    read_sanitized,
    sanitize_corpus,
    tokenize,
    write_records,
)
from casper.mechanisms import MechanismConfig
from casper.synthetic import gaussian_table, random_sentences


def test_tokenize_examples():
    assert tokenize("The movie was great.") == ["The", "movie", "was", "great", "."]
    assert tokenize("") == []
    assert tokenize("don't stop") == ["don't", "stop"]
    assert tokenize('"Hi," she said...') == ['"', "Hi", ",", '"', "she", "said", ".", ".", "."]
    assert tokenize("a b\tc\n") == ["a", "b", "c"]


def test_load_stopwords():
    s = load_stopwords(io.BytesIO(b"the\nwas\nthe\n"))
    assert s == {"the", "was"} and len(s) == 2
    assert "The" in s
    assert "The" not in load_stopwords(io.BytesIO(b"the\n"), case_sensitive=True)
    assert len(load_stopwords(io.BytesIO(b""))) == 0


def test_default_stopwords():
    s = default_stopwords()
    assert 150 <= len(s) <= 200 and "the" in s and "movie" not in s


def test_read_records_formats():
    src = io.StringIO('{"id": 1, "text": "a b"}\n\n{"id": "x", "tokens": ["c"]}\n'
                      "7\tplain text\nbroken\n{not json\n")
    out = list(read_records(src))
    assert out[0] == {"id": 1, "text": "a b"}
    assert out[1] == {"id": "x", "tokens": ["c"]}
    assert out[2] == {"id": "7", "text": "plain text"}
    assert isinstance(out[3], BadRecord) and isinstance(out[4], BadRecord)


def test_record_roundtrip():
    r = SentenceRecord("s1", ["a", "the"], ["b", "the"], [False, True], [False, False])
    buf = io.StringIO()
    write_records([r], buf)
    back = list(read_sanitized(io.StringIO(buf.getvalue())))
    assert back == [r]


def test_record_invariants():
    with pytest.raises(ValueError):
        SentenceRecord(1, ["a"], ["a", "b"], [False], [False])
    with pytest.raises(ValueError):
        SentenceRecord(1, ["the"], ["x"], [True], [False])


def test_read_sanitized_rejects_garbage():
    with pytest.raises(CorpusError):
        list(read_sanitized(io.StringIO('{"id": 1}\n')))


@pytest.fixture(scope="module")
def world():
    stop = ["the", "of", "and", "a", "to"]
    table = gaussian_table(400, 16, seed=1, extra_tokens=stop)
    sents = random_sentences(table.tokens[:400], 300, (3, 15), seed=2, stopwords=stop,
                             stop_rate=0.25, oov_rate=0.05)
    return table, Stopwords(stop), sents


def _items(sents):
    return [{"id": i, "tokens": s} for i, s in enumerate(sents)]


def test_identity_limit_corpus(world):
    table, stop, sents = world
    cfg = MechanismConfig("casper", eta=1e9, sigma=1e-6, window=3)
    stream, stats = sanitize_corpus(_items(sents[:2]), table, cfg, stop, threads=1)
    recs = list(stream)
    assert all(r.sanitized_tokens == r.original_tokens for r in recs)
    assert stats.replaced > 0 and stats.mean_cosine_similarity == pytest.approx(1.0)


def test_all_oov_corpus(world):
    table, stop, _ = world
    cfg = MechanismConfig("dchi_noise", eta=1.0)
    stream, stats = sanitize_corpus([{"id": 0, "text": "zz yy xx"}], table, cfg, stop)
    recs = list(stream)
    assert recs[0].sanitized_tokens == ["zz", "yy", "xx"]
    assert stats.oov_rate == 1.0 and stats.replaced_rate == 0.0


def test_masks_and_stats_conservation(world):
    table, stop, sents = world
    cfg = MechanismConfig("casper", eta=5.0, sigma=1.0, window=4, seed=3)
    stream, stats = sanitize_corpus(_items(sents), table, cfg, stop, threads=2, chunk_size=17)
    recs = list(stream)
    assert [r.id for r in recs] == list(range(len(sents)))
    assert stats.sentences == len(sents)
    assert stats.tokens == sum(len(s) for s in sents)
    for r, s in zip(recs, sents):
        assert r.original_tokens == s
        for i, (o, z) in enumerate(zip(r.original_tokens, r.sanitized_tokens)):
            if r.stopword_mask[i] or r.oov_mask[i]:
                assert o == z
    again = CorpusStats.from_records(recs, table)
    for key, val in stats.to_dict().items():
        assert again.to_dict()[key] == pytest.approx(val, abs=1e-12)
    assert stats.replaced_rate <= 1 - stats.stopword_rate + 1e-12
    assert 0 <= stats.oov_rate <= 1


def test_output_independent_of_threads_and_chunks(world):
    table, stop, sents = world
    cfg = MechanismConfig("casper", eta=8.0, sigma=0.75, window=5, seed=0xBEEF)
    outs = []
    for threads, chunk in [(1, 256), (3, 7), (2, 1)]:
        stream, _ = sanitize_corpus(_items(sents), table, cfg, stop, threads=threads,
                                    chunk_size=chunk)
        buf = io.StringIO()
        write_records(stream, buf)
        outs.append(buf.getvalue())
    assert outs[0] == outs[1] == outs[2]


def test_error_budget(world):
    table, stop, sents = world
    cfg = MechanismConfig("dchi_noise", eta=5.0)
    items = _items(sents[:150]) + [BadRecord(151, "x")]  # 1 of 151 is under 1%
    stream, stats = sanitize_corpus(items, table, cfg, stop)
    assert len(list(stream)) == 150 and stats.errors == 1
    with pytest.raises(CorpusError):
        list(sanitize_corpus(_items(sents[:20]) + [BadRecord(21, "x")], table, cfg, stop)[0])
