import base64

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipalm import kernels
from ipalm.errors import ContractError
from ipalm.tokenizer import EOT, EOT_ID, Tokenizer, bpe_train, byte_tokenizer, pretokenize
from oracles import naive_bpe


def merged_bytes(tok):
    return [(tok.vocab[a], tok.vocab[b]) for a, b in tok.merges]


def test_only_pair_is_merged_first():
    tok = bpe_train(b"aaaa", 258)
    assert merged_bytes(tok)[0] == (b"a", b"a")


def test_abab_matches_frequency_count_oracle():
    tok = bpe_train(b"abab abab", 260)
    assert merged_bytes(tok) == naive_bpe(b"abab abab", 260, pretokenize)
    assert merged_bytes(tok)[:2] == [(b"a", b"b"), (b"ab", b"ab")]


def test_minimum_vocab_has_no_merges():
    tok = bpe_train(b"hello hello hello", 257)
    assert tok.merges == [] and tok.vocab_size == 257


@pytest.mark.parametrize("seed", range(8))
def test_random_corpora_match_frequency_count_oracle(seed):
    rng = np.random.default_rng(seed)
    alphabet = list(b"abcd \n")
    corpus = bytes(rng.choice(alphabet, size=int(rng.integers(50, 400))).tolist())
    target = int(rng.integers(257, 300))
    assert merged_bytes(bpe_train(corpus, target)) == naive_bpe(corpus, target, pretokenize)


def test_duplicate_tokens_are_never_created():
    # "a"+"aa" and "aa"+"a" both spell "aaa"; only one may enter the vocabulary
    tok = bpe_train(b"aaaaaaa " * 20 + b"aaaaaaaaa " * 7, 300)
    assert len(set(tok.vocab)) == len(tok.vocab)


def test_training_is_deterministic():
    corpus = bytes(np.random.default_rng(5).choice(list(b"xyz ab\n"), size=3000).tolist())
    assert bpe_train(corpus, 400).merges == bpe_train(corpus, 400).merges


def test_empty_corpus_and_small_target_rejected():
    with pytest.raises(ContractError):
        bpe_train(b"", 300)
    with pytest.raises(ContractError):
        bpe_train(b"abc", 256)


def test_merges_stay_inside_words():
    tok = bpe_train(b"ab ab ab ab cd cd cd", 300)
    for token in tok.vocab[EOT_ID + 1:]:
        stripped = token.lstrip()
        assert not any(c in b" \t\n" for c in stripped)


def test_pretokenize_preserves_bytes():
    data = b"  hello world\n\nfoo\tbar  \n x"
    words = pretokenize(data)
    assert b"".join(words) == data
    assert b" world" in words


def test_encode_empty_and_plain_bytes():
    tok = bpe_train(b"the the the", 270)
    assert tok.encode(b"") == []
    assert tok.encode(b"xq") == [ord("x"), ord("q")]


def test_decode_edges():
    tok = byte_tokenizer()
    assert tok.decode([]) == b""
    assert tok.decode([65]) == b"A"
    assert tok.decode([EOT_ID]) == EOT
    with pytest.raises(IndexError):
        tok.decode([257])


def test_encode_applies_merges():
    tok = bpe_train(b"low lower lowest " * 10, 280)
    ids = tok.encode(b"lowest")
    assert len(ids) < len(b"lowest")
    assert tok.decode(ids) == b"lowest"


@pytest.fixture(scope="module")
def trained():
    rng = np.random.default_rng(7)
    words = [bytes(rng.choice(list(b"etaoinshr"), size=rng.integers(1, 8)).tolist()) for _ in range(300)]
    corpus = b" ".join(words[i] for i in rng.integers(0, 300, size=3000))
    return bpe_train(corpus, 600)


@settings(max_examples=1000, deadline=None)
@given(st.binary(max_size=200))
def test_roundtrip_on_arbitrary_bytes(trained, data):
    assert trained.decode(trained.encode(data)) == data


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=100))
def test_roundtrip_on_unicode_text(trained, text):
    assert trained.decode(trained.encode(text)).decode("utf-8") == text


def test_file_format(tmp_path, trained):
    path = tmp_path / "tok.txt"
    trained.save(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "ipalm-bpe v1"
    v = int(lines[1])
    assert v == trained.vocab_size
    assert [base64.b64decode(s) for s in lines[2:2 + v]] == trained.vocab
    assert [tuple(map(int, ln.split())) for ln in lines[2 + v:]] == trained.merges
    again = Tokenizer.load(path)
    assert again.merges == trained.merges
    assert again.dumps() == trained.dumps()
    assert again.fingerprint() == trained.fingerprint()


def test_load_rejects_foreign_file(tmp_path):
    with pytest.raises(ContractError):
        Tokenizer.loads("something else\n3\n")


def test_native_and_fallback_merge_tables_agree(trained):
    if kernels.native is None:
        pytest.skip("compiled kernels not built")
    rng = np.random.default_rng(8)
    nat = kernels.native.MergeTable(trained.merges, EOT_ID + 1)
    py = kernels.fallback.MergeTable(trained.merges, EOT_ID + 1)
    for _ in range(300):
        word = rng.choice(list(b"etaoinshr "), size=int(rng.integers(0, 20))).tolist()
        assert nat.encode(list(word)) == py.encode(list(word))


def test_native_and_fallback_training_agree(monkeypatch):
    if kernels.native is None:
        pytest.skip("compiled kernels not built")
    corpus = bytes(np.random.default_rng(9).choice(list(b"abcde \n"), size=5000).tolist())
    native = bpe_train(corpus, 400).merges
    monkeypatch.setattr(kernels, "merge_pair", kernels.fallback.merge_pair)
    assert bpe_train(corpus, 400).merges == native
