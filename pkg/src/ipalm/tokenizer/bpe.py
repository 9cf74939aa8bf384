"""Byte-level byte-pair encoding.

Ids 0-255 are the single bytes, id 256 is the end-of-text marker, and merge
number ``i`` creates id ``257 + i``. Text is split into lines and each line
into whitespace-prefixed words (``" the"``, ``"\\n"``); merges never cross
a word boundary.
"""
from __future__ import annotations

import base64
import hashlib
import heapq
import re
from collections import Counter
from pathlib import Path
from typing import Iterable

import numpy as np

from .. import kernels
from ..errors import ContractError

EOT = b"<|endoftext|>"
EOT_ID = 256
FIRST_MERGE_ID = 257
FORMAT_TAG = "ipalm-bpe v1"

_WORD = re.compile(rb"\s*\S+|\s+")


def pretokenize(data: bytes) -> list[bytes]:
    """Split into words; the concatenation of the result is ``data``."""
    words = []
    for line in data.splitlines(keepends=True):
        words.extend(_WORD.findall(line))
    return words


class Tokenizer:
    """A vocabulary (id -> bytes) plus the ordered merge list."""

    def __init__(self, merges: Iterable[tuple[int, int]] = ()):
        self.vocab: list[bytes] = [bytes([i]) for i in range(256)] + [EOT]
        self.merges: list[tuple[int, int]] = []
        for a, b in merges:
            self._add_merge(int(a), int(b))
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        if len(self._index) != len(self.vocab):
            raise ContractError("tokenizer vocabulary is not a bijection")
        self._table = kernels.MergeTable(self.merges, FIRST_MERGE_ID)
        self._cache: dict[bytes, list[int]] = {}

    def _add_merge(self, a: int, b: int):
        if not (0 <= a < len(self.vocab) and 0 <= b < len(self.vocab)):
            raise ContractError(f"merge ({a}, {b}) refers to an unknown token")
        self.merges.append((a, b))
        self.vocab.append(self.vocab[a] + self.vocab[b])

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def token_id(self, token: bytes) -> int:
        return self._index[token]

    def encode_word(self, word: bytes) -> list[int]:
        ids = self._cache.get(word)
        if ids is None:
            ids = self._table.encode(list(word))
            self._cache[word] = ids
        return ids

    def encode(self, text: bytes | str) -> list[int]:
        if isinstance(text, str):
            text = text.encode("utf-8")
        out: list[int] = []
        for word in pretokenize(text):
            out.extend(self.encode_word(word))
        return out

    def decode(self, ids: Iterable[int]) -> bytes:
        vocab = self.vocab
        parts = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(vocab):
                raise IndexError(f"token id {i} outside [0, {len(vocab)})")
            parts.append(vocab[i])
        return b"".join(parts)

    # ------------------------------------------------------------ persistence

    def dumps(self) -> str:
        lines = [FORMAT_TAG, str(len(self.vocab))]
        lines += [base64.b64encode(tok).decode("ascii") for tok in self.vocab]
        lines += [f"{a} {b}" for a, b in self.merges]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_bytes(self.dumps().encode("ascii"))

    @classmethod
    def loads(cls, text: str) -> "Tokenizer":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines or lines[0] != FORMAT_TAG:
            raise ContractError(f"not a tokenizer file (expected header {FORMAT_TAG!r})")
        size = int(lines[1])
        tokens = [base64.b64decode(s) for s in lines[2:2 + size]]
        merges = [tuple(int(x) for x in ln.split()) for ln in lines[2 + size:]]
        tok = cls(merges)
        if tok.vocab != tokens:
            raise ContractError("tokenizer file: token table disagrees with merge list")
        return tok

    @classmethod
    def load(cls, path) -> "Tokenizer":
        return cls.loads(Path(path).read_bytes().decode("ascii"))

    def fingerprint(self) -> str:
        return hashlib.sha256(self.dumps().encode("ascii")).hexdigest()


def word_counts(corpus: bytes) -> Counter:
    return Counter(pretokenize(corpus))


def bpe_train(corpus: bytes | str, target_vocab: int) -> Tokenizer:
    """Greedy BPE: repeatedly merge the most frequent adjacent pair.

    Stops at ``target_vocab`` tokens or when no pair occurs twice. Ties go
    to the pair whose (left bytes, right bytes) sorts first. A pair whose
    concatenation already exists as a token is never merged.
    """
    if isinstance(corpus, str):
        corpus = corpus.encode("utf-8")
    if not corpus:
        raise ContractError("bpe_train: empty corpus")
    if target_vocab < FIRST_MERGE_ID:
        raise ContractError(f"bpe_train: target_vocab must be >= {FIRST_MERGE_ID}, got {target_vocab}")

    counts = word_counts(corpus)
    words = sorted(counts)
    lens = np.array([len(w) for w in words], dtype=np.int32)
    starts = np.zeros(len(words), dtype=np.int64)
    starts[1:] = np.cumsum(lens[:-1], dtype=np.int64)
    buf = np.frombuffer(b"".join(words), dtype=np.uint8).astype(np.int32)
    wcount = np.array([counts[w] for w in words], dtype=np.int64)

    vocab: list[bytes] = [bytes([i]) for i in range(256)] + [EOT]
    known = set(vocab)
    pair_count: dict[int, int] = {}
    where: dict[int, set[int]] = {}
    for w, word in enumerate(words):
        c = int(wcount[w])
        for x, y in zip(word, word[1:]):
            key = (x << 32) | y
            pair_count[key] = pair_count.get(key, 0) + c
            where.setdefault(key, set()).add(w)

    def entry(key: int):
        a, b = key >> 32, key & 0xFFFFFFFF
        return (-pair_count[key], vocab[a], vocab[b], key)

    heap = [entry(k) for k in pair_count]
    heapq.heapify(heap)
    merges: list[tuple[int, int]] = []
    excluded: set[int] = set()

    while len(vocab) < target_vocab and heap:
        neg, _, _, key = heapq.heappop(heap)
        if key in excluded or pair_count.get(key, 0) != -neg:
            continue                      # stale heap entry
        if -neg < 2:
            break
        a, b = key >> 32, key & 0xFFFFFFFF
        token = vocab[a] + vocab[b]
        if token in known:
            excluded.add(key)
            continue
        new = len(vocab)
        vocab.append(token)
        known.add(token)
        merges.append((a, b))
        targets = np.fromiter(sorted(where.pop(key, ())), dtype=np.int64)
        keys, deltas, inc_keys, inc_words = kernels.merge_pair(
            buf, starts, lens, wcount, targets, a, b, new)
        for k, d in zip(keys.tolist(), deltas.tolist()):
            c = pair_count.get(k, 0) + d
            if c:
                pair_count[k] = c
                if k not in excluded:
                    heapq.heappush(heap, entry(k))
            else:
                pair_count.pop(k, None)
        for k, w in zip(inc_keys.tolist(), inc_words.tolist()):
            where.setdefault(k, set()).add(w)
    return Tokenizer(merges)


def byte_tokenizer() -> Tokenizer:
    """Tokenizer with no merges (257 ids)."""
    return Tokenizer()
