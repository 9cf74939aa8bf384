from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from ..errors import ContractError
from ..tokenizer import Tokenizer, bpe_train


@dataclass
class Batch:
    inputs: np.ndarray   # (B, m) ids
    targets: np.ndarray  # (B, m) ids, inputs shifted left by one in the stream


@dataclass
class CorpusStreams:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    tokenizer: Tokenizer


def encode_lines(tokenizer: Tokenizer, text: bytes) -> np.ndarray:
    ids: list[int] = []
    for line in text.splitlines(keepends=True):
        ids.extend(tokenizer.encode(line))
    return np.asarray(ids, dtype=np.int64)


def _read(path) -> bytes:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"corpus file not found: {p}")
    return p.read_bytes()


def load_corpus(paths, fractions: Sequence[float] = (0.8, 0.1, 0.1),
                tokenizer: Tokenizer | None = None, vocab_size: int = 8192) -> CorpusStreams:
    """Tokenize a corpus into train/valid/test id streams.

    ``paths`` is one file (split by ``fractions`` of the token stream) or a
    sequence of three pre-split files. Without a ``tokenizer`` one is
    trained with ``vocab_size`` tokens on the training text only; for a
    single file that is the leading ``fractions[0]`` share of its bytes.
    """
    if isinstance(paths, (str, Path)):
        text = _read(paths)
        if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
            raise ContractError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")
        if tokenizer is None:
            tokenizer = bpe_train(text[: int(len(text) * fractions[0])], vocab_size)
        ids = encode_lines(tokenizer, text)
        n_train = int(round(len(ids) * fractions[0]))
        n_valid = int(round(len(ids) * fractions[1]))
        parts = [ids[:n_train], ids[n_train:n_train + n_valid], ids[n_train + n_valid:]]
    else:
        paths = list(paths)
        if len(paths) != 3:
            raise ContractError(f"expected 3 pre-split files (train, valid, test), got {len(paths)}")
        texts = [_read(p) for p in paths]
        if tokenizer is None:
            tokenizer = bpe_train(texts[0], vocab_size)
        parts = [encode_lines(tokenizer, t) for t in texts]
    for name, part in zip(("train", "valid", "test"), parts):
        if part.size == 0:
            raise ContractError(f"corpus split {name!r} is empty")
    return CorpusStreams(*parts, tokenizer=tokenizer)


def sample_batch(stream: np.ndarray, m: int, batch_size: int, rng: np.random.Generator) -> Batch:
    """Random windows of ``m + 1`` consecutive tokens."""
    if len(stream) < m + 1:
        raise ContractError(f"stream of {len(stream)} tokens is shorter than m + 1 = {m + 1}")
    starts = rng.integers(0, len(stream) - m, size=batch_size)
    idx = starts[:, None] + np.arange(m + 1)
    window = stream[idx]
    return Batch(window[:, :-1], window[:, 1:])


def window_batches(stream: np.ndarray, m: int, batch_size: int,
                   max_windows: int | None = None) -> Iterator[Batch]:
    """Consecutive non-overlapping windows in stream order; a final partial window is dropped."""
    if len(stream) < m + 1:
        raise ContractError(f"stream of {len(stream)} tokens is shorter than m + 1 = {m + 1}")
    count = (len(stream) - 1) // m
    if max_windows is not None:
        count = min(count, max_windows)
    for first in range(0, count, batch_size):
        rows = np.arange(first, min(first + batch_size, count))
        idx = rows[:, None] * m + np.arange(m + 1)
        window = stream[idx]
        yield Batch(window[:, :-1], window[:, 1:])
