"""Pure-Python/numpy implementations of the hot kernels.

Semantics are identical to the compiled ``_native`` module; the test suite
runs both against each other.
"""
import numpy as np

BACKEND = "python"


def pair_key(a: int, b: int) -> int:
    return (a << 32) | b


def scatter_add_rows(out: np.ndarray, ids: np.ndarray, src: np.ndarray) -> None:
    """``out[ids[i]] += src[i]`` for every i, duplicates accumulating."""
    np.add.at(out, ids, src)


def merge_pair(buf, starts, lens, counts, word_ids, a: int, b: int, new: int):
    """Merge every adjacent ``(a, b)`` into ``new`` inside the listed words.

    ``buf`` holds all words back to back; word ``w`` occupies
    ``buf[starts[w]:starts[w] + lens[w]]`` and is rewritten in place, with
    ``lens`` shrinking accordingly. Words without the pair are skipped.

    Returns ``(keys, deltas, new_keys, new_words)``: the net change of every
    weighted pair count (sorted by key, zero changes dropped) and the
    (pair, word) incidences of pairs that contain ``new``.
    """
    deltas = {}
    incid = set()
    for w in word_ids:
        s = int(starts[w])
        n = int(lens[w])
        sym = buf[s:s + n].tolist()
        if not any(sym[i] == a and sym[i + 1] == b for i in range(n - 1)):
            continue
        c = int(counts[w])
        for i in range(n - 1):
            k = (sym[i] << 32) | sym[i + 1]
            deltas[k] = deltas.get(k, 0) - c
        merged = []
        i = 0
        while i < n:
            if i < n - 1 and sym[i] == a and sym[i + 1] == b:
                merged.append(new)
                i += 2
            else:
                merged.append(sym[i])
                i += 1
        for i in range(len(merged) - 1):
            x, y = merged[i], merged[i + 1]
            k = (x << 32) | y
            deltas[k] = deltas.get(k, 0) + c
            if x == new or y == new:
                incid.add((k, int(w)))
        buf[s:s + len(merged)] = merged
        lens[w] = len(merged)
    keys = sorted(k for k, d in deltas.items() if d != 0)
    incid = sorted(incid)
    return (
        np.array(keys, dtype=np.int64),
        np.array([deltas[k] for k in keys], dtype=np.int64),
        np.array([k for k, _ in incid], dtype=np.int64),
        np.array([w for _, w in incid], dtype=np.int64),
    )


class MergeTable:
    """Rank lookup for BPE encoding: merge ``i`` of ``pairs`` makes id ``first_id + i``."""

    def __init__(self, pairs, first_id: int):
        self._ranks = {(int(a), int(b)): (i, first_id + i) for i, (a, b) in enumerate(pairs)}

    def encode(self, symbols):
        """Apply merges to one word, lowest rank first, until none applies."""
        sym = list(symbols)
        ranks = self._ranks
        while len(sym) > 1:
            best = None
            for i in range(len(sym) - 1):
                r = ranks.get((sym[i], sym[i + 1]))
                if r is not None and (best is None or r[0] < best[0]):
                    best = r
                    pair = (sym[i], sym[i + 1])
            if best is None:
                break
            a, b = pair
            out = []
            i = 0
            n = len(sym)
            while i < n:
                if i < n - 1 and sym[i] == a and sym[i + 1] == b:
                    out.append(best[1])
                    i += 2
                else:
                    out.append(sym[i])
                    i += 1
            sym = out
        return sym
