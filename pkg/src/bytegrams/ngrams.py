"""Byte n-gram counting and budgeted frequency dictionaries.

Counting is a single streaming pass over fixed-size chunks, so temporary
memory is bounded by the chunk size plus the number of distinct keys seen,
never by the input length.  For n <= 8 each window is packed big-endian into
a uint64, which makes integer order identical to lexicographic key order.
"""

from __future__ import annotations

import heapq
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ConfigError, ContractError, FormatError

# dictionary budgets used by the extraction pipeline
MALWARE_SAMPLE_BUDGET = 100
BENIGN_SAMPLE_BUDGET = 500
FAMILY_BUDGET = 1500

_CHUNK_BYTES = 1 << 22
_HEADER_RE = re.compile(r"^n=(\d+) budget=(none|\d+)$")


@dataclass
class NGramDictionary:
    """Counts of byte n-grams.

    Keys are byte strings of length n; stored counts are always >= 1.
    Iteration order is canonical: key-ascending for freshly counted or merged
    dictionaries, (count desc, key asc) after truncation and in saved files.
    """

    n: int
    counts: dict[bytes, int]
    budget: int | None = None
    origin: str = "per-sample"

    def total(self) -> int:
        return sum(self.counts.values())


def _rank_key(item: tuple[bytes, int]) -> tuple[int, bytes]:
    # total order used everywhere a top-k cut happens
    return (-item[1], item[0])


def _check_n(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise ConfigError(f"n-gram length must be a positive integer, got {n!r}")


def _codes_for(arr: np.ndarray, n: int) -> np.ndarray:
    """Pack every length-n window of a uint8 array into big-endian uint64."""
    m = arr.size - n + 1
    codes = arr[:m].astype(np.uint64)
    for j in range(1, n):
        codes <<= np.uint64(8)
        codes |= arr[j:j + m]
    return codes


def _codes_to_keys(codes: np.ndarray, n: int) -> list[bytes]:
    if codes.size == 0:
        return []
    raw = codes.astype(">u8").view(np.uint8).reshape(-1, 8)[:, 8 - n:].tobytes()
    return [raw[i * n:(i + 1) * n] for i in range(codes.size)]


class _CodeAccumulator:
    """Running (key, count) arrays for n <= 8, kept sorted by key."""

    def __init__(self, n: int):
        self.n = n
        self.keys = np.empty(0, dtype=np.uint64)
        self.counts = np.empty(0, dtype=np.int64)

    def add_chunk(self, arr: np.ndarray) -> None:
        if arr.size < self.n:
            return
        codes = _codes_for(arr, self.n)
        if self.n <= 2:
            # table small enough to count directly
            table = np.bincount(codes.astype(np.int64), minlength=256 ** self.n)
            k = np.flatnonzero(table).astype(np.uint64)
            c = table[k.astype(np.int64)]
        else:
            k, c = np.unique(codes, return_counts=True)
        self._merge(k, c.astype(np.int64))

    def _merge(self, k: np.ndarray, c: np.ndarray) -> None:
        if self.keys.size == 0:
            self.keys, self.counts = k, c
            return
        ka = np.concatenate([self.keys, k])
        ca = np.concatenate([self.counts, c])
        order = np.argsort(ka, kind="stable")
        ks, cs = ka[order], ca[order]
        new = np.empty(ks.size, dtype=bool)
        new[0] = True
        new[1:] = ks[1:] != ks[:-1]
        starts = np.flatnonzero(new)
        self.keys = ks[starts]
        self.counts = np.add.reduceat(cs, starts)

    def to_counts(self, budget: int | None) -> dict[bytes, int]:
        if budget is None:
            return dict(zip(_codes_to_keys(self.keys, self.n), self.counts.tolist()))
        order = np.lexsort((self.keys, -self.counts))[:budget]
        return dict(zip(_codes_to_keys(self.keys[order], self.n),
                        self.counts[order].tolist()))


class _BytesAccumulator:
    """Fallback for n > 8: windows compared as raw byte rows."""

    def __init__(self, n: int):
        self.n = n
        self.counts: dict[bytes, int] = {}

    def add_chunk(self, arr: np.ndarray) -> None:
        if arr.size < self.n:
            return
        w = np.lib.stride_tricks.sliding_window_view(arr, self.n)
        u, c = np.unique(w, axis=0, return_counts=True)
        raw = u.tobytes()
        n = self.n
        for i, cnt in enumerate(c.tolist()):
            key = raw[i * n:(i + 1) * n]
            self.counts[key] = self.counts.get(key, 0) + cnt

    def to_counts(self, budget: int | None) -> dict[bytes, int]:
        if budget is None:
            return dict(sorted(self.counts.items()))
        return dict(heapq.nsmallest(budget, self.counts.items(), key=_rank_key))


def _accumulate(chunks: Iterable[bytes], n: int):
    acc = _CodeAccumulator(n) if n <= 8 else _BytesAccumulator(n)
    carry = np.empty(0, dtype=np.uint8)
    for chunk in chunks:
        arr = np.frombuffer(chunk, dtype=np.uint8)
        if carry.size:
            arr = np.concatenate([carry, arr])
        if n > 1:
            carry = arr[max(arr.size - (n - 1), 0):].copy()
        acc.add_chunk(arr)
    return acc


def _iter_slices(data: bytes) -> Iterator[bytes]:
    view = memoryview(data)
    for start in range(0, len(view), _CHUNK_BYTES):
        yield view[start:start + _CHUNK_BYTES]


def count_ngrams(data: bytes, n: int) -> NGramDictionary:
    """Count all stride-1 n-grams of data; total mass is max(0, len-n+1)."""
    _check_n(n)
    acc = _accumulate(_iter_slices(data), n)
    return NGramDictionary(n=int(n), counts=acc.to_counts(None))


def count_chunks(chunks: Iterable[bytes], n: int) -> NGramDictionary:
    """Count n-grams over a stream of byte chunks (windows cross boundaries)."""
    _check_n(n)
    acc = _accumulate(chunks, n)
    return NGramDictionary(n=int(n), counts=acc.to_counts(None))


def count_file(path: str | Path, n: int, chunk_size: int = _CHUNK_BYTES) -> NGramDictionary:
    """Stream a file through the counter without materializing it."""
    _check_n(n)

    def reader() -> Iterator[bytes]:
        with open(path, "rb") as fh:
            while True:
                block = fh.read(chunk_size)
                if not block:
                    return
                yield block

    acc = _accumulate(reader(), n)
    return NGramDictionary(n=int(n), counts=acc.to_counts(None))


def truncate_top_k(d: NGramDictionary, k: int) -> NGramDictionary:
    """Keep the k most frequent keys; ties broken by ascending key bytes."""
    if not isinstance(k, (int, np.integer)) or isinstance(k, bool) or k < 0:
        raise ConfigError(f"budget must be a non-negative integer, got {k!r}")
    kept = heapq.nsmallest(int(k), d.counts.items(), key=_rank_key)
    return NGramDictionary(n=d.n, counts=dict(kept), budget=int(k), origin=d.origin)


def merge(a: NGramDictionary, b: NGramDictionary) -> NGramDictionary:
    """Keywise count sum; no budget applied to the result."""
    return merge_many([a, b])


def merge_many(dicts: list[NGramDictionary]) -> NGramDictionary:
    if not dicts:
        raise ConfigError("cannot merge an empty list of dictionaries")
    n = dicts[0].n
    origin = dicts[0].origin
    total: dict[bytes, int] = {}
    for d in dicts:
        if d.n != n:
            raise ContractError(f"cannot merge dictionaries with n={n} and n={d.n}")
        if d.origin != origin:
            origin = "per-family"
        for key, cnt in d.counts.items():
            total[key] = total.get(key, 0) + cnt
    return NGramDictionary(n=n, counts=dict(sorted(total.items())), origin=origin)


def build_sample_dicts(samples, n: int, budget: int | None) -> dict[str, NGramDictionary]:
    """Per-sample budgeted dictionaries, keyed by sample id."""
    _check_n(n)
    if budget is not None and (budget < 0 or isinstance(budget, bool)):
        raise ConfigError(f"budget must be None or >= 0, got {budget!r}")
    out: dict[str, NGramDictionary] = {}
    for sample in samples:
        if sample.id in out:
            raise ContractError(f"duplicate sample id {sample.id!r}")
        acc = _accumulate(sample.byte_chunks(), n)
        counts = acc.to_counts(None if budget is None else int(budget))
        out[sample.id] = NGramDictionary(
            n=int(n), counts=counts,
            budget=None if budget is None else int(budget),
            origin="per-sample")
    return out


def build_family_dict(dicts: list[NGramDictionary], budget: int = FAMILY_BUDGET) -> NGramDictionary:
    """Merge a family's per-sample dictionaries, then truncate to the family budget."""
    merged = merge_many(dicts)
    out = truncate_top_k(merged, budget)
    out.origin = "per-family"
    return out


# --- dictionary file format ---------------------------------------------------
# line 1:  n=<n> budget=<k|none>
# rest:    <lowercase hex key>\t<decimal count>, sorted by (count desc, key asc)

def save_dictionary(d: NGramDictionary, path: str | Path) -> None:
    lines = [f"n={d.n} budget={'none' if d.budget is None else d.budget}"]
    for key, cnt in sorted(d.counts.items(), key=_rank_key):
        lines.append(f"{key.hex()}\t{cnt}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dictionary(path: str | Path, origin: str = "per-sample") -> NGramDictionary:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: line 1: missing header")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise FormatError(f"{path}: line 1: bad header {lines[0]!r}")
    n = int(m.group(1))
    if n < 1:
        raise FormatError(f"{path}: line 1: n must be >= 1")
    budget = None if m.group(2) == "none" else int(m.group(2))
    counts: dict[bytes, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 2:
            raise FormatError(f"{path}: line {lineno}: expected '<hex>\\t<count>'")
        try:
            key = bytes.fromhex(parts[0])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: bad hex key {parts[0]!r}") from None
        if len(key) != n:
            raise FormatError(f"{path}: line {lineno}: key length {len(key)} != n={n}")
        try:
            cnt = int(parts[1])
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: bad count {parts[1]!r}") from None
        if cnt < 1:
            raise FormatError(f"{path}: line {lineno}: counts must be >= 1")
        if key in counts:
            raise FormatError(f"{path}: line {lineno}: duplicate key {parts[0]}")
        counts[key] = cnt
    return NGramDictionary(n=n, counts=counts, budget=budget, origin=origin)
