"""Feature selection and row-stochastic vectorization.

Features are the m globally most frequent keys across the malware family
dictionaries of a run; benign dictionaries are never consulted for selection.
A sample's vector holds each selected key's count divided by the sample's
total count over selected keys, so rows sum to one unless the sample contains
none of the selected keys, in which case the row is all zeros.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError
from .ngrams import NGramDictionary, _rank_key, merge_many

_FS_HEADER_RE = re.compile(r"^n=(\d+) m=(\d+)$")


@dataclass
class FeatureSet:
    n: int
    keys: list[bytes]  # rank order: most frequent first
    provenance: list[str]  # family names the selection was drawn from

    @property
    def m(self) -> int:
        return len(self.keys)


@dataclass
class FeatureMatrix:
    X: np.ndarray  # (rows, m) float64
    z: np.ndarray  # (rows,) labels, +1 malware / -1 benign
    ids: list[str]
    feature_set: FeatureSet | None = None


def select_features(family_dicts: list[NGramDictionary], m: int,
                    provenance: list[str] | None = None) -> FeatureSet:
    """Top-m keys of the merged family dictionaries by (count desc, key asc)."""
    if not family_dicts:
        raise ConfigError("feature selection needs at least one family dictionary")
    if not isinstance(m, (int, np.integer)) or isinstance(m, bool) or m < 1:
        raise ConfigError(f"m must be a positive integer, got {m!r}")
    merged = merge_many(family_dicts)  # raises ContractError on mixed n
    ranked = sorted(merged.counts.items(), key=_rank_key)[:int(m)]
    return FeatureSet(n=merged.n, keys=[k for k, _ in ranked],
                      provenance=list(provenance or []))


def vectorize(sample_dict: NGramDictionary, fs: FeatureSet) -> np.ndarray:
    """Row-stochastic vector over the selected keys; all-zero when none occur."""
    if sample_dict.n != fs.n:
        raise ContractError(f"dictionary n={sample_dict.n} does not match features n={fs.n}")
    counts = np.array([sample_dict.counts.get(k, 0) for k in fs.keys], dtype=np.float64)
    total = counts.sum()
    if total == 0.0:
        return counts
    return counts / total


def build_matrix(sample_dicts: dict[str, NGramDictionary], malware_ids: list[str],
                 benign_ids: list[str], fs: FeatureSet) -> FeatureMatrix:
    """Rows are malware then benign, each class sorted by sample id."""
    ordered = sorted(malware_ids) + sorted(benign_ids)
    if len(set(ordered)) != len(ordered):
        raise ConfigError("duplicate sample ids in matrix request")
    missing = [sid for sid in ordered if sid not in sample_dicts]
    if missing:
        raise ConfigError(f"no dictionaries for sample ids {missing[:5]!r}")
    rows = np.zeros((len(ordered), fs.m), dtype=np.float64)
    for i, sid in enumerate(ordered):
        rows[i] = vectorize(sample_dicts[sid], fs)
    labels = np.array([1] * len(malware_ids) + [-1] * len(benign_ids), dtype=np.int64)
    return FeatureMatrix(X=rows, z=labels, ids=ordered, feature_set=fs)


# --- feature set file: header "n=<n> m=<m>", one hex key per line in rank order ---

def save_feature_set(fs: FeatureSet, path: str | Path) -> None:
    lines = [f"n={fs.n} m={fs.m}"] + [k.hex() for k in fs.keys]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_feature_set(path: str | Path) -> FeatureSet:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise FormatError(f"{path}: line 1: missing header")
    m = _FS_HEADER_RE.match(lines[0])
    if m is None:
        raise FormatError(f"{path}: line 1: bad header {lines[0]!r}")
    n, count = int(m.group(1)), int(m.group(2))
    keys: list[bytes] = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            key = bytes.fromhex(line)
        except ValueError:
            raise FormatError(f"{path}: line {lineno}: bad hex key {line!r}") from None
        if len(key) != n:
            raise FormatError(f"{path}: line {lineno}: key length {len(key)} != n={n}")
        keys.append(key)
    if len(keys) != count:
        raise FormatError(f"{path}: header says m={count} but file has {len(keys)} keys")
    return FeatureSet(n=n, keys=keys, provenance=[])


# --- matrix CSV: sample_id,label,f0..f{m-1}; floats written with repr ---------------

def save_matrix(matrix: FeatureMatrix, path: str | Path) -> None:
    m = matrix.X.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["sample_id", "label"] + [f"f{i}" for i in range(m)])
        for sid, label, row in zip(matrix.ids, matrix.z.tolist(), matrix.X):
            writer.writerow([sid, label] + [repr(float(v)) for v in row])


def load_matrix(path: str | Path) -> FeatureMatrix:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: line 1: empty matrix file") from None
        if header[:2] != ["sample_id", "label"] or any(
                h != f"f{i}" for i, h in enumerate(header[2:])):
            raise FormatError(f"{path}: line 1: bad header")
        m = len(header) - 2
        ids, labels, rows = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != m + 2:
                raise FormatError(f"{path}: line {lineno}: expected {m + 2} fields")
            try:
                label = int(rec[1])
                if label not in (1, -1):
                    raise ValueError(label)
                values = [float(v) for v in rec[2:]]
            except ValueError as e:
                raise FormatError(f"{path}: line {lineno}: {e}") from None
            ids.append(rec[0])
            labels.append(label)
            rows.append(values)
    X = np.array(rows, dtype=np.float64) if rows else np.zeros((0, m))
    return FeatureMatrix(X=X, z=np.array(labels, dtype=np.int64), ids=ids)
