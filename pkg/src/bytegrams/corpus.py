"""Corpus ingestion and deterministic synthetic corpus generation.

A corpus is a set of labeled byte samples grouped into malware families plus
one benign pool.  The synthetic generator stands in for corpora that cannot
be redistributed: each family draws from a shared skewed background byte
distribution and, with probability `separation`, emits one of its bias
n-grams instead of a background byte, so the dial runs from statistically
background-identical (0.0) to bias-dominated (1.0).  Generation of a sample
is a pure function of (spec, corpus seed, sample index).
"""

from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import ConfigError, FormatError, IngestionError
from .seeds import derive_seed, rng_from

log = logging.getLogger(__name__)

MALWARE = 1
BENIGN = -1
BENIGN_FAMILY = "benign"

MAX_SAMPLE_BYTES = 64 * 1024 * 1024  # files above this stay on disk and stream
_CHUNK = 1 << 22

MANIFEST_FORMAT = "bytegrams-corpus"
MANIFEST_VERSION = 1


@dataclass
class Sample:
    """One labeled byte sequence; payload is in memory or file-backed."""

    id: str
    label: int  # MALWARE (+1) or BENIGN (-1)
    family: str
    source: str
    data: bytes | None = None
    path: Path | None = None

    def __post_init__(self):
        if self.label not in (MALWARE, BENIGN):
            raise ConfigError(f"sample label must be +1 or -1, got {self.label!r}")
        if (self.data is None) == (self.path is None):
            raise ConfigError("sample needs exactly one of data= or path=")
        if self.data is not None and len(self.data) == 0:
            raise ConfigError(f"sample {self.id!r} has an empty payload")

    def size(self) -> int:
        return len(self.data) if self.data is not None else self.path.stat().st_size

    def bytes(self) -> bytes:
        if self.data is not None:
            return self.data
        return self.path.read_bytes()

    def byte_chunks(self, chunk_size: int = _CHUNK) -> Iterator[bytes]:
        if self.data is not None:
            view = memoryview(self.data)
            for start in range(0, len(view), chunk_size):
                yield view[start:start + chunk_size]
            return
        with open(self.path, "rb") as fh:
            while True:
                block = fh.read(chunk_size)
                if not block:
                    return
                yield block


@dataclass
class SynthFamilySpec:
    """Recipe for one synthetic family."""

    name: str
    bias_ngrams: list[tuple[bytes, float]]  # (gram, relative weight > 0)
    background_seed: int
    min_len: int
    max_len: int
    separation: float  # 0.0 = pure background, 1.0 = bias blocks only

    def validate(self) -> None:
        if not self.name or any(c in self.name for c in "/\\") or self.name == "..":
            raise ConfigError(f"bad family name {self.name!r}")
        if not (1 <= self.min_len <= self.max_len):
            raise ConfigError(f"{self.name}: need 1 <= min_len <= max_len, "
                              f"got {self.min_len}..{self.max_len}")
        if not (0.0 <= self.separation <= 1.0):
            raise ConfigError(f"{self.name}: separation must be in [0, 1]")
        if self.separation > 0.0 and not self.bias_ngrams:
            raise ConfigError(f"{self.name}: separation > 0 needs bias n-grams")
        for gram, weight in self.bias_ngrams:
            if not isinstance(gram, bytes) or len(gram) < 1:
                raise ConfigError(f"{self.name}: bias n-grams must be non-empty bytes")
            if not (weight > 0 and np.isfinite(weight)):
                raise ConfigError(f"{self.name}: bias weights must be positive")


@dataclass
class CorpusManifest:
    seed: int | None
    families: list[tuple[str, int]]  # (family name, sample count); benign excluded
    n_benign: int
    generator: dict = field(default_factory=dict)


@functools.lru_cache(maxsize=64)
def background_distribution(seed: int) -> np.ndarray:
    """Skewed byte distribution; integer draws raised to a power, so the
    probabilities are bit-exact across platforms."""
    rng = np.random.Generator(np.random.PCG64(seed))
    raw = rng.integers(1, 1001, size=256).astype(np.float64)
    weights = raw ** 4
    probs = weights / weights.sum()
    probs.setflags(write=False)
    return probs


def generate_sample(spec: SynthFamilySpec, seed: int, index: int) -> bytes:
    """Deterministic sample bytes for (spec, corpus seed, sample index)."""
    spec.validate()
    rng = rng_from(seed, "sample", spec.name, index)
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    bg = background_distribution(spec.background_seed)
    bg_bytes = rng.choice(256, size=length, p=bg).astype(np.uint8)
    if spec.separation == 0.0 or not spec.bias_ngrams:
        return bg_bytes.tobytes()

    weights = np.array([w for _, w in spec.bias_ngrams], dtype=np.float64)
    probs = np.concatenate(([1.0 - spec.separation],
                            spec.separation * weights / weights.sum()))
    choices = rng.choice(len(spec.bias_ngrams) + 1, size=length, p=probs)
    gram_lens = np.array([len(g) for g, _ in spec.bias_ngrams], dtype=np.int64)
    lens = np.where(choices == 0, 1, gram_lens[np.maximum(choices - 1, 0)])
    cum = np.cumsum(lens)
    n_blocks = int(np.searchsorted(cum, length, side="left")) + 1
    starts = (cum - lens)[:n_blocks]
    out = np.empty(int(cum[n_blocks - 1]), dtype=np.uint8)
    ch = choices[:n_blocks]
    background = ch == 0
    out[starts[background]] = bg_bytes[:n_blocks][background]
    for j, (gram, _) in enumerate(spec.bias_ngrams):
        sj = starts[ch == j + 1]
        for t, byte in enumerate(gram):
            out[sj + t] = byte
    return out[:length].tobytes()


def generate_synthetic(specs: list[SynthFamilySpec], per_family: int, n_benign: int,
                       seed: int, benign_spec: SynthFamilySpec | None = None) -> list[Sample]:
    """Full corpus: per_family samples per spec plus a pure-background benign pool."""
    if not specs:
        raise ConfigError("need at least one family spec")
    names = [s.name for s in specs]
    if len(set(names)) != len(names) or BENIGN_FAMILY in names:
        raise ConfigError("family names must be unique and not 'benign'")
    for spec in specs:
        spec.validate()
    if benign_spec is None:
        benign_spec = SynthFamilySpec(
            name=BENIGN_FAMILY, bias_ngrams=[],
            background_seed=specs[0].background_seed,
            min_len=specs[0].min_len, max_len=specs[0].max_len, separation=0.0)
    samples = []
    for spec in specs:
        for i in range(per_family):
            samples.append(Sample(
                id=f"{spec.name}-{i:05d}", label=MALWARE, family=spec.name,
                source=f"synthetic:{spec.name}#{i}",
                data=generate_sample(spec, seed, i)))
    for i in range(n_benign):
        samples.append(Sample(
            id=f"{BENIGN_FAMILY}-{i:05d}", label=BENIGN, family=BENIGN_FAMILY,
            source=f"synthetic:{BENIGN_FAMILY}#{i}",
            data=generate_sample(benign_spec, seed, i)))
    return samples


def auto_specs(families: int, seed: int, ngram_len: int = 2, bias_per_family: int = 3,
               min_len: int = 8192, max_len: int = 32768,
               separation: float = 0.6) -> list[SynthFamilySpec]:
    """Derive family specs from a seed: shared background, disjoint bias grams."""
    if families < 1:
        raise ConfigError("need at least one family")
    background_seed = derive_seed(seed, "background")
    bg = background_distribution(background_seed)
    heavy = set(np.argsort(bg)[-16:].tolist())  # likeliest background bytes
    used: set[bytes] = set()
    specs = []
    for f in range(families):
        name = f"fam{f:02d}"
        rng = rng_from(seed, "spec", name)
        grams: list[tuple[bytes, float]] = []
        while len(grams) < bias_per_family:
            cand = bytes(rng.integers(0, 256, size=ngram_len, dtype=np.uint8))
            # avoid grams already claimed or likely frequent in the background
            if cand in used or all(b in heavy for b in cand):
                continue
            used.add(cand)
            grams.append((cand, float(rng.uniform(0.5, 1.5))))
        specs.append(SynthFamilySpec(name=name, bias_ngrams=grams,
                                     background_seed=background_seed,
                                     min_len=min_len, max_len=max_len,
                                     separation=separation))
    return specs


# --- manifest and spec files (JSON documents) ----------------------------------

def save_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "seed": manifest.seed,
        "families": [{"name": name, "samples": count} for name, count in manifest.families],
        "benign": manifest.n_benign,
        "generator": manifest.generator,
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: line {e.lineno}: {e.msg}") from None


def load_manifest(path: str | Path) -> CorpusManifest:
    doc = _load_json(path)
    if doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{path}: not a {MANIFEST_FORMAT} manifest")
    for fieldname in ("version", "seed", "families", "benign", "generator"):
        if fieldname not in doc:
            raise FormatError(f"{path}: missing field {fieldname!r}")
    if doc["version"] != MANIFEST_VERSION:
        raise FormatError(f"{path}: unsupported version {doc['version']!r}")
    families = [(f["name"], int(f["samples"])) for f in doc["families"]]
    return CorpusManifest(seed=doc["seed"], families=families,
                          n_benign=int(doc["benign"]), generator=doc["generator"])


def spec_to_dict(spec: SynthFamilySpec) -> dict:
    return {
        "name": spec.name,
        "bias_ngrams": [{"ngram": g.hex(), "weight": w} for g, w in spec.bias_ngrams],
        "background_seed": spec.background_seed,
        "min_len": spec.min_len,
        "max_len": spec.max_len,
        "separation": spec.separation,
    }


def spec_from_dict(doc: dict, where: str = "spec") -> SynthFamilySpec:
    try:
        spec = SynthFamilySpec(
            name=doc["name"],
            bias_ngrams=[(bytes.fromhex(b["ngram"]), float(b["weight"]))
                         for b in doc["bias_ngrams"]],
            background_seed=int(doc["background_seed"]),
            min_len=int(doc["min_len"]), max_len=int(doc["max_len"]),
            separation=float(doc["separation"]))
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"{where}: bad family spec: {e}") from None
    spec.validate()
    return spec


def save_specs(specs: list[SynthFamilySpec], path: str | Path) -> None:
    doc = {"format": "bytegrams-synth-specs", "version": 1,
           "families": [spec_to_dict(s) for s in specs]}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_specs(path: str | Path) -> list[SynthFamilySpec]:
    doc = _load_json(path)
    if doc.get("format") != "bytegrams-synth-specs" or "families" not in doc:
        raise FormatError(f"{path}: not a synthetic spec file")
    return [spec_from_dict(d, where=str(path)) for d in doc["families"]]


# --- corpus directories ----------------------------------------------------------
# layout:  <dir>/manifest.json,  <dir>/samples/<family>/<sample id>.bin

def save_corpus(out_dir: str | Path, samples: list[Sample], manifest: CorpusManifest) -> None:
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    for s in samples:
        fam_dir = out / "samples" / s.family
        fam_dir.mkdir(exist_ok=True)
        (fam_dir / f"{s.id}.bin").write_bytes(s.bytes())
    save_manifest(manifest, out / "manifest.json")


def load_corpus(corpus_dir: str | Path) -> tuple[list[Sample], CorpusManifest]:
    root = Path(corpus_dir)
    manifest = load_manifest(root / "manifest.json")
    samples: list[Sample] = []
    groups = sorted(manifest.families) + [(BENIGN_FAMILY, manifest.n_benign)]
    for family, expected in groups:
        fam_dir = root / "samples" / family
        label = BENIGN if family == BENIGN_FAMILY else MALWARE
        files = sorted(fam_dir.glob("*.bin")) if fam_dir.is_dir() else []
        if len(files) != expected:
            raise IngestionError(f"{root}: family {family!r} has {len(files)} sample "
                                 f"files, manifest says {expected}")
        for p in files:
            samples.append(Sample(id=p.stem, label=label, family=family,
                                  source=str(p), path=p))
    return samples, manifest


def scan_directory(path: str | Path, label: int, family: str,
                   max_bytes: int = MAX_SAMPLE_BYTES) -> list[Sample]:
    """Ingest every regular file under path as one family, in lexicographic order."""
    root = Path(path)
    if not root.is_dir():
        raise IngestionError(f"{path}: not a directory")
    files = sorted((p for p in root.rglob("*") if p.is_file()),
                   key=lambda p: p.relative_to(root).as_posix())
    samples = []
    for p in files:
        try:
            size = p.stat().st_size
            if size == 0:
                log.warning("skipping zero-byte file %s", p)
                continue
            rel = p.relative_to(root).as_posix().replace("/", "__")
            sid = f"{family}--{rel}"
            if size > max_bytes:
                samples.append(Sample(id=sid, label=label, family=family,
                                      source=str(p), path=p))
            else:
                samples.append(Sample(id=sid, label=label, family=family,
                                      source=str(p), data=p.read_bytes()))
        except OSError as e:
            raise IngestionError(f"{p}: {e}") from None
    return samples
