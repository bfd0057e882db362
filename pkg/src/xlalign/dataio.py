"""File formats: embeddings, dictionaries, and trained models.

Embeddings use the word2vec text layout: a "count dim" header line,
then one word per line followed by its values, space separated.
Dictionaries are two whitespace-separated words per line.  Models are
written as a single .npz container with a JSON metadata entry and a
content checksum so silent corruption is caught at load time.
"""

import hashlib
import json
import warnings

import numpy as np

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .model import GeommParams

MODEL_FORMAT_VERSION = 1

PREPROCESS_SCHEMES = ("unit", "unit_center_unit")


class DataError(Exception):
    """Malformed or inconsistent input data."""


@dataclass
class RawEmbeddings:
    """Embeddings as read from disk, one column per word, unnormalized."""

    vocab: List[str]
    vectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]


@dataclass
class EmbeddingMatrix:
    """Preprocessed embeddings: unit columns plus a word lookup."""

    vocab: List[str]
    vectors: np.ndarray
    scheme: str
    word_index: Dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.word_index:
            self.word_index = {w: i for i, w in enumerate(self.vocab)}

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def __len__(self) -> int:
        return len(self.vocab)

    def lookup(self, word: str) -> Optional[int]:
        return self.word_index.get(word)


def load_embeddings(path: str, max_vocab: Optional[int] = None) -> RawEmbeddings:
    """Read word2vec text format.

    The header row count is authoritative: a file that ends early is an
    error.  Duplicate words keep their first occurrence (warning).
    ``max_vocab`` keeps only the first rows, which in frequency-sorted
    files means the most frequent words.
    """
    vocab: List[str] = []
    rows: List[np.ndarray] = []
    seen = set()
    dupes = 0
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        header = fh.readline()
        parts = header.split()
        if len(parts) != 2:
            raise DataError(f"{path}:1: expected 'count dim' header, got {header.strip()!r}")
        try:
            count, dim = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{path}:1: non-integer header {header.strip()!r}") from None
        if count <= 0 or dim <= 0:
            raise DataError(f"{path}:1: non-positive count or dim")
        for row in range(count):
            if max_vocab is not None and len(vocab) >= max_vocab:
                break
            line = fh.readline()
            lineno = row + 2
            if not line:
                raise DataError(f"{path}: header promised {count} rows, file ends at row {row}")
            tokens = line.rstrip("\n").split(" ")
            if tokens and tokens[-1] == "":   # tolerate a trailing space
                tokens.pop()
            if len(tokens) != dim + 1:
                raise DataError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(tokens)}")
            word = tokens[0]
            if word in seen:
                dupes += 1
                continue
            try:
                values = np.array(tokens[1:], dtype=float)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric vector entry") from None
            if not np.all(np.isfinite(values)):
                raise DataError(f"{path}:{lineno}: non-finite vector entry")
            seen.add(word)
            vocab.append(word)
            rows.append(values)
    if dupes:
        warnings.warn(f"{path}: skipped {dupes} duplicate words (first occurrence kept)")
    if not vocab:
        raise DataError(f"{path}: empty vocabulary")
    return RawEmbeddings(vocab=vocab, vectors=np.array(rows).T)


def _drop_zero_columns(vocab, vectors, what):
    norms = np.linalg.norm(vectors, axis=0)
    keep = norms > 0
    n_dropped = int((~keep).sum())
    if n_dropped == len(vocab):
        raise DataError(f"all embedding columns are zero {what}")
    if n_dropped:
        warnings.warn(f"dropped {n_dropped} zero-norm words {what}")
        vocab = [w for w, k in zip(vocab, keep) if k]
        vectors = vectors[:, keep]
        norms = norms[keep]
    return vocab, vectors / norms, norms


def preprocess(raw: RawEmbeddings, scheme: str = "unit") -> EmbeddingMatrix:
    """Length-normalize columns; optionally mean-center and renormalize.

    'unit' divides each column by its norm.  'unit_center_unit'
    additionally subtracts the vocabulary mean of the normalized
    vectors and normalizes again.  Words that end up with zero norm are
    dropped with a warning.
    """
    if scheme not in PREPROCESS_SCHEMES:
        raise ValueError(f"unknown preprocessing scheme {scheme!r}")
    vocab, unit, _ = _drop_zero_columns(list(raw.vocab), np.asarray(raw.vectors, dtype=float),
                                        "before normalization")
    if scheme == "unit_center_unit":
        centered = unit - unit.mean(axis=1, keepdims=True)
        vocab, unit, _ = _drop_zero_columns(vocab, centered, "after centering")
    return EmbeddingMatrix(vocab=vocab, vectors=np.ascontiguousarray(unit), scheme=scheme)


def load_dictionary(path: str) -> List[Tuple[str, str]]:
    """Read a translation dictionary: two whitespace-separated words per
    line.  Malformed lines are skipped with a warning naming them;
    duplicate pairs keep first appearance."""
    pairs: List[Tuple[str, str]] = []
    seen = set()
    bad: List[int] = []
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 2:
                bad.append(lineno)
                continue
            pair = (tokens[0], tokens[1])
            if pair in seen:
                continue
            seen.add(pair)
            pairs.append(pair)
    if bad:
        shown = ", ".join(map(str, bad[:10]))
        more = "" if len(bad) <= 10 else f" (+{len(bad) - 10} more)"
        warnings.warn(f"{path}: skipped {len(bad)} malformed lines: {shown}{more}")
    return pairs


def save_dictionary(path: str, pairs: Sequence[Tuple[str, str]]) -> None:
    with open(path, "w", encoding="utf-8", errors="surrogateescape") as fh:
        for src, tgt in pairs:
            fh.write(f"{src}\t{tgt}\n")


def load_scored_pairs(path: str) -> List[Tuple[str, str, float]]:
    """Read a word-similarity dataset: two words and a numeric rating per
    line.  Malformed lines are skipped with a warning naming them."""
    triples: List[Tuple[str, str, float]] = []
    bad: List[int] = []
    with open(path, encoding="utf-8", errors="surrogateescape") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens:
                continue
            if len(tokens) != 3:
                bad.append(lineno)
                continue
            try:
                score = float(tokens[2])
            except ValueError:
                bad.append(lineno)
                continue
            triples.append((tokens[0], tokens[1], score))
    if bad:
        shown = ", ".join(map(str, bad[:10]))
        more = "" if len(bad) <= 10 else f" (+{len(bad) - 10} more)"
        warnings.warn(f"{path}: skipped {len(bad)} malformed lines: {shown}{more}")
    return triples


def _model_checksum(meta_json: str, arrays: Sequence[np.ndarray]) -> str:
    digest = hashlib.sha256()
    digest.update(meta_json.encode("utf-8"))
    for arr in arrays:
        digest.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return digest.hexdigest()


def save_model(path: str, params: GeommParams, extra_meta: Optional[dict] = None) -> None:
    """Write a model container: rotations, metric, JSON metadata, checksum.

    Arrays round-trip bit exactly (float64 throughout).
    """
    params.validate()
    meta = {
        "format_version": MODEL_FORMAT_VERSION,
        "dim": params.dim,
        "languages": list(params.languages),
        "extra": extra_meta or {},
    }
    meta_json = json.dumps(meta, sort_keys=True)
    arrays = {f"rotation_{i}": np.ascontiguousarray(params.rotation(lang), dtype=float)
              for i, lang in enumerate(params.languages)}
    arrays["metric"] = np.ascontiguousarray(params.metric, dtype=float)
    ordered = [arrays[f"rotation_{i}"] for i in range(len(params.languages))]
    ordered.append(arrays["metric"])
    checksum = _model_checksum(meta_json, ordered)
    # write through a handle so the filename is used verbatim (np.savez
    # would otherwise append .npz)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(meta_json), checksum=np.array(checksum), **arrays)


def load_model(path: str) -> Tuple[GeommParams, dict]:
    """Read a model container; verifies version and checksum."""
    try:
        with np.load(path, allow_pickle=False) as data:
            contents = {key: data[key] for key in data.files}
    except Exception as exc:
        raise DataError(f"{path}: unreadable model container ({exc})") from exc
    for key in ("meta", "checksum", "metric"):
        if key not in contents:
            raise DataError(f"{path}: model container is missing {key!r}")
    try:
        meta = json.loads(str(contents["meta"]))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: corrupt model metadata") from exc
    version = meta.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format version {version!r} "
                        f"(this build reads version {MODEL_FORMAT_VERSION})")
    languages = tuple(meta["languages"])
    arrays = []
    rotations = {}
    for i, lang in enumerate(languages):
        key = f"rotation_{i}"
        if key not in contents:
            raise DataError(f"{path}: model container is missing {key!r}")
        rotations[lang] = contents[key]
        arrays.append(contents[key])
    arrays.append(contents["metric"])
    meta_json = json.dumps(meta, sort_keys=True)
    if _model_checksum(meta_json, arrays) != str(contents["checksum"]):
        raise DataError(f"{path}: checksum mismatch, model container is corrupt")
    params = GeommParams(languages=languages, rotations=rotations,
                         metric=contents["metric"])
    params.validate()
    return params, meta.get("extra", {})
