"""Retrieval in the shared latent space, with CSLS hubness correction.

After training, every language embeds into one latent space via
x -> M^(1/2) R^T x; translation is nearest-neighbor search there,
either by plain cosine or by CSLS, which discounts hub words by each
word's average similarity to its k nearest neighbors on the other
side.  An alternative inference mode maps source vectors directly into
the target's original coordinates and ranks there.
"""

import warnings

import numpy as np

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .model import GeommParams, compose_transform

MODES = ("nn", "csls")
SPACES = ("latent", "target_space")
DEFAULT_CSLS_K = 10
DEFAULT_VOCAB_CAP = 200000
_LATENT_NORM_FLOOR = 1e-12
_QUERY_CHUNK = 512
_PENALTY_CHUNK = 1024


def spd_sqrt(b: np.ndarray, eig_floor: float = 1e-12) -> np.ndarray:
    """Symmetric square root by eigendecomposition.

    Eigenvalues below ``eig_floor`` are clamped up to it (with a
    warning), so the result is always invertible even for a metric that
    collapsed numerically.
    """
    w, q = np.linalg.eigh(b)
    if w.min() < eig_floor:
        warnings.warn(f"clamping {int((w < eig_floor).sum())} metric eigenvalues "
                      f"below {eig_floor:g}")
        w = np.maximum(w, eig_floor)
    root = (q * np.sqrt(w)) @ q.T
    return 0.5 * (root + root.T)


def to_latent(params: GeommParams, lang: str, x: np.ndarray) -> np.ndarray:
    """Map vectors of ``lang`` into the shared latent space: M^(1/2) R^T x."""
    return spd_sqrt(params.metric) @ params.rotation(lang).T @ np.asarray(x, dtype=float)


@dataclass
class RetrievalIndex:
    """Unit-normalized latent vectors for one language's vocabulary.

    ``csls_penalty`` holds each word's mean cosine to its csls_k nearest
    neighbors on the opposing side; present only when the index was
    built against an opposing index.
    """

    vocab: List[str]
    latent: np.ndarray
    csls_k: Optional[int] = None
    csls_penalty: Optional[np.ndarray] = None
    word_index: Dict[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.word_index:
            self.word_index = {w: i for i, w in enumerate(self.vocab)}

    def __len__(self) -> int:
        return len(self.vocab)


def _topk_mean_columns(sims: np.ndarray, k: int) -> np.ndarray:
    """Mean of the k largest entries in each column."""
    n = sims.shape[0]
    if k >= n:
        return sims.mean(axis=0)
    return np.partition(sims, n - k, axis=0)[n - k:, :].mean(axis=0)


def csls_penalties(own_unit: np.ndarray, opposing_unit: np.ndarray, k: int,
                   chunk: int = _PENALTY_CHUNK) -> np.ndarray:
    """Hubness penalty of each ``own`` column: mean cosine to its k
    nearest neighbors among the opposing columns."""
    n_opp = opposing_unit.shape[1]
    if not 1 <= k <= n_opp:
        raise ValueError(f"csls k={k} must lie in [1, {n_opp}]")
    n = own_unit.shape[1]
    out = np.empty(n)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        sims = opposing_unit.T @ own_unit[:, lo:hi]
        out[lo:hi] = _topk_mean_columns(sims, k)
    return out


def _normalize_columns(mat: np.ndarray, what: str):
    norms = np.linalg.norm(mat, axis=0)
    keep = norms > _LATENT_NORM_FLOOR
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"dropped {dropped} zero-norm {what} vectors")
    return mat[:, keep] / norms[keep], keep


def _index_from_latent(vocab: List[str], latent: np.ndarray,
                       opposing: Optional[RetrievalIndex], k: int) -> RetrievalIndex:
    unit, keep = _normalize_columns(latent, "latent")
    kept_vocab = [w for w, flag in zip(vocab, keep) if flag]
    index = RetrievalIndex(vocab=kept_vocab, latent=np.ascontiguousarray(unit))
    if opposing is not None:
        index.csls_k = k
        index.csls_penalty = csls_penalties(index.latent, opposing.latent, k)
    return index


def build_index(params: GeommParams, lang: str, embeddings,
                opposing: Optional[RetrievalIndex] = None,
                k: int = DEFAULT_CSLS_K,
                vocab_cap: Optional[int] = None) -> RetrievalIndex:
    """Latent-space index over (a frequency-capped prefix of) a vocabulary.

    Pass the other language's index as ``opposing`` to also compute
    CSLS penalties for this one.
    """
    vocab, vectors = embeddings.vocab, embeddings.vectors
    if vocab_cap is not None and len(vocab) > vocab_cap:
        vocab, vectors = vocab[:vocab_cap], vectors[:, :vocab_cap]
    latent = to_latent(params, lang, vectors)
    return _index_from_latent(list(vocab), latent, opposing, k)


def csls_score(query_index: RetrievalIndex, query_pos: int,
               target_index: RetrievalIndex, target_pos: int) -> float:
    """CSLS score between two indexed words:
    2 cos(x, z) - penalty(x) - penalty(z)."""
    if query_index.csls_penalty is None or target_index.csls_penalty is None:
        raise ValueError("both indexes need CSLS penalties (build with an opposing index)")
    cos = float(query_index.latent[:, query_pos] @ target_index.latent[:, target_pos])
    return 2.0 * cos - float(query_index.csls_penalty[query_pos]) \
        - float(target_index.csls_penalty[target_pos])


def rank_candidates(query_unit: np.ndarray, cand_unit: np.ndarray, mode: str,
                    top_k: int, csls_k: int = DEFAULT_CSLS_K,
                    cand_penalty: Optional[np.ndarray] = None,
                    chunk: int = _QUERY_CHUNK) -> np.ndarray:
    """Top candidates per query column, ties broken by ascending
    candidate index.

    For CSLS the query-side penalty is computed on the fly from the
    same similarity block; ``cand_penalty`` must hold the candidates'
    penalties against the full query-side vocabulary.
    """
    if mode not in MODES:
        raise ValueError(f"unknown retrieval mode {mode!r}")
    if mode == "csls" and cand_penalty is None:
        raise ValueError("csls mode needs candidate penalties")
    n_q = query_unit.shape[1]
    n_c = cand_unit.shape[1]
    top_k = min(top_k, n_c)
    out = np.empty((n_q, top_k), dtype=np.int64)
    for lo in range(0, n_q, chunk):
        hi = min(lo + chunk, n_q)
        cos = query_unit[:, lo:hi].T @ cand_unit   # (q, n_c)
        if mode == "csls":
            query_pen = _topk_mean_columns(cos.T, min(csls_k, n_c))
            scores = 2.0 * cos - query_pen[:, None] - cand_penalty[None, :]
        else:
            scores = cos
        order = np.argsort(-scores, axis=1, kind="stable")
        out[lo:hi] = order[:, :top_k]
    return out


@dataclass
class TranslationResult:
    queries: List[str]
    translations: Dict[str, List[str]]   # only for in-vocabulary queries
    oov: List[str]


def _latent_sides(params, src, tgt, src_emb, tgt_emb, csls_k, vocab_cap):
    """Unit latent matrices and the candidate-side penalty array."""
    src_index = build_index(params, src, src_emb, vocab_cap=vocab_cap)
    tgt_index = build_index(params, tgt, tgt_emb, vocab_cap=vocab_cap)
    cand_pen = csls_penalties(tgt_index.latent, src_index.latent, min(csls_k, len(src_index)))
    return src_index, tgt_index, cand_pen


def _mapped_sides(params, src, tgt, src_emb, tgt_emb, csls_k, vocab_cap):
    """Source vectors pushed into the target's original space."""
    transform = compose_transform(params, src, tgt)
    return _matrix_sides(transform, src_emb, tgt_emb, csls_k, vocab_cap)


def _matrix_sides(transform, src_emb, tgt_emb, csls_k, vocab_cap):
    src_vocab, src_vec = src_emb.vocab, src_emb.vectors
    tgt_vocab, tgt_vec = tgt_emb.vocab, tgt_emb.vectors
    if vocab_cap is not None:
        src_vocab, src_vec = src_vocab[:vocab_cap], src_vec[:, :vocab_cap]
        tgt_vocab, tgt_vec = tgt_vocab[:vocab_cap], tgt_vec[:, :vocab_cap]
    mapped, keep = _normalize_columns(transform @ src_vec, "mapped source")
    src_index = RetrievalIndex(vocab=[w for w, f in zip(src_vocab, keep) if f],
                               latent=mapped)
    tgt_index = RetrievalIndex(vocab=list(tgt_vocab), latent=np.ascontiguousarray(tgt_vec))
    cand_pen = csls_penalties(tgt_index.latent, src_index.latent, min(csls_k, len(src_index)))
    return src_index, tgt_index, cand_pen


def _translate_from_sides(src_index, tgt_index, cand_pen, queries,
                          top_k, mode, csls_k) -> TranslationResult:
    positions = [src_index.word_index.get(w) for w in queries]
    oov = [w for w, p in zip(queries, positions) if p is None]
    known = [(w, p) for w, p in zip(queries, positions) if p is not None]
    translations: Dict[str, List[str]] = {}
    if known:
        cols = np.array([p for _, p in known], dtype=np.int64)
        ranked = rank_candidates(src_index.latent[:, cols], tgt_index.latent,
                                 mode, top_k, csls_k, cand_pen)
        for (word, _), row in zip(known, ranked):
            translations[word] = [tgt_index.vocab[j] for j in row]
    return TranslationResult(queries=list(queries), translations=translations, oov=oov)


def translate(params: GeommParams, src: str, tgt: str, queries: Sequence[str],
              src_emb, tgt_emb, top_k: int = 10, mode: str = "csls",
              space: str = "latent", csls_k: int = DEFAULT_CSLS_K,
              vocab_cap: Optional[int] = DEFAULT_VOCAB_CAP) -> TranslationResult:
    """Translate query words from ``src`` to ``tgt``.

    ``space`` picks where similarities live: 'latent' compares both
    sides in the shared latent space; 'target_space' maps source
    vectors into the target's original coordinates first.  Queries
    missing from the source vocabulary come back in ``oov``.
    """
    if space not in SPACES:
        raise ValueError(f"unknown retrieval space {space!r}")
    sides = _latent_sides if space == "latent" else _mapped_sides
    src_index, tgt_index, cand_pen = sides(params, src, tgt, src_emb, tgt_emb,
                                           csls_k, vocab_cap)
    return _translate_from_sides(src_index, tgt_index, cand_pen, queries,
                                 top_k, mode, csls_k)


def translate_mapped(transform: np.ndarray, queries: Sequence[str],
                     src_emb, tgt_emb, top_k: int = 10, mode: str = "csls",
                     csls_k: int = DEFAULT_CSLS_K,
                     vocab_cap: Optional[int] = DEFAULT_VOCAB_CAP) -> TranslationResult:
    """Like translate, but for an explicit source-to-target linear map,
    ranking in the target's original space."""
    src_index, tgt_index, cand_pen = _matrix_sides(transform, src_emb, tgt_emb,
                                                   csls_k, vocab_cap)
    return _translate_from_sides(src_index, tgt_index, cand_pen, queries,
                                 top_k, mode, csls_k)


@dataclass
class BliReport:
    """Precision@k of dictionary induction against a gold dictionary."""

    precision: Dict[int, float]          # percentages
    n_evaluated: int
    n_src_oov: int
    n_no_gold: int

    @property
    def coverage(self) -> float:
        total = self.n_evaluated + self.n_src_oov + self.n_no_gold
        return self.n_evaluated / total if total else 0.0

    def metrics(self) -> Dict[str, float]:
        out = {f"p@{k}": v for k, v in sorted(self.precision.items())}
        out.update(n_evaluated=self.n_evaluated, n_src_oov=self.n_src_oov,
                   n_no_gold=self.n_no_gold, coverage=self.coverage)
        return out


def _evaluate_ranked(gold: Dict[str, set], query_words: List[str],
                     ranked_vocab: List[List[str]],
                     precisions: Sequence[int]) -> Dict[int, float]:
    hits = {k: 0 for k in precisions}
    for word, cands in zip(query_words, ranked_vocab):
        golds = gold[word]
        for k in precisions:
            if any(c in golds for c in cands[:k]):
                hits[k] += 1
    n = len(query_words)
    return {k: 100.0 * hits[k] / n if n else 0.0 for k in precisions}


def evaluate_bli(params: GeommParams, src: str, tgt: str,
                 test_pairs: Sequence[Tuple[str, str]], src_emb, tgt_emb,
                 mode: str = "csls", space: str = "latent",
                 csls_k: int = DEFAULT_CSLS_K,
                 vocab_cap: Optional[int] = DEFAULT_VOCAB_CAP,
                 precisions: Sequence[int] = (1, 5, 10)) -> BliReport:
    """Precision@k over a test dictionary.

    A query counts as correct at k if any of its gold translations
    appears in the top k.  Queries missing from the source vocabulary,
    or whose gold translations are all missing from the target
    vocabulary, are excluded from the denominator and reported.
    """
    if space not in SPACES:
        raise ValueError(f"unknown retrieval space {space!r}")
    sides = _latent_sides if space == "latent" else _mapped_sides
    src_index, tgt_index, cand_pen = sides(params, src, tgt, src_emb, tgt_emb,
                                           csls_k, vocab_cap)
    return _bli_against_indexes(test_pairs, src_index, tgt_index, cand_pen,
                                mode, csls_k, precisions)


def _bli_against_indexes(test_pairs, src_index, tgt_index, cand_pen,
                         mode, csls_k, precisions) -> BliReport:
    gold: Dict[str, set] = {}
    for s, t in test_pairs:
        gold.setdefault(s, set()).add(t)
    usable: List[Tuple[str, int]] = []
    n_src_oov = n_no_gold = 0
    for word, golds in gold.items():
        pos = src_index.word_index.get(word)
        if pos is None:
            n_src_oov += 1
        elif not any(t in tgt_index.word_index for t in golds):
            n_no_gold += 1
        else:
            usable.append((word, pos))
    if not usable:
        return BliReport(precision={k: 0.0 for k in precisions}, n_evaluated=0,
                         n_src_oov=n_src_oov, n_no_gold=n_no_gold)
    top = max(precisions)
    cols = np.array([p for _, p in usable], dtype=np.int64)
    ranked = rank_candidates(src_index.latent[:, cols], tgt_index.latent,
                             mode, top, csls_k, cand_pen)
    words = [w for w, _ in usable]
    ranked_vocab = [[tgt_index.vocab[j] for j in row] for row in ranked]
    precision = _evaluate_ranked(gold, words, ranked_vocab, precisions)
    return BliReport(precision=precision, n_evaluated=len(usable),
                     n_src_oov=n_src_oov, n_no_gold=n_no_gold)


def evaluate_bli_mapped(transform: np.ndarray,
                        test_pairs: Sequence[Tuple[str, str]], src_emb, tgt_emb,
                        mode: str = "csls", csls_k: int = DEFAULT_CSLS_K,
                        vocab_cap: Optional[int] = DEFAULT_VOCAB_CAP,
                        precisions: Sequence[int] = (1, 5, 10)) -> BliReport:
    """Precision@k for an explicit source-to-target linear map, ranked in
    the target's original space.  Used by orthogonal-baseline scoring
    and pivot compositions."""
    src_index, tgt_index, cand_pen = _matrix_sides(transform, src_emb, tgt_emb,
                                                   csls_k, vocab_cap)
    return _bli_against_indexes(test_pairs, src_index, tgt_index, cand_pen,
                                mode, csls_k, precisions)


@dataclass
class SimilarityReport:
    pearson: float
    n_used: int
    n_skipped: int

    def metrics(self) -> Dict[str, float]:
        return {"pearson": self.pearson, "n_used": self.n_used,
                "n_skipped": self.n_skipped}


def evaluate_word_similarity(params: GeommParams, src: str, tgt: str,
                             scored_pairs: Sequence[Tuple[str, str, float]],
                             src_emb, tgt_emb) -> SimilarityReport:
    """Pearson correlation between human ratings and latent cosines.

    Pairs with either word out of vocabulary are skipped.  Monolingual
    datasets work by passing the same language and embeddings twice.
    Fails if fewer than three pairs survive.
    """
    # normalize in place (no column drops, so embedding indexes stay valid)
    src_latent = to_latent(params, src, src_emb.vectors)
    tgt_latent = to_latent(params, tgt, tgt_emb.vectors)
    src_unit = src_latent / np.maximum(np.linalg.norm(src_latent, axis=0), _LATENT_NORM_FLOOR)
    tgt_unit = tgt_latent / np.maximum(np.linalg.norm(tgt_latent, axis=0), _LATENT_NORM_FLOOR)
    human, predicted = [], []
    n_skipped = 0
    for w_src, w_tgt, score in scored_pairs:
        i = src_emb.lookup(w_src)
        j = tgt_emb.lookup(w_tgt)
        if i is None or j is None:
            n_skipped += 1
            continue
        human.append(float(score))
        predicted.append(float(src_unit[:, i] @ tgt_unit[:, j]))
    if len(human) < 3:
        raise ValueError(f"only {len(human)} scored pairs in vocabulary; "
                         "need at least 3 for a correlation")
    pearson = float(np.corrcoef(np.array(human), np.array(predicted))[0, 1])
    return SimilarityReport(pearson=pearson, n_used=len(human), n_skipped=n_skipped)
