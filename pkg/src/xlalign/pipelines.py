"""Training pipelines: bilingual, multilingual, and pivot-based routes.

Handles everything around the optimizer: dropping out-of-vocabulary
dictionary pairs, deterministic train/validation splits, selecting the
regularizer on validation precision, retraining on the full
dictionary, and the three ways to cross a language pair that has no
direct dictionary (composed maps, pivot-word quantization, and joint
multilingual training).
"""

import hashlib

import numpy as np

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from . import model as model_mod
from . import retrieval
from .dataio import EmbeddingMatrix
from .model import (DictionaryData, GeommParams, ModelVariant, compose_transform,
                    procrustes_fit, variant_problem)
from .optimizer import Problem, SolverOptions, SolverReport, rcg_minimize
from .manifolds import ProductManifold

DEFAULT_REG_GRID = (10.0, 100.0, 1000.0, 10000.0)

Pair = Tuple[str, str]


@dataclass
class TrainConfig:
    """Knobs shared by every training entry point."""

    reg_grid: Tuple[float, ...] = DEFAULT_REG_GRID
    validation_fraction: float = 0.2
    solver: SolverOptions = field(default_factory=SolverOptions)
    seed: int = 0
    retrieval_mode: str = "csls"
    csls_k: int = retrieval.DEFAULT_CSLS_K
    vocab_cap: Optional[int] = retrieval.DEFAULT_VOCAB_CAP

    def validate(self) -> None:
        if not self.reg_grid:
            raise ValueError("empty regularizer grid")
        if any(r < 0 for r in self.reg_grid):
            raise ValueError("regularizer values must be nonnegative")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        self.solver.validate()


def split_pairs(pairs: Sequence[Pair], fraction: float, seed: int) -> Tuple[List[Pair], List[Pair]]:
    """Deterministic (train, held_out) split.

    Assignment hashes each pair's text with the seed, so it is stable
    across runs, platforms, and pair order; roughly ``fraction`` of the
    pairs land in the held-out part.
    """
    train: List[Pair] = []
    held: List[Pair] = []
    for src, tgt in pairs:
        digest = hashlib.sha256(f"{seed}:{src}\t{tgt}".encode("utf-8", "surrogateescape")).digest()
        bucket = int.from_bytes(digest[:8], "big") / 2 ** 64
        (held if bucket < fraction else train).append((src, tgt))
    return train, held


def make_dictionary_data(pairs: Sequence[Pair], src_emb: EmbeddingMatrix,
                         tgt_emb: EmbeddingMatrix) -> Tuple[DictionaryData, int]:
    """Index a word dictionary against two vocabularies.

    Builds the unique-word matrices the factored loss needs; pairs with
    either word out of vocabulary are dropped (count returned).
    """
    src_cols: List[int] = []
    tgt_cols: List[int] = []
    src_seen: Dict[int, int] = {}
    tgt_seen: Dict[int, int] = {}
    indices: List[Tuple[int, int]] = []
    dropped = 0
    for src_word, tgt_word in pairs:
        i = src_emb.lookup(src_word)
        j = tgt_emb.lookup(tgt_word)
        if i is None or j is None:
            dropped += 1
            continue
        if i not in src_seen:
            src_seen[i] = len(src_cols)
            src_cols.append(i)
        if j not in tgt_seen:
            tgt_seen[j] = len(tgt_cols)
            tgt_cols.append(j)
        indices.append((src_seen[i], tgt_seen[j]))
    if not indices:
        raise ValueError("no dictionary pair is covered by both vocabularies")
    data = DictionaryData(src_vectors=src_emb.vectors[:, src_cols],
                          tgt_vectors=tgt_emb.vectors[:, tgt_cols],
                          pair_indices=np.array(indices, dtype=np.int64))
    return data, dropped


@dataclass
class RegCandidate:
    reg: float
    val_p1: float
    iterations: int
    termination: str


@dataclass
class TrainReport:
    candidates: List[RegCandidate]
    selected_reg: float
    n_train_pairs: int
    n_val_pairs: int
    n_dropped_oov: int
    final_cost: float
    final_grad_norm: float
    final_iterations: int
    final_termination: str

    def metrics(self) -> Dict[str, float]:
        return {"selected_reg": self.selected_reg,
                "n_train_pairs": self.n_train_pairs,
                "n_val_pairs": self.n_val_pairs,
                "n_dropped_oov": self.n_dropped_oov,
                "final_cost": self.final_cost,
                "final_iterations": self.final_iterations}


def fit_bilingual(src_emb: EmbeddingMatrix, tgt_emb: EmbeddingMatrix,
                  pairs: Sequence[Pair], reg: float,
                  solver: Optional[SolverOptions] = None,
                  languages: Tuple[str, str] = ("src", "tgt"),
                  ) -> Tuple[GeommParams, SolverReport, int]:
    """Single fit at a fixed regularizer, from identity initialization."""
    data, dropped = make_dictionary_data(pairs, src_emb, tgt_emb)
    vp = variant_problem(ModelVariant.FULL, data, reg, languages)
    report = rcg_minimize(vp.problem, vp.init, solver or SolverOptions())
    return vp.decode(report.point), report, dropped


def _usable_pairs(pairs, src_emb, tgt_emb):
    kept = [(s, t) for s, t in pairs
            if src_emb.lookup(s) is not None and tgt_emb.lookup(t) is not None]
    return kept, len(pairs) - len(kept)


def _val_p1(params, languages, val_pairs, src_emb, tgt_emb, config) -> float:
    report = retrieval.evaluate_bli(params, languages[0], languages[1], val_pairs,
                                    src_emb, tgt_emb, mode=config.retrieval_mode,
                                    space="latent", csls_k=config.csls_k,
                                    vocab_cap=config.vocab_cap, precisions=(1,))
    return report.precision[1]


def train_bilingual(src_emb: EmbeddingMatrix, tgt_emb: EmbeddingMatrix,
                    pairs: Sequence[Pair], config: Optional[TrainConfig] = None,
                    languages: Tuple[str, str] = ("src", "tgt"),
                    ) -> Tuple[GeommParams, TrainReport]:
    """Full bilingual training: validation-based regularizer selection,
    then a retrain on the entire usable dictionary.

    Ties on validation precision go to the earliest grid entry.  With a
    one-point grid and no validation pairs the selection step is a
    no-op instead of an error.
    """
    config = config or TrainConfig()
    config.validate()
    usable, dropped = _usable_pairs(pairs, src_emb, tgt_emb)
    if not usable:
        raise ValueError("no dictionary pair is covered by both vocabularies")
    train, val = split_pairs(usable, config.validation_fraction, config.seed)
    if not train:
        raise ValueError("training split is empty; lower validation_fraction")
    if not val and len(config.reg_grid) > 1:
        raise ValueError("validation split is empty but the regularizer grid "
                         "has several entries; provide more pairs")

    candidates: List[RegCandidate] = []
    for reg in config.reg_grid:
        params, report, _ = fit_bilingual(src_emb, tgt_emb, train, reg,
                                          config.solver, languages)
        val_p1 = _val_p1(params, languages, val, src_emb, tgt_emb, config) \
            if val else float("nan")
        candidates.append(RegCandidate(reg=reg, val_p1=val_p1,
                                       iterations=report.iterations,
                                       termination=report.termination))
    best = max(range(len(candidates)),
               key=lambda i: (np.nan_to_num(candidates[i].val_p1, nan=-1.0), -i))
    selected = candidates[best].reg

    params, report, _ = fit_bilingual(src_emb, tgt_emb, usable, selected,
                                      config.solver, languages)
    train_report = TrainReport(candidates=candidates, selected_reg=selected,
                               n_train_pairs=len(train), n_val_pairs=len(val),
                               n_dropped_oov=dropped, final_cost=report.cost,
                               final_grad_norm=report.grad_norm,
                               final_iterations=report.iterations,
                               final_termination=report.termination)
    return params, train_report


@dataclass
class LanguageGraph:
    """Languages plus the dictionary edges connecting them.

    Edges are undirected for connectivity purposes but each edge's pair
    list is stored in a (source, target) direction that training
    respects.
    """

    embeddings: Dict[str, EmbeddingMatrix]
    edges: List[Tuple[str, str, List[Pair]]]

    @property
    def languages(self) -> Tuple[str, ...]:
        return tuple(self.embeddings.keys())

    def validate(self) -> None:
        if len(self.embeddings) < 2:
            raise ValueError("a language graph needs at least two languages")
        dims = {emb.dim for emb in self.embeddings.values()}
        if len(dims) != 1:
            raise ValueError(f"embedding dimensions disagree: {sorted(dims)}")
        if not self.edges:
            raise ValueError("a language graph needs at least one dictionary edge")
        seen = set()
        adjacency: Dict[str, set] = {lang: set() for lang in self.embeddings}
        for src, tgt, pairs in self.edges:
            for lang in (src, tgt):
                if lang not in self.embeddings:
                    raise ValueError(f"edge language {lang!r} has no embeddings")
            if src == tgt:
                raise ValueError(f"self-loop edge on {src!r}")
            key = frozenset((src, tgt))
            if key in seen:
                raise ValueError(f"duplicate edge between {src!r} and {tgt!r}")
            seen.add(key)
            if not pairs:
                raise ValueError(f"edge {src!r}-{tgt!r} has no dictionary pairs")
            adjacency[src].add(tgt)
            adjacency[tgt].add(src)
        # breadth-first reachability from an arbitrary language
        start = next(iter(self.embeddings))
        frontier = [start]
        reached = {start}
        while frontier:
            lang = frontier.pop()
            for nxt in adjacency[lang]:
                if nxt not in reached:
                    reached.add(nxt)
                    frontier.append(nxt)
        missing = set(self.embeddings) - reached
        if missing:
            raise ValueError(f"language graph is disconnected: {sorted(missing)} "
                             "unreachable")


@dataclass
class MultiTrainReport:
    candidates: List[RegCandidate]
    selected_reg: float
    edge_pairs: Dict[Tuple[str, str], int]
    edge_dropped: Dict[Tuple[str, str], int]
    final_cost: float
    final_grad_norm: float
    final_iterations: int
    final_termination: str


def _multi_problem(graph: LanguageGraph, edge_data, reg: float) -> Tuple[Problem, tuple]:
    langs = graph.languages
    manifold = ProductManifold(("orth",) * len(langs) + ("spd",))
    dim = next(iter(graph.embeddings.values())).dim
    init = tuple(np.eye(dim) for _ in range(len(langs) + 1))

    def unpack(point) -> GeommParams:
        rotations = {lang: rot for lang, rot in zip(langs, point[:-1])}
        return GeommParams(languages=langs, rotations=rotations, metric=point[-1])

    def cost(point):
        return model_mod.multilingual_cost(unpack(point), edge_data, reg)

    def egrad(point):
        rot_grads, g_metric = model_mod.multilingual_egrad(unpack(point), edge_data, reg)
        return tuple(rot_grads[lang] for lang in langs) + (g_metric,)

    return Problem(manifold=manifold, cost=cost, egrad=egrad), init


def _fit_multilingual(graph: LanguageGraph, edge_pairs, reg, solver):
    edge_data = []
    for src, tgt, pairs in edge_pairs:
        data, _ = make_dictionary_data(pairs, graph.embeddings[src], graph.embeddings[tgt])
        edge_data.append((src, tgt, data))
    problem, init = _multi_problem(graph, edge_data, reg)
    report = rcg_minimize(problem, init, solver)
    langs = graph.languages
    rotations = {lang: rot for lang, rot in zip(langs, report.point[:-1])}
    return GeommParams(languages=langs, rotations=rotations, metric=report.point[-1]), report


def train_multilingual(graph: LanguageGraph, config: Optional[TrainConfig] = None,
                       ) -> Tuple[GeommParams, MultiTrainReport]:
    """Joint training over every edge of a connected language graph.

    The single shared regularizer is selected on pooled validation
    precision (each edge contributes its held-out pairs, scored in the
    edge's direction), then the model is retrained on all pairs.
    """
    config = config or TrainConfig()
    config.validate()
    graph.validate()

    usable_edges = []
    edge_pairs: Dict[Tuple[str, str], int] = {}
    edge_dropped: Dict[Tuple[str, str], int] = {}
    splits = []
    for src, tgt, pairs in graph.edges:
        kept, dropped = _usable_pairs(pairs, graph.embeddings[src], graph.embeddings[tgt])
        if not kept:
            raise ValueError(f"edge {src!r}-{tgt!r} has no usable pairs")
        usable_edges.append((src, tgt, kept))
        edge_pairs[(src, tgt)] = len(kept)
        edge_dropped[(src, tgt)] = dropped
        train, val = split_pairs(kept, config.validation_fraction, config.seed)
        if not train:
            raise ValueError(f"edge {src!r}-{tgt!r} has an empty training split")
        splits.append((src, tgt, train, val))

    any_val = any(val for _, _, _, val in splits)
    if not any_val and len(config.reg_grid) > 1:
        raise ValueError("all validation splits are empty but the regularizer "
                         "grid has several entries")

    candidates: List[RegCandidate] = []
    for reg in config.reg_grid:
        params, report = _fit_multilingual(
            graph, [(s, t, tr) for s, t, tr, _ in splits], reg, config.solver)
        correct = total = 0
        for src, tgt, _, val in splits:
            if not val:
                continue
            bli = retrieval.evaluate_bli(params, src, tgt, val,
                                         graph.embeddings[src], graph.embeddings[tgt],
                                         mode=config.retrieval_mode, space="latent",
                                         csls_k=config.csls_k,
                                         vocab_cap=config.vocab_cap, precisions=(1,))
            correct += bli.precision[1] / 100.0 * bli.n_evaluated
            total += bli.n_evaluated
        val_p1 = 100.0 * correct / total if total else float("nan")
        candidates.append(RegCandidate(reg=reg, val_p1=val_p1,
                                       iterations=report.iterations,
                                       termination=report.termination))
    best = max(range(len(candidates)),
               key=lambda i: (np.nan_to_num(candidates[i].val_p1, nan=-1.0), -i))
    selected = candidates[best].reg

    params, report = _fit_multilingual(graph, usable_edges, selected, config.solver)
    multi_report = MultiTrainReport(candidates=candidates, selected_reg=selected,
                                    edge_pairs=edge_pairs, edge_dropped=edge_dropped,
                                    final_cost=report.cost,
                                    final_grad_norm=report.grad_norm,
                                    final_iterations=report.iterations,
                                    final_termination=report.termination)
    return params, multi_report


ONE_HOP_METHODS = ("geomm", "procrustes")


@dataclass
class OneHopReport:
    route: str
    method: str
    bli: retrieval.BliReport
    details: Dict[str, float] = field(default_factory=dict)


def _procrustes_map(src_emb, tgt_emb, pairs) -> np.ndarray:
    kept, _ = _usable_pairs(pairs, src_emb, tgt_emb)
    if not kept:
        raise ValueError("no dictionary pair is covered by both vocabularies")
    src_cols = [src_emb.lookup(s) for s, _ in kept]
    tgt_cols = [tgt_emb.lookup(t) for _, t in kept]
    return procrustes_fit(src_emb.vectors[:, src_cols], tgt_emb.vectors[:, tgt_cols])


def _hop_maps(method, src, pvt, tgt, pairs_src_pvt, pairs_pvt_tgt, embeddings, config):
    """Source-to-pivot and pivot-to-target maps for a pivot route,
    plus whatever trained state hop 1 needs for its own retrieval."""
    if method not in ONE_HOP_METHODS:
        raise ValueError(f"unknown one-hop method {method!r}")
    details = {}
    if method == "geomm":
        params1, rep1 = train_bilingual(embeddings[src], embeddings[pvt],
                                        pairs_src_pvt, config, (src, pvt))
        params2, rep2 = train_bilingual(embeddings[pvt], embeddings[tgt],
                                        pairs_pvt_tgt, config, (pvt, tgt))
        details["hop1_reg"] = rep1.selected_reg
        details["hop2_reg"] = rep2.selected_reg
        map1 = compose_transform(params1, src, pvt)
        map2 = compose_transform(params2, pvt, tgt)
        return map1, map2, params1, details
    map1 = _procrustes_map(embeddings[src], embeddings[pvt], pairs_src_pvt)
    map2 = _procrustes_map(embeddings[pvt], embeddings[tgt], pairs_pvt_tgt)
    return map1, map2, None, details


def one_hop_composition(method: str, src: str, pvt: str, tgt: str,
                        pairs_src_pvt: Sequence[Pair], pairs_pvt_tgt: Sequence[Pair],
                        test_pairs: Sequence[Pair],
                        embeddings: Dict[str, EmbeddingMatrix],
                        config: Optional[TrainConfig] = None) -> OneHopReport:
    """Pivot route 1: compose the two linear maps and rank directly in
    the target's original space."""
    config = config or TrainConfig()
    map1, map2, _, details = _hop_maps(method, src, pvt, tgt, pairs_src_pvt,
                                       pairs_pvt_tgt, embeddings, config)
    bli = retrieval.evaluate_bli_mapped(map2 @ map1, test_pairs,
                                        embeddings[src], embeddings[tgt],
                                        mode=config.retrieval_mode,
                                        csls_k=config.csls_k,
                                        vocab_cap=config.vocab_cap)
    return OneHopReport(route="composition", method=method, bli=bli, details=details)


def one_hop_pipeline(method: str, src: str, pvt: str, tgt: str,
                     pairs_src_pvt: Sequence[Pair], pairs_pvt_tgt: Sequence[Pair],
                     test_pairs: Sequence[Pair],
                     embeddings: Dict[str, EmbeddingMatrix],
                     config: Optional[TrainConfig] = None) -> OneHopReport:
    """Pivot route 2: translate each query to its single best pivot word,
    then continue from that word's actual embedding.

    Hop 1 uses the method's own retrieval (shared-space for the metric
    model, mapped cosine for the orthogonal baseline); hop 2 maps the
    retrieved pivot embedding into the target's original space.
    """
    config = config or TrainConfig()
    map1, map2, params1, details = _hop_maps(method, src, pvt, tgt, pairs_src_pvt,
                                             pairs_pvt_tgt, embeddings, config)
    queries = list(dict.fromkeys(s for s, _ in test_pairs))
    if method == "geomm":
        hop1 = retrieval.translate(params1, src, pvt, queries,
                                   embeddings[src], embeddings[pvt], top_k=1,
                                   mode=config.retrieval_mode, space="latent",
                                   csls_k=config.csls_k, vocab_cap=config.vocab_cap)
    else:
        hop1 = retrieval.translate_mapped(map1, queries,
                                          embeddings[src], embeddings[pvt], top_k=1,
                                          mode=config.retrieval_mode,
                                          csls_k=config.csls_k,
                                          vocab_cap=config.vocab_cap)

    # hop 2 ranks the mapped pivot vocabulary against the target; each
    # query is represented by the pivot word it retrieved
    pvt_index, tgt_index, cand_pen = retrieval._matrix_sides(
        map2, embeddings[pvt], embeddings[tgt], config.csls_k, config.vocab_cap)
    query_words: List[str] = []
    cols: List[int] = []
    for word in queries:
        best = hop1.translations.get(word)
        if not best:
            continue
        pos = pvt_index.word_index.get(best[0])
        if pos is None:
            continue
        query_words.append(word)
        cols.append(pos)
    query_index = retrieval.RetrievalIndex(
        vocab=query_words,
        latent=pvt_index.latent[:, np.array(cols, dtype=np.int64)] if cols
        else np.empty((tgt_index.latent.shape[0], 0)))
    bli = retrieval._bli_against_indexes(test_pairs, query_index, tgt_index, cand_pen,
                                         config.retrieval_mode, config.csls_k,
                                         (1, 5, 10))
    return OneHopReport(route="pipeline", method=method, bli=bli, details=details)


def one_hop_joint(src: str, pvt: str, tgt: str,
                  pairs_src_pvt: Sequence[Pair], pairs_pvt_tgt: Sequence[Pair],
                  test_pairs: Sequence[Pair],
                  embeddings: Dict[str, EmbeddingMatrix],
                  config: Optional[TrainConfig] = None) -> OneHopReport:
    """Pivot route 3: train all three languages jointly on the two
    dictionaries, then retrieve source-to-target in the shared space."""
    config = config or TrainConfig()
    graph = LanguageGraph(
        embeddings={lang: embeddings[lang] for lang in (src, pvt, tgt)},
        edges=[(src, pvt, list(pairs_src_pvt)), (pvt, tgt, list(pairs_pvt_tgt))])
    params, report = train_multilingual(graph, config)
    bli = retrieval.evaluate_bli(params, src, tgt, test_pairs,
                                 embeddings[src], embeddings[tgt],
                                 mode=config.retrieval_mode, space="latent",
                                 csls_k=config.csls_k, vocab_cap=config.vocab_cap)
    return OneHopReport(route="joint", method="geomm", bli=bli,
                        details={"selected_reg": report.selected_reg})


@dataclass
class PivotSplitReport:
    n_shared_pivots: int
    n_assigned_first: int
    n_assigned_second: int
    n_pairs_first: int
    n_pairs_second: int


def make_disjoint_pivot_dicts(pairs_src_pvt: Sequence[Pair],
                              pairs_pvt_tgt: Sequence[Pair],
                              seed: int = 0,
                              ) -> Tuple[List[Pair], List[Pair], PivotSplitReport]:
    """Remove pivot words shared by the two training dictionaries.

    Each shared pivot word is assigned to exactly one dictionary by a
    seeded coin flip (words processed in sorted order, so the result is
    reproducible), and the other dictionary loses the pairs using it.
    This guarantees the two dictionaries give the pivot no common
    anchor, for leakage-free pivot experiments.
    """
    pivots_first = {t for _, t in pairs_src_pvt}
    pivots_second = {s for s, _ in pairs_pvt_tgt}
    shared = sorted(pivots_first & pivots_second)
    rng = np.random.default_rng(seed)
    to_first = set()
    to_second = set()
    for word in shared:
        (to_first if rng.random() < 0.5 else to_second).add(word)
    kept_first = [(s, t) for s, t in pairs_src_pvt if t not in to_second]
    kept_second = [(s, t) for s, t in pairs_pvt_tgt if s not in to_first]
    report = PivotSplitReport(n_shared_pivots=len(shared),
                              n_assigned_first=len(to_first),
                              n_assigned_second=len(to_second),
                              n_pairs_first=len(kept_first),
                              n_pairs_second=len(kept_second))
    return kept_first, kept_second, report
