"""Alignment model: per-language rotations sharing one SPD metric.

A pair of languages (s, t) is scored through the bilinear kernel
x^T R_s M R_t^T z, where R_s, R_t are orthogonal and M is symmetric
positive definite and shared across all languages.  The map sending
source vectors into target coordinates is W = R_t M R_s^T.

Training minimizes a least-squares classification loss against a 0/1
translation matrix over the unique dictionary words.  That matrix is
never materialized: with C_s = X_s X_s^T, C_t = X_t X_t^T and
P = sum of x_s x_t^T over dictionary pairs, the loss equals

    tr(A^T C_s A C_t) + n_pairs - 2 <A, P>,      A = R_s M R_t^T,

so each cost or gradient evaluation is O(d^3) after a one-time O(n d^2)
precomputation, independent of dictionary size.
"""

import enum
import functools
import warnings

import numpy as np

from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple

from . import manifolds
from .manifolds import ProductManifold, sym
from .optimizer import Problem


class UnknownLanguageError(KeyError):
    """A language identifier is not part of the model."""


@dataclass
class GeommParams:
    """Trained parameters: one rotation per language plus the shared metric."""

    languages: Tuple[str, ...]
    rotations: Dict[str, np.ndarray]
    metric: np.ndarray

    @property
    def dim(self) -> int:
        return self.metric.shape[0]

    def rotation(self, lang: str) -> np.ndarray:
        try:
            return self.rotations[lang]
        except KeyError:
            raise UnknownLanguageError(lang) from None

    def validate(self, orth_tol: float = 1e-8) -> None:
        if len(self.languages) < 2:
            raise ValueError("a model needs at least two languages")
        if set(self.languages) != set(self.rotations):
            raise ValueError("languages and rotation keys disagree")
        d = self.dim
        if self.metric.shape != (d, d):
            raise ValueError("metric must be square")
        manifolds.spd_check(self.metric)
        for lang, rot in self.rotations.items():
            if rot.shape != (d, d):
                raise ValueError(f"rotation for {lang!r} has shape {rot.shape}, want ({d}, {d})")
            if manifolds.orth_defect(rot) > orth_tol:
                raise ValueError(f"rotation for {lang!r} is not orthogonal within {orth_tol:g}")


def identity_params(languages: Sequence[str], dim: int) -> GeommParams:
    """Identity initialization: all rotations I, metric I."""
    languages = tuple(languages)
    if len(set(languages)) != len(languages):
        raise ValueError("duplicate language identifiers")
    eye = np.eye(dim)
    return GeommParams(languages=languages,
                       rotations={lang: eye.copy() for lang in languages},
                       metric=eye.copy())


@dataclass(eq=False)
class DictionaryData:
    """Training dictionary in factored form.

    ``src_vectors`` / ``tgt_vectors`` hold the unique source / target
    words that occur in the dictionary, one unit column each;
    ``pair_indices`` is an (m, 2) integer array of (source, target)
    column pairs.  A word may appear in many pairs.  The cross and
    pair-sum matrices that the factored loss needs are cached on
    first use.
    """

    src_vectors: np.ndarray
    tgt_vectors: np.ndarray
    pair_indices: np.ndarray

    def __post_init__(self):
        self.src_vectors = np.ascontiguousarray(self.src_vectors, dtype=float)
        self.tgt_vectors = np.ascontiguousarray(self.tgt_vectors, dtype=float)
        pairs = np.asarray(self.pair_indices, dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("pair_indices must have shape (m, 2)")
        if pairs.shape[0] == 0:
            raise ValueError("empty dictionary")
        if self.src_vectors.shape[0] != self.tgt_vectors.shape[0]:
            raise ValueError("source and target embeddings have different dimension")
        n_src = self.src_vectors.shape[1]
        n_tgt = self.tgt_vectors.shape[1]
        if pairs.min() < 0 or pairs[:, 0].max() >= n_src or pairs[:, 1].max() >= n_tgt:
            raise ValueError("pair index out of range")
        for name, mat in (("src", self.src_vectors), ("tgt", self.tgt_vectors)):
            norms = np.linalg.norm(mat, axis=0)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise ValueError(f"{name} columns must be unit length")
        # drop duplicate pairs, keeping first appearance order
        _, first = np.unique(pairs, axis=0, return_index=True)
        self.pair_indices = pairs[np.sort(first)]

    @property
    def dim(self) -> int:
        return self.src_vectors.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.pair_indices.shape[0]

    @functools.cached_property
    def src_cross(self) -> np.ndarray:
        return self.src_vectors @ self.src_vectors.T

    @functools.cached_property
    def tgt_cross(self) -> np.ndarray:
        return self.tgt_vectors @ self.tgt_vectors.T

    @functools.cached_property
    def pair_outer(self) -> np.ndarray:
        src = self.src_vectors[:, self.pair_indices[:, 0]]
        tgt = self.tgt_vectors[:, self.pair_indices[:, 1]]
        return src @ tgt.T


@dataclass
class AlignedPairs:
    """Column-aligned pair matrices for the regression-loss ablation."""

    src_vectors: np.ndarray
    tgt_vectors: np.ndarray

    def __post_init__(self):
        self.src_vectors = np.ascontiguousarray(self.src_vectors, dtype=float)
        self.tgt_vectors = np.ascontiguousarray(self.tgt_vectors, dtype=float)
        if self.src_vectors.shape != self.tgt_vectors.shape:
            raise ValueError("aligned pair matrices must have equal shapes")
        if self.src_vectors.shape[1] == 0:
            raise ValueError("empty dictionary")


def _score_kernel(params: GeommParams, src: str, tgt: str) -> np.ndarray:
    """A = R_src M R_tgt^T, giving pair scores x^T A z."""
    return params.rotation(src) @ params.metric @ params.rotation(tgt).T


def compose_transform(params: GeommParams, src: str, tgt: str) -> np.ndarray:
    """Source-to-target linear map W = R_tgt M R_src^T."""
    return params.rotation(tgt) @ params.metric @ params.rotation(src).T


def similarity(params: GeommParams, src: str, tgt: str,
               x: np.ndarray, z: np.ndarray):
    """Bilinear score(s) x^T R_src M R_tgt^T z.

    Accepts single vectors (returns a float) or (d, m) / (d, k)
    matrices (returns an (m, k) score array).
    """
    kernel = _score_kernel(params, src, tgt)
    out = np.asarray(x).T @ kernel @ np.asarray(z)
    if np.ndim(out) == 0:
        return float(out)
    return out


def _class_loss(a: np.ndarray, data: DictionaryData) -> float:
    quad = a @ data.tgt_cross          # A C_t
    trace = float(np.tensordot(data.src_cross @ quad, a))
    cross = float(np.tensordot(a, data.pair_outer))
    return trace + data.n_pairs - 2.0 * cross


def _class_loss_grad(a: np.ndarray, data: DictionaryData) -> np.ndarray:
    return 2.0 * (data.src_cross @ a @ data.tgt_cross - data.pair_outer)


def bilingual_cost(params: GeommParams, data: DictionaryData, reg: float) -> float:
    """Classification loss plus reg * ||metric||_F^2 for a two-language model.

    ``params.languages`` must be (source, target) in the dictionary's
    direction.
    """
    if len(params.languages) != 2:
        raise ValueError("bilingual cost needs a two-language model")
    src, tgt = params.languages
    a = _score_kernel(params, src, tgt)
    return _class_loss(a, data) + reg * float(np.sum(params.metric ** 2))


def bilingual_egrad(params: GeommParams, data: DictionaryData, reg: float):
    """Euclidean gradients (d/d R_src, d/d R_tgt, d/d M) of bilingual_cost."""
    if len(params.languages) != 2:
        raise ValueError("bilingual gradient needs a two-language model")
    src, tgt = params.languages
    rot_s, rot_t, metric = params.rotation(src), params.rotation(tgt), params.metric
    a = rot_s @ metric @ rot_t.T
    g_a = _class_loss_grad(a, data)
    g_src = g_a @ rot_t @ metric
    g_tgt = g_a.T @ rot_s @ metric
    g_metric = sym(rot_s.T @ g_a @ rot_t) + 2.0 * reg * metric
    return g_src, g_tgt, g_metric


Edge = Tuple[str, str, DictionaryData]


def _check_edges(params: GeommParams, edges: Sequence[Edge]) -> None:
    if not edges:
        raise ValueError("no dictionary edges")
    seen = set()
    for src, tgt, _ in edges:
        if src == tgt:
            raise ValueError(f"self-loop edge on {src!r}")
        params.rotation(src), params.rotation(tgt)
        key = frozenset((src, tgt))
        if key in seen:
            raise ValueError(f"duplicate edge between {src!r} and {tgt!r}")
        seen.add(key)


def multilingual_cost(params: GeommParams, edges: Sequence[Edge], reg: float) -> float:
    """Sum of per-edge classification losses, each weighted by 1/n_pairs,
    plus a single reg * ||metric||_F^2 term."""
    _check_edges(params, edges)
    total = reg * float(np.sum(params.metric ** 2))
    for src, tgt, data in edges:
        a = _score_kernel(params, src, tgt)
        total += _class_loss(a, data) / data.n_pairs
    return total


def multilingual_egrad(params: GeommParams, edges: Sequence[Edge], reg: float):
    """Euclidean gradients of multilingual_cost.

    Returns (rotation_grads, metric_grad) with one gradient per model
    language; languages touching no edge get a zero gradient.
    """
    _check_edges(params, edges)
    metric = params.metric
    rot_grads = {lang: np.zeros_like(metric) for lang in params.languages}
    g_metric = 2.0 * reg * metric.copy()
    for src, tgt, data in edges:
        rot_s, rot_t = params.rotation(src), params.rotation(tgt)
        a = rot_s @ metric @ rot_t.T
        g_a = _class_loss_grad(a, data) / data.n_pairs
        rot_grads[src] += g_a @ rot_t @ metric
        rot_grads[tgt] += g_a.T @ rot_s @ metric
        g_metric += sym(rot_s.T @ g_a @ rot_t)
    return rot_grads, g_metric


def procrustes_fit(src_vectors: np.ndarray, tgt_vectors: np.ndarray) -> np.ndarray:
    """Orthogonal least-squares map: W maximizing tr(W^T X_t X_s^T).

    ``src_vectors`` and ``tgt_vectors`` are column-aligned (d, n) pair
    matrices.  Warns when the cross-covariance is numerically rank
    deficient, in which case the optimum is not unique.
    """
    if src_vectors.shape != tgt_vectors.shape:
        raise ValueError("aligned pair matrices must have equal shapes")
    if src_vectors.shape[1] == 0:
        raise ValueError("empty dictionary")
    cross = tgt_vectors @ src_vectors.T
    u, s, vt = np.linalg.svd(cross)
    if s.min() <= 1e-12 * max(s.max(), 1.0):
        warnings.warn("rank-deficient cross-covariance: orthogonal fit is not unique")
    return u @ vt


class ModelVariant(str, enum.Enum):
    """Model ablations; FULL is the method proper."""

    FULL = "full"
    UNCONSTRAINED_W = "unconstrained_w"
    METRIC_ONLY = "metric_only"
    ROTATIONS_ONLY = "rotations_only"
    REGRESSION_LOSS = "regression_loss"


def variant_cost(variant: ModelVariant, point: tuple, data, reg: float) -> float:
    """Cost of an ablation variant at a solver point (tuple of factors).

    Point layouts: FULL and REGRESSION_LOSS (rot_src, rot_tgt, metric);
    UNCONSTRAINED_W (w,), w mapping source to target coordinates;
    METRIC_ONLY (metric,); ROTATIONS_ONLY (rot_src, rot_tgt).
    REGRESSION_LOSS takes AlignedPairs, the rest DictionaryData.
    """
    variant = ModelVariant(variant)
    if variant is ModelVariant.FULL:
        rot_s, rot_t, metric = point
        a = rot_s @ metric @ rot_t.T
        return _class_loss(a, data) + reg * float(np.sum(metric ** 2))
    if variant is ModelVariant.UNCONSTRAINED_W:
        (w,) = point
        return _class_loss(w.T, data) + reg * float(np.sum(w ** 2))
    if variant is ModelVariant.METRIC_ONLY:
        (metric,) = point
        return _class_loss(metric, data) + reg * float(np.sum(metric ** 2))
    if variant is ModelVariant.ROTATIONS_ONLY:
        rot_s, rot_t = point
        return _class_loss(rot_s @ rot_t.T, data)
    # regression: || W X_s - X_t ||_F^2 with the factored map W
    rot_s, rot_t, metric = point
    w = rot_t @ metric @ rot_s.T
    resid = w @ data.src_vectors - data.tgt_vectors
    return float(np.sum(resid ** 2)) + reg * float(np.sum(metric ** 2))


def variant_egrad(variant: ModelVariant, point: tuple, data, reg: float) -> tuple:
    """Euclidean gradient of variant_cost, aligned with the point layout."""
    variant = ModelVariant(variant)
    if variant is ModelVariant.FULL:
        rot_s, rot_t, metric = point
        a = rot_s @ metric @ rot_t.T
        g_a = _class_loss_grad(a, data)
        return (g_a @ rot_t @ metric,
                g_a.T @ rot_s @ metric,
                sym(rot_s.T @ g_a @ rot_t) + 2.0 * reg * metric)
    if variant is ModelVariant.UNCONSTRAINED_W:
        (w,) = point
        g_a = _class_loss_grad(w.T, data)
        return (g_a.T + 2.0 * reg * w,)
    if variant is ModelVariant.METRIC_ONLY:
        (metric,) = point
        return (sym(_class_loss_grad(metric, data)) + 2.0 * reg * metric,)
    if variant is ModelVariant.ROTATIONS_ONLY:
        rot_s, rot_t = point
        g_a = _class_loss_grad(rot_s @ rot_t.T, data)
        return (g_a @ rot_t, g_a.T @ rot_s)
    rot_s, rot_t, metric = point
    w = rot_t @ metric @ rot_s.T
    g_w = 2.0 * (w @ data.src_vectors - data.tgt_vectors) @ data.src_vectors.T
    return (g_w.T @ rot_t @ metric,
            g_w @ rot_s @ metric,
            sym(rot_t.T @ g_w @ rot_s) + 2.0 * reg * metric)


_VARIANT_KINDS = {
    ModelVariant.FULL: ("orth", "orth", "spd"),
    ModelVariant.UNCONSTRAINED_W: ("euclidean",),
    ModelVariant.METRIC_ONLY: ("spd",),
    ModelVariant.ROTATIONS_ONLY: ("orth", "orth"),
    ModelVariant.REGRESSION_LOSS: ("orth", "orth", "spd"),
}


@dataclass
class VariantProblem:
    """Solver-ready packaging of a variant: problem, identity init, and a
    decoder from solver points back to model objects."""

    problem: Problem
    init: tuple
    decode: Callable


def variant_problem(variant: ModelVariant, data, reg: float,
                    languages: Tuple[str, str] = ("src", "tgt")) -> VariantProblem:
    """Build the Riemannian problem for a variant at identity init.

    ``decode`` maps a solver point to GeommParams (rotations fixed at I
    and metric fixed at I are filled back in for the reduced variants),
    except UNCONSTRAINED_W where it returns the raw map W.
    """
    variant = ModelVariant(variant)
    dim = data.src_vectors.shape[0]
    kinds = _VARIANT_KINDS[variant]
    manifold = ProductManifold(kinds)
    eye = np.eye(dim)
    init = tuple(eye.copy() for _ in kinds)
    src, tgt = languages

    def decode(point):
        if variant is ModelVariant.UNCONSTRAINED_W:
            return point[0]
        if variant is ModelVariant.METRIC_ONLY:
            rotations = {src: eye.copy(), tgt: eye.copy()}
            return GeommParams((src, tgt), rotations, point[0])
        if variant is ModelVariant.ROTATIONS_ONLY:
            rotations = {src: point[0], tgt: point[1]}
            return GeommParams((src, tgt), rotations, eye.copy())
        rotations = {src: point[0], tgt: point[1]}
        return GeommParams((src, tgt), rotations, point[2])

    problem = Problem(manifold=manifold,
                      cost=lambda pt: variant_cost(variant, pt, data, reg),
                      egrad=lambda pt: variant_egrad(variant, pt, data, reg))
    return VariantProblem(problem=problem, init=init, decode=decode)
