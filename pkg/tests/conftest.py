import numpy as np
import pytest

import helpers

from xlalign.dataio import EmbeddingMatrix
from xlalign.model import DictionaryData, GeommParams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_embedding(vectors: np.ndarray, prefix: str = "w") -> EmbeddingMatrix:
    """Wrap a (d, n) unit-column matrix as an embedding with synthetic words."""
    vocab = [f"{prefix}{i}" for i in range(vectors.shape[1])]
    return EmbeddingMatrix(vocab=vocab, vectors=np.ascontiguousarray(vectors, dtype=float),
                           scheme="unit")


def random_params(rng, languages=("src", "tgt"), d=6, spread=1.0) -> GeommParams:
    rotations = {lang: helpers.random_orthogonal(rng, d) for lang in languages}
    return GeommParams(languages=tuple(languages), rotations=rotations,
                       metric=helpers.random_spd(rng, d, spread))


def random_dictionary_data(rng, d=6, n_src=12, n_tgt=10, n_pairs=20) -> DictionaryData:
    pairs = np.stack([rng.integers(0, n_src, size=n_pairs),
                      rng.integers(0, n_tgt, size=n_pairs)], axis=1)
    return DictionaryData(src_vectors=helpers.unit_columns(rng, d, n_src),
                          tgt_vectors=helpers.unit_columns(rng, d, n_tgt),
                          pair_indices=pairs)


def planted_rotation_problem(rng, d=8, n=60, noise=0.0, prefix_src="s", prefix_tgt="t"):
    """Source embeddings plus a rotated (optionally noisy) copy.

    Returns (src_emb, tgt_emb, rotation); word s{i} translates to t{i}.
    """
    src = helpers.unit_columns(rng, d, n)
    rotation = helpers.random_rotation(rng, d)
    tgt = rotation @ src
    if noise > 0:
        tgt = tgt + noise * rng.standard_normal(tgt.shape)
        tgt = tgt / np.linalg.norm(tgt, axis=0)
    return (make_embedding(src, prefix_src), make_embedding(tgt, prefix_tgt), rotation)
