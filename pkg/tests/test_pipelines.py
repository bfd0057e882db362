import numpy as np
import pytest

import helpers
from conftest import make_embedding, planted_rotation_problem

from xlalign import retrieval
from xlalign.model import compose_transform
from xlalign.optimizer import SolverOptions
from xlalign.pipelines import (LanguageGraph, TrainConfig, fit_bilingual,
                               make_dictionary_data, make_disjoint_pivot_dicts,
                               one_hop_composition, one_hop_joint,
                               one_hop_pipeline, split_pairs, train_bilingual,
                               train_multilingual)


def small_config(reg_grid=(10.0,), **kwargs):
    return TrainConfig(reg_grid=reg_grid,
                       solver=SolverOptions(max_iters=300), **kwargs)


def planted_three_languages(rng, d=6, n_bases=6):
    """Three rotated copies of one base embedding, words a0..,b0..,c0..

    The base is a tight frame and the planted maps are proper rotations,
    so every route (including composed maps scored in the original
    target space) can reach the planted solution exactly.
    """
    base = helpers.tight_frame(rng, d, n_bases)
    n = base.shape[1]
    embeddings = {}
    for lang in "abc":
        rot = np.eye(d) if lang == "a" else helpers.random_rotation(rng, d)
        embeddings[lang] = make_embedding(rot @ base, lang)
    dict_ab = [(f"a{i}", f"b{i}") for i in range(n)]
    dict_ac = [(f"a{i}", f"c{i}") for i in range(n)]
    test_bc = [(f"b{i}", f"c{i}") for i in range(n)]
    return embeddings, dict_ab, dict_ac, test_bc


# --- config and splits -------------------------------------------------------

def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(reg_grid=()).validate()
    with pytest.raises(ValueError):
        TrainConfig(reg_grid=(-1.0,)).validate()
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=0.0).validate()
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0).validate()
    TrainConfig().validate()


def test_split_pairs_partition_and_determinism():
    pairs = [(f"s{i}", f"t{i}") for i in range(2000)]
    train, val = split_pairs(pairs, 0.2, seed=0)
    again_train, again_val = split_pairs(pairs, 0.2, seed=0)
    assert train == again_train and val == again_val
    assert sorted(train + val) == sorted(pairs)
    assert not set(train) & set(val)
    assert 0.15 < len(val) / len(pairs) < 0.25


def test_split_pairs_assignment_ignores_order():
    pairs = [(f"s{i}", f"t{i}") for i in range(300)]
    _, val = split_pairs(pairs, 0.3, seed=7)
    _, val_rev = split_pairs(list(reversed(pairs)), 0.3, seed=7)
    assert set(val) == set(val_rev)


def test_split_pairs_seed_changes_assignment():
    pairs = [(f"s{i}", f"t{i}") for i in range(300)]
    _, val0 = split_pairs(pairs, 0.3, seed=0)
    _, val1 = split_pairs(pairs, 0.3, seed=1)
    assert set(val0) != set(val1)


# --- dictionary matrices -----------------------------------------------------

def test_make_dictionary_data_indices_point_at_words(rng):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=5, n=12)
    pairs = [("s3", "t7"), ("s1", "t1"), ("s3", "t2")]
    data, dropped = make_dictionary_data(pairs, src_emb, tgt_emb)
    assert dropped == 0
    assert data.n_pairs == 3
    for (s_word, t_word), (i, j) in zip(pairs, data.pair_indices):
        np.testing.assert_array_equal(data.src_vectors[:, i],
                                      src_emb.vectors[:, src_emb.lookup(s_word)])
        np.testing.assert_array_equal(data.tgt_vectors[:, j],
                                      tgt_emb.vectors[:, tgt_emb.lookup(t_word)])


def test_make_dictionary_data_drops_oov_and_dedupes(rng):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=5, n=10)
    pairs = [("s0", "t0"), ("s0", "t0"), ("nope", "t1"), ("s2", "missing")]
    data, dropped = make_dictionary_data(pairs, src_emb, tgt_emb)
    assert data.n_pairs == 1
    assert dropped == 2
    with pytest.raises(ValueError):
        make_dictionary_data([("nope", "missing")], src_emb, tgt_emb)


# --- bilingual training ------------------------------------------------------

def test_fit_bilingual_planted_reaches_perfect_retrieval(rng):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=8, n=60)
    pairs = [(f"s{i}", f"t{i}") for i in range(60)]
    params, report, dropped = fit_bilingual(src_emb, tgt_emb, pairs, reg=10.0,
                                            solver=SolverOptions(max_iters=300))
    assert dropped == 0
    params.validate()
    assert np.isfinite(report.cost)
    bli = retrieval.evaluate_bli(params, "src", "tgt", pairs, src_emb, tgt_emb)
    assert bli.precision[1] == 100.0


def test_train_bilingual_planted_selects_and_retrains(rng):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=8, n=60)
    pairs = [(f"s{i}", f"t{i}") for i in range(60)]
    config = small_config(reg_grid=(10.0, 100.0))
    params, report = train_bilingual(src_emb, tgt_emb, pairs, config)
    assert len(report.candidates) == 2
    assert report.selected_reg in (10.0, 100.0)
    assert report.n_train_pairs + report.n_val_pairs == 60
    assert report.n_dropped_oov == 0
    bli = retrieval.evaluate_bli(params, "src", "tgt", pairs, src_emb, tgt_emb)
    assert bli.precision[1] == 100.0


def test_train_bilingual_tie_goes_to_earliest_reg(rng):
    # noiseless planted data: every regularizer reaches 100 on validation
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=8, n=60)
    pairs = [(f"s{i}", f"t{i}") for i in range(60)]
    config = small_config(reg_grid=(10.0, 100.0, 1000.0))
    _, report = train_bilingual(src_emb, tgt_emb, pairs, config)
    vals = [c.val_p1 for c in report.candidates]
    assert report.selected_reg == report.candidates[vals.index(max(vals))].reg
    if len(set(vals)) == 1:
        assert report.selected_reg == 10.0


def test_train_bilingual_counts_oov(rng):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=6, n=30)
    pairs = [(f"s{i}", f"t{i}") for i in range(30)] + [("xx", "t0"), ("s0", "yy")]
    params, report = train_bilingual(src_emb, tgt_emb, pairs, small_config())
    assert report.n_dropped_oov == 2


def test_train_bilingual_no_usable_pairs(rng):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=5, n=10)
    with pytest.raises(ValueError):
        train_bilingual(src_emb, tgt_emb, [("xx", "yy")], small_config())


def empty_val_seed(pairs, fraction):
    for seed in range(1000):
        if not split_pairs(pairs, fraction, seed)[1]:
            return seed
    raise AssertionError("no seed empties the validation split")


def test_train_bilingual_single_reg_allows_empty_validation(rng):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=5, n=6)
    pairs = [(f"s{i}", f"t{i}") for i in range(6)]
    seed = empty_val_seed(pairs, 0.05)
    config = small_config(validation_fraction=0.05, seed=seed)
    params, report = train_bilingual(src_emb, tgt_emb, pairs, config)
    assert report.n_val_pairs == 0
    assert np.isnan(report.candidates[0].val_p1)
    assert report.selected_reg == 10.0
    config = small_config(reg_grid=(10.0, 100.0), validation_fraction=0.05, seed=seed)
    with pytest.raises(ValueError):
        train_bilingual(src_emb, tgt_emb, pairs, config)


# --- language graphs ---------------------------------------------------------

def test_language_graph_validation(rng):
    d, n = 4, 6
    emb = {lang: make_embedding(helpers.unit_columns(rng, d, n), lang)
           for lang in "abc"}
    pairs = [(f"a{i}", f"b{i}") for i in range(n)]

    LanguageGraph(embeddings=dict(emb),
                  edges=[("a", "b", pairs), ("b", "c", pairs)]).validate()

    with pytest.raises(ValueError, match="two languages"):
        LanguageGraph(embeddings={"a": emb["a"]}, edges=[]).validate()
    with pytest.raises(ValueError, match="dimensions"):
        bad = dict(emb)
        bad["c"] = make_embedding(helpers.unit_columns(rng, d + 1, n), "c")
        LanguageGraph(embeddings=bad, edges=[("a", "b", pairs)]).validate()
    with pytest.raises(ValueError, match="edge"):
        LanguageGraph(embeddings=dict(emb), edges=[]).validate()
    with pytest.raises(ValueError, match="self-loop"):
        LanguageGraph(embeddings=dict(emb), edges=[("a", "a", pairs)]).validate()
    with pytest.raises(ValueError, match="duplicate"):
        LanguageGraph(embeddings=dict(emb),
                      edges=[("a", "b", pairs), ("b", "a", pairs),
                             ("b", "c", pairs)]).validate()
    with pytest.raises(ValueError, match="no embeddings"):
        LanguageGraph(embeddings=dict(emb), edges=[("a", "z", pairs)]).validate()
    with pytest.raises(ValueError, match="no dictionary pairs"):
        LanguageGraph(embeddings=dict(emb), edges=[("a", "b", [])]).validate()
    with pytest.raises(ValueError, match="disconnected"):
        LanguageGraph(embeddings=dict(emb), edges=[("a", "b", pairs)]).validate()


def test_train_multilingual_planted_three_languages(rng):
    embeddings, dict_ab, dict_ac, test_bc = planted_three_languages(rng)
    graph = LanguageGraph(embeddings=embeddings,
                          edges=[("a", "b", dict_ab), ("a", "c", dict_ac)])
    params, report = train_multilingual(graph, small_config())
    assert params.languages == ("a", "b", "c")
    assert report.selected_reg == 10.0
    assert report.edge_pairs == {("a", "b"): 36, ("a", "c"): 36}
    # the unseen pair is retrievable through the shared space
    bli = retrieval.evaluate_bli(params, "b", "c", test_bc,
                                 embeddings["b"], embeddings["c"])
    assert bli.precision[1] == 100.0


def test_train_multilingual_no_usable_edge(rng):
    embeddings, dict_ab, _, _ = planted_three_languages(rng, d=5, n_bases=2)
    graph = LanguageGraph(embeddings={"a": embeddings["a"], "b": embeddings["b"]},
                          edges=[("a", "b", [("zz", "qq")])])
    with pytest.raises(ValueError, match="usable"):
        train_multilingual(graph, small_config())


# --- pivot routes ------------------------------------------------------------

def test_one_hop_composition_planted(rng):
    embeddings, dict_ab, dict_ac, test_bc = planted_three_languages(rng)
    report = one_hop_composition("geomm", "b", "a", "c",
                                 [(t, s) for s, t in dict_ab], dict_ac, test_bc,
                                 embeddings, small_config())
    assert report.route == "composition"
    assert report.bli.precision[1] == 100.0


def test_one_hop_composition_procrustes_planted(rng):
    embeddings, dict_ab, dict_ac, test_bc = planted_three_languages(rng)
    report = one_hop_composition("procrustes", "b", "a", "c",
                                 [(t, s) for s, t in dict_ab], dict_ac, test_bc,
                                 embeddings, small_config())
    assert report.method == "procrustes"
    assert report.bli.precision[1] == 100.0


def test_one_hop_pipeline_planted(rng):
    embeddings, dict_ab, dict_ac, test_bc = planted_three_languages(rng)
    report = one_hop_pipeline("geomm", "b", "a", "c",
                              [(t, s) for s, t in dict_ab], dict_ac, test_bc,
                              embeddings, small_config())
    assert report.route == "pipeline"
    assert report.bli.precision[1] == 100.0
    assert report.bli.n_evaluated == len(test_bc)


def test_one_hop_pipeline_counts_failed_queries(rng):
    embeddings, dict_ab, dict_ac, test_bc = planted_three_languages(rng)
    test_with_junk = test_bc + [("zzz", "c0")]
    report = one_hop_pipeline("geomm", "b", "a", "c",
                              [(t, s) for s, t in dict_ab], dict_ac, test_with_junk,
                              embeddings, small_config())
    assert report.bli.n_src_oov == 1
    assert report.bli.n_evaluated == len(test_bc)


def test_one_hop_joint_planted(rng):
    embeddings, dict_ab, dict_ac, test_bc = planted_three_languages(rng)
    report = one_hop_joint("b", "a", "c",
                           [(t, s) for s, t in dict_ab], dict_ac, test_bc,
                           embeddings, small_config())
    assert report.route == "joint"
    assert report.bli.precision[1] == 100.0


def test_one_hop_unknown_method(rng):
    embeddings, dict_ab, dict_ac, test_bc = planted_three_languages(rng, d=4, n_bases=2)
    with pytest.raises(ValueError, match="method"):
        one_hop_composition("muse", "b", "a", "c", dict_ab, dict_ac, test_bc,
                            embeddings, small_config())


# --- leakage-free pivot dictionaries ----------------------------------------

def test_make_disjoint_pivot_dicts_removes_overlap():
    first = [("s0", "p0"), ("s1", "p1"), ("s2", "p2"), ("s3", "ponly1")]
    second = [("p0", "t0"), ("p1", "t1"), ("p9", "t9")]
    kept_first, kept_second, report = make_disjoint_pivot_dicts(first, second, seed=0)
    assert report.n_shared_pivots == 2
    assert report.n_assigned_first + report.n_assigned_second == 2
    pivots_first = {t for _, t in kept_first}
    pivots_second = {s for s, _ in kept_second}
    assert not pivots_first & pivots_second
    # pairs not involving a shared pivot always survive
    assert ("s3", "ponly1") in kept_first
    assert ("p9", "t9") in kept_second
    assert report.n_pairs_first == len(kept_first)
    assert report.n_pairs_second == len(kept_second)


def test_make_disjoint_pivot_dicts_deterministic():
    first = [(f"s{i}", f"p{i}") for i in range(50)]
    second = [(f"p{i}", f"t{i}") for i in range(50)]
    a1, b1, _ = make_disjoint_pivot_dicts(first, second, seed=3)
    a2, b2, _ = make_disjoint_pivot_dicts(first, second, seed=3)
    assert a1 == a2 and b1 == b2
    a3, b3, _ = make_disjoint_pivot_dicts(first, second, seed=4)
    assert (a1, b1) != (a3, b3)
