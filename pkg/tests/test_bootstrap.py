import numpy as np
import pytest

import helpers
from conftest import make_embedding, planted_rotation_problem

from xlalign import bootstrap as bootstrap_mod
from xlalign.bootstrap import (BootstrapConfig, bootstrap_train, induce_dictionary,
                               _indexes_for_induction)
from xlalign.model import identity_params
from xlalign.optimizer import SolverOptions
from xlalign.pipelines import TrainConfig, split_pairs


def small_bootstrap_config(**kwargs):
    train = TrainConfig(reg_grid=kwargs.pop("reg_grid", (10.0,)),
                        solver=SolverOptions(max_iters=300))
    return BootstrapConfig(train=train, **kwargs)


def noisy_planted(rng, d=8, n=60, noise=0.12, n_seed=15):
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=d, n=n, noise=noise)
    seed_pairs = [(f"s{i}", f"t{i}") for i in range(n_seed)]
    gold = [(f"s{i}", f"t{i}") for i in range(n)]
    return src_emb, tgt_emb, seed_pairs, gold


# --- config ------------------------------------------------------------------

def test_bootstrap_config_validation():
    with pytest.raises(ValueError):
        small_bootstrap_config(vocab_cutoff=0).validate()
    with pytest.raises(ValueError):
        small_bootstrap_config(validation_fraction=1.0).validate()
    with pytest.raises(ValueError):
        small_bootstrap_config(max_rounds=-1).validate()
    with pytest.raises(ValueError):
        small_bootstrap_config(patience=0).validate()
    small_bootstrap_config().validate()


# --- dictionary induction ----------------------------------------------------

def test_induce_dictionary_identity_translates_to_self(rng):
    vectors = helpers.unit_columns(rng, 6, 20)
    emb = make_embedding(vectors, "w")
    params = identity_params(("src", "tgt"), 6)
    config = small_bootstrap_config(vocab_cutoff=20)
    src_index, tgt_index = _indexes_for_induction(params, ("src", "tgt"),
                                                  emb, emb, config)
    induced = induce_dictionary(src_index, tgt_index, "csls")
    assert induced == [(f"w{i}", f"w{i}") for i in range(20)]
    again = induce_dictionary(src_index, tgt_index, "csls")
    assert induced == again


def test_induce_dictionary_nn_mode(rng):
    vectors = helpers.unit_columns(rng, 5, 12)
    emb = make_embedding(vectors, "w")
    params = identity_params(("src", "tgt"), 5)
    src_index = bootstrap_mod.retrieval.build_index(params, "src", emb)
    tgt_index = bootstrap_mod.retrieval.build_index(params, "tgt", emb)
    induced = induce_dictionary(src_index, tgt_index, "nn")
    assert induced == [(f"w{i}", f"w{i}") for i in range(12)]
    with pytest.raises(ValueError, match="penalties"):
        induce_dictionary(src_index, tgt_index, "csls")


def test_induction_respects_vocab_cutoff(rng):
    vectors = helpers.unit_columns(rng, 5, 30)
    emb = make_embedding(vectors, "w")
    params = identity_params(("src", "tgt"), 5)
    config = small_bootstrap_config(vocab_cutoff=5)
    src_index, tgt_index = _indexes_for_induction(params, ("src", "tgt"),
                                                  emb, emb, config)
    assert len(src_index) == 5 and len(tgt_index) == 5
    induced = induce_dictionary(src_index, tgt_index, "csls")
    allowed = {f"w{i}" for i in range(5)}
    assert all(s in allowed and t in allowed for s, t in induced)


# --- the self-learning loop --------------------------------------------------

def test_bootstrap_returns_validation_best(rng):
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    config = small_bootstrap_config(max_rounds=3)
    params, report = bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    assert not report.aborted
    assert report.rounds[0].round == 0
    assert report.n_seed_train + report.n_val == len(seed_pairs)
    vals = [r.val_p1 for r in report.rounds]
    assert report.best_val_p1 == max(vals)
    assert report.best_round == vals.index(max(vals))
    assert report.best_val_p1 >= report.rounds[0].val_p1
    # the returned model really is the best round's model
    rescored = bootstrap_mod._val_p1(
        params, ("src", "tgt"),
        split_pairs(seed_pairs, config.validation_fraction, config.train.seed)[1],
        src_emb, tgt_emb, config.train)
    assert rescored == report.best_val_p1


def test_bootstrap_grows_the_dictionary(rng):
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    config = small_bootstrap_config(max_rounds=2)
    _, report = bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    if len(report.rounds) > 1:
        assert report.rounds[1].dict_size > report.rounds[0].dict_size
        # bidirectional induction over 60-word sides, merged with the seed
        assert report.rounds[1].dict_size <= report.n_seed_train + 2 * 60


def test_bootstrap_unidirectional_induces_fewer_pairs(rng):
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    both = small_bootstrap_config(max_rounds=1)
    one = small_bootstrap_config(max_rounds=1, bidirectional=False)
    _, rep_both = bootstrap_train(src_emb, tgt_emb, seed_pairs, both)
    _, rep_one = bootstrap_train(src_emb, tgt_emb, seed_pairs, one)
    assert rep_one.rounds[1].dict_size <= rep_both.rounds[1].dict_size
    assert rep_one.rounds[1].dict_size <= rep_one.n_seed_train + 60


def test_bootstrap_max_rounds_zero_is_seed_only(rng):
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    config = small_bootstrap_config(max_rounds=0, reg_grid=(10.0, 100.0))
    params, report = bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    assert len(report.rounds) == 1
    assert report.best_round == 0
    assert report.selected_reg in (10.0, 100.0)
    assert len(report.candidates) == 2


def test_bootstrap_patience_stops_on_stall(rng):
    # noiseless data: round 0 already hits its ceiling, so one
    # non-improving round exhausts patience
    src_emb, tgt_emb, _ = planted_rotation_problem(rng, d=8, n=40)
    seed_pairs = [(f"s{i}", f"t{i}") for i in range(40)]
    config = small_bootstrap_config(max_rounds=10, patience=1)
    _, report = bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    if report.rounds[0].val_p1 == 100.0:
        assert len(report.rounds) <= 3


def test_bootstrap_training_sets_follow_the_split(rng, monkeypatch):
    # the gold validation labels never enter training directly; the only
    # way a validation pair can reappear is the model inducing it itself
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    config = small_bootstrap_config(max_rounds=2)
    seed_train, val = split_pairs(seed_pairs, config.validation_fraction,
                                  config.train.seed)
    assert val

    real_fit = bootstrap_mod.fit_bilingual
    seen = []

    def spying_fit(src, tgt, pairs, reg, solver, languages):
        seen.append(set(pairs))
        return real_fit(src, tgt, pairs, reg, solver, languages)

    monkeypatch.setattr(bootstrap_mod, "fit_bilingual", spying_fit)
    bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    assert seen[0] == set(seed_train)            # seed round: exactly the split
    for train_set in seen[1:]:
        assert train_set >= set(seed_train)      # later rounds only add pairs


def test_bootstrap_abort_returns_best_so_far(rng, monkeypatch):
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    config = small_bootstrap_config(max_rounds=5)

    real_fit = bootstrap_mod.fit_bilingual
    calls = {"n": 0}

    def failing_fit(src, tgt, pairs, reg, solver, languages):
        calls["n"] += 1
        if calls["n"] > 1:                      # let the seed round succeed
            raise ValueError("synthetic numerical failure")
        return real_fit(src, tgt, pairs, reg, solver, languages)

    monkeypatch.setattr(bootstrap_mod, "fit_bilingual", failing_fit)
    params, report = bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    assert report.aborted
    assert "round 1" in report.abort_reason
    assert report.best_round == 0
    assert len(report.rounds) == 1
    params.validate()


def test_bootstrap_reselect_reg_path(rng):
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    config = small_bootstrap_config(max_rounds=1, reg_grid=(10.0, 100.0),
                                    reselect_reg=True)
    _, report = bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    assert report.selected_reg in (10.0, 100.0)
    assert len(report.rounds) == 2


def test_bootstrap_rejects_unusable_seed(rng):
    src_emb, tgt_emb, _, _ = noisy_planted(rng)
    with pytest.raises(ValueError, match="seed"):
        bootstrap_train(src_emb, tgt_emb, [("xx", "yy")], small_bootstrap_config())


def test_bootstrap_rejects_empty_validation_split(rng):
    src_emb, tgt_emb, _, _ = noisy_planted(rng, n_seed=4)
    pairs = [(f"s{i}", f"t{i}") for i in range(4)]
    for seed in range(1000):
        if not split_pairs(pairs, 0.05, seed)[1]:
            break
    else:
        raise AssertionError("no seed empties the validation split")
    config = small_bootstrap_config(validation_fraction=0.05)
    config.train.seed = seed
    with pytest.raises(ValueError, match="validation"):
        bootstrap_train(src_emb, tgt_emb, pairs, config)


def test_bootstrap_logs_round_lines(rng, caplog):
    src_emb, tgt_emb, seed_pairs, _ = noisy_planted(rng)
    config = small_bootstrap_config(max_rounds=1)
    with caplog.at_level("INFO", logger="xlalign.bootstrap"):
        bootstrap_train(src_emb, tgt_emb, seed_pairs, config)
    round_lines = [r.message for r in caplog.records if r.message.startswith("round=")]
    assert len(round_lines) >= 2
    assert "dict_size=" in round_lines[0] and "val_p1=" in round_lines[0]
