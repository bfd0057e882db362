"""Semi-supervised training: grow the dictionary by self-induction.

Starting from a small seed dictionary, alternate two steps: train the
model, then translate the most frequent words in both directions and
add the (deduplicated) top-1 pairs back into the training dictionary.
A held-out slice of the seed provides the only supervised signal for
choosing the regularizer and for deciding which round actually helped;
the returned model is always the best round by validation precision,
not simply the last.
"""

import logging

import numpy as np

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import retrieval
from .dataio import EmbeddingMatrix
from .model import GeommParams
from .pipelines import Pair, TrainConfig, RegCandidate, fit_bilingual, split_pairs, _usable_pairs

logger = logging.getLogger(__name__)

DEFAULT_VOCAB_CUTOFF = 25000


@dataclass
class BootstrapConfig:
    """Self-learning knobs on top of the shared training config.

    ``vocab_cutoff`` caps how many of the most frequent words per side
    take part in dictionary induction.  ``patience`` is how many
    consecutive rounds may fail to improve validation precision before
    the loop stops.  The regularizer picked on the seed round is kept
    for every later round unless ``reselect_reg`` is set.
    """

    vocab_cutoff: int = DEFAULT_VOCAB_CUTOFF
    validation_fraction: float = 0.2
    max_rounds: int = 20
    patience: int = 1
    bidirectional: bool = True
    reselect_reg: bool = False
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        if self.vocab_cutoff < 1:
            raise ValueError("vocab_cutoff must be positive")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be nonnegative")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        self.train.validate()


@dataclass
class RoundRecord:
    round: int
    dict_size: int
    val_p1: float
    iterations: int
    termination: str


@dataclass
class BootstrapReport:
    rounds: List[RoundRecord]
    best_round: int
    best_val_p1: float
    selected_reg: float
    candidates: List[RegCandidate]
    n_seed_train: int
    n_val: int
    n_dropped_oov: int
    aborted: bool = False
    abort_reason: str = ""

    def metrics(self) -> Dict[str, float]:
        return {"best_round": self.best_round, "best_val_p1": self.best_val_p1,
                "selected_reg": self.selected_reg, "n_rounds": len(self.rounds) - 1,
                "n_seed_train": self.n_seed_train, "n_val": self.n_val}


def induce_dictionary(src_index: retrieval.RetrievalIndex,
                      tgt_index: retrieval.RetrievalIndex,
                      mode: str = "csls") -> List[Pair]:
    """Top-1 translation of every indexed source word.

    For CSLS the target index must carry penalties computed against the
    source index (build the pair of indexes against each other).
    """
    if mode == "csls":
        if tgt_index.csls_penalty is None:
            raise ValueError("csls induction needs penalties on the target index")
        csls_k = tgt_index.csls_k
        cand_pen = tgt_index.csls_penalty
    else:
        csls_k = retrieval.DEFAULT_CSLS_K
        cand_pen = None
    ranked = retrieval.rank_candidates(src_index.latent, tgt_index.latent, mode,
                                       top_k=1, csls_k=csls_k, cand_penalty=cand_pen)
    return [(src_index.vocab[i], tgt_index.vocab[ranked[i, 0]])
            for i in range(len(src_index.vocab))]


def _indexes_for_induction(params, languages, src_emb, tgt_emb, config):
    src, tgt = languages
    src_index = retrieval.build_index(params, src, src_emb, vocab_cap=config.vocab_cutoff)
    tgt_index = retrieval.build_index(params, tgt, tgt_emb, vocab_cap=config.vocab_cutoff)
    if config.train.retrieval_mode == "csls":
        k = min(config.train.csls_k, len(src_index), len(tgt_index))
        src_index.csls_k = tgt_index.csls_k = k
        src_index.csls_penalty = retrieval.csls_penalties(src_index.latent,
                                                          tgt_index.latent, k)
        tgt_index.csls_penalty = retrieval.csls_penalties(tgt_index.latent,
                                                          src_index.latent, k)
    return src_index, tgt_index


def _val_p1(params, languages, val_pairs, src_emb, tgt_emb, train_config) -> float:
    report = retrieval.evaluate_bli(params, languages[0], languages[1], val_pairs,
                                    src_emb, tgt_emb, mode=train_config.retrieval_mode,
                                    space="latent", csls_k=train_config.csls_k,
                                    vocab_cap=train_config.vocab_cap, precisions=(1,))
    return report.precision[1]


def _select_reg(src_emb, tgt_emb, train_pairs, val_pairs, languages, config
                ) -> Tuple[List[RegCandidate], int, List[GeommParams]]:
    candidates: List[RegCandidate] = []
    fitted: List[GeommParams] = []
    for reg in config.train.reg_grid:
        params, report, _ = fit_bilingual(src_emb, tgt_emb, train_pairs, reg,
                                          config.train.solver, languages)
        val_p1 = _val_p1(params, languages, val_pairs, src_emb, tgt_emb, config.train)
        candidates.append(RegCandidate(reg=reg, val_p1=val_p1,
                                       iterations=report.iterations,
                                       termination=report.termination))
        fitted.append(params)
    best = max(range(len(candidates)), key=lambda i: (candidates[i].val_p1, -i))
    return candidates, best, fitted


def bootstrap_train(src_emb: EmbeddingMatrix, tgt_emb: EmbeddingMatrix,
                    seed_pairs: List[Pair], config: Optional[BootstrapConfig] = None,
                    languages: Tuple[str, str] = ("src", "tgt"),
                    ) -> Tuple[GeommParams, BootstrapReport]:
    """Run the self-learning loop from a seed dictionary.

    The seed is split once into a training part and a validation part;
    the validation part never enters training.  Every round trains from
    identity initialization on the seed-train pairs plus the freshly
    induced pairs.  If a round's training fails numerically the loop
    aborts and the best model so far is returned.
    """
    config = config or BootstrapConfig()
    config.validate()
    src, tgt = languages

    usable, dropped = _usable_pairs(seed_pairs, src_emb, tgt_emb)
    if not usable:
        raise ValueError("no seed pair is covered by both vocabularies")
    seed_train, val = split_pairs(usable, config.validation_fraction,
                                  config.train.seed)
    if not seed_train:
        raise ValueError("seed training split is empty; lower validation_fraction")
    if not val:
        raise ValueError("seed validation split is empty; the loop needs a "
                         "validation signal")

    candidates, best_i, fitted = _select_reg(src_emb, tgt_emb, seed_train, val,
                                             languages, config)
    selected_reg = candidates[best_i].reg
    current = fitted[best_i]
    rounds = [RoundRecord(round=0, dict_size=len(seed_train),
                          val_p1=candidates[best_i].val_p1,
                          iterations=candidates[best_i].iterations,
                          termination=candidates[best_i].termination)]
    logger.info("round=0 dict_size=%d val_p1=%.4f", len(seed_train),
                candidates[best_i].val_p1)

    best_params, best_val, best_round = current, candidates[best_i].val_p1, 0
    aborted = False
    abort_reason = ""
    stall = 0

    for rnd in range(1, config.max_rounds + 1):
        try:
            src_index, tgt_index = _indexes_for_induction(current, languages,
                                                          src_emb, tgt_emb, config)
            mode = config.train.retrieval_mode
            induced = induce_dictionary(src_index, tgt_index, mode)
            if config.bidirectional:
                induced += [(s, t) for t, s in induce_dictionary(tgt_index, src_index,
                                                                 mode)]
            merged = list(dict.fromkeys(list(seed_train) + induced))

            if config.reselect_reg:
                cand_r, best_r, fitted_r = _select_reg(src_emb, tgt_emb, merged, val,
                                                       languages, config)
                selected_reg = cand_r[best_r].reg
                params, val_p1 = fitted_r[best_r], cand_r[best_r].val_p1
                iterations, termination = cand_r[best_r].iterations, cand_r[best_r].termination
            else:
                params, report, _ = fit_bilingual(src_emb, tgt_emb, merged,
                                                  selected_reg, config.train.solver,
                                                  languages)
                val_p1 = _val_p1(params, languages, val, src_emb, tgt_emb, config.train)
                iterations, termination = report.iterations, report.termination
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            aborted = True
            abort_reason = f"round {rnd} failed: {exc}"
            logger.warning("%s; returning best model so far", abort_reason)
            break

        rounds.append(RoundRecord(round=rnd, dict_size=len(merged), val_p1=val_p1,
                                  iterations=iterations, termination=termination))
        logger.info("round=%d dict_size=%d val_p1=%.4f", rnd, len(merged), val_p1)
        current = params
        if val_p1 > best_val:
            best_params, best_val, best_round = params, val_p1, rnd
            stall = 0
        else:
            stall += 1
            if stall >= config.patience:
                break

    report = BootstrapReport(rounds=rounds, best_round=best_round,
                             best_val_p1=best_val, selected_reg=selected_reg,
                             candidates=candidates, n_seed_train=len(seed_train),
                             n_val=len(val), n_dropped_oov=dropped,
                             aborted=aborted, abort_reason=abort_reason)
    return best_params, report
