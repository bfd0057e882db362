"""Command line interface.

Conventions: metrics go to stdout as key=value lines, diagnostics and
progress go to stderr, and every run can write a JSON manifest
recording the command, resolved options, input digests, and timings.
Exit codes: 0 success, 1 usage error, 2 data error.
"""

import argparse
import hashlib
import json
import logging
import sys
import time

from . import __version__, bootstrap as bootstrap_mod, dataio, pipelines, retrieval
from .dataio import DataError
from .model import UnknownLanguageError
from .optimizer import SolverOptions

USAGE_EXIT = 1
DATA_EXIT = 2


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; this tool uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _print_metrics(metrics):
    for key, value in metrics.items():
        if isinstance(value, float):
            print(f"{key}={value:.4f}")
        else:
            print(f"{key}={value}")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(args, command, inputs, outputs, started, elapsed, metrics):
    manifest = {
        "command": command,
        "argv": sys.argv[1:] if args._argv is None else list(args._argv),
        "version": __version__,
        "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "elapsed_seconds": round(elapsed, 3),
        "options": {k: v for k, v in vars(args).items()
                    if not k.startswith("_") and k != "func" and _jsonable(v)},
        "inputs": {path: _sha256(path) for path in inputs},
        "outputs": list(outputs),
        "metrics": {k: v for k, v in metrics.items() if _jsonable(v)},
    }
    text = json.dumps(manifest, indent=2, sort_keys=True)
    path = getattr(args, "manifest", None)
    if path is None and outputs:
        path = f"{outputs[0]}.manifest.json"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        print(f"manifest written to {path}", file=sys.stderr)
    else:
        print(text, file=sys.stderr)


def _jsonable(value):
    return isinstance(value, (str, int, float, bool, type(None), list, tuple))


def _load_embeddings(path, scheme, max_vocab):
    return dataio.preprocess(dataio.load_embeddings(path, max_vocab=max_vocab), scheme)


def _solver_options(args):
    return SolverOptions(max_iters=args.max_iters, grad_tol=args.grad_tol,
                         verbosity=args.verbosity)


def _train_config(args):
    return pipelines.TrainConfig(reg_grid=tuple(args.reg_grid),
                                 validation_fraction=args.val_fraction,
                                 solver=_solver_options(args), seed=args.seed,
                                 retrieval_mode=args.mode, csls_k=args.csls_k,
                                 vocab_cap=args.vocab_cap)


def _reg_grid(text):
    try:
        values = tuple(float(tok) for tok in text.split(",") if tok)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad regularizer grid {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty regularizer grid")
    return values


def _add_common(parser):
    parser.add_argument("--preprocess", choices=dataio.PREPROCESS_SCHEMES,
                        default="unit", help="embedding preprocessing scheme")
    parser.add_argument("--max-vocab", type=int, default=None,
                        help="load only the first N words per embedding file")
    parser.add_argument("--vocab-cap", type=int, default=retrieval.DEFAULT_VOCAB_CAP,
                        help="candidate vocabulary cap for retrieval")
    parser.add_argument("--mode", choices=retrieval.MODES, default="csls",
                        help="retrieval criterion")
    parser.add_argument("--csls-k", type=int, default=retrieval.DEFAULT_CSLS_K,
                        help="neighborhood size for CSLS penalties")
    parser.add_argument("--seed", type=int, default=0, help="split/shuffle seed")
    parser.add_argument("--manifest", default=None,
                        help="where to write the run manifest JSON")


def _add_training(parser):
    parser.add_argument("--reg-grid", type=_reg_grid, default=pipelines.DEFAULT_REG_GRID,
                        help="comma-separated regularizer grid")
    parser.add_argument("--val-fraction", type=float, default=0.2,
                        help="held-out fraction for regularizer selection")
    parser.add_argument("--max-iters", type=int, default=500)
    parser.add_argument("--grad-tol", type=float, default=1e-6)
    parser.add_argument("--verbosity", type=int, default=0,
                        help="solver progress level (stderr)")


def cmd_train(args):
    started = time.time()
    src_emb = _load_embeddings(args.src_emb, args.preprocess, args.max_vocab)
    tgt_emb = _load_embeddings(args.tgt_emb, args.preprocess, args.max_vocab)
    pairs = dataio.load_dictionary(args.dictionary)
    config = _train_config(args)
    params, report = pipelines.train_bilingual(src_emb, tgt_emb, pairs, config,
                                               (args.src_lang, args.tgt_lang))
    for cand in report.candidates:
        print(f"candidate reg={cand.reg:g} val_p1={cand.val_p1:.4f} "
              f"iterations={cand.iterations} termination={cand.termination}",
              file=sys.stderr)
    dataio.save_model(args.out, params,
                      {"preprocess": args.preprocess, "csls_k": args.csls_k,
                       "retrieval_mode": args.mode})
    metrics = report.metrics()
    _print_metrics(metrics)
    _write_manifest(args, "train", [args.src_emb, args.tgt_emb, args.dictionary],
                    [args.out], started, time.time() - started, metrics)
    return 0


def cmd_train_multi(args):
    started = time.time()
    embeddings = {}
    inputs = []
    for spec_item in args.emb:
        lang, _, path = spec_item.partition("=")
        if not lang or not path:
            raise DataError(f"bad --emb {spec_item!r}, expected LANG=PATH")
        if lang in embeddings:
            raise DataError(f"language {lang!r} given twice")
        embeddings[lang] = _load_embeddings(path, args.preprocess, args.max_vocab)
        inputs.append(path)
    edges = []
    for spec_item in args.dict:
        langs, _, path = spec_item.partition("=")
        src, _, tgt = langs.partition(":")
        if not src or not tgt or not path:
            raise DataError(f"bad --dict {spec_item!r}, expected SRC:TGT=PATH")
        edges.append((src, tgt, dataio.load_dictionary(path)))
        inputs.append(path)
    graph = pipelines.LanguageGraph(embeddings=embeddings, edges=edges)
    try:
        graph.validate()
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    params, report = pipelines.train_multilingual(graph, _train_config(args))
    for cand in report.candidates:
        print(f"candidate reg={cand.reg:g} val_p1={cand.val_p1:.4f} "
              f"iterations={cand.iterations} termination={cand.termination}",
              file=sys.stderr)
    dataio.save_model(args.out, params, {"preprocess": args.preprocess})
    metrics = {"selected_reg": report.selected_reg, "final_cost": report.final_cost,
               "final_iterations": report.final_iterations}
    for (src, tgt), n in report.edge_pairs.items():
        metrics[f"n_pairs_{src}_{tgt}"] = n
    _print_metrics(metrics)
    _write_manifest(args, "train-multi", inputs, [args.out], started,
                    time.time() - started, metrics)
    return 0


def cmd_bootstrap(args):
    started = time.time()
    src_emb = _load_embeddings(args.src_emb, args.preprocess, args.max_vocab)
    tgt_emb = _load_embeddings(args.tgt_emb, args.preprocess, args.max_vocab)
    pairs = dataio.load_dictionary(args.dictionary)
    config = bootstrap_mod.BootstrapConfig(
        vocab_cutoff=args.vocab_cutoff, validation_fraction=args.val_fraction,
        max_rounds=args.max_rounds, patience=args.patience,
        bidirectional=not args.unidirectional, reselect_reg=args.reselect_reg,
        train=_train_config(args))
    params, report = bootstrap_mod.bootstrap_train(src_emb, tgt_emb, pairs, config,
                                                   (args.src_lang, args.tgt_lang))
    dataio.save_model(args.out, params,
                      {"preprocess": args.preprocess, "csls_k": args.csls_k,
                       "retrieval_mode": args.mode, "best_round": report.best_round})
    if report.aborted:
        print(f"bootstrap aborted early: {report.abort_reason}", file=sys.stderr)
    metrics = report.metrics()
    _print_metrics(metrics)
    _write_manifest(args, "bootstrap", [args.src_emb, args.tgt_emb, args.dictionary],
                    [args.out], started, time.time() - started, metrics)
    return 0


def _model_languages(params, args):
    src = args.src_lang or (params.languages[0] if len(params.languages) == 2 else None)
    tgt = args.tgt_lang or (params.languages[1] if len(params.languages) == 2 else None)
    if src is None or tgt is None:
        raise DataError("model has more than two languages; pass --src-lang and --tgt-lang")
    return src, tgt


def cmd_translate(args):
    started = time.time()
    params, _ = dataio.load_model(args.model)
    src, tgt = _model_languages(params, args)
    src_emb = _load_embeddings(args.src_emb, args.preprocess, args.max_vocab)
    tgt_emb = _load_embeddings(args.tgt_emb, args.preprocess, args.max_vocab)
    words = list(args.words)
    if not words:
        words = [line.strip() for line in sys.stdin if line.strip()]
    result = retrieval.translate(params, src, tgt, words, src_emb, tgt_emb,
                                 top_k=args.top_k, mode=args.mode, space=args.space,
                                 csls_k=args.csls_k, vocab_cap=args.vocab_cap)
    for word in words:
        if word in result.translations:
            print(word + "\t" + " ".join(result.translations[word]))
    for word in result.oov:
        print(f"out of vocabulary: {word}", file=sys.stderr)
    _write_manifest(args, "translate", [args.model, args.src_emb, args.tgt_emb], [],
                    started, time.time() - started,
                    {"n_queries": len(words), "n_oov": len(result.oov)})
    return 0


def cmd_evaluate_bli(args):
    started = time.time()
    params, _ = dataio.load_model(args.model)
    src, tgt = _model_languages(params, args)
    src_emb = _load_embeddings(args.src_emb, args.preprocess, args.max_vocab)
    tgt_emb = _load_embeddings(args.tgt_emb, args.preprocess, args.max_vocab)
    pairs = dataio.load_dictionary(args.dictionary)
    if not pairs:
        raise DataError(f"{args.dictionary}: empty dictionary")
    report = retrieval.evaluate_bli(params, src, tgt, pairs, src_emb, tgt_emb,
                                    mode=args.mode, space=args.space,
                                    csls_k=args.csls_k, vocab_cap=args.vocab_cap)
    metrics = report.metrics()
    _print_metrics(metrics)
    _write_manifest(args, "evaluate-bli",
                    [args.model, args.src_emb, args.tgt_emb, args.dictionary], [],
                    started, time.time() - started, metrics)
    return 0


def cmd_evaluate_sim(args):
    started = time.time()
    params, _ = dataio.load_model(args.model)
    src, tgt = _model_languages(params, args)
    src_emb = _load_embeddings(args.src_emb, args.preprocess, args.max_vocab)
    tgt_emb = _load_embeddings(args.tgt_emb, args.preprocess, args.max_vocab)
    triples = dataio.load_scored_pairs(args.dataset)
    if not triples:
        raise DataError(f"{args.dataset}: no scored pairs")
    try:
        report = retrieval.evaluate_word_similarity(params, src, tgt, triples,
                                                    src_emb, tgt_emb)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    metrics = report.metrics()
    _print_metrics(metrics)
    _write_manifest(args, "evaluate-sim",
                    [args.model, args.src_emb, args.tgt_emb, args.dataset], [],
                    started, time.time() - started, metrics)
    return 0


def cmd_induce(args):
    started = time.time()
    params, _ = dataio.load_model(args.model)
    src, tgt = _model_languages(params, args)
    src_emb = _load_embeddings(args.src_emb, args.preprocess, args.max_vocab)
    tgt_emb = _load_embeddings(args.tgt_emb, args.preprocess, args.max_vocab)
    config = bootstrap_mod.BootstrapConfig(vocab_cutoff=args.vocab_cutoff,
                                           train=pipelines.TrainConfig(
                                               retrieval_mode=args.mode,
                                               csls_k=args.csls_k))
    src_index, tgt_index = bootstrap_mod._indexes_for_induction(
        params, (src, tgt), src_emb, tgt_emb, config)
    pairs = bootstrap_mod.induce_dictionary(src_index, tgt_index, args.mode)
    if args.direction == "both":
        pairs += [(s, t) for t, s in bootstrap_mod.induce_dictionary(
            tgt_index, src_index, args.mode)]
    pairs = list(dict.fromkeys(pairs))
    dataio.save_dictionary(args.out, pairs)
    metrics = {"n_induced": len(pairs)}
    _print_metrics(metrics)
    _write_manifest(args, "induce", [args.model, args.src_emb, args.tgt_emb],
                    [args.out], started, time.time() - started, metrics)
    return 0


def cmd_make_disjoint(args):
    started = time.time()
    first = dataio.load_dictionary(args.dict_src_pvt)
    second = dataio.load_dictionary(args.dict_pvt_tgt)
    if not first or not second:
        raise DataError("both dictionaries must be non-empty")
    kept_first, kept_second, report = pipelines.make_disjoint_pivot_dicts(
        first, second, seed=args.seed)
    if not kept_first or not kept_second:
        raise DataError("a dictionary lost all pairs; pivot vocabularies overlap "
                        "completely")
    dataio.save_dictionary(args.out1, kept_first)
    dataio.save_dictionary(args.out2, kept_second)
    metrics = {"n_shared_pivots": report.n_shared_pivots,
               "n_assigned_first": report.n_assigned_first,
               "n_assigned_second": report.n_assigned_second,
               "n_pairs_first": report.n_pairs_first,
               "n_pairs_second": report.n_pairs_second}
    _print_metrics(metrics)
    _write_manifest(args, "make-disjoint-pivot-dicts",
                    [args.dict_src_pvt, args.dict_pvt_tgt],
                    [args.out1, args.out2], started, time.time() - started, metrics)
    return 0


def build_parser():
    parser = _Parser(prog="xlalign",
                     description="Cross-lingual embedding alignment toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train a bilingual model")
    p.add_argument("src_emb")
    p.add_argument("tgt_emb")
    p.add_argument("dictionary")
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--src-lang", default="src")
    p.add_argument("--tgt-lang", default="tgt")
    _add_common(p)
    _add_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-multi", help="train several languages jointly")
    p.add_argument("--emb", action="append", required=True, metavar="LANG=PATH")
    p.add_argument("--dict", action="append", required=True, metavar="SRC:TGT=PATH")
    p.add_argument("--out", required=True)
    _add_common(p)
    _add_training(p)
    p.set_defaults(func=cmd_train_multi)

    p = sub.add_parser("bootstrap", help="semi-supervised training from a seed dictionary")
    p.add_argument("src_emb")
    p.add_argument("tgt_emb")
    p.add_argument("dictionary")
    p.add_argument("--out", required=True)
    p.add_argument("--src-lang", default="src")
    p.add_argument("--tgt-lang", default="tgt")
    p.add_argument("--vocab-cutoff", type=int, default=bootstrap_mod.DEFAULT_VOCAB_CUTOFF)
    p.add_argument("--max-rounds", type=int, default=20)
    p.add_argument("--patience", type=int, default=1)
    p.add_argument("--unidirectional", action="store_true",
                   help="induce pairs in the forward direction only")
    p.add_argument("--reselect-reg", action="store_true",
                   help="re-run regularizer selection every round")
    _add_common(p)
    _add_training(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("translate", help="translate words with a trained model")
    p.add_argument("model")
    p.add_argument("src_emb")
    p.add_argument("tgt_emb")
    p.add_argument("words", nargs="*", help="query words (stdin if omitted)")
    p.add_argument("--src-lang", default=None)
    p.add_argument("--tgt-lang", default=None)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--space", choices=retrieval.SPACES, default="latent")
    _add_common(p)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate-bli", help="precision@k against a gold dictionary")
    p.add_argument("model")
    p.add_argument("src_emb")
    p.add_argument("tgt_emb")
    p.add_argument("dictionary")
    p.add_argument("--src-lang", default=None)
    p.add_argument("--tgt-lang", default=None)
    p.add_argument("--space", choices=retrieval.SPACES, default="latent")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate_bli)

    p = sub.add_parser("evaluate-sim", help="word-similarity correlation")
    p.add_argument("model")
    p.add_argument("src_emb")
    p.add_argument("tgt_emb")
    p.add_argument("dataset", help="word1 word2 score per line")
    p.add_argument("--src-lang", default=None)
    p.add_argument("--tgt-lang", default=None)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate_sim)

    p = sub.add_parser("induce", help="write the model's top-1 dictionary")
    p.add_argument("model")
    p.add_argument("src_emb")
    p.add_argument("tgt_emb")
    p.add_argument("--out", required=True)
    p.add_argument("--src-lang", default=None)
    p.add_argument("--tgt-lang", default=None)
    p.add_argument("--vocab-cutoff", type=int, default=bootstrap_mod.DEFAULT_VOCAB_CUTOFF)
    p.add_argument("--direction", choices=("forward", "both"), default="forward")
    _add_common(p)
    p.set_defaults(func=cmd_induce)

    p = sub.add_parser("make-disjoint-pivot-dicts",
                       help="strip shared pivot words from two training dictionaries")
    p.add_argument("dict_src_pvt")
    p.add_argument("dict_pvt_tgt")
    p.add_argument("--out1", required=True)
    p.add_argument("--out2", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default=None)
    p.set_defaults(func=cmd_make_disjoint)

    return parser


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        return args.func(args)
    except (DataError, UnknownLanguageError, FileNotFoundError, IsADirectoryError,
            PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())
