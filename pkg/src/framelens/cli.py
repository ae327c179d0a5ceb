"""``framelens`` command line: synth, validate, train, eval, predict, analyze, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Diagnostics go to stderr; machine-readable artifacts go to ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import (
    SPLITS,
    SynthConfig,
    build_vocab,
    generate_synthetic,
    load_corpus,
    make_instance,
    save_corpus,
    split_counts,
)
from .encoder import init_model, init_table_from_definitions
from .errors import DataError, NumericError
from .gradcheck import passed, run_suite
from .index import WITH_LF, WITHOUT_LF, build_index, predict, prediction_record, write_predictions
from .lexicon import LemmaPos, load_lexicon, save_lexicon
from .metrics import (
    centroid_evaluate,
    delta_alpha_report,
    evaluate,
    masked_evaluate,
    write_pairs_csv,
    write_report,
)
from .objective import GRAD_RTOL
from .trainer import (
    config_to_dict,
    load_checkpoint,
    load_config,
    params_hash,
    save_checkpoint,
    train_coarse_to_fine,
    train_stage,
    vocab_hash,
)

log = logging.getLogger("framelens")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_SEED = 42


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _require(args, *names):
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError(f"{args.command} requires {', '.join(missing)}")


def _threads(n):
    if n is None:
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        log.warning("threadpoolctl unavailable; --threads ignored")
        return
    threadpool_limits(n)


def _load_data(args, need_corpus=True):
    lex = load_lexicon(args.lexicon)
    corpus = load_corpus(args.corpus, lex) if (need_corpus or args.corpus) else None
    return lex, corpus


def _load_model(args, lex, corpus):
    ck = load_checkpoint(args.checkpoint)
    vocab = ck.vocab
    if vocab is None:
        if corpus is None:
            raise DataError("checkpoint carries no vocabulary; pass --corpus to rebuild it")
        vocab = build_vocab(corpus, lex)
        if vocab_hash(vocab) != ck.vocab_hash:
            raise DataError("rebuilt vocabulary does not match the checkpoint")
    if ck.model.mode != "dual" and len(ck.model.table) != len(lex):
        raise DataError("checkpoint table size does not match the lexicon")
    return ck.model, vocab


def _split(corpus, name):
    data = [i for i in corpus if i.split == name]
    if not data:
        raise DataError(f"split {name!r} is empty")
    return data


# --------------------------------------------------------------------------

def cmd_synth(args):
    cfg = SynthConfig(n_families=args.families, frames_per_family=args.frames_per_family,
                      lus=args.lus, seed=args.seed)
    if args.sizes:
        cfg.instances_per_split = {k: int(v) for k, v in (kv.split("=") for kv in args.sizes.split(","))}
    lex, corpus = generate_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_lexicon(lex, out / "lexicon.json")
    save_corpus(corpus, lex, out / "corpus.jsonl")
    log.info("wrote %d frames and %d instances to %s", len(lex), len(corpus), out)
    return EXIT_OK


def cmd_validate(args):
    lex, corpus = _load_data(args, need_corpus=False)
    report = {
        "frames": len(lex),
        "lexical_units": len(lex.lexical_units),
        "relations": len(lex.relations),
        "inheritance": len(lex.inheritance()),
        "ambiguous_lexical_units": sum(len(lu.evoked) >= 2 for lu in lex.lexical_units.values()),
    }
    if corpus is not None:
        counts = split_counts(corpus)
        report["instances"] = {s: counts.get(s, 0) for s in SPLITS}
        report["gold_outside_candidates"] = sum(
            1 for i in corpus if (c := lex.lexical_units.get(i.lu)) is not None and i.gold not in c.evoked)
        report["unregistered_lexical_units"] = sum(1 for i in corpus if i.lu not in lex.lexical_units)
        report["vocab_size"] = len(build_vocab(corpus, lex))
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text, file=sys.stderr)
    return EXIT_OK


def cmd_train(args):
    lex, corpus = _load_data(args)
    cfg = load_config(args.config, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab = build_vocab(corpus, lex)
    if args.checkpoint:
        model, vocab = _load_model(args, lex, corpus)
    else:
        model = init_model(len(vocab), cfg.d, cfg.seed, cfg.mode, len(lex), cfg.shared)
        if cfg.mode == "lookup_definition_init":
            init_table_from_definitions(model, vocab, lex)
    if args.stage == "both":
        model, reports = train_coarse_to_fine(model, vocab, lex, corpus, cfg.stage1, cfg.stage2, out)
    else:
        stage = cfg.stage1 if args.stage == "1" else cfg.stage2
        model, report, state = train_stage(model, vocab, lex, _split(corpus, stage.split), stage)
        path = out / f"stage{args.stage}.json"
        save_checkpoint(model, state, path, vocab)
        report.checkpoint = path.name
        reports = (report,)
    for r in reports:
        log.info("%s on %s: %d steps in %.1fs, final loss %.4f", r.objective, r.split, r.steps,
                 r.wall_clock, r.epoch_losses[-1] if r.epoch_losses else float("nan"))
    doc = {"config": config_to_dict(cfg), "stages": [r.to_dict() for r in reports],
           "params_hash": params_hash(model)}
    (out / "train_report.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                                           encoding="utf-8")
    return EXIT_OK


def _mode_view(res, mode):
    d = res.as_percent()
    if mode == WITH_LF:
        return {k: d[k] for k in ("acc_with_lf", "acc_ambiguous", "n_instances", "n_fallback", "n_ambiguous")}
    if mode == WITHOUT_LF:
        return {k: d[k] for k in ("r_at", "n_instances")}
    return d


def cmd_eval(args):
    lex, corpus = _load_data(args)
    model, vocab = _load_model(args, lex, corpus)
    test = _split(corpus, args.split)
    idx = build_index(model, vocab, lex)
    results = {}
    if args.masked:
        normal, masked, delta = masked_evaluate(model, idx, vocab, lex, test)
        results["result"] = _mode_view(normal, args.mode)
        results["masked"] = _mode_view(masked, args.mode)
        results["masked_acc_drop"] = round(100 * delta, 2)
    else:
        results["result"] = _mode_view(evaluate(model, idx, vocab, lex, test), args.mode)
    if args.centroid:
        cr = centroid_evaluate(model, vocab, lex, [i for i in corpus if i.split == "exemplar"], test,
                               args.centroid)
        results["centroid"] = _mode_view(cr.result, WITHOUT_LF)
        results["centroid_missing_frames"] = [lex.frames[f].name for f in cr.missing_frames]
    config = {"checkpoint": str(args.checkpoint), "split": args.split, "mode": args.mode,
              "masked": args.masked, "centroid": args.centroid}
    if args.out:
        write_report(args.out, results, config)
    print(json.dumps(results, indent=1, sort_keys=True), file=sys.stderr)
    return EXIT_OK


def cmd_predict(args):
    lex = load_lexicon(args.lexicon)
    corpus = load_corpus(args.corpus, lex) if args.corpus else None
    model, vocab = _load_model(args, lex, corpus)
    idx = build_index(model, vocab, lex)
    if args.sentence is not None:
        _require(args, "span", "lu")
        tokens = args.sentence.split()
        # the gold field is unused at prediction time
        instances = [make_instance(tokens, args.span[0], args.span[1], LemmaPos.parse(args.lu), 0,
                                   "test", lex)]
    elif corpus is not None:
        instances = _split(corpus, args.split)
    else:
        raise UsageError("predict needs --corpus or --sentence")
    modes = (WITH_LF, WITHOUT_LF) if args.mode == "both" else (args.mode,)
    records = [prediction_record(i, predict(model, idx, vocab, lex, inst, m, args.k), m, lex)
               for i, inst in enumerate(instances) for m in modes]
    if args.out:
        write_predictions(records, args.out)
    else:
        for rec in records:
            print(json.dumps(rec))
    return EXIT_OK


def cmd_analyze(args):
    lex = load_lexicon(args.lexicon)
    corpus = load_corpus(args.corpus, lex) if args.corpus else None
    model, vocab = _load_model(args, lex, corpus)
    idx = build_index(model, vocab, lex)
    rep = delta_alpha_report(idx, lex, include_self=not args.exclude_self, aggregate=args.aggregate)
    results = {"structure": rep}
    if args.out:
        write_report(args.out, results, {"checkpoint": str(args.checkpoint)})
    if args.csv:
        write_pairs_csv(rep, lex, args.csv)
    print(f"average delta_alpha/alpha over {rep.n_used} {rep.aggregate} with alpha > 0: "
          f"{rep.average_ratio}; mean delta_alpha {rep.mean_delta_alpha:.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_gradcheck(args):
    cases, elapsed = run_suite(seeds=range(args.seed, args.seed + args.cases))
    worst = max(c.max_error for c in cases)
    for c in cases:
        log.info("seed %d %-14s %-12s max rel err %.3e", c.seed, c.mode, c.objective, c.max_error)
    print(f"max relative error {worst:.3e} over {len(cases)} cases in {elapsed:.1f}s")
    return EXIT_OK if passed(cases, GRAD_RTOL) else EXIT_NUMERIC


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--lexicon")
    shared.add_argument("--corpus")
    shared.add_argument("--checkpoint")
    shared.add_argument("--config")
    shared.add_argument("--seed", type=int)
    shared.add_argument("--out")
    shared.add_argument("--threads", type=int)
    shared.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="framelens", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", parents=[shared], help="write a synthetic lexicon and corpus")
    s.add_argument("--families", type=int, default=6)
    s.add_argument("--frames-per-family", type=int, default=4)
    s.add_argument("--lus", type=int, default=40)
    s.add_argument("--sizes", help="split sizes, e.g. exemplar=600,train=300,dev=60,test=120")

    sub.add_parser("validate", parents=[shared], help="load data and report invariants")

    s = sub.add_parser("train", parents=[shared], help="coarse-to-fine or single-stage training")
    s.add_argument("--stage", choices=("1", "2", "both"), default="both")

    s = sub.add_parser("eval", parents=[shared], help="Acc, R@k and Overall on a split")
    s.add_argument("--split", default="test", choices=SPLITS)
    s.add_argument("--mode", choices=(WITH_LF, WITHOUT_LF, "both"), default="both")
    s.add_argument("--masked", action="store_true", help="also evaluate with the target masked")
    s.add_argument("--centroid", type=int, metavar="N", help="also rank against N-exemplar centroids")

    s = sub.add_parser("predict", parents=[shared], help="predict frames for a corpus split or a sentence")
    s.add_argument("--split", default="test", choices=SPLITS)
    s.add_argument("--sentence")
    s.add_argument("--span", type=int, nargs=2, metavar=("START", "END"))
    s.add_argument("--lu", help="lemma.pos of the target")
    s.add_argument("--mode", choices=(WITH_LF, WITHOUT_LF, "both"), default=WITH_LF)
    s.add_argument("--k", type=int, default=5)

    s = sub.add_parser("analyze", parents=[shared], help="subframe/superframe structure report")
    s.add_argument("--csv", help="per-pair CSV output")
    s.add_argument("--exclude-self", action="store_true")
    s.add_argument("--aggregate", choices=("pairs", "frames"), default="pairs")

    s = sub.add_parser("gradcheck", parents=[shared], help="analytic vs finite-difference gradients")
    s.add_argument("--cases", type=int, default=10, help="number of seeds")
    return p


REQUIRED = {
    "synth": ("out",),
    "validate": ("lexicon",),
    "train": ("lexicon", "corpus", "out"),
    "eval": ("lexicon", "corpus", "checkpoint"),
    "predict": ("lexicon", "checkpoint"),
    "analyze": ("lexicon", "checkpoint"),
    "gradcheck": (),
}

COMMANDS = {
    "synth": cmd_synth, "validate": cmd_validate, "train": cmd_train, "eval": cmd_eval,
    "predict": cmd_predict, "analyze": cmd_analyze, "gradcheck": cmd_gradcheck,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("framelens: a subcommand is required")
        _require(args, *REQUIRED[args.command])
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
        _threads(args.threads)
        if args.command in ("synth", "gradcheck") and args.seed is None:
            args.seed = DEFAULT_SEED
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
