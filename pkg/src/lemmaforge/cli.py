"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import asdict

from . import model as model_mod
from ._fileio import atomic_write_text
from .augmentation import AnalysisTable, AugmentConfig, LemmaOnlyAnalyses, augment, selected_words, selection_log_tsv
from .corpus import (
    Corpus,
    DataFormatError,
    Sentence,
    Token,
    parse_analysis_tsv,
    parse_conllu,
    parse_freq_list,
    read_text,
    write_conllu,
)
from .evaluation import AlignmentError, evaluate
from .lexicon import build_training_lexicon, candidate_stats, parse_provider_spec
from .model import EnhancedLemmatizer, ModelConfig, ModelFormatError, build_vocab, predict_corpus
from .neural.serialize import ParamFormatError
from .training import TrainConfig, coerce_config, parse_bool, parse_config_text, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DEFAULT_SEED = 12345

logger = logging.getLogger("lemmaforge")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _print_config(command: str, values: dict) -> None:
    print(f"# command: {command}", file=sys.stderr)
    for key in sorted(values):
        print(f"# {key} = {values[key]}", file=sys.stderr)


def _read_corpus(path):
    return parse_conllu(read_text(path), origin=str(path))


# -- commands --------------------------------------------------------------

def cmd_train(args) -> int:
    file_cfg = coerce_config(TrainConfig, parse_config_text(read_text(args.config))) if args.config else {}
    model_file_cfg = coerce_config(ModelConfig, parse_config_text(read_text(args.config))) if args.config else {}
    overrides = {
        "max_epochs": args.epochs, "patience": args.patience, "batch_size": args.batch_size,
        "learning_rate": args.lr, "encoder_dropout": args.encoder_dropout, "provider": args.provider,
        "checkpoint_dir": args.checkpoint_dir,
    }
    tcfg = {**file_cfg, **{k: v for k, v in overrides.items() if v is not None}}
    tcfg["seed"] = args.seed
    try:
        train_cfg = TrainConfig(**tcfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"train: {exc}") from None
    mcfg = dict(model_file_cfg)
    for key, value in (("char_emb_dim", args.emb_dim), ("tag_emb_dim", args.emb_dim),
                       ("enc_hidden", args.enc_hidden), ("dec_hidden", args.dec_hidden),
                       ("dropout", args.dropout), ("use_feats", args.use_feats)):
        if value is not None:
            mcfg[key] = value
    mcfg["encoder_dropout"] = train_cfg.encoder_dropout
    mcfg["seed"] = args.seed
    try:
        model_cfg = ModelConfig.from_dict(mcfg)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"train: {exc}") from None
    _print_config("train", {**{f"train.{k}": v for k, v in asdict(train_cfg).items()},
                            **{f"model.{k}": v for k, v in asdict(model_cfg).items()},
                            "train_file": args.train, "dev_file": args.dev, "out": args.out})

    train_corpus = _read_corpus(args.train)
    dev_corpus = _read_corpus(args.dev)
    if train_cfg.checkpoint_dir:
        os.makedirs(train_cfg.checkpoint_dir, exist_ok=True)
    provider = parse_provider_spec(train_cfg.provider, train=train_corpus)
    vocab = build_vocab(train_corpus, [provider], model_cfg)
    model = EnhancedLemmatizer(vocab, model_cfg)
    model, history = train(model, train_corpus, dev_corpus, provider, train_cfg)
    model_mod.save(model, args.out)
    if args.history:
        atomic_write_text(args.history, history.to_tsv())
    if history.stop_reason == "early-stop":
        print(f"early-stop at epoch {history.epochs}")
    else:
        print(f"max-epochs reached at epoch {history.epochs}")
    print(f"best epoch {history.best_epoch} dev accuracy {history.best_accuracy:.4f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    _print_config("predict", {"model": args.model, "in": args.input, "provider": args.provider,
                              "out": args.out, "seed": args.seed})
    model = model_mod.load(args.model)
    corpus = _read_corpus(args.input)
    train_corpus = _read_corpus(args.train) if args.train else None
    provider = parse_provider_spec(args.provider, train=train_corpus)
    pred = predict_corpus(model, corpus, provider)
    atomic_write_text(args.out, write_conllu(pred))
    print(f"wrote {pred.num_tokens()} tokens to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _print_config("evaluate", {"gold": args.gold, "pred": args.pred, "train_vocab": args.train_vocab,
                               "seed": args.seed})
    gold = _read_corpus(args.gold)
    pred = _read_corpus(args.pred)
    train_forms = _read_corpus(args.train_vocab).forms() if args.train_vocab else set()
    report = evaluate(pred, gold, train_forms, keep_log=bool(args.log))
    print(report.format())
    if args.tsv:
        atomic_write_text(args.tsv, report.to_tsv())
    if args.log:
        atomic_write_text(args.log, report.log_tsv())
    return EXIT_OK


def cmd_build_lexicon(args) -> int:
    _print_config("build-lexicon", {"train": args.train, "out": args.out, "seed": args.seed})
    lex = build_training_lexicon(_read_corpus(args.train))
    atomic_write_text(args.out, lex.to_tsv())
    print(f"{len(lex.by_form_pos)} form/POS keys, {len(lex.by_form)} forms")
    return EXIT_OK


def cmd_candidates(args) -> int:
    _print_config("candidates", {"provider": args.provider, "in": args.input, "seed": args.seed})
    train_corpus = _read_corpus(args.train) if args.train else None
    provider = parse_provider_spec(args.provider, train=train_corpus)
    tokens = []
    for lineno, line in enumerate(read_text(args.input).splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.rstrip("\r").split("\t")
        if len(cols) > 2:
            raise DataFormatError("expected word or word<TAB>POS", lineno)
        tokens.append(Token(cols[0], cols[1] if len(cols) == 2 else ""))
    for tok in tokens:
        print(f"{tok.form}\t{tok.upos or '_'}\t{','.join(provider.get(tok.form, tok.upos))}")
    corpus = Corpus(tuple(Sentence((t,)) for t in tokens))
    mean_all, mean_covered, coverage = candidate_stats(corpus, provider)
    print(f"# candidates/word {mean_all:.2f}  candidates/covered word {mean_covered:.2f}  coverage {coverage:.4f}")
    return EXIT_OK


def cmd_augment(args) -> int:
    _print_config("augment", {"freq": args.freq, "train": args.train, "provider": args.provider,
                              "analyses": args.analyses, "k": args.k, "out": args.out, "seed": args.seed})
    if bool(args.provider) == bool(args.analyses):
        raise UsageError("augment: give exactly one of --provider or --analyses")
    freq = parse_freq_list(read_text(args.freq), raw=args.raw_freq)
    train_corpus = _read_corpus(args.train)
    if args.analyses:
        source = AnalysisTable(parse_analysis_tsv(read_text(args.analyses)))
        cfg = AugmentConfig(k=args.k)
    else:
        source = LemmaOnlyAnalyses(parse_provider_spec(args.provider, train=train_corpus))
        cfg = AugmentConfig(k=args.k, lemma_only=True)
    augmented, log = augment(freq, train_corpus, source, cfg)
    atomic_write_text(args.out, write_conllu(augmented))
    if args.log:
        atomic_write_text(args.log, selection_log_tsv(log))
    n = len(selected_words(log))
    print(f"selected {n} of {args.k} requested words" + ("" if n == args.k else " (frequency list exhausted)"))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_gradient_suite

    _print_config("gradcheck", {"seeds": args.seeds, "seed": args.seed})
    results = run_gradient_suite(args.seeds)
    worst: dict[str, object] = {}
    for r in results:
        if r.check not in worst or r.max_error > worst[r.check].max_error:
            worst[r.check] = r
    for name, r in worst.items():
        status = "PASS" if all(x.passed for x in results if x.check == name) else "FAIL"
        print(f"{status}  {name:<13} max rel. error {r.max_error:.2e} (tol {r.tolerance:.0e}, worst {r.worst})")
    if not all(r.passed for r in results):
        return EXIT_INTERNAL
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lemmaforge", description="Dual-encoder lemmatizer toolkit.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.set_defaults(func=func)
        return p

    p = add("train", cmd_train, "train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--provider", default=None, help="none | lexicon | lexicon:PATH | tsv:PATH | unimorph:PATH, comma-joined")
    p.add_argument("--encoder-dropout", type=float, default=None)
    p.add_argument("--use-feats", type=parse_bool, default=None, metavar="BOOL")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key = value file with training/model settings")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--emb-dim", type=int, default=None)
    p.add_argument("--enc-hidden", type=int, default=None)
    p.add_argument("--dec-hidden", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--checkpoint-dir", default=None)
    p.add_argument("--history", help="write the per-epoch history TSV here")

    p = add("predict", cmd_predict, "lemmatize a CoNLL-U file")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--provider", default="none")
    p.add_argument("--train", help="training corpus, needed by the bare 'lexicon' provider")
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--train-vocab", help="training CoNLL-U defining in-vocabulary forms")
    p.add_argument("--tsv", help="write the report as TSV")
    p.add_argument("--log", help="write the per-token log TSV")

    p = add("build-lexicon", cmd_build_lexicon, "dump the training-set lexicon")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)

    p = add("candidates", cmd_candidates, "print candidates for a word list")
    p.add_argument("--provider", required=True)
    p.add_argument("--in", dest="input", required=True, help="one word (optionally word<TAB>POS) per line")
    p.add_argument("--train")

    p = add("augment", cmd_augment, "append frequent unseen words to a training set")
    p.add_argument("--freq", required=True)
    p.add_argument("--raw-freq", action="store_true", help="--freq is raw text, not word<TAB>count")
    p.add_argument("--train", required=True)
    p.add_argument("--provider", help="candidate provider (lemma-only mode)")
    p.add_argument("--analyses", help="analysis TSV: word, lemma, upos, feats")
    p.add_argument("--k", type=int, default=8000)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write the selection log TSV")

    p = add("gradcheck", cmd_gradcheck, "run the gradient-check suite")
    p.add_argument("--seeds", type=int, default=20)
    return parser


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, AlignmentError, ModelFormatError, ParamFormatError, OSError, UnicodeDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (AssertionError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
