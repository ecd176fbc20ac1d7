"""``tweet2news`` command line.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .config import EXPERIMENTS, ConfigError, apply_experiment, load_config
from .corruptor import Corruptor, load_paraphrase_table
from .datakit import (dense_matrix, filter_by_similarity, keyword_filter, kmeans,
                      select_representatives, tfidf_fit)
from .evaluation import bleu, fleiss_kappa, welch_t
from .model import save_checkpoint
from .objectives import NumericError
from .propositions import (IngestStats, build_merge_pairs, generate_templated, ingest_clause_file,
                           read_pair_file, scan_pairs, write_pair_file)
from .tokenizer import Vocab, train_bpe

log = logging.getLogger("tweet2news")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config(args):
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", None) or ())
    if getattr(args, "experiment", None):
        apply_experiment(cfg, args.experiment)
    if getattr(args, "dis", False):
        cfg.style.dis = True
    if getattr(args, "syn", False):
        cfg.style.syn = True
    return cfg.validate()


def _vocab_or_train(args, cfg, run, records=()):
    if getattr(args, "vocab", None):
        vocab = Vocab.load(args.vocab)
    else:
        news, tweets = pl.load_corpora(cfg)
        vocab = pl.build_vocab(cfg, news, tweets, records)
    vocab.save(run.file("vocab.txt"))
    return vocab


def _init_model(args, cfg, vocab):
    return pl.load_model(args.init, vocab) if getattr(args, "init", None) else pl.fresh_model(cfg, vocab)


def _lines_out(path, lines) -> None:
    pl.write_atomic(path, "".join(line + "\n" for line in lines))


# ---------------------------------------------------------------- commands


def cmd_train_bpe(args):
    corpus = [line for path in args.corpus for line in pl.read_lines(path)]
    vocab = train_bpe(corpus, args.vocab_size)
    vocab.save(args.out)
    print(f"vocabulary of {len(vocab)} tokens ({len(vocab.merges)} merges) -> {args.out}")


def cmd_pretrain_mlm(args):
    cfg = _config(args)
    run = pl.RunDir(args.out, cfg)
    news, tweets = pl.load_corpora(cfg)
    vocab = _vocab_or_train(args, cfg, run)
    model, recs = pl.pretrain_mlm(cfg, vocab, news, tweets, _init_model(args, cfg, vocab))
    run.log("pretrain", recs)
    run.flush_metrics()
    save_checkpoint(run.file("model.ckpt"), model)
    print(f"MLM: {len(recs)} steps, final loss {recs[-1]['loss']:.4f} -> {run.path}")


def cmd_corrupt(args):
    cfg = _config(args)
    table = load_paraphrase_table(args.paraphrases) if args.paraphrases else None
    corruptor = Corruptor(cfg.corruption, table)
    lines = pl.read_lines(args.input)
    out = [corruptor(line, i) for i, line in enumerate(lines)]
    if args.pairs:
        out = [f"{t}\t{n}" for t, n in zip(out, lines)]
    _lines_out(args.output, out)


def cmd_build_merge_data(args):
    if bool(args.clauses) == bool(args.generate):
        raise UsageError("give exactly one of --clauses FILE or --generate N")
    stats = IngestStats()
    if args.clauses:
        records = ingest_clause_file(args.clauses, stats)
    else:
        records = generate_templated(args.generate, args.seed)
    vocab = Vocab.load(args.vocab)
    pairs = build_merge_pairs(records, vocab, args.max_tokens)
    report = scan_pairs([(p.source, p.target) for p in pairs], vocab, args.max_tokens)
    if not report.ok:
        raise ValueError(f"internal: {len(report.too_few) + len(report.too_long)} pairs violate the data rules")
    if not pairs:
        raise ValueError("no pairs left after applying the data rules")
    write_pair_file(pairs, args.out)
    print(f"{len(pairs)} pairs from {len(records)} records "
          f"({stats.dropped} dropped with < 2 propositions, {len(stats.malformed)} malformed) -> {args.out}")


def cmd_scan_merge_data(args):
    pairs = read_pair_file(args.pairs)
    report = scan_pairs(pairs, Vocab.load(args.vocab), args.max_tokens)
    print(f"{report.total} pairs: {len(report.too_few)} with < 2 propositions, "
          f"{len(report.too_long)} over {args.max_tokens} tokens")
    if not report.ok:
        for i in report.too_few[:10]:
            print(f"  line {i + 1}: fewer than two propositions", file=sys.stderr)
        for i in report.too_long[:10]:
            print(f"  line {i + 1}: source too long", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_filter_domain(args):
    if not args.references and not args.keywords:
        raise UsageError("give --references FILE, --keywords, or both")
    candidates = pl.read_lines(args.candidates)
    keep = set(range(len(candidates)))
    if args.references:
        keep &= set(filter_by_similarity(candidates, pl.read_lines(args.references), args.threshold))
    if args.keywords:
        keep &= set(keyword_filter(candidates))
    _lines_out(args.out, [candidates[i] for i in sorted(keep)])
    print(f"kept {len(keep)} of {len(candidates)}")


def cmd_cluster_select(args):
    texts = pl.read_lines(args.input)
    points = dense_matrix(tfidf_fit(texts), texts)
    result = kmeans(points, args.k, seed=args.seed)
    _lines_out(args.out, select_representatives(result, points, texts))
    if args.assignments:
        _lines_out(args.assignments, [str(int(a)) for a in result.assignment])


def cmd_train_style(args):
    cfg = _config(args)
    run = pl.RunDir(args.out, cfg)
    news, tweets = pl.load_corpora(cfg)
    vocab = _vocab_or_train(args, cfg, run)

    def checkpoint(model, disc, cycle):
        save_checkpoint(run.file(f"checkpoint-{cycle}.ckpt"), model, disc)

    model, disc, recs = pl.train_style(cfg, vocab, news, tweets, _init_model(args, cfg, vocab), checkpoint)
    run.log("style", recs)
    run.flush_metrics()
    save_checkpoint(run.file("model.ckpt"), model, disc)
    print(f"style: objectives {pl.style_objectives(cfg.style.dis, cfg.style.syn)}, "
          f"{len(recs)} steps -> {run.path}")


def cmd_train_merge(args):
    cfg = _config(args)
    run = pl.RunDir(args.out, cfg)
    records = pl.merge_records(cfg)
    vocab = _vocab_or_train(args, cfg, run, records)
    model, recs, n_pairs = pl.train_merge(cfg, vocab, records, _init_model(args, cfg, vocab))
    run.log("merge", recs)
    run.flush_metrics()
    save_checkpoint(run.file("model.ckpt"), model)
    print(f"merge: {n_pairs} pairs, {len(recs)} steps -> {run.path}")


def cmd_transfer(args):
    vocab = Vocab.load(args.vocab)
    model = pl.load_model(args.checkpoint, vocab)
    _lines_out(args.output, pl.transfer_lines(model, vocab, pl.read_lines(args.input)))


def cmd_merge(args):
    vocab = Vocab.load(args.vocab)
    model = pl.load_model(args.checkpoint, vocab)
    groups = pl.read_groups(args.input, args.group_size)
    _lines_out(args.output, pl.merge_groups(model, vocab, groups))


def cmd_pipeline(args):
    cfg = _config(args)
    if args.inputs:
        cfg.paths.inputs = args.inputs
    run = pl.run_pipeline(cfg, args.out)
    print(f"pipeline -> {run.file('paragraphs.txt')}")


def cmd_eval_bleu(args):
    hyps = Path(args.hyp).read_text(encoding="utf-8").splitlines()
    refs = [Path(r).read_text(encoding="utf-8").splitlines() for r in args.ref]
    print(bleu(hyps, refs, lowercase=args.lowercase).format())


def cmd_eval_kappa(args):
    matrix = np.loadtxt(args.matrix, ndmin=2)
    print(f"kappa = {fleiss_kappa(matrix):.6f}")


def cmd_eval_ttest(args):
    res = welch_t(np.loadtxt(args.a, ndmin=1), np.loadtxt(args.b, ndmin=1))
    print(f"t = {res.t:.6f}, df = {res.df:.6f}, p = {res.p:.6g}")


# ---------------------------------------------------------------- parser


def _add_config(p, toggles: bool = False):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    if toggles:
        p.add_argument("--dis", action="store_true", help="enable the discriminator objectives")
        p.add_argument("--syn", action="store_true", help="enable the synthetic-parallel objective")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tweet2news", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train-bpe", help="learn a BPE vocabulary")
    p.add_argument("--corpus", nargs="+", required=True)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_bpe)

    p = sub.add_parser("pretrain-mlm", help="MLM fine-tuning on news and tweets")
    _add_config(p)
    p.add_argument("--vocab")
    p.add_argument("--init", help="checkpoint to start from")
    p.add_argument("--out", required=True, help="run directory")
    p.set_defaults(func=cmd_pretrain_mlm)

    p = sub.add_parser("corrupt", help="news sentences -> synthetic tweets")
    _add_config(p)
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--paraphrases", help="original<TAB>paraphrase table")
    p.add_argument("--pairs", action="store_true", help="write tweet<TAB>news pairs")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("build-merge-data", help="(P(y), y) pairs for the merge objective")
    p.add_argument("--clauses", help="sentence<TAB>prop1<TAB>prop2... file")
    p.add_argument("--generate", type=int, metavar="N", help="generate N templated records")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab", required=True)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_merge_data)

    p = sub.add_parser("scan-merge-data", help="check pairs against the data rules")
    p.add_argument("pairs")
    p.add_argument("--vocab", required=True)
    p.add_argument("--max-tokens", type=int, default=512)
    p.set_defaults(func=cmd_scan_merge_data)

    p = sub.add_parser("filter-domain", help="keep in-domain candidates")
    p.add_argument("candidates")
    p.add_argument("--references")
    p.add_argument("--threshold", type=float, default=0.2)
    p.add_argument("--keywords", action="store_true", help="also require a disaster keyword")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_filter_domain)

    p = sub.add_parser("cluster-select", help="k-means over TF-IDF, one representative per cluster")
    p.add_argument("input")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--assignments")
    p.set_defaults(func=cmd_cluster_select)

    p = sub.add_parser("train-style", help="style-transfer training")
    _add_config(p, toggles=True)
    p.add_argument("--vocab")
    p.add_argument("--init")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_style)

    p = sub.add_parser("train-merge", help="proposition-merge training")
    _add_config(p)
    p.add_argument("--vocab")
    p.add_argument("--init")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_merge)

    for name, func, text in (("transfer", cmd_transfer, "tweets -> news style"),
                             ("merge", cmd_merge, "sentence groups -> paragraphs")):
        p = sub.add_parser(name, help=text)
        p.add_argument("input")
        p.add_argument("output")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--vocab", required=True)
        if name == "merge":
            p.add_argument("--group-size", type=int, default=4)
        p.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="train every stage, then transfer and merge")
    _add_config(p, toggles=True)
    p.add_argument("--experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--inputs", help="tweet groups, blank-line separated")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval-bleu", help="multi-bleu style corpus BLEU")
    p.add_argument("hyp")
    p.add_argument("ref", nargs="+")
    p.add_argument("--lowercase", action="store_true")
    p.set_defaults(func=cmd_eval_bleu)

    p = sub.add_parser("eval-kappa", help="Fleiss' kappa of a whitespace count matrix")
    p.add_argument("matrix")
    p.set_defaults(func=cmd_eval_kappa)

    p = sub.add_parser("eval-ttest", help="Welch's t-test on two score files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_eval_ttest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"tweet2news {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"tweet2news {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, UnicodeDecodeError) as exc:
        print(f"tweet2news {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
