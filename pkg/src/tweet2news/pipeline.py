"""Training stages and end-to-end inference shared by the CLI subcommands."""
from __future__ import annotations

import json
import logging
import os
import platform
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .batch import pad_batch
from .config import PipelineConfig, dump_config
from .corpus import bundled
from .corruptor import BatchCorruptor, Corruptor, load_paraphrase_table
from .datakit import make_streams
from .model import NEWS, TWEET, Discriminator, StyleTransferModel, load_checkpoint, save_checkpoint
from .objectives import DataSource, ScheduleSpec, StyleData, Trainer, run_schedule, transfer
from .propositions import (PropositionRecord, build_merge_pairs, generate_templated,
                           ingest_clause_file, pairwise_merge_inference, scan_pairs)
from .tokenizer import UNK, Vocab, train_bpe

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- files


def read_lines(path) -> list[str]:
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: no non-empty lines")
    return lines


def read_groups(path, group_size: int = 4) -> list[list[str]]:
    """Blank-line separated groups; a file without blank lines is cut every ``group_size`` lines."""
    text = Path(path).read_text(encoding="utf-8")
    blocks = [[ln.strip() for ln in b.splitlines() if ln.strip()] for b in text.split("\n\n")]
    blocks = [b for b in blocks if b]
    if not blocks:
        raise ValueError(f"{path}: no input sentences")
    if len(blocks) == 1 and len(blocks[0]) > group_size:
        flat = blocks[0]
        blocks = [flat[i:i + group_size] for i in range(0, len(flat), group_size)]
    return blocks


def write_atomic(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def versions_stamp() -> str:
    return (f"tweet2news {__version__}\nnumpy {np.__version__}\n"
            f"python {platform.python_version()}\nkernels {kernels.BACKEND}\n")


class RunDir:
    """Output directory holding config, versions stamp, metrics and checkpoints."""

    def __init__(self, path, cfg: PipelineConfig):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        write_atomic(self.path / "config.txt", dump_config(cfg))
        write_atomic(self.path / "versions.txt", versions_stamp())
        self.records: list[dict] = []

    def log(self, stage: str, records) -> None:
        for rec in records:
            self.records.append({"stage": stage, **rec})

    def flush_metrics(self) -> None:
        write_atomic(self.path / "metrics.jsonl",
                     "".join(json.dumps(r) + "\n" for r in self.records))

    def file(self, name: str) -> Path:
        return self.path / name


# ---------------------------------------------------------------- data


def load_corpora(cfg: PipelineConfig) -> tuple[list[str], list[str]]:
    news = read_lines(cfg.paths.news) if cfg.paths.news else bundled("news.txt")
    tweets = read_lines(cfg.paths.tweets) if cfg.paths.tweets else bundled("tweets.txt")
    return news, tweets


def merge_records(cfg: PipelineConfig) -> list[PropositionRecord]:
    if cfg.paths.clauses:
        records = ingest_clause_file(cfg.paths.clauses)
    else:
        records = generate_templated(cfg.merge.n_records, cfg.seed, cfg.merge.redundancy_p)
    if not records:
        raise ValueError("no usable (sentence, propositions) records")
    return records


def build_vocab(cfg: PipelineConfig, news, tweets, records=()) -> Vocab:
    corpus = list(news) + list(tweets)
    for r in records:
        corpus.append(r.sentence)
        corpus.extend(r.propositions)
    return train_bpe(corpus, cfg.bpe.vocab_size)


def fresh_model(cfg: PipelineConfig, vocab: Vocab) -> StyleTransferModel:
    return StyleTransferModel(replace(cfg.model, vocab_size=len(vocab)), seed=cfg.seed)


def clone_model(model: StyleTransferModel) -> StyleTransferModel:
    copy = StyleTransferModel(model.cfg)
    src = dict(model.named_parameters())
    for name, p in copy.named_parameters():
        p.data = src[name].data.copy()
    return copy


def load_model(path, vocab: Vocab) -> StyleTransferModel:
    model, _ = load_checkpoint(path)
    if model.cfg.vocab_size != len(vocab):
        raise ValueError(f"{path}: checkpoint vocabulary {model.cfg.vocab_size} != vocab file {len(vocab)}")
    return model


def _fit(ids_list, max_len: int, what: str) -> list[list[int]]:
    kept = [ids for ids in ids_list if ids and len(ids) + 2 <= max_len]
    if len(kept) < len(ids_list):
        log.warning("%s: skipped %d sentences that are empty or exceed max_len", what, len(ids_list) - len(kept))
    if not kept:
        raise ValueError(f"{what}: no usable sentences")
    return kept


# ---------------------------------------------------------------- stages


def pretrain_mlm(cfg: PipelineConfig, vocab: Vocab, news, tweets, model=None):
    """MLM fine-tuning with news and tweets as the two styles."""
    model = model or fresh_model(cfg, vocab)
    rows = []
    for style, corpus in ((NEWS, news), (TWEET, tweets)):
        streams = make_streams(corpus, vocab, cfg.pretrain.stream_len)
        if not streams:
            raise ValueError(f"corpus too small for one {cfg.pretrain.stream_len}-token stream")
        rows.extend((style, s) for s in streams)
    source = DataSource(rows, cfg.pretrain.batch_size, seed=cfg.seed)
    trainer = Trainer(model, lr=cfg.pretrain.lr, mlm=cfg.mlm, seed=cfg.seed)
    records = []
    for step in range(1, cfg.pretrain.steps + 1):
        loss = trainer.step_mlm_mixed(source.next())
        records.append({"step": step, "cycle": step - 1, "objective": "MLM", "loss": loss})
    return model, records


def style_objectives(dis: bool, syn: bool) -> list[str]:
    objs = ["L_rec", "L_bt"]
    if dis:
        objs += ["L_D", "L_adv"]
    if syn:
        objs.append("L_syn")
    return objs


def train_style(cfg: PipelineConfig, vocab: Vocab, news, tweets, model=None, on_checkpoint=None):
    model = model or fresh_model(cfg, vocab)
    max_len = model.cfg.max_len
    s = cfg.style
    disc = Discriminator(model.cfg.d_model, s.disc_hidden, seed=cfg.seed) if s.dis else None
    corruptor = None
    if s.syn:
        table = load_paraphrase_table(cfg.paths.paraphrases) if cfg.paths.paraphrases else None
        corruptor = BatchCorruptor(vocab, Corruptor(cfg.corruption, table), max_len, seed=cfg.seed)
    trainer = Trainer(model, disc, lr=s.lr, noise=cfg.noise, mlm=cfg.mlm, corruptor=corruptor,
                      seed=cfg.seed, disc_lr=s.disc_lr or None)
    data = StyleData(
        tweets=DataSource(_fit([vocab.encode(t) for t in tweets], max_len, "tweets"), s.batch_size, cfg.seed),
        news=DataSource(_fit([vocab.encode(t) for t in news], max_len, "news"), s.batch_size, cfg.seed + 1),
        max_len=max_len,
    )
    spec = ScheduleSpec(style_objectives(s.dis, s.syn), s.batch_size, s.cycles, cfg.seed, s.checkpoint_every)
    records = run_schedule(spec, trainer, data,
                           on_checkpoint=(lambda c: on_checkpoint(model, disc, c)) if on_checkpoint else None)
    return model, disc, records


def train_merge(cfg: PipelineConfig, vocab: Vocab, records, model=None):
    model = model or fresh_model(cfg, vocab)
    m = cfg.merge
    pairs = build_merge_pairs(records, vocab, m.max_source_tokens)
    report = scan_pairs([(p.source, p.target) for p in pairs], vocab, m.max_source_tokens)
    if not report.ok:
        raise ValueError(f"merge pairs violate data rules: {len(report.too_few)} too few, "
                         f"{len(report.too_long)} too long")
    items = [(p.source_ids, p.target_ids) for p in pairs if len(p.target_ids) + 2 <= model.cfg.max_len]
    if not items:
        raise ValueError("no merge pairs fit the model window")
    data = StyleData(merge_pairs=DataSource(items, m.batch_size, cfg.seed), max_len=model.cfg.max_len)
    trainer = Trainer(model, lr=m.lr, seed=cfg.seed)
    spec = ScheduleSpec(["L_m"], m.batch_size, m.cycles, cfg.seed)
    return model, run_schedule(spec, trainer, data), len(pairs)


# ---------------------------------------------------------------- inference


def transfer_lines(model: StyleTransferModel, vocab: Vocab, lines, batch_size: int = 8) -> list[str]:
    """Tweets to news style, greedy, in input order."""
    out = []
    limit = model.cfg.max_len - 2
    for i in range(0, len(lines), batch_size):
        ids = [vocab.encode(t)[:limit] or [UNK] for t in lines[i:i + batch_size]]
        for gen in transfer(model, pad_batch(ids, TWEET), TWEET, NEWS):
            out.append(vocab.decode(gen))
    return out


def merge_groups(model: StyleTransferModel, vocab: Vocab, groups) -> list[str]:
    return [pairwise_merge_inference(model, vocab, list(g)) for g in groups]


def default_inputs(cfg: PipelineConfig, tweets) -> list[list[str]]:
    if cfg.paths.inputs:
        return read_groups(cfg.paths.inputs, cfg.eval.group_size)
    n = cfg.eval.group_size
    return [list(tweets[i:i + n]) for i in range(0, 2 * n, n)]


def run_pipeline(cfg: PipelineConfig, out) -> RunDir:
    """Train every enabled stage, then tweets -> news style -> merged paragraphs."""
    run = RunDir(out, cfg)
    news, tweets = load_corpora(cfg)
    records = merge_records(cfg) if cfg.stages.merge else []
    vocab = build_vocab(cfg, news, tweets, records)
    vocab.save(run.file("vocab.txt"))

    base, recs = pretrain_mlm(cfg, vocab, news, tweets)
    run.log("pretrain", recs)
    save_checkpoint(run.file("mlm.ckpt"), base)

    groups = default_inputs(cfg, tweets)
    if cfg.stages.transfer:
        style_model, disc, recs = train_style(cfg, vocab, news, tweets, clone_model(base))
        run.log("style", recs)
        save_checkpoint(run.file("style.ckpt"), style_model, disc)
        groups = [transfer_lines(style_model, vocab, g) for g in groups]
        write_atomic(run.file("transferred.txt"), "\n\n".join("\n".join(g) for g in groups) + "\n")
    if cfg.stages.merge:
        merge_model, recs, _ = train_merge(cfg, vocab, records, clone_model(base))
        run.log("merge", recs)
        save_checkpoint(run.file("merge.ckpt"), merge_model)
        paragraphs = merge_groups(merge_model, vocab, groups)
    else:
        paragraphs = [" ".join(g) for g in groups]
    run.flush_metrics()
    write_atomic(run.file("paragraphs.txt"), "".join(p + "\n" for p in paragraphs))
    return run
