"""Training objectives and the one-minibatch-per-objective scheduler.

Style tags follow one rule everywhere: a sequence is encoded with the tag of
the style it is written in and decoded with the tag of the style wanted.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import numerics as nx
from .batch import Batch, pad_batch
from .model import NEWS, PROPOSITIONS, SENTENCE, TWEET, Discriminator, StyleTransferModel
from .tokenizer import BOS, EOS, MASK, SPECIALS, UNK

log = logging.getLogger(__name__)

N_SPECIAL = len(SPECIALS)
ORDER = ("MLM", "L_rec", "L_bt", "L_D", "L_adv", "L_syn", "L_m")
MAX_MERGE_SOURCE = 512


class NumericError(RuntimeError):
    """A loss came out NaN or infinite."""


@dataclass
class NoiseSpec:
    mask_p: float = 0.1
    drop_p: float = 0.1
    shuffle_window: int = 3

    def __post_init__(self):
        if not (0 <= self.mask_p < 1 and 0 <= self.drop_p <= 1):
            raise ValueError(f"noise probabilities out of range: {self}")
        if self.shuffle_window < 1:
            raise ValueError("shuffle_window must be >= 1")


@dataclass
class MlmSpec:
    select_p: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1
    keep_frac: float = 0.1

    def __post_init__(self):
        if abs(self.mask_frac + self.random_frac + self.keep_frac - 1.0) > 1e-12:
            raise ValueError("mask_frac + random_frac + keep_frac must equal 1")


@dataclass
class ScheduleSpec:
    objectives: list[str] = field(default_factory=lambda: ["L_rec", "L_bt"])
    batch_size: int = 4
    cycles: int = 100
    seed: int = 0
    checkpoint_every: int = 0

    def ordered(self) -> list[str]:
        unknown = set(self.objectives) - set(ORDER)
        if unknown:
            raise ValueError(f"unknown objectives {sorted(unknown)}")
        return [o for o in ORDER if o in self.objectives]


# ---------------------------------------------------------------- corruption


def apply_mlm_mask(stream, spec: MlmSpec, seed, vocab_size: int):
    """Cloze corruption of a token stream.

    Returns the corrupted copy, a boolean array of prediction positions and
    the original ids.  Random replacements are drawn from non-special ids.
    """
    orig = np.asarray(stream, dtype=np.int64)
    if orig.size == 0:
        raise ValueError("apply_mlm_mask: empty stream")
    rng = np.random.default_rng(seed)
    selected = rng.random(orig.shape) < spec.select_p
    kind = rng.random(orig.shape)
    rand_ids = rng.integers(N_SPECIAL, vocab_size, size=orig.shape)
    out = orig.copy()
    to_mask = selected & (kind < spec.mask_frac)
    to_rand = selected & (kind >= spec.mask_frac) & (kind < spec.mask_frac + spec.random_frac)
    out[to_mask] = MASK
    out[to_rand] = rand_ids[to_rand]
    return out, selected, orig


def _local_shuffle(n: int, window: int, rng: np.random.Generator) -> np.ndarray:
    if window <= 1 or n < 2:
        return np.arange(n)
    keys = np.arange(n) + rng.uniform(0.0, window, size=n)
    return np.argsort(keys, kind="stable")


def noise_seq(tokens: list[int], spec: NoiseSpec, rng: np.random.Generator) -> list[int]:
    """Drop, locally shuffle, then mask the inner tokens of one sentence."""
    if not tokens:
        return tokens
    kept = [t for t in tokens if rng.random() >= spec.drop_p]
    if not kept:
        kept = [t for t in tokens if rng.random() >= spec.drop_p]
        if not kept:
            return [UNK]
    kept = [kept[i] for i in _local_shuffle(len(kept), spec.shuffle_window, rng)]
    return [MASK if rng.random() < spec.mask_p else t for t in kept]


def noise_C(batch: Batch, spec: NoiseSpec, seed) -> Batch:
    """Noised copy of a BOS/EOS-framed batch; framing is left intact."""
    rng = np.random.default_rng(seed)
    rows = []
    for row in batch.rows():
        inner = row[1:-1] if len(row) >= 2 and row[0] == BOS and row[-1] == EOS else row
        rows.append(noise_seq(inner, spec, rng))
    return pad_batch(rows, batch.styles.tolist())


def restyle(batch: Batch, style: int) -> Batch:
    return Batch(batch.ids, batch.lengths, np.full(len(batch), style, dtype=np.int64))


def _require_style(batch: Batch, style: int, what: str) -> None:
    if (batch.styles != style).any():
        raise ValueError(f"{what}: expected every row tagged with style {style}, got {batch.styles.tolist()}")


def _finite(value: float, objective: str) -> float:
    if not math.isfinite(value):
        raise NumericError(f"{objective}: non-finite loss {value}")
    return value


# ---------------------------------------------------------------- losses


def mlm_loss(model: StyleTransferModel, streams: np.ndarray, style: int, spec: MlmSpec, seed) -> nx.Tensor:
    corrupted, selected, orig = apply_mlm_mask(streams, spec, seed, model.cfg.vocab_size)
    if not selected.any():
        selected = selected.copy()
        selected[..., 0] = True
    n = corrupted.shape[1]
    batch = Batch(corrupted, np.full(corrupted.shape[0], n), np.full(corrupted.shape[0], style))
    logits = model.out(model.encode(batch, style).z)
    return nx.cross_entropy(logits, orig, selected)


def denoise_loss(model, batch_x: Batch, batch_y: Batch, noise: NoiseSpec, seed) -> nx.Tensor:
    _require_style(batch_x, TWEET, "L_rec")
    _require_style(batch_y, NEWS, "L_rec")
    sx, sy = np.random.SeedSequence(seed).spawn(2)
    lx = model.reconstruction_loss(noise_C(batch_x, noise, sx), TWEET, batch_x, TWEET)
    ly = model.reconstruction_loss(noise_C(batch_y, noise, sy), NEWS, batch_y, NEWS)
    return lx + ly


def transfer(model: StyleTransferModel, batch: Batch, src_style: int, tgt_style: int,
             max_ratio: float = 1.5) -> list[list[int]]:
    """Greedy style transfer of a framed batch, no gradient recorded."""
    with nx.no_grad():
        max_new = max(1, math.ceil(max_ratio * int(batch.lengths.max() - 2)) + 1)
        max_new = min(max_new, model.cfg.max_len - 2)
        return model.generate(model.encode(batch, src_style), tgt_style, max_new)


@dataclass
class BacktranslationResult:
    loss: nx.Tensor | None
    skipped: int
    synthetic: tuple[list[list[int]], list[list[int]]] = ((), ())


def backtranslate_loss(model, batch_x: Batch, batch_y: Batch, synthetic=None) -> BacktranslationResult:
    """Both directions of on-the-fly back-translation.

    Synthetic sources come from greedy generation with gradients stopped;
    rows whose generation is empty are skipped.  Passing a previous result's
    ``synthetic`` reuses those sources instead of generating new ones.
    """
    _require_style(batch_x, TWEET, "L_bt")
    _require_style(batch_y, NEWS, "L_bt")
    terms, skipped, made = [], 0, []
    directions = ((batch_x, TWEET, NEWS), (batch_y, NEWS, TWEET))
    for k, (src, src_style, tgt_style) in enumerate(directions):
        generated = transfer(model, src, src_style, tgt_style) if synthetic is None else synthetic[k]
        made.append(generated)
        keep = [i for i, s in enumerate(generated) if s]
        skipped += len(generated) - len(keep)
        if not keep:
            continue
        syn_batch = pad_batch([generated[i] for i in keep], tgt_style, max_len=model.cfg.max_len)
        originals = pad_batch([src.rows()[i][1:-1] for i in keep], src_style)
        terms.append(model.reconstruction_loss(syn_batch, tgt_style, originals, src_style))
    if not terms:
        return BacktranslationResult(None, skipped, tuple(made))
    loss = terms[0] if len(terms) == 1 else terms[0] + terms[1]
    return BacktranslationResult(loss, skipped, tuple(made))


def discriminator_loss(model, disc: Discriminator, batch_x: Batch, batch_y: Batch,
                       through_encoder: bool = False) -> nx.Tensor:
    """E[-log p(l1|z_x)] + E[-log(1 - p(l1|z_y))].

    The encoder is run without recording unless ``through_encoder`` is set.
    """
    _require_style(batch_x, TWEET, "L_D")
    _require_style(batch_y, NEWS, "L_D")
    if through_encoder:
        ex, ey = model.encode(batch_x, TWEET), model.encode(batch_y, NEWS)
    else:
        with nx.no_grad():
            ex, ey = model.encode(batch_x, TWEET), model.encode(batch_y, NEWS)
    sx = disc.logits(ex.z, ex.mask)
    sy = disc.logits(ey.z, ey.mask)
    return nx.mean_all(nx.neg_log_sigmoid(sx)) + nx.mean_all(nx.neg_log_sigmoid(-sy))


def adversarial_loss(model, disc, batch_x: Batch, batch_y: Batch) -> nx.Tensor:
    return -discriminator_loss(model, disc, batch_x, batch_y, through_encoder=True)


def synthetic_loss(model, batch_y: Batch, corruptor: Callable[[Batch], Batch]) -> nx.Tensor:
    """Reconstruct news y from the synthetic tweet H(y)."""
    _require_style(batch_y, NEWS, "L_syn")
    source = restyle(corruptor(batch_y), TWEET)
    return model.reconstruction_loss(source, TWEET, batch_y, NEWS)


def merge_loss(model, sources: Batch, targets: Batch, max_source: int = MAX_MERGE_SOURCE) -> nx.Tensor:
    longest = int(sources.lengths.max()) - 2
    if longest > max_source:
        raise ValueError(f"L_m: source of {longest} tokens exceeds the {max_source}-token limit")
    return model.reconstruction_loss(sources, PROPOSITIONS, targets, SENTENCE)


def discriminator_accuracy(model, disc, batch_x: Batch, batch_y: Batch) -> float:
    with nx.no_grad():
        ex, ey = model.encode(batch_x, TWEET), model.encode(batch_y, NEWS)
        px = disc.discriminate(ex.z, ex.mask).data
        py = disc.discriminate(ey.z, ey.mask).data
    correct = (px > 0.5).sum() + (py <= 0.5).sum()
    return float(correct / (len(px) + len(py)))


# ---------------------------------------------------------------- trainer


class Trainer:
    """Owns the optimizers and applies each objective to its parameter set.

    enc+dec objectives (MLM, L_rec, L_bt, L_syn, L_m) step every model
    parameter, L_adv steps encoder-side parameters only, L_D steps only the
    discriminator.
    """

    def __init__(self, model: StyleTransferModel, disc: Discriminator | None = None,
                 lr: float = 1e-5, noise: NoiseSpec | None = None, mlm: MlmSpec | None = None,
                 corruptor: Callable[[Batch], Batch] | None = None, seed: int = 0,
                 disc_lr: float | None = None):
        self.model = model
        self.disc = disc
        self.noise = noise or NoiseSpec()
        self.mlm = mlm or MlmSpec()
        self.corruptor = corruptor
        self.rng = np.random.default_rng(seed)
        self.opt_model = nx.Adam(model.parameters(), lr=lr)
        self.opt_enc = nx.Adam(model.encoder_parameters(), lr=lr)
        self.opt_disc = nx.Adam(disc.parameters(), lr=disc_lr or lr) if disc is not None else None
        self.bt_skipped = 0

    def _seed(self) -> int:
        return int(self.rng.integers(2**63 - 1))

    def _apply(self, loss: nx.Tensor, opt: nx.Adam, name: str) -> float:
        value = _finite(loss.item(), name)
        for p in self.model.parameters():
            p.grad = None
        if self.disc is not None:
            for p in self.disc.parameters():
                p.grad = None
        nx.backward(loss)
        opt.step()
        return value

    def step_mlm(self, streams: np.ndarray, style: int, seed=None) -> float:
        loss = mlm_loss(self.model, streams, style, self.mlm, self._seed() if seed is None else seed)
        return self._apply(loss, self.opt_model, "MLM")

    def step_mlm_mixed(self, rows: list[tuple[int, list[int]]]) -> float:
        """One MLM step over (style, stream) rows that may mix styles."""
        loss = None
        for style in sorted({r[0] for r in rows}):
            streams = np.array([r[1] for r in rows if r[0] == style], dtype=np.int64)
            term = mlm_loss(self.model, streams, style, self.mlm, self._seed())
            loss = term if loss is None else loss + term
        return self._apply(loss, self.opt_model, "MLM")

    def step_denoise(self, batch_x: Batch, batch_y: Batch, seed=None) -> float:
        loss = denoise_loss(self.model, batch_x, batch_y, self.noise,
                            self._seed() if seed is None else seed)
        return self._apply(loss, self.opt_model, "L_rec")

    def step_backtranslate(self, batch_x: Batch, batch_y: Batch, synthetic=None) -> float:
        res = backtranslate_loss(self.model, batch_x, batch_y, synthetic)
        if res.skipped:
            self.bt_skipped += res.skipped
            log.debug("L_bt skipped %d empty generations", res.skipped)
        if res.loss is None:
            return float("nan")
        return self._apply(res.loss, self.opt_model, "L_bt")

    def step_discriminator(self, batch_x: Batch, batch_y: Batch) -> float:
        loss = discriminator_loss(self.model, self._need_disc(), batch_x, batch_y)
        return self._apply(loss, self.opt_disc, "L_D")

    def step_adversarial(self, batch_x: Batch, batch_y: Batch) -> float:
        loss = adversarial_loss(self.model, self._need_disc(), batch_x, batch_y)
        value = self._apply(loss, self.opt_enc, "L_adv")
        for p in self.disc.parameters():
            p.grad = None
        return value

    def step_synthetic(self, batch_y: Batch) -> float:
        if self.corruptor is None:
            raise ValueError("L_syn needs a corruptor")
        loss = synthetic_loss(self.model, batch_y, self.corruptor)
        return self._apply(loss, self.opt_model, "L_syn")

    def step_merge(self, sources: Batch, targets: Batch) -> float:
        return self._apply(merge_loss(self.model, sources, targets), self.opt_model, "L_m")

    def _need_disc(self) -> Discriminator:
        if self.disc is None:
            raise ValueError("this objective needs a discriminator")
        return self.disc


# ---------------------------------------------------------------- scheduling


class DataSource:
    """Endless minibatches over a fixed item list, reshuffled every epoch.

    Epoch ``e`` uses the permutation seeded by ``(seed, e)``.
    """

    def __init__(self, items: list, batch_size: int, seed: int = 0):
        if not items:
            raise ValueError("DataSource: no items")
        self.items = list(items)
        self.batch_size = batch_size
        self.seed = seed
        self.epoch = 0
        self._order = self._permutation()
        self._pos = 0

    def _permutation(self):
        return np.random.default_rng([self.seed, self.epoch]).permutation(len(self.items))

    def next(self) -> list:
        out = []
        while len(out) < self.batch_size:
            if self._pos >= len(self._order):
                self.epoch += 1
                self._order = self._permutation()
                self._pos = 0
            out.append(self.items[self._order[self._pos]])
            self._pos += 1
        return out


@dataclass
class StyleData:
    """Sources for the style-transfer objectives (id sequences without framing)."""

    tweets: DataSource | None = None
    news: DataSource | None = None
    merge_pairs: DataSource | None = None  # (source ids, target ids)
    streams: DataSource | None = None  # (style, stream ids)
    max_len: int | None = None

    def x(self) -> Batch:
        return pad_batch(self.tweets.next(), TWEET, max_len=self.max_len)

    def y(self) -> Batch:
        return pad_batch(self.news.next(), NEWS, max_len=self.max_len)


def _require(source, objective: str):
    if source is None:
        raise ValueError(f"objective {objective} enabled but its data source is missing")


def run_schedule(spec: ScheduleSpec, trainer: Trainer, data: StyleData,
                 metrics_path=None, on_checkpoint: Callable[[int], None] | None = None) -> list[dict]:
    """Cycle through the enabled objectives, one minibatch each, in ``ORDER``."""
    objectives = spec.ordered()
    needs = {"MLM": ["streams"], "L_rec": ["tweets", "news"], "L_bt": ["tweets", "news"],
             "L_D": ["tweets", "news"], "L_adv": ["tweets", "news"], "L_syn": ["news"],
             "L_m": ["merge_pairs"]}
    for obj in objectives:
        for attr in needs[obj]:
            _require(getattr(data, attr), obj)
    records: list[dict] = []
    fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        step = 0
        for cycle in range(spec.cycles):
            for obj in objectives:
                loss = _run_one(obj, trainer, data)
                step += 1
                rec = {"step": step, "cycle": cycle, "objective": obj, "loss": loss}
                records.append(rec)
                if fh:
                    fh.write(json.dumps(rec) + "\n")
            if on_checkpoint and spec.checkpoint_every and (cycle + 1) % spec.checkpoint_every == 0:
                on_checkpoint(cycle + 1)
    finally:
        if fh:
            fh.close()
    return records


def _run_one(obj: str, trainer: Trainer, data: StyleData) -> float:
    if obj == "MLM":
        return trainer.step_mlm_mixed(data.streams.next())
    if obj == "L_rec":
        return trainer.step_denoise(data.x(), data.y())
    if obj == "L_bt":
        return trainer.step_backtranslate(data.x(), data.y())
    if obj == "L_D":
        return trainer.step_discriminator(data.x(), data.y())
    if obj == "L_adv":
        return trainer.step_adversarial(data.x(), data.y())
    if obj == "L_syn":
        return trainer.step_synthetic(data.y())
    pairs = data.merge_pairs.next()
    src = pad_batch([p[0] for p in pairs], PROPOSITIONS)
    tgt = pad_batch([p[1] for p in pairs], SENTENCE)
    return trainer.step_merge(src, tgt)
