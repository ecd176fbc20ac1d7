"""Shared encoder/decoder transformer with style embeddings, and the GRU discriminator."""
from __future__ import annotations

import math
import struct
from dataclasses import astuple, dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from .batch import Batch
from .numerics import GRU, LayerNorm, Linear, Module, Tensor, param
from .tokenizer import BOS, EOS

TWEET, NEWS = 0, 1  # style ids l1, l2
PROPOSITIONS, SENTENCE = 0, 1  # style ids used by the merge model


@dataclass
class ModelConfig:
    n_layers: int = 2
    n_heads: int = 2
    d_model: int = 64
    d_ff: int = 128
    max_len: int = 128
    vocab_size: int = 2000
    n_styles: int = 2
    dropout_p: float = 0.0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError(f"dropout_p {self.dropout_p} outside [0, 1)")
        if min(self.n_layers, self.n_heads, self.d_model, self.d_ff, self.max_len,
               self.vocab_size, self.n_styles) < 1:
            raise ValueError(f"non-positive size in {self}")


class Attention(Module):
    def __init__(self, d: int, n_heads: int, rng: np.random.Generator):
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.o = Linear(d, d, rng)
        self.n_heads = n_heads

    def __call__(self, xq: Tensor, xkv: Tensor, keep: np.ndarray) -> Tensor:
        """``keep`` is a boolean mask broadcastable to (B, H, Sq, Sk)."""
        B, Sq, d = xq.shape
        Sk = xkv.shape[1]
        H = self.n_heads
        dh = d // H

        def heads(x, S):
            return nx.transpose(nx.reshape(x, (B, S, H, dh)), (0, 2, 1, 3))

        q = heads(self.q(xq), Sq)
        kt = nx.transpose(nx.reshape(self.k(xkv), (B, Sk, H, dh)), (0, 2, 3, 1))
        v = heads(self.v(xkv), Sk)
        scores = nx.scale(nx.matmul(q, kt), 1.0 / math.sqrt(dh))
        ctx = nx.matmul(nx.softmax(scores, keep), v)
        return self.o(nx.reshape(nx.transpose(ctx, (0, 2, 1, 3)), (B, Sq, d)))


class FeedForward(Module):
    def __init__(self, d: int, d_ff: int, rng: np.random.Generator):
        self.fc1 = Linear(d, d_ff, rng)
        self.fc2 = Linear(d_ff, d, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(nx.gelu(self.fc1(x)))


class EncoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.ln1 = LayerNorm(cfg.d_model)
        self.attn = Attention(cfg.d_model, cfg.n_heads, rng)
        self.ln2 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)

    def __call__(self, x, keep, drop):
        h = self.ln1(x)
        x = x + drop(self.attn(h, h, keep))
        return x + drop(self.ff(self.ln2(x)))


class DecoderLayer(Module):
    def __init__(self, cfg: ModelConfig, rng):
        self.ln1 = LayerNorm(cfg.d_model)
        self.self_attn = Attention(cfg.d_model, cfg.n_heads, rng)
        self.ln2 = LayerNorm(cfg.d_model)
        self.cross_attn = Attention(cfg.d_model, cfg.n_heads, rng)
        self.ln3 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)

    def __call__(self, y, z, self_keep, cross_keep, drop):
        h = self.ln1(y)
        y = y + drop(self.self_attn(h, h, self_keep))
        y = y + drop(self.cross_attn(self.ln2(y), z, cross_keep))
        return y + drop(self.ff(self.ln3(y)))


@dataclass
class Encoded:
    """Per-token content vectors z and the source padding mask."""

    z: Tensor
    mask: np.ndarray


class StyleTransferModel(Module):
    """One encoder and one decoder shared by every style.

    The style embedding is added to token and position embeddings on both
    sides; both style rows start identical.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        d = cfg.d_model
        std = d ** -0.5
        self.tok_emb = param(rng.normal(0.0, std, size=(cfg.vocab_size, d)))
        self.pos_emb = param(rng.normal(0.0, std, size=(cfg.max_len, d)))
        style_row = rng.normal(0.0, std, size=d)
        self.style_emb = param(np.tile(style_row, (cfg.n_styles, 1)))
        self.enc_layers = [EncoderLayer(cfg, rng) for _ in range(cfg.n_layers)]
        self.enc_ln = LayerNorm(d)
        self.dec_layers = [DecoderLayer(cfg, rng) for _ in range(cfg.n_layers)]
        self.dec_ln = LayerNorm(d)
        self.out = Linear(d, cfg.vocab_size, rng)
        self.training = True
        self._drop_rng = np.random.default_rng(seed + 1)

    # parameter groups ------------------------------------------------

    def encoder_parameters(self) -> list[Tensor]:
        """Embedding tables plus the encoder stack (the tables also feed the decoder)."""
        named = dict(self.named_parameters())
        return [p for n, p in named.items()
                if n.split(".")[0] in ("tok_emb", "pos_emb", "style_emb", "enc_layers", "enc_ln")]

    def decoder_parameters(self) -> list[Tensor]:
        named = dict(self.named_parameters())
        return [p for n, p in named.items() if n.split(".")[0] in ("dec_layers", "dec_ln", "out")]

    # forward ---------------------------------------------------------

    def _drop(self, x):
        return nx.dropout(x, self.cfg.dropout_p, self._drop_rng if self.training else None)

    def _check_style(self, style: int) -> None:
        if style not in range(self.cfg.n_styles):
            raise ValueError(f"unknown style id {style}")

    def _embed(self, ids: np.ndarray, style: int) -> Tensor:
        B, S = ids.shape
        if S > self.cfg.max_len:
            raise ValueError(f"sequence length {S} exceeds max_len {self.cfg.max_len}")
        if ids.size and (ids.min() < 0 or ids.max() >= self.cfg.vocab_size):
            raise ValueError(f"token id outside vocab of {self.cfg.vocab_size}")
        x = nx.embedding(self.tok_emb, ids)
        x = x + nx.index_select(self.pos_emb, slice(0, S))
        x = x + nx.index_select(self.style_emb, style)
        return self._drop(x)

    def encode(self, batch: Batch, style: int) -> Encoded:
        self._check_style(style)
        mask = batch.mask
        x = self._embed(batch.ids, style)
        keep = mask[:, None, None, :]
        for layer in self.enc_layers:
            x = layer(x, keep, self._drop)
        return Encoded(self.enc_ln(x), mask)

    def _decode(self, enc: Encoded, inputs: np.ndarray, style: int) -> Tensor:
        T = inputs.shape[1]
        y = self._embed(inputs, style)
        causal = np.tril(np.ones((T, T), dtype=bool))[None, None]
        cross = enc.mask[:, None, None, :]
        for layer in self.dec_layers:
            y = layer(y, enc.z, causal, cross, self._drop)
        return self.out(self.dec_ln(y))

    def decode_teacher_forced(self, enc: Encoded, target: Batch, style: int) -> Tensor:
        """Logits (B, T-1, V); row j scores ``target.ids[:, j + 1]`` from tokens 0..j."""
        self._check_style(style)
        ids = target.ids
        if ids.shape[1] < 2 or (ids[:, 0] != BOS).any():
            raise ValueError("decode_teacher_forced: every target must start with BOS and hold a token")
        return self._decode(enc, ids[:, :-1], style)

    def reconstruction_loss(self, src: Batch, src_style: int, tgt: Batch, tgt_style: int) -> Tensor:
        logits = self.decode_teacher_forced(self.encode(src, src_style), tgt, tgt_style)
        return nx.cross_entropy(logits, tgt.ids[:, 1:], tgt.mask[:, 1:])

    def generate(self, enc: Encoded, style: int, max_new: int, mode: str = "greedy",
                 seed: int | None = None) -> list[list[int]]:
        """Autoregressive decoding; returned sequences exclude BOS and EOS."""
        self._check_style(style)
        if max_new < 1:
            raise ValueError("generate: max_new must be >= 1")
        if mode not in ("greedy", "sample"):
            raise ValueError(f"generate: unknown mode {mode!r}")
        rng = np.random.default_rng(seed)
        B = enc.mask.shape[0]
        max_new = min(max_new, self.cfg.max_len - 1)
        seqs = np.full((B, 1), BOS, dtype=np.int64)
        done = np.zeros(B, dtype=bool)
        was_training, self.training = self.training, False
        try:
            with nx.no_grad():
                for _ in range(max_new):
                    logits = self._decode(enc, seqs, style).data[:, -1]
                    if mode == "greedy":
                        nxt = logits.argmax(axis=-1)
                    else:
                        p = np.exp(logits - logits.max(axis=-1, keepdims=True))
                        p /= p.sum(axis=-1, keepdims=True)
                        nxt = np.array([rng.choice(p.shape[1], p=row) for row in p])
                    nxt = np.where(done, EOS, nxt)
                    seqs = np.concatenate([seqs, nxt[:, None]], axis=1)
                    done |= nxt == EOS
                    if done.all():
                        break
        finally:
            self.training = was_training
        out = []
        for row in seqs[:, 1:]:
            ids = row.tolist()
            out.append(ids[: ids.index(EOS)] if EOS in ids else ids)
        return out


class Discriminator(Module):
    """GRU over content vectors, final state mapped to the logit of p(l1 | z)."""

    def __init__(self, d_model: int, hidden: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.gru = GRU(d_model, hidden, rng)
        self.head = Linear(hidden, 1, rng)

    def logits(self, z: Tensor, mask: np.ndarray) -> Tensor:
        h = self.gru(z, mask)
        return nx.reshape(self.head(h), (h.shape[0],))

    def discriminate(self, z: Tensor, mask: np.ndarray) -> Tensor:
        return nx.sigmoid(self.logits(z, mask))


# ---------------------------------------------------------------- checkpoints

MAGIC = b"sfck v1\n"
_CFG = struct.Struct("<7qd")


def save_checkpoint(path, model: StyleTransferModel, disc: Discriminator | None = None) -> None:
    blocks = list(model.named_parameters())
    if disc is not None:
        blocks += [("disc." + n, p) for n, p in disc.named_parameters()]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_CFG.pack(*astuple(model.cfg)))
        fh.write(struct.pack("<I", len(blocks)))
        for name, p in blocks:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}Q", *p.data.shape))
            fh.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[StyleTransferModel, Discriminator | None]:
    buf = Path(path).read_bytes()
    if not buf.startswith(MAGIC):
        raise ValueError(f"{path}: not an sfck v1 checkpoint")
    pos = len(MAGIC)
    cfg = ModelConfig(*_CFG.unpack_from(buf, pos))
    pos += _CFG.size
    (count,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        name = buf[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}Q", buf, pos)
        pos += 8 * rank
        size = int(np.prod(shape)) if rank else 1
        arrays[name] = np.frombuffer(buf, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * size
    model = StyleTransferModel(cfg)
    _assign(model, arrays, "")
    disc = None
    if "disc.gru.w_h" in arrays:
        hidden = arrays["disc.gru.w_h"].shape[0]
        disc = Discriminator(cfg.d_model, hidden)
        _assign(disc, arrays, "disc.")
    return model, disc


def _assign(module: Module, arrays: dict, prefix: str) -> None:
    for name, p in module.named_parameters():
        key = prefix + name
        if key not in arrays:
            raise ValueError(f"checkpoint missing parameter {key}")
        if arrays[key].shape != p.shape:
            raise ValueError(f"checkpoint shape {arrays[key].shape} for {key}, model expects {p.shape}")
        p.data = arrays[key].copy()
