"""Byte-pair encoding over lowercased, whitespace-split words.

Word-final symbols carry the ``</w>`` marker so decoding can restore spaces.
Text containing the literal marker string does not round-trip.
"""
from __future__ import annotations

import heapq
import string
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .kernels import BpeMerger

PAD, BOS, EOS, MASK, UNK = 0, 1, 2, 3, 4
SPECIALS = ("<pad>", "<s>", "</s>", "<mask>", "<unk>")
END = "</w>"
HEADER = "bpe-vocab v1"
DEFAULT_VOCAB_SIZE = 2000

# printable ASCII minus uppercase (encode lowercases) and whitespace
DEFAULT_ALPHABET = "".join(
    sorted(set(string.printable) - set(string.whitespace) - set(string.ascii_uppercase))
)


def normalize(text: str) -> str:
    return " ".join(text.lower().split())


def _word_symbols(word: str) -> list[str]:
    return list(word[:-1]) + [word[-1] + END]


@dataclass
class Vocab:
    token_of: list[str]
    merges: list[tuple[str, str]]
    n_base: int
    id_of: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.id_of = {tok: i for i, tok in enumerate(self.token_of)}
        if len(self.id_of) != len(self.token_of):
            raise ValueError("vocab: duplicate token strings")
        if tuple(self.token_of[: len(SPECIALS)]) != SPECIALS:
            raise ValueError("vocab: specials must occupy ids 0..4")
        triples = [(self.id_of[a], self.id_of[b], self.id_of[a + b]) for a, b in self.merges]
        self._merger = BpeMerger(triples)
        self._cache: dict[str, list[int]] = {}

    @property
    def specials(self) -> dict[str, int]:
        return {"PAD": PAD, "BOS": BOS, "EOS": EOS, "MASK": MASK, "UNK": UNK}

    def __len__(self) -> int:
        return len(self.token_of)

    def _encode_word(self, word: str) -> list[int]:
        hit = self._cache.get(word)
        if hit is None:
            ids = [self.id_of.get(s, UNK) for s in _word_symbols(word)]
            hit = self._merger.segment(ids)
            self._cache[word] = hit
        return hit

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        for word in normalize(text).split(" "):
            if word:
                out.extend(self._encode_word(word))
        return out

    def decode(self, ids) -> str:
        parts = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(self.token_of):
                raise ValueError(f"decode: unknown token id {i}")
            tok = self.token_of[i]
            if i < len(SPECIALS):
                parts.append(tok + " ")
            elif tok.endswith(END):
                parts.append(tok[: -len(END)] + " ")
            else:
                parts.append(tok)
        return "".join(parts).strip()

    def tokens(self, ids) -> list[str]:
        return [self.token_of[int(i)] for i in ids]

    # ---------------------------------------------------------------- io

    def save(self, path) -> None:
        lines = [HEADER, f"base {self.n_base}"]
        lines += [f"{a} {b}" for a, b in self.merges]
        lines += [f"{i}\t{tok}" for i, tok in enumerate(self.token_of)]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> Vocab:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if not lines or lines[0] != HEADER:
            raise ValueError(f"{path}: not a {HEADER!r} file")
        if not lines[1].startswith("base "):
            raise ValueError(f"{path}:2: missing base-symbol count")
        n_base = int(lines[1].split()[1])
        merges, tokens = [], []
        for lineno, line in enumerate(lines[2:], start=3):
            if not line:
                continue
            if "\t" in line:
                idx, tok = line.split("\t", 1)
                if int(idx) != len(tokens):
                    raise ValueError(f"{path}:{lineno}: token ids must be dense and ordered")
                tokens.append(tok)
            else:
                a, b = line.split(" ")
                merges.append((a, b))
        return cls(tokens, merges, n_base)


def train_bpe(corpus, vocab_size: int = DEFAULT_VOCAB_SIZE, alphabet: str = DEFAULT_ALPHABET) -> Vocab:
    """Greedy pair-merge BPE.

    ``corpus`` is a string of lines or an iterable of lines.  Ties between
    equally frequent pairs go to the lexicographically smallest pair.
    """
    lines = corpus.splitlines() if isinstance(corpus, str) else list(corpus)
    words = Counter(w for line in lines for w in normalize(line).split())
    if not words:
        raise ValueError("train_bpe: empty corpus")

    chars = sorted(set(alphabet) | {c for w in words for c in w})
    base = sorted(set(chars) | {c + END for c in chars})
    if vocab_size <= len(base) + len(SPECIALS):
        raise ValueError(
            f"train_bpe: vocab_size {vocab_size} must exceed {len(base)} base symbols + specials"
        )
    token_of = list(SPECIALS) + base
    known = set(token_of)

    seqs = [_word_symbols(w) for w in words]
    freqs = list(words.values())
    counts: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, seq in enumerate(seqs):
        for pair in zip(seq, seq[1:]):
            counts[pair] += freqs[wi]
            where[pair].add(wi)
    heap = [(-c, pair) for pair, c in counts.items()]
    heapq.heapify(heap)

    merges: list[tuple[str, str]] = []
    # a pair spelling an existing token (e.g. "ab"+"c" after "a"+"bc") is never
    # merged, so every merge adds exactly one token
    banned: set[tuple[str, str]] = set()
    while len(token_of) < vocab_size and heap:
        neg, pair = heapq.heappop(heap)
        if pair in banned or counts.get(pair, 0) != -neg or neg == 0:
            continue
        a, b = pair
        merged = a + b
        if merged in known:
            banned.add(pair)
            continue
        merges.append(pair)
        known.add(merged)
        token_of.append(merged)
        touched: set[tuple[str, str]] = set()
        for wi in sorted(where.pop(pair, ())):
            seq, f = seqs[wi], freqs[wi]
            for p in zip(seq, seq[1:]):
                counts[p] -= f
                touched.add(p)
            out, i = [], 0
            while i < len(seq):
                if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
                    out.append(merged)
                    i += 2
                else:
                    out.append(seq[i])
                    i += 1
            seqs[wi] = out
            for p in zip(out, out[1:]):
                counts[p] += f
                where[p].add(wi)
                touched.add(p)
        counts.pop(pair, None)
        for p in touched:
            c = counts.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                counts.pop(p, None)
    return Vocab(token_of, merges, n_base=len(base))
