"""Synthetic tweets from news sentences: paraphrase, misspell, hashtag.

Stages always run in that order.  Every function is pure given its seed.
"""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

VOWELS = frozenset("aeiouAEIOU")

FUNCTION_WORDS = frozenset(
    "a an the of to in on at for by with from as and or but is are was were be been has have had "
    "that which this these those its their it".split()
)

SYNONYMS = {
    "killed": "dead",
    "died": "dead",
    "dead": "killed",
    "injured": "hurt",
    "hurt": "injured",
    "people": "persons",
    "residents": "locals",
    "destroyed": "wrecked",
    "damaged": "hit",
    "homes": "houses",
    "houses": "homes",
    "evacuated": "moved",
    "rescued": "saved",
    "hospital": "clinic",
    "officials": "authorities",
    "authorities": "officials",
    "police": "cops",
    "struck": "hit",
    "hit": "struck",
    "attack": "assault",
    "fled": "left",
    "storm": "cyclone",
    "cyclone": "storm",
    "flooding": "floods",
    "floods": "flooding",
    "massive": "huge",
    "huge": "massive",
    "thousands": "many",
    "said": "stated",
    "stated": "said",
    "reported": "said",
    "children": "kids",
}

GAZETTEER = frozenset(
    [
        "pakistan", "peshawar", "india", "bangladesh", "dhaka", "puri", "nepal", "kathmandu",
        "haiti", "japan", "chile", "mexico", "indonesia", "jakarta", "odisha", "kerala",
        "mumbai", "chennai", "manila", "philippines", "taliban", "la trobe valley",
        "east coast", "cyclone fani", "red cross",
    ]
)

DEFAULT_HASHTAGS = ("#breaking", "#news", "#update", "#prayfor", "#disaster", "#alert")


@dataclass
class CorruptionSpec:
    spell_p: float = 0.15
    ne_hashtag_p: float = 0.15
    random_hashtag_p: float = 0.15
    hashtag_pool: list[str] = field(default_factory=lambda: list(DEFAULT_HASHTAGS))
    seed: int = 0
    synonym_p: float = 0.2
    function_drop_p: float = 0.1

    def __post_init__(self):
        for name in ("spell_p", "ne_hashtag_p", "random_hashtag_p", "synonym_p", "function_drop_p"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if self.random_hashtag_p > 0 and not self.hashtag_pool:
            raise ValueError("hashtag_pool must be non-empty when random_hashtag_p > 0")

    @classmethod
    def identity(cls) -> CorruptionSpec:
        return cls(0.0, 0.0, 0.0, [], synonym_p=0.0, function_drop_p=0.0)


def _rng(seed) -> random.Random:
    return seed if isinstance(seed, random.Random) else random.Random(seed)


# ---------------------------------------------------------------- step 1


def load_paraphrase_table(path) -> dict[str, str]:
    """Tab-separated ``original<TAB>paraphrase`` lines, e.g. round-trip MT output."""
    table = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected original<TAB>paraphrase")
        table[parts[0].strip()] = parts[1].strip()
    return table


def paraphrase(sentence: str, seed=None, synonym_p: float = 0.2, drop_p: float = 0.1,
               lexicon: dict[str, str] | None = None, table: dict[str, str] | None = None) -> str:
    """Noisy meaning-preserving rewrite.

    An entry in ``table`` wins outright; otherwise content words are swapped
    for lexicon synonyms and function words are dropped at random.
    """
    if table and sentence.strip() in table:
        return table[sentence.strip()]
    rng = _rng(seed)
    lexicon = SYNONYMS if lexicon is None else lexicon
    out = []
    for word in sentence.split():
        low = word.lower()
        if low in FUNCTION_WORDS:
            if rng.random() < drop_p:
                continue
            out.append(word)
        elif low in lexicon and rng.random() < synonym_p:
            out.append(lexicon[low])
        else:
            out.append(word)
    return " ".join(out) if out else sentence


# ---------------------------------------------------------------- step 2


def corrupt_word(word: str, mode: str, rng: random.Random) -> str:
    if mode == "swap":
        i = rng.randrange(len(word) - 1)
        return word[:i] + word[i + 1] + word[i] + word[i + 2:]
    if mode == "drop":
        i = rng.randrange(len(word))
        return word[:i] + word[i + 1:]
    if mode == "devowel":
        return "".join(c for c in word if c not in VOWELS)
    raise ValueError(f"unknown spelling mode {mode!r}")


def spell_noise_flagged(word: str, seed=None, spell_p: float = 0.15) -> tuple[str, bool]:
    """Like :func:`spell_noise` but also reports whether the word was selected."""
    rng = _rng(seed)
    if not word.isalpha() or rng.random() >= spell_p:
        return word, False
    modes = ("swap", "drop", "devowel") if len(word) > 1 else ("devowel",)
    out = corrupt_word(word, rng.choice(modes), rng)
    return (out if out else word), True


def spell_noise(word: str, seed=None, spell_p: float = 0.15) -> str:
    """With probability ``spell_p`` swap two adjacent characters, drop one, or strip vowels.

    Results that would be empty keep the original word.
    """
    return spell_noise_flagged(word, seed, spell_p)[0]


# ---------------------------------------------------------------- step 3


def find_entities(tokens: list[str], gazetteer=GAZETTEER) -> list[tuple[int, int]]:
    """(start, end) spans: longest gazetteer match first, then runs of
    title-case tokens that are not sentence-initial."""
    lowered = [t.lower() for t in tokens]
    max_words = max((len(g.split()) for g in gazetteer), default=1)
    spans, i = [], 0
    while i < len(tokens):
        hit = None
        for n in range(min(max_words, len(tokens) - i), 0, -1):
            if " ".join(lowered[i:i + n]) in gazetteer:
                hit = (i, i + n)
                break
        if hit is None and i > 0 and tokens[i][:1].isupper() and tokens[i].isalpha():
            j = i + 1
            while j < len(tokens) and tokens[j][:1].isupper() and tokens[j].isalpha():
                j += 1
            hit = (i, j)
        if hit:
            spans.append(hit)
            i = hit[1]
        else:
            i += 1
    return spans


def hashtag_entities_counted(sentence: str, seed=None, p: float = 0.15,
                             gazetteer=GAZETTEER) -> tuple[str, int, int]:
    """Returns (sentence, entities found, entities hashtagged)."""
    rng = _rng(seed)
    tokens = sentence.split()
    spans = find_entities(tokens, gazetteer)
    out, prev, tagged = [], 0, 0
    for start, end in spans:
        out.extend(tokens[prev:start])
        if rng.random() < p:
            out.append("#" + "".join(tokens[start:end]))
            tagged += 1
        else:
            out.extend(tokens[start:end])
        prev = end
    out.extend(tokens[prev:])
    return " ".join(out), len(spans), tagged


def hashtag_entities(sentence: str, seed=None, p: float = 0.15, gazetteer=GAZETTEER) -> str:
    return hashtag_entities_counted(sentence, seed, p, gazetteer)[0]


def inject_random_hashtag(sentence: str, pool, seed=None, p: float = 0.15) -> str:
    rng = _rng(seed)
    if not pool or rng.random() >= p:
        return sentence
    tag = rng.choice(list(pool))
    return f"{tag} {sentence}" if rng.random() < 0.5 else f"{sentence} {tag}"


def build_hashtag_pool(tweets, top: int = 100) -> list[str]:
    counts = Counter(tok for t in tweets for tok in t.split() if tok.startswith("#") and len(tok) > 1)
    return [tag for tag, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]]


# ---------------------------------------------------------------- H


@dataclass
class CorruptionTally:
    """Per-stage event counts; rates are hits over opportunities."""
    sentences: int = 0
    injected: int = 0
    words: int = 0
    spelled: int = 0
    entities: int = 0
    tagged: int = 0

    def __iadd__(self, other: CorruptionTally) -> CorruptionTally:
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    def rates(self) -> dict[str, float]:
        return {"spell": self.spelled / max(self.words, 1),
                "entity_hashtag": self.tagged / max(self.entities, 1),
                "random_hashtag": self.injected / max(self.sentences, 1)}


class Corruptor:
    """The full H pipeline with an optional external paraphrase table."""

    def __init__(self, spec: CorruptionSpec | None = None, paraphrases: dict[str, str] | None = None,
                 gazetteer=GAZETTEER, lexicon: dict[str, str] | None = None):
        self.spec = spec or CorruptionSpec()
        self.paraphrases = paraphrases or {}
        self.gazetteer = gazetteer
        self.lexicon = SYNONYMS if lexicon is None else lexicon

    def __call__(self, sentence: str, seed=0) -> str:
        return self.trace(sentence, seed)[0]

    def trace(self, sentence: str, seed=0) -> tuple[str, CorruptionTally]:
        """Corrupt one sentence and count what each stage did to it."""
        s = self.spec
        rng = random.Random(f"{s.seed}:{seed}:{sentence}")
        tally = CorruptionTally()
        text = paraphrase(sentence, rng, s.synonym_p, s.function_drop_p, self.lexicon, self.paraphrases)
        words = []
        for w in text.split():
            out, hit = spell_noise_flagged(w, rng, s.spell_p)
            tally.words += w.isalpha()
            tally.spelled += hit
            words.append(out)
        text, found, tagged = hashtag_entities_counted(" ".join(words), rng, s.ne_hashtag_p, self.gazetteer)
        tally.entities += found
        tally.tagged += tagged
        out = inject_random_hashtag(text, s.hashtag_pool, rng, s.random_hashtag_p)
        tally.sentences += 1
        tally.injected += out != text
        return out, tally


def corrupt_H(news_sentence: str, spec: CorruptionSpec, seed=0) -> str:
    return Corruptor(spec)(news_sentence, seed)


def corrupt_lines(lines, corruptor: Corruptor) -> list[tuple[str, str]]:
    """(synthetic tweet, original news) pairs, seeded by line index."""
    return [(corruptor(line, i), line) for i, line in enumerate(lines)]


class BatchCorruptor:
    """Adapter used by the L_syn objective: corrupts the text behind a batch."""

    def __init__(self, vocab, corruptor: Corruptor, max_len: int, seed: int = 0):
        self.vocab = vocab
        self.corruptor = corruptor
        self.max_len = max_len
        self.calls = 0
        self.seed = seed

    def __call__(self, batch):
        from .batch import pad_batch

        self.calls += 1
        rows = []
        for i, row in enumerate(batch.rows()):
            text = self.vocab.decode(row[1:-1])
            ids = self.vocab.encode(self.corruptor(text, f"{self.seed}:{self.calls}:{i}"))
            # hashtag injection can lengthen a sentence past the model window
            rows.append(ids[: self.max_len - 2] or row[1:2])
        return pad_batch(rows, batch.styles.tolist())
