"""(sentence, propositions) records and the merge-training pairs built from them.

Proposition extraction proper is out of scope: records either come from the
template generator below, whose propositions are known by construction, or
are ingested from an external extractor's tab-separated output.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .batch import pad_batch
from .corruptor import SYNONYMS
from .model import PROPOSITIONS, SENTENCE

log = logging.getLogger(__name__)

MAX_SOURCE_TOKENS = 512
JOINER = ". "
CONNECTIVES = frozenset({"after", "and", "which"})


@dataclass
class PropositionRecord:
    sentence: str
    propositions: list[str]
    source: str = "generated"
    ast: object | None = field(default=None, repr=False, compare=False)


# ---------------------------------------------------------------- templates


SUBJECTS = [
    "the police", "a young woman", "the army", "rescue workers", "local officials",
    "the fire brigade", "two fishermen", "the villagers", "the navy", "a family",
]
ACTIONS = [
    ("has been airlifted", "to hospital"), ("evacuated", "the village"),
    ("rescued", "ten people"), ("reported", "heavy damage"), ("searched", "the area"),
    ("closed", "the main road"), ("found", "two bodies"), ("moved", "to a shelter"),
    ("blocked", "the bridge"), ("warned", "the residents"),
]
PLACES = [
    "in the la trobe valley", "in peshawar", "near the coast", "in dhaka",
    "on friday", "during the storm", "in eastern india", "across the region",
]
EVENTS = [
    ("the river", "flooded", "the town"), ("the storm", "hit", "the coast"),
    ("a bomb", "exploded", "near the market"), ("her car", "veered", "into trees"),
    ("the dam", "burst", "overnight"), ("the quake", "struck", "the city"),
    ("gunmen", "stormed", "a school"), ("a landslide", "buried", "the road"),
]
KINDS = ("pp", "after", "and", "which", "pp_after")


@dataclass(frozen=True)
class Clause:
    subject: str
    relation: str
    args: tuple[str, ...]

    def text(self) -> str:
        return " ".join([self.subject, self.relation, *self.args])


@dataclass(frozen=True)
class Template:
    """Composition tree for one generated sentence.

    ``main`` always exists; ``place`` attaches a prepositional phrase to it,
    ``event`` an ``after`` clause, ``second`` a conjoined or relative clause
    sharing the main subject.  ``redundant`` is (proposition index, word
    index, insertion slot) for the synonym-duplicate, if any.
    """

    kind: str
    main: Clause
    place: str | None = None
    event: Clause | None = None
    second: Clause | None = None
    redundant: tuple[int, int, int] | None = None

    def render(self) -> str:
        m = self.main
        if self.kind == "which":
            s = self.second
            return f"{m.subject}, which {s.relation} {' '.join(s.args)}, {m.relation} {' '.join(m.args)}"
        words = [m.text()]
        if self.place:
            words.append(self.place)
        if self.event:
            words.append("after " + self.event.text())
        if self.kind == "and":
            words.append(f"and {self.second.relation} {' '.join(self.second.args)}")
        return " ".join(words)

    def base_propositions(self) -> list[str]:
        m = self.main
        props = [m.text()]
        if self.second:
            props.append(self.second.text())
        if self.place:
            props.append(f"{m.subject} {m.relation} {self.place}")
        if self.event:
            props.append(f"{m.subject} {m.relation} after {self.event.text()}")
            props.append(self.event.text())
        return props

    def propositions(self) -> list[str]:
        props = self.base_propositions()
        if self.redundant is not None:
            idx, word, slot = self.redundant
            words = props[idx].split()
            words[word] = SYNONYMS[words[word]]
            props.insert(slot, " ".join(words))
        return props


def _synonym_slots(text: str) -> list[int]:
    return [i for i, w in enumerate(text.split()) if w in SYNONYMS]


def sample_template(rng: random.Random, redundancy_p: float = 0.3) -> Template:
    kind = rng.choice(KINDS)
    subj = rng.choice(SUBJECTS)
    rel, arg = rng.choice(ACTIONS)
    main = Clause(subj, rel, (arg,))
    place = event = second = None
    if kind in ("pp", "pp_after"):
        place = rng.choice(PLACES)
    if kind in ("after", "pp_after"):
        e_subj, e_rel, e_arg = rng.choice(EVENTS)
        event = Clause(e_subj, e_rel, (e_arg,))
    if kind in ("and", "which"):
        rel2, arg2 = rng.choice([a for a in ACTIONS if a[0] != rel])
        second = Clause(subj, rel2, (arg2,))
    tpl = Template(kind, main, place, event, second)
    if rng.random() < redundancy_p:
        base = tpl.base_propositions()
        candidates = [(i, w) for i, p in enumerate(base) for w in _synonym_slots(p)]
        if candidates:
            i, w = rng.choice(candidates)
            tpl = Template(kind, main, place, event, second, (i, w, rng.randrange(len(base) + 1)))
    return tpl


def generate_templated(n: int, seed=0, redundancy_p: float = 0.3) -> list[PropositionRecord]:
    if n <= 0:
        raise ValueError("generate_templated: n must be positive")
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        tpl = sample_template(rng, redundancy_p)
        out.append(PropositionRecord(tpl.render(), tpl.propositions(), "generated", tpl))
    return out


# ---------------------------------------------------------------- clause files


@dataclass
class IngestStats:
    dropped: int = 0
    malformed: list[tuple[int, str]] = field(default_factory=list)


def ingest_clause_file(path, stats: IngestStats | None = None) -> list[PropositionRecord]:
    """Read ``sentence<TAB>prop1<TAB>prop2...`` lines.

    Records with fewer than two propositions are dropped and counted;
    malformed lines are reported with their line numbers and skipped.
    """
    stats = stats if stats is not None else IngestStats()
    records = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("\t")]
        if not fields[0] or any(not f for f in fields[1:]):
            stats.malformed.append((lineno, "empty field"))
            log.warning("%s:%d: empty field", path, lineno)
            continue
        props = [p.rstrip(".").rstrip() for p in fields[1:]]
        if len(props) < 2:
            stats.dropped += 1
            continue
        records.append(PropositionRecord(fields[0], props, "ingested"))
    if stats.dropped:
        log.info("%s: dropped %d records with fewer than two propositions", path, stats.dropped)
    return records


def write_clause_file(records, path) -> None:
    lines = ["\t".join([r.sentence, *r.propositions]) for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


# ---------------------------------------------------------------- pairs


def _segment(prop: str) -> str:
    return prop.rstrip().rstrip(".").rstrip() + "."


def join_propositions(props) -> str:
    """P(y): propositions joined by '. ' with a terminal period."""
    return " ".join(_segment(p) for p in props)


@dataclass
class MergePair:
    source: str
    target: str
    source_ids: list[int]
    target_ids: list[int]
    n_propositions: int


def build_merge_pairs(records, vocab, max_tokens: int = MAX_SOURCE_TOKENS) -> list[MergePair]:
    """Source/target pairs for the merge objective.

    Sources are cut at the last proposition boundary that fits in
    ``max_tokens``; pairs left with fewer than two propositions are dropped.
    """
    pairs = []
    for rec in records:
        kept, ids = [], []
        for prop in rec.propositions:
            seg = vocab.encode(_segment(prop))
            if len(ids) + len(seg) > max_tokens:
                break
            kept.append(prop)
            ids.extend(seg)
        if len(kept) < 2:
            continue
        pairs.append(MergePair(join_propositions(kept), rec.sentence, ids, vocab.encode(rec.sentence), len(kept)))
    return pairs


def write_pair_file(pairs, path) -> None:
    Path(path).write_text("".join(f"{p.source}\t{p.target}\n" for p in pairs), encoding="utf-8")


def read_pair_file(path) -> list[tuple[str, str]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected source<TAB>target")
        out.append((parts[0], parts[1]))
    return out


def count_source_propositions(source: str) -> int:
    return len([s for s in source.strip().split(JOINER) if s.strip(" .")])


@dataclass
class ScanReport:
    total: int
    too_few: list[int]
    too_long: list[int]

    @property
    def ok(self) -> bool:
        return not self.too_few and not self.too_long


def scan_pairs(pairs: list[tuple[str, str]], vocab, max_tokens: int = MAX_SOURCE_TOKENS) -> ScanReport:
    """Check every pair against the two data rules (>= 2 propositions, <= max_tokens)."""
    few, long = [], []
    for i, (src, _) in enumerate(pairs):
        if count_source_propositions(src) < 2:
            few.append(i)
        if len(vocab.encode(src)) > max_tokens:
            long.append(i)
    return ScanReport(len(pairs), few, long)


# ---------------------------------------------------------------- inference


def merge_two(model, vocab, first: str, second: str) -> str:
    """Fuse two sentences; output is capped at their combined token count."""
    from . import numerics as nx

    ids = vocab.encode(join_propositions([first, second]))
    budget = len(vocab.encode(first)) + len(vocab.encode(second))
    ids = ids[: model.cfg.max_len - 2]
    batch = pad_batch([ids], PROPOSITIONS)
    with nx.no_grad():
        out = model.generate(model.encode(batch, PROPOSITIONS), SENTENCE,
                             max_new=max(1, min(budget, model.cfg.max_len - 1)))
    return vocab.decode(out[0])


def pairwise_merge_inference(model, vocab, sentences: list[str]) -> str:
    """Merge sentences two at a time in input order: (1,2), (3,4), ...

    A trailing odd sentence is appended unchanged; fewer than two sentences
    pass through.
    """
    if len(sentences) < 2:
        return " ".join(sentences)
    parts = []
    for i in range(0, len(sentences) - 1, 2):
        parts.append(merge_two(model, vocab, sentences[i], sentences[i + 1]))
    if len(sentences) % 2:
        parts.append(sentences[-1])
    return " ".join(parts)


def token_f1(hypothesis: str, reference: str) -> float:
    """Bag-of-tokens F1 between two whitespace-tokenized strings."""
    from collections import Counter

    h, r = Counter(hypothesis.split()), Counter(reference.split())
    common = sum((h & r).values())
    if common == 0:
        return 0.0
    p, rc = common / sum(h.values()), common / sum(r.values())
    return 2 * p * rc / (p + rc)


def split_heldout(records, n_heldout: int, seed=0):
    idx = np.random.default_rng(seed).permutation(len(records))
    held = [records[i] for i in idx[:n_heldout]]
    train = [records[i] for i in idx[n_heldout:]]
    return train, held
