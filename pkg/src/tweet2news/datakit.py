"""Corpus engineering: in-domain filtering, topic clustering, streams and batches."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .batch import Batch, pad_batch

_PUNCT = re.compile(r"[^\w#@']+")

DISASTER_KEYWORDS = (
    "flood", "floods", "flooding", "cyclone", "storm", "earthquake", "quake", "tsunami",
    "fire", "wildfire", "landslide", "killed", "dead", "injured", "evacuated", "rescue",
    "attack", "explosion", "bomb", "hurricane", "typhoon", "victims", "damage", "disaster",
)


def tfidf_tokens(doc: str) -> list[str]:
    """Lowercased whitespace tokens with surrounding punctuation stripped."""
    out = []
    for tok in doc.lower().split():
        tok = _PUNCT.sub("", tok).strip("'")
        if tok:
            out.append(tok)
    return out


@dataclass
class TfidfModel:
    index: dict[str, int]
    idf: np.ndarray
    n_docs: int

    def transform(self, doc: str) -> dict[int, float]:
        return tfidf_transform(self, doc)


def tfidf_fit(corpus) -> TfidfModel:
    """idf(t) = ln(N / (df(t) + 1)) + 1, which stays positive for every df <= N."""
    docs = [set(tfidf_tokens(d)) for d in corpus]
    if not docs:
        raise ValueError("tfidf_fit: empty corpus")
    df = Counter(t for d in docs for t in d)
    terms = sorted(df)
    n = len(docs)
    idf = np.array([math.log(n / (df[t] + 1)) + 1.0 for t in terms])
    return TfidfModel({t: i for i, t in enumerate(terms)}, idf, n)


def tfidf_transform(model: TfidfModel, doc: str) -> dict[int, float]:
    """Sparse L2-normalized vector {term index: weight}; unseen terms are ignored."""
    tf = Counter(model.index[t] for t in tfidf_tokens(doc) if t in model.index)
    vec = {i: c * model.idf[i] for i, c in sorted(tf.items())}
    norm = math.sqrt(sum(w * w for w in vec.values()))
    return {i: w / norm for i, w in vec.items()} if norm > 0 else {}


def cosine(u: dict[int, float], v: dict[int, float]) -> float:
    if len(u) > len(v):
        u, v = v, u
    dot = sum(w * v.get(i, 0.0) for i, w in u.items())
    nu = math.sqrt(sum(w * w for w in u.values()))
    nv = math.sqrt(sum(w * w for w in v.values()))
    if nu == 0 or nv == 0:
        return 0.0
    return max(-1.0, min(1.0, dot / (nu * nv)))


def filter_by_similarity(candidates, references, threshold: float = 0.2,
                         model: TfidfModel | None = None) -> list[int]:
    """Indices of candidates whose best cosine against any reference is >= threshold.

    The TF-IDF model is fit on candidates plus references unless supplied.
    """
    candidates, references = list(candidates), list(references)
    model = model or tfidf_fit(candidates + references)
    refs = [tfidf_transform(model, r) for r in references]
    keep = []
    for i, doc in enumerate(candidates):
        vec = tfidf_transform(model, doc)
        best = max((cosine(vec, r) for r in refs), default=0.0)
        if best >= threshold:
            keep.append(i)
    return keep


def keyword_filter(docs, keywords=DISASTER_KEYWORDS) -> list[int]:
    """Stand-in domain classifier: keep documents mentioning any keyword."""
    kw = set(keywords)
    return [i for i, d in enumerate(docs) if kw.intersection(tfidf_tokens(d))]


def dense_matrix(model: TfidfModel, docs) -> np.ndarray:
    out = np.zeros((len(docs), len(model.index)))
    for r, d in enumerate(docs):
        for i, w in tfidf_transform(model, d).items():
            out[r, i] = w
    return out


# ---------------------------------------------------------------- clustering


@dataclass
class KmeansResult:
    centroids: np.ndarray
    assignment: np.ndarray
    inertia: float
    history: list[float]


def _kmeanspp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a centre
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers.append(points[idx])
        d2 = np.minimum(d2, ((points - points[idx]) ** 2).sum(axis=1))
    return np.array(centers, dtype=np.float64)


def _assign(points, centroids):
    d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    a = d2.argmin(axis=1)
    return a, float(d2[np.arange(len(points)), a].sum())


def _lloyd(points, k, rng, max_iter) -> KmeansResult:
    centroids = points.copy() if k == len(points) else _kmeanspp(points, k, rng)
    assignment, inertia = _assign(points, centroids)
    history = [inertia]
    for _ in range(max_iter):
        for c in range(k):
            members = points[assignment == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        new_assignment, inertia = _assign(points, centroids)
        history.append(inertia)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
    return KmeansResult(centroids, assignment, inertia, history)


def kmeans(points, k: int = 4, seed=0, max_iter: int = 100, n_init: int = 10) -> KmeansResult:
    """Lloyd iterations from k-means++ seeding; stops when assignments settle.

    ``n_init`` seedings are tried and the lowest-inertia run kept, since one
    seeding can leave two centres inside a single cluster.
    """
    points = np.asarray(points, dtype=np.float64)
    if k < 1 or k > len(points):
        raise ValueError(f"kmeans: k={k} invalid for {len(points)} points")
    if n_init < 1:
        raise ValueError("kmeans: n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(1 if k == len(points) else n_init):
        run = _lloyd(points, k, rng, max_iter)
        if best is None or run.inertia < best.inertia:
            best = run
    return best


def select_representatives(result: KmeansResult, points, texts) -> list[str]:
    """Per cluster, the member nearest its centroid; ties go to the lowest index."""
    points = np.asarray(points, dtype=np.float64)
    out = []
    for c in range(len(result.centroids)):
        members = np.flatnonzero(result.assignment == c)
        if not len(members):
            continue
        d2 = ((points[members] - result.centroids[c]) ** 2).sum(axis=1)
        out.append(texts[members[int(np.argmin(d2))]])
    return out


# ---------------------------------------------------------------- model inputs


def make_streams(corpus, vocab, stream_len: int = 256) -> list[list[int]]:
    """Contiguous windows over the concatenated corpus; the final partial window is dropped."""
    flat: list[int] = []
    for line in corpus:
        flat.extend(vocab.encode(line))
    return [flat[i:i + stream_len] for i in range(0, len(flat) - stream_len + 1, stream_len)]


def encode_sentences(sentences, vocab, max_len: int | None = None) -> list[list[int]]:
    """Encode, rejecting anything that would not fit once framed with BOS/EOS."""
    out = []
    for s in sentences:
        ids = vocab.encode(s)
        if not ids:
            raise ValueError(f"sentence encodes to nothing: {s!r}")
        if max_len is not None and len(ids) + 2 > max_len:
            raise ValueError(f"sentence of {len(ids)} tokens exceeds max_len {max_len}: {s[:60]!r}")
        out.append(ids)
    return out


def make_batches(sentences, vocab, size: int, style: int, max_len: int | None = None) -> list[Batch]:
    ids = encode_sentences(sentences, vocab, max_len)
    return [pad_batch(ids[i:i + size], style, max_len=max_len) for i in range(0, len(ids), size)]
