from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tokenizer import BOS, EOS, PAD


@dataclass
class Batch:
    """Right-padded token ids, true lengths, and one style tag per row."""

    ids: np.ndarray
    lengths: np.ndarray
    styles: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.ids.shape[1])[None, :] < self.lengths[:, None]

    def __len__(self) -> int:
        return self.ids.shape[0]

    def rows(self) -> list[list[int]]:
        return [row[:n].tolist() for row, n in zip(self.ids, self.lengths)]


def pad_batch(seqs: list[list[int]], style: int | list[int] = 0, frame: bool = True,
              max_len: int | None = None) -> Batch:
    """Pad id sequences into a Batch, optionally framing each with BOS/EOS.

    Sequences longer than ``max_len`` (after framing) are rejected rather than cut.
    """
    if not seqs:
        raise ValueError("pad_batch: no sequences")
    if frame:
        seqs = [[BOS, *s, EOS] for s in seqs]
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    if max_len is not None and lengths.max() > max_len:
        raise ValueError(f"pad_batch: sequence of length {lengths.max()} exceeds max_len {max_len}")
    ids = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    styles = np.broadcast_to(np.asarray(style, dtype=np.int64), (len(seqs),)).copy()
    return Batch(ids, lengths, styles)
