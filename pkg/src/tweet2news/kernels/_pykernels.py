"""Reference (numpy / pure Python) versions of the compiled kernels."""
from __future__ import annotations

import numpy as np


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def gru_forward(xp, mask, wh, bh):
    """Masked GRU recurrence from a zero state.

    ``xp`` is the precomputed input projection (B, S, 3H) with gate blocks
    ordered reset, update, candidate.  Masked steps carry the state through.
    Returns the final state (B, H) and a cache tuple for :func:`gru_backward`.
    """
    B, S, H3 = xp.shape
    H = H3 // 3
    hs = np.zeros((S + 1, B, H))
    r = np.empty((S, B, H))
    u = np.empty((S, B, H))
    n = np.empty((S, B, H))
    hpn = np.empty((S, B, H))
    h = hs[0]
    for t in range(S):
        hp = h @ wh + bh
        x = xp[:, t]
        r[t] = _sigmoid(x[:, :H] + hp[:, :H])
        u[t] = _sigmoid(x[:, H:2 * H] + hp[:, H:2 * H])
        hpn[t] = hp[:, 2 * H:]
        n[t] = np.tanh(x[:, 2 * H:] + r[t] * hpn[t])
        hnew = (1.0 - u[t]) * n[t] + u[t] * h
        m = mask[:, t, None]
        h = m * hnew + (1.0 - m) * h
        hs[t + 1] = h
    return h.copy(), (hs, r, u, n, hpn)


def gru_backward(dh_last, mask, wh, cache):
    hs, r, u, n, hpn = cache
    S, B, H = r.shape
    dxp = np.zeros((B, S, 3 * H))
    dwh = np.zeros_like(wh)
    dbh = np.zeros(3 * H)
    dh = dh_last.copy()
    for t in range(S - 1, -1, -1):
        m = mask[:, t, None]
        h = hs[t]
        dhnew = dh * m
        dprev = dh * (1.0 - m) + dhnew * u[t]
        dn = dhnew * (1.0 - u[t])
        du = dhnew * (h - n[t])
        dan = dn * (1.0 - n[t] * n[t])
        dar = dan * hpn[t] * r[t] * (1.0 - r[t])
        dau = du * u[t] * (1.0 - u[t])
        dhp = np.concatenate([dar, dau, dan * r[t]], axis=1)
        dxp[:, t] = np.concatenate([dar, dau, dan], axis=1)
        dwh += h.T @ dhp
        dbh += dhp.sum(axis=0)
        dh = dprev + dhp @ wh.T
    return dxp, dwh, dbh


class BpeMerger:
    """Applies ranked merges to a sequence of symbol ids."""

    def __init__(self, merges):
        self._table = {(a, b): (rank, new) for rank, (a, b, new) in enumerate(merges)}

    def __len__(self):
        return len(self._table)

    def segment(self, symbols):
        syms = list(symbols)
        table = self._table
        while len(syms) > 1:
            best = None
            for i in range(len(syms) - 1):
                hit = table.get((syms[i], syms[i + 1]))
                if hit is not None and (best is None or hit[0] < best[0]):
                    best = hit
            if best is None:
                break
            rank, new = best
            out = []
            i = 0
            while i < len(syms):
                if i + 1 < len(syms) and table.get((syms[i], syms[i + 1]), (None,))[0] == rank:
                    out.append(new)
                    i += 2
                else:
                    out.append(syms[i])
                    i += 1
            syms = out
        return syms
