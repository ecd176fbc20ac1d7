# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled GRU recurrence and BPE segmentation; see ``_pykernels`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp
from libc.stdint cimport int64_t
from libcpp.unordered_map cimport unordered_map
from libcpp.vector cimport vector
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline double _sig(double x) nogil:
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


cdef inline void _gemm(char ta, char tb, int m, int n, int k, double *a, int lda,
                       double *b, int ldb, double *c, int ldc) noexcept nogil:
    # column-major C += op(A) op(B); callers pass row-major operands as their transposes
    cdef double one = 1.0
    dgemm(&ta, &tb, &m, &n, &k, &one, a, &lda, b, &ldb, &one, c, &ldc)


def gru_forward(xp_in, mask_in, wh_in, bh_in):
    cdef double[:, :, ::1] xp = np.ascontiguousarray(xp_in, dtype=np.float64)
    cdef double[:, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef double[::1] bh = np.ascontiguousarray(bh_in, dtype=np.float64)
    cdef Py_ssize_t B = xp.shape[0], S = xp.shape[1], H = xp.shape[2] // 3
    hs_arr = np.zeros((S + 1, B, H))
    r_arr = np.empty((S, B, H))
    u_arr = np.empty((S, B, H))
    n_arr = np.empty((S, B, H))
    hpn_arr = np.empty((S, B, H))
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] r = r_arr
    cdef double[:, :, ::1] u = u_arr
    cdef double[:, :, ::1] n = n_arr
    cdef double[:, :, ::1] hpn = hpn_arr
    cdef double[:, ::1] hp = np.empty((B, 3 * H))
    cdef Py_ssize_t t, b, j
    cdef double m, hnew
    if B == 0 or S == 0 or H == 0:
        return hs_arr[S].copy(), (hs_arr, r_arr, u_arr, n_arr, hpn_arr)
    with nogil:
        for t in range(S):
            for b in range(B):
                for j in range(3 * H):
                    hp[b, j] = bh[j]
            # hp (B, 3H) += h (B, H) @ wh (H, 3H)
            _gemm(b"N", b"N", <int>(3 * H), <int>B, <int>H, &wh[0, 0], <int>(3 * H),
                  &hs[t, 0, 0], <int>H, &hp[0, 0], <int>(3 * H))
            for b in range(B):
                m = mask[b, t]
                for j in range(H):
                    r[t, b, j] = _sig(xp[b, t, j] + hp[b, j])
                    u[t, b, j] = _sig(xp[b, t, H + j] + hp[b, H + j])
                    hpn[t, b, j] = hp[b, 2 * H + j]
                    n[t, b, j] = tanh(xp[b, t, 2 * H + j] + r[t, b, j] * hp[b, 2 * H + j])
                    hnew = (1.0 - u[t, b, j]) * n[t, b, j] + u[t, b, j] * hs[t, b, j]
                    hs[t + 1, b, j] = m * hnew + (1.0 - m) * hs[t, b, j]
    return hs_arr[S].copy(), (hs_arr, r_arr, u_arr, n_arr, hpn_arr)


def gru_backward(dh_last, mask_in, wh_in, cache):
    hs_arr, r_arr, u_arr, n_arr, hpn_arr = cache
    cdef double[:, :, ::1] hs = hs_arr
    cdef double[:, :, ::1] r = r_arr
    cdef double[:, :, ::1] u = u_arr
    cdef double[:, :, ::1] n = n_arr
    cdef double[:, :, ::1] hpn = hpn_arr
    cdef double[:, ::1] mask = np.ascontiguousarray(mask_in, dtype=np.float64)
    cdef double[:, ::1] wh = np.ascontiguousarray(wh_in, dtype=np.float64)
    cdef Py_ssize_t S = r.shape[0], B = r.shape[1], H = r.shape[2]
    dxp_arr = np.zeros((B, S, 3 * H))
    dwh_arr = np.zeros((H, 3 * H))
    dbh_arr = np.zeros(3 * H)
    cdef double[:, :, ::1] dxp = dxp_arr
    cdef double[:, ::1] dwh = dwh_arr
    cdef double[::1] dbh = dbh_arr
    cdef double[:, ::1] dh = np.array(dh_last, dtype=np.float64, order="C")
    cdef double[:, ::1] dhp = np.empty((B, 3 * H))
    cdef Py_ssize_t t, b, j
    cdef double m, dhnew, dn, du, dan, g
    if B == 0 or S == 0 or H == 0:
        return dxp_arr, dwh_arr, dbh_arr
    with nogil:
        for t in range(S - 1, -1, -1):
            for b in range(B):
                m = mask[b, t]
                for j in range(H):
                    g = dh[b, j]
                    dhnew = g * m
                    dn = dhnew * (1.0 - u[t, b, j])
                    du = dhnew * (hs[t, b, j] - n[t, b, j])
                    dan = dn * (1.0 - n[t, b, j] * n[t, b, j])
                    dhp[b, j] = dan * hpn[t, b, j] * r[t, b, j] * (1.0 - r[t, b, j])
                    dhp[b, H + j] = du * u[t, b, j] * (1.0 - u[t, b, j])
                    dhp[b, 2 * H + j] = dan * r[t, b, j]
                    dxp[b, t, j] = dhp[b, j]
                    dxp[b, t, H + j] = dhp[b, H + j]
                    dxp[b, t, 2 * H + j] = dan
                    dh[b, j] = g * (1.0 - m) + dhnew * u[t, b, j]
                for j in range(3 * H):
                    dbh[j] += dhp[b, j]
            # dwh (H, 3H) += h.T @ dhp ; dh (B, H) += dhp @ wh.T
            _gemm(b"N", b"T", <int>(3 * H), <int>H, <int>B, &dhp[0, 0], <int>(3 * H),
                  &hs[t, 0, 0], <int>H, &dwh[0, 0], <int>(3 * H))
            _gemm(b"T", b"N", <int>H, <int>B, <int>(3 * H), &wh[0, 0], <int>(3 * H),
                  &dhp[0, 0], <int>(3 * H), &dh[0, 0], <int>H)
    return dxp_arr, dwh_arr, dbh_arr


cdef inline int64_t _key(int64_t a, int64_t b) nogil:
    return (a << 32) | b


cdef class BpeMerger:
    """Applies ranked merges to a sequence of symbol ids."""
    cdef unordered_map[int64_t, int64_t] _rank
    cdef unordered_map[int64_t, int64_t] _new
    cdef Py_ssize_t _size

    def __init__(self, merges):
        cdef Py_ssize_t rank = 0
        for a, b, new in merges:
            self._rank[_key(a, b)] = rank
            self._new[_key(a, b)] = new
            rank += 1
        self._size = rank

    def __len__(self):
        return self._size

    def segment(self, symbols):
        cdef vector[int64_t] syms
        cdef vector[int64_t] out
        cdef int64_t best, rk, key, best_key
        cdef Py_ssize_t i, nsym
        for s in symbols:
            syms.push_back(s)
        while syms.size() > 1:
            best = -1
            best_key = 0
            nsym = syms.size()
            for i in range(nsym - 1):
                key = _key(syms[i], syms[i + 1])
                if self._rank.count(key):
                    rk = self._rank[key]
                    if best < 0 or rk < best:
                        best = rk
                        best_key = key
            if best < 0:
                break
            out.clear()
            i = 0
            while i < nsym:
                if i + 1 < nsym and _key(syms[i], syms[i + 1]) == best_key:
                    out.push_back(self._new[best_key])
                    i += 2
                else:
                    out.push_back(syms[i])
                    i += 1
            syms.swap(out)
        return [syms[i] for i in range(syms.size())]
