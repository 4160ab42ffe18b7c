# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Must stay bit-for-bit equivalent to ``_fallback``."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def dup_isolated(const double[:, :, ::1] u, const double[::1] p_fail, bint discard,
                 long harq_rtt, long report_delay):
    cdef Py_ssize_t n_nodes = u.shape[0], n_pk = u.shape[1], max_tx = u.shape[2]
    cdef Py_ssize_t k, n, j, jstar, f, cap, total
    cdef long extra = (report_delay - 1) // harq_rtt if report_delay >= 1 else 0
    latency_arr = np.empty(n_pk, dtype=np.int64)
    tx_arr = np.empty(n_pk, dtype=np.int64)
    first_arr = np.empty(n_nodes, dtype=np.int64)
    cdef cnp.int64_t[::1] latency = latency_arr
    cdef cnp.int64_t[::1] tx = tx_arr
    cdef cnp.int64_t[::1] first = first_arr
    for k in range(n_pk):
        jstar = max_tx
        for n in range(n_nodes):
            f = max_tx
            for j in range(max_tx):
                if u[n, k, j] >= p_fail[n]:
                    f = j
                    break
            first[n] = f
            if f < jstar:
                jstar = f
        total = 0
        if jstar == max_tx:
            latency[k] = -1
            total = n_nodes * max_tx
        else:
            latency[k] = 1 + jstar * harq_rtt
            cap = jstar + 1 + extra if discard else max_tx
            if cap > max_tx:
                cap = max_tx
            for n in range(n_nodes):
                f = first[n] + 1
                if f > max_tx:
                    f = max_tx
                total += f if f < cap else cap
        tx[k] = total
    return latency_arr, tx_arr


def first_success(const double[:, ::1] g_own, const double[:, ::1] g_other, const double[:, ::1] g_int,
                  const signed char[::1] mode, const double[::1] icoef, double snr_mean, double target,
                  long offset, cnp.int64_t[::1] out):
    cdef Py_ssize_t n_rows = g_own.shape[0], block = g_own.shape[1]
    cdef Py_ssize_t r, j
    cdef double sig
    cdef long unresolved = 0
    for r in range(n_rows):
        if out[r] >= 0 or mode[r] < 0:
            continue
        for j in range(block):
            if mode[r] == 0:
                sig = g_own[r, j]
            elif mode[r] == 1:
                sig = g_own[r, j] if g_own[r, j] >= g_other[r, j] else g_other[r, j]
            else:
                sig = g_own[r, j] + g_other[r, j]
            if snr_mean * sig >= target * (1.0 + icoef[r] * g_int[r, j]):
                out[r] = offset + j
                break
        if out[r] < 0:
            unresolved += 1
    return unresolved
