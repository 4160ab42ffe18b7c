"""NumPy implementations of the compiled kernels, used when ``_core`` is unavailable."""
from __future__ import annotations

import numpy as np


def _first_true(mask: np.ndarray) -> np.ndarray:
    """Index of the first True along the last axis, or the axis length if none."""
    hit = mask.any(axis=-1)
    idx = mask.argmax(axis=-1)
    return np.where(hit, idx, mask.shape[-1]).astype(np.int64)


def dup_isolated(u, p_fail, discard, harq_rtt, report_delay):
    u = np.asarray(u, dtype=float)
    n_nodes, n_pk, max_tx = u.shape
    p = np.asarray(p_fail, dtype=float)[:, None, None]
    first = _first_true(u >= p)
    jstar = first.min(axis=0)
    dropped = jstar == max_tx
    extra = (report_delay - 1) // harq_rtt if report_delay >= 1 else 0
    per_node = np.minimum(first + 1, max_tx)
    if discard:
        cap = np.minimum(jstar + 1 + extra, max_tx)
        per_node = np.minimum(per_node, cap[None, :])
    tx = per_node.sum(axis=0).astype(np.int64)
    tx[dropped] = n_nodes * max_tx
    latency = np.where(dropped, -1, 1 + jstar * harq_rtt).astype(np.int64)
    return latency, tx


def first_success(g_own, g_other, g_int, mode, icoef, snr_mean, target, offset, out):
    mode = np.asarray(mode)
    pending = (out < 0) & (mode >= 0)
    rows = np.nonzero(pending)[0]
    if rows.size == 0:
        return 0
    a, b, gi = g_own[rows], g_other[rows], g_int[rows]
    m = mode[rows][:, None]
    sig = np.where(m == 0, a, np.where(m == 1, np.where(a >= b, a, b), a + b))
    ok = snr_mean * sig >= target * (1.0 + icoef[rows][:, None] * gi)
    first = _first_true(ok)
    hit = first < a.shape[1]
    out[rows[hit]] = offset + first[hit]
    return int((~hit).sum())
