"""Streaming statistics shared by every experiment.

:class:`EmpiricalDistribution` keeps exact samples up to ``exact_cap`` and then
switches to a fixed-count histogram whose range doubles whenever a sample
falls outside it.  Positive infinities (dropped packets, undelivered tasks)
are counted separately so they participate in tail queries without breaking
the histogram grid.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_EXACT_CAP = 10_000_000
DEFAULT_BINS = 10_000


class EmptyDistributionError(ValueError):
    pass


@dataclass(frozen=True)
class OutageResult:
    value: float
    reliable: bool
    target_prob: float
    count: int

    def __float__(self):
        return float(self.value)


class _Histogram:
    """Equal-width bins on ``[lo, lo + width * n)``; counts are floats after rebinning."""

    def __init__(self, lo: float, width: float, n_bins: int):
        self.lo = float(lo)
        self.width = float(width)
        self.counts = np.zeros(n_bins, dtype=float)

    @classmethod
    def covering(cls, lo: float, hi: float, n_bins: int) -> "_Histogram":
        width = (hi - lo) / n_bins if hi > lo else max(abs(lo), 1.0) * 1e-9
        # grow slightly so ``hi`` itself lands inside the last bin
        return cls(lo, width * (1 + 1e-9) + 1e-300, n_bins)

    @property
    def n_bins(self):
        return self.counts.size

    @property
    def hi(self):
        return self.lo + self.width * self.n_bins

    def copy(self):
        h = _Histogram(self.lo, self.width, self.n_bins)
        h.counts = self.counts.copy()
        return h

    def _double_up(self):
        c = self.counts
        merged = c[0::2] + c[1::2]
        self.counts = np.concatenate([merged, np.zeros(self.n_bins - merged.size)])
        self.width *= 2

    def _double_down(self):
        c = self.counts
        merged = c[0::2] + c[1::2]
        self.counts = np.concatenate([np.zeros(self.n_bins - merged.size), merged])
        self.lo -= self.width * self.n_bins
        self.width *= 2

    def add(self, values: np.ndarray):
        if values.size == 0:
            return
        vmin, vmax = float(values.min()), float(values.max())
        while vmin < self.lo:
            self._double_down()
        while vmax >= self.hi:
            self._double_up()
        idx = np.floor((values - self.lo) / self.width).astype(np.int64)
        np.clip(idx, 0, self.n_bins - 1, out=idx)
        self.counts += np.bincount(idx, minlength=self.n_bins)

    def rebinned(self, lo: float, width: float, n_bins: int) -> np.ndarray:
        """Counts redistributed onto another grid assuming uniform mass within bins."""
        edges = self.lo + self.width * np.arange(self.n_bins + 1)
        new_edges = lo + width * np.arange(n_bins + 1)
        cum = np.concatenate([[0.0], np.cumsum(self.counts)])
        cum_at = np.interp(new_edges, edges, cum)
        return np.diff(cum_at)

    def total(self):
        return float(self.counts.sum())


class EmpiricalDistribution:
    def __init__(self, exact_cap: int = DEFAULT_EXACT_CAP, n_bins: int = DEFAULT_BINS):
        if n_bins < 2 or n_bins % 2:
            raise ValueError("n_bins must be an even number >= 2")
        self.exact_cap = int(exact_cap)
        self.n_bins = int(n_bins)
        self._chunks: list[np.ndarray] = []
        self._n_exact = 0
        self._sorted: np.ndarray | None = None
        self._hist: _Histogram | None = None
        self.n_inf = 0
        self._sum = 0.0

    # -- accumulation ---------------------------------------------------
    @property
    def count(self) -> int:
        return self.n_finite + self.n_inf

    @property
    def n_finite(self) -> int:
        if self._hist is not None:
            return int(round(self._hist.total()))
        return self._n_exact

    @property
    def is_exact(self) -> bool:
        return self._hist is None

    def add(self, values):
        arr = np.atleast_1d(np.asarray(values, dtype=float))
        if np.isnan(arr).any():
            raise ValueError("NaN samples are not allowed")
        if np.isneginf(arr).any():
            raise ValueError("-inf samples are not allowed")
        inf = np.isposinf(arr)
        self.n_inf += int(inf.sum())
        arr = arr[~inf]
        if arr.size == 0:
            return self
        self._sum += float(arr.sum())
        if self._hist is None:
            self._chunks.append(arr.copy())
            self._n_exact += arr.size
            self._sorted = None
            if self._n_exact > self.exact_cap:
                self._to_histogram()
        else:
            self._hist.add(arr)
        return self

    extend = add

    def _to_histogram(self):
        data = self._values()
        self._hist = _Histogram.covering(float(data.min()), float(data.max()), self.n_bins)
        self._hist.add(data)
        self._chunks, self._sorted, self._n_exact = [], None, 0

    def _values(self) -> np.ndarray:
        if self._sorted is None:
            data = np.concatenate(self._chunks) if self._chunks else np.empty(0)
            data.sort(kind="stable")
            self._sorted = data
            self._chunks = [data]
        return self._sorted

    def histogram_copy(self) -> "EmpiricalDistribution":
        """A histogram-mode copy, regardless of the sample count."""
        out = EmpiricalDistribution(self.exact_cap, self.n_bins)
        out.n_inf, out._sum = self.n_inf, self._sum
        if self._hist is not None:
            out._hist = self._hist.copy()
        elif self._n_exact:
            data = self._values()
            out._hist = _Histogram.covering(float(data[0]), float(data[-1]), self.n_bins)
            out._hist.add(data)
        return out

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        """New distribution holding both sample multisets; symmetric in its arguments."""
        out = EmpiricalDistribution(max(self.exact_cap, other.exact_cap), max(self.n_bins, other.n_bins))
        out.n_inf = self.n_inf + other.n_inf
        out._sum = self._sum + other._sum
        if self._hist is None and other._hist is None and self._n_exact + other._n_exact <= out.exact_cap:
            parts = [d._values() for d in (self, other) if d._n_exact]
            if parts:
                merged = np.concatenate(parts)
                merged.sort(kind="stable")
                out._chunks, out._sorted, out._n_exact = [merged], merged, merged.size
            return out
        a, b = self.histogram_copy(), other.histogram_copy()
        grids = [h._hist for h in (a, b) if h._hist is not None]
        lo = min(g.lo for g in grids)
        hi = max(g.hi for g in grids)
        hist = _Histogram.covering(lo, hi, out.n_bins)
        hist.counts = sum(g.rebinned(hist.lo, hist.width, hist.n_bins) for g in grids)
        out._hist = hist
        return out

    # -- queries --------------------------------------------------------
    def _require(self):
        if self.count == 0:
            raise EmptyDistributionError("distribution has no samples")

    def mean(self) -> float:
        self._require()
        if self.n_inf:
            return math.inf
        return self._sum / self.n_finite

    def percentile(self, q: float) -> float:
        """Linear interpolation between order statistics (``numpy``'s default method)."""
        self._require()
        if not 0 <= q <= 100:
            raise ValueError("q must lie in [0, 100]")
        n, nf = self.count, self.n_finite
        rank = q / 100.0 * (n - 1)
        lo_i, hi_i = math.floor(rank), math.ceil(rank)
        if hi_i >= nf:
            return math.inf
        if self._hist is None:
            data = self._values()
            frac = rank - lo_i
            lo_v, hi_v = data[lo_i], data[hi_i]
            return float(lo_v + (hi_v - lo_v) * frac)
        return self._hist_value_at_rank(rank)

    def _hist_value_at_rank(self, rank: float) -> float:
        h = self._hist
        cum = np.cumsum(h.counts)
        b = int(np.searchsorted(cum, rank, side="right"))
        b = min(b, h.n_bins - 1)
        before = cum[b - 1] if b else 0.0
        inside = h.counts[b]
        frac = (rank - before) / inside if inside > 0 else 0.0
        return float(h.lo + h.width * (b + min(max(frac, 0.0), 1.0)))

    def ccdf_at(self, x: float) -> float:
        """Empirical P(X > x)."""
        self._require()
        n = self.count
        if self._hist is None:
            data = self._values()
            above = data.size - int(np.searchsorted(data, x, side="right"))
        else:
            h = self._hist
            pos = (x - h.lo) / h.width
            if pos < 0:
                above = h.total()
            elif pos >= h.n_bins:
                above = 0.0
            else:
                b = int(pos)
                above = float(h.counts[b + 1:].sum() + h.counts[b] * (1 - (pos - b)))
        return min(max((above + self.n_inf) / n, 0.0), 1.0)

    def outage_latency(self, target_prob: float) -> OutageResult:
        """Smallest sample value ``v`` with empirical P(X > v) <= ``target_prob``."""
        self._require()
        if not 0 < target_prob <= 1:
            raise ValueError("target_prob must lie in (0, 1]")
        n = self.count
        allowed = int(math.floor(target_prob * n * (1 + 1e-12)))
        idx = max(n - 1 - allowed, 0)
        if idx >= self.n_finite:
            value = math.inf
        elif self._hist is None:
            value = float(self._values()[idx])
        else:
            h = self._hist
            cum = np.cumsum(h.counts)
            b = int(np.searchsorted(cum, idx + 1 - 1e-9, side="left"))
            value = float(h.lo + h.width * (min(b, h.n_bins - 1) + 1))
        reliable = n >= 10.0 / target_prob * (1 - 1e-12)
        return OutageResult(value, reliable, target_prob, n)

    def ccdf_dump(self, points: Sequence[float] | None = None, max_points: int = 1000):
        """``[(x, P(X > x))]`` at the given abscissae or an automatic grid."""
        self._require()
        if points is None:
            if self._hist is None:
                data = self._values()
                uniq = np.unique(data)
                if uniq.size <= max_points:
                    points = uniq
                else:
                    points = np.unique(np.quantile(data, np.linspace(0, 1, max_points)))
            else:
                h = self._hist
                nz = np.nonzero(h.counts)[0]
                lo = h.lo + h.width * nz[0]
                hi = h.lo + h.width * (nz[-1] + 1)
                points = np.linspace(lo, hi, max_points)
        pts = np.sort(np.asarray(points, dtype=float))
        return [(float(x), self.ccdf_at(x)) for x in pts]

    def attained_values(self):
        """``(values, counts)`` of the exact store, finite samples only."""
        if self._hist is not None:
            raise ValueError("attained values are only tracked in exact mode")
        return np.unique(self._values(), return_counts=True)


class CounterSet:
    """Named non-negative monotone counters."""

    def __init__(self, initial: dict[str, int] | None = None):
        self._c: dict[str, int] = {}
        for k, v in (initial or {}).items():
            self.add(k, v)

    def add(self, name: str, n: int = 1):
        if n < 0:
            raise ValueError("counters never decrease")
        self._c[name] = self._c.get(name, 0) + int(n)

    def __getitem__(self, name):
        return self._c.get(name, 0)

    def as_dict(self):
        return {k: self._c[k] for k in sorted(self._c)}

    def merge(self, other: "CounterSet") -> "CounterSet":
        out = CounterSet(self._c)
        for k, v in other._c.items():
            out.add(k, v)
        return out


def jain_index(x) -> float:
    x = np.asarray(x, dtype=float)
    denom = x.size * np.sum(x * x)
    return float(np.sum(x) ** 2 / denom) if denom > 0 else 1.0


def format_value(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.12g}"
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    text = csv_text(header, rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload):
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return text
