"""PDCP duplication over multi-connectivity, with and without the UE duplication status report.

Three modes share one set of fading draws:

``SC``
    the serving (first) node of the duplication set transmits alone;
``MC``
    every node in the set transmits its copy with independent HARQ;
``MC_discard``
    as ``MC``, but the first successful decode of a flagged packet triggers a
    status report that lets the other nodes drop or stop retransmitting it.

Fading is i.i.d. Rayleigh per transmission.  The draw used by node ``n`` for
attempt ``j`` of packet ``seq`` is fixed by ``(seed, n, seq, j)`` alone, so the
discard feature never perturbs the channel seen by any other transmission.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .config import ConfigError, check, check_positive, check_prob
from .engine import Engine
from .metrics import CounterSet, EmpiricalDistribution
from .radio import LinkModel
from .rng import RngStream

MODES = ("SC", "MC", "MC_discard")
ARRIVALS = ("isolated", "poisson")
CHUNK_PACKETS = 1 << 15

PRIO_ARRIVAL, PRIO_REPORT, PRIO_FEEDBACK, PRIO_TX = 0, 1, 2, 3


@dataclass(frozen=True)
class DupstatConfig:
    mean_snr_db: float = 10.0
    target_snr_db: float = 0.0
    fading: str = "rayleigh"
    harq_rtt_slots: int = 4
    report_delay_slots: int = 1
    max_transmissions: int = 16
    packets: int = 1_000_000
    modes: tuple[str, ...] = MODES
    duplication_set: tuple[str, ...] = ("macro", "small")
    outage_target: float = 1e-5
    arrival: str = "isolated"
    arrival_rate: float = 0.05

    SAMPLE_FIELD = "packets"

    def validate(self):
        check(self.fading in ("rayleigh", "none"), "fading", f"unknown fading kind {self.fading!r}")
        check(math.isfinite(self.mean_snr_db), "mean_snr_db", "must be finite")
        check(math.isfinite(self.target_snr_db), "target_snr_db", "must be finite")
        check(self.harq_rtt_slots >= 1, "harq_rtt_slots", "must be >= 1")
        check(self.report_delay_slots >= 0, "report_delay_slots", "must be >= 0")
        check(1 <= self.max_transmissions <= 1024, "max_transmissions", "must lie in [1, 1024]")
        check(self.packets >= 1, "packets", "must be >= 1")
        check(len(self.modes) >= 1, "modes", "at least one mode required")
        for m in self.modes:
            check(m in MODES, "modes", f"unknown mode {m!r}")
        check(len(self.duplication_set) >= 2, "duplication_set", "needs at least two nodes")
        check(len(set(self.duplication_set)) == len(self.duplication_set), "duplication_set", "duplicate node")
        check(0 < self.outage_target < 1, "outage_target", "must lie in (0, 1)")
        check_prob(self.outage_target, "outage_target")
        check(self.arrival in ARRIVALS, "arrival", f"must be one of {ARRIVALS}")
        check_positive(self.arrival_rate, "arrival_rate")

    @property
    def link(self) -> LinkModel:
        return LinkModel(self.mean_snr_db, self.target_snr_db, self.fading)

    def nodes_for(self, mode: str) -> tuple[str, ...]:
        return self.duplication_set[:1] if mode == "SC" else self.duplication_set


# -- fading draws ------------------------------------------------------------
class AttemptDraws:
    """Uniform draws for one node's link, indexed by (packet seq, attempt)."""

    def __init__(self, seed: int, node: str, max_tx: int, chunk: int = CHUNK_PACKETS):
        self.seed, self.node, self.max_tx, self.chunk = seed, node, max_tx, chunk
        self._cache: dict[int, np.ndarray] = {}

    def chunk_array(self, c: int) -> np.ndarray:
        arr = self._cache.get(c)
        if arr is None:
            stream = RngStream(self.seed, f"link:{self.node}/chunk:{c}")
            arr = stream.uniform((self.chunk, self.max_tx))
            if len(self._cache) >= 4:
                self._cache.pop(next(iter(self._cache)))
            self._cache[c] = arr
        return arr

    def block(self, start: int, stop: int) -> np.ndarray:
        parts = []
        pos = start
        while pos < stop:
            c, off = divmod(pos, self.chunk)
            take = min(stop - pos, self.chunk - off)
            parts.append(self.chunk_array(c)[off:off + take])
            pos += take
        return np.concatenate(parts) if len(parts) != 1 else parts[0]

    def draw(self, seq: int, attempt: int) -> float:
        c, off = divmod(seq, self.chunk)
        return float(self.chunk_array(c)[off, attempt])


# -- protocol state ----------------------------------------------------------
@dataclass
class PdcpPacket:
    seq: int
    arrival_slot: int
    dup_flag: bool = False


@dataclass
class HarqEntry:
    packet: PdcpPacket
    state: str = "unsent"  # unsent | awaiting_feedback | pending_retx
    next_slot: int = 0
    attempts: int = 0
    last_ok: bool = False
    suppressed: bool = False


@dataclass
class NodeTxState:
    name: str
    harq_rtt_slots: int
    buffer: dict = field(default_factory=dict)  # seq -> HarqEntry, insertion (FIFO) order

    def __contains__(self, seq):
        return seq in self.buffer

    def eligible(self, now: int) -> HarqEntry | None:
        """Due retransmission first, otherwise the oldest unsent packet."""
        oldest = None
        for entry in self.buffer.values():
            if entry.state == "pending_retx" and entry.next_slot <= now:
                return entry
            if oldest is None and entry.state == "unsent" and entry.packet.arrival_slot < now:
                oldest = entry
        return oldest

    def has_unsent(self) -> bool:
        return any(e.state == "unsent" for e in self.buffer.values())


@dataclass(frozen=True)
class DuplicationStatusReport:
    seq: int
    origin: str
    destinations: tuple[str, ...]
    delivery_slot: int
    report_delay_slots: int

    @property
    def arrival_slot(self) -> int:
        return self.delivery_slot + self.report_delay_slots


@dataclass
class DeliveryRecord:
    seq: int
    arrival_slot: int
    first_success_slot: float = math.inf
    total_transmissions: int = 0
    delivered_by: str | None = None

    @property
    def latency(self) -> float:
        return self.first_success_slot - self.arrival_slot


class DuplicationError(ValueError):
    pass


class DuplicationSimulator:
    """Event-driven model of one UE served by a duplication set.

    Every slot with pending work runs one ``tick``: each node sends at most one
    transmission, then the UE processes the decodes.  HARQ feedback for a
    transmission in slot ``t`` resolves at ``t + harq_rtt_slots``; a NACK makes
    the packet eligible for retransmission in that same slot.  Within a slot,
    arrivals precede report deliveries, which precede feedback, which precedes
    transmissions.
    """

    def __init__(self, cfg: DupstatConfig, mode: str, seed: int, draws: dict | None = None,
                 trace: bool = False, ue: str = "ue1"):
        if mode not in MODES:
            raise DuplicationError(f"unknown mode {mode!r}")
        self.cfg, self.mode, self.seed, self.ue = cfg, mode, seed, ue
        self.link = cfg.link
        self.p_fail = self.link.outage_probability()
        self.node_names = cfg.nodes_for(mode)
        self.nodes = {n: NodeTxState(n, cfg.harq_rtt_slots) for n in self.node_names}
        self.draws = draws or {n: AttemptDraws(seed, n, cfg.max_transmissions) for n in cfg.duplication_set}
        self.engine = Engine(trace=trace)
        self.engine.on("arrival", self._on_arrival)
        self.engine.on("tick", self._on_tick)
        self.engine.on("feedback", self._on_feedback)
        self.engine.on("report", self._on_report)
        self.records: dict[int, DeliveryRecord] = {}
        self.reports: list[DuplicationStatusReport] = []
        self.counters = CounterSet()
        self._ticks: set[int] = set()
        self._copies: dict[int, int] = {}
        self._packets_total = 0
        self._next_seq = 0
        self._arrival_stream = None
        self._arrival_time = 0.0

    # -- protocol operations -------------------------------------------------
    def enqueue_packet(self, pkt: PdcpPacket):
        if pkt.seq in self.records:
            raise DuplicationError(f"duplicate PDCP sequence number {pkt.seq}")
        pkt.dup_flag = self.mode != "SC"
        self.records[pkt.seq] = DeliveryRecord(pkt.seq, pkt.arrival_slot)
        for name in self.node_names:
            self.nodes[name].buffer[pkt.seq] = HarqEntry(pkt)
        self._copies[pkt.seq] = len(self.node_names)
        self.counters.add("packets")
        self._ensure_tick(pkt.arrival_slot + 1)

    def transmit_slot(self, node: str, now: int):
        """One transmission attempt from ``node``; returns ``(seq, success)`` or None when idle."""
        state = self.nodes[node]
        entry = state.eligible(now)
        if entry is None:
            return None
        seq = entry.packet.seq
        u = self.draws[node].draw(seq, entry.attempts)
        ok = bool(u >= self.p_fail)
        entry.attempts += 1
        entry.state = "awaiting_feedback"
        entry.next_slot = now + state.harq_rtt_slots
        entry.last_ok = ok
        self.records[seq].total_transmissions += 1
        self.counters.add("transmissions")
        self.engine.schedule(entry.next_slot, "feedback", (node, seq), PRIO_FEEDBACK)
        return seq, ok

    def on_decode_success(self, seq: int, slot: int, delivering_node: str):
        rec = self.records[seq]
        if rec.first_success_slot != math.inf:
            self.counters.add("duplicates_discarded_at_ue")
            return
        rec.first_success_slot = slot
        rec.delivered_by = delivering_node
        self.counters.add("delivered")
        pkt = self.nodes[delivering_node].buffer[seq].packet
        if pkt.dup_flag and self.mode == "MC_discard":
            others = tuple(n for n in self.node_names if n != delivering_node)
            report = DuplicationStatusReport(seq, self.ue, others, slot, self.cfg.report_delay_slots)
            self.reports.append(report)
            self.counters.add("reports")
            for node in others:
                self.engine.schedule(report.arrival_slot, "report", (node, seq), PRIO_REPORT)

    def on_status_report(self, node: str, seq: int):
        state = self.nodes[node]
        entry = state.buffer.get(seq)
        if entry is None:
            return
        if entry.state == "awaiting_feedback":
            entry.suppressed = True
            return
        if entry.state == "unsent":
            self.counters.add("discarded_unsent")
        else:
            self.counters.add("retx_cancelled")
        self._remove(node, seq)

    # -- event handlers ------------------------------------------------------
    def _ensure_tick(self, slot: int):
        if slot not in self._ticks:
            self._ticks.add(slot)
            self.engine.schedule(slot, "tick", None, PRIO_TX)

    def _on_arrival(self, engine, event):
        self.enqueue_packet(PdcpPacket(event.payload, engine.now))
        if self.cfg.arrival == "poisson":
            self._schedule_next_arrival()

    def _on_tick(self, engine, event):
        now = engine.now
        self._ticks.discard(now)
        outcomes = []
        for name in self.node_names:
            res = self.transmit_slot(name, now)
            if res is not None:
                outcomes.append((name, *res))
        for name, seq, ok in outcomes:
            if ok:
                self.on_decode_success(seq, now, name)
        if any(s.has_unsent() for s in self.nodes.values()):
            self._ensure_tick(now + 1)

    def _on_feedback(self, engine, event):
        node, seq = event.payload
        entry = self.nodes[node].buffer.get(seq)
        if entry is None or entry.state != "awaiting_feedback" or entry.next_slot != engine.now:
            return
        if entry.last_ok:
            self._remove(node, seq)
        elif entry.suppressed:
            self.counters.add("retx_suppressed")
            self._remove(node, seq)
        elif entry.attempts >= self.cfg.max_transmissions:
            self.counters.add("harq_exhausted")
            self._remove(node, seq)
        else:
            entry.state = "pending_retx"
            self._ensure_tick(engine.now)

    def _on_report(self, engine, event):
        self.on_status_report(*event.payload)

    def _remove(self, node: str, seq: int):
        del self.nodes[node].buffer[seq]
        self._copies[seq] -= 1
        if self._copies[seq] == 0:
            del self._copies[seq]
            if self.cfg.arrival == "isolated" and self._next_seq < self._packets_total:
                self._schedule_arrival(self.engine.now + 1)

    def _schedule_arrival(self, slot: int):
        self.engine.schedule(slot, "arrival", self._next_seq, PRIO_ARRIVAL)
        self._next_seq += 1

    def _schedule_next_arrival(self):
        if self._next_seq >= self._packets_total:
            return
        if self._arrival_stream is None:
            self._arrival_stream = RngStream(self.seed, "arrivals")
        self._arrival_time += float(self._arrival_stream.exponential(1.0 / self.cfg.arrival_rate))
        self._schedule_arrival(max(int(self._arrival_time), self.engine.now))

    def run(self, n_packets: int):
        self._packets_total = n_packets
        if self.cfg.arrival == "isolated":
            self._schedule_arrival(0)
        else:
            self._schedule_next_arrival()
        self.engine.run_until()
        return [self.records[s] for s in sorted(self.records)]


# -- experiment --------------------------------------------------------------
def joint_failure(cfg: DupstatConfig, mode: str) -> float:
    p = cfg.link.outage_probability()
    return p ** len(cfg.nodes_for(mode))


def analytic_outage_latency(q: float, target: float, harq_rtt: int, max_tx: int = 10**6) -> float:
    """Latency ``1 + (n-1)*rtt`` for the smallest ``n`` with ``q**n <= target``."""
    tail = 1.0
    for n in range(1, max_tx + 1):
        tail *= q
        if tail <= target * (1 + 1e-12):
            return 1 + (n - 1) * harq_rtt
    return math.inf


def analytic_latency_pmf(q: float, harq_rtt: int, max_tx: int):
    """``{latency: probability}`` for first success after i.i.d. per-attempt failure ``q``."""
    return {1 + (n - 1) * harq_rtt: q ** (n - 1) * (1 - q) for n in range(1, max_tx + 1)}


@dataclass
class ModeResult:
    mode: str
    latency: EmpiricalDistribution
    counters: CounterSet
    analytic_outage: float
    latency_per_packet: np.ndarray | None = None
    tx_per_packet: np.ndarray | None = None

    @property
    def packets(self) -> int:
        return self.counters["packets"]

    @property
    def tx_per_delivered(self) -> float:
        d = self.counters["delivered"]
        return self.counters["transmissions"] / d if d else math.inf

    def merge(self, other: "ModeResult") -> "ModeResult":
        return ModeResult(self.mode, self.latency.merge(other.latency), self.counters.merge(other.counters),
                          self.analytic_outage)


def _kernel_mode(cfg: DupstatConfig, mode: str, seed: int, n_packets: int, draws: dict, keep: bool,
                 backend=None):
    backend = backend or kernels
    nodes = cfg.nodes_for(mode)
    p = np.full(len(nodes), cfg.link.outage_probability())
    dist = EmpiricalDistribution()
    counters = CounterSet()
    lat_all, tx_all = [], []
    for start in range(0, n_packets, CHUNK_PACKETS):
        stop = min(start + CHUNK_PACKETS, n_packets)
        u = np.ascontiguousarray(np.stack([draws[n].block(start, stop) for n in nodes]))
        lat, tx = backend.dup_isolated(u, p, mode == "MC_discard", cfg.harq_rtt_slots, cfg.report_delay_slots)
        delivered = lat >= 0
        dist.add(np.where(delivered, lat, np.inf))
        counters.add("packets", stop - start)
        counters.add("delivered", int(delivered.sum()))
        counters.add("transmissions", int(tx.sum()))
        if mode == "MC_discard":
            counters.add("reports", int(delivered.sum()))
        if keep:
            lat_all.append(lat)
            tx_all.append(tx)
    res = ModeResult(mode, dist, counters,
                     analytic_outage_latency(joint_failure(cfg, mode), cfg.outage_target, cfg.harq_rtt_slots,
                                             cfg.max_transmissions))
    if keep:
        res.latency_per_packet = np.concatenate(lat_all)
        res.tx_per_packet = np.concatenate(tx_all)
    return res


def _event_mode(cfg: DupstatConfig, mode: str, seed: int, n_packets: int, draws: dict, keep: bool):
    sim = DuplicationSimulator(cfg, mode, seed, draws=draws)
    records = sim.run(n_packets)
    lat = np.array([r.latency for r in records], dtype=float)
    dist = EmpiricalDistribution().add(lat)
    res = ModeResult(mode, dist, sim.counters,
                     analytic_outage_latency(joint_failure(cfg, mode), cfg.outage_target, cfg.harq_rtt_slots,
                                             cfg.max_transmissions))
    if keep:
        res.latency_per_packet = np.where(np.isfinite(lat), lat, -1).astype(np.int64)
        res.tx_per_packet = np.array([r.total_transmissions for r in records], dtype=np.int64)
    return res


def run_duplication_experiment(cfg: DupstatConfig, seed: int, simulator: str = "auto",
                               keep_records: bool = False, backend=None) -> dict[str, ModeResult]:
    """Run every configured mode on shared per-link draws.

    ``simulator="auto"`` uses the compiled isolated-packet kernel when arrivals
    are isolated and the event engine otherwise; ``"event"`` forces the engine.
    """
    if simulator not in ("auto", "event", "kernel"):
        raise ValueError(f"unknown simulator {simulator!r}")
    if simulator == "kernel" and cfg.arrival != "isolated":
        raise ConfigError("arrival", "the kernel path only supports isolated arrivals")
    use_kernel = simulator == "kernel" or (simulator == "auto" and cfg.arrival == "isolated")
    draws = {n: AttemptDraws(seed, n, cfg.max_transmissions) for n in cfg.duplication_set}
    out = {}
    for mode in cfg.modes:
        if use_kernel:
            out[mode] = _kernel_mode(cfg, mode, seed, cfg.packets, draws, keep_records, backend)
        else:
            out[mode] = _event_mode(cfg, mode, seed, cfg.packets, draws, keep_records)
    return out


CSV_HEADER = ("run", "mode", "packets", "tx_per_delivered", "latency_p50", "latency_at_outage_1e-3",
              "latency_at_outage_target", "analytic_latency_at_target", "outage_target_reliable")


def csv_rows(results: dict[str, ModeResult], cfg: DupstatConfig, run_label) -> list[tuple]:
    rows = []
    for mode, r in results.items():
        at_target = r.latency.outage_latency(cfg.outage_target)
        rows.append((run_label, mode, r.packets, r.tx_per_delivered, r.latency.percentile(50),
                     r.latency.outage_latency(1e-3).value, at_target.value, r.analytic_outage,
                     at_target.reliable))
    return rows


def summarize(results: dict[str, ModeResult], cfg: DupstatConfig) -> dict:
    out = {}
    for mode, r in results.items():
        at_target = r.latency.outage_latency(cfg.outage_target)
        out[mode] = {
            "packets": r.packets,
            "tx_per_delivered": r.tx_per_delivered,
            "latency_p50": r.latency.percentile(50),
            "latency_at_outage_target": at_target.value,
            "outage_target_reliable": at_target.reliable,
            "analytic_latency_at_target": r.analytic_outage,
            "counters": r.counters.as_dict(),
        }
        if not at_target.reliable:
            out[mode]["diagnostic"] = (
                f"{r.latency.count} samples < {10 / cfg.outage_target:.0f} needed for a reliable "
                f"{cfg.outage_target:g} outage quantile"
            )
    return out


def with_samples(cfg: DupstatConfig, n: int) -> DupstatConfig:
    return replace(cfg, packets=n)
