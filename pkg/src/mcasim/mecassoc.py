"""UE association in a two-tier HetNet with MEC servers collocated at every node.

The conventional rule attaches both directions to the node with the strongest
downlink RSRP.  The MEC-aware rule keeps that downlink choice but sends the
uplink (and the offloaded task) to the node minimising the predicted E-PDB:

    E-PDB = L / r_ul + (Q + L * w) / C

with task size ``L`` bits, density ``w`` cycles/bit, the server's queued
workload ``Q`` cycles and CPU rate ``C`` cycles/s.  Nodes advertise ``C`` and
``Q`` in system information, so the UE can evaluate the predictor itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import check, check_positive
from .metrics import CounterSet, EmpiricalDistribution
from .radio import PATHLOSS_MODELS, shannon_rate, thermal_noise_dbm
from .rng import RngStream

TASK_DISTRIBUTIONS = ("fixed", "uniform", "exponential")


@dataclass(frozen=True)
class OffloadConfig:
    n_small: int = 24
    n_ues: int = 300
    radius_m: float = 1000.0
    min_distance_m: float = 10.0
    p_macro_dbm: float = 46.0
    p_small_dbm: float = 30.0
    c_small: float = 1e11
    omega: float = 2.0
    task_bits: float = 1e5
    task_distribution: str = "uniform"
    cycles_per_bit: float = 1000.0
    ul_bandwidth_hz: float = 10e6
    ue_tx_power_dbm: float = 23.0
    noise_figure_db: float = 5.0
    queue_updates: bool = True
    same_pathloss: bool = False
    drops: int = 20

    SAMPLE_FIELD = "drops"

    def validate(self):
        check(self.n_small >= 0, "n_small", "must be >= 0")
        check(self.n_ues >= 1, "n_ues", "must be >= 1")
        check_positive(self.radius_m, "radius_m")
        check(0 < self.min_distance_m < self.radius_m, "min_distance_m", "must lie in (0, radius_m)")
        check(self.p_macro_dbm >= self.p_small_dbm, "p_macro_dbm", "macro power must be >= small power")
        check_positive(self.c_small, "c_small")
        check_positive(self.omega, "omega")
        check_positive(self.task_bits, "task_bits")
        check(self.task_distribution in TASK_DISTRIBUTIONS, "task_distribution",
              f"must be one of {TASK_DISTRIBUTIONS}")
        check_positive(self.cycles_per_bit, "cycles_per_bit")
        check_positive(self.ul_bandwidth_hz, "ul_bandwidth_hz")
        check(self.drops >= 1, "drops", "must be >= 1")

    @property
    def macro(self) -> "TierProfile":
        c_macro = self.c_small * 10.0 ** ((self.p_macro_dbm - self.p_small_dbm) / 10.0) / self.omega
        return TierProfile("macro", self.p_macro_dbm, 1, c_macro)

    @property
    def small(self) -> "TierProfile":
        return TierProfile("small", self.p_small_dbm, self.n_small, self.c_small)


@dataclass(frozen=True)
class TierProfile:
    tier: str
    tx_power_dbm: float
    count: int
    cpu_rate: float

    def __post_init__(self):
        if self.cpu_rate <= 0:
            raise ValueError("cpu_rate must be positive")


def disparity_omega(macro: TierProfile, small: TierProfile) -> float:
    """Transmit-power ratio over CPU-rate ratio between the tiers (linear)."""
    power_ratio = 10.0 ** ((macro.tx_power_dbm - small.tx_power_dbm) / 10.0)
    return power_ratio / (macro.cpu_rate / small.cpu_rate)


@dataclass
class MecServer:
    host: int
    cpu_rate: float
    queue: float = 0.0

    def __post_init__(self):
        if self.cpu_rate <= 0 or self.queue < 0:
            raise ValueError("cpu_rate must be positive and queue non-negative")


@dataclass(frozen=True)
class OffloadTask:
    bits: float
    cycles_per_bit: float = 1000.0

    def __post_init__(self):
        if self.bits <= 0 or self.cycles_per_bit <= 0:
            raise ValueError("task size and density must be positive")

    @property
    def workload(self) -> float:
        return self.bits * self.cycles_per_bit


@dataclass(frozen=True)
class AssociationDecision:
    dl: int
    ul: int

    @property
    def coupled(self) -> bool:
        return self.dl == self.ul


def predicted_e_pdb(task: OffloadTask, ul_rate, cpu_rate, queue=0.0):
    ul_rate = np.asarray(ul_rate, dtype=float)
    if np.any(ul_rate <= 0):
        raise ValueError("uplink rate must be positive")
    return task.bits / ul_rate + (np.asarray(queue, dtype=float) + task.workload) / np.asarray(cpu_rate, dtype=float)


def e_pdb(task: OffloadTask, ul_rate: float, server: MecServer) -> float:
    """E-PDB of ``task`` admitted to ``server``; the server queue grows by the task workload."""
    value = float(predicted_e_pdb(task, ul_rate, server.cpu_rate, server.queue))
    server.queue += task.workload
    return value


@dataclass
class Network:
    """Radio nodes (index 0 is the macro) with collocated MEC servers."""

    xy: np.ndarray
    tier: tuple[str, ...]
    tx_power_dbm: np.ndarray
    servers: list[MecServer]
    ul_bandwidth_hz: float = 10e6
    ue_tx_power_dbm: float = 23.0
    noise_figure_db: float = 5.0
    pathloss_models: dict = field(default_factory=lambda: dict(PATHLOSS_MODELS))

    @property
    def size(self) -> int:
        return len(self.tier)

    def distances(self, ue_xy) -> np.ndarray:
        d = np.hypot(self.xy[:, 0] - ue_xy[0], self.xy[:, 1] - ue_xy[1])
        return np.maximum(d, 1.0)

    def pathloss(self, ue_xy) -> np.ndarray:
        d = np.atleast_2d(self.distances_matrix(np.atleast_2d(ue_xy)))
        out = np.empty_like(d)
        for t in set(self.tier):
            cols = np.array([x == t for x in self.tier])
            out[:, cols] = self.pathloss_models[t](d[:, cols])
        return out[0] if np.ndim(ue_xy) == 1 else out

    def distances_matrix(self, ue_xy) -> np.ndarray:
        ue_xy = np.atleast_2d(ue_xy)
        d = np.hypot(ue_xy[:, None, 0] - self.xy[None, :, 0], ue_xy[:, None, 1] - self.xy[None, :, 1])
        return np.maximum(d, 1.0)

    def dl_rsrp(self, ue_xy) -> np.ndarray:
        return self.tx_power_dbm - self.pathloss(ue_xy)

    def ul_rates(self, ue_xy) -> np.ndarray:
        noise = thermal_noise_dbm(self.ul_bandwidth_hz, self.noise_figure_db)
        snr_db = self.ue_tx_power_dbm - self.pathloss(ue_xy) - noise
        return shannon_rate(10.0 ** (snr_db / 10.0), self.ul_bandwidth_hz)

    def queues(self) -> np.ndarray:
        return np.array([s.queue for s in self.servers])

    def cpu_rates(self) -> np.ndarray:
        return np.array([s.cpu_rate for s in self.servers])


def _lexi_argmin(primary: np.ndarray, *tiebreaks: np.ndarray) -> int:
    keys = [np.arange(primary.size)] + [t for t in reversed(tiebreaks)] + [primary]
    return int(np.lexsort(keys)[0])


def _max_rsrp_node(rsrp_dbm: np.ndarray, distance: np.ndarray) -> int:
    return _lexi_argmin(-rsrp_dbm, distance)


def _min_epdb_node(pred: np.ndarray, pathloss_db: np.ndarray) -> int:
    return _lexi_argmin(pred, pathloss_db)


def coupled_association(ue_xy, net: Network) -> AssociationDecision:
    """Max DL RSRP for both directions; ties go to the nearer node, then the lower id."""
    node = _max_rsrp_node(net.dl_rsrp(ue_xy), net.distances(ue_xy))
    return AssociationDecision(node, node)


def decoupled_mec_association(ue_xy, net: Network, task: OffloadTask) -> tuple[AssociationDecision, np.ndarray]:
    """DL by max RSRP; UL by minimum predicted E-PDB (ties: smaller pathloss, lower id)."""
    dl = coupled_association(ue_xy, net).dl
    pred = predicted_e_pdb(task, net.ul_rates(ue_xy), net.cpu_rates(), net.queues())
    ul = _min_epdb_node(pred, net.pathloss(ue_xy))
    return AssociationDecision(dl, ul), pred


def _uniform_disc(stream: RngStream, n: int, radius: float, min_r: float) -> np.ndarray:
    u = stream.uniform((n, 2))
    r = np.sqrt(min_r ** 2 + u[:, 0] * (radius ** 2 - min_r ** 2))
    theta = 2 * np.pi * u[:, 1]
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)


def build_network(cfg: OffloadConfig, stream: RngStream) -> Network:
    small_xy = _uniform_disc(stream, cfg.n_small, cfg.radius_m, cfg.min_distance_m)
    xy = np.vstack([[0.0, 0.0], small_xy])
    tier = ("macro",) + ("small",) * cfg.n_small
    power = np.array([cfg.p_macro_dbm] + [cfg.p_small_dbm] * cfg.n_small)
    servers = [MecServer(0, cfg.macro.cpu_rate)] + [MecServer(i + 1, cfg.c_small) for i in range(cfg.n_small)]
    models = dict(PATHLOSS_MODELS)
    if cfg.same_pathloss:
        models["small"] = models["macro"]
    return Network(xy, tier, power, servers, cfg.ul_bandwidth_hz, cfg.ue_tx_power_dbm, cfg.noise_figure_db, models)


def draw_tasks(cfg: OffloadConfig, stream: RngStream, n: int) -> np.ndarray:
    if cfg.task_distribution == "fixed":
        return np.full(n, cfg.task_bits)
    if cfg.task_distribution == "uniform":
        return cfg.task_bits * (0.5 + stream.uniform(n))
    return np.maximum(stream.exponential(cfg.task_bits, n), 1.0)


@dataclass
class DropOutcome:
    rule: str
    epdb: np.ndarray
    decisions: list[AssociationDecision]
    coupled_prediction: np.ndarray  # predicted E-PDB of the max-RSRP node at decision time
    chosen_prediction: np.ndarray


def run_drop(cfg: OffloadConfig, seed: int, drop: int, rule: str) -> DropOutcome:
    """One node/UE layout, every UE offloading one task in arrival order."""
    net = build_network(cfg, RngStream(seed, f"mec/drop:{drop}/nodes"))
    ues = _uniform_disc(RngStream(seed, f"mec/drop:{drop}/ues"), cfg.n_ues, cfg.radius_m, cfg.min_distance_m)
    bits = draw_tasks(cfg, RngStream(seed, f"mec/drop:{drop}/tasks"), cfg.n_ues)
    if rule not in RULES:
        raise ValueError(f"unknown rule {rule!r}")
    # geometry is static within a drop; only the server queues evolve
    dist = net.distances_matrix(ues)
    pl = net.pathloss(ues)
    rsrp = net.tx_power_dbm[None, :] - pl
    rates = net.ul_rates(ues)
    cpu = net.cpu_rates()
    epdb = np.empty(cfg.n_ues)
    coupled_pred = np.empty(cfg.n_ues)
    chosen_pred = np.empty(cfg.n_ues)
    decisions = []
    for i in range(cfg.n_ues):
        task = OffloadTask(float(bits[i]), cfg.cycles_per_bit)
        pred = predicted_e_pdb(task, rates[i], cpu, net.queues())
        dl = _max_rsrp_node(rsrp[i], dist[i])
        ul = dl if rule == "coupled" else _min_epdb_node(pred, pl[i])
        dec = AssociationDecision(dl, ul)
        coupled_pred[i] = pred[dec.dl]
        chosen_pred[i] = pred[dec.ul]
        rate = float(rates[i, dec.ul])
        server = net.servers[dec.ul]
        if cfg.queue_updates:
            epdb[i] = e_pdb(task, rate, server)
        else:
            epdb[i] = float(predicted_e_pdb(task, rate, server.cpu_rate, server.queue))
        decisions.append(dec)
    return DropOutcome(rule, epdb, decisions, coupled_pred, chosen_pred)


RULES = ("coupled", "decoupled")


@dataclass
class OffloadResult:
    epdb: dict  # rule -> EmpiricalDistribution (seconds)
    counters: CounterSet
    omega: float
    outcomes: list | None = None

    def median_reduction(self) -> float:
        return 1.0 - self.epdb["decoupled"].percentile(50) / self.epdb["coupled"].percentile(50)

    def merge(self, other: "OffloadResult") -> "OffloadResult":
        return OffloadResult({r: self.epdb[r].merge(other.epdb[r]) for r in RULES},
                             self.counters.merge(other.counters), self.omega)


def run_offload_experiment(cfg: OffloadConfig, seed: int, keep_records: bool = False) -> OffloadResult:
    dists = {r: EmpiricalDistribution() for r in RULES}
    counters = CounterSet()
    outcomes = []
    for drop in range(cfg.drops):
        for rule in RULES:
            out = run_drop(cfg, seed, drop, rule)
            dists[rule].add(out.epdb)
            counters.add(f"ul_decoupled_{rule}", sum(not d.coupled for d in out.decisions))
            counters.add(f"ul_on_macro_{rule}", sum(d.ul == 0 for d in out.decisions))
            if keep_records:
                outcomes.append((drop, out))
        counters.add("drops")
        counters.add("tasks", cfg.n_ues)
    return OffloadResult(dists, counters, disparity_omega(cfg.macro, cfg.small), outcomes if keep_records else None)


CSV_HEADER = ("run", "rule", "p50_epdb", "p95_epdb", "tasks", "omega")
CCDF_HEADER = ("run", "rule", "value", "ccdf")


def csv_rows(res: OffloadResult, run_label) -> list[tuple]:
    return [(run_label, r, res.epdb[r].percentile(50), res.epdb[r].percentile(95), res.epdb[r].count, res.omega)
            for r in RULES]


def ccdf_rows(res: OffloadResult, run_label, max_points: int = 200) -> list[tuple]:
    rows = []
    for r in RULES:
        for x, c in res.epdb[r].ccdf_dump(max_points=max_points):
            rows.append((run_label, r, x, c))
    return rows


def summarize(res: OffloadResult) -> dict:
    return {
        "omega": res.omega,
        "median_epdb_reduction": res.median_reduction(),
        "rules": {r: {"p50_epdb_s": res.epdb[r].percentile(50), "p90_epdb_s": res.epdb[r].percentile(90),
                      "p95_epdb_s": res.epdb[r].percentile(95), "tasks": res.epdb[r].count} for r in RULES},
        "counters": res.counters.as_dict(),
    }


def with_samples(cfg: OffloadConfig, n: int) -> OffloadConfig:
    return replace(cfg, drops=n)
