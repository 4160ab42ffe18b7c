"""Rule-based component-carrier selection in a load-imbalanced macro layout.

Twelve tri-sector sites sit on a hexagonal lattice; every sector carries five
co-located CCs.  UEs arrive one at a time.  Each candidate CC is scored by a
small set of rules (piecewise-linear membership ramps), the scores are
averaged, and the UE receives the CCs scoring at least ``theta``, best first,
up to ``max_ccs``.  If nothing clears the threshold the single best CC is
assigned so every admitted UE is served.

The baseline policy scores on RSRP alone, which is the classic strongest-cell
association.  The proposed policy scores on RSRQ and CC load; both respond to
the instantaneous number of UEs on a carrier, which is what spreads a hotspot
over neighbouring sectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import check, check_positive, check_prob
from .metrics import CounterSet, EmpiricalDistribution, jain_index
from .radio import MACRO_PATHLOSS, RS_ACTIVITY_FLOOR, RSRQ_SCALE, shannon_rate, thermal_noise_dbm
from .rng import RngStream

METRICS = ("rsrp", "rsrq", "load")
POLICIES = ("baseline", "proposed")
ASSIGNMENT_MODES = ("split", "duplicate")
SECTOR_AZIMUTHS_DEG = (30.0, 150.0, 270.0)
PATHLOSS_REF_MHZ = 2000.0


@dataclass(frozen=True)
class Rule:
    """Two-anchor ramp: ``low_anchor -> low_score``, ``high_anchor -> high_score``."""

    metric: str
    low_anchor: float
    high_anchor: float
    low_score: float = 0.0
    high_score: float = 1.0

    def validate(self):
        check(self.metric in METRICS, "metric", f"unknown metric {self.metric!r}")
        check(self.low_anchor < self.high_anchor, "high_anchor", "must exceed low_anchor")
        check_prob(self.low_score, "low_score")
        check_prob(self.high_score, "high_score")

    __post_init__ = validate

    def __call__(self, value):
        frac = (np.asarray(value, dtype=float) - self.low_anchor) / (self.high_anchor - self.low_anchor)
        frac = np.clip(frac, 0.0, 1.0)
        out = self.low_score + (self.high_score - self.low_score) * frac
        return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Policy:
    name: str
    rules: tuple
    theta: float = 0.5
    max_ccs: int = 5

    def __post_init__(self):
        if not self.rules:
            raise ValueError("a policy needs at least one rule")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.max_ccs < 1:
            raise ValueError("max_ccs must be >= 1")


@dataclass(frozen=True)
class CarrierConfig:
    grid_rows: int = 3
    grid_cols: int = 4
    isd_m: float = 1000.0
    cc_frequencies_mhz: tuple[float, ...] = (800.0, 1800.0, 2100.0, 2600.0, 3500.0)
    cc_bandwidth_hz: float = 1.4e6
    cc_tx_power_dbm: float = 40.0
    noise_figure_db: float = 9.0
    min_distance_m: float = 35.0
    min_sinr_db: float = -10.0
    capacity: int = 10
    theta: float = 0.8
    max_ccs: int = 5
    n_ues: int = 60
    hotspot_fraction: float = 0.5
    hotspot_radius_m: float = 100.0
    hotspot_distance_m: float = 250.0
    hotspot_site: int = 5
    hotspot_sectors: tuple[int, ...] = (1, 2)
    baseline_rules: tuple[Rule, ...] = (Rule("rsrp", -108.0, -48.0),)
    proposed_rules: tuple[Rule, ...] = (Rule("rsrq", -19.5, -3.0), Rule("load", 0.0, 1.0, 1.0, 0.0))
    assignment_mode: str = "split"
    drops: int = 1

    SAMPLE_FIELD = "drops"

    def validate(self):
        check(self.grid_rows >= 1 and self.grid_cols >= 1, "grid_rows", "layout needs at least one site")
        check_positive(self.isd_m, "isd_m")
        check(len(self.cc_frequencies_mhz) >= 1 and all(f > 0 for f in self.cc_frequencies_mhz),
              "cc_frequencies_mhz", "need at least one positive carrier frequency")
        check_positive(self.cc_bandwidth_hz, "cc_bandwidth_hz")
        for name in ("cc_tx_power_dbm", "noise_figure_db", "min_sinr_db"):
            check(math.isfinite(getattr(self, name)), name, "must be finite")
        check_positive(self.min_distance_m, "min_distance_m")
        check(self.capacity >= 1, "capacity", "must be >= 1")
        check_prob(self.theta, "theta")
        check(self.max_ccs >= 1, "max_ccs", "must be >= 1")
        check(self.n_ues >= 1, "n_ues", "must be >= 1")
        check_prob(self.hotspot_fraction, "hotspot_fraction")
        check_positive(self.hotspot_radius_m, "hotspot_radius_m")
        check(self.hotspot_distance_m >= 0, "hotspot_distance_m", "must be >= 0")
        check(0 <= self.hotspot_site < self.n_sites, "hotspot_site", f"must lie in [0, {self.n_sites})")
        check(len(self.hotspot_sectors) >= 1 and all(s in (1, 2, 3) for s in self.hotspot_sectors),
              "hotspot_sectors", "sector ids are 1..3")
        check(len(self.baseline_rules) >= 1, "baseline_rules", "at least one rule")
        check(len(self.proposed_rules) >= 1, "proposed_rules", "at least one rule")
        check(self.assignment_mode in ASSIGNMENT_MODES, "assignment_mode",
              f"must be one of {ASSIGNMENT_MODES}")
        check(self.drops >= 1, "drops", "must be >= 1")

    @property
    def n_ccs(self) -> int:
        return len(self.cc_frequencies_mhz)

    def cc_offsets_db(self) -> np.ndarray:
        """Free-space frequency scaling of the 2 GHz macro pathloss model, per CC."""
        return 20.0 * np.log10(np.asarray(self.cc_frequencies_mhz, dtype=float) / PATHLOSS_REF_MHZ)

    @property
    def n_sites(self) -> int:
        return self.grid_rows * self.grid_cols

    def policy(self, name: str) -> Policy:
        rules = {"baseline": self.baseline_rules, "proposed": self.proposed_rules}[name]
        return Policy(name, tuple(rules), self.theta, self.max_ccs)


@dataclass
class CarrierCell:
    site: int
    sector: int  # 1..3
    cc: int  # 1..n_ccs
    capacity: int = 10
    bandwidth_hz: float = 1.4e6
    tx_power_dbm: float = 40.0
    admitted: list = field(default_factory=list)

    @property
    def load(self) -> int:
        return len(self.admitted)

    @property
    def load_fraction(self) -> float:
        return self.load / self.capacity

    @property
    def has_headroom(self) -> bool:
        return self.load < self.capacity

    def admit(self, ue: int):
        if not self.has_headroom:
            raise RuntimeError(f"CC {self.site}/{self.sector}/{self.cc} is at capacity")
        self.admitted.append(ue)


@dataclass(frozen=True)
class UeMeasurement:
    """Per-candidate metrics; any of them may be absent."""

    rsrp_dbm: np.ndarray | None = None
    rsrq_db: np.ndarray | None = None
    load: np.ndarray | None = None

    def metric(self, name: str):
        value = {"rsrp": self.rsrp_dbm, "rsrq": self.rsrq_db, "load": self.load}.get(name)
        if value is None:
            raise KeyError(f"measurement has no {name!r} metric")
        if name == "load" and np.any((np.asarray(value) < 0) | (np.asarray(value) > 1)):
            raise ValueError("load fraction must lie in [0, 1]")
        return value


@dataclass(frozen=True)
class Assignment:
    ue: int
    ccs: tuple  # indices into the cell list, best first
    roles: tuple  # "PCell" | "PSCell" | "SCell"

    @property
    def blocked(self) -> bool:
        return not self.ccs


def evaluate_rule(rule: Rule, measurement: UeMeasurement):
    return rule(measurement.metric(rule.metric))


def aggregate_scores(scores) -> float | np.ndarray:
    """Arithmetic mean over rules (axis 0)."""
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0 or arr.shape[0] == 0:
        raise ValueError("need at least one score")
    out = np.mean(arr, axis=0)
    return float(out) if np.ndim(out) == 0 else out


def score_candidates(policy: Policy, measurement: UeMeasurement) -> np.ndarray:
    return np.atleast_1d(aggregate_scores([np.atleast_1d(evaluate_rule(r, measurement)) for r in policy.rules]))


def rank_candidates(scores, loads, cc_index, sector_id) -> np.ndarray:
    """Order by score desc, then lower load, lower cc index, lower sector id."""
    return np.lexsort((np.asarray(sector_id), np.asarray(cc_index), np.asarray(loads), -np.asarray(scores)))


def choose(scores, loads, cc_index, sector_id, theta: float, max_ccs: int) -> np.ndarray:
    """Positions (into the candidate arrays) of the CCs to assign, best first."""
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = rank_candidates(scores, loads, cc_index, sector_id)
    passing = order[scores[order] >= theta]
    if passing.size == 0:
        return order[:1]
    return passing[:max_ccs]


def assign_roles(sites) -> tuple:
    roles, pcell_site, have_pscell = [], None, False
    for i, s in enumerate(sites):
        if i == 0:
            roles.append("PCell")
            pcell_site = s
        elif s != pcell_site and not have_pscell:
            roles.append("PSCell")
            have_pscell = True
        else:
            roles.append("SCell")
    return tuple(roles)


def select_ccs(ue: int, cells: list[CarrierCell], policy: Policy, measurement: UeMeasurement,
               candidates=None) -> Assignment:
    """Score, rank, threshold, and admit.  ``measurement`` is aligned with ``candidates``.

    ``candidates`` defaults to every cell; cells without headroom are skipped.
    An empty result means the UE is blocked.
    """
    idx = np.arange(len(cells)) if candidates is None else np.asarray(candidates, dtype=np.int64)
    scores = score_candidates(policy, measurement)
    if scores.shape[0] == 1 and idx.size > 1:
        scores = np.full(idx.size, scores[0])
    open_mask = np.array([cells[i].has_headroom for i in idx], dtype=bool)
    if not open_mask.any():
        return Assignment(ue, (), ())
    pos = np.flatnonzero(open_mask)
    sub = idx[pos]
    picked = choose(scores[pos], [cells[i].load for i in sub], [cells[i].cc for i in sub],
                    [cells[i].site * 3 + cells[i].sector for i in sub], policy.theta, policy.max_ccs)
    chosen = tuple(int(sub[p]) for p in picked)
    for c in chosen:
        cells[c].admit(ue)
    return Assignment(ue, chosen, assign_roles([cells[c].site for c in chosen]))


def compute_ue_throughput(assignment: Assignment, cells: list[CarrierCell], sinr_linear,
                          mode: str = "split") -> float:
    """Equal time share of each assigned CC; ``sinr_linear`` is indexed like ``cells``."""
    if assignment.blocked:
        return 0.0
    shares = [shannon_rate(float(sinr_linear[c]), cells[c].bandwidth_hz) / cells[c].load for c in assignment.ccs]
    return float(max(shares)) if mode == "duplicate" else float(sum(shares))


# ---------------------------------------------------------------- geometry

@dataclass(frozen=True)
class Layout:
    sites: np.ndarray  # (n_sites, 2)
    isd_m: float

    @property
    def n_sectors(self) -> int:
        return 3 * len(self.sites)

    def bounds(self):
        lo = self.sites.min(axis=0) - self.isd_m / 2
        hi = self.sites.max(axis=0) + self.isd_m / 2
        return lo, hi

    def sector_boresight(self, site: int, sector: int) -> float:
        return math.radians(SECTOR_AZIMUTHS_DEG[sector - 1])


def hex_layout(rows: int, cols: int, isd_m: float) -> Layout:
    pts = []
    for r in range(rows):
        for c in range(cols):
            pts.append(((c + 0.5 * (r % 2)) * isd_m, r * isd_m * math.sqrt(3) / 2))
    pts = np.array(pts, dtype=float)
    return Layout(pts - pts.mean(axis=0), isd_m)


def antenna_gain_db(angle_rad):
    """Horizontal sector pattern ``-min(12 (phi/70 deg)^2, 20)`` dB."""
    phi = np.degrees(np.angle(np.exp(1j * np.asarray(angle_rad, dtype=float))))
    return -np.minimum(12.0 * (phi / 70.0) ** 2, 20.0)


def sector_rsrp_dbm(layout: Layout, ue_xy: np.ndarray, tx_power_dbm: float, min_distance_m: float) -> np.ndarray:
    """(n_ues, n_sectors) RSRP; sector ``3*site + (sector-1)``."""
    d = ue_xy[:, None, :] - layout.sites[None, :, :]
    dist = np.maximum(np.hypot(d[..., 0], d[..., 1]), min_distance_m)
    bearing = np.arctan2(d[..., 1], d[..., 0])
    pl = MACRO_PATHLOSS(dist)
    out = np.empty((len(ue_xy), layout.n_sectors))
    for k, az in enumerate(SECTOR_AZIMUTHS_DEG):
        out[:, k::3] = tx_power_dbm - pl + antenna_gain_db(bearing - math.radians(az))
    return out


def drop_ues(cfg: CarrierConfig, layout: Layout, stream: RngStream) -> np.ndarray:
    n_hot = int(round(cfg.hotspot_fraction * cfg.n_ues))
    lo, hi = layout.bounds()
    u = stream.uniform((cfg.n_ues, 2))
    uniform = lo + u[n_hot:] * (hi - lo)
    site = layout.sites[cfg.hotspot_site]
    az = np.radians([SECTOR_AZIMUTHS_DEG[s - 1] for s in cfg.hotspot_sectors])
    centre_dir = np.angle(np.exp(1j * az).mean())
    centre = site + cfg.hotspot_distance_m * np.array([math.cos(centre_dir), math.sin(centre_dir)])
    r = cfg.hotspot_radius_m * np.sqrt(u[:n_hot, 0])
    th = 2 * math.pi * u[:n_hot, 1]
    hot = centre + np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
    xy = np.concatenate([hot, uniform])
    order = np.argsort(stream.uniform(cfg.n_ues), kind="stable")
    return xy[order]


# ---------------------------------------------------------------- experiment

@dataclass
class DropOutcome:
    assignments: list
    throughput: np.ndarray  # bit/s, 0 for blocked UEs
    cc_loads: np.ndarray  # (n_sectors, n_ccs)
    sinr_db: np.ndarray  # (n_ues, n_cells), full-load SINR

    @property
    def n_assigned(self) -> np.ndarray:
        return np.array([len(a.ccs) for a in self.assignments])


def _rsrq_db(rsrp_lin: np.ndarray, loads: np.ndarray, capacity: int, noise_lin: float) -> np.ndarray:
    """(n_sectors, n_ccs) RSRQ for one UE given current per-CC activity.

    ``rsrp_lin`` is (n_sectors, n_ccs); only co-channel cells enter the total.
    """
    weight = RS_ACTIVITY_FLOOR + (1.0 - RS_ACTIVITY_FLOOR) * (loads / capacity)
    total = np.sum(rsrp_lin * weight, axis=0) + noise_lin
    return 10.0 * np.log10(RSRQ_SCALE * rsrp_lin / total[None, :])


def cell_radio(cfg: CarrierConfig, layout: Layout, ue_xy: np.ndarray):
    """RSRP (dBm) and full-load SINR (linear), both shaped (n_ues, n_sectors, n_ccs)."""
    sector = sector_rsrp_dbm(layout, ue_xy, cfg.cc_tx_power_dbm, cfg.min_distance_m)
    rsrp_dbm = sector[:, :, None] - cfg.cc_offsets_db()[None, None, :]
    rsrp_lin = 10.0 ** (rsrp_dbm / 10.0)
    noise = 10.0 ** (thermal_noise_dbm(cfg.cc_bandwidth_hz, cfg.noise_figure_db) / 10.0)
    total = rsrp_lin.sum(axis=1, keepdims=True)
    return rsrp_dbm, rsrp_lin / (total - rsrp_lin + noise), noise


def run_drop(cfg: CarrierConfig, seed: int, drop: int, policy_name: str) -> DropOutcome:
    layout = hex_layout(cfg.grid_rows, cfg.grid_cols, cfg.isd_m)
    ue_xy = drop_ues(cfg, layout, RngStream(seed, f"cc/drop:{drop}/ues"))
    rsrp_dbm, sinr, noise = cell_radio(cfg, layout, ue_xy)
    rsrp_lin = 10.0 ** (rsrp_dbm / 10.0)
    n_sec, n_cc = layout.n_sectors, cfg.n_ccs
    flat_rsrp = rsrp_dbm.reshape(cfg.n_ues, -1)
    flat_sinr = sinr.reshape(cfg.n_ues, -1)
    sinr_db = 10.0 * np.log10(flat_sinr)

    cells = [CarrierCell(s // 3 + 1, s % 3 + 1, c + 1, cfg.capacity, cfg.cc_bandwidth_hz, cfg.cc_tx_power_dbm)
             for s in range(n_sec) for c in range(n_cc)]
    sec_of = np.repeat(np.arange(n_sec), n_cc)
    cc_of = np.tile(np.arange(1, n_cc + 1), n_sec)
    loads = np.zeros((n_sec, n_cc), dtype=np.int64)
    policy = cfg.policy(policy_name)
    needs_rsrq = any(r.metric == "rsrq" for r in policy.rules)

    assignments = []
    for ue in range(cfg.n_ues):
        flat_loads = loads.reshape(-1)
        cand = np.flatnonzero((sinr_db[ue] >= cfg.min_sinr_db) & (flat_loads < cfg.capacity))
        if cand.size == 0:
            assignments.append(Assignment(ue, (), ()))
            continue
        rsrq = _rsrq_db(rsrp_lin[ue], loads, cfg.capacity, noise).reshape(-1)[cand] if needs_rsrq else None
        meas = UeMeasurement(flat_rsrp[ue, cand], rsrq, flat_loads[cand] / cfg.capacity)
        scores = score_candidates(policy, meas)
        if scores.shape[0] == 1 and cand.size > 1:
            scores = np.full(cand.size, scores[0])
        picked = cand[choose(scores, flat_loads[cand], cc_of[cand], sec_of[cand], policy.theta, policy.max_ccs)]
        for c in picked:
            cells[c].admit(ue)
            loads[sec_of[c], cc_of[c] - 1] += 1
        assignments.append(Assignment(ue, tuple(int(c) for c in picked),
                                      assign_roles([cells[c].site for c in picked])))

    thr = np.array([compute_ue_throughput(a, cells, flat_sinr[a.ue], cfg.assignment_mode) for a in assignments])
    return DropOutcome(assignments, thr, loads, sinr_db)


@dataclass
class CarrierResult:
    throughput: dict  # (policy, n_ccs | "all") -> EmpiricalDistribution (bit/s)
    counters: CounterSet
    jain: dict  # policy -> list of per-drop Jain indices over CC loads
    max_ccs: int

    def buckets(self):
        return ["all"] + list(range(1, self.max_ccs + 1))

    def blocked_fraction(self, policy: str) -> float:
        n = self.counters[f"ues_{policy}"]
        return self.counters[f"blocked_{policy}"] / n if n else 0.0

    def mean_jain(self, policy: str) -> float:
        return float(np.mean(self.jain[policy]))

    def percentile_gain(self, q: float) -> float:
        base = self.throughput[("baseline", "all")].percentile(q)
        return self.throughput[("proposed", "all")].percentile(q) / base - 1.0

    def merge(self, other: "CarrierResult") -> "CarrierResult":
        keys = sorted(set(self.throughput) | set(other.throughput), key=str)
        merged = {}
        for k in keys:
            a, b = self.throughput.get(k), other.throughput.get(k)
            merged[k] = a.merge(b) if a is not None and b is not None else (a or b).merge(EmpiricalDistribution())
        return CarrierResult(merged, self.counters.merge(other.counters),
                             {p: self.jain[p] + other.jain[p] for p in POLICIES}, self.max_ccs)


def run_carrier_experiment(cfg: CarrierConfig, seed: int, keep_records: bool = False):
    thr = {(p, b): EmpiricalDistribution() for p in POLICIES for b in ["all"] + list(range(1, cfg.max_ccs + 1))}
    counters = CounterSet()
    jain = {p: [] for p in POLICIES}
    outcomes = []
    for drop in range(cfg.drops):
        for p in POLICIES:
            out = run_drop(cfg, seed, drop, p)
            n = out.n_assigned
            served = n > 0
            thr[(p, "all")].extend(out.throughput[served])
            for k in range(1, cfg.max_ccs + 1):
                thr[(p, k)].extend(out.throughput[n == k])
            counters.add(f"ues_{p}", len(n))
            counters.add(f"blocked_{p}", int((~served).sum()))
            counters.add(f"multi_site_{p}", sum("PSCell" in a.roles for a in out.assignments))
            jain[p].append(jain_index(out.cc_loads.reshape(-1)))
            if keep_records:
                outcomes.append((drop, p, out))
        counters.add("drops")
    res = CarrierResult(thr, counters, jain, cfg.max_ccs)
    if keep_records:
        res.outcomes = outcomes
    return res


CSV_HEADER = ("run", "policy", "n_ccs", "p5", "p50", "p95", "mean", "ues", "blocked_fraction", "jain_index")


def csv_rows(res: CarrierResult, run_label) -> list[tuple]:
    rows = []
    for p in POLICIES:
        for b in res.buckets():
            d = res.throughput[(p, b)]
            if d.count:
                stats = (d.percentile(5), d.percentile(50), d.percentile(95), d.mean())
            else:
                stats = ("", "", "", "")
            rows.append((run_label, p, b, *stats, d.count, res.blocked_fraction(p), res.mean_jain(p)))
    return rows


def summarize(res: CarrierResult) -> dict:
    out = {"policies": {}, "gain": {}}
    for p in POLICIES:
        d = res.throughput[(p, "all")]
        out["policies"][p] = {
            "p5_bps": d.percentile(5), "p50_bps": d.percentile(50), "p95_bps": d.percentile(95),
            "blocked_fraction": res.blocked_fraction(p), "mean_jain_index": res.mean_jain(p),
            "mean_by_n_ccs": {str(k): (res.throughput[(p, k)].mean() if res.throughput[(p, k)].count else None)
                              for k in range(1, res.max_ccs + 1)},
        }
    for q in (5, 50, 95):
        out["gain"][f"p{q}"] = res.percentile_gain(q)
    b, pr = res.jain["baseline"], res.jain["proposed"]
    out["jain_improved_fraction"] = float(np.mean([x > y for x, y in zip(pr, b)]))
    out["counters"] = res.counters.as_dict()
    return out


def with_samples(cfg: CarrierConfig, n: int) -> CarrierConfig:
    return replace(cfg, drops=n)
