"""Two-gNB cooperation for low-latency (LLU) and latency-tolerant (LTU) user pairs.

Each episode attaches one user to each gNB.  The baseline serves both users
concurrently in single connectivity on a shared frequency, so each suffers one
co-channel interferer.  The cooperative policy picks a scheme per pair:

* same direction, one LLU: the LLU gets reliability-oriented DC, the LTU waits;
* same direction, two LTUs: a uniformly drawn one gets DC, the other waits;
* same direction, two LLUs: non-coherent JT (received powers add);
* opposite directions: IC-CoMP, the UL gNB cancels the DL signal it learned
  over Xn.

Every data slot is followed by an error-free feedback slot, so a user that
needs ``n`` attempts sees a two-way latency of ``2n`` slots (plus the Xn delay
per attempt for cooperative schemes).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .config import check, check_prob
from .metrics import CounterSet, EmpiricalDistribution
from .rng import RngStream

LLU, LTU = "LLU", "LTU"
DL, UL = "DL", "UL"
SCHEMES = ("SC_baseline", "DC_to_user", "JT_CoMP", "IC_CoMP")
BLOCK = 8
CHUNK_EPISODES = 1 << 14

MODE_SINGLE, MODE_SELECT, MODE_SUM = 0, 1, 2


@dataclass(frozen=True)
class CompConfig:
    mean_snr_db: float = 10.0
    target_snr_db: float = 0.0
    fading: str = "rayleigh"
    interference_ratio_db: float = 0.0
    ue_interference_ratio_db: float = -10.0
    ic_residual: float = 0.0
    xn_delay_slots: int = 0
    p_llu: float = 0.5
    p_dl: float = 0.5
    episodes: int = 200_000
    max_attempts: int = 64

    SAMPLE_FIELD = "episodes"

    def validate(self):
        check(self.fading in ("rayleigh", "none"), "fading", f"unknown fading kind {self.fading!r}")
        for name in ("mean_snr_db", "target_snr_db", "interference_ratio_db", "ue_interference_ratio_db"):
            check(math.isfinite(getattr(self, name)), name, "must be finite")
        check_prob(self.ic_residual, "ic_residual")
        check(self.xn_delay_slots >= 0, "xn_delay_slots", "must be >= 0")
        check_prob(self.p_llu, "p_llu")
        check_prob(self.p_dl, "p_dl")
        check(self.episodes >= 1, "episodes", "must be >= 1")
        check(self.max_attempts >= 1 and self.max_attempts % BLOCK == 0, "max_attempts",
              f"must be a positive multiple of {BLOCK}")

    @property
    def snr_mean(self) -> float:
        return 10.0 ** (self.mean_snr_db / 10.0)

    @property
    def target(self) -> float:
        return 10.0 ** (self.target_snr_db / 10.0)


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    cls: str
    direction: str

    def __post_init__(self):
        if self.cls not in (LLU, LTU) or self.direction not in (DL, UL):
            raise ValueError(f"invalid user profile {self}")


@dataclass(frozen=True)
class CooperationDecision:
    scheme: str
    beneficiaries: tuple[int, ...]


@dataclass(frozen=True)
class TwoWayExchange:
    first_tx_slot: int
    ack_rx_slot: int

    @property
    def two_way_latency(self) -> int:
        return self.ack_rx_slot - self.first_tx_slot + 1


def decide_cooperation(a: UserProfile, b: UserProfile, pick_u: float = 0.0) -> CooperationDecision:
    """Cooperation case for a user pair; ``pick_u`` in [0, 1) drives the LTU/LTU coin flip."""
    if a.direction != b.direction:
        return CooperationDecision("IC_CoMP", (a.user_id, b.user_id))
    if a.cls == LLU and b.cls == LLU:
        return CooperationDecision("JT_CoMP", (a.user_id, b.user_id))
    if a.cls == LLU:
        return CooperationDecision("DC_to_user", (a.user_id,))
    if b.cls == LLU:
        return CooperationDecision("DC_to_user", (b.user_id,))
    return CooperationDecision("DC_to_user", (a.user_id if pick_u < 0.5 else b.user_id,))


def single_attempt_success(scheme: str, snr_mean: float, target: float, g_own, g_other=0.0, g_int=0.0,
                           icoef: float = 0.0):
    """Per-attempt decode rule; fading gains are unit-mean and ``icoef`` is the mean INR."""
    if scheme in ("SC_baseline", "IC_CoMP"):
        sig = g_own
    elif scheme == "DC_to_user":
        sig = np.maximum(g_own, g_other)
    elif scheme == "JT_CoMP":
        sig = np.add(g_own, g_other)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return snr_mean * sig >= target * (1.0 + icoef * np.asarray(g_int))


# -- draws -------------------------------------------------------------------
def _gains(u: np.ndarray, fading: str) -> np.ndarray:
    if fading == "none":
        return np.ones_like(u)
    return -np.log1p(-u)


class EpisodeDraws:
    """Episode profiles and per-attempt fading, chunked and fixed by ``seed`` alone."""

    def __init__(self, seed: int, cfg: CompConfig):
        self.seed, self.cfg = seed, cfg

    def profiles(self, chunk: int, n: int) -> np.ndarray:
        """``(n, 5)`` uniforms: class a, dir a, class b, dir b, LTU pick."""
        return RngStream(self.seed, f"episodes/chunk:{chunk}").uniform((CHUNK_EPISODES, 5))[:n]

    def fading(self, chunk: int, block: int, n: int):
        """Unit-mean gains ``(own, other, interferer)``, each shaped ``(2n, BLOCK)``."""
        u = RngStream(self.seed, f"fading/chunk:{chunk}/block:{block}").uniform((3, CHUNK_EPISODES * 2, BLOCK))
        g = _gains(u[:, : 2 * n], self.cfg.fading)
        return np.ascontiguousarray(g[0]), np.ascontiguousarray(g[1]), np.ascontiguousarray(g[2])


def _interference_coefs(cfg: CompConfig, dirs: np.ndarray) -> np.ndarray:
    """Mean INR each user sees when both are served concurrently (baseline)."""
    m = cfg.snr_mean
    r_cc = 10.0 ** (cfg.interference_ratio_db / 10.0)
    r_ue = 10.0 ** (cfg.ue_interference_ratio_db / 10.0)
    same = dirs[:, 0] == dirs[:, 1]
    coef = np.empty(dirs.shape, dtype=float)
    coef[same] = m * r_cc
    cross = ~same
    # UL receiver hears the DL gNB; DL receiver hears the UL UE
    coef[cross] = np.where(dirs[cross] == 1, m * r_cc, m * r_ue)
    return coef


def _resolve(draws: EpisodeDraws, chunk: int, n: int, mode_sets, coef_sets, cfg: CompConfig, backend):
    outs = [np.full(2 * n, -1, dtype=np.int64) for _ in mode_sets]
    for block in range(cfg.max_attempts // BLOCK):
        g_own, g_other, g_int = draws.fading(chunk, block, n)
        pending = 0
        for mode, coef, out in zip(mode_sets, coef_sets, outs):
            pending += backend.first_success(g_own, g_other, g_int, mode, coef, cfg.snr_mean, cfg.target,
                                             block * BLOCK, out)
        if pending == 0:
            break
    return outs


@dataclass
class CompResult:
    groups: dict  # (scheme_label, user_class) -> EmpiricalDistribution
    counters: CounterSet
    baseline_attempts: np.ndarray | None = None
    coop_attempts: np.ndarray | None = None
    decisions: np.ndarray | None = None
    baseline_coef: np.ndarray | None = None

    def mean(self, scheme: str, cls: str) -> float:
        d = self.groups.get((scheme, cls))
        return d.mean() if d is not None and d.count else math.nan

    def llu_reduction(self) -> float:
        return 1.0 - self.mean("cooperative", LLU) / self.mean("SC_baseline", LLU)

    def merge(self, other: "CompResult") -> "CompResult":
        keys = sorted(set(self.groups) | set(other.groups))
        groups = {}
        for k in keys:
            a, b = self.groups.get(k), other.groups.get(k)
            groups[k] = a.merge(b) if a is not None and b is not None else (a or b)
        return CompResult(groups, self.counters.merge(other.counters))


SCHEME_CODES = {"DC_to_user": 0, "JT_CoMP": 1, "IC_CoMP": 2}


def _decide_vectorised(prof: np.ndarray, p_llu: float, p_dl: float):
    """Decision codes and beneficiary/deferred flags for a block of episodes."""
    is_llu = np.stack([prof[:, 0] < p_llu, prof[:, 2] < p_llu], axis=1)
    is_ul = np.stack([prof[:, 1] >= p_dl, prof[:, 3] >= p_dl], axis=1).astype(np.int8)
    cross = is_ul[:, 0] != is_ul[:, 1]
    both_llu = is_llu.all(axis=1)
    scheme = np.where(cross, 2, np.where(both_llu, 1, 0))
    # DC beneficiary: the LLU, else the coin flip
    pick_a = np.where(is_llu[:, 0] != is_llu[:, 1], is_llu[:, 0], prof[:, 4] < 0.5)
    benef = np.zeros((prof.shape[0], 2), dtype=bool)
    dc = scheme == 0
    benef[dc, 0] = pick_a[dc]
    benef[dc, 1] = ~pick_a[dc]
    return scheme, is_llu, is_ul, benef


def simulate_chunk(cfg: CompConfig, draws: EpisodeDraws, chunk: int, n: int, backend=None):
    backend = backend or kernels
    prof = draws.profiles(chunk, n)
    scheme, is_llu, is_ul, benef = _decide_vectorised(prof, cfg.p_llu, cfg.p_dl)
    base_coef = _interference_coefs(cfg, is_ul)

    base_mode = np.zeros((n, 2), dtype=np.int8)
    coop_mode = np.zeros((n, 2), dtype=np.int8)
    coop_coef = np.zeros((n, 2), dtype=float)
    dc, jt, ic = scheme == 0, scheme == 1, scheme == 2
    coop_mode[dc] = np.where(benef[dc], MODE_SELECT, MODE_SINGLE)
    coop_mode[jt] = MODE_SUM
    m = cfg.snr_mean
    r_cc = 10.0 ** (cfg.interference_ratio_db / 10.0)
    r_ue = 10.0 ** (cfg.ue_interference_ratio_db / 10.0)
    coop_coef[ic] = np.where(is_ul[ic] == 1, m * r_cc * cfg.ic_residual, m * r_ue)

    base_out, coop_out = _resolve(
        draws, chunk, n,
        [base_mode.ravel(), coop_mode.ravel()],
        [np.ascontiguousarray(base_coef.ravel()), np.ascontiguousarray(coop_coef.ravel())],
        cfg, backend,
    )
    return prof, scheme, is_llu, benef, base_out.reshape(n, 2), coop_out.reshape(n, 2)


def _latencies(cfg: CompConfig, scheme, benef, base_att, coop_att):
    inf = math.inf
    base_lat = np.where(base_att >= 0, 2.0 * (base_att + 1), inf)
    per_round = 2.0 + cfg.xn_delay_slots
    coop_lat = np.where(coop_att >= 0, per_round * (coop_att + 1), inf)
    deferred = (scheme == 0)[:, None] & ~benef
    if deferred.any():
        # waits for the DC beneficiary, then is served alone in single connectivity
        own = np.where(coop_att >= 0, 2.0 * (coop_att + 1), inf)
        wait = np.where(benef[:, 0], coop_lat[:, 0], coop_lat[:, 1])[:, None]
        coop_lat = np.where(deferred, wait + own, coop_lat)
    return base_lat, coop_lat, deferred


def run_comp_experiment(cfg: CompConfig, seed: int, keep_records: bool = False, backend=None) -> CompResult:
    draws = EpisodeDraws(seed, cfg)
    collect: dict[tuple, list] = {}
    counters = CounterSet()
    keep_b, keep_c, keep_s, keep_k = [], [], [], []
    names = {0: "DC_to_user", 1: "JT_CoMP", 2: "IC_CoMP"}

    def push(key, values):
        if values.size:
            collect.setdefault(key, []).append(values)

    for chunk, start in enumerate(range(0, cfg.episodes, CHUNK_EPISODES)):
        n = min(CHUNK_EPISODES, cfg.episodes - start)
        prof, scheme, is_llu, benef, base_att, coop_att = simulate_chunk(cfg, draws, chunk, n, backend)
        base_lat, coop_lat, deferred = _latencies(cfg, scheme, benef, base_att, coop_att)
        counters.add("episodes", n)
        counters.add("dropped_baseline", int((base_att < 0).sum()))
        counters.add("dropped_cooperative", int((coop_att < 0).sum()))
        for code, name in names.items():
            counters.add(f"episodes_{name}", int((scheme == code).sum()))
        for cls_name, mask in ((LLU, is_llu), (LTU, ~is_llu)):
            push(("SC_baseline", cls_name), base_lat[mask])
            push(("cooperative", cls_name), coop_lat[mask])
            push(("deferred", cls_name), coop_lat[mask & deferred])
            for code, name in names.items():
                sel = mask & (scheme == code)[:, None] & ~deferred
                push((name, cls_name), coop_lat[sel])
        if keep_records:
            keep_b.append(base_att)
            keep_c.append(coop_att)
            keep_s.append(scheme)
            keep_k.append(_interference_coefs(cfg, np.stack([prof[:, 1] >= cfg.p_dl, prof[:, 3] >= cfg.p_dl], 1)))
    groups = {k: EmpiricalDistribution().add(np.concatenate(v)) for k, v in sorted(collect.items())}
    res = CompResult(groups, counters)
    if keep_records:
        res.baseline_attempts = np.concatenate(keep_b)
        res.coop_attempts = np.concatenate(keep_c)
        res.decisions = np.concatenate(keep_s)
        res.baseline_coef = np.concatenate(keep_k)
    return res


def simulate_two_way(decision: CooperationDecision, cfg: CompConfig, rng: RngStream, user: int = 0,
                     icoef: float = 0.0, first_tx_slot: int = 1) -> TwoWayExchange:
    """One user's exchange under ``decision``, drawing fading per attempt from ``rng``.

    Data goes out in slot ``first_tx_slot``; feedback follows in the next slot;
    a NACK sends the retransmission in the slot after that.
    """
    slot = first_tx_slot
    per_round = 2 + (cfg.xn_delay_slots if decision.scheme != "SC_baseline" else 0)
    scheme = decision.scheme
    if scheme == "DC_to_user" and user not in decision.beneficiaries:
        scheme = "SC_baseline"
    for _ in range(cfg.max_attempts):
        u = rng.uniform(3)
        g = _gains(u, cfg.fading)
        if bool(single_attempt_success(scheme, cfg.snr_mean, cfg.target, g[0], g[1], g[2], icoef)):
            return TwoWayExchange(first_tx_slot, slot + per_round - 1)
        slot += per_round
    raise RuntimeError("no ACK within max_attempts")


CSV_HEADER = ("run", "scheme", "user_class", "avg_two_way_latency_slots", "p99_latency", "episodes")
ROW_SCHEMES = ("SC_baseline", "cooperative", "DC_to_user", "JT_CoMP", "IC_CoMP", "deferred")


def csv_rows(res: CompResult, run_label) -> list[tuple]:
    rows = []
    for scheme in ROW_SCHEMES:
        for cls_name in (LLU, LTU):
            d = res.groups.get((scheme, cls_name))
            if d is None or d.count == 0:
                continue
            rows.append((run_label, scheme, cls_name, d.mean(), d.percentile(99), d.count))
    return rows


def summarize(res: CompResult) -> dict:
    return {
        "llu_avg_latency_reduction": res.llu_reduction(),
        "groups": {f"{s}/{c}": {"mean": d.mean(), "p99": d.percentile(99), "samples": d.count}
                   for (s, c), d in res.groups.items()},
        "counters": res.counters.as_dict(),
    }


def with_samples(cfg: CompConfig, n: int) -> CompConfig:
    return replace(cfg, episodes=n)
