"""PHY abstraction shared by all mechanisms: fading, decoding, pathloss, RSRP/RSRQ, rate."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import RngStream

FADING_KINDS = ("rayleigh", "none")

# Fraction of REs carrying always-on reference signals, and the per-RE
# normalisation of RSRQ.  Together they pin an isolated cell to -3 dB when
# idle and -10.8 dB when fully loaded.
RS_ACTIVITY_FLOOR = 1.0 / 6.0
RSRQ_SCALE = 1.0 / 12.0


def db2lin(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0) if np.ndim(x) else 10.0 ** (x / 10.0)


def lin2db(x):
    return 10.0 * np.log10(x)


def thermal_noise_dbm(bandwidth_hz: float, noise_figure_db: float = 9.0) -> float:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


@dataclass(frozen=True)
class LinkModel:
    mean_snr_db: float = 10.0
    target_snr_db: float = 0.0
    fading: str = "rayleigh"

    def __post_init__(self):
        if self.fading not in FADING_KINDS:
            raise ValueError(f"unknown fading kind {self.fading!r}")
        if not math.isfinite(self.mean_snr_db):
            raise ValueError("mean_snr_db must be finite")

    @property
    def mean_linear(self) -> float:
        return 10.0 ** (self.mean_snr_db / 10.0)

    @property
    def target_linear(self) -> float:
        return 10.0 ** (self.target_snr_db / 10.0)

    def outage_probability(self) -> float:
        """P(SNR < target) for one slot."""
        if self.fading == "none":
            return 0.0 if self.mean_linear >= self.target_linear else 1.0
        return -math.expm1(-self.target_linear / self.mean_linear)

    def snr_from_uniform(self, u):
        """Inverse-CDF map from a uniform draw to an instantaneous linear SNR."""
        if self.fading == "none":
            return np.full(np.shape(u), self.mean_linear) if np.ndim(u) else self.mean_linear
        return -self.mean_linear * np.log1p(-np.asarray(u, dtype=float)) if np.ndim(u) else (
            -self.mean_linear * math.log1p(-u)
        )

    def succeeds(self, u):
        """Decode outcome evaluated directly on the uniform draw.

        ``snr_from_uniform`` is increasing in ``u`` so ``snr >= target`` is the
        event ``u >= outage_probability()``.  Working on ``u`` keeps every code
        path (event engine, compiled kernel, fallback) on identical floats.
        """
        return u >= self.outage_probability()


def draw_snr(link: LinkModel, rng: RngStream, size=None):
    return link.snr_from_uniform(rng.uniform(size))


def decode_outcome(snr, target) -> bool:
    if target <= 0:
        raise ValueError("target must be positive")
    return snr >= target


@dataclass(frozen=True)
class PathlossModel:
    """``intercept + slope * log10(d_km)``, floored at the minimum coupling loss."""

    name: str
    intercept_db: float
    slope_db: float
    min_coupling_loss_db: float = 70.0

    def __call__(self, distance_m):
        d = np.asarray(distance_m, dtype=float)
        if np.any(d <= 0):
            raise ValueError("distance must be positive")
        pl = self.intercept_db + self.slope_db * np.log10(d / 1000.0)
        pl = np.maximum(pl, self.min_coupling_loss_db)
        return float(pl) if pl.ndim == 0 else pl


MACRO_PATHLOSS = PathlossModel("macro", 128.1, 37.6)
SMALL_PATHLOSS = PathlossModel("small", 140.7, 36.7)
PATHLOSS_MODELS = {"macro": MACRO_PATHLOSS, "small": SMALL_PATHLOSS}


@dataclass(frozen=True)
class CellSignal:
    rsrp_dbm: float
    rsrq_db: float
    sinr_db: float


def rsrp(tx_power_dbm, pathloss_db):
    return np.subtract(tx_power_dbm, pathloss_db)


def rsrq(rsrp_linear, total_rx_power_linear, scale: float = RSRQ_SCALE):
    """RSRQ in dB: ``scale * RSRP / total received power``."""
    rsrp_linear = np.asarray(rsrp_linear, dtype=float)
    total = np.asarray(total_rx_power_linear, dtype=float)
    if np.any(total < RS_ACTIVITY_FLOOR * rsrp_linear * (1 - 1e-12)):
        raise ValueError("total received power below the serving cell's own contribution")
    out = 10.0 * np.log10(scale * rsrp_linear / total)
    return float(out) if out.ndim == 0 else out


def received_power_total(rsrp_linear, activity, noise_linear=0.0):
    """Total received power per CC: reference signals always on, data scaled by activity."""
    rsrp_linear = np.asarray(rsrp_linear, dtype=float)
    activity = np.clip(np.asarray(activity, dtype=float), 0.0, 1.0)
    weight = RS_ACTIVITY_FLOOR + (1.0 - RS_ACTIVITY_FLOOR) * activity
    return np.sum(rsrp_linear * weight, axis=-1) + noise_linear


def shannon_rate(sinr_linear, bandwidth_hz):
    if np.any(np.asarray(bandwidth_hz) <= 0):
        raise ValueError("bandwidth must be positive")
    if np.any(np.asarray(sinr_linear) < 0):
        raise ValueError("sinr must be non-negative")
    out = np.multiply(bandwidth_hz, np.log2(1.0 + np.asarray(sinr_linear, dtype=float)))
    return float(out) if np.ndim(out) == 0 else out
