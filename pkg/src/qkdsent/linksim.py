"""Stochastic QKD link simulator producing labeled QBER/SKR telemetry.

The physical model is a signal-vs-background click model. Classical
co-propagating lasers add Raman background proportional to their launch power
(in mW), an EDFA adds a fixed ASE floor, and excess attenuation scales the
signal click probability. The key rate is the asymptotic secret fraction
``1 - f*H2(e) - H2(e)`` applied to the sifted rate.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DegenerateLinkError
from .telemetry import SampleRecord

CLASS_NAMES = (
    "Normal",
    "1 Laser",
    "2 Lasers",
    "4 Lasers & EDFA (18 mA)",
    "4 Lasers & EDFA (21 mA)",
    "4 Lasers & EDFA (24 mA)",
    "Photon loss 20%",
    "Photon loss 46%",
    "Photon loss 67%",
)
N_CLASSES = len(CLASS_NAMES)

# Power ladders of the coexistence experiments, dBm.
ONE_LASER_LADDER = (-23.5, -21.7, -20.5, -19.55, -18.84, -18.37, -18.1)
TWO_LASER_SECOND = (-21.6, -20.2, -19.4, -19.0, -18.8, -18.9, -19.2)
EDFA_POWERS = {
    18: (-17.9, -16.9, -15.6, -15.6),
    21: (-16.5, -15.7, -14.6, -14.3),
    24: (-15.5, -14.5, -13.4, -13.1),
}
EXCESS_LOSS_DB = {6: -0.9, 7: -1.9, 8: -3.1}

BASE_TS_MS = 1_700_000_000_000


@dataclass(frozen=True)
class LinkParams:
    pulse_rate: float = 1e9
    mu: float = 0.4
    base_attenuation_db: float = -14.0
    detector_efficiency: float = 0.2
    dark_count_prob: float = 1e-6
    intrinsic_error: float = 0.01
    # background click probability per mW of total classical launch power
    raman_coeff: float = 2.7e-3
    ase_floor: float = 1.0e-4
    sift_factor: float = 0.5
    ec_efficiency: float = 1.16
    block_seconds: float = 1.0
    skr_jitter: float = 0.01

    def __post_init__(self):
        for name in ("detector_efficiency", "dark_count_prob", "intrinsic_error",
                     "sift_factor"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if not self.mu > 0:
            raise ConfigError("mu must be positive")
        if self.base_attenuation_db > 0:
            raise ConfigError("base_attenuation_db must be <= 0")
        if self.ec_efficiency < 1:
            raise ConfigError("ec_efficiency must be >= 1")
        if self.raman_coeff < 0 or self.ase_floor < 0 or self.skr_jitter < 0:
            raise ConfigError("noise coefficients must be non-negative")
        if not self.block_seconds > 0 or not self.pulse_rate > 0:
            raise ConfigError("pulse_rate and block_seconds must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    """One acquisition run.

    ``laser_powers_dbm`` is a ladder: each step lists the powers of the lasers
    launched simultaneously, and the run cycles through the steps spending
    ``dwell_points`` samples on each. A single step means fixed powers.
    """

    class_id: int
    laser_powers_dbm: tuple = ()
    edfa_current_ma: int | None = None
    excess_attenuation_db: float = 0.0
    duration_points: int = 1000
    seed: int = 0
    ar_phi: float = 0.7
    ar_sigma: float = 0.03
    dwell_points: int = 10
    start_ts_ms: int = BASE_TS_MS
    period_ms: int = 1000

    def __post_init__(self):
        object.__setattr__(self, "laser_powers_dbm",
                           tuple(tuple(float(p) for p in step)
                                 for step in self.laser_powers_dbm))
        if self.class_id not in range(N_CLASSES):
            raise ConfigError(f"class_id must be in 0..{N_CLASSES - 1}, got {self.class_id}")
        if self.excess_attenuation_db > 0:
            raise ConfigError("excess_attenuation_db must be <= 0")
        if self.edfa_current_ma is not None and self.edfa_current_ma not in EDFA_POWERS:
            raise ConfigError(f"unsupported EDFA current {self.edfa_current_ma} mA")
        if not -1 < self.ar_phi < 1:
            raise ConfigError("ar_phi must lie in (-1, 1)")
        if self.ar_sigma < 0:
            raise ConfigError("ar_sigma must be >= 0")
        if self.duration_points < 1 or self.dwell_points < 1 or self.period_ms < 1:
            raise ConfigError("duration_points, dwell_points and period_ms must be >= 1")
        if self.class_id in EXCESS_LOSS_DB and (self.laser_powers_dbm
                                                or self.excess_attenuation_db >= 0):
            raise ConfigError("photon-loss classes need no lasers and A_exc < 0")
        if self.class_id in (1, 2, 3, 4, 5) and not self.laser_powers_dbm:
            raise ConfigError(f"class {self.class_id} requires laser powers")
        if self.class_id in (3, 4, 5) and self.edfa_current_ma is None:
            raise ConfigError(f"class {self.class_id} requires an EDFA current")
        if self.class_id == 0 and (self.laser_powers_dbm or self.excess_attenuation_db
                                   or self.edfa_current_ma is not None):
            raise ConfigError("class 0 is the unimpaired link")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["laser_powers_dbm"] = [list(step) for step in self.laser_powers_dbm]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)


def link_from_dict(d: dict) -> LinkParams:
    return LinkParams(**d)


def binary_entropy(x: float) -> float:
    """H2(x) in bits, with H2(0) = H2(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy undefined for {x!r}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def dbm_to_mw(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0)


def secret_fraction(link: LinkParams, qber: float) -> float:
    h = binary_entropy(qber)
    return max(0.0, 1.0 - link.ec_efficiency * h - h)


def _click_probs(link: LinkParams, powers_dbm, edfa: bool, excess_db: float):
    p_sig = (link.mu * 10.0 ** ((link.base_attenuation_db + excess_db) / 10.0)
             * link.detector_efficiency)
    p_bg = link.dark_count_prob + link.raman_coeff * math.fsum(dbm_to_mw(p) for p in powers_dbm)
    if edfa:
        p_bg += link.ase_floor
    return p_sig, p_bg


def _steady(link, powers_dbm, edfa, excess_db):
    p_sig, p_bg = _click_probs(link, powers_dbm, edfa, excess_db)
    total = p_sig + p_bg
    if total <= 0.0:
        raise DegenerateLinkError("no signal and no background clicks")
    qber = (link.intrinsic_error * p_sig + 0.5 * p_bg) / total
    r_sift = link.pulse_rate * total * link.sift_factor
    return qber, r_sift * secret_fraction(link, qber), r_sift


def steady_state(link: LinkParams, scenario: ScenarioConfig,
                 step: int = 0) -> tuple[float, float]:
    """Mean QBER and SKR for one ladder step of a scenario."""
    powers = scenario.laser_powers_dbm[step] if scenario.laser_powers_dbm else ()
    qber, skr, _ = _steady(link, powers, scenario.edfa_current_ma is not None,
                           scenario.excess_attenuation_db)
    return qber, skr


def simulate(link: LinkParams, scenario: ScenarioConfig) -> list[SampleRecord]:
    """Generate ``scenario.duration_points`` samples; deterministic in the seed.

    QBER follows ``mean*(1 + n_t) + b_t`` where ``n_t`` is an AR(1) process
    started from its stationary law and ``b_t`` is Gaussian sampling jitter of
    a binomial QBER estimate over one block of sifted bits.
    """
    rng = np.random.default_rng(scenario.seed)
    n_steps = max(1, len(scenario.laser_powers_dbm))
    edfa = scenario.edfa_current_ma is not None
    levels = []
    for k in range(n_steps):
        powers = scenario.laser_powers_dbm[k] if scenario.laser_powers_dbm else ()
        levels.append(_steady(link, powers, edfa, scenario.excess_attenuation_db))

    T = scenario.duration_points
    phi, sigma = scenario.ar_phi, scenario.ar_sigma
    eps = rng.standard_normal(T)
    z_bin = rng.standard_normal(T)
    z_skr = rng.standard_normal(T)
    n0 = rng.standard_normal() * sigma / math.sqrt(1.0 - phi * phi)

    records = []
    n = n0
    for t in range(T):
        n = phi * n + sigma * eps[t]
        q_mean, _, r_sift = levels[(t // scenario.dwell_points) % n_steps]
        q = q_mean * (1.0 + n)
        n_block = r_sift * link.block_seconds
        if math.isfinite(n_block):
            qc = min(max(q, 0.0), 1.0)
            q += math.sqrt(qc * (1.0 - qc) / n_block) * z_bin[t]
        q = min(max(q, 0.0), 1.0)
        skr = r_sift * secret_fraction(link, q) * (1.0 + link.skr_jitter * z_skr[t])
        records.append(SampleRecord(scenario.start_ts_ms + t * scenario.period_ms,
                                    q, max(0.0, skr)))
    return records


def preset(class_id: int, **overrides) -> ScenarioConfig:
    """Scenario reproducing one of the nine lab impairment classes."""
    if class_id not in range(N_CLASSES):
        raise ConfigError(f"unknown class id {class_id!r}; expected 0..{N_CLASSES - 1}")
    kw: dict = {"class_id": class_id}
    if class_id == 1:
        kw["laser_powers_dbm"] = tuple((p,) for p in ONE_LASER_LADDER)
    elif class_id == 2:
        kw["laser_powers_dbm"] = tuple(zip(ONE_LASER_LADDER, TWO_LASER_SECOND))
    elif class_id in (3, 4, 5):
        current = (18, 21, 24)[class_id - 3]
        kw["laser_powers_dbm"] = (EDFA_POWERS[current],)
        kw["edfa_current_ma"] = current
    elif class_id in EXCESS_LOSS_DB:
        kw["excess_attenuation_db"] = EXCESS_LOSS_DB[class_id]
    kw.update(overrides)
    return ScenarioConfig(**kw)


def config_hash(link: LinkParams, scenario: ScenarioConfig) -> str:
    doc = json.dumps({"link": asdict(link), "scenario": scenario.to_dict()},
                     sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def sidecar(link: LinkParams, scenario: ScenarioConfig, schema_version: int) -> dict:
    """Ground-truth metadata written next to a simulated log."""
    return {
        "schema_version": schema_version,
        "label": scenario.class_id,
        "class_name": CLASS_NAMES[scenario.class_id],
        "seed": scenario.seed,
        "config_hash": config_hash(link, scenario),
        "link": asdict(link),
        "scenario": scenario.to_dict(),
    }


def class_seed(seed: int, class_id: int) -> int:
    """Independent per-class seed derived from one corpus seed."""
    return int(np.random.SeedSequence([seed, class_id]).generate_state(1)[0])


def simulate_presets(link: LinkParams | None = None, points: int = 300, seed: int = 0,
                     classes=range(N_CLASSES), **overrides) -> list:
    """Simulate one log per preset class: ``[(records, scenario), ...]``."""
    link = link or LinkParams()
    out = []
    for c in classes:
        scenario = preset(c, duration_points=points, seed=class_seed(seed, c), **overrides)
        out.append((simulate(link, scenario), scenario))
    return out
