"""Fixed feature catalog extracted from normalized QBER/SKR windows.

Every window yields the same ordered set of names. Values that are undefined
for a window (zero variance, singular Yule-Walker system, vanishing DFT bin)
are reported as ``None`` (MISSING) and never as NaN.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import WindowSizeError
from .telemetry import DEFAULT_WINDOW, ScalerParams, Window, transform_arrays

MISSING = None

CHANNELS = ("qber", "skr")
QUANTILES = (0.1, 0.25, 0.75, 0.9)
ACF_LAGS = (1, 2, 3, 4)
DFT_BINS = 6
PHASE_EPS = 1e-12
SINGULAR_EPS = 1e-12
MIN_WINDOW = 5

# Group name -> per-channel feature names it produces, in catalog order.
_CHANNEL_GROUPS = {
    "stats": ["mean", "variance", "std", "min", "max", "median",
              *[f"q{int(round(q * 100)):02d}" for q in QUANTILES],
              "skewness", "kurtosis", "rms", "first", "last"],
    "changes": ["abs_sum_changes", "mean_abs_change", "max_abs_change",
                "count_above_mean", "count_below_mean", "longest_increasing_run",
                "zero_crossings"],
    "trend": ["trend_slope", "trend_intercept", "trend_r2"],
    "acf": [f"acf_lag{k}" for k in ACF_LAGS] + ["ar2_a1", "ar2_a2", "ar2_innov_var"],
    "dft": ([f"dft_mag{k}" for k in range(DFT_BINS)]
            + [f"dft_phase{k}" for k in range(1, DFT_BINS)]
            + ["spectral_centroid", "spectral_energy"]),
    "haar": ["haar_approx_energy", "haar_detail_energy"],
    "perm": ["perm_entropy3"],
}
CROSS_NAMES = ("cross__pearson", "cross__xcorr_lag1")

CHANNEL_FEATURES = tuple(n for names in _CHANNEL_GROUPS.values() for n in names)
CATALOG = tuple(f"{ch}__{n}" for ch in CHANNELS for n in CHANNEL_FEATURES) + CROSS_NAMES
CATALOG_INDEX = {name: i for i, name in enumerate(CATALOG)}
_GROUP_OF = {n: g for g, names in _CHANNEL_GROUPS.items() for n in names}


@dataclass(frozen=True)
class FeatureVector:
    """Ordered mapping feature name -> float or MISSING."""

    values: dict

    def __getitem__(self, name):
        return self.values[name]

    def names(self):
        return tuple(self.values)

    def to_array(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Dense float row with NaN marking MISSING (internal matrix form)."""
        names = self.names() if names is None else names
        return np.array([np.nan if self.values[n] is None else self.values[n]
                         for n in names], dtype=float)


def _is_constant(x: np.ndarray) -> bool:
    return bool(x.max() == x.min())


def _centered(x: np.ndarray):
    """Mean, centered series and population variance (exact zeros if constant)."""
    m = math.fsum(x.tolist()) / len(x)
    if _is_constant(x):
        return float(x[0]), np.zeros_like(x), 0.0
    c = x - m
    return m, c, float(np.mean(c * c))


def autocorrelation(series, lag: int):
    """r(lag) = sum_t c_t c_{t+lag} / (N var); MISSING for zero variance."""
    x = np.asarray(series, dtype=float)
    if not 1 <= lag < len(x):
        raise ValueError(f"lag {lag} out of range for series of length {len(x)}")
    _, c, var = _centered(x)
    if var == 0.0:
        return MISSING
    return float(np.dot(c[:-lag], c[lag:]) / (len(x) * var))


def yule_walker_ar2(series):
    """AR(2) coefficients and innovation variance from sample autocorrelations.

    Returns ``(a1, a2, innovation_var)`` or MISSING when the series is constant
    or the Toeplitz system is singular.
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 3:
        raise ValueError("need at least 3 points for an AR(2) fit")
    _, c, var = _centered(x)
    if var == 0.0:
        return MISSING
    n = len(x)
    r1 = float(np.dot(c[:-1], c[1:]) / (n * var))
    r2 = float(np.dot(c[:-2], c[2:]) / (n * var))
    det = 1.0 - r1 * r1
    if abs(det) < SINGULAR_EPS:
        return MISSING
    a1 = r1 * (1.0 - r2) / det
    a2 = (r2 - r1 * r1) / det
    return a1, a2, var * (1.0 - a1 * r1 - a2 * r2)


def dft_bins(series):
    """Magnitudes of bins 0..5 and phases of bins 1..5 (MISSING when |X_k| ~ 0)."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    spec = np.fft.fft(x)
    if _is_constant(x):
        spec = np.zeros_like(spec)
        spec[0] = n * x[0]
    bins = spec[np.arange(DFT_BINS) % n]
    mags = [float(abs(b)) for b in bins]
    phases = []
    for k in range(1, DFT_BINS):
        if mags[k] < PHASE_EPS:
            phases.append(MISSING)
            continue
        ph = math.atan2(bins[k].imag, bins[k].real)
        phases.append(math.pi if ph == -math.pi else ph)
    return mags, phases


def permutation_entropy(series, order: int = 3) -> float:
    """Shannon entropy (nats) of ordinal patterns; ties rank the earlier index lower."""
    x = np.asarray(series, dtype=float)
    if len(x) < order:
        raise ValueError(f"series shorter than order {order}")
    counts: dict = {}
    for i in range(len(x) - order + 1):
        pattern = tuple(np.argsort(x[i:i + order], kind="stable"))
        counts[pattern] = counts.get(pattern, 0) + 1
    total = len(x) - order + 1
    h = 0.0
    for cnt in counts.values():
        p = cnt / total
        h -= p * math.log(p)
    return h + 0.0


def haar_energies(series):
    """Energies of the level-1 Haar approximation and detail coefficients."""
    x = np.asarray(series, dtype=float)
    m = len(x) // 2 * 2
    even, odd = x[0:m:2], x[1:m:2]
    approx = (even + odd) / math.sqrt(2.0)
    detail = (even - odd) / math.sqrt(2.0)
    return float(np.dot(approx, approx)), float(np.dot(detail, detail))


def _longest_increasing_run(x) -> int:
    best = run = 1
    for i in range(1, len(x)):
        run = run + 1 if x[i] > x[i - 1] else 1
        best = max(best, run)
    return best


def _stats(x, m, c, var):
    n = len(x)
    out = {"mean": m, "variance": var, "std": math.sqrt(var),
           "min": float(x.min()), "max": float(x.max()),
           "median": float(np.median(x))}
    for q, v in zip(QUANTILES, np.quantile(x, QUANTILES)):
        out[f"q{int(round(q * 100)):02d}"] = float(v)
    if var == 0.0:
        out["skewness"] = MISSING
        out["kurtosis"] = MISSING
    else:
        out["skewness"] = float(np.mean(c ** 3) / var ** 1.5)
        out["kurtosis"] = float(np.mean(c ** 4) / var ** 2 - 3.0)
    out["rms"] = math.sqrt(float(np.dot(x, x)) / n)
    out["first"] = float(x[0])
    out["last"] = float(x[-1])
    return out


def _changes(x, m, c, var):
    d = np.abs(np.diff(x))
    return {
        "abs_sum_changes": float(d.sum()),
        "mean_abs_change": float(d.mean()),
        "max_abs_change": float(d.max()),
        "count_above_mean": float(np.count_nonzero(c > 0)),
        "count_below_mean": float(np.count_nonzero(c < 0)),
        "longest_increasing_run": float(_longest_increasing_run(x)),
        "zero_crossings": float(np.count_nonzero(((c[:-1] > 0) & (c[1:] < 0))
                                                 | ((c[:-1] < 0) & (c[1:] > 0)))),
    }


def _trend(x, m, c, var):
    n = len(x)
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    stt = float(np.dot(tc, tc))
    stx = float(np.dot(tc, c))
    slope = stx / stt
    r2 = MISSING if var == 0.0 else stx * stx / (stt * float(np.dot(c, c)))
    return {"trend_slope": slope, "trend_intercept": m - slope * float(t.mean()),
            "trend_r2": r2}


def _acf(x, m, c, var):
    out = {f"acf_lag{k}": autocorrelation(x, k) for k in ACF_LAGS}
    ar = yule_walker_ar2(x)
    if ar is MISSING:
        out.update(ar2_a1=MISSING, ar2_a2=MISSING, ar2_innov_var=MISSING)
    else:
        out.update(ar2_a1=ar[0], ar2_a2=ar[1], ar2_innov_var=ar[2])
    return out


def _dft(x, m, c, var):
    mags, phases = dft_bins(x)
    out = {f"dft_mag{k}": mags[k] for k in range(DFT_BINS)}
    out.update({f"dft_phase{k}": phases[k - 1] for k in range(1, DFT_BINS)})
    power = [mag * mag for mag in mags]
    ac_power = math.fsum(power[1:])
    if max(mags[1:]) < PHASE_EPS:
        out["spectral_centroid"] = MISSING
    else:
        out["spectral_centroid"] = math.fsum(k * power[k] for k in range(1, DFT_BINS)) / ac_power
    out["spectral_energy"] = math.fsum(power)
    return out


def _haar(x, m, c, var):
    a, d = haar_energies(x)
    return {"haar_approx_energy": a, "haar_detail_energy": d}


def _perm(x, m, c, var):
    return {"perm_entropy3": permutation_entropy(x, 3)}


_GROUP_FUNCS = {"stats": _stats, "changes": _changes, "trend": _trend, "acf": _acf,
                "dft": _dft, "haar": _haar, "perm": _perm}


def channel_features(series, groups: Iterable[str] | None = None) -> dict:
    """Per-channel features of an already-normalized series."""
    x = np.asarray(series, dtype=float)
    if len(x) < MIN_WINDOW:
        raise WindowSizeError(f"series length {len(x)} below minimum {MIN_WINDOW}")
    m, c, var = _centered(x)
    wanted = _CHANNEL_GROUPS if groups is None else set(groups)
    out = {}
    with np.errstate(divide="ignore", invalid="ignore", over="ignore", under="ignore"):
        for g in _CHANNEL_GROUPS:
            if g in wanted:
                out.update(_GROUP_FUNCS[g](x, m, c, var))
    return _finite_or_missing(out)


def _finite_or_missing(values: dict) -> dict:
    # under/overflow on extreme inputs is a degeneracy, never a NaN feature
    return {k: (v if v is MISSING or math.isfinite(v) else MISSING) for k, v in values.items()}


def cross_features(q, s) -> dict:
    q = np.asarray(q, dtype=float)
    s = np.asarray(s, dtype=float)
    _, cq, vq = _centered(q)
    _, cs, vs = _centered(s)
    if vq == 0.0 or vs == 0.0:
        return {"cross__pearson": MISSING, "cross__xcorr_lag1": MISSING}
    n = len(q)
    denom = math.sqrt(vq * vs)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _finite_or_missing({
            "cross__pearson": float(np.dot(cq, cs) / (n * denom)),
            "cross__xcorr_lag1": float(np.dot(cq[:-1], cs[1:]) / (n * denom)),
        })


def dependency_groups(names: Iterable[str]) -> dict:
    """Map channel -> feature groups needed to compute ``names``; 'cross' flag."""
    need: dict = {ch: set() for ch in CHANNELS}
    cross = False
    for name in names:
        if name not in CATALOG_INDEX:
            raise KeyError(f"unknown feature {name!r}")
        prefix, base = name.split("__", 1)
        if prefix == "cross":
            cross = True
        else:
            need[prefix].add(_GROUP_OF[base])
    need["cross"] = cross
    return need


def extract_arrays(qber_norm, skr_norm, names: Sequence[str] | None = None) -> FeatureVector:
    """Features from normalized channel arrays.

    With ``names`` only the feature groups those names depend on are computed
    and the returned vector holds exactly ``names`` in the given order.
    """
    if names is None:
        need = {ch: None for ch in CHANNELS}
        need["cross"] = True
    else:
        need = dependency_groups(names)
    values = {}
    for ch, series in zip(CHANNELS, (qber_norm, skr_norm)):
        if need[ch] is None or need[ch]:
            for k, v in channel_features(series, need[ch]).items():
                values[f"{ch}__{k}"] = v
    if need["cross"]:
        values.update(cross_features(qber_norm, skr_norm))
    order = CATALOG if names is None else names
    return FeatureVector({n: values[n] for n in order})


def extract(window: Window, scaler: ScalerParams, window_size: int = DEFAULT_WINDOW,
            names: Sequence[str] | None = None) -> FeatureVector:
    """Normalize a window with the reference scaler and extract its features."""
    if len(window) != window_size:
        raise WindowSizeError(f"window has {len(window)} samples, expected {window_size}")
    q, s = window.channels()
    qn, sn = transform_arrays(scaler, q, s)
    return extract_arrays(qn, sn, names)


def feature_matrix(vectors: Sequence[FeatureVector],
                   names: Sequence[str] | None = None) -> np.ndarray:
    """Stack feature vectors into a float matrix (NaN = MISSING)."""
    names = CATALOG if names is None else tuple(names)
    out = np.empty((len(vectors), len(names)), dtype=float)
    for i, fv in enumerate(vectors):
        out[i] = fv.to_array(names)
    return out


def write_feature_csv(path, vectors: Sequence[FeatureVector], labels=None,
                      names: Sequence[str] | None = None):
    """CSV export: header of names, empty cell for MISSING, optional label column."""
    names = CATALOG if names is None else tuple(names)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(names) + (["label"] if labels is not None else []))
        for i, fv in enumerate(vectors):
            row = ["" if fv[n] is None else repr(fv[n]) for n in names]
            if labels is not None:
                row.append(str(labels[i]))
            w.writerow(row)


def read_feature_csv(path):
    """Inverse of :func:`write_feature_csv`; returns (vectors, labels or None)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    has_label = header[-1] == "label"
    names = header[:-1] if has_label else header
    vectors, labels = [], []
    for row in rows[1:]:
        vals = {n: (None if cell == "" else float(cell)) for n, cell in zip(names, row)}
        vectors.append(FeatureVector(vals))
        if has_label:
            labels.append(int(row[-1]))
    return vectors, (labels if has_label else None)
