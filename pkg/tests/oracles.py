"""Independent brute-force reference implementations used by the tests.

Nothing here imports the package's feature, boosting or metric code; every
quantity is recomputed from its textbook definition with plain loops,
``math.fsum``, ``cmath`` or a generic linear solve.
"""

from __future__ import annotations

import cmath
import itertools
import math

import numpy as np

MISSING = None
PHASE_EPS = 1e-12


def minmax(x, lo, hi):
    if hi > lo:
        return [(v - lo) / (hi - lo) for v in x]
    return [0.5 for _ in x]


def _mean(x):
    return math.fsum(x) / len(x)


def _var(x):
    m = _mean(x)
    return math.fsum((v - m) ** 2 for v in x) / len(x)


def _constant(x):
    return all(v == x[0] for v in x)


def quantile(x, q):
    s = sorted(x)
    h = (len(s) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (h - lo) * (s[hi] - s[lo])


def acf(x, lag):
    if _constant(x):
        return MISSING
    m = _mean(x)
    num = math.fsum((x[t] - m) * (x[t + lag] - m) for t in range(len(x) - lag))
    return num / (len(x) * _var(x))


def yule_walker(x):
    if _constant(x):
        return MISSING
    r1, r2 = acf(x, 1), acf(x, 2)
    if abs(1.0 - r1 * r1) < 1e-12:
        return MISSING
    a = np.linalg.solve(np.array([[1.0, r1], [r1, 1.0]]), np.array([r1, r2]))
    return float(a[0]), float(a[1]), _var(x) * (1.0 - a[0] * r1 - a[1] * r2)


def dft(x, k):
    n = len(x)
    return sum(x[t] * cmath.exp(-2j * math.pi * k * t / n) for t in range(n))


def ordinal_pattern(triple):
    # rank by (value, position): ties rank the earlier index lower
    keyed = sorted(range(len(triple)), key=lambda i: (triple[i], i))
    return tuple(keyed)


def perm_entropy(x, order=3):
    counts = {}
    for i in range(len(x) - order + 1):
        p = ordinal_pattern(x[i:i + order])
        counts[p] = counts.get(p, 0) + 1
    total = len(x) - order + 1
    return -math.fsum((c / total) * math.log(c / total) for c in counts.values()) + 0.0


def channel(x):
    """Every per-channel feature by definition; keys match the catalog suffixes."""
    x = [float(v) for v in x]
    n = len(x)
    const = _constant(x)
    m = x[0] if const else _mean(x)
    var = 0.0 if const else _var(x)
    out = {"mean": m, "variance": var, "std": math.sqrt(var), "min": min(x), "max": max(x),
           "median": quantile(x, 0.5)}
    for q in (0.1, 0.25, 0.75, 0.9):
        out[f"q{int(round(q * 100)):02d}"] = quantile(x, q)
    if const:
        out["skewness"] = out["kurtosis"] = MISSING
    else:
        out["skewness"] = math.fsum((v - m) ** 3 for v in x) / n / var ** 1.5
        out["kurtosis"] = math.fsum((v - m) ** 4 for v in x) / n / var ** 2 - 3.0
    out["rms"] = math.sqrt(math.fsum(v * v for v in x) / n)
    out["first"], out["last"] = x[0], x[-1]

    diffs = [abs(x[i + 1] - x[i]) for i in range(n - 1)]
    out["abs_sum_changes"] = math.fsum(diffs)
    out["mean_abs_change"] = math.fsum(diffs) / (n - 1)
    out["max_abs_change"] = max(diffs)
    out["count_above_mean"] = float(sum(1 for v in x if v - m > 0 and not const))
    out["count_below_mean"] = float(sum(1 for v in x if v - m < 0 and not const))
    best = 1
    for i in range(n):
        j = i
        while j + 1 < n and x[j + 1] > x[j]:
            j += 1
        best = max(best, j - i + 1)
    out["longest_increasing_run"] = float(best)
    crossings = 0
    if not const:
        c = [v - m for v in x]
        crossings = sum(1 for i in range(n - 1)
                        if (c[i] > 0 > c[i + 1]) or (c[i] < 0 < c[i + 1]))
    out["zero_crossings"] = float(crossings)

    t = np.arange(n, dtype=float)
    A = np.column_stack([t, np.ones(n)])
    (slope, intercept), *_ = np.linalg.lstsq(A, np.array(x), rcond=None)
    out["trend_slope"], out["trend_intercept"] = float(slope), float(intercept)
    if const:
        out["trend_r2"] = MISSING
    else:
        fit = [slope * ti + intercept for ti in t]
        ss_res = math.fsum((x[i] - fit[i]) ** 2 for i in range(n))
        out["trend_r2"] = 1.0 - ss_res / (n * var)

    for lag in (1, 2, 3, 4):
        out[f"acf_lag{lag}"] = acf(x, lag)
    ar = yule_walker(x)
    out["ar2_a1"], out["ar2_a2"], out["ar2_innov_var"] = (MISSING,) * 3 if ar is MISSING else ar

    bins = [complex(n * x[0]) if (const and k == 0) else (0j if const else dft(x, k))
            for k in range(6)]
    mags = [abs(b) for b in bins]
    for k in range(6):
        out[f"dft_mag{k}"] = mags[k]
    for k in range(1, 6):
        out[f"dft_phase{k}"] = MISSING if mags[k] < PHASE_EPS else cmath.phase(bins[k])
    ac = math.fsum(mag * mag for mag in mags[1:])
    out["spectral_centroid"] = (MISSING if max(mags[1:]) < PHASE_EPS
                                else math.fsum(k * mags[k] ** 2 for k in range(1, 6)) / ac)
    out["spectral_energy"] = math.fsum(mag * mag for mag in mags)

    pairs = [(x[2 * i], x[2 * i + 1]) for i in range(n // 2)]
    out["haar_approx_energy"] = math.fsum((a + b) ** 2 / 2 for a, b in pairs)
    out["haar_detail_energy"] = math.fsum((a - b) ** 2 / 2 for a, b in pairs)
    out["perm_entropy3"] = perm_entropy(x)
    return out


def cross(q, s):
    if _constant(q) or _constant(s):
        return {"cross__pearson": MISSING, "cross__xcorr_lag1": MISSING}
    n = len(q)
    mq, ms = _mean(q), _mean(s)
    den = n * math.sqrt(_var(q) * _var(s))
    return {
        "cross__pearson": math.fsum((q[t] - mq) * (s[t] - ms) for t in range(n)) / den,
        "cross__xcorr_lag1": math.fsum((q[t] - mq) * (s[t + 1] - ms) for t in range(n - 1)) / den,
    }


def window_features(qber, skr, q_lo, q_hi, s_lo, s_hi):
    """Full catalog for one raw window, normalization included."""
    qn, sn = minmax(qber, q_lo, q_hi), minmax(skr, s_lo, s_hi)
    out = {}
    for name, series in (("qber", qn), ("skr", sn)):
        out.update({f"{name}__{k}": v for k, v in channel(series).items()})
    out.update(cross(qn, sn))
    return out


def features_close(name, got, want, rel=1e-9, abs_floor=1e-12):
    """Relative comparison; phases are compared on the circle."""
    if got is MISSING or want is MISSING:
        return got is want
    if "phase" in name:
        d = abs((got - want + math.pi) % (2 * math.pi) - math.pi)
        return d <= rel * math.pi + abs_floor
    return abs(got - want) <= rel * max(abs(got), abs(want)) + abs_floor


# -- boosting -----------------------------------------------------------------

def gain(GL, HL, GR, HR, lam, gamma):
    G, H = GL + GR, HL + HR
    return 0.5 * (GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - G ** 2 / (H + lam)) - gamma


def exhaustive_split(X, g, h, lam=1.0, gamma=0.0, mcw=1.0, tol=1e-12):
    """Best (feature, threshold, default_left, gain) by enumerating every
    feature x midpoint x missing direction; None when no split has gain > 0.

    Ties within ``tol`` (relative) resolve to the lowest feature, then the
    lowest threshold, then default_left=True.
    """
    n, F = X.shape
    cands = []
    for f in range(F):
        col = X[:, f]
        present = ~np.isnan(col)
        vals = sorted(set(col[present].tolist()))
        dirs = (True, False) if (~present).any() else (True,)
        for lo, hi in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (lo + hi)
            if not thr > lo:
                thr = hi
            for dleft in dirs:
                left = np.where(present, col < thr, dleft)
                GL = math.fsum(g[left])
                HL = math.fsum(h[left])
                GR = math.fsum(g[~left])
                HR = math.fsum(h[~left])
                if HL < mcw or HR < mcw:
                    continue
                cands.append((gain(GL, HL, GR, HR, lam, gamma), f, thr, dleft))
    if not cands:
        return None
    best = max(c[0] for c in cands)
    if not best > 0:
        return None
    close = [c for c in cands if c[0] >= best - tol * max(1.0, abs(best))]
    close.sort(key=lambda c: (c[1], c[2], not c[3]))
    g0, f, thr, dleft = close[0]
    return f, thr, dleft, g0


def tree_gain_totals(model_dict):
    """Per-feature gain summed over all serialized split nodes."""
    names = model_dict["feature_names"]
    totals = {nm: 0.0 for nm in names}
    for per_class in model_dict["trees"]:
        for tree in per_class:
            for f, gval in zip(tree["feature"], tree["gain"]):
                if f >= 0:
                    totals[names[f]] += gval
    return totals


# -- metrics ------------------------------------------------------------------

def hand_metrics(truth, pred, classes):
    out = {}
    for c in classes:
        tp = sum(1 for t, p in zip(truth, pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(truth, pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(truth, pred) if t == c and p != c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        out[c] = (prec, rec, f1)
    return out


def all_pattern_series(length=8):
    """First permutation of 0..length-1 whose consecutive triples realize all
    six ordinal patterns equally often (length 8 gives one of each)."""
    for perm in itertools.permutations(range(length)):
        pats = [ordinal_pattern(perm[i:i + 3]) for i in range(length - 2)]
        if len(set(pats)) == 6 and len(pats) == 6:
            return list(perm)
    return None
