"""Second-order gradient-boosted trees with a softmax objective.

The ensemble serves two roles: ranking features by cumulative split gain
(the top-K selector) and acting as a standalone baseline classifier.

Splits use the exact greedy algorithm over presorted columns. MISSING values
(NaN in the internal matrix) are routed to whichever side gives the larger
gain, and that direction is stored on the node. A sample goes left when
``x < threshold``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import TrainingError
from .features import FeatureVector, feature_matrix

SCHEMA_VERSION = 1
HESS_FLOOR = 1e-16


@dataclass(frozen=True)
class BoostParams:
    rounds: int = 50
    max_depth: int = 3
    learning_rate: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    min_child_weight: float = 1.0


@dataclass
class Tree:
    """Flat node arrays; ``feature == -1`` marks a leaf."""

    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    default_left: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)
    gain: list = field(default_factory=list)
    cover: list = field(default_factory=list)

    def _add(self, feature=-1, threshold=0.0, default_left=True, value=0.0,
             gain=0.0, cover=0.0) -> int:
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.default_left.append(default_left)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.gain.append(gain)
        self.cover.append(cover)
        return len(self.feature) - 1

    @classmethod
    def constant(cls, value: float = 0.0) -> "Tree":
        """Single-leaf tree."""
        t = cls()
        t._add(value=value)
        return t

    def leaf(self, row) -> int:
        """Index of the leaf reached by one dense row (NaN = missing)."""
        node = 0
        while self.feature[node] >= 0:
            x = row[self.feature[node]]
            if x != x:
                go_left = self.default_left[node]
            else:
                go_left = x < self.threshold[node]
            node = self.left[node] if go_left else self.right[node]
        return node

    def predict_row(self, row) -> float:
        return self.value[self.leaf(row)]

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold, dtype=float)
        default_left = np.asarray(self.default_left, dtype=bool)
        left = np.asarray(self.left)
        right = np.asarray(self.right)
        node = np.zeros(len(X), dtype=int)
        rows = np.arange(len(X))
        while True:
            f = feature[node]
            active = f >= 0
            if not active.any():
                break
            x = X[rows[active], f[active]]
            nd = node[active]
            go_left = np.where(np.isnan(x), default_left[nd], x < threshold[nd])
            node[active] = np.where(go_left, left[nd], right[nd])
        return np.asarray(self.value, dtype=float)[node]

    def depth(self) -> int:
        def rec(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(rec(self.left[i]), rec(self.right[i]))
        return rec(0)

    def split_nodes(self):
        return [i for i, f in enumerate(self.feature) if f >= 0]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(feature=[int(v) for v in d["feature"]],
                   threshold=[float(v) for v in d["threshold"]],
                   default_left=[bool(v) for v in d["default_left"]],
                   left=[int(v) for v in d["left"]], right=[int(v) for v in d["right"]],
                   value=[float(v) for v in d["value"]],
                   gain=[float(v) for v in d["gain"]],
                   cover=[float(v) for v in d["cover"]])


@dataclass
class BoostedEnsemble:
    feature_names: tuple
    class_count: int
    params: BoostParams
    base_score: list
    trees: list  # trees[round][class]
    feature_gain: dict

    @property
    def learning_rate(self) -> float:
        return self.params.learning_rate

    def margins_row(self, row) -> np.ndarray:
        scores = np.array(self.base_score, dtype=float)
        for per_class in self.trees:
            for c, tree in enumerate(per_class):
                scores[c] += tree.predict_row(row)
        return scores

    def margins_matrix(self, X: np.ndarray) -> np.ndarray:
        scores = np.tile(np.array(self.base_score, dtype=float), (len(X), 1))
        for per_class in self.trees:
            for c, tree in enumerate(per_class):
                scores[:, c] += tree.predict_matrix(X)
        return scores

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "feature_names": list(self.feature_names),
            "class_count": self.class_count,
            "params": asdict(self.params),
            "base_score": list(self.base_score),
            "trees": [[t.to_dict() for t in per_class] for per_class in self.trees],
            "feature_gain": dict(self.feature_gain),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedEnsemble":
        return cls(feature_names=tuple(d["feature_names"]),
                   class_count=int(d["class_count"]),
                   params=BoostParams(**d["params"]),
                   base_score=[float(v) for v in d["base_score"]],
                   trees=[[Tree.from_dict(t) for t in per_class] for per_class in d["trees"]],
                   feature_gain={k: float(v) for k, v in d["feature_gain"].items()})


def split_gain(GL, HL, GR, HR, reg_lambda, gamma):
    """Regularized second-order gain of splitting a node into (L, R)."""
    G, H = GL + GR, HL + HR
    return 0.5 * (GL * GL / (HL + reg_lambda) + GR * GR / (HR + reg_lambda)
                  - G * G / (H + reg_lambda)) - gamma


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


TIE_RTOL = 1e-12


@njit(cache=True)
def _scan_splits(order, xs, g, h, lam, mcw, floor):
    """Exhaustive split scan over presorted columns.

    Candidates are visited in (feature, position, default_left=True before
    False) order and scored by GL^2/(HL+lam) + GR^2/(HR+lam). With
    ``floor = -inf`` the maximum score is returned; otherwise the first
    candidate whose score reaches ``floor``. Returns (score, feature,
    position, default_left, GL, HL, G, H); feature is -1 when no admissible
    candidate exists.
    """
    F, n = order.shape
    G = 0.0
    H = 0.0
    for j in range(n):
        G += g[order[0, j]]
        H += h[order[0, j]]
    first = floor > -np.inf
    best = -np.inf
    best_f = -1
    best_i = -1
    best_left = True
    best_gl = 0.0
    best_hl = 0.0
    for f in range(F):
        n_present = n
        while n_present > 0 and np.isnan(xs[f, n_present - 1]):
            n_present -= 1
        gm = 0.0
        hm = 0.0
        for j in range(n_present, n):
            gm += g[order[f, j]]
            hm += h[order[f, j]]
        has_miss = n_present < n
        gl = 0.0
        hl = 0.0
        for i in range(n_present - 1):
            gl += g[order[f, i]]
            hl += h[order[f, i]]
            if not xs[f, i + 1] > xs[f, i]:
                continue
            # missing rows sent left
            a_g = gl + gm
            a_h = hl + hm
            b_h = H - a_h
            if a_h >= mcw and b_h >= mcw:
                b_g = G - a_g
                sc = a_g * a_g / (a_h + lam) + b_g * b_g / (b_h + lam)
                if (first and sc >= floor) or (not first and sc > best):
                    best, best_f, best_i, best_left, best_gl, best_hl = sc, f, i, True, a_g, a_h
                    if first:
                        return best, best_f, best_i, best_left, best_gl, best_hl, G, H
            if has_miss:
                b_h = H - hl
                if hl >= mcw and b_h >= mcw:
                    b_g = G - gl
                    sc = gl * gl / (hl + lam) + b_g * b_g / (b_h + lam)
                    if (first and sc >= floor) or (not first and sc > best):
                        best, best_f, best_i, best_left, best_gl, best_hl = sc, f, i, False, gl, hl
                        if first:
                            return best, best_f, best_i, best_left, best_gl, best_hl, G, H
    return best, best_f, best_i, best_left, best_gl, best_hl, G, H


@njit(cache=True)
def _partition(order, xs, mask):
    F, n = order.shape
    n_left = 0
    for j in range(n):
        if mask[order[0, j]]:
            n_left += 1
    ol = np.empty((F, n_left), dtype=order.dtype)
    xl = np.empty((F, n_left), dtype=xs.dtype)
    orr = np.empty((F, n - n_left), dtype=order.dtype)
    xr = np.empty((F, n - n_left), dtype=xs.dtype)
    for f in range(F):
        a = 0
        b = 0
        for j in range(n):
            r = order[f, j]
            if mask[r]:
                ol[f, a] = r
                xl[f, a] = xs[f, j]
                a += 1
            else:
                orr[f, b] = r
                xr[f, b] = xs[f, j]
                b += 1
    return ol, xl, orr, xr


class _Node:
    """Presorted view of one node: row j of ``order`` lists the node's samples
    sorted by feature j (missing last) and ``xs`` holds the matching values."""

    __slots__ = ("order", "xs")

    def __init__(self, order, xs):
        self.order = order
        self.xs = xs

    @classmethod
    def root(cls, X):
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)
        return cls(order, np.take_along_axis(np.ascontiguousarray(X.T), order, axis=1))

    def split(self, mask):
        ol, xl, orr, xr = _partition(self.order, self.xs, mask)
        return _Node(ol, xl), _Node(orr, xr)


def best_split(node: _Node, g, h, params: BoostParams):
    """Best (gain, feature, threshold, default_left) for one node, or None.

    Candidate thresholds are midpoints between consecutive distinct present
    values. Ties go to the lowest feature index, then the lowest threshold,
    then ``default_left=True``; gains within a relative ``TIE_RTOL`` of the
    maximum count as ties, so summation-order noise between equivalent
    partitions cannot override that order. A feature without missing values
    in the node only gets ``default_left=True`` since both directions
    coincide there.
    """
    if node.order.shape[1] < 2:
        return None
    lam, mcw = params.reg_lambda, params.min_child_weight
    top, f, *_, G, H = _scan_splits(node.order, node.xs, g, h, lam, mcw, -np.inf)
    if f < 0:
        return None
    parent = G * G / (H + lam)
    top_gain = 0.5 * (top - parent) - params.gamma
    if not top_gain > 0.0:
        return None
    cutoff = top_gain - TIE_RTOL * max(1.0, abs(top_gain))
    floor = 2.0 * (cutoff + params.gamma) + parent
    _, f, i, dleft, gl, hl, G, H = _scan_splits(node.order, node.xs, g, h, lam, mcw, floor)
    gain = split_gain(gl, hl, G - gl, H - hl, lam, params.gamma)
    if not gain > 0.0:
        return None
    lo, hi = node.xs[f, i], node.xs[f, i + 1]
    thr = 0.5 * (lo + hi)
    if not thr > lo:
        thr = hi
    return gain, int(f), float(thr), bool(dleft)


def _build_tree(X, g, h, root: _Node, params: BoostParams, gain_acc: np.ndarray) -> Tree:
    tree = Tree()
    lam, lr = params.reg_lambda, params.learning_rate

    def grow(node: _Node, depth):
        rows = node.order[0]
        G = float(g[rows].sum())
        H = float(h[rows].sum())
        idx = tree._add(value=-lr * G / (H + lam), cover=H)
        if depth >= params.max_depth:
            return idx
        split = best_split(node, g, h, params)
        if split is None:
            return idx
        gain, f, thr, dleft = split
        col = X[rows, f]
        mask = np.zeros(len(X), dtype=bool)
        with np.errstate(invalid="ignore"):
            mask[rows] = np.where(np.isnan(col), dleft, col < thr)
        tree.feature[idx] = f
        tree.threshold[idx] = thr
        tree.default_left[idx] = dleft
        tree.gain[idx] = gain
        tree.value[idx] = 0.0
        gain_acc[f] += gain
        left, right = node.split(mask)
        tree.left[idx] = grow(left, depth + 1)
        tree.right[idx] = grow(right, depth + 1)
        return idx

    grow(root, 0)
    return tree


def _as_matrix(features, feature_names):
    if isinstance(features, np.ndarray):
        if feature_names is None:
            raise ValueError("feature_names required with a matrix input")
        return np.asarray(features, dtype=float), tuple(feature_names)
    features = list(features)
    if not features:
        raise TrainingError("empty training input")
    names = tuple(feature_names) if feature_names is not None else features[0].names()
    return feature_matrix(features, names), names


def fit(features, labels: Sequence[int], params: BoostParams | None = None,
        feature_names: Sequence[str] | None = None,
        class_count: int | None = None) -> BoostedEnsemble:
    """Fit a multiclass boosted ensemble.

    ``features`` is a list of FeatureVector or an (n, F) float matrix with NaN
    for MISSING (then ``feature_names`` is required). The result is a pure
    function of the inputs; no randomness is involved.
    """
    params = params or BoostParams()
    X, names = _as_matrix(features, feature_names)
    y = np.asarray(labels, dtype=int)
    if len(X) == 0:
        raise TrainingError("empty training input")
    if len(X) != len(y):
        raise TrainingError(f"{len(X)} feature rows but {len(y)} labels")
    if y.min() < 0:
        raise TrainingError("negative class label")
    C = int(class_count if class_count is not None else y.max() + 1)
    if y.max() >= C:
        raise TrainingError(f"label {y.max()} outside class_count {C}")
    counts = np.bincount(y, minlength=C)
    if np.count_nonzero(counts) < 2:
        raise TrainingError("need at least two classes with examples")
    n = len(X)
    prior = counts / n
    base = [math.log(p) if p > 0 else math.log(1e-12) for p in prior]
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    root = _Node.root(X)
    scores = np.tile(np.array(base), (n, 1))
    gain_acc = np.zeros(X.shape[1])
    trees = []
    for _ in range(params.rounds):
        P = softmax(scores)
        per_class = []
        for c in range(C):
            g = P[:, c] - Y[:, c]
            h = np.maximum(P[:, c] * (1.0 - P[:, c]), HESS_FLOOR)
            tree = _build_tree(X, g, h, root, params, gain_acc)
            per_class.append(tree)
        for c, tree in enumerate(per_class):
            scores[:, c] += tree.predict_matrix(X)
        trees.append(per_class)
    return BoostedEnsemble(feature_names=names, class_count=C, params=params,
                           base_score=base, trees=trees,
                           feature_gain={nm: float(gain_acc[j]) for j, nm in enumerate(names)})


def predict_proba(ensemble: BoostedEnsemble, features) -> np.ndarray:
    """Class probabilities for one FeatureVector (or dense row)."""
    if isinstance(features, FeatureVector):
        row = features.to_array(ensemble.feature_names)
    else:
        row = np.asarray(features, dtype=float)
    return softmax(ensemble.margins_row(row))


def predict_proba_matrix(ensemble: BoostedEnsemble, X: np.ndarray) -> np.ndarray:
    return softmax(ensemble.margins_matrix(np.asarray(X, dtype=float)))


def gain_ranking(ensemble: BoostedEnsemble) -> list:
    """Features with positive gain, by gain descending then catalog order."""
    names = ensemble.feature_names
    idx = [j for j, nm in enumerate(names) if ensemble.feature_gain[nm] > 0.0]
    idx.sort(key=lambda j: (-ensemble.feature_gain[names[j]], j))
    return [names[j] for j in idx]


def top_k_features(ensemble: BoostedEnsemble, k: int) -> list:
    """Top-k features by cumulative gain, padded in catalog order if needed.

    Use :func:`gain_ranking` to see how many entries carry positive gain.
    """
    names = ensemble.feature_names
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(names):
        raise ValueError(f"k={k} exceeds catalog size {len(names)}")
    ranked = gain_ranking(ensemble)[:k]
    if len(ranked) < k:
        used = set(ranked)
        ranked += [nm for nm in names if nm not in used][:k - len(ranked)]
    return ranked
