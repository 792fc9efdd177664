"""End-to-end orchestration: datasets, temporal split, fitting, persistence and
the sliding-window stream predictor."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import classify, selection
from .errors import SchemaError, SplitError, TrainingError
from .features import CATALOG, extract, feature_matrix
from .linksim import CLASS_NAMES
from .telemetry import DEFAULT_WINDOW, SampleRecord, ScalerParams, Window, fit_scaler, read_log

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_K = 50


@dataclass
class Dataset:
    windows: list
    skipped_logs: int = 0

    @property
    def labels(self) -> list:
        return [w.label for w in self.windows]


@dataclass
class Split:
    train: list
    test: list
    dropped: dict = field(default_factory=dict)  # class -> train windows removed by the guard


def build_dataset(logs: Sequence, window_size: int = DEFAULT_WINDOW,
                  stride: int = 1) -> Dataset:
    """Cut labeled logs into sliding windows that never cross log boundaries.

    ``logs`` is a sequence of ``(records, label)`` pairs. Logs shorter than
    the window are skipped and counted.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    windows, skipped = [], 0
    for source, (records, label) in enumerate(logs):
        records = tuple(records)
        if len(records) < window_size:
            skipped += 1
            log.warning("log %d has %d records < window %d; skipped",
                        source, len(records), window_size)
            continue
        for start in range(0, len(records) - window_size + 1, stride):
            windows.append(Window(records[start:start + window_size], label,
                                  source=source, start=start))
    return Dataset(windows, skipped)


def temporal_split(windows: Sequence[Window], train_fraction: float = 0.8) -> Split:
    """Per class: the chronologically first ceil(f*n) windows train, the rest test.

    Train windows whose time span overlaps any test window of the same class
    are dropped so no source record is shared across the split.
    """
    by_class: dict = {}
    for w in windows:
        by_class.setdefault(w.label, []).append(w)
    train, test, dropped = [], [], {}
    for label in sorted(by_class):
        ws = sorted(by_class[label], key=lambda w: (w.first_ts, w.source, w.start))
        n = len(ws)
        if n < 5:
            raise SplitError(f"class {label} has only {n} windows (need >= 5)")
        n_train = math.ceil(train_fraction * n)
        head, tail = ws[:n_train], ws[n_train:]
        if not tail:
            raise SplitError(f"class {label}: no windows left for the test set")
        spans = [(w.first_ts, w.last_ts) for w in tail]
        kept = [w for w in head
                if not any(w.first_ts <= hi and lo <= w.last_ts for lo, hi in spans)]
        dropped[label] = len(head) - len(kept)
        if not kept:
            raise SplitError(f"class {label}: every training window overlaps the test set")
        train.extend(kept)
        test.extend(tail)
    return Split(train, test, dropped)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()[:16]


@dataclass
class TrainedPipeline:
    scaler: ScalerParams
    window_size: int
    selected_features: list
    ensemble: selection.BoostedEnsemble
    mlp: classify.MlpModel
    class_names: list
    config: dict = field(default_factory=dict)
    training_report: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if len(self.selected_features) != self.mlp.n_inputs:
            raise ValueError("selected feature count does not match MLP input width")
        if len(self.class_names) != self.mlp.n_classes:
            raise ValueError("class name count does not match MLP output width")

    def features(self, window: Window):
        return extract(window, self.scaler, self.window_size, names=self.selected_features)

    def predict_window(self, window: Window) -> np.ndarray:
        fv = self.features(window)
        return classify.forward(self.mlp, fv.to_array(self.selected_features))

    def predict_windows(self, windows: Iterable[Window]):
        """Batch path: argmax labels and probability rows, one window at a time
        so results match the stream predictor exactly."""
        probs = np.array([self.predict_window(w) for w in windows])
        return probs.argmax(axis=1), probs

    def baseline_predict(self, windows: Iterable[Window]):
        """Boosted-ensemble-only predictions over the full candidate catalog."""
        names = self.ensemble.feature_names
        X = feature_matrix([extract(w, self.scaler, self.window_size, names=names)
                            for w in windows], names)
        probs = selection.predict_proba_matrix(self.ensemble, X)
        return probs.argmax(axis=1), probs

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "scaler": self.scaler.to_dict(),
            "window_size": self.window_size,
            "selected_features": list(self.selected_features),
            "ensemble": self.ensemble.to_dict(),
            "mlp": self.mlp.to_dict(),
            "class_names": list(self.class_names),
            "config": self.config,
            "config_hash": config_digest(self.config),
            "training_report": self.training_report,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedPipeline":
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"unsupported model schema_version {version!r} "
                              f"(expected {SCHEMA_VERSION})")
        return cls(scaler=ScalerParams.from_dict(d["scaler"]),
                   window_size=int(d["window_size"]),
                   selected_features=list(d["selected_features"]),
                   ensemble=selection.BoostedEnsemble.from_dict(d["ensemble"]),
                   mlp=classify.MlpModel.from_dict(d["mlp"]),
                   class_names=list(d["class_names"]),
                   config=d.get("config", {}),
                   training_report=d.get("training_report", {}),
                   schema_version=version)

    def save(self, path):
        Path(path).write_text(canonical_json(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TrainedPipeline":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"model file is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise SchemaError("model file must hold a JSON object")
        return cls.from_dict(doc)


@dataclass
class Ranking:
    """Feature matrix of the training windows and the boosted ranker fit on it."""
    candidates: tuple
    X: np.ndarray
    labels: np.ndarray
    ensemble: selection.BoostedEnsemble


def fit_ranker(train: Sequence[Window], scaler: ScalerParams,
               boost_params: selection.BoostParams | None = None,
               window_size: int = DEFAULT_WINDOW,
               candidates: Sequence[str] = CATALOG,
               n_classes: int = len(CLASS_NAMES)) -> Ranking:
    boost_params = boost_params or selection.BoostParams()
    labels = np.array([w.label for w in train], dtype=int)
    if len(set(labels.tolist())) < 2:
        raise TrainingError("training set needs at least two classes")
    candidates = tuple(candidates)
    X = feature_matrix([extract(w, scaler, window_size, names=candidates) for w in train],
                       candidates)
    ensemble = selection.fit(X, labels, boost_params, feature_names=candidates,
                             class_count=n_classes)
    return Ranking(candidates, X, labels, ensemble)


def fit_pipeline(train: Sequence[Window], scaler: ScalerParams, k: int = DEFAULT_K,
                 boost_params: selection.BoostParams | None = None,
                 mlp_config: classify.TrainConfig | None = None,
                 window_size: int = DEFAULT_WINDOW,
                 candidates: Sequence[str] = CATALOG,
                 class_names: Sequence[str] = CLASS_NAMES,
                 ranking: Ranking | None = None) -> TrainedPipeline:
    """Two-stage fit: boosted ranker on all candidates, then the MLP on the top k.

    A precomputed ``ranking`` for the same windows can be passed to skip the
    first stage, e.g. when comparing several k on one corpus.
    """
    boost_params = boost_params or selection.BoostParams()
    mlp_config = mlp_config or classify.TrainConfig()
    candidates = tuple(candidates)
    if k > len(candidates):
        raise ValueError(f"k={k} exceeds catalog size {len(candidates)}")
    C = len(class_names)
    if ranking is None:
        ranking = fit_ranker(train, scaler, boost_params, window_size, candidates, C)
    elif ranking.candidates != candidates or len(ranking.labels) != len(train):
        raise ValueError("ranking was computed for different candidates or windows")
    ensemble, labels = ranking.ensemble, ranking.labels
    ranked = selection.gain_ranking(ensemble)
    selected = selection.top_k_features(ensemble, k)
    cols = [candidates.index(nm) for nm in selected]
    mlp = classify.train(ranking.X[:, cols], labels, mlp_config, n_classes=C)
    counts = np.bincount(labels, minlength=C)
    config = {
        "k": k,
        "window_size": window_size,
        "candidates": "all" if candidates == CATALOG else list(candidates),
        "boost": asdict(boost_params),
        "mlp": asdict(mlp_config),
    }
    report = {
        "n_train": int(len(train)),
        "class_counts": counts.tolist(),
        "positive_gain_features": len(ranked),
        "padded_features": max(0, k - len(ranked)),
        "final_loss": mlp.loss_trace[-1] if mlp.loss_trace else None,
        "top_gains": [[nm, ensemble.feature_gain[nm]] for nm in selected[:10]],
    }
    return TrainedPipeline(scaler=scaler, window_size=window_size,
                           selected_features=list(selected), ensemble=ensemble, mlp=mlp,
                           class_names=list(class_names), config=config,
                           training_report=report)


def predict_stream(pipeline: TrainedPipeline, sample: SampleRecord,
                   ring: Sequence[SampleRecord]):
    """Classify the window formed by ``ring`` (N-1 previous samples) and ``sample``.

    Returns ``(class_id, probabilities)``, or None while fewer than N-1 prior
    samples are available.
    """
    n = pipeline.window_size
    if len(ring) < n - 1:
        return None
    prior = tuple(ring)[len(ring) - (n - 1):]
    probs = pipeline.predict_window(Window(prior + (sample,)))
    return int(np.argmax(probs)), probs


class StreamPredictor:
    """Single-consumer ring buffer over a live sample stream."""

    def __init__(self, pipeline: TrainedPipeline):
        self.pipeline = pipeline
        self.ring: deque = deque(maxlen=pipeline.window_size - 1)

    def push(self, sample: SampleRecord):
        if self.ring and sample.timestamp <= self.ring[-1].timestamp:
            raise ValueError("timestamps must be strictly increasing")
        out = predict_stream(self.pipeline, sample, self.ring)
        self.ring.append(sample)
        return out


# -- corpus helpers ---------------------------------------------------------

def sidecar_path(log_path) -> Path:
    p = Path(log_path)
    return p.with_name(p.stem + ".label.json")


def load_corpus(directory) -> list:
    """Labeled logs of a corpus directory as ``(records, label, name)``.

    Every ``*.jsonl``/``*.csv`` log needs a ``<stem>.label.json`` sidecar with
    an integer ``label``; logs are returned sorted by file name.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"corpus directory {directory} not found")
    out = []
    for path in sorted(directory.iterdir()):
        if path.suffix not in (".jsonl", ".csv"):
            continue
        side = sidecar_path(path)
        if not side.exists():
            log.warning("no sidecar for %s; skipped", path.name)
            continue
        meta = json.loads(side.read_text(encoding="utf-8"))
        out.append((read_log(path), int(meta["label"]), path.name))
    if not out:
        raise TrainingError(f"no labeled logs found in {directory}")
    return out


def reference_window(logs: Sequence, window_size: int = DEFAULT_WINDOW,
                     normal_label: int = 0) -> Window:
    """The first N samples of the first normal-operation log."""
    for records, label, *_ in logs:
        if label == normal_label and len(records) >= window_size:
            return Window(tuple(records[:window_size]), label)
    raise TrainingError(f"no class-{normal_label} log with >= {window_size} samples "
                        "to serve as the reference window")


def reference_scaler(logs: Sequence, window_size: int = DEFAULT_WINDOW) -> ScalerParams:
    return fit_scaler(reference_window(logs, window_size), window_size)
