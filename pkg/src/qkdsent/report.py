"""Classification metrics, Table-style summaries and misclassification charts."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import plotting


@dataclass
class EvalReport:
    class_names: list
    precision: list
    recall: list
    f1: list
    support: list
    predicted: list
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: list
    chord_edges: list
    flags: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return int(sum(self.support))

    @property
    def misclassified(self) -> int:
        return self.total - int(np.trace(np.asarray(self.confusion)))

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "precision": list(self.precision),
            "recall": list(self.recall),
            "f1": list(self.f1),
            "support": list(self.support),
            "predicted": list(self.predicted),
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": [list(r) for r in self.confusion],
            "chord_edges": [list(e) for e in self.chord_edges],
            "flags": self.flags,
            "notes": list(self.notes),
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        fields = dict(d)
        fields["chord_edges"] = [tuple(e) for e in d["chord_edges"]]
        return cls(**fields)

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")

    @classmethod
    def read_json(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_confusion_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["true\\predicted"] + [str(c) for c in range(len(self.class_names))])
            for c, row in enumerate(self.confusion):
                w.writerow([str(c)] + [str(v) for v in row])

    def table(self) -> str:
        """Plain-text table: per-class precision/recall/F1/support, accuracy, macro row."""
        width = max(len(n) for n in self.class_names) + 2
        head = f"{'Class':>5}  {'':<{width}}{'Precision':>10}{'Recall':>8}{'F1-Score':>10}{'# Data':>8}"
        lines = [head, "-" * len(head)]
        for c, name in enumerate(self.class_names):
            mark = "*" if self.flags.get(str(c)) else " "
            lines.append(f"{c:>5}{mark} {name:<{width}}{self.precision[c]:>10.2f}"
                         f"{self.recall[c]:>8.2f}{self.f1[c]:>10.2f}{self.support[c]:>8d}")
        lines.append("-" * len(head))
        lines.append(f"{'':>5}  {'Accuracy':<{width}}{'':>10}{'':>8}{self.accuracy:>10.2f}"
                     f"{self.total:>8d}")
        lines.append(f"{'':>5}  {'Macro Average':<{width}}{self.macro_precision:>10.2f}"
                     f"{self.macro_recall:>8.2f}{self.macro_f1:>10.2f}")
        for note in self.notes:
            lines.append(f"  * {note}")
        return "\n".join(lines)


def confusion_matrix(truth, predicted, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=int)
    for t, p in zip(truth, predicted):
        cm[int(t), int(p)] += 1
    return cm


def evaluate(truth: Sequence[int], predicted: Sequence[int],
             class_names: Sequence[str]) -> EvalReport:
    """Per-class precision/recall/F1, accuracy and unweighted macro averages.

    Zero denominators give 0 and set a flag for the class. A class that is
    neither present nor predicted is reported with zeros and left out of the
    macro averages.
    """
    truth = list(truth)
    predicted = list(predicted)
    if len(truth) != len(predicted):
        raise ValueError(f"length mismatch: {len(truth)} labels vs {len(predicted)} predictions")
    if not truth:
        raise ValueError("nothing to evaluate")
    C = len(class_names)
    cm = confusion_matrix(truth, predicted, C)
    tp = np.diag(cm)
    support = cm.sum(axis=1)
    n_pred = cm.sum(axis=0)
    precision, recall, f1, flags, active = [], [], [], {}, []
    notes = []
    for c in range(C):
        why = []
        if n_pred[c]:
            p = tp[c] / n_pred[c]
        else:
            p = 0.0
            why.append("precision: no predictions")
        if support[c]:
            r = tp[c] / support[c]
        else:
            r = 0.0
            why.append("recall: no true samples")
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        precision.append(float(p))
        recall.append(float(r))
        f1.append(float(f))
        if why:
            flags[str(c)] = why
        if support[c] or n_pred[c]:
            active.append(c)
        else:
            notes.append(f"class {c} ({class_names[c]}) absent from truth and predictions; "
                         "excluded from macro averages")
    edges = [(a, b, int(cm[a, b])) for a in range(C) for b in range(C)
             if a != b and cm[a, b]]
    return EvalReport(
        class_names=list(class_names),
        precision=precision, recall=recall, f1=f1,
        support=[int(s) for s in support], predicted=[int(v) for v in n_pred],
        accuracy=float(np.trace(cm) / cm.sum()),
        macro_precision=float(np.mean([precision[c] for c in active])),
        macro_recall=float(np.mean([recall[c] for c in active])),
        macro_f1=float(np.mean([f1[c] for c in active])),
        confusion=cm.tolist(), chord_edges=edges, flags=flags, notes=notes,
    )


def edges_path(svg_path) -> Path:
    p = Path(svg_path)
    return p.with_name(p.stem + ".edges.json")


def render_chord(report: EvalReport, path) -> Path:
    """Write the misclassification chord diagram as SVG plus its edges as JSON."""
    if len(report.class_names) < 2:
        raise ValueError("chord diagram needs at least two classes")
    fig = plotting.chord_figure(report.chord_edges, report.class_names,
                                title="Misclassifications (true → predicted)")
    path = plotting.save_figure(fig, Path(path))
    edges_path(path).write_text(json.dumps(
        {"class_names": report.class_names,
         "edges": [{"from": a, "to": b, "count": n} for a, b, n in report.chord_edges],
         "total_misclassified": report.misclassified}, indent=2) + "\n", encoding="utf-8")
    return path


def write_report_bundle(report: EvalReport, out_dir, stem: str = "report",
                        loss_trace=None) -> dict:
    """Report JSON, confusion CSV, Table text and the figures, side by side."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / f"{stem}.json",
        "confusion_csv": out_dir / f"{stem}_confusion.csv",
        "table": out_dir / f"{stem}_table.txt",
        "chord_svg": out_dir / f"{stem}_chord.svg",
        "confusion_png": out_dir / f"{stem}_confusion.png",
    }
    report.write_json(paths["json"])
    report.write_confusion_csv(paths["confusion_csv"])
    paths["table"].write_text(report.table() + "\n", encoding="utf-8")
    render_chord(report, paths["chord_svg"])
    plotting.save_figure(plotting.confusion_figure(report.confusion, report.class_names),
                         paths["confusion_png"])
    if loss_trace:
        paths["loss_png"] = plotting.save_figure(plotting.loss_figure(loss_trace),
                                                 out_dir / f"{stem}_loss.png")
    return paths
