"""Clip-label aggregation, nearest-neighbour coding and evaluation reports."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .spd import LogDescriptor

REPORT_FORMAT = "covact-eval"
REPORT_VERSION = 1


@dataclass
class ClipLabelVector:
    labels: list
    scores: list = field(default_factory=list)

    def __post_init__(self):
        if self.scores and len(self.scores) != len(self.labels):
            raise ValueError("one score per clip label required")

    def __len__(self):
        return len(self.labels)


def majority_vote(clips: ClipLabelVector | Sequence) -> object:
    """Most frequent clip label.

    Ties go to the label with the smallest mean clip score (residual or
    divergence), then to the smallest label.
    """
    if not isinstance(clips, ClipLabelVector):
        clips = ClipLabelVector(list(clips))
    if len(clips) == 0:
        raise ValueError("cannot vote over zero clips")
    counts = Counter(clips.labels)
    top = max(counts.values())
    tied = [lab for lab, c in counts.items() if c == top]
    if len(tied) == 1:
        return tied[0]

    def mean_score(lab):
        if not clips.scores:
            return 0.0
        vals = [s for l, s in zip(clips.labels, clips.scores) if l == lab]
        return float(np.mean(vals))

    return min(tied, key=lambda lab: (mean_score(lab), str(lab)))


def nn_classify_clip(query, train: Sequence[LogDescriptor]) -> tuple[object, float]:
    """Label and Euclidean distance of the nearest training descriptor (first one on ties)."""
    if len(train) == 0:
        raise ValueError("empty training set")
    q = np.asarray(query.v if isinstance(query, LogDescriptor) else query, dtype=np.float64)
    mat = np.stack([t.v for t in train])
    if mat.shape[1] != q.shape[0]:
        raise ValueError(f"query length {q.shape[0]} does not match training length {mat.shape[1]}")
    dist = np.linalg.norm(mat - q, axis=1)
    i = int(np.argmin(dist))
    return train[i].label, float(dist[i])


@dataclass
class EvalReport:
    classes: list
    confusion: np.ndarray  # rows: true class, columns: predicted class
    method: str = ""
    features: str = ""
    split: str = ""

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.total) if self.total else 0.0

    @property
    def precision(self) -> np.ndarray:
        col = self.confusion.sum(axis=0)
        return np.divide(np.diag(self.confusion), col, out=np.zeros(len(self.classes)), where=col > 0)

    @property
    def recall(self) -> np.ndarray:
        row = self.confusion.sum(axis=1)
        return np.divide(np.diag(self.confusion), row, out=np.zeros(len(self.classes)), where=row > 0)

    @property
    def f_measure(self) -> np.ndarray:
        p, r = self.precision, self.recall
        s = p + r
        return np.divide(2 * p * r, s, out=np.zeros(len(self.classes)), where=s > 0)

    def record(self) -> dict:
        return {
            "method": self.method,
            "features": self.features,
            "split": self.split,
            "classes": [str(c) for c in self.classes],
            "total": self.total,
            "accuracy": round(self.accuracy, 12),
            "precision": [round(float(v), 12) for v in self.precision],
            "recall": [round(float(v), 12) for v in self.recall],
            "f_measure": [round(float(v), 12) for v in self.f_measure],
            "confusion": self.confusion.astype(int).tolist(),
        }

    def table(self) -> str:
        head = f"method={self.method or '-'} features={self.features or '-'} split={self.split or '-'}"
        w = max([len(str(c)) for c in self.classes] + [5])
        lines = [head, f"{'class':<{w}}  {'prec':>6}  {'rec':>6}  {'F':>6}"]
        for c, p, r, f in zip(self.classes, self.precision, self.recall, self.f_measure):
            lines.append(f"{str(c):<{w}}  {p:6.3f}  {r:6.3f}  {f:6.3f}")
        lines.append(f"accuracy {self.accuracy:.4f} ({int(np.trace(self.confusion))}/{self.total})")
        return "\n".join(lines)

    def confusion_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + [str(c) for c in self.classes])
        for c, row in zip(self.classes, self.confusion):
            w.writerow([str(c)] + [int(v) for v in row])
        return buf.getvalue()


def evaluate(predictions: Sequence, ground_truth: Sequence, classes: Sequence, **meta) -> EvalReport:
    if len(predictions) != len(ground_truth):
        raise ValueError("predictions and ground truth differ in length")
    classes = list(classes)
    index = {c: i for i, c in enumerate(classes)}
    conf = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(predictions, ground_truth):
        if p not in index or t not in index:
            raise ValueError(f"label {p if p not in index else t!r} not in class set")
        conf[index[t], index[p]] += 1
    return EvalReport(classes, conf, **meta)


def reports_to_jsonl(reports: Sequence[EvalReport]) -> str:
    """Versioned header record followed by one JSON record per report."""
    lines = [json.dumps({"format": REPORT_FORMAT, "version": REPORT_VERSION}, sort_keys=True)]
    lines += [json.dumps(r.record(), sort_keys=True) for r in reports]
    return "\n".join(lines) + "\n"


def reports_from_jsonl(text: str) -> list[EvalReport]:
    lines = [l for l in text.splitlines() if l.strip()]
    if not lines:
        raise ValueError("empty report file")
    head = json.loads(lines[0])
    if head.get("format") != REPORT_FORMAT or head.get("version") != REPORT_VERSION:
        raise ValueError(f"unsupported report header {head}")
    out = []
    for line in lines[1:]:
        r = json.loads(line)
        out.append(
            EvalReport(r["classes"], np.array(r["confusion"], dtype=np.int64), r["method"], r["features"], r["split"])
        )
    return out


def ablation_table(reports: Sequence[EvalReport]) -> str:
    """Accuracy grid, feature sets as rows and methods as columns."""
    feats = list(dict.fromkeys(r.features for r in reports))
    methods = list(dict.fromkeys(r.method for r in reports))
    acc = {(r.features, r.method): r.accuracy for r in reports}
    w = max([len(f) for f in feats] + [8])
    lines = [f"{'features':<{w}}" + "".join(f"  {m:>6}" for m in methods)]
    for f in feats:
        cells = "".join(f"  {acc[(f, m)]:6.3f}" if (f, m) in acc else f"  {'-':>6}" for m in methods)
        lines.append(f"{f:<{w}}" + cells)
    return "\n".join(lines)
