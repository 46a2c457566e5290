"""Confusion matrices, per-class metrics, recall pruning and the
dataset-size sweep."""

import csv
import dataclasses
import io
import json

import numpy as np

from .dataset import GenSpec, generate, kfold
from .errors import InputError

RECALL_PRUNE_THRESHOLD = 0.85


def confusion(preds, labels, num_classes):
    """cm[i][j] = count of (true i, predicted j)."""
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1:
        raise InputError(
            f"preds and labels must be equal-length vectors, got "
            f"{preds.shape} vs {labels.shape}"
        )
    for name, v in (("preds", preds), ("labels", labels)):
        if v.size and (v.min() < 0 or v.max() >= num_classes):
            raise InputError(f"{name} contain ids outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


@dataclasses.dataclass
class ClassMetrics:
    precision: np.ndarray
    recall: np.ndarray


def metrics(cm):
    """Per-class precision/recall with the 0/0 := 0 convention."""
    cm = np.asarray(cm)
    diag = np.diag(cm).astype(np.float64)
    row = cm.sum(axis=1)
    col = cm.sum(axis=0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    return ClassMetrics(precision=precision, recall=recall)


def accuracy(cm):
    cm = np.asarray(cm)
    total = cm.sum()
    if total == 0:
        raise InputError("empty confusion matrix")
    return float(np.trace(cm) / total)


def pooled_cv(fold_accuracies):
    """Mean and sample standard deviation over folds, as fractions."""
    accs = np.asarray(list(fold_accuracies), dtype=np.float64)
    if accs.size == 0:
        raise InputError("no fold accuracies")
    mean = float(accs.mean())
    std = float(accs.std(ddof=1)) if accs.size > 1 else 0.0
    return mean, std


def format_accuracy(mean, std):
    """Render as percentage in the "a±b%" house style, e.g. 84.1±2.4%."""
    return f"{mean * 100:.1f}±{std * 100:.1f}%"


def prune_by_recall(cm, table, threshold=RECALL_PRUNE_THRESHOLD):
    """Drop command classes whose recall falls below the threshold.

    Background classes are exempt: they gate the recognizer and stay in
    the vocabulary regardless of score.  Returns (retained ids, restricted
    accuracy) where restricted accuracy is measured over test rows of the
    retained classes while predictions still range over the full label
    space (no retraining).
    """
    cm = np.asarray(cm)
    m = metrics(cm)
    retained = []
    for c in table:
        if c.kind == "background" or m.recall[c.id] >= threshold:
            retained.append(c.id)
    if not retained:
        raise InputError("pruning removed every class")
    rows = np.array(retained)
    kept_total = cm[rows].sum()
    if kept_total == 0:
        raise InputError("retained classes have no test rows")
    restricted = float(cm[rows, rows].sum() / kept_total)
    return retained, restricted


# ---------------------------------------------------------------------------
# Export helpers


def confusion_to_csv(cm, labels):
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["true\\pred"] + list(labels))
    for label, row in zip(labels, np.asarray(cm)):
        writer.writerow([label] + [int(v) for v in row])
    return buf.getvalue()


def confusion_to_json(cm, labels):
    return json.dumps(
        {"labels": list(labels), "counts": np.asarray(cm).tolist()}, indent=2
    )


# ---------------------------------------------------------------------------
# Dataset-size sweep


@dataclasses.dataclass
class SweepRow:
    size: int
    mean: float
    std: float
    fold_accuracies: list

    def formatted(self):
        return format_accuracy(self.mean, self.std)


@dataclasses.dataclass
class SweepReport:
    stage: int
    rows: list

    def to_json(self):
        return json.dumps(
            {
                "stage": self.stage,
                "rows": [dataclasses.asdict(r) for r in self.rows],
            },
            indent=2,
        )

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["clips_per_gesture", "mean", "std", "formatted"])
        for r in self.rows:
            writer.writerow([r.size, f"{r.mean:.4f}", f"{r.std:.4f}",
                             r.formatted()])
        return buf.getvalue()


def size_sweep(sizes, stage, config, gen_template=None, k=5, epochs=20,
               batch=16, lr=1e-3, seed=0, workers=None):
    """Cross-validate one dataset per size (clips per gesture) and record
    the pooled accuracy.  ``gen_template`` carries everything except stage
    and per-class counts."""
    from .model import cross_validate  # local import to avoid a cycle

    template = gen_template if gen_template is not None else GenSpec()
    rows = []
    for size in sizes:
        per_participant, rem = divmod(size, template.participants)
        if rem or per_participant < 1:
            raise InputError(
                f"size {size} not divisible by {template.participants} "
                "participants"
            )
        spec = dataclasses.replace(
            template, stage=stage, clips_per_class=per_participant,
            seed=template.seed + size + 1000 * stage,
        )
        clips, manifest = generate(spec)
        manifest = kfold(manifest, k=k, seed=spec.seed)
        result = cross_validate(
            clips, manifest, config, k=k, epochs=epochs, batch=batch, lr=lr,
            seed=spec.seed, workers=workers,
        )
        mean, std = pooled_cv(result.fold_accuracies)
        rows.append(SweepRow(size=size, mean=mean, std=std,
                             fold_accuracies=result.fold_accuracies))
    return SweepReport(stage=stage, rows=rows)


def format_sweep_table(reports):
    """Two-column accuracy table over stages, one row per dataset size."""
    by_stage = {r.stage: r for r in reports}
    stages = sorted(by_stage)
    sizes = []
    for rep in by_stage.values():
        for row in rep.rows:
            if row.size not in sizes:
                sizes.append(row.size)
    header = ["videos/gesture"] + [f"stage {s}" for s in stages]
    lines = ["  ".join(f"{h:>14}" for h in header)]
    for size in sizes:
        cells = [f"~{size}"]
        for s in stages:
            match = next((r for r in by_stage[s].rows if r.size == size), None)
            cells.append(match.formatted() if match else "-")
        lines.append("  ".join(f"{c:>14}" for c in cells))
    return "\n".join(lines)
