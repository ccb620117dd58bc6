"""
Accuracy against MIN labels, prefetch top-1 accuracy and the report record.
"""

import csv
import logging
from dataclasses import asdict, dataclass, fields
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from joint_cache_lab.cachesim import useful_prefetch_ratio
from joint_cache_lab.errors import DataIntegrityError, SplitError
from joint_cache_lab.features import OOV_ID, PAD_ID
from joint_cache_lab.models import PolicyModel
from joint_cache_lab.nnkit import bce_loss
from joint_cache_lab.pipeline.data import PreparedData

logger = logging.getLogger(__name__)

EVAL_BATCH = 256
DECISION_THRESHOLD = 0.5


@dataclass
class ClassificationStats:
    correct: int
    total: int
    friendly_precision: float
    friendly_recall: float
    averse_precision: float
    averse_recall: float
    friendly_count: int
    averse_count: int

    @property
    def accuracy(self) -> float:
        return self.correct / self.total if self.total else 0.0


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def classification_stats(predicted_friendly: Sequence[bool], labels: Sequence[int]) -> ClassificationStats:
    """
    Compare friendly/averse decisions with oracle labels.

    Raises:
        SplitError: No samples to score
    """
    pred = np.asarray(predicted_friendly, dtype=bool)
    truth = np.asarray(labels, dtype=int) == 1
    if pred.size == 0:
        raise SplitError("cannot evaluate an empty split")
    if pred.shape != truth.shape:
        raise DataIntegrityError(f"{pred.size} predictions for {truth.size} labels")
    tp = int(np.sum(pred & truth))
    tn = int(np.sum(~pred & ~truth))
    return ClassificationStats(
        correct=tp + tn,
        total=int(pred.size),
        friendly_precision=_ratio(tp, int(pred.sum())),
        friendly_recall=_ratio(tp, int(truth.sum())),
        averse_precision=_ratio(tn, int((~pred).sum())),
        averse_recall=_ratio(tn, int((~truth).sum())),
        friendly_count=int(truth.sum()),
        averse_count=int((~truth).sum()),
    )


@dataclass
class SplitPredictions:
    p_friendly: Optional[np.ndarray]
    page_pred: Optional[np.ndarray]
    offset_pred: Optional[np.ndarray]
    labels: np.ndarray
    target_page: np.ndarray
    target_offset: np.ndarray
    has_target: np.ndarray


def predict_split(model: PolicyModel, data: PreparedData, split: str) -> SplitPredictions:
    """Run the model over a split in fixed order."""
    p, pages, offsets = [], [], []
    labels, target_page, target_offset, has_target = [], [], [], []
    for rbatch, pbatch in data.batches(split, EVAL_BATCH):
        out = model.predict(rbatch if model.has_replacement else None, pbatch if model.has_prefetch else None)
        if out.p_friendly is not None:
            p.append(out.p_friendly)
        if out.page_probs is not None:
            pages.append(out.page_probs.argmax(axis=1))
            offsets.append(out.offset_probs.argmax(axis=1))
        labels.append(rbatch.labels)
        target_page.append(pbatch.target_page)
        target_offset.append(pbatch.target_offset)
        has_target.append(pbatch.has_target)

    def join(parts):
        return np.concatenate(parts) if parts else None

    return SplitPredictions(
        p_friendly=join(p),
        page_pred=join(pages),
        offset_pred=join(offsets),
        labels=join(labels) if labels else np.zeros(0),
        target_page=join(target_page) if target_page else np.zeros(0, dtype=np.int64),
        target_offset=join(target_offset) if target_offset else np.zeros(0, dtype=np.int64),
        has_target=join(has_target) if has_target else np.zeros(0, dtype=bool),
    )


def replacement_metrics(model: PolicyModel, data: PreparedData, split: str) -> Tuple[float, float]:
    """(accuracy, mean BCE) of the replacement head on a split."""
    preds = predict_split(model, data, split)
    stats = classification_stats(preds.p_friendly >= DECISION_THRESHOLD, preds.labels)
    loss = float(np.mean([bce_loss(p, int(y)) for p, y in zip(preds.p_friendly, preds.labels)]))
    return stats.accuracy, loss


def oov_rates(data: PreparedData, split: str) -> Tuple[float, float]:
    """Fraction of non-pad PC and page history tokens that are OOV."""
    pcs = np.concatenate([s.pc_history for s in data.samples[split]] or [np.zeros(0, dtype=np.int64)])
    pages = np.concatenate([v.page_history for v in data.views[split]] or [np.zeros(0, dtype=np.int64)])

    def rate(tokens: np.ndarray) -> float:
        real = tokens[tokens != PAD_ID]
        return float(np.mean(real == OOV_ID)) if real.size else 0.0

    return rate(pcs), rate(pages)


@dataclass
class EvalReport:
    mode: str
    trace_name: str
    seed: int
    config_digest: str
    trace_digest: str
    accuracy: float
    correct: int
    total: int
    friendly_precision: float
    friendly_recall: float
    averse_precision: float
    averse_recall: float
    friendly_count: int
    averse_count: int
    train_size: int
    val_size: int
    test_size: int
    pc_oov_rate: float
    page_oov_rate: float
    page_accuracy: float
    offset_accuracy: float
    useful_prefetch_ratio: float
    learned_hit_rate: Optional[float] = None
    lru_hit_rate: Optional[float] = None

    def to_row(self) -> Dict[str, str]:
        row = {}
        for key, value in asdict(self).items():
            if value is None:
                row[key] = ""
            elif isinstance(value, float):
                row[key] = f"{value:.6f}"
            else:
                row[key] = str(value)
        return row

    @classmethod
    def from_row(cls, row: Dict[str, str]) -> "EvalReport":
        values = {}
        try:
            for f in fields(cls):
                raw = row[f.name]
                if f.type in (int, "int"):
                    values[f.name] = int(raw)
                elif f.type in (float, "float"):
                    values[f.name] = float(raw)
                elif f.type in (str, "str"):
                    values[f.name] = raw
                else:
                    values[f.name] = float(raw) if raw else None
        except (KeyError, ValueError) as e:
            raise DataIntegrityError(f"malformed report row: {e}") from e
        return cls(**values)


REPORT_FIELDS = [f.name for f in fields(EvalReport)]


def write_reports(reports: Sequence[EvalReport], stream: TextIO) -> None:
    writer = csv.DictWriter(stream, fieldnames=REPORT_FIELDS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        writer.writerow(report.to_row())


def read_reports(stream: TextIO) -> List[EvalReport]:
    reader = csv.DictReader(stream)
    if reader.fieldnames != REPORT_FIELDS:
        raise DataIntegrityError("report file header does not match the report format")
    return [EvalReport.from_row(row) for row in reader]


def evaluate_accuracy(
    model: PolicyModel,
    data: PreparedData,
    mode: str,
    seed: int,
    split: str = "test",
    deployment: Optional[Tuple[float, float]] = None,
) -> EvalReport:
    """
    Score a trained model on one split.

    Args:
        model: Trained model with a replacement head
        data: Prepared dataset the model was trained on
        mode: Training regime name recorded in the report
        seed: Seed recorded in the report
        split: Which split to score
        deployment: Optional (learned policy, LRU) demand hit rates

    Raises:
        SplitError: The split is empty
    """
    preds = predict_split(model, data, split)
    if preds.p_friendly is None:
        raise DataIntegrityError(f"{model.kind} model has no replacement head to evaluate")
    stats = classification_stats(preds.p_friendly >= DECISION_THRESHOLD, preds.labels)

    page_acc = offset_acc = 0.0
    if preds.page_pred is not None and preds.has_target.any():
        mask = preds.has_target
        page_acc = float(np.mean(preds.page_pred[mask] == preds.target_page[mask]))
        offset_acc = float(np.mean(preds.offset_pred[mask] == preds.target_offset[mask]))

    pc_oov, page_oov = oov_rates(data, split)
    if page_oov > 0.5:
        logger.warning(f"{page_oov:.0%} of {split} page tokens are out of vocabulary")
    train, val, test = data.sizes()
    report = EvalReport(
        mode=mode,
        trace_name=data.trace.source_name,
        seed=seed,
        config_digest=data.config.digest(),
        trace_digest=data.trace_digest,
        accuracy=stats.accuracy,
        correct=stats.correct,
        total=stats.total,
        friendly_precision=stats.friendly_precision,
        friendly_recall=stats.friendly_recall,
        averse_precision=stats.averse_precision,
        averse_recall=stats.averse_recall,
        friendly_count=stats.friendly_count,
        averse_count=stats.averse_count,
        train_size=train,
        val_size=val,
        test_size=test,
        pc_oov_rate=pc_oov,
        page_oov_rate=page_oov,
        page_accuracy=page_acc,
        offset_accuracy=offset_acc,
        useful_prefetch_ratio=useful_prefetch_ratio(data.sim),
        learned_hit_rate=deployment[0] if deployment else None,
        lru_hit_rate=deployment[1] if deployment else None,
    )
    logger.info(
        f"{mode} on {report.trace_name} (seed {seed}): accuracy {report.accuracy:.4f} "
        f"({report.correct}/{report.total}), page acc {page_acc:.3f}, offset acc {offset_acc:.3f}"
    )
    return report
