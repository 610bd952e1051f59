"""Clustering quality against ground-truth field types.

TP/FP/FN are defined combinatorially over pairwise assignments of unique
segment values; the F-score uses beta = 1/4 to weight precision four times
over recall. Coverage is the fraction of all trace bytes inside clustered
segments.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from math import comb

from .clustering import Clustering
from .dissimilarity import SegmentValue
from .errors import EvaluationUnavailableError
from .segmentation import Segment, Segmentation
from .traceio import Message

DEFAULT_BETA = 0.25


@dataclass
class ContingencyTable:
    """Per-cluster, per-noise and total counts of unique values by true type."""

    per_cluster: list[dict[str, int]]
    noise: dict[str, int]
    totals: dict[str, int]


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    tn_plus_fn: int
    tn: int
    precision: float
    recall: float
    f_score: float
    beta: float
    coverage: float


def value_labels(values: list[SegmentValue]) -> list[str]:
    """True type per unique value: majority over members, ties to the earliest.

    Raises when any member segment carries no truth label.
    """
    labels: list[str] = []
    for value in values:
        counts: Counter[str] = Counter()
        first_seen: dict[str, int] = {}
        for position, segment in enumerate(value.members):
            if segment.truth_type is None:
                raise EvaluationUnavailableError(
                    f"segment at message {segment.message_id} offset {segment.offset} "
                    "has no ground-truth type"
                )
            counts[segment.truth_type] += 1
            first_seen.setdefault(segment.truth_type, position)
        labels.append(max(counts, key=lambda l: (counts[l], -first_seen[l])))
    return labels


def label_segments_by_overlap(
    segments: list[Segment], truth: Segmentation
) -> list[Segment]:
    """Relabel segments with the true field type covering most of their bytes.

    Ties go to the earlier field. Used to score heuristic segmentations
    against a dissector-derived ground truth.
    """
    fields_by_message: dict[int, list[Segment]] = {}
    for field in truth.segments:
        fields_by_message.setdefault(field.message_id, []).append(field)
    for fields in fields_by_message.values():
        fields.sort(key=lambda f: f.offset)

    relabeled: list[Segment] = []
    for segment in segments:
        fields = fields_by_message.get(segment.message_id)
        if not fields:
            raise EvaluationUnavailableError(
                f"message {segment.message_id} is not covered by the ground truth"
            )
        best_label, best_overlap = None, 0
        for field in fields:
            overlap = min(
                segment.offset + segment.length, field.offset + field.length
            ) - max(segment.offset, field.offset)
            if overlap > best_overlap:
                best_label, best_overlap = field.truth_type, overlap
        if best_label is None:
            raise EvaluationUnavailableError(
                f"segment at message {segment.message_id} offset {segment.offset} "
                "overlaps no labeled ground-truth field"
            )
        relabeled.append(
            Segment(segment.message_id, segment.offset, segment.length, segment.bytes, best_label)
        )
    return relabeled


def contingency(clustering: Clustering, labels: list[str]) -> ContingencyTable:
    per_cluster = [
        dict(Counter(labels[m] for m in cluster.members))
        for cluster in clustering.clusters
    ]
    noise = dict(Counter(labels[m] for m in clustering.noise))
    totals: Counter[str] = Counter(noise)
    for counts in per_cluster:
        totals.update(counts)
    return ContingencyTable(per_cluster, noise, dict(totals))


def positives_negatives(clusters) -> tuple[int, int]:
    """(TP+FP, TN+FN): same-cluster pair count and ordered cross-cluster sum."""
    sizes = [len(c.members) for c in clusters]
    tp_fp = sum(comb(s, 2) for s in sizes)
    total = sum(sizes)
    tn_fn = total * total - sum(s * s for s in sizes)
    return tp_fp, tn_fn


def true_positives(table: ContingencyTable) -> int:
    return sum(
        comb(count, 2) for counts in table.per_cluster for count in counts.values()
    )


def false_negatives(table: ContingencyTable) -> int:
    """Missed same-type pairs: split across clusters, inside noise, and
    between noise and clusters."""
    total = 0
    for label, t_l in table.totals.items():
        t_nl = table.noise.get(label, 0)
        cross = sum(
            (t_l - counts.get(label, 0)) * counts.get(label, 0)
            for counts in table.per_cluster
        )
        cross += (t_l - t_nl) * t_nl
        total += cross // 2 + comb(t_nl, 2)
    return total


def f_beta(precision: float, recall: float, beta: float = DEFAULT_BETA) -> float:
    """(1+b^2)PR / (b^2 P + R), defined as 0 when precision = recall = 0."""
    denominator = beta * beta * precision + recall
    if denominator == 0:
        return 0.0
    return (1 + beta * beta) * precision * recall / denominator


def coverage(
    messages: list[Message], values: list[SegmentValue], clustering: Clustering
) -> float:
    """Clustered bytes (all segment instances) over all trace bytes."""
    denominator = sum(len(m.payload) for m in messages)
    if denominator == 0:
        return 0.0
    inferred = sum(
        segment.length
        for cluster in clustering.clusters
        for member in cluster.members
        for segment in values[member].members
    )
    return inferred / denominator


def evaluate_clustering(
    messages: list[Message],
    values: list[SegmentValue],
    clustering: Clustering,
    beta: float = DEFAULT_BETA,
) -> Metrics:
    """Full metric set for a clustering of labeled values."""
    labels = value_labels(values)
    table = contingency(clustering, labels)
    tp_fp, tn_fn = positives_negatives(clustering.clusters)
    tp = true_positives(table)
    fp = tp_fp - tp
    fn = false_negatives(table)
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    return Metrics(
        tp=tp,
        fp=fp,
        fn=fn,
        tn_plus_fn=tn_fn,
        tn=tn_fn - fn,
        precision=precision,
        recall=recall,
        f_score=f_beta(precision, recall, beta),
        beta=beta,
        coverage=coverage(messages, values, clustering),
    )
