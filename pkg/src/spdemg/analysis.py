"""Diagnostics on trained weights and decoder outputs.

Covers top-k scoring, how well a fixed orthogonal basis diagonalizes a
set of edge matrices, angles between such bases across individuals,
per-electrode importance from a least-squares expansion of the dominant
basis column, and confusion-matrix collapse over articulation groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .errors import DegenerateInput, InvalidInput
from .linalg import lstsq
from .vocabularies import CONSONANT_GROUPS, CONSONANT_LABELS


def topk_accuracy(logits: np.ndarray, labels: Sequence[int], k: int) -> float:
    """Fraction of rows whose label is among the k best-scored classes.

    Ties in the scores are broken toward the lower class index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise InvalidInput(f"logits {logits.shape} do not align with labels {labels.shape}")
    if not (1 <= k <= logits.shape[1]):
        raise InvalidInput(f"k must be in [1, {logits.shape[1]}], got {k}")
    hits = 0
    for row, y in zip(logits, labels):
        order = np.argsort(-row, kind="stable")
        hits += y in order[:k]
    return hits / labels.shape[0]


def diag_ratio(E: np.ndarray, Q: np.ndarray) -> float:
    """Largest off-diagonal magnitude over largest diagonal magnitude of Q^T E Q."""
    E = np.asarray(E, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if E.shape != Q.shape or E.shape[0] != E.shape[1]:
        raise InvalidInput(f"shape mismatch: E {E.shape}, Q {Q.shape}")
    M = Q.T @ E @ Q
    diag_max = np.max(np.abs(np.diag(M)))
    if diag_max == 0.0:
        raise DegenerateInput("conjugated matrix has an all-zero diagonal")
    off = np.abs(M - np.diag(np.diag(M)))
    return float(off.max() / diag_max)


def basis_angle(Q_i: np.ndarray, Q_j: np.ndarray) -> float:
    """Angle between two basis matrices via the normalized trace inner product.

    ``arccos(trace(Qi Qj^T) / sqrt(trace(Qi Qi^T) trace(Qj Qj^T)))`` with
    the argument clamped to [-1, 1] against round-off.
    """
    Q_i = np.asarray(Q_i, dtype=np.float64)
    Q_j = np.asarray(Q_j, dtype=np.float64)
    if Q_i.shape != Q_j.shape:
        raise InvalidInput(f"shape mismatch: {Q_i.shape} vs {Q_j.shape}")
    num = np.trace(Q_i @ Q_j.T)
    den = np.sqrt(np.trace(Q_i @ Q_i.T)) * np.sqrt(np.trace(Q_j @ Q_j.T))
    return float(np.arccos(np.clip(num / den, -1.0, 1.0)))


@dataclass
class ImportanceResult:
    """Least-squares node coefficients and their rank statistics."""

    kappas: np.ndarray        # (n_trials, n_nodes)
    columns: np.ndarray       # dominant basis column index used per trial
    top1_counts: np.ndarray   # (n_nodes,) times each node ranked first
    top3_counts: np.ndarray   # (n_nodes,) times each node ranked in the top 3


def electrode_importance(
    edges: Sequence[np.ndarray], Q: np.ndarray, per_trial_column: bool = False
) -> ImportanceResult:
    """Expand the dominant basis column in terms of edge-matrix columns.

    For each trial solves ``E kappa = w`` in the least-squares sense,
    where ``w`` is the basis column carrying the largest diagonal value
    of ``Q^T E Q`` (averaged over the trial set by default, or chosen per
    trial with ``per_trial_column``). Nodes are ranked by ``|kappa|``
    descending with ties to the lower index; the result aggregates how
    often each node ranks first and in the top three.
    """
    if len(edges) == 0:
        raise InvalidInput("need at least one edge matrix")
    Q = np.asarray(Q, dtype=np.float64)
    d = Q.shape[0]
    if Q.shape != (d, d):
        raise InvalidInput("basis matrix must be square")
    mean_edge = np.mean(np.stack([np.asarray(E, dtype=np.float64) for E in edges]), axis=0)
    shared_col = int(np.argmax(np.diag(Q.T @ mean_edge @ Q)))
    kappas = np.zeros((len(edges), d))
    columns = np.zeros(len(edges), dtype=int)
    top1 = np.zeros(d, dtype=int)
    top3 = np.zeros(d, dtype=int)
    for t, E in enumerate(edges):
        E = np.asarray(E, dtype=np.float64)
        if E.shape != (d, d):
            raise InvalidInput(f"edge matrix {t} has shape {E.shape}, expected {(d, d)}")
        col = int(np.argmax(np.diag(Q.T @ E @ Q))) if per_trial_column else shared_col
        columns[t] = col
        kappa = lstsq(E, Q[:, col])
        kappas[t] = kappa
        order = np.argsort(-np.abs(kappa), kind="stable")
        top1[order[0]] += 1
        for node in order[:3]:
            top3[node] += 1
    return ImportanceResult(kappas=kappas, columns=columns,
                            top1_counts=top1, top3_counts=top3)


@dataclass(frozen=True)
class PhonemeGroups:
    """Named, disjoint label groups used to forgive within-group confusions."""

    groups: Dict[str, Tuple[str, ...]] = field(
        default_factory=lambda: dict(CONSONANT_GROUPS)
    )

    def __post_init__(self) -> None:
        seen: Dict[str, str] = {}
        for name, members in self.groups.items():
            for label in members:
                if label in seen:
                    raise InvalidInput(
                        f"label {label!r} appears in groups {seen[label]!r} and {name!r}"
                    )
                seen[label] = name

    @classmethod
    def consonants(cls) -> "PhonemeGroups":
        """The standard place-and-manner partition of the consonant labels."""
        groups = cls()
        assert set(CONSONANT_LABELS) == {l for g in groups.groups.values() for l in g}
        return groups

    def with_singletons(self, labels: Sequence[str]) -> "PhonemeGroups":
        """Extend the partition so every given label belongs to a group."""
        known = {l for members in self.groups.values() for l in members}
        extended = dict(self.groups)
        for label in labels:
            if label not in known:
                extended[label] = (label,)
                known.add(label)
        return PhonemeGroups(groups=extended)

    def group_of(self, label: str) -> str:
        for name, members in self.groups.items():
            if label in members:
                return name
        raise InvalidInput(f"label {label!r} belongs to no group")


def group_collapse(
    confusion: np.ndarray, labels: Sequence[str], groups: PhonemeGroups
) -> float:
    """Accuracy when within-group confusions count as correct.

    ``confusion[i, j]`` counts trials of true label ``labels[i]``
    predicted as ``labels[j]``. Always at least the raw accuracy.
    """
    confusion = np.asarray(confusion, dtype=np.float64)
    m = len(labels)
    if confusion.shape != (m, m):
        raise InvalidInput(f"confusion {confusion.shape} does not match {m} labels")
    total = confusion.sum()
    if total == 0:
        raise InvalidInput("confusion matrix is empty")
    group_ids = [groups.group_of(label) for label in labels]
    correct = 0.0
    for i in range(m):
        for j in range(m):
            if group_ids[i] == group_ids[j]:
                correct += confusion[i, j]
    return float(correct / total)


def raw_accuracy(confusion: np.ndarray) -> float:
    confusion = np.asarray(confusion, dtype=np.float64)
    total = confusion.sum()
    if total == 0:
        raise InvalidInput("confusion matrix is empty")
    return float(np.trace(confusion) / total)


def confusion_matrix(
    predictions: Sequence[int], labels: Sequence[int], n_classes: int
) -> np.ndarray:
    """Counts matrix with true labels on rows, predictions on columns."""
    C = np.zeros((n_classes, n_classes), dtype=int)
    for p, y in zip(predictions, labels):
        C[y, p] += 1
    return C


def per_class_accuracy(
    predictions: Sequence[int], labels: Sequence[int], n_classes: int
) -> List[float]:
    """Accuracy restricted to each true class (0.0 for absent classes)."""
    out = []
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    for c in range(n_classes):
        mask = labels == c
        if mask.sum() == 0:
            out.append(0.0)
        else:
            out.append(float((predictions[mask] == c).mean()))
    return out
