"""End-to-end experiment orchestration.

Loads manifests, cuts trials into windows, builds regularized SPD edge
matrices, runs the configured decoder (nearest-centroid, k-medoids
clustering, the feed-forward SPD network, or the recurrent model), and
assembles a deterministic metrics report. Also hosts the distance-matrix
export, the weight diagnostics, and a synthetic demo-bundle generator
used by tests and the quickstart.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from . import analysis, decoders, gru, io, spdnet
from .errors import FormatError, InvalidInput
from .geometry import CholeskyPoint, to_cholesky
from .signal_graph import (
    Recording,
    TrialSpec,
    WindowSpec,
    bandpass_filter,
    edge_matrix,
    extract_windows,
    notch_filter,
    regularize,
)

MODEL_KINDS = ("mdm", "kmedoids", "spdnet", "gru")
SPLIT_KINDS = ("by-repetition-index", "by-session")


@dataclass(frozen=True)
class SplitRule:
    """How trials divide into train and test sets.

    ``by-repetition-index`` keeps the first ``train_repetitions`` of each
    label within every session for training; ``by-session`` trains on the
    sessions listed in ``train_sessions`` and tests on the rest.
    """

    kind: str = "by-repetition-index"
    train_repetitions: int = 3
    train_sessions: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in SPLIT_KINDS:
            raise InvalidInput(f"unknown split kind {self.kind!r}")
        if self.kind == "by-repetition-index" and self.train_repetitions < 1:
            raise InvalidInput("train_repetitions must be at least 1")
        if self.kind == "by-session" and len(self.train_sessions) == 0:
            raise InvalidInput("by-session split needs at least one training session")

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "train_repetitions": self.train_repetitions,
            "train_sessions": list(self.train_sessions),
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "SplitRule":
        return cls(
            kind=d.get("kind", "by-repetition-index"),
            train_repetitions=d.get("train_repetitions", 3),
            train_sessions=tuple(d.get("train_sessions", ())),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a pipeline run depends on, JSON round-trippable."""

    window: WindowSpec = WindowSpec()
    eta: float = 0.1
    center: bool = True
    model: str = "mdm"
    model_config: Dict = field(default_factory=dict)
    split: SplitRule = SplitRule()
    seed: int = 0
    bandpass: bool = False
    notch: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.eta < 1.0):
            raise InvalidInput(f"eta must be in [0, 1), got {self.eta}")
        if self.model not in MODEL_KINDS:
            raise InvalidInput(f"unknown model kind {self.model!r}")

    def to_dict(self) -> Dict:
        return {
            "window": {
                "mode": self.window.mode,
                "context": self.window.context,
                "step": self.window.step,
            },
            "eta": self.eta,
            "center": self.center,
            "model": self.model,
            "model_config": self.model_config,
            "split": self.split.to_dict(),
            "seed": self.seed,
            "bandpass": self.bandpass,
            "notch": self.notch,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "ExperimentConfig":
        w = d.get("window", {})
        return cls(
            window=WindowSpec(
                mode=w.get("mode", "whole-trial"),
                context=w.get("context", 1.5),
                step=w.get("step"),
            ),
            eta=d.get("eta", 0.1),
            center=d.get("center", True),
            model=d.get("model", "mdm"),
            model_config=d.get("model_config", {}),
            split=SplitRule.from_dict(d.get("split", {})),
            seed=d.get("seed", 0),
            bandpass=d.get("bandpass", False),
            notch=d.get("notch", False),
        )


# ---------------------------------------------------------------------------
# dataset assembly


@dataclass
class TrialSample:
    session_id: str
    label: str
    class_id: int
    repetition: int
    matrices: List[np.ndarray]  # regularized SPD edge matrices, one per window


def load_sessions(manifest_paths: Sequence[str | Path]):
    """Load every manifest with its recording."""
    out = []
    for p in manifest_paths:
        manifest = io.load_manifest(p)
        rec = io.manifest_recording(p, manifest)
        out.append((manifest, rec))
    vocab = out[0][0].vocabulary
    for m, _ in out[1:]:
        if m.vocabulary != vocab:
            raise InvalidInput("manifests disagree on the vocabulary")
    return out


def build_samples(
    sessions, config: ExperimentConfig
) -> List[TrialSample]:
    """Window every trial and build its regularized edge matrices."""
    samples: List[TrialSample] = []
    for manifest, rec in sessions:
        if config.bandpass:
            rec = bandpass_filter(rec)
        if config.notch:
            rec = notch_filter(rec)
        reps = manifest.repetition_indices()
        for trial, rep in zip(manifest.trials, reps):
            blocks = extract_windows(rec, trial, config.window)
            mats = [
                regularize(edge_matrix(b, center=config.center), config.eta)
                for b in blocks
            ]
            samples.append(
                TrialSample(
                    session_id=manifest.session_id,
                    label=trial.label,
                    class_id=trial.class_id,
                    repetition=rep,
                    matrices=mats,
                )
            )
    return samples


def split_samples(
    samples: Sequence[TrialSample], rule: SplitRule
) -> Tuple[List[TrialSample], List[TrialSample]]:
    train, test = [], []
    for s in samples:
        if rule.kind == "by-repetition-index":
            is_train = s.repetition < rule.train_repetitions
        else:
            is_train = s.session_id in rule.train_sessions
        (train if is_train else test).append(s)
    return train, test


def _single_matrix(s: TrialSample) -> np.ndarray:
    if len(s.matrices) != 1:
        raise InvalidInput(
            "this model needs one matrix per trial; use a whole-trial window"
        )
    return s.matrices[0]


# ---------------------------------------------------------------------------
# per-model runners


def _topk_table(logits: np.ndarray, labels: Sequence[int]) -> Dict[str, float]:
    n_classes = logits.shape[1]
    return {
        str(k): analysis.topk_accuracy(logits, labels, k)
        for k in range(1, min(5, n_classes) + 1)
    }


def _classifier_report(
    logits: np.ndarray, labels: List[int], label_names: List[str]
) -> Dict:
    n_classes = len(label_names)
    preds = [int(np.argmax(row)) for row in logits]
    confusion = analysis.confusion_matrix(preds, labels, n_classes)
    return {
        "labels": label_names,
        "accuracy": float(np.mean([p == y for p, y in zip(preds, labels)])),
        "per_class_accuracy": analysis.per_class_accuracy(preds, labels, n_classes),
        "confusion": confusion,
        "topk": _topk_table(logits, labels),
    }


def _label_names(vocabulary: Dict[str, int]) -> List[str]:
    return [label for label, _ in sorted(vocabulary.items(), key=lambda kv: kv[1])]


def _run_mdm(train, test, vocabulary) -> Dict:
    fit = [(to_cholesky(_single_matrix(s)), s.class_id) for s in train]
    model = decoders.mdm_fit(fit)
    logits = []
    labels = []
    for s in test:
        dist = decoders.mdm_distances(model, to_cholesky(_single_matrix(s)))
        full = np.full(len(vocabulary), -np.inf)
        for cid, d in zip(model.class_ids, dist):
            full[cid] = -d  # nearest centroid scores highest
        logits.append(full)
        labels.append(s.class_id)
    report = _classifier_report(np.stack(logits), labels, _label_names(vocabulary))
    report["n_train"] = len(train)
    report["n_test"] = len(test)
    return report


def _run_kmedoids(samples, vocabulary, config: ExperimentConfig) -> Dict:
    points = [to_cholesky(_single_matrix(s)) for s in samples]
    labels = [s.class_id for s in samples]
    D = decoders.pairwise_distances(points)
    k = config.model_config.get("k", len(vocabulary))
    assignments, medoids = decoders.k_medoids(D, k, seed=config.seed)
    report = {
        "labels": _label_names(vocabulary),
        "n_samples": len(samples),
        "k": k,
        "assignments": assignments,
        "medoids": medoids,
        "clustering_accuracy": decoders.clustering_accuracy(assignments, labels),
    }
    return report


def _spdnet_config(config: ExperimentConfig, channels: int, n_classes: int):
    mc = dict(config.model_config)
    mc.setdefault("layer_dims", [channels, channels])
    mc.setdefault("eps", 1e-4)
    mc.setdefault("n_classes", n_classes)
    mc.setdefault("learning_rate", 1e-2)
    mc.setdefault("epochs", 1000)
    mc.setdefault("seed", config.seed)
    return spdnet.SpdNetConfig.from_dict(mc)


def _gru_config(config: ExperimentConfig, channels: int, n_classes: int):
    mc = dict(config.model_config)
    mc.setdefault("frontend_dims", [channels, channels])
    mc.setdefault("eps", 1e-4)
    mc.setdefault("ode_hidden", 280)
    mc.setdefault("ode_steps", 10)
    mc.setdefault("n_classes", n_classes)
    mc.setdefault("learning_rate", 1e-2)
    mc.setdefault("epochs", 150)
    mc.setdefault("seed", config.seed)
    return gru.GruModelConfig.from_dict(mc)


def _run_spdnet(train, test, vocabulary, config: ExperimentConfig):
    channels = _single_matrix(train[0]).shape[0]
    net_config = _spdnet_config(config, channels, len(vocabulary))
    train_set = [(_single_matrix(s), s.class_id) for s in train]
    test_set = [(_single_matrix(s), s.class_id) for s in test]
    model, epochs = spdnet.spdnet_train(net_config, train_set, test_set)
    logits = model.logits_batch([E for E, _ in test_set])
    report = _classifier_report(logits, [y for _, y in test_set], _label_names(vocabulary))
    report["n_train"] = len(train)
    report["n_test"] = len(test)
    report["epochs"] = epochs
    report["parameter_count"] = model.parameter_count()
    return report, model


def _run_gru(train, test, vocabulary, config: ExperimentConfig):
    channels = train[0].matrices[0].shape[0]
    net_config = _gru_config(config, channels, len(vocabulary))
    train_set = [(s.matrices, s.class_id) for s in train]
    test_set = [(s.matrices, s.class_id) for s in test]
    model, epochs = gru.gru_train(net_config, train_set, test_set)
    logits = model.logits_batch([m for m, _ in test_set])
    report = _classifier_report(logits, [y for _, y in test_set], _label_names(vocabulary))
    report["n_train"] = len(train)
    report["n_test"] = len(test)
    report["epochs"] = epochs
    report["parameter_count"] = model.parameter_count()
    return report, model


def run_experiment(
    config: ExperimentConfig,
    manifest_paths: Sequence[str | Path],
    checkpoint_out: str | Path | None = None,
):
    """Execute the configured pipeline and return the metrics report."""
    sessions = load_sessions(manifest_paths)
    vocabulary = sessions[0][0].vocabulary
    samples = build_samples(sessions, config)
    if not samples:
        raise InvalidInput("manifests contain no trials")
    model = None
    if config.model == "kmedoids":
        report = _run_kmedoids(samples, vocabulary, config)
    else:
        train, test = split_samples(samples, config.split)
        if not train or not test:
            raise InvalidInput("split produced an empty train or test set")
        if config.model == "mdm":
            report = _run_mdm(train, test, vocabulary)
        elif config.model == "spdnet":
            report, model = _run_spdnet(train, test, vocabulary, config)
        else:
            report, model = _run_gru(train, test, vocabulary, config)
    report["model"] = config.model
    report["seed"] = config.seed
    report["config"] = config.to_dict()
    if checkpoint_out is not None:
        if model is None:
            raise InvalidInput(f"model kind {config.model!r} has no checkpoint to save")
        model.save(checkpoint_out)
    return report


def evaluate_checkpoint(
    checkpoint: str | Path,
    config: ExperimentConfig,
    manifest_paths: Sequence[str | Path],
) -> Dict:
    """Score a saved model on every trial described by the manifests."""
    magic = Path(checkpoint).read_bytes()[:4]
    sessions = load_sessions(manifest_paths)
    vocabulary = sessions[0][0].vocabulary
    samples = build_samples(sessions, config)
    labels = [s.class_id for s in samples]
    if magic == spdnet.SPDNET_MAGIC:
        model = spdnet.SpdNetModel.load(checkpoint)
        logits = model.logits_batch([_single_matrix(s) for s in samples])
    elif magic == gru.GRU_MAGIC:
        model = gru.GruModel.load(checkpoint)
        logits = model.logits_batch([s.matrices for s in samples])
    else:
        raise FormatError(f"{checkpoint}: unknown checkpoint magic {magic!r}")
    report = _classifier_report(logits, labels, _label_names(vocabulary))
    report["n_test"] = len(samples)
    report["checkpoint"] = str(checkpoint)
    report["parameter_count"] = model.parameter_count()
    return report


# ---------------------------------------------------------------------------
# distance export


def export_distances(
    manifest_paths: Sequence[str | Path],
    config: ExperimentConfig,
    output: str | Path,
) -> Dict:
    """Write the pairwise geodesic distance matrix and a row-label sidecar.

    The matrix goes to ``output`` as a plain numeric CSV (full float
    precision, parseable back bit-exactly); row metadata goes to
    ``<output>.labels.csv`` with one row per point.
    """
    sessions = load_sessions(manifest_paths)
    samples = build_samples(sessions, config)
    points: List[CholeskyPoint] = []
    rows = []
    for t_index, s in enumerate(samples):
        for w_index, E in enumerate(s.matrices):
            points.append(to_cholesky(E))
            rows.append((len(points) - 1, s.session_id, s.label, s.class_id,
                         t_index, w_index))
    D = decoders.pairwise_distances(points)
    output = Path(output)
    with open(output, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in D:
            writer.writerow([repr(float(v)) for v in row])
    sidecar = output.with_suffix(output.suffix + ".labels.csv")
    with open(sidecar, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "session_id", "label", "class_id",
                         "trial_index", "window_index"])
        writer.writerows(rows)
    return {"distances": str(output), "labels": str(sidecar), "count": len(points)}


def load_distance_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


# ---------------------------------------------------------------------------
# weight diagnostics


def _edges_for_analysis(manifest_paths, config: ExperimentConfig):
    sessions = load_sessions(manifest_paths)
    samples = build_samples(sessions, config)
    edges = [_single_matrix(s) for s in samples]
    return samples, edges


def _load_basis(checkpoint: str | Path) -> np.ndarray:
    model = spdnet.SpdNetModel.load(checkpoint)
    W = model.bimaps[0]
    if W.shape[0] != W.shape[1]:
        raise InvalidInput("first bilinear weight must be square to serve as a basis")
    if np.max(np.abs(W.T @ W - np.eye(W.shape[1]))) > 1e-6:
        raise InvalidInput("basis weight drifted off the orthogonal manifold")
    return W


def analyze_diag_ratio(
    checkpoint: str | Path,
    manifest_paths: Sequence[str | Path],
    config: ExperimentConfig,
    csv_out: str | Path | None = None,
) -> Dict:
    """Off/on-diagonal ratio per trial, before and after basis conjugation."""
    samples, edges = _edges_for_analysis(manifest_paths, config)
    Q = _load_basis(checkpoint)
    eye = np.eye(Q.shape[0])
    rows = [
        (i, s.label, analysis.diag_ratio(E, eye), analysis.diag_ratio(E, Q))
        for i, (s, E) in enumerate(zip(samples, edges))
    ]
    if csv_out is not None:
        with open(csv_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "label", "ratio_before", "ratio_after"])
            writer.writerows(rows)
    return {
        "n_trials": len(rows),
        "mean_ratio_before": float(np.mean([r[2] for r in rows])),
        "mean_ratio_after": float(np.mean([r[3] for r in rows])),
        "csv": str(csv_out) if csv_out is not None else None,
    }


def analyze_basis_angle(
    checkpoints: Sequence[str | Path], csv_out: str | Path | None = None
) -> Dict:
    """Pairwise angles between the basis matrices of several models."""
    if len(checkpoints) < 2:
        raise InvalidInput("need at least two checkpoints to compare")
    bases = [_load_basis(c) for c in checkpoints]
    n = len(bases)
    angles = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            a = analysis.basis_angle(bases[i], bases[j])
            angles[i, j] = a
            angles[j, i] = a
    if csv_out is not None:
        with open(csv_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "angle_radians"])
            for i in range(n):
                for j in range(n):
                    writer.writerow([i, j, repr(float(angles[i, j]))])
    return {"checkpoints": [str(c) for c in checkpoints],
            "angles": angles, "csv": str(csv_out) if csv_out is not None else None}


def analyze_importance(
    checkpoint: str | Path,
    manifest_paths: Sequence[str | Path],
    config: ExperimentConfig,
    csv_out: str | Path | None = None,
    per_trial_column: bool = False,
) -> Dict:
    """Node-importance coefficients and top-rank frequencies."""
    samples, edges = _edges_for_analysis(manifest_paths, config)
    Q = _load_basis(checkpoint)
    result = analysis.electrode_importance(edges, Q, per_trial_column=per_trial_column)
    if csv_out is not None:
        d = Q.shape[0]
        with open(csv_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["trial", "label", "column"] + [f"kappa_{i}" for i in range(d)])
            for i, s in enumerate(samples):
                writer.writerow([i, s.label, result.columns[i]]
                                + [repr(float(v)) for v in result.kappas[i]])
    return {
        "n_trials": len(samples),
        "top1_counts": result.top1_counts,
        "top3_counts": result.top3_counts,
        "csv": str(csv_out) if csv_out is not None else None,
    }


def analyze_collapse(metrics_path: str | Path) -> Dict:
    """Re-score a saved confusion matrix with within-group errors forgiven."""
    doc = json.loads(Path(metrics_path).read_text())
    if "confusion" not in doc or "labels" not in doc:
        raise FormatError(f"{metrics_path}: metrics lack a confusion matrix")
    confusion = np.asarray(doc["confusion"], dtype=np.float64)
    labels = list(doc["labels"])
    groups = analysis.PhonemeGroups.consonants().with_singletons(labels)
    return {
        "raw_accuracy": analysis.raw_accuracy(confusion),
        "collapsed_accuracy": analysis.group_collapse(confusion, labels, groups),
    }


# ---------------------------------------------------------------------------
# synthetic demo bundle


def write_demo_bundle(
    out_dir: str | Path,
    seed: int = 0,
    channels: int = 4,
    n_classes: int = 3,
    sessions: int = 2,
    repetitions: int = 4,
    sample_rate: float = 500.0,
    trial_seconds: float = 0.4,
) -> Dict:
    """Generate a small labeled dataset with well-separated classes.

    Each class drives the channels through a distinct mixing matrix, so
    covariance structure alone identifies the class. Returns the written
    manifest and recording paths.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    labels = [f"gesture-{i}" for i in range(n_classes)]
    vocab = {label: i for i, label in enumerate(labels)}
    mixers = []
    for c in range(n_classes):
        gains = 0.3 + 3.0 * rng.random(channels)
        M = np.diag(gains) + 0.2 * rng.standard_normal((channels, channels))
        mixers.append(M)
    trial_len = int(round(trial_seconds * sample_rate))
    gap = trial_len // 4
    manifest_paths = []
    recording_paths = []
    for s_idx in range(sessions):
        chunks = []
        trials = []
        cursor = 0
        for rep in range(repetitions):
            for c, label in enumerate(labels):
                noise = rng.standard_normal((channels, trial_len))
                chunks.append(mixers[c] @ noise)
                trials.append(
                    TrialSpec(
                        label=label,
                        class_id=c,
                        start_sample=cursor,
                        end_sample=cursor + trial_len,
                    )
                )
                cursor += trial_len
                chunks.append(0.05 * rng.standard_normal((channels, gap)))
                cursor += gap
        rec = Recording(sample_rate, np.concatenate(chunks, axis=1))
        rec_path = out_dir / f"session{s_idx}.semg"
        io.write_recording(rec_path, rec)
        manifest = io.Manifest(
            recording=rec_path.name,
            session_id=f"session{s_idx}",
            vocabulary=vocab,
            trials=trials,
        )
        man_path = out_dir / f"session{s_idx}.manifest.json"
        io.save_manifest(man_path, manifest)
        manifest_paths.append(str(man_path))
        recording_paths.append(str(rec_path))
    return {"manifests": manifest_paths, "recordings": recording_paths}
