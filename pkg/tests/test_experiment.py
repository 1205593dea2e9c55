import json
import time
from pathlib import Path

import numpy as np
import pytest

from spdemg import experiment, io
from spdemg.errors import InvalidInput
from spdemg.experiment import (
    ExperimentConfig,
    SplitRule,
    build_samples,
    evaluate_checkpoint,
    load_sessions,
    run_experiment,
    split_samples,
    write_demo_bundle,
)
from spdemg.io import Manifest, save_manifest, write_recording
from spdemg.signal_graph import Recording, TrialSpec, WindowSpec


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    d = tmp_path_factory.mktemp("bundle")
    return write_demo_bundle(d)


def _mdm_config(**kws):
    base = dict(
        window=WindowSpec(mode="whole-trial"),
        eta=0.1,
        center=True,
        model="mdm",
        split=SplitRule(kind="by-repetition-index", train_repetitions=3),
        seed=0,
    )
    base.update(kws)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# configuration


def test_config_rejects_bad_eta():
    with pytest.raises(InvalidInput):
        ExperimentConfig(eta=1.5)
    with pytest.raises(InvalidInput):
        ExperimentConfig.from_dict({"eta": 1.5})


def test_config_round_trip():
    cfg = _mdm_config()
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


def test_split_rule_validation():
    with pytest.raises(InvalidInput):
        SplitRule(kind="nope")
    with pytest.raises(InvalidInput):
        SplitRule(kind="by-session", train_sessions=())


# ---------------------------------------------------------------------------
# splits


def test_split_by_repetition(bundle):
    sessions = load_sessions(bundle["manifests"])
    samples = build_samples(sessions, _mdm_config())
    train, test = split_samples(samples, SplitRule(train_repetitions=3))
    # 2 sessions x 3 classes x 4 repetitions -> 3 train + 1 test per class/session
    assert len(train) == 18 and len(test) == 6
    for s in train:
        assert s.repetition < 3
    keys = {(s.session_id, s.label, s.repetition) for s in train}
    assert all((s.session_id, s.label, s.repetition) not in keys for s in test)


def test_split_by_session(bundle):
    sessions = load_sessions(bundle["manifests"])
    samples = build_samples(sessions, _mdm_config())
    rule = SplitRule(kind="by-session", train_sessions=("session0",))
    train, test = split_samples(samples, rule)
    assert {s.session_id for s in train} == {"session0"}
    assert {s.session_id for s in test} == {"session1"}
    keys = {(s.session_id, s.label, s.repetition) for s in train}
    assert all((s.session_id, s.label, s.repetition) not in keys for s in test)


# ---------------------------------------------------------------------------
# end-to-end runs


def test_mdm_on_fixture(bundle):
    t0 = time.time()
    report = run_experiment(_mdm_config(), bundle["manifests"])
    assert report["accuracy"] == 1.0
    assert time.time() - t0 < 5.0
    assert report["model"] == "mdm"
    assert report["topk"]["1"] == 1.0
    confusion = np.asarray(report["confusion"])
    assert confusion.sum() == report["n_test"]


def test_kmedoids_on_fixture(bundle):
    cfg = ExperimentConfig(model="kmedoids", eta=0.1, seed=0)
    report = run_experiment(cfg, bundle["manifests"])
    assert report["clustering_accuracy"] == 1.0
    assert len(report["assignments"]) == report["n_samples"]


def test_spdnet_on_fixture_early_loss_decreases(bundle):
    cfg = ExperimentConfig(
        model="spdnet",
        eta=0.1,
        seed=0,
        model_config={
            "layer_dims": [4, 4],
            "epochs": 60,
            "learning_rate": 0.01,
            "n_classes": 3,
        },
    )
    report = run_experiment(cfg, bundle["manifests"])
    losses = [e["train_loss"] for e in report["epochs"][:10]]
    assert all(a > b for a, b in zip(losses, losses[1:]))
    assert report["accuracy"] == 1.0


def test_run_deterministic(bundle):
    cfg = _mdm_config()
    r1 = io.dump_metrics(run_experiment(cfg, bundle["manifests"]))
    r2 = io.dump_metrics(run_experiment(cfg, bundle["manifests"]))
    assert r1 == r2


def test_gru_on_fixture(bundle):
    cfg = ExperimentConfig(
        window=WindowSpec(mode="sliding", context=0.1, step=0.05),
        model="gru",
        eta=0.1,
        seed=0,
        model_config={
            "frontend_dims": [4, 3],
            "ode_hidden": 6,
            "ode_steps": 2,
            "epochs": 10,
            "learning_rate": 0.2,
            "n_classes": 3,
        },
    )
    report = run_experiment(cfg, bundle["manifests"])
    assert report["accuracy"] >= 0.8
    assert report["parameter_count"] > 0


def test_checkpoint_train_and_eval(bundle, tmp_path):
    cfg = ExperimentConfig(
        model="spdnet",
        eta=0.1,
        seed=0,
        model_config={
            "layer_dims": [4, 4],
            "epochs": 60,
            "learning_rate": 0.01,
            "n_classes": 3,
        },
    )
    ckpt = tmp_path / "model.spdn"
    report = run_experiment(cfg, bundle["manifests"], checkpoint_out=ckpt)
    assert ckpt.exists()
    eval_report = evaluate_checkpoint(ckpt, _mdm_config(), bundle["manifests"])
    assert eval_report["n_test"] == 24  # every trial in the bundle
    assert eval_report["accuracy"] >= report["accuracy"] * 0.8


def test_checkpoint_refused_for_mdm(bundle, tmp_path):
    with pytest.raises(InvalidInput):
        run_experiment(_mdm_config(), bundle["manifests"], checkpoint_out=tmp_path / "x")


# ---------------------------------------------------------------------------
# distance export


def test_export_single_trial(tmp_path):
    rng = np.random.default_rng(0)
    rec = Recording(100.0, rng.standard_normal((3, 50)))
    write_recording(tmp_path / "r.semg", rec)
    manifest = Manifest(
        recording="r.semg",
        session_id="s",
        vocabulary={"a": 0},
        trials=[TrialSpec("a", 0, 0, 50)],
    )
    save_manifest(tmp_path / "m.json", manifest)
    out = tmp_path / "d.csv"
    res = experiment.export_distances([tmp_path / "m.json"], _mdm_config(), out)
    assert res["count"] == 1
    D = experiment.load_distance_csv(out)
    assert np.array_equal(D, np.zeros((1, 1)))


def test_export_duplicate_trials_zero_offdiagonal(tmp_path):
    rng = np.random.default_rng(1)
    chunk = rng.standard_normal((3, 40))
    samples = np.concatenate([chunk, chunk], axis=1)  # identical windows
    write_recording(tmp_path / "r.semg", Recording(100.0, samples))
    manifest = Manifest(
        recording="r.semg",
        session_id="s",
        vocabulary={"a": 0},
        trials=[TrialSpec("a", 0, 0, 40), TrialSpec("a", 0, 40, 80)],
    )
    save_manifest(tmp_path / "m.json", manifest)
    out = tmp_path / "d.csv"
    experiment.export_distances([tmp_path / "m.json"], _mdm_config(), out)
    D = experiment.load_distance_csv(out)
    assert D.shape == (2, 2)
    assert D[0, 1] == 0.0 and D[1, 0] == 0.0


def test_export_matches_pairwise_bit_exact(bundle, tmp_path):
    from spdemg.decoders import pairwise_distances
    from spdemg.geometry import to_cholesky

    cfg = _mdm_config()
    out = tmp_path / "d.csv"
    experiment.export_distances(bundle["manifests"], cfg, out)
    D = experiment.load_distance_csv(out)
    sessions = load_sessions(bundle["manifests"])
    samples = build_samples(sessions, cfg)
    points = [to_cholesky(s.matrices[0]) for s in samples]
    assert np.array_equal(D, pairwise_distances(points))
    sidecar = Path(str(out) + ".labels.csv")
    assert sidecar.exists()
    lines = sidecar.read_text().strip().splitlines()
    assert len(lines) == len(points) + 1  # header plus one row per point


# ---------------------------------------------------------------------------
# diagnostics plumbing


@pytest.fixture(scope="module")
def trained_checkpoint(bundle, tmp_path_factory):
    cfg = ExperimentConfig(
        model="spdnet",
        eta=0.1,
        seed=0,
        model_config={
            "layer_dims": [4, 4],
            "epochs": 60,
            "learning_rate": 0.01,
            "n_classes": 3,
        },
    )
    path = tmp_path_factory.mktemp("ckpt") / "model.spdn"
    run_experiment(cfg, bundle["manifests"], checkpoint_out=path)
    return path


def test_analyze_diag_ratio(bundle, trained_checkpoint, tmp_path):
    csv_out = tmp_path / "ratios.csv"
    cfg = _mdm_config(eta=0.0)
    res = experiment.analyze_diag_ratio(
        trained_checkpoint, bundle["manifests"], cfg, csv_out=csv_out
    )
    assert res["n_trials"] == 24
    assert csv_out.exists()
    header = csv_out.read_text().splitlines()[0]
    assert header == "trial,label,ratio_before,ratio_after"


def test_analyze_basis_angle(trained_checkpoint, bundle, tmp_path):
    cfg = ExperimentConfig(
        model="spdnet",
        eta=0.1,
        seed=1,  # different seed -> different basis
        model_config={
            "layer_dims": [4, 4],
            "epochs": 30,
            "learning_rate": 0.01,
            "n_classes": 3,
        },
    )
    other = tmp_path / "other.spdn"
    run_experiment(cfg, bundle["manifests"], checkpoint_out=other)
    res = experiment.analyze_basis_angle([trained_checkpoint, other])
    angles = np.asarray(res["angles"])
    assert angles.shape == (2, 2)
    assert angles[0, 0] == 0.0
    assert angles[0, 1] == angles[1, 0] >= 0.0


def test_analyze_importance(bundle, trained_checkpoint, tmp_path):
    csv_out = tmp_path / "importance.csv"
    res = experiment.analyze_importance(
        trained_checkpoint, bundle["manifests"], _mdm_config(eta=0.0), csv_out=csv_out
    )
    assert res["n_trials"] == 24
    assert sum(res["top1_counts"]) == 24
    assert sum(res["top3_counts"]) == 72
    assert csv_out.exists()


def test_analyze_collapse(tmp_path):
    metrics = {
        "labels": ["Baa", "Paa", "AA"],
        "confusion": [[3, 1, 0], [0, 4, 0], [1, 0, 3]],
    }
    path = tmp_path / "metrics.json"
    io.write_metrics(path, metrics)
    res = experiment.analyze_collapse(path)
    # Baa->Paa forgiven (same articulation group), AA->Baa not
    assert res["raw_accuracy"] == pytest.approx(10 / 12)
    assert res["collapsed_accuracy"] == pytest.approx(11 / 12)


def test_empty_split_rejected(bundle):
    cfg = _mdm_config(split=SplitRule(train_repetitions=10))
    with pytest.raises(InvalidInput):
        run_experiment(cfg, bundle["manifests"])


def test_basis_requires_orthogonality(bundle, tmp_path):
    from spdemg.spdnet import SpdNetConfig, SpdNetModel

    rng = np.random.default_rng(0)
    cfg = SpdNetConfig(layer_dims=(4, 4), n_classes=3, epochs=1)
    model = SpdNetModel.init(cfg, rng)
    model.bimaps[0] = model.bimaps[0] * 2.0  # break orthogonality
    path = tmp_path / "skewed.spdn"
    model.save(path)
    with pytest.raises(InvalidInput):
        experiment.analyze_diag_ratio(path, bundle["manifests"], _mdm_config(eta=0.0))
