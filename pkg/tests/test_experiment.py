import json
import math

import numpy as np
import pytest

from sheaflab.datasets import load_dataset
from sheaflab.experiment import (REFERENCE_DATASETS, ExperimentReport, TrainConfig, emit_figure_data, emit_hypothesis,
                                 packaged_config, run_experiment)
from sheaflab.nn.models import ModelConfig


def _config(**kw):
    model = kw.pop("model", ModelConfig(layers=2, d=1, hidden_channels=8, dropout=0.2))
    base = dict(lr=0.02, weight_decay=5e-4, epochs=30, early_stopping=10, seed=1)
    base.update(kw)
    return TrainConfig(model=model, **base)


@pytest.fixture
def toy(toy_manifest):
    return load_dataset(toy_manifest, seed=1, n_folds=3)


# transcribed column by column from the published hyperparameter table
PUBLISHED_HPARAMS = {
    "add_hp": [False, True, False, False, False, False],
    "add_lp": [False, False, False, True, True, False],
    "d": [1, 1, 4, 1, 1, 1],
    "deg_normalised": [False, False, True, False, False, False],
    "dropout": [0.7, 0.8, 0.5, 0.0, 0.0, 0.9],
    "early_stopping": [200, 200, 100, 100, 100, 200],
    "epochs": [1500, 500, 1000, 1000, 1000, 500],
    "hidden_channels": [32, 96, 64, 96, 32, 64],
    "input_dropout": [0.0, 0.0, 0.1, 0.7, 0.7, 0.0],
    "layers": [5, 5, 1, 5, 5, 4],
    "lr": [0.03, 0.02, 0.0002, 0.01, 0.01, 0.02],
    "normalised": [True, True, False, True, True, True],
    "second_linear": [False, False, True, True, True, False],
    "weight_decay": [0.005, 0.0006685729356, 0.0000001, 0.0001121579137, 0.0002969905682, 0.0006914841723],
}


@pytest.mark.parametrize("col,name", list(enumerate(REFERENCE_DATASETS)))
def test_packaged_configs_match_table(col, name):
    cfg = packaged_config(name)
    for key, values in PUBLISHED_HPARAMS.items():
        assert cfg[key] == values[col], (name, key)
    TrainConfig.from_flat(cfg)


def test_unknown_packaged_config():
    with pytest.raises(KeyError):
        packaged_config("pubmed")


def test_config_validation():
    for bad in ({"epochs": 0}, {"early_stopping": 0}, {"lr": 0.0}, {"weight_decay": -1.0}, {"folds": 0}):
        with pytest.raises(ValueError):
            _config(**bad)
    cfg = _config()
    assert TrainConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_single_epoch_boundary(toy):
    report = run_experiment(_config(epochs=1, early_stopping=1), toy)
    assert [f.epochs_trained for f in report.folds] == [1, 1, 1]
    assert all(f.best_epoch == 1 for f in report.folds)
    assert len(report.folds) == 3 and not report.partial


def test_deterministic_across_runs(toy):
    cfg = _config(model=ModelConfig(layers=2, d=2, hidden_channels=4, model_kind="diag_snn", dropout=0.3,
                                    input_dropout=0.1))
    a, b = run_experiment(cfg, toy), run_experiment(cfg, toy)
    assert a.accuracies == b.accuracies
    assert a.trajectory.per_fold_sheaf == b.trajectory.per_fold_sheaf


def test_parallel_matches_serial(toy):
    cfg = _config(epochs=10)
    serial = run_experiment(cfg, toy)
    cfg.workers = 2
    par = run_experiment(cfg, toy)
    assert serial.accuracies == par.accuracies
    assert [f.fold for f in par.folds] == [0, 1, 2]


def test_mean_std_and_json_round_trip(toy, tmp_path):
    report = run_experiment(_config(), toy)
    accs = report.accuracies
    assert abs(report.mean - float(np.mean(accs))) <= 1e-12
    assert abs(report.std - math.sqrt(sum((a - report.mean) ** 2 for a in accs) / len(accs))) <= 1e-12
    path = tmp_path / "r.json"
    report.to_json(path)
    assert ExperimentReport.from_json(path) == report
    assert ExperimentReport.from_json(report.to_json()) == report
    assert report.split_source == "random" and report.split_seed == 1


def test_early_stopping_keeps_best_epoch(toy):
    report = run_experiment(_config(epochs=40, early_stopping=5), toy)
    for f in report.folds:
        assert len(f.val_history) == f.epochs_trained
        assert f.val_acc == max(f.val_history)
        assert f.val_history[f.best_epoch - 1] == f.val_acc
        assert f.epochs_trained <= f.best_epoch + 5


def test_kept_parameters_reproduce_reported_numbers(toy):
    report, models = run_experiment(_config(epochs=20), toy, return_models=True)
    y = toy.labels.labels
    for f, m in zip(report.folds, models):
        pred = m.predict(toy.features.values).argmax(axis=1)
        fold = toy.splits.folds[f.fold]
        assert 100 * np.mean(pred[fold.test] == y[fold.test]) == f.test_acc
        assert 100 * np.mean(pred[fold.val] == y[fold.val]) == f.val_acc


def test_training_beats_chance(toy):
    report = run_experiment(_config(epochs=100, early_stopping=30), toy)
    assert report.mean > 100 / 3 + 15


def test_divergence_marks_partial(toy):
    report = run_experiment(_config(lr=1e6, epochs=50, early_stopping=50,
                                    model=ModelConfig(layers=4, activation="relu", hidden_channels=8)), toy)
    assert report.partial
    bad = [f for f in report.folds if f.diverged]
    assert bad and all(f.error for f in bad) and all(f.test_acc is None for f in bad)
    json.dumps(report.to_dict())


def test_figure_outputs(toy, tmp_path):
    isn = run_experiment(_config(epochs=5), toy)
    snn = run_experiment(_config(epochs=5, model=ModelConfig(layers=2, d=2, model_kind="diag_snn")), toy)
    csv_path = emit_figure_data(isn, tmp_path / "isn.csv")
    rows = csv_path.read_text().splitlines()
    assert rows[0] == "layer,r_sheaf_mean,r_identity_mean,r_sheaf_std,r_identity_std"
    assert len(rows) == 4
    for r in rows[1:]:
        _, s, i, *_ = r.split(",")
        assert s == i
    verdict = emit_hypothesis(snn, isn, tmp_path / "v.json")
    payload = json.loads((tmp_path / "v.json").read_text())
    for clause in ("snn_sheaf_to_zero", "snn_identity_not_to_zero", "isn_identity_to_zero"):
        assert payload[clause]["verdict"] in ("consistent", "inconsistent")
    assert payload["all_clauses_consistent"] == verdict.all_consistent


def test_fold_limit(toy):
    assert len(run_experiment(_config(epochs=2, folds=2), toy).folds) == 2
