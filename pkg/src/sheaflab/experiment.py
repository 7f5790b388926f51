"""Fold-wise training with early stopping, reports and figure data."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .datasets import Dataset, load_dataset
from .nn import autograd as ag
from .nn.models import ModelConfig, SheafNetwork
from .nn.optim import AdamState, NonFiniteGradientError, adam_step
from .spectral import HypothesisVerdict, RayleighTrajectory, hypothesis_report, model_rayleigh

logger = logging.getLogger(__name__)

REFERENCE_DATASETS = ("texas", "wisconsin", "film", "squirrel", "chameleon", "cornell")


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 0.01
    weight_decay: float = 0.0
    epochs: int = 100
    early_stopping: int = 50
    seed: int = 0
    dataset: str = ""
    folds: int | None = None  # use only the first k folds
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.early_stopping < 1:
            raise ValueError("early_stopping must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if self.folds is not None and self.folds < 1:
            raise ValueError("folds must be >= 1")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["model"] = self.model.to_dict()
        return out

    @classmethod
    def from_flat(cls, data: dict) -> "TrainConfig":
        """Build from a flat mapping of hyperparameter names (``lr``, ``layers``, ...)."""
        data = dict(data)
        model_kind = data.pop("model", data.pop("model_kind", "isn"))
        names = {f.name for f in fields(ModelConfig)}
        model = ModelConfig.from_dict({**{k: v for k, v in data.items() if k in names},
                                       "model_kind": model_kind})
        own = {f.name for f in fields(cls)} - {"model"}
        return cls(model=model, **{k: v for k, v in data.items() if k in own})

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        model = ModelConfig.from_dict(data.pop("model"))
        return cls(model=model, **data)


def packaged_config(name: str) -> dict:
    """Reference hyperparameters shipped with the package, as a flat dict."""
    try:
        text = resources.files("sheaflab.configs").joinpath(f"{name.lower()}.json").read_text()
    except FileNotFoundError:
        raise KeyError(f"no packaged config for {name!r}") from None
    return json.loads(text)


@dataclass
class FoldResult:
    fold: int
    test_acc: float | None
    val_acc: float | None
    val_loss: float | None
    best_epoch: int | None
    epochs_trained: int
    diverged: bool = False
    error: str | None = None
    r_sheaf: list[float] = field(default_factory=list)
    r_identity: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)  # validation accuracy per epoch


@dataclass
class ExperimentReport:
    dataset: str
    model_kind: str
    config: dict
    split_source: str
    split_seed: int | None
    folds: list[FoldResult]
    mean: float | None
    std: float | None
    partial: bool
    trajectory: RayleighTrajectory | None
    wall_clock: float

    @property
    def accuracies(self) -> list[float]:
        return [f.test_acc for f in self.folds if not f.diverged]

    def to_dict(self) -> dict:
        out = asdict(self)
        out["trajectory"] = None if self.trajectory is None else self.trajectory.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        data = dict(data)
        data["folds"] = [FoldResult(**f) for f in data["folds"]]
        if data.get("trajectory") is not None:
            data["trajectory"] = RayleighTrajectory.from_dict(data["trajectory"])
        return cls(**data)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "ExperimentReport":
        text = text_or_path
        if not str(text).lstrip().startswith("{"):
            text = Path(text_or_path).read_text()
        return cls.from_dict(json.loads(text))


def _accuracy(logits: np.ndarray, labels: np.ndarray, index: np.ndarray) -> float:
    if len(index) == 0:
        return float("nan")
    return float(np.mean(np.argmax(logits[index], axis=1) == labels[index]) * 100.0)


def _fold_seeds(seed: int, n: int) -> list[tuple[int, int]]:
    out = []
    for child in np.random.SeedSequence(seed).spawn(n):
        a, b = child.generate_state(2)
        out.append((int(a), int(b)))
    return out


def train_fold(config: TrainConfig, data: Dataset, fold_index: int, init_seed: int,
               dropout_seed: int) -> tuple[FoldResult, SheafNetwork]:
    """Train one fold; keep the parameters from the best validation epoch."""
    fold = data.splits.folds[fold_index]
    y = data.labels.labels
    x = data.features.values
    model = SheafNetwork(config.model, data.graph, data.features.cols, data.labels.c, seed=init_seed)
    rng = np.random.default_rng(dropout_seed)
    params = model.parameters()
    state = AdamState()
    best = (-np.inf, np.inf)  # (val acc, val loss)
    best_state, best_epoch = model.get_state(), None
    since = 0
    epoch = 0
    history: list[float] = []
    try:
        # overflow shows up as a non-finite loss below; numpy's warnings add nothing
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(1, config.epochs + 1):
                res = model.forward(x, training=True, rng=rng)
                loss = ag.softmax_cross_entropy(res.logits, y, fold.train)
                if not np.isfinite(loss.data):
                    raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
                grads = ag.backward(loss, params)
                new, state = adam_step([p.data for p in params], grads, state, config.lr, config.weight_decay)
                for p, v in zip(params, new):
                    p.data = v

                logits = model.predict(x)
                val_acc = _accuracy(logits, y, fold.val)
                val_loss = float(ag.softmax_cross_entropy(ag.Tensor(logits), y, fold.val).data)
                if not np.isfinite(val_loss):
                    raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
                history.append(val_acc)
                if val_acc > best[0] or (val_acc == best[0] and val_loss < best[1]):
                    best = (val_acc, val_loss)
                    best_state, best_epoch = model.get_state(), epoch
                    since = 0
                else:
                    since += 1
                    if since >= config.early_stopping:
                        break
    except (FloatingPointError, NonFiniteGradientError) as exc:
        logger.error("fold %d diverged: %s", fold_index, exc)
        return FoldResult(fold_index, None, None, None, best_epoch, epoch, diverged=True, error=str(exc),
                          val_history=history), model

    model.set_state(best_state)
    logits = model.predict(x)
    r_sheaf, r_ident = model_rayleigh(model, x)
    val = best if best_epoch is not None else (None, None)
    result = FoldResult(fold_index, _accuracy(logits, y, fold.test), val[0], val[1], best_epoch,
                        epoch, r_sheaf=r_sheaf, r_identity=r_ident, val_history=history)
    return result, model


def _fold_job(args):
    config, data, i, s1, s2 = args
    result, model = train_fold(config, data, i, s1, s2)
    return result, model.get_state()


def run_experiment(config: TrainConfig, data: Dataset | None = None,
                   return_models: bool = False):
    """Train every fold and aggregate test accuracy and Rayleigh trajectories.

    Returns the report, or ``(report, models)`` when ``return_models`` is set.
    """
    start = time.perf_counter()
    if data is None:
        data = load_dataset(config.dataset, seed=config.seed)
    n_folds = len(data.splits) if config.folds is None else min(config.folds, len(data.splits))
    seeds = _fold_seeds(config.seed, n_folds)
    jobs = [(config, data, i, s1, s2) for i, (s1, s2) in enumerate(seeds)]
    workers = max(1, min(config.workers, n_folds, os.cpu_count() or 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_fold_job, jobs))
    else:
        outputs = [_fold_job(j) for j in jobs]
    results = [o[0] for o in outputs]

    accs = [r.test_acc for r in results if not r.diverged]
    ok = [r for r in results if not r.diverged]
    traj = None
    if ok:
        traj = RayleighTrajectory.from_folds([r.r_sheaf for r in ok], [r.r_identity for r in ok])
    report = ExperimentReport(
        dataset=data.name,
        model_kind=config.model.model_kind,
        config=config.to_dict(),
        split_source=data.splits.source,
        split_seed=data.splits.seed,
        folds=results,
        mean=float(np.mean(accs)) if accs else None,
        std=float(np.std(accs)) if accs else None,
        partial=len(ok) < len(results),
        trajectory=traj,
        wall_clock=time.perf_counter() - start,
    )
    if return_models:
        models = []
        for (res, st) in outputs:
            m = SheafNetwork(config.model, data.graph, data.features.cols, data.labels.c)
            m.set_state(st)
            models.append(m)
        return report, models
    return report


def emit_figure_data(report: ExperimentReport, out_path) -> Path:
    """Write the report's fold-averaged Rayleigh trajectory as CSV."""
    if report.trajectory is None:
        raise ValueError("report has no trajectory (all folds diverged?)")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report.trajectory.to_csv(out_path)
    return out_path


def emit_hypothesis(snn: ExperimentReport, isn: ExperimentReport, out_path) -> HypothesisVerdict:
    if snn.trajectory is None or isn.trajectory is None:
        raise ValueError("both reports need trajectories")
    verdict = hypothesis_report(snn.trajectory, isn.trajectory)
    payload = {"dataset": isn.dataset, "snn_model": snn.model_kind, "isn_model": isn.model_kind,
               **verdict.to_dict(),
               "all_clauses_consistent": verdict.all_consistent}
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(payload, indent=2))
    return verdict
