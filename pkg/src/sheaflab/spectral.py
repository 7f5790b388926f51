"""Rayleigh-quotient oversmoothing metrics over the layers of trained networks."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .blocksparse import BlockSparseOperator
from .diffusion import dirichlet_energy
from .sheaf import assemble_sheaf_laplacian, identity_sheaf

DECREASE_RATIO = 0.5
DECREASE_FRACTION = 0.7


def rayleigh_quotient(op: BlockSparseOperator, x) -> float:
    """``trace(X^T L X) / trace(X^T X)``; reduces to ``x^T L x / x^T x`` for a vector."""
    x = np.asarray(x, dtype=np.float64)
    x = x[:, None] if x.ndim == 1 else x
    denom = float(np.sum(x * x))
    if denom == 0.0:
        raise ValueError("Rayleigh quotient of a zero signal is undefined")
    return dirichlet_energy(op, x) / denom


@dataclass
class RayleighTrajectory:
    layer_index: list[int]
    r_sheaf: list[float]
    r_identity: list[float]
    r_sheaf_std: list[float]
    r_identity_std: list[float]
    fold_count: int
    per_fold_sheaf: list[list[float]] = field(default_factory=list)
    per_fold_identity: list[list[float]] = field(default_factory=list)

    @classmethod
    def from_folds(cls, sheaf_runs: Sequence[Sequence[float]],
                   identity_runs: Sequence[Sequence[float]]) -> "RayleighTrajectory":
        if not sheaf_runs:
            raise ValueError("no folds to average")
        lengths = {len(r) for r in sheaf_runs} | {len(r) for r in identity_runs}
        if len(lengths) != 1:
            raise ValueError("layer-count mismatch across folds")
        s = np.asarray(sheaf_runs, dtype=np.float64)
        i = np.asarray(identity_runs, dtype=np.float64)
        return cls(
            layer_index=list(range(s.shape[1])),
            r_sheaf=s.mean(axis=0).tolist(),
            r_identity=i.mean(axis=0).tolist(),
            r_sheaf_std=s.std(axis=0).tolist(),
            r_identity_std=i.std(axis=0).tolist(),
            fold_count=s.shape[0],
            per_fold_sheaf=s.tolist(),
            per_fold_identity=i.tolist(),
        )

    def __len__(self) -> int:
        return len(self.layer_index)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RayleighTrajectory":
        return cls(**data)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "r_sheaf_mean", "r_identity_mean", "r_sheaf_std", "r_identity_std"])
            for row in zip(self.layer_index, self.r_sheaf, self.r_identity, self.r_sheaf_std,
                           self.r_identity_std):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def model_rayleigh(model, features) -> tuple[list[float], list[float]]:
    """Per-state quotients for one trained network, evaluated without dropout.

    State 0 is the encoder output; state ``t`` is the output of layer ``t``.
    States are paired with the Laplacian of the layer that consumes them; the
    final state reuses the last layer's Laplacian.
    """
    res = model.forward(features, training=False)
    ops = model.layer_operators(res)
    ops = list(ops) + [ops[-1]]
    ident = assemble_sheaf_laplacian(identity_sheaf(model.graph, model.config.final_d),
                                     model.config.laplacian_mode)
    r_sheaf = [rayleigh_quotient(op, s.data) for op, s in zip(ops, res.states)]
    r_ident = [rayleigh_quotient(ident, s.data) for s in res.states]
    return r_sheaf, r_ident


def layer_trajectory(models: Sequence, features) -> RayleighTrajectory:
    """Fold-averaged trajectory over one trained model per fold."""
    if not models:
        raise ValueError("no trained models")
    runs = [model_rayleigh(m, features) for m in models]
    return RayleighTrajectory.from_folds([r[0] for r in runs], [r[1] for r in runs])


def trend(values: Sequence[float]) -> dict:
    """Decrease statistics for one curve.

    A curve counts as decreasing toward zero when ``final / initial`` is below
    0.5 and at least 70% of consecutive steps go down.
    """
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        raise ValueError("empty trajectory")
    steps = np.diff(v)
    frac = float(np.mean(steps < 0)) if len(steps) else 0.0
    if v[0] > 0:
        ratio = float(v[-1] / v[0])
    else:
        ratio = 0.0 if v[-1] == 0 else float("inf")
    decreasing = ratio < DECREASE_RATIO and frac >= DECREASE_FRACTION
    return {"final_over_initial": ratio, "fraction_decreasing": frac, "decreasing": bool(decreasing)}


def _ordering(traj: RayleighTrajectory) -> dict:
    above = [bool(i > s) for s, i in zip(traj.r_sheaf, traj.r_identity)]
    return {"identity_above_sheaf": above,
            "fraction_identity_above_sheaf": float(np.mean(above)) if above else 0.0}


@dataclass
class HypothesisVerdict:
    snn_sheaf_to_zero: dict
    snn_identity_not_to_zero: dict
    isn_identity_to_zero: dict
    snn_ordering: dict
    isn_ordering: dict

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def all_consistent(self) -> bool:
        return all(c["verdict"] == "consistent" for c in
                   (self.snn_sheaf_to_zero, self.snn_identity_not_to_zero, self.isn_identity_to_zero))


def hypothesis_report(traj_snn: RayleighTrajectory, traj_isn: RayleighTrajectory) -> HypothesisVerdict:
    """Check the three oversmoothing clauses against measured trajectories.

    Clauses: the SNN's sheaf quotient decays to zero, its identity quotient
    does not, and the ISN's identity quotient decays to zero.
    """
    if len(traj_snn) == 0 or len(traj_isn) == 0:
        raise ValueError("empty trajectory")
    a = trend(traj_snn.r_sheaf)
    b = trend(traj_snn.r_identity)
    c = trend(traj_isn.r_identity)

    def clause(stats, want_decreasing):
        ok = stats["decreasing"] == want_decreasing
        return {**stats, "expected_decreasing": want_decreasing,
                "verdict": "consistent" if ok else "inconsistent"}

    return HypothesisVerdict(
        snn_sheaf_to_zero=clause(a, True),
        snn_identity_not_to_zero=clause(b, False),
        isn_identity_to_zero=clause(c, True),
        snn_ordering=_ordering(traj_snn),
        isn_ordering=_ordering(traj_isn),
    )
