"""Explicit-Euler sheaf diffusion and kernel diagnostics."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .blocksparse import BlockSparseOperator

logger = logging.getLogger(__name__)

CONVERGED_ENERGY = 1e-10
POWER_ITERATIONS = 20
DENSE_BELOW = 128


class UnstableStepError(ValueError):
    pass


class DivergedError(RuntimeError):
    pass


@dataclass
class DiffusionTrajectory:
    times: list[float] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    converged_at: int | None = None  # first step index with energy below tolerance
    steps_taken: int = 0
    max_energy_increase: float = float("-inf")  # largest E_{k+1} - E_k over every step, recorded or not

    @property
    def converged(self) -> bool:
        return self.converged_at is not None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "energy", "kernel_residual"])
            for t, e, r in zip(self.times, self.energies, self.residuals):
                w.writerow([repr(t), repr(e), repr(r)])


def _as_2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def dirichlet_energy(op: BlockSparseOperator, x) -> float:
    """``trace(X^T L X)``, with tiny negative rounding clamped to zero."""
    x = _as_2d(x)
    return _energy(x, op.matvec(x))


def _energy(x: np.ndarray, lx: np.ndarray) -> float:
    val = float(np.vdot(x, lx))
    if not math.isfinite(val):
        return val
    if val < -1e-9:
        logger.warning("negative Dirichlet energy %.3g; operator may not be PSD", val)
    return max(val, 0.0)


def kernel_residual(op: BlockSparseOperator, x, eps: float = 1e-30) -> float:
    x = _as_2d(x)
    return float(np.linalg.norm(op.matvec(x)) / max(np.linalg.norm(x), eps))


def estimate_lambda_max(op: BlockSparseOperator, iterations: int = POWER_ITERATIONS, seed: int = 0) -> float:
    """Power-iteration estimate of the largest eigenvalue of a PSD operator."""
    v = np.random.default_rng(seed).standard_normal(op.shape[0])
    lam = 0.0
    for _ in range(iterations):
        w = op.matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        lam = float(v @ w / (v @ v))
        v = w / nw
    return max(lam, float(v @ op.matvec(v)))


def integrate_diffusion(op: BlockSparseOperator, x0, step: float, steps: int, *,
                        energy_tol: float = CONVERGED_ENERGY, stop_on_convergence: bool = False,
                        record_every: int = 1, check_stability: bool = True) -> DiffusionTrajectory:
    """Integrate ``dX/dt = -L X`` with ``X_{k+1} = X_k - step * L X_k``.

    Raises:
        UnstableStepError: ``step >= 2 / lambda_max`` by power iteration.
        DivergedError: the state became non-finite.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if check_stability:
        lam = estimate_lambda_max(op)
        if lam > 0 and step >= 2.0 / lam:
            raise UnstableStepError(f"step {step} >= 2/lambda_max = {2.0 / lam:.6g}")
    # overflow surfaces as DivergedError below, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        return _integrate(op, _as_2d(x0).copy(), step, steps, energy_tol, stop_on_convergence, record_every)


def _integrate(op, x, step, steps, energy_tol, stop_on_convergence, record_every) -> DiffusionTrajectory:
    traj = DiffusionTrajectory()
    # per-call sparse overhead dominates on tiny systems
    mat = op.to_dense() if op.shape[0] <= DENSE_BELOW else op.to_csr()

    def record(k, x, lx, e):
        traj.times.append(k * step)
        traj.states.append(x.copy())
        traj.energies.append(e)
        traj.residuals.append(float(np.linalg.norm(lx) / max(np.linalg.norm(x), 1e-30)))

    # L X_k serves both the energy at step k and the update to k + 1
    lx = mat @ x
    e = _energy(x, lx)
    if not math.isfinite(e):
        raise DivergedError("non-finite initial state")
    record(0, x, lx, e)
    if e < energy_tol:
        traj.converged_at = 0
    for k in range(1, steps + 1):
        x = x - step * lx
        lx = mat @ x
        prev, e = e, _energy(x, lx)
        if not math.isfinite(e):  # any non-finite entry of x makes the energy non-finite
            raise DivergedError(f"non-finite state at step {k}")
        traj.max_energy_increase = max(traj.max_energy_increase, e - prev)
        traj.steps_taken = k
        if traj.converged_at is None and e < energy_tol:
            traj.converged_at = k
        done = stop_on_convergence and traj.converged_at is not None
        if k % record_every == 0 or k == steps or done:
            record(k, x, lx, e)
        if done:
            break
    return traj
