"""Class-neighbourhood profiles, the gain matrix and good/bad/mixed heterophily."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, LabelVector

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = 0.2
COUNTINGS = ("edges", "nodes", "node-mean")


class EmptyClassError(ValueError):
    pass


@dataclass(frozen=True)
class ClassProfile:
    m_hat: np.ndarray  # (c, c), row k = neighbourhood class distribution of class k
    d_bar: np.ndarray  # (c,) mean degree per class
    flagged: tuple[int, ...] = ()  # classes with no incident edges (zero rows)
    counting: str = "edges"


@dataclass(frozen=True)
class HeterophilyVerdict:
    gain: np.ndarray
    min_gain: float
    max_gain: float
    sigma: float
    label: str

    def to_dict(self, dataset: str | None = None, decimals: int | None = 2) -> dict:
        rnd = (lambda v: round(float(v), decimals)) if decimals is not None else float
        out = {
            "dataset": dataset,
            "min_gain": rnd(self.min_gain),
            "max_gain": rnd(self.max_gain),
            "sigma": self.sigma,
            "label": self.label,
            "gain_matrix": [[float(v) for v in row] for row in self.gain],
        }
        return out


def class_profile(g: Graph, labels: LabelVector, counting: str = "edges") -> ClassProfile:
    """Neighbourhood class proportions and mean degree for every class.

    ``counting`` selects how neighbours of class-k nodes are tallied:
    ``edges`` counts edge endpoints (a neighbour adjacent to two class-k
    nodes counts twice), ``nodes`` counts each distinct neighbouring node
    once, ``node-mean`` averages each class-k node's own neighbour
    distribution.
    """
    if counting not in COUNTINGS:
        raise ValueError(f"unknown counting {counting!r}")
    y = labels.labels
    if len(y) != g.n:
        raise ValueError("label count does not match node count")
    c = labels.c
    sizes = np.bincount(y, minlength=c)
    if np.any(sizes == 0):
        raise EmptyClassError(f"classes with no nodes: {np.nonzero(sizes == 0)[0].tolist()}")
    deg = g.degree
    d_bar = np.bincount(y, weights=deg, minlength=c) / sizes

    u, v = g.edges[:, 0], g.edges[:, 1]
    src = np.r_[u, v]
    dst = np.r_[v, u]
    counts = np.zeros((c, c))
    if counting == "edges":
        np.add.at(counts, (y[src], y[dst]), 1.0)
    elif counting == "nodes":
        pairs = np.unique(np.stack([y[src], dst], axis=1), axis=0) if len(src) else np.zeros((0, 2), int)
        np.add.at(counts, (pairs[:, 0], y[pairs[:, 1]]), 1.0)
    else:
        per_node = np.zeros((g.n, c))
        np.add.at(per_node, (src, y[dst]), 1.0)
        has = deg > 0
        per_node[has] /= deg[has, None]
        np.add.at(counts, y[has], per_node[has])

    totals = counts.sum(axis=1)
    flagged = tuple(int(k) for k in np.nonzero(totals == 0)[0])
    if flagged:
        logger.warning("classes with zero total degree left as zero rows: %s", list(flagged))
    m_hat = np.zeros_like(counts)
    ok = totals > 0
    m_hat[ok] = counts[ok] / totals[ok, None]
    return ClassProfile(m_hat, d_bar, flagged, counting)


def gain_matrix(profile: ClassProfile) -> np.ndarray:
    scaled = np.sqrt(profile.d_bar)[:, None] * profile.m_hat
    diff = scaled[:, None, :] - scaled[None, :, :]
    gain = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(gain, 0.0)
    return gain


def classify_heterophily(gain: np.ndarray, sigma: float = DEFAULT_SIGMA) -> HeterophilyVerdict:
    gain = np.asarray(gain, dtype=np.float64)
    c = gain.shape[0]
    if c < 2:
        raise ValueError("need at least two classes")
    off = gain[~np.eye(c, dtype=bool)]
    lo, hi = float(off.min()), float(off.max())
    if lo > sigma:
        label = "good"
    elif hi < sigma:
        label = "bad"
    else:
        label = "mixed"
    return HeterophilyVerdict(gain, lo, hi, sigma, label)


def edge_homophily(g: Graph, labels: LabelVector) -> float:
    """Fraction of edges joining same-class nodes (debug aid)."""
    if g.m == 0:
        return float("nan")
    y = labels.labels
    return float(np.mean(y[g.edges[:, 0]] == y[g.edges[:, 1]]))


def audit(g: Graph, labels: LabelVector, sigma: float = DEFAULT_SIGMA,
          counting: str = "edges") -> HeterophilyVerdict:
    return classify_heterophily(gain_matrix(class_profile(g, labels, counting)), sigma)
