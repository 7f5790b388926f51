"""Identity Sheaf Networks and diagonal learned-sheaf networks.

Both families share one layer update on stacked stalk features
``X`` of shape ``(n*d, hidden_channels)``::

    X <- X - act(L (I_n kron W1) X W2)

ISN uses a fixed identity-sheaf Laplacian ``L``. The diagonal SNN predicts
per-incidence diagonal restriction maps from the current features at
every layer and applies the resulting Laplacian without materialising it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..blocksparse import BlockSparseOperator
from ..graph import Graph
from ..sheaf import assemble_sheaf_laplacian, augment_fixed_channels, diagonal_sheaf, identity_sheaf
from . import autograd as ag

MODEL_KINDS = ("isn", "diag_snn")


@dataclass
class ModelConfig:
    layers: int = 2
    d: int = 1
    hidden_channels: int = 16
    dropout: float = 0.0
    input_dropout: float = 0.0
    activation: str = "elu"
    add_lp: bool = False
    add_hp: bool = False
    normalised: bool = False
    deg_normalised: bool = False
    second_linear: bool = False
    model_kind: str = "isn"
    use_epsilons: bool = False

    def __post_init__(self):
        if self.model_kind == "diag-snn":
            self.model_kind = "diag_snn"
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.hidden_channels < 1:
            raise ValueError("hidden_channels must be >= 1")
        for name in ("dropout", "input_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1)")
        if self.activation not in ag.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")

    @property
    def final_d(self) -> int:
        return self.d + int(self.add_lp) + int(self.add_hp)

    @property
    def hidden_dim(self) -> int:
        return self.final_d * self.hidden_channels

    @property
    def laplacian_mode(self) -> str:
        return "degree-normalized" if (self.normalised or self.deg_normalised) else "combinatorial"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape or (fan_in, fan_out))


@dataclass
class ForwardResult:
    logits: ag.Tensor
    states: list[ag.Tensor] = field(default_factory=list)
    maps: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)  # per layer (tail, head), SNN only


class SheafNetwork:
    """Encoder, ``layers`` sheaf-residual blocks and a linear decoder."""

    def __init__(self, config: ModelConfig, graph: Graph, n_features: int, n_classes: int, seed: int = 0):
        self.config = config
        self.graph = graph
        self.n_features = n_features
        self.n_classes = n_classes
        self.seed = seed
        self.params: dict[str, ag.Tensor] = {}
        self._init_params(np.random.default_rng(seed))
        self.identity_laplacian = assemble_sheaf_laplacian(
            augment_fixed_channels(identity_sheaf(graph, config.d), config.add_lp, config.add_hp),
            config.laplacian_mode)
        t = graph.edges[:, 0]
        h = graph.edges[:, 1]
        self._tail, self._head = t, h
        self._extra_tail = np.array([1.0] * config.add_lp + [1.0] * config.add_hp)
        self._extra_head = np.array([1.0] * config.add_lp + [-1.0] * config.add_hp)

    def _init_params(self, rng: np.random.Generator) -> None:
        c = self.config
        p = self.params
        hd, fd, hc = c.hidden_dim, c.final_d, c.hidden_channels
        p["lin1.W"] = ag.parameter(glorot(rng, self.n_features, hd), "lin1.W")
        p["lin1.b"] = ag.parameter(np.zeros(hd), "lin1.b")
        if c.second_linear:
            p["lin12.W"] = ag.parameter(glorot(rng, hd, hd), "lin12.W")
            p["lin12.b"] = ag.parameter(np.zeros(hd), "lin12.b")
        for t in range(c.layers):
            p[f"layer{t}.W1"] = ag.parameter(glorot(rng, fd, fd), f"layer{t}.W1")
            p[f"layer{t}.W2"] = ag.parameter(glorot(rng, hc, hc), f"layer{t}.W2")
            if c.use_epsilons:
                p[f"layer{t}.eps"] = ag.parameter(np.zeros((fd, 1)), f"layer{t}.eps")
            if c.model_kind == "diag_snn":
                width = 2 * c.d
                p[f"layer{t}.sheaf.Wa"] = ag.parameter(glorot(rng, 2 * hd, width), f"layer{t}.sheaf.Wa")
                p[f"layer{t}.sheaf.ba"] = ag.parameter(np.zeros(width), f"layer{t}.sheaf.ba")
                p[f"layer{t}.sheaf.Wb"] = ag.parameter(glorot(rng, width, c.d), f"layer{t}.sheaf.Wb")
                p[f"layer{t}.sheaf.bb"] = ag.parameter(np.zeros(c.d), f"layer{t}.sheaf.bb")
        p["lin2.W"] = ag.parameter(glorot(rng, hd, self.n_classes), "lin2.W")
        p["lin2.b"] = ag.parameter(np.zeros(self.n_classes), "lin2.b")

    def parameters(self) -> list[ag.Tensor]:
        return list(self.params.values())

    def get_state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for k, v in state.items():
            if self.params[k].shape != np.shape(v):
                raise ValueError(f"shape mismatch for {k}")
            self.params[k].data = np.array(v, dtype=np.float64)

    # restriction-map predictor

    def predict_maps(self, t: int, x: ag.Tensor) -> tuple[ag.Tensor, ag.Tensor]:
        """Diagonal maps ``(m, d)`` for tails and heads from ``x`` of shape ``(n*fd, hc)``."""
        p = self.params
        n, m = self.graph.n, self.graph.m
        xs = ag.reshape(x, (n, self.config.hidden_dim))
        xt, xh = ag.gather(xs, self._tail), ag.gather(xs, self._head)
        inp = ag.concat([ag.concat([xt, xh], axis=1), ag.concat([xh, xt], axis=1)], axis=0)
        hidden = ag.elu(inp @ p[f"layer{t}.sheaf.Wa"] + p[f"layer{t}.sheaf.ba"])
        out = ag.tanh(hidden @ p[f"layer{t}.sheaf.Wb"] + p[f"layer{t}.sheaf.bb"])
        return ag.gather(out, np.arange(m)), ag.gather(out, np.arange(m, 2 * m))

    def _augment(self, tail: ag.Tensor, head: ag.Tensor) -> tuple[ag.Tensor, ag.Tensor]:
        if not len(self._extra_tail):
            return tail, head
        m = self.graph.m
        et = np.tile(self._extra_tail, (m, 1))
        eh = np.tile(self._extra_head, (m, 1))
        return ag.concat([tail, et], axis=1), ag.concat([head, eh], axis=1)

    def apply_diag_laplacian(self, tail: ag.Tensor, head: ag.Tensor, y: ag.Tensor) -> ag.Tensor:
        """Apply the Laplacian of a diagonal sheaf (full ``final_d`` maps) to ``y``."""
        n, m, fd = self.graph.n, self.graph.m, self.config.final_d
        hc = y.shape[1]
        a = ag.reshape(tail, (m, fd, 1))
        b = ag.reshape(head, (m, fd, 1))
        ys = ag.reshape(y, (n, fd, hc))
        scale = None
        if self.config.laplacian_mode == "degree-normalized":
            deg = ag.scatter_add(a * a, self._tail, n) + ag.scatter_add(b * b, self._head, n)
            scale = ag.pinv_sqrt(deg)
            ys = ys * scale
        delta = a * ag.gather(ys, self._tail) - b * ag.gather(ys, self._head)
        out = ag.scatter_add(a * delta, self._tail, n) - ag.scatter_add(b * delta, self._head, n)
        if scale is not None:
            out = out * scale
        return ag.reshape(out, (n * fd, hc))

    # forward

    def forward(self, x_raw, training: bool = False, rng: np.random.Generator | None = None,
                maps_override: tuple[np.ndarray, np.ndarray] | None = None) -> ForwardResult:
        """Full-graph forward pass.

        ``maps_override`` fixes the SNN restriction maps to given ``(m, d)``
        tail/head diagonals at every layer instead of predicting them.
        """
        c, p = self.config, self.params
        n = self.graph.n
        if training and rng is None:
            raise ValueError("training forward needs an rng for dropout")
        x_raw = ag.as_tensor(x_raw)
        if x_raw.shape != (n, self.n_features):
            raise ValueError(f"expected features of shape {(n, self.n_features)}, got {x_raw.shape}")
        act = ag.ACTIVATIONS[c.activation]

        x = ag.dropout(x_raw, c.input_dropout, rng, training)
        x = act(x @ p["lin1.W"] + p["lin1.b"])
        x = ag.dropout(x, c.dropout, rng, training)
        if c.second_linear:
            x = x @ p["lin12.W"] + p["lin12.b"]
        x = ag.reshape(x, (n * c.final_d, c.hidden_channels))

        result = ForwardResult(logits=None, states=[x])
        for t in range(c.layers):
            if c.model_kind == "diag_snn":
                if maps_override is not None:
                    tail, head = ag.as_tensor(maps_override[0]), ag.as_tensor(maps_override[1])
                else:
                    tail, head = self.predict_maps(t, x)
                tail, head = self._augment(tail, head)
                result.maps.append((tail.data.copy(), head.data.copy()))
                lap = lambda y, tail=tail, head=head: self.apply_diag_laplacian(tail, head, y)
            else:
                lap = lambda y: ag.spmm(self.identity_laplacian, y)

            h = ag.dropout(x, c.dropout, rng, training)
            h = ag.reshape(p[f"layer{t}.W1"] @ ag.reshape(h, (n, c.final_d, c.hidden_channels)),
                           (n * c.final_d, c.hidden_channels))
            h = act(lap(h @ p[f"layer{t}.W2"]))
            if c.use_epsilons:
                coeff = 1.0 + ag.tanh(p[f"layer{t}.eps"])
                x = ag.reshape(ag.reshape(x, (n, c.final_d, c.hidden_channels)) * coeff,
                               (n * c.final_d, c.hidden_channels)) - h
            else:
                x = x - h
            result.states.append(x)
        if not np.all(np.isfinite(x.data)):
            raise FloatingPointError("non-finite hidden state")
        result.logits = ag.reshape(x, (n, c.hidden_dim)) @ p["lin2.W"] + p["lin2.b"]
        return result

    def layer_operators(self, result: ForwardResult) -> list[BlockSparseOperator]:
        """Sheaf Laplacian used by each layer of a finished forward pass."""
        if self.config.model_kind == "isn":
            return [self.identity_laplacian] * self.config.layers
        return [assemble_sheaf_laplacian(diagonal_sheaf(self.graph, tail, head), self.config.laplacian_mode)
                for tail, head in result.maps]

    def predict(self, x_raw) -> np.ndarray:
        return self.forward(x_raw, training=False).logits.data
