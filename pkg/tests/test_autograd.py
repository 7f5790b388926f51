import zlib

import numpy as np
import pytest
import scipy.sparse as sp

from sheaflab.graph import Graph, graph_laplacian
from sheaflab.nn import autograd as ag

from conftest import gradcheck

DRAWS = 20


def _proj(rng, shape):
    return rng.standard_normal(shape)


def _away_from_zero(rng, shape, margin=1e-2):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, np.sign(x + 1e-300) * margin * 2, x)


def _cases():
    """(name, builder factory, input factory) per primitive."""
    lap = graph_laplacian(Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]))

    def unary(fn, shape=(3, 4), maker=None):
        def make(rng):
            r = _proj(rng, shape)
            x0 = (maker or _proj)(rng, shape)
            return (lambda ps: ag.total(fn(ps[0]) * r)), [x0]
        return make

    def binary(fn, sa, sb):
        def make(rng):
            a, b = _proj(rng, sa), _proj(rng, sb)
            r = _proj(rng, np.broadcast_shapes(sa, sb) if fn is not ag.matmul else (sa[0], sb[1]))
            return (lambda ps: ag.total(fn(ps[0], ps[1]) * r)), [a, b]
        return make

    def batch_matmul(rng):
        w, x = _proj(rng, (3, 3)), _proj(rng, (5, 3, 2))
        r = _proj(rng, (5, 3, 2))
        return (lambda ps: ag.total(ag.matmul(ps[0], ps[1]) * r)), [w, x]

    def spmm(rng):
        r = _proj(rng, (4, 3))
        return (lambda ps: ag.total(ag.spmm(lap, ps[0]) * r)), [_proj(rng, (4, 3))]

    def concat(rng):
        r = _proj(rng, (2, 5))
        return (lambda ps: ag.total(ag.concat([ps[0], ps[1]], axis=1) * r)), [_proj(rng, (2, 3)), _proj(rng, (2, 2))]

    def gather(rng):
        idx = np.array([0, 2, 2, 1, 0])
        r = _proj(rng, (5, 2))
        return (lambda ps: ag.total(ag.gather(ps[0], idx) * r)), [_proj(rng, (3, 2))]

    def scatter(rng):
        idx = np.array([0, 2, 2, 1, 0])
        r = _proj(rng, (4, 2))
        return (lambda ps: ag.total(ag.scatter_add(ps[0], idx, 4) * r)), [_proj(rng, (5, 2))]

    def reshape(rng):
        r = _proj(rng, (6, 2))
        return (lambda ps: ag.total(ag.reshape(ps[0], (6, 2)) * r)), [_proj(rng, (3, 4))]

    def transpose(rng):
        r = _proj(rng, (4, 2, 3))
        return (lambda ps: ag.total(ag.transpose(ps[0], (2, 0, 1)) * r)), [_proj(rng, (2, 3, 4))]

    def dropout(rng):
        seed = int(rng.integers(1 << 30))
        r = _proj(rng, (4, 5))
        return (lambda ps: ag.total(ag.dropout(ps[0], 0.4, np.random.default_rng(seed)) * r)), [_proj(rng, (4, 5))]

    def mask(rng):
        m = (rng.random((3, 3)) > 0.5) * 2.0
        r = _proj(rng, (3, 3))
        return (lambda ps: ag.total(ag.apply_mask(ps[0], m) * r)), [_proj(rng, (3, 3))]

    def xent(rng):
        labels = rng.integers(0, 4, 6)
        idx = np.array([0, 2, 3, 5])
        return (lambda ps: ag.softmax_cross_entropy(ps[0], labels, idx)), [_proj(rng, (6, 4))]

    def pinv(rng):
        r = _proj(rng, (3, 3))
        return (lambda ps: ag.total(ag.pinv_sqrt(ps[0]) * r)), [rng.uniform(0.5, 2.0, (3, 3))]

    def scalar_mul(rng):
        r = _proj(rng, (3, 2))
        return (lambda ps: ag.total((ps[0] * 2.5 - ps[0]) * r)), [_proj(rng, (3, 2))]

    return {
        "add": binary(ag.add, (3, 4), (4,)),
        "sub": binary(ag.sub, (3, 4), (3, 1)),
        "mul": binary(ag.mul, (3, 4), (3, 4)),
        "matmul": binary(ag.matmul, (3, 4), (4, 2)),
        "batch_matmul": batch_matmul,
        "spmm": spmm,
        "reshape": reshape,
        "transpose": transpose,
        "concat": concat,
        "gather": gather,
        "scatter_add": scatter,
        "relu": unary(ag.relu, maker=_away_from_zero),
        "elu": unary(ag.elu, maker=_away_from_zero),
        "tanh": unary(ag.tanh),
        "pinv_sqrt": pinv,
        "dropout": dropout,
        "apply_mask": mask,
        "softmax_cross_entropy": xent,
        "scalar_mul": scalar_mul,
    }


CASES = _cases()


@pytest.mark.parametrize("name", sorted(CASES))
def test_primitive_matches_finite_differences(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(DRAWS):
        build, arrays = CASES[name](rng)
        worst = max(worst, gradcheck(build, arrays))
    assert worst < 1e-4, f"{name}: relative error {worst:.3g}"


def test_linear_gradient_is_exact():
    x = np.array([[1.0], [2.0], [3.0]])
    w = ag.parameter(np.ones((2, 3)))
    (g,) = ag.backward(ag.total(w @ x), [w])
    assert np.array_equal(g, np.tile(x.T, (2, 1)))


def test_unused_parameter_gets_zero():
    a, b = ag.parameter(np.ones(3)), ag.parameter(np.ones(3))
    ga, gb = ag.backward(ag.total(a * 2.0), [a, b])
    assert np.array_equal(gb, np.zeros(3)) and np.array_equal(ga, np.full(3, 2.0))


def test_non_scalar_loss_rejected():
    a = ag.parameter(np.ones(3))
    with pytest.raises(ValueError):
        ag.backward(a * 2.0, [a])


def test_cycle_detected():
    a = ag.parameter(np.ones(2))
    b = a * 2.0
    a.parents = (b,)  # corrupt the graph on purpose
    with pytest.raises(ag.CycleError):
        ag.backward(ag.total(b), [a])


def test_repeated_backward_does_not_accumulate():
    a = ag.parameter(np.ones(2))
    loss = ag.total(a * a)
    g1 = ag.backward(loss, [a])[0].copy()
    g2 = ag.backward(loss, [a])[0]
    assert np.array_equal(g1, g2)


def test_dropout_eval_is_identity_and_needs_valid_p():
    x = ag.parameter(np.ones((2, 2)))
    assert ag.dropout(x, 0.5, None, training=False) is x
    with pytest.raises(ValueError):
        ag.dropout(x, 1.0, np.random.default_rng(0))


def test_spmm_accepts_scipy_and_checks_shape():
    mat = sp.identity(3, format="csr")
    x = ag.parameter(np.arange(3.0)[:, None])
    assert np.array_equal(ag.spmm(mat, x).data, x.data)
    with pytest.raises(ValueError):
        ag.spmm(mat, ag.parameter(np.ones((2, 1))))
