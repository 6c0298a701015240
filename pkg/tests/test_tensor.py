import math

import numpy as np
import pytest
from hypothesis import given, settings

from posecond.errors import CheckpointError, NonFiniteValue, ShapeMismatch
from posecond.tensor import (
    Parameter,
    attention,
    attention_backward,
    check_finite,
    dump_checkpoint,
    dump_tensor,
    finite_diff_check,
    gelu,
    gelu_backward,
    layer_norm,
    layer_norm_backward,
    load_checkpoint,
    load_tensor,
    matmul,
    mlp_forward,
    sgd_step,
    softmax,
)

from conftest import seeds


def test_matmul_examples(rng):
    X = rng.normal(size=(2, 3))
    assert np.array_equal(matmul(np.eye(2), X), X)
    assert np.array_equal(matmul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])
    with pytest.raises(ShapeMismatch):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_layer_norm_examples():
    assert np.allclose(layer_norm([1.0, 2.0, 3.0]), [-1.2247449, 0.0, 1.2247449], atol=1e-4)
    assert np.array_equal(layer_norm([5.0, 5.0, 5.0]), [0.0, 0.0, 0.0])


def test_layer_norm_matches_reference(rng):
    x = rng.normal(size=(4, 7)) * 3 + 1
    ref = np.array([(r - np.mean(r)) / math.sqrt(np.mean((r - np.mean(r)) ** 2) + 1e-5) for r in x])
    assert np.allclose(layer_norm(x), ref, atol=1e-13)


def test_gelu_against_erf():
    for v in (-3.0, -1.0, 0.0, 0.5, 1.0, 4.0):
        ref = 0.5 * v * (1 + math.erf(v / math.sqrt(2)))
        assert abs(float(gelu(v)) - ref) < 1e-15
    assert abs(float(gelu(1.0)) - 0.8413447460685429) < 1e-12


def test_gelu_odd_part_is_identity(rng):
    x = rng.normal(size=50) * 5
    assert np.allclose(gelu(x) - gelu(-x), x, atol=1e-13)


def test_mlp_zero_weights_give_bias(rng):
    x = rng.normal(size=(5, 4))
    b2 = np.array([1.0, -2.0, 3.0])
    out = mlp_forward(x, np.zeros((4, 6)), np.zeros(6), np.zeros((6, 3)), b2)
    assert np.array_equal(out, np.broadcast_to(b2, (5, 3)))


def test_attention_single_key_returns_value(rng):
    v = rng.normal(size=(1, 4))
    assert np.allclose(attention(rng.normal(size=(1, 4)), rng.normal(size=(1, 4)), v), v, atol=1e-15)


def test_attention_identical_keys_average_values(rng):
    k = np.tile(rng.normal(size=(1, 3)), (5, 1))
    v = rng.normal(size=(5, 3))
    out = attention(rng.normal(size=(2, 3)), k, v)
    assert np.allclose(out, np.broadcast_to(v.mean(axis=0), (2, 3)), atol=1e-14)


def test_attention_shape_errors():
    with pytest.raises(ShapeMismatch):
        attention(np.ones((2, 3)), np.ones((4, 2)), np.ones((4, 3)))
    with pytest.raises(ShapeMismatch):
        attention(np.ones((2, 3)), np.ones((4, 3)), np.ones((5, 3)))


def test_softmax_rows_sum_to_one(rng):
    p = softmax(rng.normal(size=(6, 9)) * 50)
    assert np.allclose(p.sum(axis=-1), 1, atol=1e-14)
    assert np.all(p >= 0)


def test_sgd_step_examples():
    p = Parameter(np.array([1.0]))
    sgd_step([p], 0.1)
    assert p.value[0] == 1.0
    p.grad = np.array([1.0])
    sgd_step([p], 0.1)
    assert p.value[0] == 0.9
    assert p.grad[0] == 0.0


def test_sgd_converges_on_quadratic():
    w = Parameter(np.array(0.0))
    for _ in range(100):
        w.grad = 2 * (w.value - 3)
        sgd_step([w], 0.1)
    assert abs(float(w.value) - 3) < 1e-6


def test_finite_diff_check_textbook(rng):
    x = rng.normal(size=(3, 4))
    assert finite_diff_check(np.sum, x, np.ones_like(x)) < 1e-10
    assert finite_diff_check(lambda v: np.sum(v * v), x, 2 * x) < 1e-8
    assert finite_diff_check(lambda v: np.sum(v * v), x, 2 * x + 1e-3) > 1e-4


@pytest.mark.parametrize("eps", [1e-8, 1e-2, 0.0])
def test_finite_diff_check_rejects_eps(eps):
    with pytest.raises(ValueError):
        finite_diff_check(np.sum, np.ones(2), np.ones(2), eps=eps)


def test_finite_diff_check_nonfinite_analytic():
    with pytest.raises(NonFiniteValue):
        finite_diff_check(np.sum, np.ones(2), np.array([1.0, np.nan]))
    with pytest.raises(NonFiniteValue):
        check_finite(np.array([np.inf]))


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_backward_passes_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 5))
    w = rng.normal(size=(3, 5))
    assert finite_diff_check(lambda v: np.sum(w * layer_norm(v)), x, layer_norm_backward(w, x)) < 1e-4
    assert finite_diff_check(lambda v: np.sum(w * gelu(v)), x, gelu_backward(w, x)) < 1e-6
    q, k, v = rng.normal(size=(2, 4)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4))
    dout = rng.normal(size=(2, 4))
    dq, dk, dv = attention_backward(dout, q, k, v)
    assert finite_diff_check(lambda t: np.sum(dout * attention(t, k, v)), q, dq) < 1e-4
    assert finite_diff_check(lambda t: np.sum(dout * attention(q, t, v)), k, dk) < 1e-4
    assert finite_diff_check(lambda t: np.sum(dout * attention(q, k, t)), v, dv) < 1e-6


def test_dump_tensor_round_trip_is_bit_exact(rng):
    x = rng.normal(size=(2, 3, 4)) * 1e-300
    assert np.array_equal(load_tensor(dump_tensor(x)), x)
    assert dump_tensor(np.array([[1.5, -2.0]])) == "shape 1 2\n1.5\n-2.0\n"
    s = load_tensor(dump_tensor(np.float64(7.25)))
    assert s.shape == () and s == 7.25


def test_checkpoint_round_trip(rng):
    named = {"a": rng.normal(size=(3,)), "b": rng.normal(size=(2, 2))}
    text = dump_checkpoint(named, "demo", {"steps": 5})
    back, meta = load_checkpoint(text, "demo")
    assert list(back) == ["a", "b"]
    assert all(np.array_equal(back[k], named[k]) for k in named)
    assert meta == {"steps": "5"}


def test_checkpoint_errors():
    text = dump_checkpoint({"a": np.ones(2)}, "demo")
    with pytest.raises(CheckpointError):
        load_checkpoint(text, "vae")
    with pytest.raises(CheckpointError):
        load_checkpoint("garbage\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(text.rsplit("\n", 2)[0] + "\n", "demo")
