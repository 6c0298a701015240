"""Double-precision differentiable primitives with hand-written gradients.

Tensors are plain ``float64`` numpy arrays. Each op ``f`` has a partner
``f_backward(dout, *inputs)`` that recomputes what it needs from the inputs
and returns the input gradients, so every function here is pure. There is
no autograd tape; composites in :mod:`posecond.vae` and :mod:`posecond.tai`
chain these by hand.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, NonFiniteValue, ShapeMismatch

DEFAULT_LN_EPS = 1e-5
_SQRT_2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_erf = np.vectorize(math.erf, otypes=[np.float64])


def as_tensor(x):
    return np.asarray(x, dtype=np.float64)


def check_finite(x, what="tensor"):
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise NonFiniteValue(f"{what} contains NaN or Inf")
    return x


def _need(cond, msg):
    if not cond:
        raise ShapeMismatch(msg)


@dataclass(eq=False)
class Parameter:
    value: np.ndarray
    grad: np.ndarray = field(default=None)
    name: str = ""

    def __post_init__(self):
        self.value = np.array(self.value, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        _need(self.grad.shape == self.value.shape,
              f"grad shape {self.grad.shape} != value shape {self.value.shape}")

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


def sgd_step(params, lr):
    for p in params:
        p.value = p.value - lr * p.grad
        p.zero_grad()


# matmul ------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _need(a.ndim == 2 and b.ndim == 2, f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    _need(a.shape[1] == b.shape[0], f"matmul inner dims differ: {a.shape} @ {b.shape}")
    return a @ b


def matmul_backward(dout, a, b):
    return dout @ b.T, a.T @ dout


# layer norm --------------------------------------------------------------

def layer_norm(x, eps=DEFAULT_LN_EPS):
    """Normalise the last axis to zero mean, unit population variance; no affine."""
    x = as_tensor(x)
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def layer_norm_backward(dout, x, eps=DEFAULT_LN_EPS):
    x = as_tensor(x)
    d = x.shape[-1]
    mu = x.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x.var(axis=-1, keepdims=True) + eps)
    xhat = (x - mu) * inv
    return inv / d * (d * dout - dout.sum(axis=-1, keepdims=True)
                      - xhat * (dout * xhat).sum(axis=-1, keepdims=True))


# GELU / MLP --------------------------------------------------------------

def gelu(x):
    """Exact GELU, ``x * Phi(x)`` with the erf form of the normal CDF."""
    x = as_tensor(x)
    return 0.5 * x * (1.0 + _erf(x / _SQRT_2))


def gelu_backward(dout, x):
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + _erf(x / _SQRT_2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return dout * (cdf + x * pdf)


def linear(x, W, b=None):
    x, W = as_tensor(x), as_tensor(W)
    _need(x.shape[-1] == W.shape[0], f"linear: input dim {x.shape[-1]} != weight rows {W.shape[0]}")
    y = x @ W
    if b is not None:
        _need(np.shape(b) == (W.shape[1],), f"linear: bias shape {np.shape(b)} != ({W.shape[1]},)")
        y = y + b
    return y


def linear_backward(dout, x, W):
    """Returns ``(dx, dW, db)``; leading axes of ``x`` are batch axes."""
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return dout @ W.T, x2.T @ d2, d2.sum(axis=0)


def mlp_forward(x, W1, b1, W2, b2):
    """``gelu(x @ W1 + b1) @ W2 + b2`` over the last axis."""
    return linear(gelu(linear(x, W1, b1)), W2, b2)


def mlp_backward(dout, x, W1, b1, W2, b2):
    """Returns ``(dx, dW1, db1, dW2, db2)``."""
    h = linear(x, W1, b1)
    a = gelu(h)
    da, dW2, db2 = linear_backward(dout, a, W2)
    dh = gelu_backward(da, h)
    dx, dW1, db1 = linear_backward(dh, x, W1)
    return dx, dW1, db1, dW2, db2


# attention ---------------------------------------------------------------

def softmax(x, axis=-1):
    x = as_tensor(x)
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def _check_attention(q, k, v):
    _need(q.ndim >= 2 and q.ndim == k.ndim == v.ndim, "attention operands need matching rank >= 2")
    _need(q.shape[:-2] == k.shape[:-2] == v.shape[:-2], "attention batch axes differ")
    _need(q.shape[-1] == k.shape[-1], f"query dim {q.shape[-1]} != key dim {k.shape[-1]}")
    _need(k.shape[-2] == v.shape[-2], f"{k.shape[-2]} keys but {v.shape[-2]} values")


def attention(q, k, v):
    """``softmax(q k^T / sqrt(d)) v`` over the last two axes; leading axes batch."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    _check_attention(q, k, v)
    scores = q @ np.swapaxes(k, -1, -2) / math.sqrt(q.shape[-1])
    return softmax(scores) @ v


def attention_backward(dout, q, k, v):
    """Returns ``(dq, dk, dv)``."""
    scale = 1.0 / math.sqrt(q.shape[-1])
    P = softmax(q @ np.swapaxes(k, -1, -2) * scale)
    dv = np.swapaxes(P, -1, -2) @ dout
    dP = dout @ np.swapaxes(v, -1, -2)
    dS = P * (dP - (dP * P).sum(axis=-1, keepdims=True))
    dq = dS @ k * scale
    dk = np.swapaxes(dS, -1, -2) @ q * scale
    return dq, dk, dv


# gradient checking -------------------------------------------------------

def numeric_grad(f, x, eps=1e-5):
    """Central-difference gradient of scalar ``f`` at ``x`` (x is not modified)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteValue(f"objective is non-finite around coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * eps)
    return g


def finite_diff_check(f, x, analytic_grad, eps=1e-5):
    """Max relative error between ``analytic_grad`` and central differences of ``f``.

    Per coordinate: ``|fd - an| / max(|fd|, |an|, 1e-8)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    an = as_tensor(analytic_grad)
    check_finite(an, "analytic gradient")
    fd = numeric_grad(f, x, eps)
    _need(fd.shape == an.shape, f"gradient shape {an.shape} != input shape {fd.shape}")
    denom = np.maximum(np.maximum(np.abs(fd), np.abs(an)), 1e-8)
    return float(np.max(np.abs(fd - an) / denom)) if fd.size else 0.0


# text dump / checkpoint --------------------------------------------------

CHECKPOINT_MAGIC = "posecond-checkpoint"
CHECKPOINT_VERSION = 1


def dump_tensor(x):
    """``shape d0 d1 ...`` line, then all values in row-major order, one per line.

    Values use ``repr`` (shortest round-trip form), so loading is bit-exact.
    """
    x = as_tensor(x)
    head = "shape" + "".join(f" {d}" for d in x.shape)
    return head + "\n" + "".join(f"{float(v)!r}\n" for v in x.reshape(-1))


def _load_tensor(lines, pos):
    head = lines[pos].split()
    if not head or head[0] != "shape":
        raise CheckpointError(f"line {pos + 1}: expected a shape header")
    shape = tuple(int(d) for d in head[1:])
    n = int(np.prod(shape, dtype=np.int64))
    vals = lines[pos + 1:pos + 1 + n]
    if len(vals) != n:
        raise CheckpointError(f"line {pos + 1}: expected {n} values, found {len(vals)}")
    return np.array([float(v) for v in vals], dtype=np.float64).reshape(shape), pos + 1 + n


def load_tensor(text):
    arr, _ = _load_tensor(text.splitlines(), 0)
    return arr


def dump_checkpoint(named, kind, meta=None):
    """Versioned text checkpoint of ``{name: array}``."""
    out = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION} {kind}\n"]
    for key, val in sorted((meta or {}).items()):
        out.append(f"meta {key} {val}\n")
    for name, arr in named.items():
        out.append(f"tensor {name}\n")
        out.append(dump_tensor(arr))
    return "".join(out)


def load_checkpoint(text, kind=None):
    """Inverse of :func:`dump_checkpoint`; returns ``(named, meta)``."""
    lines = text.splitlines()
    if not lines:
        raise CheckpointError("empty checkpoint")
    head = lines[0].split()
    if len(head) != 3 or head[0] != CHECKPOINT_MAGIC:
        raise CheckpointError("not a posecond checkpoint")
    if int(head[1]) != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {head[1]}")
    if kind is not None and head[2] != kind:
        raise CheckpointError(f"checkpoint holds {head[2]!r}, expected {kind!r}")
    named, meta = {}, {}
    pos = 1
    while pos < len(lines):
        parts = lines[pos].split(maxsplit=2)
        if parts[0] == "meta":
            meta[parts[1]] = parts[2] if len(parts) > 2 else ""
            pos += 1
        elif parts[0] == "tensor":
            named[parts[1]], pos = _load_tensor(lines, pos + 1)
        else:
            raise CheckpointError(f"line {pos + 1}: unexpected record {parts[0]!r}")
    return named, meta
