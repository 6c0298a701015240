"""Temporal attention injection of a pose latent, its two ablation variants,
a minimal temporal self-attention block, and the diffusion forward maths.

Feature tensors are laid out ``(p, f, d)``: spatial patches, latent frames,
channels. Attention always runs over the frame axis, independently per patch.

Injection by temporal attention (``tai_inject``)::

    zhat = layer_norm(z)              # over d
    zall = zhat + pose                # elementwise
    out  = gamma * zall + beta        # gamma, beta broadcast over (p, f)

Parameters are initialised so the untrained injection leaves the host block
untouched: gamma = 1, beta = 0 and the alignment MLP's output layer is zero.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import FrameCountMismatch, ShapeMismatch, StepOutOfRange
from .tensor import (
    DEFAULT_LN_EPS,
    Parameter,
    as_tensor,
    attention,
    attention_backward,
    layer_norm,
    layer_norm_backward,
    linear_backward,
    mlp_backward,
    mlp_forward,
)

GUIDANCE_SCALE = 7.0  # recorded in run metadata only; guidance is not implemented
DEFAULT_HIDDEN = 16


def _features(z, name="features"):
    z = as_tensor(z)
    if z.ndim != 3 or min(z.shape) < 1:
        raise ShapeMismatch(f"{name} must be (p, f, d) with all dims >= 1, got {z.shape}")
    return z


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} != {b.shape}")


def _normal(seed, key, shape, std):
    return std * rng.standard_normal(rng.derive_seed(seed, key), shape)


class _ParamSet:
    def parameters(self):
        return [getattr(self, n) for n in self._names]

    def named(self):
        return {n: getattr(self, n).value for n in self._names}

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


# alignment + TAI ---------------------------------------------------------

@dataclass(eq=False)
class TAIParams(_ParamSet):
    gamma: Parameter
    beta: Parameter
    w1: Parameter  # (4, hidden)   channel MLP
    b1: Parameter
    w2: Parameter  # (hidden, d)
    b2: Parameter
    wp: Parameter  # (p_c, p)      patch-axis map

    _names = ("gamma", "beta", "w1", "b1", "w2", "b2", "wp")

    @classmethod
    def init(cls, p_c, p, d, hidden=DEFAULT_HIDDEN, seed=0):
        wp = np.eye(p_c) if p_c == p else _normal(seed, 3, (p_c, p), 1.0 / np.sqrt(p_c))
        return cls(
            Parameter(np.ones(d), name="gamma"),
            Parameter(np.zeros(d), name="beta"),
            Parameter(_normal(seed, 1, (4, hidden), 0.5), name="w1"),
            Parameter(np.zeros(hidden), name="b1"),
            Parameter(np.zeros((hidden, d)), name="w2"),
            Parameter(np.zeros(d), name="b2"),
            Parameter(wp, name="wp"),
        )

    @classmethod
    def random(cls, p_c, p, d, hidden=DEFAULT_HIDDEN, seed=0):
        """Every parameter drawn at random; used for gradient checks and demos."""
        return cls(
            Parameter(1.0 + _normal(seed, 10, (d,), 0.3), name="gamma"),
            Parameter(_normal(seed, 11, (d,), 0.3), name="beta"),
            Parameter(_normal(seed, 12, (4, hidden), 0.5), name="w1"),
            Parameter(_normal(seed, 13, (hidden,), 0.3), name="b1"),
            Parameter(_normal(seed, 14, (hidden, d), 0.5), name="w2"),
            Parameter(_normal(seed, 15, (d,), 0.3), name="b2"),
            Parameter(_normal(seed, 16, (p_c, p), 1.0 / np.sqrt(p_c)), name="wp"),
        )

    @property
    def dims(self):
        """``(p_c, p, d)``."""
        return self.wp.shape[0], self.wp.shape[1], self.gamma.shape[0]


def _align_inputs(z_p, params, n_frames):
    z_p = as_tensor(z_p)
    if z_p.ndim != 4 or z_p.shape[-1] != 4:
        raise ShapeMismatch(f"pose latent must be (l, m, n, 4), got {z_p.shape}")
    l, m, n, _ = z_p.shape
    if n_frames is not None and l != n_frames:
        raise FrameCountMismatch(f"pose latent has {l} frames, features have {n_frames}")
    p_c = params.dims[0]
    if m * n != p_c:
        raise ShapeMismatch(f"pose latent has {m}x{n} = {m * n} patches, alignment expects {p_c}")
    return z_p.reshape(l, p_c, 4)


def align_pose_latent(z_p, params, n_frames=None):
    """Map a pose latent (l, m, n, 4) to aligned features (p, l, d)."""
    x = _align_inputs(z_p, params, n_frames)
    h = mlp_forward(x, params.w1.value, params.b1.value, params.w2.value, params.b2.value)
    out = np.einsum("lcd,cp->lpd", h, params.wp.value)
    return out.transpose(1, 0, 2)


def align_pose_latent_backward(dout, z_p, params):
    """Accumulates parameter grads; returns the gradient w.r.t. ``z_p``."""
    x = _align_inputs(z_p, params, None)
    h = mlp_forward(x, params.w1.value, params.b1.value, params.w2.value, params.b2.value)
    g = as_tensor(dout).transpose(1, 0, 2)  # (l, p, d)
    params.wp.grad += np.einsum("lcd,lpd->cp", h, g)
    dh = np.einsum("lpd,cp->lcd", g, params.wp.value)
    dx, dw1, db1, dw2, db2 = mlp_backward(dh, x, params.w1.value, params.b1.value,
                                          params.w2.value, params.b2.value)
    params.w1.grad += dw1
    params.b1.grad += db1
    params.w2.grad += dw2
    params.b2.grad += db2
    return dx.reshape(as_tensor(z_p).shape)


def tai_inject(z_k, z_p_aligned, params, eps=DEFAULT_LN_EPS):
    z_k = _features(z_k, "temporal features")
    z_p = _features(z_p_aligned, "aligned pose latent")
    _same_shape(z_k, z_p)
    if params.gamma.shape != (z_k.shape[-1],):
        raise ShapeMismatch(f"gamma has shape {params.gamma.shape}, features have d={z_k.shape[-1]}")
    return params.gamma.value * (layer_norm(z_k, eps) + z_p) + params.beta.value


def tai_inject_backward(dout, z_k, z_p_aligned, params, eps=DEFAULT_LN_EPS):
    """Accumulates gamma/beta grads; returns ``(d_z_k, d_z_p_aligned)``."""
    zall = layer_norm(z_k, eps) + z_p_aligned
    params.gamma.grad += (dout * zall).reshape(-1, zall.shape[-1]).sum(axis=0)
    params.beta.grad += dout.reshape(-1, zall.shape[-1]).sum(axis=0)
    dall = dout * params.gamma.value
    return layer_norm_backward(dall, z_k, eps), dall


# channel concatenation ---------------------------------------------------

@dataclass(eq=False)
class ConcatParams(_ParamSet):
    w: Parameter  # (2d, d)
    b: Parameter

    _names = ("w", "b")

    @classmethod
    def identity(cls, d):
        return cls(Parameter(np.vstack([np.eye(d), np.zeros((d, d))]), name="w"),
                   Parameter(np.zeros(d), name="b"))

    @classmethod
    def random(cls, d, seed=0):
        return cls(Parameter(_normal(seed, 20, (2 * d, d), 1.0 / np.sqrt(2 * d)), name="w"),
                   Parameter(_normal(seed, 21, (d,), 0.1), name="b"))


def concat_inject(z_k, z_p_aligned, params):
    """Concatenate along channels to (p, f, 2d), project back to d."""
    z_k = _features(z_k, "temporal features")
    z_p = _features(z_p_aligned, "aligned pose latent")
    _same_shape(z_k, z_p)
    if params.w.shape != (2 * z_k.shape[-1], z_k.shape[-1]):
        raise ShapeMismatch(f"projection {params.w.shape} does not fit d={z_k.shape[-1]}")
    return np.concatenate([z_k, z_p], axis=-1) @ params.w.value + params.b.value


def concat_inject_backward(dout, z_k, z_p_aligned, params):
    cat = np.concatenate([z_k, z_p_aligned], axis=-1)
    dcat, dw, db = linear_backward(dout, cat, params.w.value)
    params.w.grad += dw
    params.b.grad += db
    d = z_k.shape[-1]
    return dcat[..., :d], dcat[..., d:]


# cross attention and the host block --------------------------------------

@dataclass(eq=False)
class AttnParams(_ParamSet):
    wq: Parameter
    wk: Parameter
    wv: Parameter

    _names = ("wq", "wk", "wv")

    @classmethod
    def identity(cls, d):
        return cls(*(Parameter(np.eye(d), name=n) for n in cls._names))

    @classmethod
    def random(cls, d, seed=0):
        return cls(*(Parameter(_normal(seed, 30 + i, (d, d), 1.0 / np.sqrt(d)), name=n)
                     for i, n in enumerate(cls._names)))

    def check(self, d):
        for p in self.parameters():
            if p.shape != (d, d):
                raise ShapeMismatch(f"projection {p.name} has shape {p.shape}, expected ({d}, {d})")


def _attn_residual(x_q, x_kv, params):
    params.check(x_q.shape[-1])
    q = x_q @ params.wq.value
    k = x_kv @ params.wk.value
    v = x_kv @ params.wv.value
    return x_q + attention(q, k, v)


def _attn_residual_backward(dout, x_q, x_kv, params):
    q = x_q @ params.wq.value
    k = x_kv @ params.wk.value
    v = x_kv @ params.wv.value
    dq, dk, dv = attention_backward(dout, q, k, v)
    dx_q, dwq, _ = linear_backward(dq, x_q, params.wq.value)
    dkv_k, dwk, _ = linear_backward(dk, x_kv, params.wk.value)
    dkv_v, dwv, _ = linear_backward(dv, x_kv, params.wv.value)
    params.wq.grad += dwq
    params.wk.grad += dwk
    params.wv.grad += dwv
    return dout + dx_q, dkv_k + dkv_v


def cross_attn_inject(z_k, z_p_aligned, params):
    """Per patch: features query the pose latent frames (keys = values); residual add."""
    z_k = _features(z_k, "temporal features")
    z_p = _features(z_p_aligned, "aligned pose latent")
    _same_shape(z_k, z_p)
    return _attn_residual(z_k, z_p, params)


def cross_attn_inject_backward(dout, z_k, z_p_aligned, params):
    return _attn_residual_backward(dout, z_k, z_p_aligned, params)


def temporal_attention_block(z, params):
    """Per-patch self-attention across frames with a residual connection."""
    z = _features(z)
    return _attn_residual(z, z, params)


def temporal_attention_block_backward(dout, z, params):
    dq_side, dkv_side = _attn_residual_backward(dout, z, z, params)
    return dq_side + dkv_side


# diffusion maths ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Per-step ``alpha``; step ``t`` (1-based) has ``alpha_bar = prod(alpha[:t])``.

    Step 0 is the clean sample (``alpha_bar = 1``).
    """

    alpha: np.ndarray

    def __post_init__(self):
        a = np.array(self.alpha, dtype=np.float64).reshape(-1)
        if a.size == 0 or np.any(a < 0) or np.any(a > 1):
            raise ValueError("alpha values must lie in [0, 1]")
        a.setflags(write=False)
        object.__setattr__(self, "alpha", a)

    @classmethod
    def linear(cls, steps=1000, beta_start=1e-4, beta_end=0.02):
        return cls(1.0 - np.linspace(beta_start, beta_end, steps))

    @property
    def steps(self):
        return self.alpha.size

    @property
    def alpha_bar(self):
        return np.cumprod(self.alpha)

    def alpha_bar_at(self, t):
        if not 0 <= t <= self.steps:
            raise StepOutOfRange(f"step {t} outside [0, {self.steps}]")
        return 1.0 if t == 0 else float(np.prod(self.alpha[:t]))


def noise_forward(z0, eps, sched, t):
    """``sqrt(abar_t) z0 + sqrt(1 - abar_t) eps``."""
    z0, eps = as_tensor(z0), as_tensor(eps)
    _same_shape(z0, eps)
    abar = sched.alpha_bar_at(t)
    return np.sqrt(abar) * z0 + np.sqrt(1.0 - abar) * eps


def diffusion_loss(eps_pred, eps):
    """Mean squared error between predicted and true noise."""
    eps_pred, eps = as_tensor(eps_pred), as_tensor(eps)
    _same_shape(eps_pred, eps)
    return float(np.mean((eps_pred - eps) ** 2))


def diffusion_loss_backward(eps_pred, eps):
    eps_pred, eps = as_tensor(eps_pred), as_tensor(eps)
    return 2.0 * (eps_pred - eps) / eps_pred.size


# strategy registry used by the ablation harness --------------------------

STRATEGIES = ("tai", "concat", "cross-attn")
