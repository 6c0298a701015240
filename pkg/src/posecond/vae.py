"""Block-linear VAE that compresses motion clips into a pose latent.

A clip of shape (L, H, W, C) is cut into non-overlapping 4x8x8 blocks. Each
block is flattened and mapped by one linear layer to 4 means and 4
log-variances, so the latent has shape (L/4, H/8, W/8, 4). The decoder maps
each 4-vector straight back to a block. Only these compression ratios are
meant to match a full video VAE; the architecture is deliberately tiny so
it can be trained and gradient-checked on a laptop.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import NonFiniteLoss, ShapeMismatch
from .tensor import (
    Parameter,
    check_finite,
    dump_checkpoint,
    linear,
    linear_backward,
    load_checkpoint,
    sgd_step,
)

T_BLOCK, S_BLOCK, LATENT_CH = 4, 8, 4
DEFAULT_BETA = 1e-3
DEFAULT_LR = 30.0
DEFAULT_CLIP_NORM = 0.1
INIT_STD = 0.01


@dataclass(frozen=True, eq=False)
class MotionClip:
    data: np.ndarray  # (L, H, W, C), padded
    orig_shape: tuple = None

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 4:
            raise ShapeMismatch(f"clip must be (L, H, W, C), got shape {d.shape}")
        L, H, W, _ = d.shape
        if L % T_BLOCK or H % S_BLOCK or W % S_BLOCK:
            raise ShapeMismatch(f"clip shape {d.shape} is not divisible by (4, 8, 8)")
        object.__setattr__(self, "data", d)
        if self.orig_shape is None:
            object.__setattr__(self, "orig_shape", d.shape)

    @property
    def shape(self):
        return self.data.shape

    @property
    def latent_shape(self):
        L, H, W, _ = self.data.shape
        return (L // T_BLOCK, H // S_BLOCK, W // S_BLOCK, LATENT_CH)

    def unpadded(self):
        L, H, W, C = self.orig_shape
        return self.data[:L, :H, :W, :C]


def _round_up(n, m):
    return -(-n // m) * m


def pad_clip(raw):
    """Replicate the last frame up to a multiple of 4 frames; edge-pad H, W to multiples of 8."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 4 or raw.shape[0] < 1:
        raise ShapeMismatch(f"expected (L, H, W, C) with L >= 1, got {raw.shape}")
    L, H, W, _ = raw.shape
    pads = ((0, _round_up(L, T_BLOCK) - L), (0, _round_up(H, S_BLOCK) - H),
            (0, _round_up(W, S_BLOCK) - W), (0, 0))
    return MotionClip(np.pad(raw, pads, mode="edge"), raw.shape)


def to_blocks(x):
    L, H, W, C = x.shape
    b = x.reshape(L // T_BLOCK, T_BLOCK, H // S_BLOCK, S_BLOCK, W // S_BLOCK, S_BLOCK, C)
    return b.transpose(0, 2, 4, 1, 3, 5, 6).reshape(L // T_BLOCK, H // S_BLOCK, W // S_BLOCK, -1)


def from_blocks(b, channels):
    l, m, n, _ = b.shape
    x = b.reshape(l, m, n, T_BLOCK, S_BLOCK, S_BLOCK, channels)
    return x.transpose(0, 3, 1, 4, 2, 5, 6).reshape(l * T_BLOCK, m * S_BLOCK, n * S_BLOCK, channels)


def block_size(channels):
    return T_BLOCK * S_BLOCK * S_BLOCK * channels


def _fan_in(blocks):
    # fixed 1/sqrt(fan-in) input scale keeps encoder and decoder curvature comparable under SGD
    return blocks / np.sqrt(blocks.shape[-1])


@dataclass(eq=False)
class VaeParams:
    channels: int
    enc_w: Parameter
    enc_b: Parameter
    dec_w: Parameter
    dec_b: Parameter

    @classmethod
    def init(cls, channels=3, seed=0, std=INIT_STD):
        B = block_size(channels)
        return cls(
            channels,
            Parameter(std * rng.standard_normal(rng.derive_seed(seed, 1), (B, 2 * LATENT_CH)), name="enc_w"),
            Parameter(np.zeros(2 * LATENT_CH), name="enc_b"),
            Parameter(std * rng.standard_normal(rng.derive_seed(seed, 2), (LATENT_CH, B)), name="dec_w"),
            Parameter(np.zeros(B), name="dec_b"),
        )

    @classmethod
    def zeros(cls, channels=3):
        B = block_size(channels)
        return cls(channels, Parameter(np.zeros((B, 2 * LATENT_CH))), Parameter(np.zeros(2 * LATENT_CH)),
                   Parameter(np.zeros((LATENT_CH, B))), Parameter(np.zeros(B)))

    def parameters(self):
        return [self.enc_w, self.enc_b, self.dec_w, self.dec_b]

    def named(self):
        return {"enc_w": self.enc_w.value, "enc_b": self.enc_b.value,
                "dec_w": self.dec_w.value, "dec_b": self.dec_b.value}

    def dumps(self):
        return dump_checkpoint(self.named(), "vae", {"channels": self.channels})

    @classmethod
    def loads(cls, text):
        named, meta = load_checkpoint(text, kind="vae")
        return cls(int(meta["channels"]), *(Parameter(named[k], name=k)
                                            for k in ("enc_w", "enc_b", "dec_w", "dec_b")))


def _clip_data(clip):
    return clip.data if isinstance(clip, MotionClip) else np.asarray(clip, dtype=np.float64)


def encode(clip, params):
    """Returns ``(mean, logvar)``, each of shape (L/4, H/8, W/8, 4)."""
    x = _clip_data(clip)
    if x.ndim != 4 or x.shape[-1] != params.channels:
        raise ShapeMismatch(f"clip shape {x.shape} does not match a {params.channels}-channel VAE")
    if x.shape[0] % T_BLOCK or x.shape[1] % S_BLOCK or x.shape[2] % S_BLOCK:
        raise ShapeMismatch(f"clip shape {x.shape} is not divisible by (4, 8, 8); pad it first")
    h = linear(_fan_in(to_blocks(x)), params.enc_w.value, params.enc_b.value)
    return h[..., :LATENT_CH], h[..., LATENT_CH:]


def reparameterize(mean, logvar, seed):
    """``mean + exp(logvar / 2) * eps`` with SplitMix64/Box-Muller noise."""
    mean, logvar = np.asarray(mean), np.asarray(logvar)
    if mean.shape != logvar.shape:
        raise ShapeMismatch(f"mean {mean.shape} and logvar {logvar.shape} differ")
    eps = rng.standard_normal(seed, mean.shape)
    return mean + np.exp(0.5 * logvar) * eps


def decode(z, params):
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 4 or z.shape[-1] != LATENT_CH:
        raise ShapeMismatch(f"latent must be (l, m, n, {LATENT_CH}), got {z.shape}")
    return MotionClip(from_blocks(linear(z, params.dec_w.value, params.dec_b.value), params.channels))


def elbo_loss(recon, target, mean, logvar, beta=DEFAULT_BETA):
    """``(total, recon_mse, kl)`` with both terms averaged over elements."""
    r, t = _clip_data(recon), _clip_data(target)
    if r.shape != t.shape:
        raise ShapeMismatch(f"recon {r.shape} vs target {t.shape}")
    mse = float(np.mean((r - t) ** 2))
    kl = float(np.mean(0.5 * (mean**2 + np.exp(logvar) - 1.0 - logvar)))
    return mse + beta * kl, mse, kl


def elbo_loss_backward(recon, target, mean, logvar, beta=DEFAULT_BETA):
    """Gradients of the total loss w.r.t. ``(recon, mean, logvar)``."""
    r, t = _clip_data(recon), _clip_data(target)
    d_recon = 2.0 * (r - t) / r.size
    d_mean = beta * mean / mean.size
    d_logvar = beta * 0.5 * (np.exp(logvar) - 1.0) / logvar.size
    return d_recon, d_mean, d_logvar


def loss_and_grads(params, clip, noise_seed, beta=DEFAULT_BETA):
    """Forward + backward through encode, reparameterize, decode and the ELBO.

    Accumulates into ``param.grad`` and returns ``(total, recon_mse, kl)``.
    """
    x = _clip_data(clip)
    blocks = _fan_in(to_blocks(x))
    h = linear(blocks, params.enc_w.value, params.enc_b.value)
    mean, logvar = h[..., :LATENT_CH], h[..., LATENT_CH:]
    eps = rng.standard_normal(noise_seed, mean.shape)
    std = np.exp(0.5 * logvar)
    z = mean + std * eps
    recon_blocks = linear(z, params.dec_w.value, params.dec_b.value)
    recon = from_blocks(recon_blocks, params.channels)
    total, mse, kl = elbo_loss(recon, x, mean, logvar, beta)

    d_recon, d_mean, d_logvar = elbo_loss_backward(recon, x, mean, logvar, beta)
    d_rb = to_blocks(d_recon)
    dz, d_dec_w, d_dec_b = linear_backward(d_rb, z, params.dec_w.value)
    d_mean = d_mean + dz
    d_logvar = d_logvar + dz * eps * 0.5 * std
    dh = np.concatenate([d_mean, d_logvar], axis=-1)
    _, d_enc_w, d_enc_b = linear_backward(dh, blocks, params.enc_w.value)

    params.enc_w.grad += d_enc_w
    params.enc_b.grad += d_enc_b
    params.dec_w.grad += d_dec_w
    params.dec_b.grad += d_dec_b
    return total, mse, kl


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    lr: float = DEFAULT_LR
    beta: float = DEFAULT_BETA
    seed: int = 0
    clip_norm: float = DEFAULT_CLIP_NORM  # global gradient-norm ceiling; None disables

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")


@dataclass
class TrainResult:
    params: VaeParams
    loss_history: list = field(default_factory=list)
    recon_history: list = field(default_factory=list)
    kl_history: list = field(default_factory=list)


def train(clips, cfg=TrainConfig(), params=None):
    """Full-batch SGD over ``clips`` (loss averaged over clips), fixed clip order.

    The averaged gradient is rescaled to global norm ``cfg.clip_norm`` when it
    exceeds it. ``loss_history[k]`` is the total loss evaluated before update ``k``.
    """
    clips = [c if isinstance(c, MotionClip) else pad_clip(c) for c in clips]
    if not clips:
        raise ValueError("need at least one clip")
    channels = clips[0].shape[-1]
    if params is None:
        params = VaeParams.init(channels, seed=cfg.seed)
    result = TrainResult(params)
    n = len(clips)
    for step in range(cfg.steps):
        total = mse = kl = 0.0
        for i, clip in enumerate(clips):
            t, m, k = loss_and_grads(params, clip, rng.derive_seed(cfg.seed, step, i), cfg.beta)
            total += t / n
            mse += m / n
            kl += k / n
        if not np.isfinite(total):
            raise NonFiniteLoss(step, total)
        for p in params.parameters():
            p.grad /= n
            check_finite(p.grad, f"gradient of {p.name} at step {step}")
        if cfg.clip_norm:
            norm = np.sqrt(sum(float(np.sum(p.grad**2)) for p in params.parameters()))
            if norm > cfg.clip_norm:
                for p in params.parameters():
                    p.grad *= cfg.clip_norm / norm
        sgd_step(params.parameters(), cfg.lr)
        result.loss_history.append(total)
        result.recon_history.append(mse)
        result.kl_history.append(kl)
    return result
