"""Finite-difference checks for every differentiable op and composite.

Each ``check_*`` function draws seeded random inputs, scalarises the op
output with a fixed random projection ``f(x) = sum(op(x) * proj)`` and
compares the hand-written backward pass against central differences for
every input and parameter. The return value is the maximum relative error.
"""

import numpy as np

from . import tai, vae
from .tensor import (
    attention,
    attention_backward,
    finite_diff_check,
    layer_norm,
    layer_norm_backward,
    matmul,
    matmul_backward,
    mlp_backward,
    mlp_forward,
)

FD_EPS = 1e-5


def _wrt(f, arrays, i):
    """Scalar function of ``arrays[i]`` alone, others held fixed."""
    def g(x):
        args = list(arrays)
        args[i] = x
        return f(*args)
    return g


def _check_all(f, arrays, grads, eps=FD_EPS):
    return max(finite_diff_check(_wrt(f, arrays, i), a, g, eps)
               for i, (a, g) in enumerate(zip(arrays, grads)))


def _param_fn(loss_of_params, params, p):
    def g(x):
        saved = p.value
        p.value = x
        try:
            return loss_of_params()
        finally:
            p.value = saved
    return g


def _check_params(loss_of_params, params, eps=FD_EPS):
    return max(finite_diff_check(_param_fn(loss_of_params, params, p), p.value, p.grad, eps)
               for p in params)


def check_matmul(seed, eps=FD_EPS):
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal((5, 4)), rng.standard_normal((4, 3))
    proj = rng.standard_normal((5, 3))
    grads = matmul_backward(proj, a, b)
    return _check_all(lambda a, b: np.sum(matmul(a, b) * proj), [a, b], grads, eps)


def check_layer_norm(seed, eps=FD_EPS, op=layer_norm):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, 4, 7)) * 2.0 + 0.5
    proj = rng.standard_normal(x.shape)
    grad = layer_norm_backward(proj, x)
    return finite_diff_check(lambda x: np.sum(op(x) * proj), x, grad, eps)


def check_mlp(seed, eps=FD_EPS):
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal((2, 3, 5)), rng.standard_normal((5, 6)),
              rng.standard_normal(6), rng.standard_normal((6, 4)), rng.standard_normal(4)]
    proj = rng.standard_normal((2, 3, 4))
    grads = mlp_backward(proj, *arrays)
    return _check_all(lambda *a: np.sum(mlp_forward(*a) * proj), arrays, grads, eps)


def check_attention(seed, eps=FD_EPS):
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal((4, 8)) for _ in range(3)]
    proj = rng.standard_normal((4, 8))
    grads = attention_backward(proj, *arrays)
    return _check_all(lambda *a: np.sum(attention(*a) * proj), arrays, grads, eps)


def check_temporal_block(seed, eps=FD_EPS, p=3, f=4, d=6):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((p, f, d))
    params = tai.AttnParams.random(d, seed=seed)
    proj = rng.standard_normal(z.shape)
    dz = tai.temporal_attention_block_backward(proj, z, params)
    loss = lambda: np.sum(tai.temporal_attention_block(z, params) * proj)
    err_z = finite_diff_check(lambda x: np.sum(tai.temporal_attention_block(x, params) * proj), z, dz, eps)
    return max(err_z, _check_params(loss, params.parameters(), eps))


def check_tai(seed, eps=FD_EPS, l=4, m=2, n=3, p=10, d=8):
    """Alignment MLP followed by the injection, w.r.t. features, latent and all params."""
    rng = np.random.default_rng(seed)
    z_k = rng.standard_normal((p, l, d)) * 1.5 + 0.3
    z_p = rng.standard_normal((l, m, n, 4))
    params = tai.TAIParams.random(m * n, p, d, hidden=6, seed=seed)
    proj = rng.standard_normal(z_k.shape)

    def forward(z_k, z_p):
        return tai.tai_inject(z_k, tai.align_pose_latent(z_p, params, n_frames=l), params)

    aligned = tai.align_pose_latent(z_p, params, n_frames=l)
    dz_k, d_aligned = tai.tai_inject_backward(proj, z_k, aligned, params)
    dz_p = tai.align_pose_latent_backward(d_aligned, z_p, params)
    errs = [
        finite_diff_check(lambda x: np.sum(forward(x, z_p) * proj), z_k, dz_k, eps),
        finite_diff_check(lambda x: np.sum(forward(z_k, x) * proj), z_p, dz_p, eps),
        _check_params(lambda: np.sum(forward(z_k, z_p) * proj), params.parameters(), eps),
    ]
    return max(errs)


def check_concat(seed, eps=FD_EPS, p=3, f=4, d=5):
    rng = np.random.default_rng(seed)
    z_k, z_p = rng.standard_normal((p, f, d)), rng.standard_normal((p, f, d))
    params = tai.ConcatParams.random(d, seed=seed)
    proj = rng.standard_normal(z_k.shape)
    dz_k, dz_p = tai.concat_inject_backward(proj, z_k, z_p, params)
    f_ = lambda a, b: np.sum(tai.concat_inject(a, b, params) * proj)
    return max(_check_all(f_, [z_k, z_p], [dz_k, dz_p], eps),
               _check_params(lambda: f_(z_k, z_p), params.parameters(), eps))


def check_cross_attn(seed, eps=FD_EPS, p=3, f=4, d=5):
    rng = np.random.default_rng(seed)
    z_k, z_p = rng.standard_normal((p, f, d)), rng.standard_normal((p, f, d))
    params = tai.AttnParams.random(d, seed=seed)
    proj = rng.standard_normal(z_k.shape)
    dz_k, dz_p = tai.cross_attn_inject_backward(proj, z_k, z_p, params)
    f_ = lambda a, b: np.sum(tai.cross_attn_inject(a, b, params) * proj)
    return max(_check_all(f_, [z_k, z_p], [dz_k, dz_p], eps),
               _check_params(lambda: f_(z_k, z_p), params.parameters(), eps))


def check_elbo(seed, eps=FD_EPS, n_frames=8, channels=1, beta=0.1, noise=0.02):
    """ELBO of the full VAE (encode, reparameterize, decode) w.r.t. every VAE parameter.

    The instance is near a fit (blocks close to the decoder bias, small
    decoder weights, inputs bounded away from zero) so that every gradient
    coordinate stays well above the central-difference round-off floor.
    """
    rng = np.random.default_rng(seed)
    B = vae.block_size(channels)
    u = rng.standard_normal(B)
    base = np.sign(u) * (0.5 + 0.5 * np.abs(np.tanh(u)))
    blocks = base + noise * rng.standard_normal((n_frames // vae.T_BLOCK, 1, 1, B))
    clip = vae.MotionClip(vae.from_blocks(blocks, channels))
    params = vae.VaeParams.init(channels, seed=seed, std=0.02)
    params.enc_w.value = rng.standard_normal(params.enc_w.shape) * 0.5
    params.enc_b.value = rng.standard_normal(params.enc_b.shape) * 0.3
    params.dec_b.value = base.copy()
    noise_seed = seed + 1000
    vae.loss_and_grads(params, clip, noise_seed, beta)

    def loss():
        mean, logvar = vae.encode(clip, params)
        recon = vae.decode(vae.reparameterize(mean, logvar, noise_seed), params)
        return vae.elbo_loss(recon, clip, mean, logvar, beta)[0]

    return _check_params(loss, params.parameters(), eps)


def check_diffusion_loss(seed, eps=FD_EPS):
    rng = np.random.default_rng(seed)
    pred, true = rng.standard_normal((3, 4, 5)), rng.standard_normal((3, 4, 5))
    grad = tai.diffusion_loss_backward(pred, true)
    return finite_diff_check(lambda x: tai.diffusion_loss(x, true), pred, grad, eps)


CHECKS = {
    "layer_norm": check_layer_norm,
    "mlp": check_mlp,
    "attention": check_attention,
    "temporal_block": check_temporal_block,
    "tai": check_tai,
    "concat": check_concat,
    "cross_attn": check_cross_attn,
    "elbo": check_elbo,
    "diffusion_loss": check_diffusion_loss,
}
