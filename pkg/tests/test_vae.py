import numpy as np
import pytest
from hypothesis import given, settings

from posecond import pipeline, trajectory
from posecond.errors import NonFiniteLoss, ShapeMismatch
from posecond.gradcheck import check_elbo
from posecond.vae import (
    MotionClip,
    TrainConfig,
    VaeParams,
    decode,
    elbo_loss,
    encode,
    from_blocks,
    pad_clip,
    reparameterize,
    to_blocks,
    train,
)

from conftest import seeds


@pytest.mark.parametrize("raw,padded", [
    ((16, 9, 16, 3), (16, 16, 16, 3)),
    ((17, 8, 8, 3), (20, 8, 8, 3)),
    ((16, 80, 48, 3), (16, 80, 48, 3)),
    ((1, 1, 1, 1), (4, 8, 8, 1)),
])
def test_pad_shapes(raw, padded):
    clip = pad_clip(np.zeros(raw))
    assert clip.shape == padded
    assert clip.orig_shape == raw


def test_pad_replicates_edges_and_unpads(rng):
    raw = rng.normal(size=(5, 9, 10, 3))
    clip = pad_clip(raw)
    assert np.array_equal(clip.unpadded(), raw)
    assert np.array_equal(clip.data[7, :9, :10], raw[4])  # last frame replicated
    assert np.array_equal(clip.data[:5, 15, :10], raw[:, 8])


def test_divisible_input_unchanged(rng):
    raw = rng.normal(size=(8, 16, 8, 2))
    assert np.array_equal(pad_clip(raw).data, raw)


def test_blocks_round_trip(rng):
    x = rng.normal(size=(8, 16, 24, 3))
    b = to_blocks(x)
    assert b.shape == (2, 2, 3, 4 * 8 * 8 * 3)
    assert np.array_equal(from_blocks(b, 3), x)
    # block (0, 1, 2) holds exactly frames 0..3, rows 8..15, cols 16..23
    assert np.array_equal(np.sort(b[0, 1, 2]), np.sort(x[0:4, 8:16, 16:24].ravel()))


def test_encode_latent_shape(rng):
    params = VaeParams.init(3, seed=1)
    mean, logvar = encode(MotionClip(rng.normal(size=(16, 80, 48, 3))), params)
    assert mean.shape == logvar.shape == (4, 10, 6, 4)


def test_zero_params_give_zero_latents(rng):
    mean, logvar = encode(MotionClip(rng.normal(size=(4, 8, 8, 3))), VaeParams.zeros(3))
    assert not mean.any() and not logvar.any()


def test_decode_reparam_encode_shape(rng):
    params = VaeParams.init(3, seed=2)
    clip = MotionClip(rng.normal(size=(8, 16, 24, 3)))
    out = decode(reparameterize(*encode(clip, params), seed=5), params)
    assert out.shape == clip.shape


def test_encode_rejects_bad_shapes():
    params = VaeParams.init(3)
    with pytest.raises(ShapeMismatch):
        encode(np.zeros((4, 8, 8, 2)), params)
    with pytest.raises(ShapeMismatch):
        encode(np.zeros((5, 8, 8, 3)), params)
    with pytest.raises(ShapeMismatch):
        MotionClip(np.zeros((4, 9, 8, 3)))


def test_reparameterize_collapse_and_determinism(rng):
    mean = rng.normal(size=(2, 3, 4, 4))
    z = reparameterize(mean, np.full(mean.shape, -100.0), seed=1)
    assert np.max(np.abs(z - mean)) < 1e-15
    zero = np.zeros((3, 4))
    assert np.array_equal(reparameterize(zero, zero, 9), reparameterize(zero, zero, 9))
    assert not np.array_equal(reparameterize(zero, zero, 9), reparameterize(zero, zero, 10))


def test_reparameterize_unit_variance():
    z = reparameterize(np.zeros(100_000), np.zeros(100_000), seed=2024)
    assert 0.98 <= z.var() <= 1.02


def test_elbo_examples(rng):
    x = rng.normal(size=(4, 8, 8, 3))
    zero = np.zeros((1, 1, 1, 4))
    assert elbo_loss(x, x, zero, zero, 0.5) == (0.0, 0.0, 0.0)
    total, mse, kl = elbo_loss(x, x, np.ones((1, 1, 1, 4)), zero, 2.0)
    assert kl == 0.5 and mse == 0.0 and total == 1.0


def test_kl_nonnegative():
    rng = np.random.default_rng(7)
    x = np.zeros((4, 8, 8, 1))
    for _ in range(1000):
        m = rng.normal(size=(1, 1, 1, 4)) * rng.uniform(0, 5)
        lv = rng.normal(size=(1, 1, 1, 4)) * rng.uniform(0, 5)
        assert elbo_loss(x, x, m, lv)[2] >= 0.0


@settings(max_examples=5, deadline=None)
@given(seeds)
def test_elbo_gradients(seed):
    assert check_elbo(seed) < 1e-4


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(steps=0)
    with pytest.raises(ValueError):
        TrainConfig(lr=0)


def _zoom_clip():
    return pipeline.encode_sequence(trajectory.generate(trajectory.TrajectorySpec("zoom-in", 17, 0.05))).clip


def test_single_clip_converges():
    res = train([_zoom_clip()], TrainConfig(steps=500, seed=0))
    assert res.recon_history[-1] < 0.1 * res.recon_history[0]
    assert len(res.loss_history) == 500


def test_training_is_deterministic():
    clip = _zoom_clip()
    a = train([clip], TrainConfig(steps=20, seed=4))
    b = train([clip], TrainConfig(steps=20, seed=4))
    c = train([clip], TrainConfig(steps=20, seed=5))
    assert a.loss_history == b.loss_history
    assert a.loss_history != c.loss_history


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_nonfinite_loss():
    clip = MotionClip(np.full((4, 8, 8, 1), 1e200))
    with pytest.raises(NonFiniteLoss) as err:
        train([clip], TrainConfig(steps=3, clip_norm=None))
    assert err.value.step == 0


def test_checkpoint_round_trip():
    params = train([_zoom_clip()], TrainConfig(steps=3)).params
    back = VaeParams.loads(params.dumps())
    assert back.channels == 3
    for k, v in params.named().items():
        assert np.array_equal(back.named()[k], v)
