"""End-to-end glue: poses -> sparse motion field -> RGB clip -> VAE input."""

from dataclasses import dataclass

from . import plucker, render, trajectory, vae

DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 360
DEFAULT_STRIDE = 40
DEFAULT_FRAMES = 17
DEFAULT_MAX_MAGNITUDE = 32.0
VAE_CELL = 4  # VAE input pixels per grid point along each axis


@dataclass
class EncodedSequence:
    field: plucker.SparseMotionField
    clip: vae.MotionClip
    render_config: render.RenderConfig


def vae_render_config(grid, cell=VAE_CELL, max_magnitude=DEFAULT_MAX_MAGNITUDE):
    """Small render (``cell`` px per grid point) used as VAE input."""
    return render.RenderConfig(grid.n_cols * cell, grid.n_rows * cell, max_magnitude)


def encode_sequence(seq, width=DEFAULT_WIDTH, height=DEFAULT_HEIGHT, stride=DEFAULT_STRIDE,
                    cell=VAE_CELL, max_magnitude=DEFAULT_MAX_MAGNITUDE):
    grid = plucker.sparse_grid(width, height, stride, stride)
    field = plucker.motion_field(seq, grid)
    cfg = vae_render_config(grid, cell, max_magnitude)
    clip = vae.pad_clip(render.to_float(render.field_to_sequence(field, cfg)))
    return EncodedSequence(field, clip, cfg)


SYNTHETIC_SET = (
    ("zoom-in", 0.05),
    ("pan-left", 0.05),
    ("pan-right", 0.05),
    ("roundabout", 0.5),
    ("shake", 0.05),
)


def synthetic_specs(n_frames=DEFAULT_FRAMES, seed=3):
    return [trajectory.TrajectorySpec(kind, n_frames, speed, seed=seed) for kind, speed in SYNTHETIC_SET]


def synthetic_clips(n_frames=DEFAULT_FRAMES, seed=3, **kw):
    """The five-trajectory desk training set."""
    return [encode_sequence(trajectory.generate(s), **kw).clip for s in synthetic_specs(n_frames, seed)]
