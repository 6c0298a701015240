"""Pinhole projection chain, Pluecker ray embedding and sparse motion fields.

Pixel coordinates are continuous with the origin at the top-left corner.
Normalised intrinsics are expanded to pixels per image size, see
:meth:`CameraIntrinsics.matrix`.

The Pluecker line for pixel (x, y) passes through the camera centre
``o = -R^T t`` with unit world direction ``d ~ R^T K^-1 [x, y, 1]``; its
moment is ``m = o x d``. These six numbers do not depend on which point of
the ray is used, nor on the scale of the homogeneous pixel vector.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateIntrinsics,
    PointBehindCamera,
    SequenceTooShort,
    StrideExceedsImage,
    ZeroStride,
)
from .pose_io import relative_pose

_MIN_FOCAL_PX = 1e-12


@dataclass(frozen=True)
class PluckerRay:
    direction: np.ndarray
    moment: np.ndarray

    def as_vector(self):
        return np.concatenate([self.direction, self.moment])


def _k_inverse(K, width, height):
    fx, fy = K.fx * width, K.fy * height
    if abs(fx) < _MIN_FOCAL_PX or abs(fy) < _MIN_FOCAL_PX:
        raise DegenerateIntrinsics(f"focal length vanishes in pixels: fx={fx}, fy={fy}")
    cx, cy = K.cx * width, K.cy * height
    return np.array([
        [1.0 / fx, 0.0, -cx / fx],
        [0.0, 1.0 / fy, -cy / fy],
        [0.0, 0.0, 1.0],
    ])


def _homogeneous(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    x, y = np.broadcast_arrays(x, y)
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def backproject_pixel(K, x, y, width, height):
    """``K^-1 [x, y, 1]^T``: the camera-frame point at unit depth. Broadcasts."""
    return _homogeneous(x, y) @ _k_inverse(K, width, height).T


def camera_point(pose, K, x, y, width, height):
    """``Q = R K^-1 [x, y, 1]^T + t``."""
    return backproject_pixel(K, x, y, width, height) @ pose.rotation.T + pose.translation


def plucker_rays(pose, K, x, y, width, height, scale=1.0):
    """Vectorised Pluecker embedding; returns ``(directions, moments)`` of shape (..., 3).

    ``scale`` multiplies the homogeneous pixel vector and must be positive.
    """
    p = scale * _homogeneous(x, y)
    d = p @ _k_inverse(K, width, height).T @ pose.rotation  # row form of R^T K^-1 p
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    o = pose.center
    m = np.cross(np.broadcast_to(o, d.shape), d)
    return d, m


def plucker_ray(pose, K, x, y, width, height):
    d, m = plucker_rays(pose, K, float(x), float(y), width, height)
    return PluckerRay(d, m)


@dataclass(frozen=True)
class SampleGrid:
    width_px: int
    height_px: int
    stride_x: int
    stride_y: int

    @property
    def n_cols(self):
        return self.width_px // self.stride_x

    @property
    def n_rows(self):
        return self.height_px // self.stride_y

    @property
    def shape(self):
        """``(M, N)``: columns, rows."""
        return self.n_cols, self.n_rows

    def coords(self):
        """Pixel coordinate arrays ``(xs, ys)`` each of shape (N, M)."""
        xs = np.arange(self.n_cols) * self.stride_x
        ys = np.arange(self.n_rows) * self.stride_y
        gx, gy = np.meshgrid(xs, ys)
        return gx.astype(np.float64), gy.astype(np.float64)

    @property
    def points(self):
        """Row-major list of ``(x, y)`` pixel coordinates."""
        return [(i * self.stride_x, j * self.stride_y)
                for j in range(self.n_rows) for i in range(self.n_cols)]


def sparse_grid(width, height, stride_x, stride_y=None):
    if stride_y is None:
        stride_y = stride_x
    if stride_x <= 0 or stride_y <= 0:
        raise ZeroStride(f"strides must be positive, got ({stride_x}, {stride_y})")
    if width <= 0 or height <= 0:
        raise ValueError(f"image size must be positive, got {width}x{height}")
    if stride_x > width or stride_y > height:
        raise StrideExceedsImage(
            f"stride ({stride_x}, {stride_y}) exceeds image {width}x{height}"
        )
    return SampleGrid(int(width), int(height), int(stride_x), int(stride_y))


@dataclass(frozen=True)
class MotionVector:
    dx: float
    dy: float
    plucker_delta: np.ndarray
    valid: bool = True


CHANNELS = {"flow": slice(0, 2), "plucker": slice(2, 8), "both": slice(0, 8)}


@dataclass(frozen=True, eq=False)
class SparseMotionField:
    """Motion between consecutive poses sampled on a grid.

    ``flow`` has shape (F, N, M, 2) in pixels, ``plucker_delta`` (F, N, M, 6),
    ``valid`` (F, N, M). Invalid entries (reprojection behind the camera)
    carry zero flow and ``valid == False``.
    """

    grid: SampleGrid
    flow: np.ndarray
    plucker_delta: np.ndarray
    valid: np.ndarray

    @property
    def n_motion_frames(self):
        return self.flow.shape[0]

    def vector(self, frame, row, col):
        return MotionVector(
            float(self.flow[frame, row, col, 0]),
            float(self.flow[frame, row, col, 1]),
            self.plucker_delta[frame, row, col].copy(),
            bool(self.valid[frame, row, col]),
        )

    def channels(self, which="flow"):
        """Stacked per-point channels: ``flow`` (2), ``plucker`` (6) or ``both`` (8)."""
        full = np.concatenate([self.flow, self.plucker_delta], axis=-1)
        return full[..., CHANNELS[which]]


def _pair_motion(pose_a, K_a, pose_b, K_b, gx, gy, W, H):
    da, ma = plucker_rays(pose_a, K_a, gx, gy, W, H)
    db, mb = plucker_rays(pose_b, K_b, gx, gy, W, H)
    delta = np.concatenate([db - da, mb - ma], axis=-1)

    rel = relative_pose(pose_a, pose_b)
    X = rel.apply(backproject_pixel(K_a, gx, gy, W, H))
    z = X[..., 2]
    valid = z > 0
    proj = X @ K_b.matrix(W, H).T
    safe_z = np.where(valid, z, 1.0)
    u = proj[..., 0] / safe_z
    v = proj[..., 1] / safe_z
    flow = np.stack([u - gx, v - gy], axis=-1)
    flow[~valid] = 0.0
    return flow, delta, valid


def motion_field(seq, grid, strict=False):
    """Sparse motion field between each pair of consecutive frames.

    With ``strict=True`` a grid point whose unit-depth reprojection falls
    behind the next camera raises :class:`PointBehindCamera` instead of being
    flagged invalid.
    """
    if len(seq) < 2:
        raise SequenceTooShort(f"need at least 2 poses, got {len(seq)}")
    gx, gy = grid.coords()
    W, H = grid.width_px, grid.height_px
    flows, deltas, valids = [], [], []
    for k, (a, b) in enumerate(zip(seq.frames, seq.frames[1:])):
        flow, delta, valid = _pair_motion(a.pose, a.intrinsics, b.pose, b.intrinsics, gx, gy, W, H)
        if strict and not valid.all():
            raise PointBehindCamera(
                f"motion frame {k}: {int((~valid).sum())} grid points reproject behind the camera"
            )
        flows.append(flow)
        deltas.append(delta)
        valids.append(valid)
    return SparseMotionField(grid, np.stack(flows), np.stack(deltas), np.stack(valids))
