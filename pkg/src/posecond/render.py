"""Rasterise sparse motion fields to RGB and write binary PPM files.

Colour code for a flow vector (dx, dy) with ceiling ``max_magnitude``::

    R = 128 + 127 * dx / max_magnitude
    G = 128 + 127 * dy / max_magnitude
    B = 255 * |(dx, dy)| / max_magnitude

rounded half-up and clamped to [0, 255]. Zero motion is (128, 128, 0), the
same as the background; invalid vectors are pure blue.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import FrameOutOfRange, IoError

BACKGROUND = (128, 128, 0)
INVALID = (0, 0, 255)
ARROW = (0, 0, 0)
HEAD_LENGTH = 2


@dataclass(frozen=True, eq=False)
class RgbImage:
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.shape != (self.height, self.width, 3):
            raise ValueError(f"pixel array {px.shape} does not match {self.width}x{self.height}")
        object.__setattr__(self, "pixels", px)

    @classmethod
    def filled(cls, width, height, color):
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = color
        return cls(width, height, px)

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def tobytes(self):
        return self.pixels.tobytes()


@dataclass(frozen=True)
class RenderConfig:
    out_width: int = 640
    out_height: int = 360
    max_magnitude: float = 32.0
    draw_arrows: bool = False
    arrow_scale: float = 1.0

    def __post_init__(self):
        if self.out_width <= 0 or self.out_height <= 0:
            raise ValueError(f"output size must be positive, got {self.out_width}x{self.out_height}")
        if not self.max_magnitude > 0:
            raise ValueError(f"max_magnitude must be positive, got {self.max_magnitude}")


def encode_color(dx, dy, max_magnitude):
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    chans = np.stack([
        128.0 + 127.0 * dx / max_magnitude,
        128.0 + 127.0 * dy / max_magnitude,
        255.0 * np.hypot(dx, dy) / max_magnitude,
    ], axis=-1)
    return np.clip(np.floor(chans + 0.5), 0, 255).astype(np.uint8)


def decode_color(rgb, max_magnitude):
    """Inverse of the R, G channels of :func:`encode_color`."""
    rgb = np.asarray(rgb, dtype=np.float64)
    return (rgb[..., 0] - 128.0) * max_magnitude / 127.0, (rgb[..., 1] - 128.0) * max_magnitude / 127.0


def _check_frame(field, frame_idx):
    if not 0 <= frame_idx < field.n_motion_frames:
        raise FrameOutOfRange(f"frame {frame_idx} outside [0, {field.n_motion_frames})")


def _scaled_positions(grid, cfg):
    sx = cfg.out_width / grid.width_px
    sy = cfg.out_height / grid.height_px
    gx, gy = grid.coords()
    return np.floor(gx * sx + 0.5).astype(int), np.floor(gy * sy + 0.5).astype(int), sx, sy


def splat_radius(grid, cfg):
    sx = cfg.out_width / grid.width_px
    sy = cfg.out_height / grid.height_px
    return max(1, math.ceil(min(grid.stride_x * sx, grid.stride_y * sy) / 4))


def rasterize(field, frame_idx, cfg):
    _check_frame(field, frame_idx)
    img = np.empty((cfg.out_height, cfg.out_width, 3), dtype=np.uint8)
    img[...] = BACKGROUND
    px, py, _, _ = _scaled_positions(field.grid, cfg)
    flow = field.flow[frame_idx]
    colors = encode_color(flow[..., 0], flow[..., 1], cfg.max_magnitude)
    colors[~field.valid[frame_idx]] = INVALID

    r = splat_radius(field.grid, cfg)
    oy, ox = np.mgrid[-r:r + 1, -r:r + 1]
    disk = ox**2 + oy**2 <= r * r
    ox, oy = ox[disk], oy[disk]
    for j in range(px.shape[0]):
        for i in range(px.shape[1]):
            xs = px[j, i] + ox
            ys = py[j, i] + oy
            keep = (xs >= 0) & (xs < cfg.out_width) & (ys >= 0) & (ys < cfg.out_height)
            img[ys[keep], xs[keep]] = colors[j, i]
    out = RgbImage(cfg.out_width, cfg.out_height, img)
    if cfg.draw_arrows:
        out = draw_arrows(out, field, frame_idx, cfg)
    return out


def bresenham(x0, y0, x1, y1):
    """Integer points of the segment from (x0, y0) to (x1, y1), endpoints included."""
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        points.append((x, y))
        if x == x1 and y == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def _arrow_points(x0, y0, vx, vy):
    x1, y1 = x0 + int(round(vx)), y0 + int(round(vy))
    pts = bresenham(x0, y0, x1, y1)
    norm = math.hypot(vx, vy)
    ux, uy = vx / norm, vy / norm
    for ang in (math.radians(150), math.radians(-150)):
        c, s = math.cos(ang), math.sin(ang)
        hx = x1 + int(round(HEAD_LENGTH * (c * ux - s * uy)))
        hy = y1 + int(round(HEAD_LENGTH * (s * ux + c * uy)))
        pts.extend(bresenham(x1, y1, hx, hy))
    return pts


def draw_arrows(img, field, frame_idx, cfg):
    """Return a copy of ``img`` with one black arrow per valid, moving grid point."""
    _check_frame(field, frame_idx)
    out = img.pixels.copy()
    px, py, _, _ = _scaled_positions(field.grid, cfg)
    flow = field.flow[frame_idx] * cfg.arrow_scale
    valid = field.valid[frame_idx]
    for j in range(px.shape[0]):
        for i in range(px.shape[1]):
            vx, vy = flow[j, i]
            if not valid[j, i] or (round(vx) == 0 and round(vy) == 0):
                continue
            for x, y in _arrow_points(int(px[j, i]), int(py[j, i]), vx, vy):
                if 0 <= x < img.width and 0 <= y < img.height:
                    out[y, x] = ARROW
    return RgbImage(img.width, img.height, out)


def field_to_sequence(field, cfg):
    return [rasterize(field, k, cfg) for k in range(field.n_motion_frames)]


def ppm_bytes(img):
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + img.tobytes()


def write_ppm(img, sink):
    """Write binary PPM to a path or a writable binary stream; returns bytes written."""
    data = ppm_bytes(img)
    try:
        if isinstance(sink, (str, os.PathLike)):
            with open(sink, "wb") as fh:
                fh.write(data)
        else:
            sink.write(data)
    except OSError as exc:
        raise IoError(f"cannot write PPM: {exc}") from exc
    return len(data)


def write_sequence(images, out_dir, prefix="motion"):
    paths = []
    for k, img in enumerate(images):
        path = os.path.join(out_dir, f"{prefix}_{k:04d}.ppm")
        write_ppm(img, path)
        paths.append(path)
    return paths


def to_float(images):
    """Stack images into a (L, H, W, 3) array scaled to [-1, 1]."""
    return np.stack([im.pixels for im in images]).astype(np.float64) / 127.5 - 1.0
