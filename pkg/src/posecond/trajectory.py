"""Synthetic camera trajectories for tests, demos and VAE training data.

Frames are spaced at 30 fps (``k * 33333`` microseconds). Camera axes follow
the usual computer-vision convention: +x right, +y down, +z along the optical
axis. Pans move the camera centre without rotating it, zooms move it along
the optical axis, and the roundabout orbits the world origin about the
vertical (y) axis while looking at it.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .pose_io import CameraIntrinsics, CameraPose, PoseFrame, PoseSequence, rot_y

FRAME_PERIOD_US = 33333
DEFAULT_URL = "synthetic://posecond"


class Kind(enum.Enum):
    PAN_LEFT = "pan-left"
    PAN_RIGHT = "pan-right"
    PAN_UP = "pan-up"
    PAN_DOWN = "pan-down"
    ZOOM_IN = "zoom-in"
    ZOOM_OUT = "zoom-out"
    ROUNDABOUT = "roundabout"
    SHAKE = "shake"

    @classmethod
    def parse(cls, name):
        try:
            return cls(name.lower().replace("_", "-"))
        except ValueError:
            choices = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown trajectory kind {name!r} (choose from {choices})") from None


def default_intrinsics():
    # 640x360 with square pixels and a 90 degree horizontal field of view
    return CameraIntrinsics(0.5, 0.5 * 640 / 360, 0.5, 0.5)


@dataclass(frozen=True)
class TrajectorySpec:
    kind: Kind
    n_frames: int
    speed: float
    seed: int = 0
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", Kind.parse(self.kind))
        if self.n_frames < 2:
            raise ValueError(f"n_frames must be >= 2, got {self.n_frames}")
        if not self.speed > 0:
            raise ValueError(f"speed must be positive, got {self.speed}")


# camera-centre displacement per frame for the straight-line kinds
_DIRECTIONS = {
    Kind.PAN_LEFT: (-1.0, 0.0, 0.0),
    Kind.PAN_RIGHT: (1.0, 0.0, 0.0),
    Kind.PAN_UP: (0.0, -1.0, 0.0),
    Kind.PAN_DOWN: (0.0, 1.0, 0.0),
    Kind.ZOOM_IN: (0.0, 0.0, 1.0),
    Kind.ZOOM_OUT: (0.0, 0.0, -1.0),
}


def roundabout_pose(k, n_frames, speed):
    """Pose ``k`` of an ``n_frames`` orbit; ``k == n_frames`` closes the loop."""
    radius = speed * n_frames / (2 * math.pi)
    theta = 2 * math.pi * k / n_frames
    # camera-to-world rotation turns the optical axis towards the origin
    R_c2w = rot_y(theta)
    center = -radius * R_c2w[:, 2]
    R = R_c2w.T
    return CameraPose(R, -R @ center)


def _shake_poses(spec):
    jitter = rng.uniform_range(spec.seed, (spec.n_frames, 3), -spec.speed, spec.speed)
    return [CameraPose(np.eye(3), -c) for c in jitter]


def generate(spec):
    if spec.kind in _DIRECTIONS:
        step = np.array(_DIRECTIONS[spec.kind]) * spec.speed
        poses = [CameraPose(np.eye(3), -k * step) for k in range(spec.n_frames)]
    elif spec.kind is Kind.ROUNDABOUT:
        poses = [roundabout_pose(k, spec.n_frames, spec.speed) for k in range(spec.n_frames)]
    else:
        poses = _shake_poses(spec)
    frames = [PoseFrame(k * FRAME_PERIOD_US, spec.intrinsics, p) for k, p in enumerate(poses)]
    return PoseSequence(tuple(frames), url=f"{DEFAULT_URL}/{spec.kind.value}")


def describe(spec):
    text = f"{spec.kind.value} {spec.n_frames} frames speed={spec.speed:g}"
    if spec.kind is Kind.SHAKE:
        text += f" seed={spec.seed}"
    return text
