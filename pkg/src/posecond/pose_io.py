"""Camera trajectories in the RealEstate10K text layout.

A trajectory file starts with one opaque line (the source video URL) and
continues with one line per frame::

    timestamp_us fx fy cx cy k1 k2 r11 r12 r13 t1 r21 r22 r23 t2 r31 r32 r33 t3

Intrinsics are normalised by image width/height. ``[R|t]`` is the
world-to-camera transform, so a world point X lands at ``R @ X + t`` in
camera coordinates and the camera centre is ``-R.T @ t``. The radial
distortion terms ``k1, k2`` are read and dropped (pinhole model only).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptySequence,
    FieldCountError,
    InvalidIntrinsics,
    NonMonotonicTimestamps,
    NonOrthonormalRotation,
    NumericError,
    PoseFormatError,
)

ROTATION_TOL = 1e-6
PARSE_ROTATION_TOL = 1e-4
N_FIELDS = 19


def _frozen(a, shape):
    a = np.array(a, dtype=np.float64).reshape(shape)
    a.setflags(write=False)
    return a


def check_rotation(R, tol=ROTATION_TOL):
    if not np.all(np.isfinite(R)):
        raise NonOrthonormalRotation("rotation has non-finite entries")
    err = np.max(np.abs(R @ R.T - np.eye(3)))
    det = np.linalg.det(R)
    if err >= tol or abs(det - 1.0) > tol:
        raise NonOrthonormalRotation(
            f"rotation is not orthonormal: max|RR^T - I| = {err:.3g}, det = {det:.9g}"
        )


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in vals):
            raise InvalidIntrinsics(f"non-finite intrinsics {vals}")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidIntrinsics(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx <= 1 and 0 <= self.cy <= 1):
            raise InvalidIntrinsics(f"principal point outside [0, 1]: cx={self.cx}, cy={self.cy}")

    def matrix(self, width, height):
        """3x3 pixel-space K for an image of ``width`` x ``height`` pixels."""
        return np.array([
            [self.fx * width, 0.0, self.cx * width],
            [0.0, self.fy * height, self.cy * height],
            [0.0, 0.0, 1.0],
        ])


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rigid transform ``x_cam = rotation @ x_world + translation``."""

    rotation: np.ndarray
    translation: np.ndarray
    tol: float = field(default=ROTATION_TOL, repr=False)

    def __post_init__(self):
        R = _frozen(self.rotation, (3, 3))
        t = _frozen(self.translation, (3,))
        if not np.all(np.isfinite(t)):
            raise NonOrthonormalRotation("translation has non-finite entries")
        check_rotation(R, self.tol)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @property
    def center(self):
        """Camera centre in world coordinates."""
        return -self.rotation.T @ self.translation

    def apply(self, points):
        return points @ self.rotation.T + self.translation

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return (np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))

    def allclose(self, other, atol=1e-9):
        return (np.allclose(self.rotation, other.rotation, rtol=0, atol=atol)
                and np.allclose(self.translation, other.translation, rtol=0, atol=atol))


@dataclass(frozen=True)
class PoseFrame:
    timestamp_us: int
    intrinsics: CameraIntrinsics
    pose: CameraPose

    def __post_init__(self):
        if self.timestamp_us < 0:
            raise PoseFormatError(f"negative timestamp {self.timestamp_us}")


@dataclass(frozen=True)
class PoseSequence:
    frames: tuple
    url: str = ""

    def __post_init__(self):
        frames = tuple(self.frames)
        object.__setattr__(self, "frames", frames)
        for a, b in zip(frames, frames[1:]):
            if b.timestamp_us <= a.timestamp_us:
                raise NonMonotonicTimestamps(
                    f"timestamps must strictly increase: {a.timestamp_us} then {b.timestamp_us}"
                )

    def __len__(self):
        return len(self.frames)

    def __getitem__(self, i):
        return self.frames[i]

    def __iter__(self):
        return iter(self.frames)

    @property
    def poses(self):
        return [f.pose for f in self.frames]


def _to_float(tok):
    try:
        v = float(tok)
    except ValueError:
        raise NumericError(f"unparsable number {tok!r}") from None
    if not np.isfinite(v):
        raise NumericError(f"non-finite number {tok!r}")
    return v


def _to_timestamp(tok):
    try:
        return int(tok)
    except ValueError:
        pass
    v = _to_float(tok)
    if v != int(v):
        raise NumericError(f"timestamp {tok!r} is not an integer")
    return int(v)


def parse_line(line):
    """Parse one 19-field pose line into a :class:`PoseFrame`."""
    toks = line.split()
    if len(toks) != N_FIELDS:
        raise FieldCountError(f"expected {N_FIELDS} fields, got {len(toks)}")
    ts = _to_timestamp(toks[0])
    vals = [_to_float(t) for t in toks[1:]]
    fx, fy, cx, cy = vals[:4]
    # vals[4:6] are k1, k2: parsed for validation only
    Rt = np.array(vals[6:]).reshape(3, 4)
    pose = CameraPose(Rt[:, :3], Rt[:, 3], tol=PARSE_ROTATION_TOL)
    return PoseFrame(ts, CameraIntrinsics(fx, fy, cx, cy), pose)


def parse_sequence(text):
    """Parse a whole trajectory file. Errors carry the 1-based line number."""
    lines = text.splitlines()
    if not lines:
        raise EmptySequence("empty trajectory text")
    url = lines[0].strip()
    frames = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            frames.append(parse_line(line))
        except (PoseFormatError, NonOrthonormalRotation, InvalidIntrinsics) as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None
        if len(frames) > 1 and frames[-1].timestamp_us <= frames[-2].timestamp_us:
            raise NonMonotonicTimestamps(
                f"line {lineno}: timestamp {frames[-1].timestamp_us} does not follow "
                f"{frames[-2].timestamp_us}"
            )
    if not frames:
        raise EmptySequence("trajectory has a header but no pose lines")
    return PoseSequence(tuple(frames), url)


def _fmt(v):
    s = f"{v:.9g}"
    return "0" if s == "-0" else s


def format_line(frame):
    K = frame.intrinsics
    Rt = np.hstack([frame.pose.rotation, frame.pose.translation[:, None]]).ravel()
    nums = [K.fx, K.fy, K.cx, K.cy, 0.0, 0.0, *Rt]
    return " ".join([str(int(frame.timestamp_us))] + [_fmt(v) for v in nums])


def serialize_sequence(seq):
    """Render a sequence as text; numbers carry 9 significant digits."""
    lines = [seq.url] + [format_line(f) for f in seq.frames]
    return "\n".join(lines) + "\n"


def compose(outer, inner):
    """Transform applying ``inner`` first, then ``outer``."""
    R = outer.rotation @ inner.rotation
    t = outer.rotation @ inner.translation + outer.translation
    return CameraPose(R, t)


def relative_pose(a, b):
    """Map from camera-a coordinates to camera-b coordinates.

    ``compose(relative_pose(a, b), a)`` reproduces ``b``.
    """
    R = b.rotation @ a.rotation.T
    return CameraPose(R, b.translation - R @ a.translation)


def to_motion_matrix(pose):
    """Row-major flatten of the 3x4 ``[R|t]`` matrix."""
    return np.hstack([pose.rotation, pose.translation[:, None]]).ravel()


def from_motion_matrix(vec):
    Rt = np.asarray(vec, dtype=np.float64).reshape(3, 4)
    return CameraPose(Rt[:, :3], Rt[:, 3])


def rot_x(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0, 0], [0, c, -s], [0, s, c]])


def rot_y(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])


def rotation_angle(R):
    """Rotation angle in radians from the trace formula."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def random_rotation(rng):
    """Uniform rotation from a ``numpy.random.Generator`` (QR of a Gaussian)."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
