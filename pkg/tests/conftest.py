import numpy as np
import pytest
from hypothesis import strategies as st

from posecond.pose_io import (
    CameraIntrinsics,
    CameraPose,
    PoseFrame,
    PoseSequence,
    random_rotation,
)


def read_ppm(data):
    """Independent P6 reader used as the round-trip oracle."""
    assert data[:2] == b"P6"
    fields, pos = [], 2
    while len(fields) < 3:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    assert maxval == 255
    payload = data[pos:]
    assert len(payload) == 3 * w * h
    return w, h, np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)


def make_sequence(rng, n, url="https://example.invalid/v"):
    frames, ts = [], 0
    for _ in range(n):
        ts += int(rng.integers(1, 100_000))
        K = CameraIntrinsics(*rng.uniform(0.2, 2.0, 2), *rng.uniform(0.0, 1.0, 2))
        frames.append(PoseFrame(ts, K, CameraPose(random_rotation(rng), rng.uniform(-5, 5, 3))))
    return PoseSequence(tuple(frames), url)


def make_pose(rng, scale=5.0):
    return CameraPose(random_rotation(rng), rng.uniform(-scale, scale, 3))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    test_acceptance = sys.modules.get("test_acceptance")
    if test_acceptance is not None and test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(line)
