"""Trajectory consistency and motion-field reconstruction metrics.

CamMC here is defined as the mean, over consecutive frame pairs, of the L2
distance between the two trajectories' flattened relative ``[R|t]``
matrices. The definition is versioned in every JSON report so values are
never confused with other CamMC variants.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, LengthMismatch, SequenceTooShort
from .pose_io import relative_pose, to_motion_matrix

CAMMC_DEFINITION = "cammc-v1: mean over adjacent pairs of ||vec12(rel_a) - vec12(rel_b)||_2"


@dataclass
class MetricReport:
    name: str
    value: float
    n_frames: int
    details: list = field(default_factory=list)
    definition: str = ""
    excluded: int = 0

    def to_dict(self):
        out = {"metric": self.name, "value": self.value, "n": self.n_frames,
               "per_frame": list(self.details)}
        if self.definition:
            out["definition"] = self.definition
        if self.name == "field_mse":
            out["excluded"] = self.excluded
        return out

    def to_json(self):
        return json.dumps(self.to_dict())


def relative_motion_vectors(seq):
    """(L-1, 12) flattened relative poses between consecutive frames."""
    poses = seq.poses
    return np.array([to_motion_matrix(relative_pose(a, b)) for a, b in zip(poses, poses[1:])])


def cammc(a, b):
    if len(a) != len(b):
        raise LengthMismatch(len(a), len(b))
    if len(a) < 2:
        raise SequenceTooShort(f"need at least 2 poses, got {len(a)}")
    per = np.linalg.norm(relative_motion_vectors(a) - relative_motion_vectors(b), axis=1)
    return MetricReport("cammc", float(per.mean()), len(per), [float(v) for v in per],
                        definition=CAMMC_DEFINITION)


def field_mse(a, b):
    """MSE over all 8 components (dx, dy, 6 Pluecker deltas) of jointly valid vectors.

    Grid points invalid in either field are skipped and counted in ``excluded``.
    """
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: {a.grid} vs {b.grid}")
    if a.n_motion_frames != b.n_motion_frames:
        raise GridMismatch(f"frame counts differ: {a.n_motion_frames} vs {b.n_motion_frames}")
    sq = (a.channels("both") - b.channels("both")) ** 2
    both = a.valid & b.valid
    per_frame = []
    for k in range(sq.shape[0]):
        vals = sq[k][both[k]]
        per_frame.append(float(vals.mean()) if vals.size else 0.0)
    vals = sq[both]
    value = float(vals.mean()) if vals.size else 0.0
    return MetricReport("field_mse", value, a.n_motion_frames, per_frame,
                        excluded=int((~both).sum()))
