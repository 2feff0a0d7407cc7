"""Trajectory error metrics over fixed-length subsequences.

Translation and rotation errors follow the odometry benchmark convention:
every frame starts a subsequence for each target length in
SEGMENT_LENGTHS, the end frame is the first one whose ground-truth path
length reaches the target, and the residual relative pose between estimate
and ground truth is normalized by that length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .se3 import Pose, Trajectory, accumulate, compose, geodesic_angle, inverse, relative

SEGMENT_LENGTHS = (100.0, 200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0)

SCALE_EPS = 1e-9


def cumulative_distances(traj: Trajectory) -> np.ndarray:
    """Ground-track arc length at each frame, starting at zero."""
    pos = traj.positions()
    steps = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def path_length(traj: Trajectory) -> float:
    return float(cumulative_distances(traj)[-1])


def _first_frame_past(dist: np.ndarray, start: int, length: float) -> int | None:
    # First frame whose cumulative path from `start` meets or exceeds `length`.
    for j in range(start + 1, len(dist)):
        if dist[j] - dist[start] >= length:
            return j
    return None


@dataclass(frozen=True)
class SubseqError:
    start: int
    length: float
    t_err: float  # percent
    r_err: float  # degrees per 100 m


def subsequence_errors(gt: Trajectory, est: Trajectory, lengths=SEGMENT_LENGTHS) -> list[SubseqError]:
    """Per-subsequence translation and rotation errors.

    Requires equally long trajectories.  Subsequences that run off the end
    of the ground-truth track are skipped; the returned list may be empty
    for short trajectories.
    """
    if len(gt) != len(est):
        raise ValueError("trajectories must have equal length")
    dist = cumulative_distances(gt)
    out = []
    for start in range(len(gt)):
        for length in lengths:
            end = _first_frame_past(dist, start, length)
            if end is None:
                continue
            n = end - start
            gt_rel = relative(gt, start, n)
            est_rel = relative(est, start, n)
            err = compose(inverse(est_rel), gt_rel)
            t_err = float(np.linalg.norm(err.trans)) / length * 100.0
            r_err = math.degrees(geodesic_angle(err.rot)) / length * 100.0
            out.append(SubseqError(start=start, length=length, t_err=t_err, r_err=r_err))
    return out


def _rigid_align(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    # Least-squares rotation+translation taking src positions onto dst.
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    cov = (dst - mu_d).T @ (src - mu_s) / len(src)
    u, _, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    t = mu_d - r @ mu_s
    return src @ r.T + t


def ate(gt: Trajectory, est: Trajectory, align: bool = False) -> float:
    """Root-mean-square translation error over all frames.

    Compares positions in the shared first-frame coordinates; no alignment
    is applied unless align is set, in which case a rigid least-squares fit
    is removed first.
    """
    if len(gt) != len(est):
        raise ValueError("trajectories must have equal length")
    gt_pos = gt.positions()
    est_pos = est.positions()
    if align:
        est_pos = _rigid_align(est_pos, gt_pos)
    d2 = np.sum((gt_pos - est_pos) ** 2, axis=1)
    return float(np.sqrt(d2.mean()))


def scale_err(gt_rels, est_rels, eps: float = SCALE_EPS) -> float:
    """Mean per-step scale discrepancy, 1 - min of the two step-norm ratios.

    Zero when every step length matches; approaches one when either step
    degenerates to zero while the other does not.
    """
    gt_rels = list(gt_rels)
    est_rels = list(est_rels)
    if len(gt_rels) != len(est_rels):
        raise ValueError("relative-pose lists must have equal length")
    if not gt_rels:
        raise ValueError("need at least one step")
    errs = []
    for g, e in zip(gt_rels, est_rels):
        ng = float(np.linalg.norm(g.trans))
        ne = float(np.linalg.norm(e.trans))
        ratio = min(ne / max(ng, eps), ng / max(ne, eps))
        errs.append(1.0 - min(ratio, 1.0))
    return float(np.mean(errs))


@dataclass(frozen=True)
class EvalReport:
    """Aggregated trajectory evaluation.

    t_err and r_err are None when the track is too short for any
    subsequence; per_length maps each usable length to its mean errors.
    """

    t_err: float | None
    r_err: float | None
    ate: float
    s_err: float
    subseq_count: int
    per_length: dict

    def to_dict(self) -> dict:
        return {
            "t_err_percent": self.t_err,
            "r_err_deg_per_100m": self.r_err,
            "ate_m": self.ate,
            "s_err": self.s_err,
            "subseq_count": self.subseq_count,
            "per_length": {
                str(int(k)): {"t_err_percent": v[0], "r_err_deg_per_100m": v[1]}
                for k, v in sorted(self.per_length.items())
            },
        }


def evaluate(gt_rels, est_rels, lengths=SEGMENT_LENGTHS, align: bool = False) -> EvalReport:
    """Full evaluation of an estimated relative-pose sequence against truth."""
    gt_rels = list(gt_rels)
    est_rels = list(est_rels)
    gt = accumulate(gt_rels)
    est = accumulate(est_rels)
    subseqs = subsequence_errors(gt, est, lengths)
    per_length: dict = {}
    for s in subseqs:
        per_length.setdefault(s.length, []).append((s.t_err, s.r_err))
    per_length = {
        k: (float(np.mean([t for t, _ in v])), float(np.mean([r for _, r in v])))
        for k, v in per_length.items()
    }
    t_err = float(np.mean([s.t_err for s in subseqs])) if subseqs else None
    r_err = float(np.mean([s.r_err for s in subseqs])) if subseqs else None
    return EvalReport(
        t_err=t_err,
        r_err=r_err,
        ate=ate(gt, est, align=align),
        s_err=scale_err(gt_rels, est_rels),
        subseq_count=len(subseqs),
        per_length=per_length,
    )
