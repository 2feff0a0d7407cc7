"""Rotation and rigid-pose algebra with trajectory accumulation.

Conventions: camera axes are x-right, y-down, z-forward.  A relative pose
T_j maps frame-j coordinates into frame-(j-1) coordinates, so chaining
T_2 .. T_i left to right expresses frame i in the frame of the first camera.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Orthonormality drift allowed on any rotation accepted by Pose.
ROTATION_TOL = 1e-9

# Chained compositions are re-projected onto SO(3) this often.
REPROJECT_EVERY = 256


def rotation_defect(r: np.ndarray) -> float:
    """Max-abs deviation of r^T r from the identity."""
    r = np.asarray(r, dtype=np.float64)
    return float(np.abs(r.T @ r - np.eye(3)).max())


def check_rotation(r: np.ndarray, tol: float = ROTATION_TOL) -> np.ndarray:
    """Validate a 3x3 proper rotation; returns it as float64."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ValueError("rotation must be a finite 3x3 matrix")
    if rotation_defect(r) > tol:
        raise ValueError(f"matrix is not orthonormal within {tol:g}")
    if np.linalg.det(r) < 0.0:
        raise ValueError("matrix is a reflection, not a rotation")
    return r


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Closest proper rotation to m in the Frobenius sense (sign-corrected SVD)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x_parent = rot @ x_child + trans."""

    rot: np.ndarray
    trans: np.ndarray

    def __post_init__(self):
        rot = check_rotation(self.rot)
        trans = np.asarray(self.trans, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(trans)):
            raise ValueError("translation must be finite")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rot", rot)
        object.__setattr__(self, "trans", trans)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous form."""
        m = np.eye(4)
        m[:3, :3] = self.rot
        m[:3, 3] = self.trans
        return m

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return Pose(m[:3, :3], m[:3, 3])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) child-frame points into the parent frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rot.T + self.trans


def compose(a: Pose, b: Pose) -> Pose:
    """a then b: the returned pose maps b's child frame through a's parent frame."""
    return Pose(a.rot @ b.rot, a.rot @ b.trans + a.trans)


def inverse(p: Pose) -> Pose:
    return Pose(p.rot.T, -(p.rot.T @ p.trans))


def geodesic_angle(r: np.ndarray) -> float:
    """Rotation angle in radians, arccos of (trace - 1)/2 clamped to [-1, 1]."""
    r = np.asarray(r, dtype=np.float64)
    c = 0.5 * (np.trace(r) - 1.0)
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@dataclass(frozen=True)
class Trajectory:
    """Global poses of each frame expressed in the first camera's frame."""

    poses: tuple

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise ValueError("trajectory must contain at least one pose")
        first = poses[0]
        if rotation_defect(first.rot) > ROTATION_TOL or np.abs(first.trans).max() > ROTATION_TOL:
            raise ValueError("trajectory must start at the identity pose")
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, i: int) -> Pose:
        return self.poses[i]

    def __iter__(self):
        return iter(self.poses)

    def positions(self) -> np.ndarray:
        """(N, 3) array of camera centers."""
        return np.stack([p.trans for p in self.poses])


def accumulate(rels) -> Trajectory:
    """Chain relative poses into a trajectory anchored at the identity.

    rels[i] maps frame i+1 into frame i.  The running product is re-projected
    onto SO(3) periodically so long chains do not drift off the manifold.
    """
    poses = [Pose.identity()]
    cur = poses[0]
    for i, rel in enumerate(rels, start=1):
        cur = compose(cur, rel)
        if i % REPROJECT_EVERY == 0:
            cur = Pose(nearest_rotation(cur.rot), cur.trans)
        poses.append(cur)
    return Trajectory(tuple(poses))


def relative(traj: Trajectory, i: int, n: int) -> Pose:
    """Pose of frame i+n expressed in frame i."""
    if i < 0 or n < 0 or i + n >= len(traj):
        raise IndexError(f"subsequence [{i}, {i + n}] outside trajectory of length {len(traj)}")
    return compose(inverse(traj[i]), traj[i + n])
