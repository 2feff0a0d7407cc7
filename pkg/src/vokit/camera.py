"""Pinhole camera operations: projection, warping, scene flow, noise.

Images and dense maps are stored (height, width) row-major; a pixel is
addressed by column u and row v, with integer indices used directly as
continuous coordinates.  Depth is the camera-frame z of the surface point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .se3 import Pose


@dataclass(frozen=True)
class Intrinsics:
    fu: float
    fv: float
    cu: float
    cv: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fu > 0 and self.fv > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cu < self.width and 0 <= self.cv < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fu, 0, self.cu], [0, self.fv, self.cv], [0, 0, 1.0]])


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel z-depth with a validity mask; non-positive or non-finite
    entries are invalid regardless of the supplied mask."""

    values: np.ndarray
    valid: np.ndarray = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("depth must be a 2-d array")
        ok = np.isfinite(values) & (values > 0)
        if self.valid is not None:
            ok = ok & np.asarray(self.valid, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", ok)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class FlowField:
    """Dense pixel displacement, (height, width, 2) with u then v."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != 2:
            raise ValueError("flow must have shape (h, w, 2)")
        if not np.all(np.isfinite(values)):
            raise ValueError("flow must be finite")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class PointCloudGrid:
    """Per-pixel 3-d points in the camera frame with validity."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if points.ndim != 3 or points.shape[2] != 3:
            raise ValueError("points must have shape (h, w, 3)")
        if valid.shape != points.shape[:2]:
            raise ValueError("validity mask shape mismatch")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "valid", valid)


def pixel_grid(cam: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """Column and row coordinate arrays, each (height, width)."""
    u = np.arange(cam.width, dtype=np.float64)
    v = np.arange(cam.height, dtype=np.float64)
    return np.meshgrid(u, v)


def intrinsic_map(cam: Intrinsics) -> np.ndarray:
    """Normalized distance-from-principal-point grid |u-cu|/fu + |v-cv|/fv.

    Zero only at the principal point; encodes the intrinsics as a dense map
    that stacks with image channels.
    """
    uu, vv = pixel_grid(cam)
    return np.abs(uu - cam.cu) / cam.fu + np.abs(vv - cam.cv) / cam.fv


def unproject(cam: Intrinsics, depth: DepthMap) -> PointCloudGrid:
    """Back-project every valid depth pixel into the camera frame."""
    if depth.shape != (cam.height, cam.width):
        raise ValueError("depth shape does not match intrinsics")
    uu, vv = pixel_grid(cam)
    z = depth.values
    x = (uu - cam.cu) / cam.fu * z
    y = (vv - cam.cv) / cam.fv * z
    pts = np.stack([x, y, z], axis=-1)
    pts = np.where(depth.valid[..., None], pts, 0.0)
    return PointCloudGrid(points=pts, valid=depth.valid.copy())


def project(cam: Intrinsics, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pinhole projection of (..., 3) camera-frame points.

    Returns pixel coordinates (..., 2) and a validity mask; points at or
    behind the camera plane are invalid and their coordinates meaningless.
    """
    pts = np.asarray(points, dtype=np.float64)
    z = pts[..., 2]
    ok = z > 0
    safe_z = np.where(ok, z, 1.0)
    u = cam.fu * pts[..., 0] / safe_z + cam.cu
    v = cam.fv * pts[..., 1] / safe_z + cam.cv
    return np.stack([u, v], axis=-1), ok


def in_bounds(cam: Intrinsics, uv: np.ndarray) -> np.ndarray:
    """True where continuous coordinates admit bilinear support."""
    u, v = uv[..., 0], uv[..., 1]
    return (u >= 0) & (u <= cam.width - 1) & (v >= 0) & (v <= cam.height - 1)


def bilinear_sample(grid: np.ndarray, uv: np.ndarray, valid: np.ndarray = None):
    """Bilinear interpolation of a (h, w) or (h, w, c) grid at continuous uv.

    Out-of-bounds locations are reported invalid, never clamped.  When a
    source validity mask is given, a sample is valid only if all four
    supporting pixels are valid.
    """
    grid = np.asarray(grid, dtype=np.float64)
    uv = np.asarray(uv, dtype=np.float64)
    h, w = grid.shape[:2]
    u, v = uv[..., 0], uv[..., 1]
    ok = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.clip(u, 0, w - 1)
    vc = np.clip(v, 0, h - 1)
    u0 = np.floor(uc).astype(np.int64)
    v0 = np.floor(vc).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    au = uc - u0
    av = vc - v0
    if grid.ndim == 3:
        au = au[..., None]
        av = av[..., None]
    top = grid[v0, u0] * (1 - au) + grid[v0, u1] * au
    bot = grid[v1, u0] * (1 - au) + grid[v1, u1] * au
    out = top * (1 - av) + bot * av
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        ok = ok & valid[v0, u0] & valid[v0, u1] & valid[v1, u0] & valid[v1, u1]
    return out, ok


def scene_flow(
    pc_prev: PointCloudGrid, pc_cur: PointCloudGrid, flow: FlowField
) -> tuple[np.ndarray, np.ndarray]:
    """3-d displacement field D(u + o) - D(u) on the previous frame's grid.

    Samples the current point grid at flow-shifted locations with bilinear
    interpolation; a pixel is valid when its source point, the shifted
    location, and all four interpolation supports are valid.
    """
    h, w = pc_prev.valid.shape
    if flow.shape[:2] != (h, w):
        raise ValueError("flow shape does not match point grid")
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    target = np.stack([uu + flow.values[..., 0], vv + flow.values[..., 1]], axis=-1)
    sampled, ok = bilinear_sample(pc_cur.points, target, pc_cur.valid)
    vecs = sampled - pc_prev.points
    ok = ok & pc_prev.valid
    vecs = np.where(ok[..., None], vecs, 0.0)
    return vecs, ok


def warp_image(
    src_image: np.ndarray,
    dst_depth: DepthMap,
    src_cam: Intrinsics,
    dst_cam: Intrinsics,
    dst_to_src: Pose,
) -> tuple[np.ndarray, np.ndarray]:
    """Synthesize the destination view from a source image.

    Each destination pixel is back-projected with dst_depth, moved into the
    source frame by dst_to_src, projected through src_cam with perspective
    division, and filled by bilinear sampling of src_image.  For consecutive
    frames, source is the earlier image, destination the later one, and
    dst_to_src the relative pose in the trajectory convention.

    Returns the warped image on the destination grid and a mask that is
    false where the source point is behind the camera, projects out of
    bounds, or has no valid depth.
    """
    src_image = np.asarray(src_image, dtype=np.float64)
    if src_image.shape != (src_cam.height, src_cam.width):
        raise ValueError("source image shape does not match source intrinsics")
    if dst_depth.shape != (dst_cam.height, dst_cam.width):
        raise ValueError("depth shape does not match destination intrinsics")
    pc = unproject(dst_cam, dst_depth)
    moved = pc.points @ dst_to_src.rot.T + dst_to_src.trans
    uv, front = project(src_cam, moved)
    sampled, ok = bilinear_sample(src_image, np.where(front[..., None], uv, -1.0))
    valid = pc.valid & front & ok
    warped = np.where(valid, sampled, 0.0)
    return warped, valid


def perturb_intrinsics(cam: Intrinsics, sigma: float, seed: int) -> Intrinsics:
    """Multiplicative Gaussian noise on fu, fv, cu, cv.

    Each parameter is scaled by (1 + sigma * eta) with independent standard
    normal eta, then clamped back into a valid range.  Deterministic in the
    seed.
    """
    if sigma < 0:
        raise ValueError("noise level must be nonnegative")
    eta = np.random.default_rng(seed).standard_normal(4)
    fu = max(cam.fu * (1.0 + sigma * eta[0]), 1e-6)
    fv = max(cam.fv * (1.0 + sigma * eta[1]), 1e-6)
    cu = float(np.clip(cam.cu * (1.0 + sigma * eta[2]), 0.0, np.nextafter(cam.width, 0.0)))
    cv = float(np.clip(cam.cv * (1.0 + sigma * eta[3]), 0.0, np.nextafter(cam.height, 0.0)))
    return Intrinsics(fu=fu, fv=fv, cu=cu, cv=cv, width=cam.width, height=cam.height)
