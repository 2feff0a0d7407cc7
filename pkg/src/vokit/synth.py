"""Synthetic planar worlds with exact depth, flow, and texture.

Scenes are built from infinite planes (a ground plane, optionally a
fronto-parallel wall), textured with seeded multi-octave value noise
evaluated at the world-space hit point, and rendered by exact ray-plane
intersection.  Everything is a pure function of the scene description, so
renders are bit-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .camera import DepthMap, FlowField, Intrinsics, pixel_grid
from .se3 import Pose

LAYOUT_GROUND = "ground-plane"
LAYOUT_WALL = "plane-plus-wall"
LAYOUTS = (LAYOUT_GROUND, LAYOUT_WALL)

TRAJ_LINE = "line"
TRAJ_ARC = "arc"
TRAJ_FIGURE_EIGHT = "figure-eight"
TRAJECTORIES = (TRAJ_LINE, TRAJ_ARC, TRAJ_FIGURE_EIGHT)

SKY_INTENSITY = 0.5

# Value-noise configuration: octave wavelengths in meters, amplitudes, and
# the smooth cut that removes octaves finer than the local pixel footprint.
# An octave needs _CUT_FULL samples per wavelength for full weight and
# fades to zero at _CUT_ZERO, keeping bilinear resampling error well under
# the texture amplitude at any depth.  The spectrum peaks at 4 m: on the
# ground plane both image-space flow and image-space wavelength compress as
# 1/depth^2, so misalignment measured in wavelengths of one octave is the
# same fraction at every depth, and a dominant octave makes that fraction
# govern the photometric score image-wide.
_OCTAVE_WAVELENGTHS = (6.0, 4.5, 3.4)
_OCTAVE_AMPS = (0.8, 1.0, 0.9)
_TEXTURE_CONTRAST = 2.0
_CUT_ZERO = 4.0
_CUT_FULL = 16.0


def default_camera(width: int = 128, height: int = 96) -> Intrinsics:
    """Desk-scale camera; focal length scales with resolution."""
    f = 100.0 * width / 128.0
    return Intrinsics(fu=f, fv=f, cu=width / 2.0, cv=height / 2.0, width=width, height=height)


@dataclass(frozen=True)
class SceneSpec:
    layout: str
    texture_seed: int
    cam: Intrinsics
    trajectory: str
    speed: float
    frames: int
    camera_height: float = 1.5
    wall_distance: float = 10.0
    max_depth: float = 60.0

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.trajectory not in TRAJECTORIES:
            raise ValueError(f"unknown trajectory {self.trajectory!r}")
        if self.frames < 2:
            raise ValueError("need at least two frames")
        if not (self.speed > 0):
            raise ValueError("speed must be positive")
        if not (self.camera_height > 0):
            raise ValueError("camera must start above the ground plane")

    def to_dict(self) -> dict:
        return {
            "layout": self.layout,
            "texture_seed": self.texture_seed,
            "intrinsics": {
                "fu": self.cam.fu,
                "fv": self.cam.fv,
                "cu": self.cam.cu,
                "cv": self.cam.cv,
                "width": self.cam.width,
                "height": self.cam.height,
            },
            "trajectory": self.trajectory,
            "speed": self.speed,
            "frames": self.frames,
            "camera_height": self.camera_height,
            "wall_distance": self.wall_distance,
            "max_depth": self.max_depth,
        }

    @staticmethod
    def from_dict(d: dict) -> "SceneSpec":
        cam = d.get("intrinsics")
        cam = Intrinsics(**cam) if cam else default_camera()
        kwargs = {
            k: d[k]
            for k in ("camera_height", "wall_distance", "max_depth")
            if k in d
        }
        return SceneSpec(
            layout=d["layout"],
            texture_seed=int(d["texture_seed"]),
            cam=cam,
            trajectory=d["trajectory"],
            speed=float(d["speed"]),
            frames=int(d["frames"]),
            **kwargs,
        )


def _yaw(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def make_trajectory(spec: SceneSpec) -> list[Pose]:
    """Relative poses between consecutive frames; exactly `frames` steps,
    so the accumulated trajectory has frames + 1 poses.

    line: constant forward motion.  arc: constant yaw rate closing a full
    circle over the sequence.  figure-eight: two opposed full circles (an
    odd leftover step goes straight).
    """
    n = spec.frames
    fwd = np.array([0.0, 0.0, spec.speed])
    if spec.trajectory == TRAJ_LINE:
        return [Pose(np.eye(3), fwd) for _ in range(n)]
    if spec.trajectory == TRAJ_ARC:
        rate = 2.0 * np.pi / n
        return [Pose(_yaw(rate), fwd) for _ in range(n)]
    half = n // 2
    rate = 2.0 * np.pi / half
    rels = [Pose(_yaw(rate), fwd) for _ in range(half)]
    rels += [Pose(_yaw(-rate), fwd) for _ in range(half)]
    if len(rels) < n:
        rels.append(Pose(np.eye(3), fwd))
    return rels


def _hash01(ix: np.ndarray, iy: np.ndarray, salt: int) -> np.ndarray:
    # splitmix-style integer mix; negative lattice indices wrap through
    # two's complement, which is deterministic and uniform.
    h = ix.astype(np.int64).view(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    h ^= iy.astype(np.int64).view(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= np.uint64(salt & 0xFFFFFFFFFFFFFFFF)
    h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(31)
    return h.astype(np.float64) / float(2**64)


def _smooth(t: np.ndarray) -> np.ndarray:
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _value_noise(x: np.ndarray, y: np.ndarray, wavelength: float, salt: int) -> np.ndarray:
    px = x / wavelength
    py = y / wavelength
    ix = np.floor(px)
    iy = np.floor(py)
    fx = _smooth(px - ix)
    fy = _smooth(py - iy)
    v00 = _hash01(ix, iy, salt)
    v10 = _hash01(ix + 1, iy, salt)
    v01 = _hash01(ix, iy + 1, salt)
    v11 = _hash01(ix + 1, iy + 1, salt)
    top = v00 * (1 - fx) + v10 * fx
    bot = v01 * (1 - fx) + v11 * fx
    return top * (1 - fy) + bot * fy


def _texture(x: np.ndarray, y: np.ndarray, footprint: np.ndarray, seed: int, surface: int) -> np.ndarray:
    """Band-limited multi-octave value noise in [0, 1].

    Octaves whose wavelength falls under twice the local footprint fade out
    smoothly, so distant texture never aliases across one pixel.
    """
    total = np.zeros_like(x)
    amp_sum = float(np.sum(_OCTAVE_AMPS))
    for o, (lam, amp) in enumerate(zip(_OCTAVE_WAVELENGTHS, _OCTAVE_AMPS)):
        ratio = lam / np.maximum(footprint, 1e-9)
        t = np.clip((ratio - _CUT_ZERO) / (_CUT_FULL - _CUT_ZERO), 0.0, 1.0)
        w = t * t * (3.0 - 2.0 * t)
        salt = (seed * 1000003 + surface * 8191 + o) & 0xFFFFFFFFFFFFFFFF
        total += amp * w * (_value_noise(x, y, lam, salt) - 0.5)
    val = 0.5 + _TEXTURE_CONTRAST * total / amp_sum
    return np.clip(val, 0.0, 1.0)


_SURF_NONE = 0
_SURF_GROUND = 1
_SURF_WALL = 2


def cast_rays(spec: SceneSpec, pose: Pose, u: np.ndarray, v: np.ndarray):
    """Intersect pixel rays with the scene planes.

    u, v are continuous pixel coordinates (any shape).  Returns z-depth,
    surface id, and validity; rays that miss every plane or exceed the
    depth ceiling are invalid.  pose maps camera coordinates into the world
    frame of the first camera.
    """
    cam = spec.cam
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    dcam = np.stack([(u - cam.cu) / cam.fu, (v - cam.cv) / cam.fv, np.ones_like(u)], axis=-1)
    dw = dcam @ pose.rot.T
    c = pose.trans
    if c[1] >= spec.camera_height - 1e-9:
        raise ValueError("camera is at or below the ground plane")

    # Ray parameter equals camera z-depth because the ray z-component is 1.
    t_best = np.full(u.shape, np.inf)
    surf = np.full(u.shape, _SURF_NONE, dtype=np.int8)

    dy = dw[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_g = (spec.camera_height - c[1]) / dy
    hit = (dy > 1e-12) & (t_g > 1e-9) & (t_g < t_best)
    t_best = np.where(hit, t_g, t_best)
    surf = np.where(hit, _SURF_GROUND, surf)

    if spec.layout == LAYOUT_WALL:
        dz = dw[..., 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_w = (spec.wall_distance - c[2]) / dz
        hit = (np.abs(dz) > 1e-12) & (t_w > 1e-9) & (t_w < t_best)
        t_best = np.where(hit, t_w, t_best)
        surf = np.where(hit, _SURF_WALL, surf)

    valid = np.isfinite(t_best) & (t_best <= spec.max_depth)
    t_best = np.where(valid, t_best, 0.0)
    surf = np.where(valid, surf, _SURF_NONE)
    return t_best, surf, valid


def _plane_footprint(t, dw, pose: Pose, cam: Intrinsics, normal_axis: int) -> np.ndarray:
    """Worst-direction world distance between adjacent pixel hits on a plane.

    Differentiates the hit point X = c + t d through the intersection
    t = a / (d . n); near-grazing rays stretch hugely along one image axis,
    which is what drives texture band-limiting.
    """
    dn = dw[..., normal_axis]
    e_u = pose.rot[:, 0] / cam.fu
    e_v = pose.rot[:, 1] / cam.fv
    out = np.zeros_like(t)
    for e in (e_u, e_v):
        dx = t[..., None] * e - dw * (t * e[normal_axis] / dn)[..., None]
        out = np.maximum(out, np.linalg.norm(dx, axis=-1))
    return out


def render(spec: SceneSpec, pose: Pose) -> tuple[np.ndarray, DepthMap]:
    """Image and depth map for one camera pose.

    Sky pixels (no surface within the depth ceiling) get a constant
    intensity and an invalid depth.
    """
    uu, vv = pixel_grid(spec.cam)
    t, surf, valid = cast_rays(spec, pose, uu, vv)
    dcam = np.stack(
        [(uu - spec.cam.cu) / spec.cam.fu, (vv - spec.cam.cv) / spec.cam.fv, np.ones_like(uu)],
        axis=-1,
    )
    dw = dcam @ pose.rot.T
    world = pose.trans + t[..., None] * dw

    img = np.full(uu.shape, SKY_INTENSITY)
    for sid, (ax, ay), n_axis in ((_SURF_GROUND, (0, 2), 1), (_SURF_WALL, (0, 1), 2)):
        sel = surf == sid
        if not sel.any():
            continue
        fp = _plane_footprint(t[sel], dw[sel], pose, spec.cam, n_axis)
        img[sel] = _texture(world[sel, ax], world[sel, ay], fp, spec.texture_seed, sid)

    depth = DepthMap(np.where(valid, t, -1.0))
    return img, depth


def correspondence(spec: SceneSpec, pose_a: Pose, pose_b: Pose, u: np.ndarray, v: np.ndarray):
    """Continuous pixel positions in frame b of the surface points seen at
    (u, v) in frame a.  Invalid where frame a sees sky, the point falls
    behind or outside frame b, or another surface occludes it in b."""
    cam = spec.cam
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    t, _, valid = cast_rays(spec, pose_a, u, v)
    dcam = np.stack([(u - cam.cu) / cam.fu, (v - cam.cv) / cam.fv, np.ones_like(u)], axis=-1)
    world = pose_a.trans + t[..., None] * (dcam @ pose_a.rot.T)

    pb = (world - pose_b.trans) @ pose_b.rot
    zb = pb[..., 2]
    front = zb > 1e-9
    safe = np.where(front, zb, 1.0)
    ub = cam.fu * pb[..., 0] / safe + cam.cu
    vb = cam.fv * pb[..., 1] / safe + cam.cv
    inb = (ub >= 0) & (ub <= cam.width - 1) & (vb >= 0) & (vb <= cam.height - 1)

    ok = valid & front & inb
    if ok.any():
        tb, _, vis = cast_rays(spec, pose_b, np.where(ok, ub, cam.cu), np.where(ok, vb, cam.cv))
        occluded = vis & (tb < zb - 1e-6)
        ok = ok & ~occluded & vis
    return ub, vb, ok


def analytic_flow(spec: SceneSpec, pose_a: Pose, pose_b: Pose) -> tuple[FlowField, np.ndarray]:
    """Exact optical flow from frame a to frame b on the pixel grid."""
    uu, vv = pixel_grid(spec.cam)
    ub, vb, ok = correspondence(spec, pose_a, pose_b, uu, vv)
    flow = np.stack([ub - uu, vb - vv], axis=-1)
    flow = np.where(ok[..., None], flow, 0.0)
    return FlowField(flow), ok


def make_corpus(n: int = 100, seed: int = 0) -> list[SceneSpec]:
    """Deterministic batch of varied scene specs for gate calibration.

    Per-frame motion is driving-like (about 1 to 1.7 m forward, curves
    turning a few degrees per frame) so a wrongly-signed pose misaligns the
    warp by several texture wavelengths while consecutive frames still
    overlap almost fully.  The depth ceiling crops the static far field,
    whose windows would dilute the photometric score toward 1, and walls
    sit past the end of each path so no camera ever reaches one.
    """
    rng = np.random.default_rng(seed)
    specs = []
    for i in range(n):
        layout = LAYOUTS[i % 2]
        trajectory = TRAJECTORIES[i % 3]
        if trajectory == TRAJ_LINE:
            speed = float(rng.uniform(1.45, 1.7))
            frames = int(rng.integers(10, 15))
        elif trajectory == TRAJ_ARC:
            speed = float(rng.uniform(1.45, 1.7))
            frames = int(rng.integers(110, 145))
        else:
            speed = float(rng.uniform(1.45, 1.7))
            frames = int(rng.integers(220, 289))
        specs.append(
            SceneSpec(
                layout=layout,
                texture_seed=int(rng.integers(0, 2**31)),
                cam=default_camera(),
                trajectory=trajectory,
                speed=speed,
                frames=frames,
                wall_distance=speed * frames + 8.0,
                max_depth=7.0,
            )
        )
    return specs
