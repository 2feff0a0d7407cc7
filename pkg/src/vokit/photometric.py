"""Masked SSIM and the photometric consistency gate.

A warped previous frame is compared against the current frame; the score is
normalized by the plain frame-to-frame similarity so that static, easy pairs
do not dominate.  Samples whose normalized score falls below threshold are
rejected rather than used as pseudo-labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate, minimum_filter

from .camera import DepthMap, Intrinsics, warp_image
from .se3 import Pose

REASON_ACCEPTED = "accepted"
REASON_BELOW_THRESHOLD = "below-threshold"
REASON_INVALID_DENOMINATOR = "invalid-denominator"
REASON_INSUFFICIENT_OVERLAP = "insufficient-overlap"

# Fraction of window positions that must be valid before SSIM is meaningful.
MIN_OVERLAP = 0.01

# Denominator guard for the normalized score.
DENOM_EPS = 1e-6


class InsufficientOverlapError(ValueError):
    """Too few fully-valid windows to estimate similarity."""


class InvalidDenominatorError(ValueError):
    """Frame-to-frame similarity too small or negative to normalize by."""


@dataclass(frozen=True)
class GateDecision:
    keep: bool
    score: float | None
    reason: str

    def __post_init__(self):
        if self.keep and self.reason != REASON_ACCEPTED:
            raise ValueError("kept samples must carry the accepted reason")
        if not self.keep and self.reason == REASON_ACCEPTED:
            raise ValueError("rejected samples need a rejection reason")


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """Normalized 2-d Gaussian tap matrix."""
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(
    a: np.ndarray,
    b: np.ndarray,
    mask: np.ndarray | None = None,
    *,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    data_range: float = 1.0,
    min_overlap: float = MIN_OVERLAP,
) -> float:
    """Mean local structural similarity over fully-valid windows.

    Windows are Gaussian-weighted, population covariances, and only window
    positions whose entire support lies inside both the image and the mask
    contribute.  Raises InsufficientOverlapError when fewer than min_overlap
    of all window positions survive.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError("images must share a 2-d shape")
    h, w = a.shape
    if mask is None:
        mask = np.ones((h, w), dtype=bool)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (h, w):
            raise ValueError("mask shape must match the images")

    r = window // 2
    if h < window or w < window:
        raise InsufficientOverlapError("image smaller than one window")
    interior = (slice(r, h - r), slice(r, w - r))
    total = (h - 2 * r) * (w - 2 * r)

    ok = minimum_filter(mask.astype(np.uint8), size=window, mode="constant", cval=0)[interior] == 1
    n_ok = int(ok.sum())
    if n_ok < min_overlap * total:
        raise InsufficientOverlapError(f"{n_ok}/{total} valid windows below {min_overlap:.0%}")

    az = np.where(mask, a, 0.0)
    bz = np.where(mask, b, 0.0)
    kern = gaussian_window(window, sigma)

    def smooth(img):
        return correlate(img, kern, mode="constant", cval=0.0)[interior]

    mu_a = smooth(az)
    mu_b = smooth(bz)
    var_a = smooth(az * az) - mu_a * mu_a
    var_b = smooth(bz * bz) - mu_b * mu_b
    cov = smooth(az * bz) - mu_a * mu_b

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    score = float(np.mean(num[ok] / den[ok]))
    return float(np.clip(score, -1.0, 1.0))


def norm_ssim(
    warped: np.ndarray,
    cur: np.ndarray,
    prev: np.ndarray,
    mask: np.ndarray,
    *,
    eps: float = DENOM_EPS,
    **ssim_kwargs,
) -> float:
    """Warp similarity divided by the raw frame-to-frame similarity.

    The numerator is restricted to the warp validity mask; the denominator
    is the plain full-frame similarity of the two frames, a fixed reference
    for the pair that does not depend on the pose under test.  Denominators
    at or below eps (including any negative similarity) raise
    InvalidDenominatorError.
    """
    full = np.ones_like(np.asarray(mask, dtype=bool))
    denom = ssim(prev, cur, full, **ssim_kwargs)
    if denom <= eps:
        raise InvalidDenominatorError(f"frame similarity {denom:.3g} <= {eps:g}")
    return ssim(warped, cur, mask, **ssim_kwargs) / denom


@dataclass(frozen=True)
class WarpSample:
    """One consecutive-frame training candidate.

    pose maps current-frame coordinates into previous-frame coordinates
    (trajectory convention); depth belongs to the current frame.
    """

    prev_image: np.ndarray
    cur_image: np.ndarray
    depth: DepthMap
    cam_prev: Intrinsics
    cam_cur: Intrinsics
    pose: Pose


def geom_gate(
    sample: WarpSample,
    threshold: float = 0.5,
    *,
    eps: float = DENOM_EPS,
    **ssim_kwargs,
) -> GateDecision:
    """Keep a sample when its normalized warp similarity reaches threshold.

    Any failure to compute the score (unusable denominator, too little
    valid overlap after warping) rejects the sample with the matching
    reason; it never raises for data-dependent degeneracy.
    """
    warped, valid = warp_image(
        sample.prev_image, sample.depth, sample.cam_prev, sample.cam_cur, sample.pose
    )
    try:
        score = norm_ssim(warped, sample.cur_image, sample.prev_image, valid, eps=eps, **ssim_kwargs)
    except InvalidDenominatorError:
        return GateDecision(keep=False, score=None, reason=REASON_INVALID_DENOMINATOR)
    except InsufficientOverlapError:
        return GateDecision(keep=False, score=None, reason=REASON_INSUFFICIENT_OVERLAP)
    if score >= threshold:
        return GateDecision(keep=True, score=score, reason=REASON_ACCEPTED)
    return GateDecision(keep=False, score=score, reason=REASON_BELOW_THRESHOLD)
