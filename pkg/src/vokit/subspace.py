"""Row-space geometry for feature matrices and the diversity gate.

Each frame carries a k x d feature matrix; its row space is compared across
a fixed horizon via principal angles.  Windows whose first and last
subspaces stay too close are rejected as insufficiently diverse.
"""

from __future__ import annotations

import numpy as np

from .photometric import REASON_ACCEPTED, REASON_BELOW_THRESHOLD, GateDecision

# Singular values below this fraction of the largest are treated as rank 0.
RANK_REL_TOL = 1e-8

# Window length is the horizon plus the starting frame itself.
DEFAULT_HORIZON = 10


def orthonormal_basis(z: np.ndarray, rel_tol: float = RANK_REL_TOL) -> np.ndarray:
    """Orthonormal basis (d x r) of the row space of a k x d matrix.

    Rank is decided by singular values relative to the largest; an input
    without any numerically nonzero row raises ValueError.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValueError("feature matrix must be 2-d")
    if not np.all(np.isfinite(z)):
        raise ValueError("feature matrix must be finite")
    _, s, vt = np.linalg.svd(z, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        raise ValueError("feature matrix has no nonzero rows")
    r = int(np.sum(s > rel_tol * s[0]))
    return vt[:r].T


def principal_cosines(qa: np.ndarray, qb: np.ndarray) -> np.ndarray:
    """Cosines of the principal angles between two orthonormal bases.

    Returned descending, clamped into [0, 1]; length is the smaller rank.
    """
    qa = np.asarray(qa, dtype=np.float64)
    qb = np.asarray(qb, dtype=np.float64)
    if qa.shape[0] != qb.shape[0]:
        raise ValueError("bases must live in the same ambient dimension")
    s = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.clip(s, 0.0, 1.0)


def subspace_distance(za: np.ndarray, zb: np.ndarray) -> float:
    """Squared projection distance between row spaces, sum of sin^2 of the
    principal angles.  Zero for identical spans; grows with divergence."""
    c = principal_cosines(orthonormal_basis(za), orthonormal_basis(zb))
    return float(np.sum(1.0 - c * c))


def lang_gate(
    window,
    tau: float = 5.0,
    horizon: int = DEFAULT_HORIZON,
    keep_below: bool = False,
) -> GateDecision:
    """Keep a window whose first and last feature subspaces diverged enough.

    window must hold exactly horizon + 1 feature matrices in frame order.
    The score is the subspace distance between the endpoints; windows with
    score below tau are rejected as stagnant.  keep_below reverses the
    comparison for pipelines that prune diverging windows instead; either
    way the decision flips exactly at tau, with the boundary kept.
    """
    window = list(window)
    if len(window) != horizon + 1:
        raise ValueError(f"window must hold {horizon + 1} matrices, got {len(window)}")
    score = subspace_distance(window[0], window[-1])
    keep = score <= tau if keep_below else score >= tau
    if keep:
        return GateDecision(keep=True, score=score, reason=REASON_ACCEPTED)
    return GateDecision(keep=False, score=score, reason=REASON_BELOW_THRESHOLD)
