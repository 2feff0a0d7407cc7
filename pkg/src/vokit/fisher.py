"""Matrix Fisher distribution on SO(3).

The density relative to the normalized Haar measure is

    p(R | Psi) = exp(tr(Psi^T R)) / c(Psi),

parameterized by an arbitrary real 3x3 concentration matrix Psi.  The
normalizer c depends only on the proper singular values of Psi and reduces
to a one-dimensional integral of Bessel type, which is evaluated by adaptive
quadrature in the log domain so concentrations up to |s| ~ 50 stay finite.
With Psi = 0 the density is uniform and c = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import i0e

# Mode is considered non-unique when the top two singular values vanish.
DEGENERACY_TOL = 1e-9


class DegenerateParamsError(ValueError):
    """Concentration too weak to define a unique mode."""


def _as_psi(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=np.float64)
    if psi.shape != (3, 3) or not np.all(np.isfinite(psi)):
        raise ValueError("concentration parameter must be a finite 3x3 matrix")
    return psi


@dataclass(frozen=True)
class ProperSvd:
    """SVD with both factors in SO(3); the sign is absorbed into s[2].

    Satisfies u @ diag(s) @ v.T == input, det(u) = det(v) = +1, and
    s[0] >= s[1] >= |s[2]|.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def proper_svd(m: np.ndarray) -> ProperSvd:
    m = _as_psi(m)
    u, s, vt = np.linalg.svd(m)
    v = vt.T
    du = np.linalg.det(u)
    dv = np.linalg.det(v)
    u = u.copy()
    v = v.copy()
    u[:, 2] *= du
    v[:, 2] *= dv
    s = s.copy()
    s[2] *= du * dv
    return ProperSvd(u=u, s=s, v=v)


def _log_c_from_singvals(s1: float, s2: float, s3: float) -> float:
    # Bessel-type reduction of the SO(3) integral; exact for proper singular
    # values.  The linear exponent is shifted by its max over [-1, 1] before
    # exponentiating, and i0e carries the Bessel growth separately.
    a = 0.5 * (s1 - s2)
    b = 0.5 * (s1 + s2)
    shift = max(2.0 * b + s3, 2.0 * a - s3, 0.0)

    def integrand(u: float) -> float:
        expo = a * (1.0 - u) + b * (1.0 + u) + s3 * u - shift
        return 0.5 * i0e(a * (1.0 - u)) * i0e(b * (1.0 + u)) * math.exp(expo)

    val, _ = quad(integrand, -1.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=400)
    return shift + math.log(val)


def log_norm_const(psi: np.ndarray) -> float:
    """log c(Psi).  Depends only on the proper singular values, so it is
    invariant under psi -> r1 @ psi @ r2 for rotations r1, r2."""
    sv = proper_svd(psi)
    return _log_c_from_singvals(float(sv.s[0]), float(sv.s[1]), float(sv.s[2]))


def mode(psi: np.ndarray) -> np.ndarray:
    """Most probable rotation, u @ v.T from the proper SVD.

    Raises DegenerateParamsError when s1 + s2 <= tolerance, where the
    maximizer of tr(Psi^T R) is no longer unique.
    """
    sv = proper_svd(psi)
    if float(sv.s[0] + sv.s[1]) <= DEGENERACY_TOL:
        raise DegenerateParamsError("mode undefined: s1 + s2 below tolerance")
    return sv.u @ sv.v.T


def nll(r: np.ndarray, psi: np.ndarray) -> float:
    """Negative log density, log c(Psi) - tr(Psi^T R)."""
    psi = _as_psi(psi)
    r = np.asarray(r, dtype=np.float64)
    return log_norm_const(psi) - float(np.sum(psi * r))


def total_loss(t_true: np.ndarray, t_pred: np.ndarray, r_true: np.ndarray, psi_pred: np.ndarray) -> float:
    """Squared translation error plus rotation NLL."""
    t_true = np.asarray(t_true, dtype=np.float64).reshape(3)
    t_pred = np.asarray(t_pred, dtype=np.float64).reshape(3)
    d = t_true - t_pred
    return float(d @ d) + nll(r_true, psi_pred)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Unit quaternions (..., 4) in (w, x, y, z) order to rotation matrices."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def sample_uniform_so3_batch(n: int, rng: np.random.Generator) -> np.ndarray:
    """(n, 3, 3) rotations drawn from the Haar-uniform distribution."""
    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return quat_to_matrix(q)


def sample_uniform_so3(seed: int) -> np.ndarray:
    """One Haar-uniform rotation, deterministic in the seed."""
    return sample_uniform_so3_batch(1, np.random.default_rng(seed))[0]


def mc_log_norm_const(psi: np.ndarray, n: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo estimate of log c(Psi) with a delta-method standard error.

    Averages exp(tr(Psi^T R)) over n Haar-uniform rotations, with the max
    trace subtracted before exponentiating.  The returned standard error is
    for the log estimate.  Independent of the quadrature path.
    """
    psi = _as_psi(psi)
    if n < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    rots = sample_uniform_so3_batch(n, rng)
    t = np.einsum("nij,ij->n", rots, psi)
    m = float(t.max())
    w = np.exp(t - m)
    mean = float(w.mean())
    stderr = float(w.std(ddof=1) / (math.sqrt(n) * mean))
    return m + math.log(mean), stderr


def mc_mean_rotation(
    psi: np.ndarray, n: int = 1_000_000, seed: int = 0, batches: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo estimate of E[R] under p(R | Psi), with entrywise stderr.

    Self-normalized over Haar-uniform draws; the standard error comes from
    the spread of per-batch ratio estimates.
    """
    psi = _as_psi(psi)
    if n % batches != 0:
        raise ValueError("n must be divisible by the batch count")
    per = n // batches
    rng = np.random.default_rng(seed)
    ests = np.empty((batches, 3, 3))
    for b in range(batches):
        rots = sample_uniform_so3_batch(per, rng)
        t = np.einsum("nij,ij->n", rots, psi)
        w = np.exp(t - t.max())
        ests[b] = np.einsum("n,nij->ij", w, rots) / w.sum()
    mean = ests.mean(axis=0)
    stderr = ests.std(axis=0, ddof=1) / math.sqrt(batches)
    return mean, stderr
