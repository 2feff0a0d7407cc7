"""Principal-angle geometry against constructed rotations."""

from __future__ import annotations

import numpy as np
import pytest

from vokit.photometric import REASON_ACCEPTED, REASON_BELOW_THRESHOLD
from vokit.subspace import lang_gate, orthonormal_basis, principal_cosines, subspace_distance

K, D = 15, 768


def rotated_rows(theta, k=K, d=D):
    """Rows e_i rotated by theta inside disjoint planes span(e_i, e_{k+i})."""
    first = np.zeros((k, d))
    last = np.zeros((k, d))
    for i in range(k):
        first[i, i] = 1.0
        last[i, i] = np.cos(theta)
        last[i, k + i] = np.sin(theta)
    return first, last


def random_features(rng, k=K, d=D):
    return rng.standard_normal((k, d))


def test_basis_is_orthonormal_and_spans_rows():
    rng = np.random.default_rng(0)
    z = random_features(rng)
    q = orthonormal_basis(z)
    assert q.shape == (D, K)
    assert np.allclose(q.T @ q, np.eye(K), atol=1e-10)
    # Projecting the rows onto the basis loses nothing.
    proj = (z @ q) @ q.T
    assert np.allclose(proj, z, atol=1e-8)


def test_basis_detects_rank_deficiency():
    rng = np.random.default_rng(1)
    z = random_features(rng)
    z[5] = z[3]  # duplicate row
    assert orthonormal_basis(z).shape[1] == K - 1
    z[7] = 2.0 * z[2] - 0.5 * z[9]
    assert orthonormal_basis(z).shape[1] == K - 2
    # Noise far below the relative tolerance does not resurrect rank.
    z2 = np.vstack([z[0], z[0] + 1e-12 * rng.standard_normal(D)])
    assert orthonormal_basis(z2).shape[1] == 1


def test_basis_rejects_zero_matrix():
    with pytest.raises(ValueError):
        orthonormal_basis(np.zeros((K, D)))
    with pytest.raises(ValueError):
        orthonormal_basis(np.full((K, D), np.nan))


def test_principal_cosines_identical_and_orthogonal():
    rng = np.random.default_rng(2)
    q = orthonormal_basis(random_features(rng))
    assert np.allclose(principal_cosines(q, q), 1.0, atol=1e-12)
    a = np.eye(D)[:, :5]
    b = np.eye(D)[:, 5:9]
    assert np.allclose(principal_cosines(a, b), 0.0, atol=0)
    assert principal_cosines(a, b).shape == (4,)


def test_principal_cosines_sorted_and_clamped():
    rng = np.random.default_rng(3)
    qa = orthonormal_basis(random_features(rng))
    qb = orthonormal_basis(random_features(rng))
    c = principal_cosines(qa, qb)
    assert np.all(c[:-1] >= c[1:])
    assert np.all((c >= 0) & (c <= 1))


def test_distance_zero_iff_same_span():
    rng = np.random.default_rng(4)
    z = random_features(rng)
    assert subspace_distance(z, z) == pytest.approx(0.0, abs=1e-10)
    mix = rng.standard_normal((K, K)) + 3 * np.eye(K)
    assert subspace_distance(z, mix @ z) == pytest.approx(0.0, abs=1e-8)
    other = random_features(rng)
    assert subspace_distance(z, other) > 0.1


def test_distance_disjoint_plane_rotation_closed_form():
    for theta in [0.0, 0.2, 0.5, 1.0, np.pi / 2]:
        first, last = rotated_rows(theta)
        want = K * np.sin(theta) ** 2
        assert subspace_distance(first, last) == pytest.approx(want, abs=1e-9)


def test_distance_symmetric():
    rng = np.random.default_rng(5)
    za, zb = random_features(rng), random_features(rng)
    assert subspace_distance(za, zb) == pytest.approx(subspace_distance(zb, za), abs=1e-10)


def test_distance_invariant_under_row_mixing():
    rng = np.random.default_rng(6)
    za, zb = random_features(rng), random_features(rng)
    base = subspace_distance(za, zb)
    for _ in range(5):
        # Well-conditioned invertible mixes of the rows.
        q1, _ = np.linalg.qr(rng.standard_normal((K, K)))
        q2, _ = np.linalg.qr(rng.standard_normal((K, K)))
        m1 = q1 @ np.diag(rng.uniform(0.5, 2.0, K)) @ q2
        assert subspace_distance(m1 @ za, zb) == pytest.approx(base, abs=1e-8)


def test_distance_invariant_under_ambient_rotation():
    rng = np.random.default_rng(7)
    za, zb = random_features(rng), random_features(rng)
    base = subspace_distance(za, zb)
    q, _ = np.linalg.qr(rng.standard_normal((D, D)))
    assert subspace_distance(za @ q, zb @ q) == pytest.approx(base, abs=1e-8)


def test_lang_gate_window_length_enforced():
    rng = np.random.default_rng(8)
    window = [random_features(rng) for _ in range(10)]
    with pytest.raises(ValueError):
        lang_gate(window, tau=5.0, horizon=10)
    lang_gate(window + [random_features(rng)], tau=5.0, horizon=10)


def test_lang_gate_flips_exactly_at_tau():
    theta = 0.7
    first, last = rotated_rows(theta)
    rng = np.random.default_rng(9)
    middle = [random_features(rng) for _ in range(9)]
    window = [first] + middle + [last]
    score = subspace_distance(first, last)
    assert score == pytest.approx(K * np.sin(theta) ** 2, abs=1e-9)
    at = lang_gate(window, tau=score)
    assert at.keep and at.reason == REASON_ACCEPTED
    just_above = lang_gate(window, tau=score + 1e-6)
    assert not just_above.keep and just_above.reason == REASON_BELOW_THRESHOLD
    just_below = lang_gate(window, tau=score - 1e-6)
    assert just_below.keep


def test_lang_gate_keeps_diverse_rejects_stagnant():
    rng = np.random.default_rng(10)
    frames = [random_features(rng) for _ in range(11)]
    diverse = lang_gate(frames, tau=5.0)
    assert diverse.keep  # independent gaussian subspaces are far apart
    stagnant = lang_gate([frames[0]] * 11, tau=5.0)
    assert not stagnant.keep
    assert stagnant.score == pytest.approx(0.0, abs=1e-10)
