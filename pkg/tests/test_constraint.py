import numpy as np
import pytest

from lpcnmf.constraint import (ConstraintSchedule, activation_weights, apply_blind, apply_informed,
                               group_envelopes)
from lpcnmf.lpc import autocorr_from_magnitude, envelope_from_lpc, levinson_durbin, split_basis
from lpcnmf.nmf import Partition

F = 513


def resonance(theta, radius=0.9):
    A = [1.0, -2 * radius * np.cos(theta), radius ** 2]
    w = 1.0 / np.abs(np.fft.rfft(A, n=2 * (F - 1)))
    return w / w.sum()


def cosine(a, b):
    return a @ b / np.linalg.norm(a) / np.linalg.norm(b)


@pytest.fixture
def W():
    rng = np.random.default_rng(0)
    cols = [resonance(t) * (1 + 0.5 * rng.random(F)) for t in (0.2, 0.4, 1.5, 2.2)]
    W = np.stack(cols, 1)
    return W / W.sum(axis=0)


def test_schedule():
    s = ConstraintSchedule()
    assert [s.alpha_of(l) for l in (0, 1, 50, 99, 100, 250)] == pytest.approx(
        [0.0, 0.01, 0.5, 0.99, 1.0, 1.0])
    assert s.beta == 0.0 and s.p == 5.0


def test_alpha_one_and_beta_one_are_identities(W):
    part = Partition.contiguous(2, 2)
    envs = [np.full(F, 1 / F)] * 2
    np.testing.assert_array_equal(apply_informed(W, envs, part, 1.0), W)
    H = np.ones((4, 3))
    np.testing.assert_array_equal(apply_blind(W, H, part, beta=1.0), W)


def test_informed_with_own_envelopes_is_identity(W):
    part = Partition([[0], [1], [2], [3]])
    envs = [split_basis(W[:, k], 4).envelope for k in range(4)]
    np.testing.assert_allclose(apply_informed(W, envs, part, 0.0), W, rtol=1e-10)


def test_informed_flat_target_by_hand():
    w = resonance(0.5)[:, None]
    part = Partition([[0]])
    flat = np.full(F, 1 / F)
    # compose the sub-steps by hand
    r = autocorr_from_magnitude(w[:, 0], 4)
    v = envelope_from_lpc(levinson_durbin(r), F)
    expected = flat * (w[:, 0] / v)
    np.testing.assert_allclose(apply_informed(w, [flat], part, 0.0)[:, 0], expected, rtol=1e-12)
    half = apply_informed(w, [flat], part, 0.5)[:, 0]
    np.testing.assert_allclose(half, 0.5 * w[:, 0] + 0.5 * expected, rtol=1e-12)


def test_informed_moves_envelopes_towards_target(W):
    part = Partition.contiguous(2, 2)
    targets = [resonance(0.3, 0.95), resonance(1.8, 0.95)]
    out = apply_informed(W, targets, part, 0.0)
    for k in range(4):
        target = targets[k // 2]
        before = cosine(split_basis(W[:, k], 4).envelope, target)
        after = cosine(split_basis(out[:, k], 4).envelope, target)
        assert after >= before - 1e-6


def test_informed_rejects_bad_envelopes(W):
    part = Partition.contiguous(2, 2)
    with pytest.raises(ValueError):
        apply_informed(W, [np.ones(F - 1) / F] * 2, part, 0.5)
    with pytest.raises(ValueError):
        apply_informed(W, [np.ones(F) / F], part, 0.5)


def test_blind_singleton_groups_unchanged(W):
    part = Partition([[0], [1], [2], [3]])
    H = np.random.default_rng(1).random((4, 6))
    np.testing.assert_allclose(apply_blind(W, H, part, 0.0, 5.0), W, rtol=1e-10)


def test_blind_equal_weights_is_plain_mean(W):
    part = Partition([[0, 1, 2, 3]])
    H = np.random.default_rng(2).random((4, 6))
    envs = np.stack([split_basis(W[:, k], 4).envelope for k in range(4)], 1)
    mean = envs.mean(axis=1)
    (got,) = group_envelopes(envs, H, part, 0.0)
    np.testing.assert_allclose(got, mean / mean.sum(), rtol=1e-12)


def test_blind_weight_exponent(W):
    part = Partition([[0, 1]])
    H = np.array([[2.0, 2.0, 2.0], [1.0, 1.0, 1.0]])
    nu = activation_weights(H, 5.0)
    assert nu[0] / nu[1] == pytest.approx(32.0, rel=1e-12)
    v1, v2 = split_basis(W[:, 0], 4).envelope, split_basis(W[:, 1], 4).envelope
    hand = (32 * v1 + v2) / np.sum(32 * v1 + v2)
    (got,) = group_envelopes(np.stack([v1, v2], 1), H, part, 5.0)
    np.testing.assert_allclose(got, hand, rtol=1e-12)
    assert np.all(got > 0) and got.sum() == pytest.approx(1.0, rel=1e-12)


def test_blind_group_shares_one_envelope(W):
    part = Partition.contiguous(2, 2)
    H = np.random.default_rng(3).random((4, 6))
    out = apply_blind(W, H, part, 0.0, 5.0)
    exc = split_basis(W, 4).excitation
    used = out / exc
    np.testing.assert_allclose(used[:, 0], used[:, 1], rtol=1e-12)
    np.testing.assert_allclose(used[:, 2], used[:, 3], rtol=1e-12)
    assert not np.allclose(used[:, 0], used[:, 2])
    # re-extracted envelopes move towards the shared one
    for k in range(4):
        mean = used[:, k]
        own = split_basis(W[:, k], 4).envelope
        assert cosine(split_basis(out[:, k], 4).envelope, mean) >= cosine(own, mean) - 1e-6


def test_blind_zero_activation_group_falls_back(W, caplog):
    part = Partition.contiguous(2, 2)
    H = np.zeros((4, 5))
    out = apply_blind(W, H, part, 0.0, 5.0)
    assert np.all(np.isfinite(out))
    envs = np.stack([split_basis(W[:, k], 4).envelope for k in range(4)], 1)
    mean = envs[:, :2].mean(axis=1)
    exc = split_basis(W, 4).excitation
    np.testing.assert_allclose(out[:, 0], mean / mean.sum() * exc[:, 0], rtol=1e-10)
    assert "uniform weights" in caplog.text
