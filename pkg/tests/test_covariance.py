import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covact.covariance import (
    CovarianceDescriptor,
    IntegralStats,
    clip_windows,
    covariance_direct,
    covariance_integral,
    default_reg,
    regularize,
)
from covact.features import FeatureSetMask, FeatureStack


def rel_fro(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def random_stack(rng, n_frames, per_frame, d, offset=0.0):
    counts = rng.integers(per_frame // 2, per_frame + 1, n_frames)
    x = rng.normal(size=(counts.sum(), d)) * rng.uniform(0.1, 3.0, d) + offset
    return FeatureStack(x, FeatureSetMask(), counts)


def test_identical_samples_give_zero():
    x = np.tile([1.0, -2.0, 3.5], (10, 1))
    assert np.all(covariance_direct(x).matrix == 0)
    assert np.all(covariance_integral(x).matrix == 0)


def test_two_sample_hand_expansion(rng):
    a, b = rng.normal(size=4), rng.normal(size=4)
    mu = (a + b) / 2
    expect = (np.outer(a - mu, a - mu) + np.outer(b - mu, b - mu)) / (2 - 1)
    np.testing.assert_allclose(covariance_direct(np.stack([a, b])).matrix, expect, atol=1e-14)
    np.testing.assert_allclose(expect, 0.5 * np.outer(a - b, a - b), atol=1e-14)


def test_full_mask_shape(rng):
    c = covariance_direct(rng.normal(size=(50, 19)))
    assert c.matrix.shape == (19, 19) and c.d == 19 and c.n == 50
    assert np.triu_indices(19)[0].size == 190


def test_direct_matches_numpy_cov(rng):
    x = rng.normal(size=(200, 6))
    np.testing.assert_allclose(covariance_direct(x).matrix, np.cov(x, rowvar=False), atol=1e-13)


def test_integral_matches_direct_on_100_stacks(rng):
    worst = 0.0
    for _ in range(100):
        stack = random_stack(rng, rng.integers(1, 8), 40, rng.integers(1, 20))
        worst = max(worst, rel_fro(covariance_integral(stack).matrix, covariance_direct(stack).matrix))
    assert worst < 1e-8


def test_integral_large_offset(rng):
    for _ in range(10):
        stack = random_stack(rng, 5, 60, 12, offset=1e4)
        assert rel_fro(covariance_integral(stack).matrix, covariance_direct(stack).matrix) < 1e-6


def test_integral_sample_order_invariance(rng):
    x = rng.normal(size=(120, 5))
    perm = rng.permutation(120)
    single = covariance_integral(x).matrix
    per_frame = covariance_integral(FeatureStack(x[perm], FeatureSetMask(), [30, 30, 60])).matrix
    np.testing.assert_allclose(single, per_frame, atol=1e-12)


def test_window_lookup_matches_direct(rng):
    stack = random_stack(rng, 6, 30, 4)
    stats = IntegralStats.from_stack(stack)
    edges = np.concatenate([[0], np.cumsum(stack.frame_counts)])
    for start, stop in [(0, 6), (1, 3), (2, 6), (4, 5)]:
        ref = np.cov(stack.samples[edges[start] : edges[stop]], rowvar=False)
        np.testing.assert_allclose(stats.covariance(start, stop), ref, atol=1e-12)
        n, s1, s2 = stats.totals(start, stop)
        seg = stack.samples[edges[start] : edges[stop]]
        assert n == len(seg)
        np.testing.assert_allclose(s1, seg.sum(0), atol=1e-10)
        np.testing.assert_allclose(s2, seg.T @ seg, atol=1e-9)
    with pytest.raises(ValueError):
        stats.covariance(3, 3)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(1, 8), st.integers(0, 2**31))
def test_covariance_is_psd_and_symmetric(n, d, seed):
    x = np.random.default_rng(seed).normal(size=(n, d))
    for c in (covariance_direct(x).matrix, covariance_integral(x).matrix):
        assert np.array_equal(c, c.T)
        assert np.linalg.eigvalsh(c).min() >= -1e-10 * max(1.0, np.trace(c))


def test_covariance_errors():
    with pytest.raises(ValueError):
        covariance_direct(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        covariance_direct(np.array([[0.0, np.nan], [1.0, 2.0]]))
    with pytest.raises(ValueError):
        IntegralStats(np.zeros((4, 2)), [1, 1])


def test_regularize_zero_matrix():
    out = regularize(np.zeros((3, 3)), eps=1e-4)
    np.testing.assert_array_equal(out, 1e-4 * np.eye(3))
    # default on a zero matrix is the floor
    np.testing.assert_array_equal(regularize(np.zeros((2, 2))), 1e-8 * np.eye(2))


def test_regularize_perturbation_bound(rng):
    x = rng.normal(size=(100, 5))
    c = covariance_direct(x).matrix
    eps = default_reg(c)
    out = regularize(c)
    assert np.linalg.norm(out - c, 2) <= eps * (1 + 1e-12)


def test_rank_deficient_smallest_eigenvalue(rng):
    x = rng.normal(size=(50, 4))
    x[:, 2] = 7.0  # constant feature, e.g. static background
    c = covariance_direct(x).matrix
    out = regularize(c, eps=1e-3)
    assert abs(np.linalg.eigvalsh(out).min() - 1e-3) < 1e-12


def test_regularize_descriptor_accumulates(rng):
    desc = CovarianceDescriptor(np.eye(2), 10, label="a")
    out = regularize(regularize(desc, eps=0.1), eps=0.2)
    assert out.label == "a" and abs(out.reg - 0.3) < 1e-15
    np.testing.assert_allclose(out.matrix, 1.3 * np.eye(2))


def test_regularize_rejects_asymmetric():
    with pytest.raises(ValueError):
        regularize(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        regularize(np.zeros((2, 3)))


@pytest.mark.parametrize(
    "n,L,expect",
    [
        (40, 20, [(0, 20), (20, 40)]),
        (45, 20, [(0, 20), (20, 40), (40, 45)]),
        (41, 20, [(0, 20), (20, 40)]),
        (5, 20, [(0, 5)]),
    ],
)
def test_clip_windows(n, L, expect):
    assert clip_windows(n, L) == expect
