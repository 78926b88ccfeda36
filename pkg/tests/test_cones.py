import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsvielab import cones


def test_identity_is_nonneg():
    assert cones.is_nonneg(np.eye(2), 0.0)


def test_explicit_negative_entry():
    assert not cones.is_nonneg([[1.0, -1.0], [0.0, 2.0]], 0.0)


def test_tolerance_absorbs_arithmetic_noise():
    assert cones.is_nonneg([[0.0, 1e-13], [-1e-13, 0.0]], tol=1e-12)


def test_diagonal_matrix_is_metzler():
    assert cones.is_metzler([[-5.0, 0.0], [0.0, -7.0]], 0.0)


def test_negative_offdiagonal_is_not_metzler():
    assert not cones.is_metzler([[0.0, -1.0], [1.0, 0.0]], 0.0)


@given(st.floats(-1e6, 1e6))
def test_every_1x1_matrix_is_metzler_and_diagonal(v):
    assert cones.is_metzler([[v]], 0.0)
    assert cones.is_diagonal([[v]], 0.0)


def test_is_diagonal():
    assert cones.is_diagonal([[3.0, 0.0], [0.0, -2.0]])
    assert not cones.is_diagonal([[3.0, 1e-3], [0.0, -2.0]], 0.0)


def test_non_square_raises():
    with pytest.raises(ValueError):
        cones.is_metzler(np.ones((2, 3)))
    with pytest.raises(ValueError):
        cones.is_diagonal(np.ones((2, 3)))


def test_preservation_check_examples():
    assert cones.cone_preservation_check([[1.0, 2.0], [0.0, 3.0]], 100, 0)
    assert not cones.cone_preservation_check([[1.0, -0.5], [0.0, 3.0]], 100, 0)
    # brute force over basis vectors locates the offending column
    a = np.array([[1.0, -0.5], [0.0, 3.0]])
    bad_cols = [j for j in range(2) if np.min(a[:, j]) < 0]
    assert bad_cols == [1]
    assert cones.cone_preservation_check(np.zeros((3, 3)), 100, 0)


def test_preservation_matches_nonnegativity_on_random_matrices():
    rng = np.random.default_rng(123)
    for k in range(1000):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 5))
        a = rng.uniform(-1.0, 1.0, (n, m))
        assert cones.cone_preservation_check(a, 16, k) == cones.is_nonneg(a, 0.0)


@settings(max_examples=300)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_metzler_decomposes_into_nonneg_plus_diagonal(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 1.0, (n, n))
    a[np.diag_indices(n)] = rng.uniform(-1.0, 1.0, n)
    assert cones.is_metzler(a, 0.0)
    off = a - np.diag(np.diag(a))
    assert cones.is_nonneg(off, 0.0)
    assert cones.is_diagonal(np.diag(np.diag(a)), 0.0)


@settings(max_examples=300)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_membership_implications(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, (n, n))
    if rng.uniform() < 0.5:
        a = np.abs(a)
    mem = cones.cone_membership(a)
    if mem.in_nonneg:
        assert mem.in_metzler
        assert mem.worst_offender is None
    if mem.in_diagonal:
        assert mem.in_metzler
    if not mem.in_nonneg:
        r, c, v = mem.worst_offender
        assert a[r, c] == v < 0


def test_worst_offender_is_most_negative_offdiagonal():
    a = np.array([[-9.0, -0.5], [-2.0, 1.0]])
    mem = cones.cone_membership(a)
    assert not mem.in_metzler
    assert mem.worst_offender == (1, 0, -2.0)
