import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from caada import linalg
from caada.errors import DegenerateBatchError, DimensionError, NonFiniteError

from conftest import centered_covariance, naive_matmul

A = [[1.0, 2.0], [3.0, 4.0]]


def test_matmul_identity():
    np.testing.assert_array_equal(linalg.matmul(np.eye(2), A), A)


def test_matmul_zero():
    np.testing.assert_array_equal(linalg.matmul(A, np.zeros((2, 2))), np.zeros((2, 2)))


def test_matmul_gram_against_loop_oracle():
    at = linalg.transpose(A)
    expected = naive_matmul(at.tolist(), A)
    assert expected == [[10.0, 14.0], [14.0, 20.0]]
    np.testing.assert_array_equal(linalg.matmul(at, A), expected)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2x3\).*\(2x2\)"):
        linalg.matmul(np.ones((2, 3)), np.ones((2, 2)))


def test_nonfinite_rejected():
    with pytest.raises(NonFiniteError):
        linalg.matmul([[np.nan]], [[1.0]])
    with pytest.raises(NonFiniteError):
        with np.errstate(over="ignore"):
            linalg.scale([[1e308]], 1e10)


@pytest.mark.parametrize("f, expected", [
    ([[1, 2], [3, 4]], [[2, 2], [2, 2]]),
    ([[5, 5], [5, 5]], [[0, 0], [0, 0]]),
    ([[1, 0], [0, 1], [-1, 0], [0, -1]], [[2 / 3, 0], [0, 2 / 3]]),
])
def test_covariance_examples(f, expected):
    np.testing.assert_allclose(centered_covariance(f), expected, atol=1e-15)
    np.testing.assert_allclose(linalg.covariance(f), expected, atol=1e-12)


def test_covariance_rejects_single_row():
    with pytest.raises(DegenerateBatchError):
        linalg.covariance([[1.0, 2.0]])


@pytest.mark.parametrize("a, expected", [(np.eye(2), 2.0), (np.zeros((3, 3)), 0.0),
                                         ([[2, 2], [2, 2]], 16.0)])
def test_frobenius_sq(a, expected):
    assert linalg.frobenius_sq(a) == expected


def test_plumbing_ops():
    a = np.array(A)
    b = np.array([[0.5, -1.0], [2.0, 0.0]])
    np.testing.assert_array_equal(linalg.add(a, b), [[1.5, 1.0], [5.0, 4.0]])
    np.testing.assert_array_equal(linalg.sub(a, a), np.zeros((2, 2)))
    np.testing.assert_array_equal(linalg.hadamard(a, b), [[0.5, -2.0], [6.0, 0.0]])
    np.testing.assert_array_equal(linalg.scale(a, 0), np.zeros((2, 2)))
    np.testing.assert_array_equal(linalg.scale(a, -1), -a)
    np.testing.assert_array_equal(linalg.add_row(a, [[1.0, 0.0]]), [[2, 2], [4, 4]])
    np.testing.assert_array_equal(linalg.col_mean(a), [[2.0, 3.0]])
    np.testing.assert_array_equal(linalg.col_mean([[7.0]]), [[7.0]])
    np.testing.assert_array_equal(linalg.transpose([[1.0, 2.0, 3.0]]), [[1], [2], [3]])
    with pytest.raises(DimensionError):
        linalg.add(a, np.ones((3, 2)))
    with pytest.raises(DimensionError):
        linalg.add_row(a, [[1.0, 2.0, 3.0]])


feature_mats = st.integers(2, 12).flatmap(lambda n: st.integers(1, 6).flatmap(
    lambda d: arrays(np.float64, (n, d), elements=st.floats(-10, 10))))


@settings(max_examples=60, deadline=None)
@given(feature_mats)
def test_covariance_matches_centered_oracle(f):
    c = linalg.covariance(f)
    np.testing.assert_allclose(c, centered_covariance(f), atol=1e-10)
    assert np.max(np.abs(c - c.T)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(feature_mats, st.randoms(use_true_random=False))
def test_covariance_row_permutation_invariant(f, r):
    perm = list(range(f.shape[0]))
    r.shuffle(perm)
    np.testing.assert_allclose(linalg.covariance(f[perm]), linalg.covariance(f), atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.one_of(st.just(0.0), st.floats(1e-100, 100), st.floats(-100, -1e-100))))
def test_frobenius_nonnegative_zero_iff_zero(a):
    v = linalg.frobenius_sq(a)
    assert v >= 0
    assert (v == 0) == (not np.any(a))


def test_matmul_associative(rng):
    for _ in range(20):
        a, b, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(2, 5))
        left = linalg.matmul(linalg.matmul(a, b), c)
        right = linalg.matmul(a, linalg.matmul(b, c))
        assert np.linalg.norm(left - right) <= 1e-9 * np.linalg.norm(left)
