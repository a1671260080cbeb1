import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from tensorgp.exceptions import TensorShapeError
from tensorgp.tensor import DenseTensor, fold, frobenius_norm_sq, mode_n_product, unfold, vec

from conftest import kron_all


def test_identity_product_leaves_tensor_unchanged(rng):
    t = DenseTensor(rng.standard_normal((2, 3)))
    assert mode_n_product(t, np.eye(2), 1) == t
    assert mode_n_product(t, np.eye(3), 2) == t


def test_row_of_ones_gives_column_sums():
    out = mode_n_product(DenseTensor([[1.0, 2.0], [3.0, 4.0]]), [[1.0, 1.0]], 1)
    assert out.shape == (1, 2)
    np.testing.assert_array_equal(out.data, [[4.0, 6.0]])


def test_full_scale_shape():
    t = DenseTensor(np.zeros((216, 50, 2)))
    assert mode_n_product(t, np.eye(216), 1).shape == (216, 50, 2)
    assert mode_n_product(t, np.ones((3, 50)), 2).shape == (216, 3, 2)


def test_mismatch_names_the_mode():
    with pytest.raises(TensorShapeError, match="mode 2"):
        mode_n_product(DenseTensor(np.zeros((2, 3))), np.eye(2), 2)
    with pytest.raises(TensorShapeError):
        mode_n_product(DenseTensor(np.zeros((2, 3))), np.eye(2), 3)


def test_contraction_matches_explicit_sum(rng):
    t = rng.standard_normal((2, 3, 4))
    mat = rng.standard_normal((5, 3))
    out = mode_n_product(t, mat, 2).data
    expected = np.zeros((2, 5, 4))
    for i in range(2):
        for j in range(5):
            for k in range(4):
                expected[i, j, k] = sum(mat[j, l] * t[i, l, k] for l in range(3))
    np.testing.assert_allclose(out, expected, rtol=1e-13, atol=1e-13)


def test_unfold_two_by_two_is_the_matrix():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(unfold(m, 1), m)


def test_unfold_column_order(rng):
    t = rng.standard_normal((2, 3, 4))
    u = unfold(t, 2)
    assert u.shape == (3, 8)
    # columns enumerate (i1, i3) with i3 fastest
    for i1 in range(2):
        for i3 in range(4):
            np.testing.assert_array_equal(u[:, i1 * 4 + i3], t[i1, :, i3])
    mat = rng.standard_normal((3, 3))
    np.testing.assert_allclose(fold(mat @ u, 2, t.shape).data, mode_n_product(t, mat, 2).data, rtol=1e-13)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_fold_unfold_round_trip(rng, n):
    t = DenseTensor(rng.standard_normal((2, 3, 4)))
    assert fold(unfold(t, n), n, t.shape) == t


def test_frobenius():
    assert frobenius_norm_sq(np.zeros((3, 2))) == 0.0
    assert frobenius_norm_sq(DenseTensor([[1, 2], [3, 4]])) == 30.0


def test_frobenius_matches_vec_dot(rng):
    t = rng.standard_normal((3, 4, 2))
    v = vec(t)
    assert frobenius_norm_sq(t) == pytest.approx(float(np.dot(v, v)), rel=1e-14)


def test_vec_basic():
    np.testing.assert_array_equal(vec(DenseTensor.from_values((1, 1), [7.5])), [7.5])
    assert vec(np.zeros((2, 3))).shape == (6,)
    np.testing.assert_array_equal(vec(np.arange(6.0).reshape(2, 3)), np.arange(6.0))


@pytest.mark.parametrize("shape", [(2, 3), (3, 2, 2), (3, 3, 3), (2,)])
def test_vec_of_mode_product_is_kronecker_matvec(rng, shape):
    t = rng.standard_normal(shape)
    for n in range(1, len(shape) + 1):
        mat = rng.standard_normal((shape[n - 1], shape[n - 1]))
        big = kron_all([mat if p == n - 1 else np.eye(m) for p, m in enumerate(shape)])
        np.testing.assert_allclose(vec(mode_n_product(t, mat, n)), big @ vec(t), rtol=1e-12, atol=1e-12)


def test_dense_tensor_invariants():
    t = DenseTensor.from_values((2, 3), range(6))
    assert t.values.size == 6 and t.shape == (2, 3)
    assert not t.data.flags.writeable
    with pytest.raises(TensorShapeError):
        DenseTensor.from_values((2, 3), range(5))
    with pytest.raises(TensorShapeError):
        DenseTensor(np.zeros((2, 0)))


shapes = st.lists(st.integers(1, 4), min_size=1, max_size=3).map(tuple)


@st.composite
def tensor_and_mode(draw):
    shape = draw(shapes)
    t = draw(arrays(np.float64, shape, elements=st.floats(-1, 1)))
    n = draw(st.integers(1, len(shape)))
    return t, n


unit = st.floats(-1, 1)


@settings(max_examples=60, deadline=None)
@given(tensor_and_mode(), st.data())
def test_successive_products_compose(tn, data):
    t, n = tn
    m = t.shape[n - 1]
    a = data.draw(arrays(np.float64, (3, m), elements=unit))
    b = data.draw(arrays(np.float64, (2, 3), elements=unit))
    lhs = mode_n_product(mode_n_product(t, a, n), b, n).data
    rhs = mode_n_product(t, b @ a, n).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 4, 2), elements=unit), st.data())
def test_products_along_distinct_modes_commute(t, data):
    a = data.draw(arrays(np.float64, (2, 3), elements=unit))
    b = data.draw(arrays(np.float64, (5, 4), elements=unit))
    lhs = mode_n_product(mode_n_product(t, a, 1), b, 2).data
    rhs = mode_n_product(mode_n_product(t, b, 2), a, 1).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(tensor_and_mode(), st.integers(0, 2**32 - 1))
def test_norm_invariant_under_orthogonal_products(tn, seed):
    t, n = tn
    m = t.shape[n - 1]
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((m, m)))
    before = frobenius_norm_sq(t)
    after = frobenius_norm_sq(mode_n_product(t, q, n))
    assert after == pytest.approx(before, rel=1e-10, abs=1e-300)
