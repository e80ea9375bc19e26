import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hcalc import hgroup
from hcalc.errors import DimensionError

coord = st.floats(-5, 5, allow_nan=False)


def points(n):
    return arrays(float, 2 * n + 1, elements=coord)


def test_product_examples():
    np.testing.assert_array_equal(hgroup.product([1, 0, 0], [0, 1, 0]), [1, 1, 0.5])
    np.testing.assert_array_equal(hgroup.product([1, 0, 0, 0, 0], [0, 0, 1, 0, 0]), [1, 0, 1, 0, 0.5])


def test_product_dimension_mismatch():
    with pytest.raises(DimensionError):
        hgroup.product([1, 0, 0], [0, 0, 0, 0, 0])
    with pytest.raises(DimensionError):
        hgroup.as_point([1, 2])


def test_inverse_and_identity():
    np.testing.assert_array_equal(hgroup.inverse([1, 0, 0]), [-1, 0, 0])
    e = hgroup.identity(2)
    np.testing.assert_array_equal(hgroup.inverse(e), e)


def test_dilate():
    np.testing.assert_array_equal(hgroup.dilate(2, [1, 1, 1]), [2, 2, 4])
    with pytest.raises(ValueError):
        hgroup.dilate(0, [1, 1, 1])
    with pytest.raises(ValueError):
        hgroup.dilate(-1.0, [1, 1, 1])


def test_norm_and_dist_examples():
    assert hgroup.norm_inf([3, 4, -25]) == 5
    assert hgroup.norm_inf(hgroup.identity(3)) == 0
    assert hgroup.dist_inf([1, 0, 0], [0, 0, 0]) == 1


def test_frame_eval():
    np.testing.assert_array_equal(hgroup.frame_eval(("X", 1), [0, 3, 0]), [1, 0, -1.5])
    np.testing.assert_array_equal(hgroup.frame_eval("Y1", [2, 0, 0]), [0, 1, 1])
    np.testing.assert_array_equal(hgroup.frame_eval("T", [4, 5, 6, 7, 8]), [0, 0, 0, 0, 1])
    with pytest.raises(IndexError):
        hgroup.frame_eval(("X", 2), [0, 0, 0])


def test_commutator_defect_is_s_squared():
    s = 1e-2
    e = hgroup.identity(1)
    a = hgroup.frame_flow("Y1", hgroup.frame_flow("X1", e, s), s)
    b = hgroup.frame_flow("X1", hgroup.frame_flow("Y1", e, s), s)
    defect = hgroup.product(hgroup.inverse(b), a)
    assert defect[-1] == pytest.approx(s * s, rel=1e-12)


@settings(max_examples=60)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(points(n), points(n), points(n))))
def test_associativity(pqz):
    p, q, z = pqz
    np.testing.assert_allclose(hgroup.product(hgroup.product(p, q), z),
                               hgroup.product(p, hgroup.product(q, z)), atol=1e-12)


@given(st.integers(1, 3).flatmap(points))
def test_inverse_exact(p):
    np.testing.assert_array_equal(hgroup.product(p, hgroup.inverse(p)), np.zeros_like(p))
    assert hgroup.norm_inf(hgroup.inverse(p)) == hgroup.norm_inf(p)


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(points(n), points(n), points(n))),
       st.floats(0.1, 10))
def test_left_invariance_and_homogeneity(pqz, lam):
    p, q, z = pqz
    d = hgroup.dist_inf(p, q)
    assert hgroup.dist_inf(hgroup.product(z, p), hgroup.product(z, q)) == pytest.approx(d, rel=1e-12, abs=1e-12)
    assert hgroup.dist_inf(hgroup.dilate(lam, p), hgroup.dilate(lam, q)) == pytest.approx(lam * d, rel=1e-12, abs=1e-12)


@given(arrays(float, 3, elements=coord), st.floats(0.1, 5), st.floats(0.1, 5))
def test_dilation_composition(p, lam, mu):
    np.testing.assert_allclose(hgroup.dilate(lam, hgroup.dilate(mu, p)), hgroup.dilate(lam * mu, p),
                               rtol=1e-12, atol=1e-12)


def test_symmetry_and_triangle_on_random_triples():
    rng = np.random.default_rng(1)
    p, q, z = (rng.normal(size=(100_000, 5)) for _ in range(3))
    dpq = hgroup.dist_inf(p, q)
    np.testing.assert_allclose(dpq, hgroup.dist_inf(q, p), rtol=1e-12)
    defect = dpq - hgroup.dist_inf(p, z) - hgroup.dist_inf(z, q)
    # worst observed defect is recorded by the assertion message if positive
    assert np.max(defect) <= 1e-12, f"triangle defect {np.max(defect)}"
