import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scorelab.errors import DegenerateInputError, DimensionMismatchError
from scorelab.geometry import (
    as_unit,
    as_waveform,
    condition_number,
    cosine,
    least_squares,
    normalize,
    perturb_angular,
    pinv,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_normalize_pythagorean():
    np.testing.assert_allclose(normalize([3.0, 4.0]), [0.6, 0.8])


def test_normalize_zero_raises():
    with pytest.raises(DegenerateInputError):
        normalize([0.0, 0.0])


def test_normalize_rows():
    out = normalize(np.array([[3.0, 4.0], [0.0, 2.0]]))
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0)


@given(arrays(float, st.integers(2, 20), elements=finite))
def test_normalize_idempotent(v):
    if np.linalg.norm(v) < 1e-6:
        return
    u = normalize(v)
    np.testing.assert_allclose(normalize(u), u, atol=1e-12)
    assert abs(np.linalg.norm(u) - 1) < 1e-12


def test_cosine_examples():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert cosine(e1, e1) == 1.0
    assert cosine(e1, e2) == 0.0
    assert cosine([0.6, 0.8], e1) == pytest.approx(0.6)
    with pytest.raises(DimensionMismatchError):
        cosine(e1, [1.0, 0.0, 0.0])


@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite))
def test_cosine_symmetric_bounded(a, b):
    if min(np.linalg.norm(a), np.linalg.norm(b)) < 1e-6:
        return
    u, v = normalize(a), normalize(b)
    assert cosine(u, v) == cosine(v, u)
    assert -1.0 <= cosine(u, v) <= 1.0


@pytest.mark.parametrize("theta, expected", [(0, 1.0), (90, 0.0), (30, np.sqrt(3) / 2), (180, -1.0)])
def test_perturb_angular_examples(theta, expected, rng):
    x = normalize(rng.standard_normal(16))
    y = perturb_angular(x, theta, rng)
    assert abs(x @ y - expected) <= 1e-9
    assert abs(np.linalg.norm(y) - 1) <= 1e-12


def test_perturb_angular_zero_is_identity(rng):
    x = normalize(rng.standard_normal(5))
    np.testing.assert_allclose(perturb_angular(x, 0, rng), x, atol=1e-15)


@settings(max_examples=200)
@given(st.floats(0, 180), st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_perturb_angular_property(theta, d, seed):
    rng = np.random.default_rng(seed)
    x = normalize(rng.standard_normal(d))
    y = perturb_angular(x, theta, rng)
    assert abs(x @ y - np.cos(np.deg2rad(theta))) <= 1e-9


def test_perturb_angular_rejects_range(rng):
    with pytest.raises(ValueError):
        perturb_angular(np.array([1.0, 0.0]), 181, rng)
    with pytest.raises(ValueError):
        perturb_angular(np.array([2.0, 0.0]), 10, rng)


def test_least_squares_examples():
    x, r = least_squares(np.eye(3), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(x, [1, 2, 3])
    assert r == 0.0
    x, r = least_squares([[1, 0], [0, 1], [0, 0]], [1.0, 2.0, 5.0])
    np.testing.assert_allclose(x, [1, 2])
    assert r == pytest.approx(5.0)


def test_least_squares_planted(rng):
    A = rng.standard_normal((20, 8))
    xs = rng.standard_normal(8)
    y = A @ xs
    x, r = least_squares(A, y)
    assert np.linalg.norm(x - xs) <= 1e-9
    assert r <= 1e-9 * np.linalg.norm(y)


def test_least_squares_minimum_norm():
    # underdetermined: minimum-norm solution of x1 + x2 = 2 is (1, 1)
    x, _ = least_squares([[1.0, 1.0]], [2.0])
    np.testing.assert_allclose(x, [1.0, 1.0])


def test_least_squares_errors():
    with pytest.raises(DimensionMismatchError):
        least_squares(np.eye(3), [1.0, 2.0])
    with pytest.raises(DegenerateInputError):
        least_squares(np.zeros((3, 2)), [1.0, 2.0, 3.0])


def test_condition_number_examples(rng):
    assert condition_number(np.diag([2.0, 1.0])) == pytest.approx(2.0)
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    assert condition_number(Q[:3]) == pytest.approx(1.0)
    A = rng.standard_normal((10, 5))
    s = np.linalg.svd(A, compute_uv=False)
    assert condition_number(A) == pytest.approx(s.max() / s.min(), rel=1e-12)
    with pytest.raises(DegenerateInputError):
        condition_number(np.zeros((2, 2)))


def test_condition_number_ignores_null_directions():
    assert condition_number(np.diag([3.0, 1.0, 0.0])) == pytest.approx(3.0)


def test_pinv_matches_numpy(rng):
    A = rng.standard_normal((7, 4))
    np.testing.assert_allclose(pinv(A), np.linalg.pinv(A), atol=1e-12)


def test_validators():
    with pytest.raises(DimensionMismatchError):
        as_unit([1.0])
    with pytest.raises(ValueError):
        as_unit([1.0, 1.0])
    with pytest.raises(ValueError):
        as_waveform([0.5, 1.5])
    with pytest.raises(DimensionMismatchError):
        as_waveform(np.zeros((2, 2)))
    as_waveform([-1.0, 1.0])
