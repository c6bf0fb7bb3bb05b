import numpy as np
import pytest

from models import GroupElement, Rotation, SingularMeasurementError, TangentElement
from services.liegroup import (
    angle_axis,
    apply_gauge,
    compose,
    embed,
    embed_tangent,
    exp_so3,
    extract,
    identity,
    inverse,
    project,
    rotation_angle,
    skew,
    unskew,
    unvectorize,
    vectorize,
)
from tests.helpers import random_rotation


def _random_element(rng, n):
    return GroupElement(
        random_rotation(rng),
        rng.normal(size=3),
        rng.normal(size=3),
        rng.normal(size=3),
        rng.normal(size=(3, n)),
    )


def test_skew_is_cross_product(rng):
    for _ in range(20):
        v, w = rng.normal(size=3), rng.normal(size=3)
        np.testing.assert_allclose(skew(v) @ w, np.cross(v, w), atol=1e-14)
        np.testing.assert_array_equal(unskew(skew(v)), v)


def test_unskew_rejects_symmetric_part():
    m = skew([1.0, 2.0, 3.0])
    m[0, 1] += 1e-3
    with pytest.raises(ValueError):
        unskew(m)


def test_angle_axis_quarter_turn():
    r = angle_axis(0.5 * np.pi, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(r @ np.array([1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-15)


def test_angle_axis_requires_unit_axis():
    with pytest.raises(ValueError):
        angle_axis(0.3, [0.0, 0.0, 2.0])


def test_exp_of_zero_is_exact_identity():
    assert np.array_equal(exp_so3(np.zeros(3)).m, np.eye(3))


def test_rotation_angle(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    assert rotation_angle(angle_axis(0.3, axis)) == pytest.approx(0.3, abs=1e-12)


@pytest.mark.parametrize("theta", [1e-12, 3e-10, 2e-8, np.pi - 1e-6, np.pi])
def test_rotation_angle_resolves_extreme_angles(rng, theta):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    assert rotation_angle(angle_axis(theta, axis)) == pytest.approx(theta, rel=1e-6, abs=1e-15)
    assert rotation_angle(Rotation.identity()) == 0.0


def test_rotation_reorthonormalizes_small_drift(rng):
    m = random_rotation(rng).m + 1e-7 * rng.normal(size=(3, 3))
    r = Rotation(m)
    np.testing.assert_allclose(r.m.T @ r.m, np.eye(3), atol=1e-12)
    assert np.linalg.det(r.m) == pytest.approx(1.0, abs=1e-12)


def test_rotation_rejects_reflection_and_garbage(rng):
    with pytest.raises(ValueError):
        Rotation(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        Rotation(random_rotation(rng).m + 0.1)


def test_compose_matches_matrix_product(rng):
    for n in range(4):
        a, b = _random_element(rng, n), _random_element(rng, n)
        np.testing.assert_allclose(embed(compose(a, b)), embed(a) @ embed(b), atol=1e-12)


def test_inverse_gives_identity(rng):
    x = _random_element(rng, 3)
    np.testing.assert_allclose(embed(compose(x, inverse(x))), embed(identity(3)), atol=1e-12)
    np.testing.assert_allclose(embed(inverse(x)), np.linalg.inv(embed(x)), atol=1e-12)


def test_embed_extract_round_trip(rng):
    x = _random_element(rng, 2)
    y = extract(embed(x))
    np.testing.assert_array_equal(y.columns(), x.columns())
    np.testing.assert_array_equal(y.rot.m, x.rot.m)


def test_extract_rejects_bad_block_structure(rng):
    m = embed(_random_element(rng, 1))
    m[4, 3] = 1.0
    with pytest.raises(ValueError):
        extract(m)


def test_tangent_requires_skew_omega():
    with pytest.raises(ValueError):
        TangentElement(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros((3, 0)))


def test_embed_tangent_layout():
    t = TangentElement.from_vectors([1.0, 2.0, 3.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
                                    np.ones((3, 1)))
    m = embed_tangent(t)
    assert m.shape == (7, 7)
    np.testing.assert_array_equal(m[:3, :3], skew([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(m[:3, 3:6], np.eye(3))
    np.testing.assert_array_equal(m[:3, 6], np.ones(3))
    assert not np.any(m[3:])


def test_vectorize_stacks_columns():
    m = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(vectorize(m), [0.0, 2.0, 4.0, 1.0, 3.0, 5.0])
    np.testing.assert_array_equal(unvectorize(vectorize(m)), m)
    with pytest.raises(ValueError):
        unvectorize(np.zeros(4))


def test_project_is_orthogonal_projector(rng):
    x = rng.normal(size=3)
    p = project(x)
    np.testing.assert_allclose(p @ p, p, atol=1e-14)
    np.testing.assert_allclose(p, p.T, atol=1e-15)
    np.testing.assert_allclose(p @ x, np.zeros(3), atol=1e-14)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(p)), [0.0, 1.0, 1.0], atol=1e-14)


@pytest.mark.parametrize("x", [np.zeros(3), np.full(3, 1e-12)])
def test_project_rejects_near_zero(x):
    with pytest.raises(SingularMeasurementError):
        project(x)


def test_apply_gauge_preserves_relative_geometry(rng):
    x = _random_element(rng, 3)
    g = apply_gauge(x, 0.7, [1.0, -2.0, 0.5], [0.0, 0.0, 1.0])
    body_before = x.rot.m.T @ (x.xl - x.x1[:, None])
    body_after = g.rot.m.T @ (g.xl - g.x1[:, None])
    np.testing.assert_allclose(body_after, body_before, atol=1e-12)
    np.testing.assert_allclose(g.rot.m.T @ g.x2, x.rot.m.T @ x.x2, atol=1e-12)
    np.testing.assert_allclose(g.x3[2], x.x3[2], atol=1e-12)
