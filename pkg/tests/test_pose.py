import numpy as np
import pytest

from desksim.pose import Pose, pose_compose, quat_angle, quat_conjugate, quat_multiply, random_pose


def test_identity_neutral():
    rng = np.random.default_rng(0)
    p = random_pose(rng)
    assert pose_compose(Pose.identity(), p).is_close(p)
    assert pose_compose(p, Pose.identity()).is_close(p)


def test_inverse_gives_identity():
    rng = np.random.default_rng(1)
    p = random_pose(rng)
    assert pose_compose(p, p.inverse()).is_close(Pose.identity())
    assert pose_compose(p.inverse(), p).is_close(Pose.identity())


def test_compose_matches_matrix_oracle():
    # Rz(90) + t=(1,0,0) composed with Rz(90): verified via 4x4 matmul
    a = Pose.from_axis_angle([0, 0, 1], np.pi / 2, translation=(1, 0, 0))
    b = Pose.from_axis_angle([0, 0, 1], np.pi / 2)
    c = pose_compose(a, b)
    expected = a.to_matrix() @ b.to_matrix()
    assert np.allclose(c.to_matrix(), expected, atol=1e-12)
    # explicit values: rotation Rz(180), translation (1,0,0)
    assert np.allclose(c.translation, [1, 0, 0], atol=1e-12)
    assert np.allclose(c.rotation_matrix(), [[-1, 0, 0], [0, -1, 0], [0, 0, 1]], atol=1e-12)


def test_group_laws_random():
    rng = np.random.default_rng(42)
    for _ in range(10_000):
        a = random_pose(rng)
        b = random_pose(rng)
        # compose matches homogeneous-matrix product
        m = pose_compose(a, b).to_matrix()
        assert np.allclose(m, a.to_matrix() @ b.to_matrix(), atol=1e-9)
        # inverse law
        assert pose_compose(a, a.inverse()).is_close(Pose.identity(), 1e-9, 1e-9)


def test_associativity():
    rng = np.random.default_rng(3)
    for _ in range(200):
        a, b, c = (random_pose(rng) for _ in range(3))
        left = pose_compose(pose_compose(a, b), c)
        right = pose_compose(a, pose_compose(b, c))
        assert left.is_close(right, 1e-9, 1e-9)


def test_apply_matches_matrix():
    rng = np.random.default_rng(4)
    p = random_pose(rng)
    pts = rng.normal(size=(50, 3))
    hom = np.concatenate([pts, np.ones((50, 1))], axis=1)
    expected = (p.to_matrix() @ hom.T).T[:, :3]
    assert np.allclose(p.apply(pts), expected, atol=1e-12)


def test_from_matrix_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(500):
        p = random_pose(rng)
        q = Pose.from_matrix(p.to_matrix())
        assert p.is_close(q, 1e-9, 1e-9)


def test_quat_angle():
    q = Pose.from_axis_angle([0, 1, 0], 0.3).rotation
    assert quat_angle(q) == pytest.approx(0.3, abs=1e-12)
    dq = quat_multiply(quat_conjugate(q), q)
    assert quat_angle(dq) == pytest.approx(0.0, abs=1e-9)


def test_pose_rejects_bad_input():
    with pytest.raises(ValueError):
        Pose(np.array([0.0, 0.0, 0.0, 0.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.array([np.nan, 0.0, 0.0]))
