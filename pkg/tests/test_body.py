import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from motiongan import tensor as T
from motiongan.body import (NUM_BETAS, PARENTS, POSE_DIM, BodyParams, BodyTemplate,
                            forward_kinematics, load_template, make_template, pose_body,
                            project_weak_perspective, regress_joints, save_template)
from motiongan.errors import DimensionError, ParseError, ValidationError
from motiongan.gradcheck import grad_check
from motiongan.rotations import rotmat_to_axis_angle
from motiongan.tensor import Tensor

from oracles import quat_rotmat, random_rotation

TMPL = make_template()


def lbs_oracle(theta, beta, tmpl):
    """Textbook 4x4 transform chain, one joint at a time."""
    v_shaped = tmpl.rest_vertices + (tmpl.shape_basis @ beta).reshape(-1, 3)
    j_rest = tmpl.joint_regressor @ v_shaped
    world = []
    for k, p in enumerate(tmpl.parents):
        local = np.eye(4)
        local[:3, :3] = quat_rotmat(theta[3 * k:3 * k + 3])
        local[:3, 3] = j_rest[k] - (j_rest[p] if p >= 0 else 0.0)
        world.append(local if p < 0 else world[p] @ local)
    joints = np.array([w[:3, 3] for w in world])
    rel = []
    for k, w in enumerate(world):
        shift = np.eye(4)
        shift[:3, 3] = -j_rest[k]
        rel.append(w @ shift)
    rel = np.array(rel)
    blend = np.einsum("vj,jab->vab", tmpl.skin_weights, rel)
    homog = np.concatenate([v_shaped, np.ones((len(v_shaped), 1))], axis=1)
    verts = np.einsum("vab,vb->va", blend, homog)[:, :3]
    return joints, verts


def test_template_invariants():
    assert TMPL.num_joints == 24 and TMPL.num_vertices == 64
    np.testing.assert_allclose(TMPL.skin_weights.sum(1), 1.0, atol=1e-12)
    np.testing.assert_allclose(TMPL.joint_regressor.sum(1), 1.0, atol=1e-12)
    assert (TMPL.skin_weights >= 0).all() and (TMPL.joint_regressor >= 0).all()
    assert sum(p < 0 for p in TMPL.parents) == 1
    with pytest.raises(ValueError):
        TMPL.rest_vertices[0, 0] = 1.0


def test_template_rejects_bad_trees():
    kw = dict(rest_vertices=TMPL.rest_vertices.copy(), rest_joints=TMPL.rest_joints.copy(),
              skin_weights=TMPL.skin_weights.copy(), shape_basis=TMPL.shape_basis.copy(),
              joint_regressor=TMPL.joint_regressor.copy())
    with pytest.raises(ValidationError):
        BodyTemplate(parents=(-1, -1) + PARENTS[2:], **kw)
    with pytest.raises(ValidationError):
        BodyTemplate(parents=(1, 0) + PARENTS[2:], **kw)
    bad = TMPL.skin_weights.copy()
    bad[0, 0] += 0.1
    with pytest.raises(ValidationError):
        BodyTemplate(**{**kw, "skin_weights": bad}, parents=PARENTS)


def test_rest_pose():
    j, v = forward_kinematics(BodyParams(np.zeros(72), np.zeros(10)), TMPL)
    np.testing.assert_allclose(j, TMPL.rest_joints, atol=1e-15)
    np.testing.assert_allclose(v, TMPL.rest_vertices, atol=1e-15)


def test_global_rotation_only(rng):
    theta = np.zeros(72)
    theta[:3] = rng.normal(size=3)
    r = quat_rotmat(theta[:3])
    root = TMPL.rest_joints[0]
    j, _ = forward_kinematics(BodyParams(theta, np.zeros(10)), TMPL)
    np.testing.assert_allclose(j, (TMPL.rest_joints - root) @ r.T + root, atol=1e-12)


def test_shape_direction_one():
    beta = np.eye(10)[0]
    j, v = forward_kinematics(BodyParams(np.zeros(72), beta), TMPL)
    shaped = TMPL.rest_vertices + TMPL.shape_basis[:, 0].reshape(-1, 3)
    np.testing.assert_allclose(j, TMPL.joint_regressor @ shaped, atol=1e-14)
    np.testing.assert_allclose(v, shaped, atol=1e-14)


def test_matches_lbs_oracle(rng):
    for _ in range(3):
        theta, beta = rng.normal(scale=0.6, size=72), rng.normal(size=10)
        j, v = forward_kinematics(BodyParams(theta, beta), TMPL)
        oj, ov = lbs_oracle(theta, beta, TMPL)
        np.testing.assert_allclose(j, oj, atol=1e-12)
        np.testing.assert_allclose(v, ov, atol=1e-12)


def test_batched_equals_single(rng):
    theta, beta = rng.normal(scale=0.5, size=(3, 72)), rng.normal(size=(3, 10))
    jb, vb = forward_kinematics(BodyParams(theta, beta), TMPL)
    for i in range(3):
        j, v = forward_kinematics(BodyParams(theta[i], beta[i]), TMPL)
        np.testing.assert_allclose(jb[i], j, atol=1e-14)
        np.testing.assert_allclose(vb[i], v, atol=1e-14)


@given(arrays(np.float64, 3, elements=st.floats(-10, 10, allow_nan=False)))
def test_translation_consistency(offset):
    moved = TMPL.shifted(offset)
    j, v = forward_kinematics(BodyParams(np.zeros(72), np.zeros(10)), moved)
    np.testing.assert_allclose(j, TMPL.rest_joints + offset, atol=1e-12)
    np.testing.assert_allclose(v, TMPL.rest_vertices + offset, atol=1e-12)


def test_root_composition(rng):
    theta = rng.normal(scale=0.5, size=72)
    r1 = quat_rotmat(theta[:3])
    r2 = random_rotation(rng)
    j, _ = forward_kinematics(BodyParams(theta, np.zeros(10)), TMPL)
    root = j[0]
    composed = theta.copy()
    composed[:3] = rotmat_to_axis_angle(r2 @ r1)
    j2, _ = forward_kinematics(BodyParams(composed, np.zeros(10)), TMPL)
    np.testing.assert_allclose(j2, (j - root) @ r2.T + root, atol=1e-12)


def test_fk_gradients(rng):
    theta, beta = rng.normal(scale=0.5, size=(1, 72)), rng.normal(size=(1, 10))
    w = rng.normal(size=(1, 64, 3))
    loss_t = lambda x: T.tsum(pose_body(x, Tensor(beta), TMPL)[1] * Tensor(w))
    loss_b = lambda x: T.tsum(pose_body(Tensor(theta), x, TMPL)[1] * Tensor(w))
    assert grad_check(loss_t, theta, eps=1e-6) <= 1e-4
    assert grad_check(loss_b, beta, eps=1e-6) <= 1e-4


def test_regress_joints_cases(rng):
    verts = rng.normal(size=(5, 3))
    onehot = np.eye(5)[[4, 0, 2]]
    np.testing.assert_array_equal(regress_joints(verts, onehot), verts[[4, 0, 2]])
    np.testing.assert_allclose(regress_joints(verts, np.full((1, 5), 0.2)), [verts.mean(0)],
                               atol=1e-15)
    v2 = rng.normal(size=(5, 3))
    w = rng.uniform(size=(3, 5))
    np.testing.assert_allclose(regress_joints(2 * verts - 3 * v2, w),
                               2 * regress_joints(verts, w) - 3 * regress_joints(v2, w), atol=1e-12)
    with pytest.raises(DimensionError):
        regress_joints(verts, np.ones((2, 4)))


def test_projection_cases():
    x = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_array_equal(project_weak_perspective(x, np.array([1.0, 0, 0])), [[1, 2]])
    np.testing.assert_array_equal(project_weak_perspective(x, np.array([2.0, 1, 1])), [[3, 5]])
    pts = np.random.default_rng(0).normal(size=(4, 3))
    np.testing.assert_array_equal(project_weak_perspective(pts, np.array([0.0, 0.5, -1])),
                                  np.tile([0.5, -1], (4, 1)))
    r = quat_rotmat([0, 0, np.pi / 2])
    np.testing.assert_allclose(project_weak_perspective(x, np.array([1.0, 0, 0]), r), [[-2, 1]],
                               atol=1e-15)


def test_projection_gradients(rng):
    pts, cam = rng.normal(size=(2, 5, 3)), np.array([[1.1, 0.2, -0.3], [0.9, 0.0, 0.1]])
    w = rng.normal(size=(2, 5, 2))
    assert grad_check(lambda x: T.tsum(project_weak_perspective(x, Tensor(cam)) * Tensor(w)),
                      pts) <= 1e-4
    assert grad_check(lambda c: T.tsum(project_weak_perspective(Tensor(pts), c) * Tensor(w)),
                      cam) <= 1e-4


def test_body_params_vector_round_trip(rng):
    vec = rng.normal(size=85)
    p = BodyParams.from_vector(vec)
    np.testing.assert_array_equal(p.to_vector(), vec)
    assert p.to_vector().shape == (POSE_DIM + NUM_BETAS + 3,)
    with pytest.raises(DimensionError):
        BodyParams(np.zeros(71), np.zeros(10))
    with pytest.raises(ValidationError):
        BodyParams(np.full(72, np.nan), np.zeros(10))


def test_template_file_round_trip(tmp_path):
    path = tmp_path / "t.txt"
    save_template(TMPL, path)
    back = load_template(path)
    for name in ("rest_vertices", "rest_joints", "skin_weights", "shape_basis",
                 "joint_regressor"):
        np.testing.assert_array_equal(getattr(back, name), getattr(TMPL, name))
    assert back.parents == TMPL.parents


def test_template_file_errors(tmp_path):
    path = tmp_path / "t.txt"
    save_template(TMPL, path)
    lines = path.read_text().splitlines()
    (tmp_path / "trunc.txt").write_text("\n".join(lines[:30]) + "\n")
    with pytest.raises(ParseError, match="offset"):
        load_template(tmp_path / "trunc.txt")
    (tmp_path / "bad.txt").write_text("hello\n")
    with pytest.raises(ParseError):
        load_template(tmp_path / "bad.txt")
