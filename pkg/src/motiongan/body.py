"""Toy parametric body: shape blending, forward kinematics, skinning, projection.

The template is a procedurally generated stick-figure hull with the 24-joint
kinematic tree of the usual SMPL layout, so pose vectors are 72-dimensional
and shape vectors 10-dimensional. Vertex count is configurable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DimensionError, ParseError, ValidationError
from .rotations import axis_angle_to_rotmat
from .tensor import Tensor

NUM_JOINTS = 24
NUM_BETAS = 10
POSE_DIM = 3 * NUM_JOINTS
PARAM_DIM = POSE_DIM + NUM_BETAS + 3

PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21)

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head", "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow", "left_wrist", "right_wrist", "left_hand", "right_hand",
)

# metres, y up, pelvis at the origin
_SKELETON = np.array([
    [0.00, 0.00, 0.00], [0.09, -0.08, 0.00], [-0.09, -0.08, 0.00], [0.00, 0.11, 0.00],
    [0.10, -0.48, 0.01], [-0.10, -0.48, 0.01], [0.00, 0.24, 0.00], [0.10, -0.88, -0.03],
    [-0.10, -0.88, -0.03], [0.00, 0.30, 0.01], [0.11, -0.94, 0.10], [-0.11, -0.94, 0.10],
    [0.00, 0.52, -0.01], [0.07, 0.44, 0.00], [-0.07, 0.44, 0.00], [0.00, 0.62, 0.03],
    [0.18, 0.47, -0.01], [-0.18, 0.47, -0.01], [0.44, 0.46, -0.03], [-0.44, 0.46, -0.03],
    [0.69, 0.47, -0.02], [-0.69, 0.47, -0.02], [0.77, 0.46, -0.03], [-0.77, 0.46, -0.03],
])


@dataclass(frozen=True)
class BodyTemplate:
    rest_vertices: np.ndarray   # (V, 3)
    rest_joints: np.ndarray     # (J, 3)
    parents: tuple              # root marked by -1
    skin_weights: np.ndarray    # (V, J), rows sum to 1
    shape_basis: np.ndarray     # (V*3, 10)
    joint_regressor: np.ndarray  # (J, V), rows sum to 1

    def __post_init__(self):
        validate_template(self)
        for name in ("rest_vertices", "rest_joints", "skin_weights", "shape_basis",
                     "joint_regressor"):
            getattr(self, name).setflags(write=False)
        # joint shape basis: how beta moves the rest joints, (J*3, 10)
        jb = np.einsum("jv,vcd->jcd", self.joint_regressor,
                       self.shape_basis.reshape(self.num_vertices, 3, -1))
        jb = jb.reshape(self.num_joints * 3, -1)
        jb.setflags(write=False)
        object.__setattr__(self, "_joint_shape_basis", jb)

    @property
    def num_joints(self):
        return self.rest_joints.shape[0]

    @property
    def num_vertices(self):
        return self.rest_vertices.shape[0]

    @property
    def joint_shape_basis(self):
        return self._joint_shape_basis

    def shifted(self, offset):
        """Same template with rest geometry translated by ``offset``."""
        offset = np.asarray(offset, dtype=np.float64)
        return BodyTemplate(self.rest_vertices + offset, self.rest_joints + offset, self.parents,
                            self.skin_weights.copy(), self.shape_basis.copy(),
                            self.joint_regressor.copy())


def validate_template(t):
    j = len(t.parents)
    v = t.rest_vertices.shape[0]
    expected = {"rest_vertices": (v, 3), "rest_joints": (j, 3), "skin_weights": (v, j),
                "shape_basis": (v * 3, NUM_BETAS), "joint_regressor": (j, v)}
    for name, shape in expected.items():
        if getattr(t, name).shape != shape:
            raise ValidationError(f"template {name} has shape {getattr(t, name).shape}, "
                                  f"expected {shape}")
    roots = [i for i, p in enumerate(t.parents) if p < 0]
    if len(roots) != 1:
        raise ValidationError(f"kinematic tree must have exactly one root, found {len(roots)}")
    # parents must precede children: this rules out cycles and makes the tree chainable
    for i, p in enumerate(t.parents):
        if p >= i:
            raise ValidationError(f"joint {i} has parent {p}; parents must precede children")
    for name in ("skin_weights", "joint_regressor"):
        w = getattr(t, name)
        if np.any(w < 0) or np.max(np.abs(w.sum(axis=1) - 1.0)) > 1e-9:
            raise ValidationError(f"template {name} rows must be nonnegative and sum to 1")


def make_template(num_vertices=64, seed=0, radius=0.04):
    """Procedural stick-figure hull around the 24-joint skeleton."""
    rng = np.random.default_rng(seed)
    j = NUM_JOINTS
    bones = [(PARENTS[c], c) for c in range(1, j)]
    verts = np.zeros((num_vertices, 3))
    skin = np.zeros((num_vertices, j))
    bone_of = np.zeros(num_vertices, dtype=int)
    for i in range(num_vertices):
        b = i % len(bones)
        p, c = bones[b]
        u = rng.uniform(0.1, 0.9)
        axis = _SKELETON[c] - _SKELETON[p]
        perp = np.cross(axis, rng.normal(size=3))
        perp /= np.linalg.norm(perp)
        verts[i] = _SKELETON[p] + u * axis + radius * perp
        skin[i, p] = 1.0 - 0.4 * u
        skin[i, c] = 0.4 * u
        bone_of[i] = b

    regressor = np.zeros((j, num_vertices))
    k = min(6, num_vertices)
    for jj in range(j):
        d = np.linalg.norm(verts - _SKELETON[jj], axis=1)
        near = np.argsort(d)[:k]
        w = 1.0 / (d[near] + 1e-3)
        regressor[jj, near] = w / w.sum()

    basis = np.zeros((num_vertices, 3, NUM_BETAS))
    basis[:, 1, 0] = 0.05 * verts[:, 1]   # stature
    basis[:, 0, 1] = 0.05 * verts[:, 0]   # width
    basis[:, 2, 2] = 0.05 * verts[:, 2]   # depth
    bone_dirs = rng.normal(scale=0.01, size=(len(bones), 3, NUM_BETAS - 3))
    basis[:, :, 3:] = bone_dirs[bone_of]

    return BodyTemplate(rest_vertices=verts, rest_joints=regressor @ verts, parents=PARENTS,
                        skin_weights=skin, shape_basis=basis.reshape(num_vertices * 3, NUM_BETAS),
                        joint_regressor=regressor)


# -- parameter containers ----------------------------------------------------------

@dataclass
class BodyParams:
    theta: np.ndarray          # (72,) axis-angle, root first
    beta: np.ndarray           # (10,)
    cam: np.ndarray = None     # (3,) scale, tx, ty

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        self.cam = np.array([1.0, 0.0, 0.0]) if self.cam is None else np.asarray(
            self.cam, dtype=np.float64)
        if self.theta.shape[-1:] != (POSE_DIM,) or self.beta.shape[-1:] != (NUM_BETAS,) \
                or self.cam.shape[-1:] != (3,):
            raise DimensionError(f"BodyParams: theta {self.theta.shape}, beta {self.beta.shape}, "
                                 f"cam {self.cam.shape}; expected 72/10/3")
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.beta))
                and np.all(np.isfinite(self.cam))):
            raise ValidationError("BodyParams must be finite")

    def to_vector(self):
        return np.concatenate([self.theta, self.beta, self.cam], axis=-1)

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape[-1] != PARAM_DIM:
            raise DimensionError(f"expected {PARAM_DIM}-dim parameter vector, got {vec.shape}")
        return cls(vec[..., :POSE_DIM], vec[..., POSE_DIM:POSE_DIM + NUM_BETAS],
                   vec[..., POSE_DIM + NUM_BETAS:])


# -- kinematics ----------------------------------------------------------------------

def skin_rotmats(rotmats, beta, tmpl):
    """Pose the template from per-joint rotation matrices.

    rotmats: (N, J, 3, 3) tensor of local rotations (root first), beta: (N, 10).
    Returns posed joint locations (N, J, 3) and skinned vertices (N, V, 3).
    """
    rotmats, beta = T.as_tensor(rotmats), T.as_tensor(beta)
    n, j, v = rotmats.shape[0], tmpl.num_joints, tmpl.num_vertices
    if rotmats.shape[1:] != (j, 3, 3) or beta.shape != (n, NUM_BETAS):
        raise DimensionError(f"skin_rotmats: rotmats {rotmats.shape}, beta {beta.shape} "
                             f"do not match a {j}-joint template")

    v_shaped = T.matmul(beta, Tensor(tmpl.shape_basis.T)).reshape(n, v, 3) + Tensor(
        np.broadcast_to(tmpl.rest_vertices, (n, v, 3)))
    j_rest = T.matmul(beta, Tensor(tmpl.joint_shape_basis.T)).reshape(n, j, 3) + Tensor(
        np.broadcast_to(tmpl.rest_joints, (n, j, 3)))

    parent_idx = [max(p, 0) for p in tmpl.parents]
    bones = j_rest - j_rest[:, parent_idx, :]
    glob = [rotmats[:, 0]]
    pos = [j_rest[:, 0]]
    for k in range(1, j):
        p = tmpl.parents[k]
        step = T.matmul(glob[p], bones[:, k].reshape(n, 3, 1)).reshape(n, 3)
        pos.append(pos[p] + step)
        glob.append(T.matmul(glob[p], rotmats[:, k]))
    joints = T.stack(pos, axis=1)
    g = T.stack(glob, axis=1)

    # rigid transform per joint: x -> G_k x + (p_k - G_k J_k)
    g_flat = g.reshape(n * j, 3, 3)
    rotated_rest = T.matmul(g_flat, j_rest.reshape(n * j, 3, 1)).reshape(n, j, 3)
    trans = (joints - rotated_rest).reshape(n, j, 3, 1)
    a = T.concat([g, trans], axis=3).reshape(n, j, 12).transpose(1, 0, 2).reshape(j, n * 12)
    blended = T.matmul(Tensor(tmpl.skin_weights), a).reshape(v, n, 3, 4).transpose(1, 0, 2, 3)
    homog = T.concat([v_shaped, Tensor(np.ones((n, v, 1)))], axis=2).reshape(n * v, 4, 1)
    verts = T.matmul(blended.reshape(n * v, 3, 4), homog).reshape(n, v, 3)
    return joints, verts


def pose_body(theta, beta, tmpl):
    """Differentiable posing from axis-angle ``theta`` (N, 72) and ``beta`` (N, 10)."""
    theta = T.as_tensor(theta)
    n = theta.shape[0]
    rot = axis_angle_to_rotmat(theta.reshape(n, NUM_JOINTS, 3))
    return skin_rotmats(rot, beta, tmpl)


def forward_kinematics(params, tmpl):
    """Joints (J, 3) and vertices (V, 3) for one BodyParams, or batched arrays.

    Batched BodyParams (theta of shape (N, 72)) give (N, J, 3) and (N, V, 3).
    """
    theta = np.asarray(params.theta, dtype=np.float64)
    beta = np.asarray(params.beta, dtype=np.float64)
    single = theta.ndim == 1
    joints, verts = pose_body(Tensor(np.atleast_2d(theta)), Tensor(np.atleast_2d(beta)), tmpl)
    if single:
        return joints.data[0], verts.data[0]
    return joints.data, verts.data


def regress_joints(vertices, regressor):
    """``W @ vertices`` for (V, 3) or batched (N, V, 3) vertices."""
    as_array = not isinstance(vertices, Tensor)
    verts = T.as_tensor(vertices)
    w = T.as_tensor(regressor)
    if w.ndim != 2 or verts.shape[-2:] != (w.shape[1], 3):
        raise DimensionError(f"regress_joints: regressor {w.shape} incompatible with vertices "
                             f"{verts.shape}")
    if verts.ndim == 2:
        out = T.matmul(w, verts)
    else:
        n, v = verts.shape[0], verts.shape[1]
        flat = verts.transpose(1, 0, 2).reshape(v, n * 3)
        out = T.matmul(w, flat).reshape(w.shape[0], n, 3).transpose(1, 0, 2)
    return out.data if as_array else out


def project_weak_perspective(points, cam, rot_global=None):
    """``s * drop_z(R X) + t`` for points (..., J, 3) and cam (..., 3).

    ``rot_global`` defaults to identity: the root rotation already lives in
    the pose, so applying it again here would count it twice.
    """
    as_array = not isinstance(points, Tensor)
    x = T.as_tensor(points)
    c = T.as_tensor(cam)
    if x.shape[-1] != 3 or c.shape[-1] != 3 or x.shape[:-2] != c.shape[:-1]:
        raise DimensionError(f"project_weak_perspective: points {x.shape}, cam {c.shape}")
    lead, j = x.shape[:-2], x.shape[-2]
    m = int(np.prod(lead)) if lead else 1
    x = x.reshape(m, j, 3)
    c = c.reshape(m, 3)
    if rot_global is not None:
        r = T.as_tensor(rot_global)
        if r.ndim == 2:
            x = T.matmul(x.reshape(m * j, 3), r.transpose()).reshape(m, j, 3)
        else:
            x = T.matmul(x, r.reshape(m, 3, 3).transpose(0, 2, 1))
    scale = T.broadcast_to(c[:, 0].reshape(m, 1, 1), (m, j, 2))
    shift = T.broadcast_to(c[:, 1:3].reshape(m, 1, 2), (m, j, 2))
    out = (scale * x[:, :, 0:2] + shift).reshape(*lead, j, 2)
    return out.data if as_array else out


# -- template text format --------------------------------------------------------------

_TEMPLATE_MAGIC = "# motiongan body template"
_TEMPLATE_BLOCKS = ("parents", "rest_vertices", "rest_joints", "skin_weights", "shape_basis",
                    "joint_regressor")


def save_template(tmpl, path):
    lines = [_TEMPLATE_MAGIC, "version 1", f"J {tmpl.num_joints}", f"V {tmpl.num_vertices}"]
    for name in _TEMPLATE_BLOCKS:
        arr = np.asarray(tmpl.parents, dtype=np.float64).reshape(-1, 1) if name == "parents" \
            else np.atleast_2d(getattr(tmpl, name))
        lines.append(f"block {name} {arr.shape[0]} {arr.shape[1]}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in arr)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_template(path):
    with open(path) as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != _TEMPLATE_MAGIC:
        raise ParseError("not a body template file", offset=1)
    header = {}
    i = 1
    for key in ("version", "J", "V"):
        parts = lines[i].split() if i < len(lines) else []
        if len(parts) != 2 or parts[0] != key:
            raise ParseError(f"expected '{key} <int>' header line", offset=i + 1)
        header[key] = int(parts[1])
        i += 1
    if header["version"] != 1:
        raise ParseError(f"unsupported template version {header['version']}", offset=2)
    blocks = {}
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "block":
            raise ParseError("expected 'block <name> <rows> <cols>'", offset=i + 1)
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        body = lines[i + 1:i + 1 + rows]
        if len(body) != rows:
            raise ParseError(f"block {name} truncated", offset=i + 1 + len(body))
        try:
            arr = np.array([[float(x) for x in row.split()] for row in body])
        except ValueError:
            raise ParseError(f"non-numeric value in block {name}", offset=i + 1) from None
        if arr.shape != (rows, cols):
            raise ParseError(f"block {name} has ragged rows", offset=i + 1)
        blocks[name] = arr
        i += 1 + rows
    missing = [b for b in _TEMPLATE_BLOCKS if b not in blocks]
    if missing:
        raise ParseError(f"missing blocks {missing}", offset=len(lines))
    parents = tuple(int(p) for p in blocks["parents"][:, 0])
    return BodyTemplate(blocks["rest_vertices"], blocks["rest_joints"], parents,
                        blocks["skin_weights"], blocks["shape_basis"], blocks["joint_regressor"])
