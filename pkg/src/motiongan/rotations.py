"""Rotation conversions: axis-angle, rotation matrices and the 6D encoding.

Each function accepts either a numpy array or a :class:`Tensor` with any
number of leading batch axes. Tensors go through the differentiable path;
arrays come back as arrays.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.transform import Rotation

from . import tensor as T
from .errors import DegeneracyError, DimensionError
from .tensor import Tensor

DEGENERATE_NORM = 1e-8
_SERIES_CUTOFF = 1e-4

# Rodrigues coefficients written in the squared angle s = |w|^2, which keeps
# them smooth at s = 0:  A(s) = sin(sqrt s)/sqrt s,  B(s) = (1 - cos(sqrt s))/s.


def _coef_a(s):
    small = s < _SERIES_CUTOFF
    u = np.sqrt(np.where(small, 1.0, s))
    series = 1.0 - s / 6.0 + s * s / 120.0 - s ** 3 / 5040.0
    return np.where(small, series, np.sin(u) / u)


def _coef_a_ds(s):
    small = s < _SERIES_CUTOFF
    safe = np.where(small, 1.0, s)
    u = np.sqrt(safe)
    series = -1.0 / 6.0 + s / 60.0 - s * s / 1680.0 + s ** 3 / 90720.0
    return np.where(small, series, (np.cos(u) - np.sin(u) / u) / (2.0 * safe))


def _coef_b(s):
    small = s < _SERIES_CUTOFF
    safe = np.where(small, 1.0, s)
    series = 0.5 - s / 24.0 + s * s / 720.0 - s ** 3 / 40320.0
    return np.where(small, series, (1.0 - np.cos(np.sqrt(safe))) / safe)


def _coef_b_ds(s):
    small = s < _SERIES_CUTOFF
    safe = np.where(small, 1.0, s)
    series = -1.0 / 24.0 + s / 360.0 - s * s / 13440.0 + s ** 3 / 907200.0
    return np.where(small, series, (_coef_a(safe) / 2.0 - _coef_b(safe)) / safe)


def _check_last(x, n, name):
    if x.shape[-1:] != (n,):
        raise DimensionError(f"{name}: expected trailing dimension {n}, got shape {x.shape}")


def _skew(w):
    """(N,3) -> (N,3,3) cross-product matrices."""
    n = w.shape[0]
    x, y, z = w[:, 0], w[:, 1], w[:, 2]
    zero = Tensor(np.zeros(n))
    return T.stack([zero, -z, y, z, zero, -x, -y, x, zero], axis=1).reshape(n, 3, 3)


def _scale_mats(coef, mats):
    n = coef.shape[0]
    return T.broadcast_to(coef.reshape(n, 1, 1), mats.shape) * mats


def axis_angle_to_rotmat(omega):
    """Rodrigues formula, ``(..., 3) -> (..., 3, 3)``."""
    as_array = not isinstance(omega, Tensor)
    w = T.as_tensor(omega)
    _check_last(w, 3, "axis_angle_to_rotmat")
    lead = w.shape[:-1]
    w = w.reshape(-1, 3)
    n = w.shape[0]
    s = T.tsum(T.square(w), axis=1)
    a = T.unary(s, _coef_a, _coef_a_ds, "rodrigues_a")
    b = T.unary(s, _coef_b, _coef_b_ds, "rodrigues_b")
    k = _skew(w)
    eye = Tensor(np.broadcast_to(np.eye(3), (n, 3, 3)).copy())
    r = eye + _scale_mats(a, k) + _scale_mats(b, T.matmul(k, k))
    r = r.reshape(*lead, 3, 3)
    return r.data if as_array else r


def rot6d_to_rotmat(r6):
    """Gram-Schmidt on two 3-vectors, ``(..., 6) -> (..., 3, 3)``.

    The two input vectors become the first two columns after
    orthonormalisation; the third column is their cross product.
    """
    as_array = not isinstance(r6, Tensor)
    x = T.as_tensor(r6)
    _check_last(x, 6, "rot6d_to_rotmat")
    lead = x.shape[:-1]
    x = x.reshape(-1, 6)
    a1, a2 = x[:, 0:3], x[:, 3:6]
    n1 = T.l2norm(a1, axis=1, keepdims=True)
    if np.any(n1.data < DEGENERATE_NORM):
        raise DegeneracyError("rot6d_to_rotmat: first column has near-zero norm")
    b1 = a1 / T.broadcast_to(n1, a1.shape)
    proj = T.tsum(b1 * a2, axis=1, keepdims=True)
    u2 = a2 - T.broadcast_to(proj, b1.shape) * b1
    n2 = T.l2norm(u2, axis=1, keepdims=True)
    if np.any(n2.data < DEGENERATE_NORM):
        raise DegeneracyError("rot6d_to_rotmat: columns are parallel or second column is near zero")
    b2 = u2 / T.broadcast_to(n2, u2.shape)
    b3 = T.cross(b1, b2)
    r = T.stack([b1, b2, b3], axis=-1).reshape(*lead, 3, 3)
    return r.data if as_array else r


def rotmat_to_rot6d(rot):
    """First two columns, flattened: ``(..., 3, 3) -> (..., 6)``."""
    as_array = not isinstance(rot, Tensor)
    r = T.as_tensor(rot)
    if r.shape[-2:] != (3, 3):
        raise DimensionError(f"rotmat_to_rot6d: expected (..., 3, 3), got {r.shape}")
    lead = r.shape[:-2]
    r = r.reshape(-1, 3, 3)
    out = T.concat([r[:, :, 0], r[:, :, 1]], axis=1).reshape(*lead, 6)
    return out.data if as_array else out


def rotmat_to_axis_angle(rot):
    """Inverse Rodrigues on arrays only (used for export, not for training)."""
    rot = np.asarray(rot, dtype=np.float64)
    lead = rot.shape[:-2]
    vec = Rotation.from_matrix(rot.reshape(-1, 3, 3)).as_rotvec()
    return vec.reshape(*lead, 3)


def axis_angle_to_rot6d(omega):
    return rotmat_to_rot6d(axis_angle_to_rotmat(omega))
