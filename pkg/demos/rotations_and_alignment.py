"""Rotation conversions and Procrustes alignment on random inputs.

    python3 demos/rotations_and_alignment.py
"""
import numpy as np
from scipy.spatial.transform import Rotation

from motiongan.metrics import mpjpe, pa_mpjpe
from motiongan.rotations import axis_angle_to_rotmat, rot6d_to_rotmat, rotmat_to_rot6d

rng = np.random.default_rng(7)

w = rng.normal(size=(1000, 3))
R = axis_angle_to_rotmat(w)
ref = Rotation.from_rotvec(w).as_matrix()
print(f"Rodrigues vs scipy, worst entry error: {np.abs(R - ref).max():.2e}")
print(f"orthonormality residual: {np.abs(R @ R.transpose(0, 2, 1) - np.eye(3)).max():.2e}")
back = rot6d_to_rotmat(rotmat_to_rot6d(R))
print(f"6D round trip, worst entry error: {np.abs(back - R).max():.2e}")

# a joint cloud under a random similarity transform
gt = rng.normal(size=(24, 3))
Q = Rotation.random(random_state=3).as_matrix()
pred = 1.7 * gt @ Q.T + np.array([0.3, -1.0, 2.0])
print(f"similarity-transformed cloud: mpjpe {mpjpe(pred, gt):.3f}, pa_mpjpe {pa_mpjpe(pred, gt):.1e}")
noisy = pred + rng.normal(scale=0.05, size=pred.shape)
print(f"with 5 cm noise: pa_mpjpe {pa_mpjpe(noisy, gt):.4f}")
