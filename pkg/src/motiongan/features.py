"""Per-frame feature providers standing in for an image backbone."""
from __future__ import annotations

import numpy as np

from .body import NUM_BETAS, PARAM_DIM, POSE_DIM
from .seeding import derive_rng


class AffineFeatureProvider:
    """Fixed random affine map of the 85-dim parameter vector plus Gaussian noise.

    Noise is keyed on each sequence's seed, so a sequence always gets the same
    features (like precomputed backbone features).
    """

    kind = "affine"

    def __init__(self, n_feat=32, noise=0.1, seed=0, matrix=None, offset=None):
        rng = derive_rng(seed, "feature-provider")
        self.n_feat = n_feat
        self.noise = float(noise)
        self.seed = int(seed)
        self.matrix = rng.normal(scale=1.0 / np.sqrt(PARAM_DIM), size=(PARAM_DIM, n_feat)) \
            if matrix is None else np.asarray(matrix, dtype=np.float64)
        self.offset = rng.normal(scale=0.1, size=n_feat) if offset is None else np.asarray(
            offset, dtype=np.float64)

    def __call__(self, theta, beta, cam, seq_seeds):
        """theta (N, T, 72), beta (N, 10), cam (N, T, 3) -> features (N, T, F)."""
        n, t = theta.shape[:2]
        params = np.concatenate([theta, np.broadcast_to(beta[:, None, :], (n, t, NUM_BETAS)), cam],
                                axis=2)
        feats = params @ self.matrix + self.offset
        if self.noise > 0:
            for i, s in enumerate(seq_seeds):
                feats[i] += derive_rng(self.seed, "feature-noise", int(s)).normal(
                    scale=self.noise, size=(t, self.n_feat))
        return feats

    def state(self):
        return {"matrix": self.matrix, "offset": self.offset,
                "noise": np.array(self.noise), "seed": np.array(self.seed, dtype=np.uint64)}


class IdentityFeatureProvider:
    """Features are the raw 85-dim parameter vectors (for oracle evaluation)."""

    kind = "identity"
    n_feat = PARAM_DIM

    def __call__(self, theta, beta, cam, seq_seeds=None):
        n, t = theta.shape[:2]
        return np.concatenate([theta, np.broadcast_to(beta[:, None, :], (n, t, NUM_BETAS)), cam],
                              axis=2)

    def state(self):
        return {}


def split_params(vec):
    """(…, 85) -> theta, beta, cam."""
    return vec[..., :POSE_DIM], vec[..., POSE_DIM:POSE_DIM + NUM_BETAS], vec[..., POSE_DIM + NUM_BETAS:]
