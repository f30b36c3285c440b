"""Central finite-difference checks for the autodiff engine."""
from __future__ import annotations

import numpy as np

from .errors import EvaluationError
from .tensor import Tensor, parameter


def _scalar(value):
    v = float(value.data) if isinstance(value, Tensor) else float(value)
    if not np.isfinite(v):
        raise EvaluationError("function returned a non-finite value at a perturbed point")
    return v


def _relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))


def grad_check(function, point, eps=1e-5):
    """Max over coordinates of ``|analytic - central difference| / max(1, |analytic|)``.

    ``function`` maps a tensor of ``point``'s shape to a scalar tensor.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    point = np.array(point, dtype=np.float64)
    x = parameter(point)
    out = function(x)
    _scalar(out)
    out.backward()
    analytic = np.zeros_like(point) if x.grad is None else x.grad
    numeric = np.zeros_like(point)
    flat = point.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = _scalar(function(Tensor(point)))
        flat[i] = orig - eps
        lo = _scalar(function(Tensor(point)))
        flat[i] = orig
        numeric.reshape(-1)[i] = (hi - lo) / (2.0 * eps)
    return float(np.max(_relative_error(analytic, numeric))) if point.size else 0.0


def grad_check_params(loss_fn, params, eps=1e-5, max_coords=None, seed=0):
    """Finite-difference check of ``loss_fn()`` against every tensor in ``params``.

    ``params`` maps names to leaf tensors that ``loss_fn`` closes over. When
    ``max_coords`` is set, that many coordinates per tensor are sampled.
    Returns ``{name: max relative error}``.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    _scalar(loss)
    loss.backward()
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        worst = 0.0
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            hi = _scalar(loss_fn())
            flat[i] = orig - eps
            lo = _scalar(loss_fn())
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * eps)
            worst = max(worst, float(_relative_error(analytic.reshape(-1)[i], numeric)))
        errors[name] = worst
        p.grad = None
    return errors
