"""Desk-scale temporal human body estimation with an adversarial motion prior, in numpy."""

__version__ = "0.1.0"

from .body import BodyParams, BodyTemplate, forward_kinematics, make_template  # noqa: E402
from .config import TrainConfig, ablation_configs  # noqa: E402
from .metrics import MetricsReport, mpjpe, pa_mpjpe, pck, pve, accel_error  # noqa: E402
from .motion import MotionFamily, MotionSequence, gen_real_motion  # noqa: E402
from .tensor import Tensor, parameter  # noqa: E402

__all__ = [
    "BodyParams", "BodyTemplate", "forward_kinematics", "make_template", "TrainConfig",
    "ablation_configs", "MetricsReport", "mpjpe", "pa_mpjpe", "pck", "pve", "accel_error",
    "MotionFamily", "MotionSequence", "gen_real_motion", "Tensor", "parameter",
]
