"""3D pose evaluation metrics on plain numpy arrays."""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .errors import AlignmentError, DimensionError, InsufficientLengthError, ParseError

REPORT_FIELDS = ("mpjpe", "pa_mpjpe", "pve", "pck", "pck_threshold", "accel_err", "frames",
                 "joints")


def _pair(pred, gt, name):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise DimensionError(f"{name}: prediction {pred.shape} vs ground truth {gt.shape}")
    return pred, gt


def mpjpe(pred, gt, pelvis_index=0):
    """Mean joint distance after moving the predicted pelvis onto the true one.

    Accepts (J, 3) or batched (..., J, 3); the mean runs over every joint.
    """
    pred, gt = _pair(pred, gt, "mpjpe")
    if not -pred.shape[-2] <= pelvis_index < pred.shape[-2]:
        raise IndexError(f"pelvis index {pelvis_index} out of range for {pred.shape[-2]} joints")
    diff = pred - gt
    diff = diff - diff[..., pelvis_index:pelvis_index + 1, :]
    return float(np.mean(np.linalg.norm(diff, axis=-1)))


def similarity_align(source, target):
    """Scale, rotation (det +1) and translation minimising ``||s R x + t - y||``.

    Closed-form orthogonal Procrustes via the SVD of the cross-covariance.
    Returns ``(scale, rotation, translation)`` with ``aligned = scale * source @ R.T + t``.
    """
    x, y = _pair(source, target, "similarity_align")
    mu_x, mu_y = x.mean(axis=0), y.mean(axis=0)
    xc, yc = x - mu_x, y - mu_y
    var_x = np.sum(xc * xc)
    cov = yc.T @ xc
    if var_x < 1e-12 or np.linalg.matrix_rank(cov, tol=1e-10 * max(1.0, np.abs(cov).max())) < 2:
        raise AlignmentError("point cloud is degenerate; rotation is not determined")
    u, sv, vt = np.linalg.svd(cov)
    d = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    rot = (u * d) @ vt
    scale = float(np.sum(sv * d) / var_x)
    trans = mu_y - scale * rot @ mu_x
    return scale, rot, trans


def pa_mpjpe(pred, gt):
    """Mean joint distance after optimal similarity alignment of pred onto gt.

    Batched inputs (..., J, 3) are aligned per pose and averaged.
    """
    pred, gt = _pair(pred, gt, "pa_mpjpe")
    if pred.shape[-2] < 3:
        raise AlignmentError("pa_mpjpe needs at least 3 joints")
    if pred.ndim > 2:
        flat_p, flat_g = pred.reshape(-1, *pred.shape[-2:]), gt.reshape(-1, *gt.shape[-2:])
        return float(np.mean([pa_mpjpe(p, g) for p, g in zip(flat_p, flat_g)]))
    s, r, t = similarity_align(pred, gt)
    aligned = s * pred @ r.T + t
    return float(np.mean(np.linalg.norm(aligned - gt, axis=-1)))


def pve(pred_vertices, gt_vertices):
    """Mean per-vertex Euclidean distance, no alignment."""
    pred, gt = _pair(pred_vertices, gt_vertices, "pve")
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)))


def pck(pred, gt, threshold):
    """Percentage of joints within ``threshold`` (inclusive) of ground truth."""
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    pred, gt = _pair(pred, gt, "pck")
    dist = np.linalg.norm(pred - gt, axis=-1)
    return 100.0 * float(np.mean(dist <= threshold))


def accel_error(pred_seq, gt_seq, fps=None):
    """Mean norm of the difference of second differences, (T, J, 3) inputs.

    Units are length per frame^2, or length per second^2 when ``fps`` is given.
    Batched (B, T, J, 3) inputs average over every sequence.
    """
    pred, gt = _pair(pred_seq, gt_seq, "accel_error")
    if pred.shape[-3] < 3:
        raise InsufficientLengthError(f"acceleration needs at least 3 frames, got {pred.shape[-3]}")
    acc_p = pred[..., 2:, :, :] - 2.0 * pred[..., 1:-1, :, :] + pred[..., :-2, :, :]
    acc_g = gt[..., 2:, :, :] - 2.0 * gt[..., 1:-1, :, :] + gt[..., :-2, :, :]
    err = float(np.mean(np.linalg.norm(acc_p - acc_g, axis=-1)))
    return err * fps ** 2 if fps else err


@dataclass
class MetricsReport:
    mpjpe: float
    pa_mpjpe: float
    pve: float
    pck: float
    pck_threshold: float
    accel_err: float
    frames: int
    joints: int

    def __post_init__(self):
        for name in ("mpjpe", "pa_mpjpe", "pve", "accel_err"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 <= self.pck <= 100.0:
            raise ValueError("pck must lie in [0, 100]")

    def to_record(self):
        """``key = value`` lines in the fixed field order."""
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def from_record(cls, text):
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            key, sep, value = line.partition("=")
            if not sep or key.strip() not in REPORT_FIELDS:
                raise ParseError(f"bad report line {line!r}", offset=lineno)
            values[key.strip()] = value.strip()
        return cls._from_strings(values)

    def to_csv_row(self):
        return [_fmt(v) for v in asdict(self).values()]

    @staticmethod
    def csv_header():
        return list(REPORT_FIELDS)

    @classmethod
    def _from_strings(cls, values):
        missing = [f for f in REPORT_FIELDS if f not in values]
        if missing:
            raise ParseError(f"report missing fields {missing}")
        kw = {f: float(values[f]) for f in REPORT_FIELDS}
        kw["frames"], kw["joints"] = int(kw["frames"]), int(kw["joints"])
        return cls(**kw)


def _fmt(v):
    return str(v) if isinstance(v, int) else repr(float(v))


def reports_to_csv(rows, names=None):
    """CSV text with one row per report; ``names`` adds a leading config column."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = MetricsReport.csv_header()
    writer.writerow((["config"] if names else []) + header)
    for i, rep in enumerate(rows):
        writer.writerow(([names[i]] if names else []) + rep.to_csv_row())
    return buf.getvalue()


def reports_from_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    out = []
    for row in reader:
        out.append((row.get("config"), MetricsReport._from_strings(row)))
    return out


def evaluate_sequence(pred_joints, gt_joints, pred_vertices, gt_vertices, pck_threshold=0.05,
                      fps=None, pelvis_index=0):
    """All five metrics for one sequence of (T, J, 3) joints and (T, V, 3) vertices."""
    pred_joints, gt_joints = _pair(pred_joints, gt_joints, "evaluate_sequence")
    t, j = pred_joints.shape[:2]
    return MetricsReport(
        mpjpe=mpjpe(pred_joints, gt_joints, pelvis_index),
        pa_mpjpe=pa_mpjpe(pred_joints, gt_joints),
        pve=pve(pred_vertices, gt_vertices),
        pck=pck(pred_joints, gt_joints, pck_threshold),
        pck_threshold=float(pck_threshold),
        accel_err=accel_error(pred_joints, gt_joints, fps) if t >= 3 else 0.0,
        frames=t,
        joints=j,
    )


def aggregate_reports(reports):
    """Mean of every metric; frame counts are summed."""
    if not reports:
        raise ValueError("no reports to aggregate")
    return MetricsReport(
        mpjpe=float(np.mean([r.mpjpe for r in reports])),
        pa_mpjpe=float(np.mean([r.pa_mpjpe for r in reports])),
        pve=float(np.mean([r.pve for r in reports])),
        pck=float(np.mean([r.pck for r in reports])),
        pck_threshold=reports[0].pck_threshold,
        accel_err=float(np.mean([r.accel_err for r in reports])),
        frames=int(sum(r.frames for r in reports)),
        joints=reports[0].joints,
    )
