import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from motiongan.errors import AlignmentError, DimensionError, InsufficientLengthError, ParseError
from motiongan.metrics import (REPORT_FIELDS, MetricsReport, accel_error, aggregate_reports,
                               evaluate_sequence, mpjpe, pa_mpjpe, pck, pve, reports_from_csv,
                               reports_to_csv, similarity_align)

from oracles import grid_procrustes, random_rotation

cloud = arrays(np.float64, (6, 3), elements=st.floats(-2, 2, allow_nan=False))


def test_mpjpe_examples(rng):
    gt = rng.normal(size=(5, 3))
    assert mpjpe(gt, gt) == 0.0
    assert mpjpe(gt + [1.0, -2.0, 0.5], gt) <= 1e-14
    gt2 = np.zeros((2, 3))
    assert mpjpe(np.array([[0, 0, 0], [0, 3, 4.0]]), gt2) == 2.5
    with pytest.raises(DimensionError):
        mpjpe(gt, gt[:4])


def test_pa_mpjpe_similarity_invariance(rng):
    for _ in range(50):
        gt = rng.normal(size=(8, 3))
        pred = rng.uniform(0.5, 2) * gt @ random_rotation(rng).T + rng.normal(size=3)
        assert pa_mpjpe(pred, gt) <= 1e-9
    assert pa_mpjpe(gt, gt) <= 1e-12


def test_pa_mpjpe_matches_grid_oracle(rng):
    for _ in range(5):
        gt = rng.normal(size=(4, 3))
        pred = gt @ random_rotation(rng).T * 1.3 + rng.normal(scale=0.3, size=(4, 3))
        want, step = grid_procrustes(pred, gt)
        assert abs(pa_mpjpe(pred, gt) - want) <= 10 * step


def test_alignment_excludes_reflections(rng):
    gt = rng.normal(size=(6, 3))
    mirrored = gt * [1, 1, -1]
    s, r, t = similarity_align(mirrored, gt)
    assert abs(np.linalg.det(r) - 1) <= 1e-12 and pa_mpjpe(mirrored, gt) > 1e-3


def test_alignment_degenerate():
    with pytest.raises(AlignmentError):
        pa_mpjpe(np.zeros((4, 3)), np.zeros((4, 3)))
    line = np.outer(np.arange(4.0), [1, 2, 3])
    with pytest.raises(AlignmentError):
        pa_mpjpe(line, line)


@given(cloud, cloud)
def test_alignment_never_raises_squared_error(a, b):
    """Pelvis centring is one particular similarity transform, so the optimum is no worse."""
    try:
        s, r, t = similarity_align(a, b)
    except AlignmentError:
        return
    sse_pa = np.sum((s * a @ r.T + t - b) ** 2)
    diff = (a - b) - (a - b)[:1]
    assert sse_pa <= np.sum(diff ** 2) + 1e-9


def test_pa_not_worse_than_mpjpe_on_random_clouds(rng):
    for _ in range(200):
        gt = rng.normal(size=(14, 3))
        pred = gt + rng.normal(scale=rng.uniform(0.05, 1.0), size=gt.shape)
        assert pa_mpjpe(pred, gt) <= mpjpe(pred, gt) + 1e-12


def test_pve_examples(rng):
    v = rng.normal(size=(6, 3))
    assert pve(v, v) == 0.0
    assert abs(pve(v + [1, 0, 0], v) - 1.0) <= 1e-15
    off = v.copy()
    off[:3, 1] += 2.0
    assert abs(pve(off, v) - 1.0) <= 1e-15


def test_pck_examples(rng):
    g = rng.normal(size=(4, 3))
    assert pck(g, g, 0.5) == 100.0
    assert pck(np.array([[1.0, 0, 0], [3, 0, 0]]), np.zeros((2, 3)), 2.0) == 50.0
    assert pck(g, g, 0.0) == 100.0
    assert pck(np.array([[2.0, 0, 0]]), np.zeros((1, 3)), 2.0) == 100.0


def test_accel_examples(rng):
    seq = rng.normal(size=(6, 4, 3))
    assert accel_error(seq, seq) == 0.0
    t = np.arange(6.0)[:, None, None]
    assert accel_error(t * rng.normal(size=(1, 4, 3)), t * rng.normal(size=(1, 4, 3))) <= 1e-12
    pred = np.zeros((4, 1, 3))
    pred[:, 0, 0] = [0, 1, 4, 9]
    assert accel_error(pred, np.zeros((4, 1, 3))) == 2.0
    assert accel_error(pred, np.zeros((4, 1, 3)), fps=10) == 200.0
    with pytest.raises(InsufficientLengthError):
        accel_error(seq[:2], seq[:2])


def test_accel_linear_trend_invariance(rng):
    a, b = rng.normal(size=(7, 3, 3)), rng.normal(size=(7, 3, 3))
    trend = np.arange(7.0)[:, None, None] * rng.normal(size=(1, 3, 3)) + rng.normal(size=(1, 3, 3))
    assert abs(accel_error(a + trend, b + trend) - accel_error(a, b)) <= 1e-12


def test_relabeling_invariance(rng):
    p, g = rng.normal(size=(5, 8, 3)), rng.normal(size=(5, 8, 3))
    perm = np.r_[0, 1 + rng.permutation(7)]  # keep the pelvis first
    assert abs(mpjpe(p[:, perm], g[:, perm]) - mpjpe(p, g)) <= 1e-12
    assert abs(pa_mpjpe(p[:, perm], g[:, perm]) - pa_mpjpe(p, g)) <= 1e-12
    assert abs(pve(p[0, perm], g[0, perm]) - pve(p[0], g[0])) <= 1e-12
    assert pck(p[:, perm], g[:, perm], 1.0) == pck(p, g, 1.0)
    assert abs(accel_error(p[:, perm], g[:, perm]) - accel_error(p, g)) <= 1e-12


def test_report_record_and_csv_round_trip(rng):
    rep = evaluate_sequence(rng.normal(size=(5, 6, 3)), rng.normal(size=(5, 6, 3)),
                            rng.normal(size=(5, 9, 3)), rng.normal(size=(5, 9, 3)), 1.0)
    assert MetricsReport.from_record(rep.to_record()) == rep
    assert tuple(MetricsReport.csv_header()) == REPORT_FIELDS
    text = reports_to_csv([rep, rep], ["a", "b"])
    assert text.splitlines()[0] == "config," + ",".join(REPORT_FIELDS)
    assert reports_from_csv(text) == [("a", rep), ("b", rep)]
    with pytest.raises(ParseError):
        MetricsReport.from_record("mpjpe = 1\nbogus = 2\n")


def test_report_invariants():
    with pytest.raises(ValueError):
        MetricsReport(-1, 0, 0, 50, 1, 0, 1, 1)
    with pytest.raises(ValueError):
        MetricsReport(0, 0, 0, 101, 1, 0, 1, 1)


def test_aggregate_is_mean(rng):
    reps = [evaluate_sequence(rng.normal(size=(4, 5, 3)), rng.normal(size=(4, 5, 3)),
                              rng.normal(size=(4, 7, 3)), rng.normal(size=(4, 7, 3)), 1.5)
            for _ in range(3)]
    agg = aggregate_reports(reps)
    for f in ("mpjpe", "pa_mpjpe", "pve", "pck", "accel_err"):
        assert abs(getattr(agg, f) - sum(getattr(r, f) for r in reps) / 3) <= 1e-12
    assert agg.frames == 12 and agg.joints == 5
