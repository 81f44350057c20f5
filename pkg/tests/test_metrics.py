import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tileuda.metrics import (
    EvalRecord,
    EvalReport,
    aggregate,
    binarize,
    iou,
    mae,
    pooled_iou,
    render_table,
)
from tileuda.raster import BinaryMask, HeightMap, Raster, RasterError

DATA = Path(__file__).parent / "data"

ZERO_SHOT = [
    ("Source", "NA", 0.6650, 0.6538),
    ("Target", "None", 0.3709, 0.8321),
    ("Target", "HM", 0.4784, 1.0302),
    ("Target", "FDA", 0.3659, 0.5864),
    ("Target", "PDA", 0.5131, 0.9312),
    ("Target", "LAB-HM", 0.3695, 0.6062),
    ("Target", "Cyclegan", 0.4010, 1.2085),
]
FINETUNED = [
    ("Source", "NA", 0.6650, 0.6538),
    ("Target", "None", 0.6885, 0.6340),
    ("Target", "HM", 0.6811, 0.5944),
    ("Target", "FDA", 0.6917, 0.5839),
    ("Target", "PDA", 0.7014, 0.5547),
    ("Target", "LAB-HM", 0.6862, 0.5627),
    ("Target", "Cyclegan", 0.5714, 0.8519),
]


def reports_for(rows):
    return [aggregate([EvalRecord("tile", m, e)], label, data=data) for data, label, m, e in rows]


masks = arrays(bool, (6, 7))


# -- binarize -------------------------------------------------------------------

def test_binarize():
    assert binarize(Raster(np.ones((3, 3)))).values.all()
    assert binarize(Raster(np.array([[0.5]])), 0.5).values[0, 0]
    with pytest.raises(RasterError):
        binarize(Raster(np.zeros((2, 2, 3))))


def test_binarize_elementwise(rng):
    v = rng.random((9, 11))
    got = binarize(Raster(v), 0.37).values
    for i in range(9):
        for j in range(11):
            assert got[i, j] == (v[i, j] >= 0.37)


# -- IoU / MAE --------------------------------------------------------------------

def test_iou_analytic():
    m = np.zeros((4, 4), bool)
    m[:2, :2] = True
    assert iou(BinaryMask(m), BinaryMask(m)) == 1.0
    assert iou(BinaryMask(m), BinaryMask(~m)) == 0.0
    half = np.zeros_like(m)
    half[0, :2] = True
    assert iou(BinaryMask(half), BinaryMask(m)) == 0.5
    empty = BinaryMask(np.zeros((4, 4), bool))
    assert iou(empty, empty) == 1.0


def test_iou_shape_mismatch():
    with pytest.raises(RasterError):
        iou(BinaryMask(np.zeros((2, 2))), BinaryMask(np.zeros((2, 3))))


@settings(max_examples=60, deadline=None)
@given(masks, masks)
def test_iou_properties(a, b):
    ma, mb = BinaryMask(a), BinaryMask(b)
    v = iou(ma, mb)
    assert 0.0 <= v <= 1.0
    assert v == iou(mb, ma)
    assert iou(ma, ma) == 1.0


def test_mae_analytic():
    gt = HeightMap(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert mae(gt, gt) == 0.0
    assert mae(HeightMap(gt.values + 1.0), gt) == 1.0
    assert mae(HeightMap(gt.values + np.array([[0, 1], [2, 3]])), gt) == 1.5


def test_mae_nodata_and_mask():
    gt = HeightMap(np.array([[1.0, 2.0], [3.0, 4.0]]), nodata=np.array([[False, True], [False, False]]))
    pred = HeightMap(np.array([[2.0, 100.0], [3.0, 4.0]]))
    assert mae(pred, gt) == pytest.approx(1 / 3)
    assert mae(pred, gt, mask=np.array([[True, True], [False, False]])) == 1.0
    with pytest.raises(RasterError):
        mae(pred, gt, mask=np.zeros((2, 2), bool))
    with pytest.raises(RasterError):
        mae(pred, HeightMap(np.zeros((3, 2))))


heights = arrays(np.float64, (5, 4), elements=st.floats(0, 50))


@settings(max_examples=60, deadline=None)
@given(heights, heights, heights)
def test_mae_triangle(a, b, c):
    ha, hb, hc = HeightMap(a), HeightMap(b), HeightMap(c)
    assert mae(ha, hc) <= mae(ha, hb) + mae(hb, hc) + 1e-9
    assert mae(ha, hb) >= 0


def test_pooled_iou():
    a = np.zeros((2, 2), bool)
    a[0, 0] = True
    b = np.ones((2, 2), bool)
    pairs = [(BinaryMask(a), BinaryMask(a)), (BinaryMask(a), BinaryMask(b))]
    assert pooled_iou(pairs) == pytest.approx(2 / 5)


# -- aggregation ------------------------------------------------------------------

def test_aggregate_single():
    r = aggregate([EvalRecord("a", 0.3, 1.2)], "HM")
    assert (r.miou, r.mae_m, r.method_label) == (0.3, 1.2, "HM")


def test_aggregate_means():
    assert aggregate([EvalRecord("a", 0.4), EvalRecord("b", 0.6)], "x").miou == pytest.approx(0.5)


def test_aggregate_mixed_presence():
    recs = [EvalRecord("a", 0.2, 1.0), EvalRecord("b", 0.5, None), EvalRecord("c", 0.8, 2.0)]
    r = aggregate(recs, "x")
    assert r.miou == pytest.approx((0.2 + 0.5 + 0.8) / 3)
    assert r.mae_m == pytest.approx((1.0 + 2.0) / 2)


def test_aggregate_errors():
    with pytest.raises(ValueError):
        aggregate([], "x")
    with pytest.raises(ValueError):
        EvalRecord("a")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.randoms(use_true_random=False))
def test_aggregate_permutation_invariant(vals, rnd):
    recs = [EvalRecord(f"t{i}", v, v * 3) for i, v in enumerate(vals)]
    shuffled = list(recs)
    rnd.shuffle(shuffled)
    a, b = aggregate(recs, "x"), aggregate(shuffled, "x")
    assert (a.miou, a.mae_m) == (b.miou, b.mae_m)


def test_report_json_round_trip():
    r = aggregate([EvalRecord("a", 0.2, 1.0), EvalRecord("b", None, 2.0)], "FDA")
    d = json.loads(json.dumps(r.to_dict()))
    assert set(d) >= {"method", "miou", "mae_m", "records"}
    assert EvalReport.from_dict(d) == r


# -- tables ---------------------------------------------------------------------------

def test_zero_shot_table_golden():
    assert render_table(reports_for(ZERO_SHOT)) == (DATA / "zero_shot_golden.md").read_text()


def test_finetuned_table_golden():
    assert render_table(reports_for(FINETUNED)) == (DATA / "finetuned_golden.md").read_text()


def test_single_report_gets_both_marks():
    text = render_table([aggregate([EvalRecord("a", 0.5, 0.7)], "HM")])
    assert text.splitlines()[-1] == "| Target | HM | **0.5000** | **0.7000** |"


def test_two_reports_bold_and_underline():
    reps = [aggregate([EvalRecord("a", 0.51, 0.9)], "PDA"), aggregate([EvalRecord("a", 0.48, 0.6)], "HM")]
    lines = render_table(reps).splitlines()
    assert lines[2] == "| Target | PDA | **0.5100** | <u>0.9000</u> |"
    assert lines[3] == "| Target | HM | <u>0.4800</u> | **0.6000** |"


def test_csv_round_trip(rng):
    reps = [aggregate([EvalRecord("a", float(rng.random()), float(rng.random() * 3))], f"M{i}") for i in range(5)]
    rows = list(csv.DictReader(io.StringIO(render_table(reps, "csv"))))
    assert [r["Method"] for r in rows] == [r.method_label for r in reps]
    for row, rep in zip(rows, reps):
        assert float(row["mIoU"]) == round(rep.miou, 4)
        assert float(row["MAE(m)"]) == round(rep.mae_m, 4)


def test_json_table():
    reps = reports_for(ZERO_SHOT[:2])
    parsed = json.loads(render_table(reps, "json"))
    assert [p["method"] for p in parsed] == ["NA", "None"]


def test_missing_metric_rendered_as_dash():
    reps = [aggregate([EvalRecord("a", 0.4)], "HM"), aggregate([EvalRecord("a", None, 1.0)], "FDA")]
    lines = render_table(reps).splitlines()
    assert lines[2] == "| Target | HM | **0.4000** | - |"
    assert lines[3] == "| Target | FDA | - | **1.0000** |"


def test_unknown_format():
    with pytest.raises(ValueError):
        render_table(reports_for(ZERO_SHOT), "html")
