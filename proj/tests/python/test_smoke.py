"""Smoke tests for the python bindings."""

import json
import math

import pytest

import tapkit


def test_tiou():
    assert tapkit.tiou(0.0, 10.0, 5.0, 15.0) == pytest.approx(5.0 / 15.0)
    a = tapkit.TemporalSegment(2.0, 4.0)
    assert tapkit.tiou(a, a) == 1.0
    assert a.length() == 2.0


def test_segment_validation():
    with pytest.raises(tapkit.TapError):
        tapkit.TemporalSegment(5.0, 5.0)


def test_average_pool():
    assert tapkit.average_pool([[1.0, 2.0], [3.0, 4.0]]) == [2.0, 3.0]
    with pytest.raises(tapkit.TapError):
        tapkit.average_pool([])


def test_count_sketch_linearity():
    x = [1.0, -2.0, 0.5, 3.0]
    y = [0.25, 1.0, -1.0, 2.0]
    sx = tapkit.count_sketch(x, 8, seed=3)
    sy = tapkit.count_sketch(y, 8, seed=3)
    sxy = tapkit.count_sketch([a + b for a, b in zip(x, y)], 8, seed=3)
    for k in range(8):
        assert sxy[k] == pytest.approx(sx[k] + sy[k])


def test_compact_bilinear_pool_normalized():
    values = [0.5, -1.0, 2.0, 0.25]
    pooled = tapkit.compact_bilinear_pool(
        values, width=1, height=1, channels=4, sketch_dim=16, seed=2
    )
    norm = math.sqrt(sum(v * v for v in pooled))
    assert norm == pytest.approx(1.0)


def test_watershed_tag_two_basins():
    fused = [0, 0, 0.9, 0.9, 0.9, 0, 0, 0.8, 0.8, 0]
    proposals = tapkit.watershed_tag(fused, 1.0)
    spans = {(p.segment.start, p.segment.end) for p in proposals}
    assert (2.0, 5.0) in spans
    assert (7.0, 9.0) in spans


def test_fuse_actionness():
    fused = tapkit.fuse_actionness([0.2], [0.4], [0.6])
    assert fused[0] == pytest.approx(0.4)


def test_nms():
    proposals = [
        tapkit.Proposal("v", 1.0, 3.0, 0.9),
        tapkit.Proposal("v", 1.0, 3.0, 0.6),
        tapkit.Proposal("v", 8.0, 9.0, 0.5),
    ]
    kept = tapkit.nms(proposals, 0.8)
    assert len(kept) == 2
    assert kept[0].score == 0.9


def test_box_iou():
    assert tapkit.box_iou([0, 0, 1, 1], [0.5, 0, 1, 1]) == pytest.approx(0.5)


def test_lexical_similarity_and_consensus():
    assert tapkit.lexical_similarity("a man runs", "a man jumps") == pytest.approx(
        7.0 / 12.0
    )
    caption, score = tapkit.consensus_rerank(
        ["a man runs", "a man runs", "the dog barks"]
    )
    assert caption == "a man runs"
    assert score == pytest.approx(0.5)  # mean of one duplicate and one miss


def test_encode_decode_roundtrip():
    dc, dl = tapkit.encode_deltas(10.0, 10.0, 2.0, 22.0)
    assert dc == pytest.approx(0.2)
    assert dl == pytest.approx(math.log(2.0))
    decoded = tapkit.decode_deltas(10.0, 10.0, dc, dl, 100.0)
    assert decoded[0] == pytest.approx(2.0)
    assert decoded[1] == pytest.approx(22.0)


def test_file_evaluation(tmp_path):
    gt = {
        "database": {
            "v1": {
                "duration": 20.0,
                "annotations": [{"segment": [3.0, 9.0], "label": "run"}],
            }
        }
    }
    proposals = {"results": {"v1": [{"segment": [3.0, 9.0], "score": 1.0}]}}
    gt_path = tmp_path / "gt.json"
    prop_path = tmp_path / "p.json"
    gt_path.write_text(json.dumps(gt))
    prop_path.write_text(json.dumps(proposals))

    loaded_gt = tapkit.load_ground_truth(str(gt_path))
    assert loaded_gt.video_ids() == ["v1"]
    loaded = tapkit.load_proposals(str(prop_path))
    curve = tapkit.evaluate_proposals(loaded, loaded_gt)
    assert curve.auc == 1.0
    assert len(curve.ar_values) == 100
