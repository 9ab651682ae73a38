import numpy as np
import pytest

from eru_fusion.data import ModelOutput, SceneRecord, ScoredPrediction
from eru_fusion.fusion import (
    Branch,
    FusionConfig,
    FusionError,
    MissingModelError,
    dadm,
    fuse_scene,
    strategy_a_distance,
    strategy_adaptive_depth,
    strategy_b_overlap,
    strategy_c_overlap_pct,
    strategy_confidence,
    trace_to_dict,
)
from eru_fusion.geometry import BoundingBox, Point2, PointingRay
from randomized import random_case

B = BoundingBox


def out(*pairs):
    return ModelOutput(tuple(ScoredPrediction(B(*box), c) for box, c in pairs))


def ray(ex, ey, fx, fy):
    return PointingRay(Point2(ex, ey), Point2(fx, fy))


DOWN_COLUMN = ray(4.5, 5, 4.5, 4)  # points up through x = 4.5


def test_iou_gate_identity():
    aug = out(([0, 0, 1, 1], 0.3))
    depth = out(([0, 0, 1, 1], 0.99), ([5, 5, 6, 6], 0.9))
    t = dadm(aug, depth, DOWN_COLUMN)
    assert t.branch is Branch.IOU_GATE
    assert t.chosen_source == "b0_aug"
    assert t.iou_top1 == 1.0


def test_distance_branch_picks_depth():
    aug = out(([0, 0, 1, 1], 0.9), ([8, 0, 9, 1], 0.5))
    depth = out(([4, 0, 5, 1], 0.8), ([8, 0, 9, 1], 0.5))
    t = dadm(aug, depth, DOWN_COLUMN)
    assert t.branch is Branch.DISTANCE
    assert t.chosen_box == B(4, 0, 5, 1)
    assert [c.source for c in t.candidates] == ["b0_aug", "b0_depth"]
    assert [c.distance for c in t.candidates] == [4.0, 0.0]


def test_second_prediction_included_and_tie_broken_by_priority():
    depth = out(([4, 0, 5, 1], 0.8), ([8, 0, 9, 1], 0.5))
    aug = out(([0, 0, 1, 1], 0.9), ([4.2, 0, 5.2, 1], 0.7))
    t = dadm(aug, depth, DOWN_COLUMN)
    assert [c.source for c in t.candidates] == ["b0_aug", "b0_depth", "b1_aug"]
    assert t.candidates[2].distance == pytest.approx(0.2)
    assert t.chosen_source == "b0_depth"

    aug = out(([0, 0, 1, 1], 0.9), ([4, 0, 5, 1], 0.7))
    t = dadm(aug, depth, DOWN_COLUMN)
    assert t.candidates[1].distance == t.candidates[2].distance == 0.0
    assert t.chosen_source == "b0_depth"


def test_t2_threshold_is_inclusive():
    aug = out(([0, 0, 1, 1], 0.9), ([4, 3, 5, 4], 0.6))
    depth = out(([8, 0, 9, 1], 0.8))
    t = dadm(aug, depth, DOWN_COLUMN)
    assert t.chosen_source == "b1_aug"


def test_second_depth_prediction_can_win():
    aug = out(([0, 0, 1, 1], 0.9), ([0, 5, 1, 6], 0.7))
    depth = out(([8, 0, 9, 1], 0.8), ([4, 1, 5, 2], 0.75))
    assert dadm(aug, depth, DOWN_COLUMN).chosen_source == "b1_depth"


@pytest.mark.parametrize("r, warning", [(None, "missing_ray"), (ray(2, 2, 2, 2), "degenerate_ray")])
def test_missing_or_degenerate_ray_falls_back_to_aug(r, warning):
    aug = out(([0, 0, 1, 1], 0.9))
    depth = out(([4, 0, 5, 1], 0.8))
    for rule in (dadm, strategy_a_distance):
        t = rule(aug, depth, r)
        assert t.branch is Branch.NO_RAY
        assert t.chosen_source == "b0_aug"
        assert t.warnings == (warning,)


def test_empty_output_rejected():
    with pytest.raises(ValueError):
        ModelOutput(())


def test_strategy_a():
    aug = out(([0, 0, 1, 1], 0.9), ([4, 0, 5, 1], 0.85))
    depth = out(([4, 0, 5, 1], 0.8))
    assert strategy_a_distance(aug, depth, DOWN_COLUMN).chosen_source == "b0_depth"
    same = out(([2, 2, 3, 3], 0.9))
    assert strategy_a_distance(same, same, DOWN_COLUMN).chosen_source == "b0_aug"
    # b1 never enters, even when it sits on the ray
    t = strategy_a_distance(out(([0, 0, 1, 1], 0.9), ([4, 1, 5, 2], 0.89)), out(([8, 0, 9, 1], 0.8)), DOWN_COLUMN)
    assert {c.source for c in t.candidates} == {"b0_aug", "b0_depth"}


COLUMN_RAY = ray(4.5, -1, 4.5, 0)  # pixels (4, 0..9) on a 10x10 image
STRAIGHT = FusionConfig(raster_half_angle_deg=0.0)


def test_strategy_b():
    aug = out(([4, 2, 7, 6], 0.5))
    depth = out(([0, 0, 2, 9], 0.9))
    t = strategy_b_overlap(aug, depth, COLUMN_RAY, STRAIGHT, (10, 10))
    assert [c.score for c in t.candidates] == [4.0, 0.0]
    assert t.chosen_source == "b0_aug"

    t = strategy_b_overlap(out(([0, 0, 1, 1], 0.5)), out(([8, 8, 9, 9], 0.9)), COLUMN_RAY, STRAIGHT, (10, 10))
    assert t.chosen_source == "b0_aug"

    t = strategy_b_overlap(aug, out(([0, 0, 10, 10], 0.9)), COLUMN_RAY, STRAIGHT, (10, 10))
    assert t.candidates[1].score == 10.0
    assert t.chosen_source == "b0_depth"


def test_strategy_c():
    t = strategy_c_overlap_pct(out(([4, 2, 7, 6], 0.5)), out(([0, 0, 2, 9], 0.9)), COLUMN_RAY, STRAIGHT, (10, 10))
    assert [c.score for c in t.candidates] == [4 / 12, 0.0]
    assert t.chosen_source == "b0_aug"

    # normalisation reverses B's preference
    tiny, huge = out(([4, 2, 5, 3], 0.5)), out(([0, 0, 10, 10], 0.9))
    assert strategy_b_overlap(huge, tiny, COLUMN_RAY, STRAIGHT, (10, 10)).chosen_source == "b0_aug"
    t = strategy_c_overlap_pct(huge, tiny, COLUMN_RAY, STRAIGHT, (10, 10))
    assert [c.score for c in t.candidates] == [0.1, 1.0]
    assert t.chosen_source == "b0_depth"

    t = strategy_c_overlap_pct(out(([0, 0, 1, 1], 0.5)), out(([8, 8, 9, 9], 0.9)), COLUMN_RAY, STRAIGHT, (10, 10))
    assert t.chosen_source == "b0_aug"


def test_overlap_strategies_need_image_size():
    with pytest.raises(FusionError):
        strategy_b_overlap(out(([0, 0, 1, 1], 0.5)), out(([2, 2, 3, 3], 0.5)), COLUMN_RAY)


@pytest.mark.parametrize("c_aug, c_depth, winner", [(0.9, 0.8, "b0_aug"), (0.5, 0.8, "b0_depth"), (0.7, 0.7, "b0_aug")])
def test_strategy_confidence(c_aug, c_depth, winner):
    t = strategy_confidence(out(([0, 0, 1, 1], c_aug)), out(([4, 0, 5, 1], c_depth)))
    assert t.chosen_source == winner


@pytest.mark.parametrize(
    "aug_c, depth_c, winner",
    [((0.9, 0.2), (0.8, 0.7), "b0_aug"), ((0.6, 0.55), (0.9, 0.3), "b0_depth"), ((0.9, 0.5), (0.6, 0.2), "b0_aug")],
)
def test_strategy_adaptive(aug_c, depth_c, winner):
    aug = out(([0, 0, 1, 1], aug_c[0]), ([2, 2, 3, 3], aug_c[1]))
    depth = out(([4, 0, 5, 1], depth_c[0]), ([6, 6, 7, 7], depth_c[1]))
    assert strategy_adaptive_depth(aug, depth).chosen_source == winner


def test_adaptive_single_prediction_gap_is_top_confidence():
    t = strategy_adaptive_depth(out(([0, 0, 1, 1], 0.4)), out(([4, 0, 5, 1], 0.9), ([6, 6, 7, 7], 0.6)))
    assert [c.score for c in t.candidates] == pytest.approx([0.4, 0.3])
    assert t.chosen_source == "b0_aug"


def test_fuse_scene_and_missing_model():
    rec = SceneRecord(
        "s", 10, 10, "x", B(4, 0, 5, 1),
        outputs={"aug": out(([0, 0, 1, 1], 0.9)), "depth": out(([4, 0, 5, 1], 0.8))},
        eye=Point2(4.5, 5), fingertip=Point2(4.5, 4),
    )
    assert fuse_scene(rec, "dadm").chosen_box == B(4, 0, 5, 1)
    renamed = FusionConfig(aug_model_name="depth", depth_model_name="aug")
    assert fuse_scene(rec, "conf", renamed).chosen_box == B(0, 0, 1, 1)
    with pytest.raises(MissingModelError, match="'m_x'"):
        fuse_scene(rec, "dadm", FusionConfig(depth_model_name="m_x"))
    with pytest.raises(FusionError, match="unknown strategy"):
        fuse_scene(rec, "zzz")
    d = trace_to_dict("s", fuse_scene(rec, "dadm"))
    assert d["branch"] == "DISTANCE" and d["chosen_source"] == "b0_depth"
    assert [c["distance"] for c in d["candidates"]] == [4.0, 0.0]


def test_random_closed_world_and_determinism():
    rng = np.random.default_rng(3)
    for _ in range(500):
        aug, depth, r = random_case(rng)
        pool = {p.box for p in aug.predictions[:2]} | {p.box for p in depth.predictions[:2]}
        for rule in (dadm, strategy_a_distance):
            t1, t2 = rule(aug, depth, r), rule(aug, depth, r)
            assert t1 == t2
            assert t1.chosen_box in pool
            assert t1.chosen_box in {c.box for c in t1.candidates}
        for rule in (strategy_b_overlap, strategy_c_overlap_pct):
            t = rule(aug, depth, r, image_size=(100, 100))
            assert t.chosen_box in pool


def test_t1_zero_always_gates():
    rng = np.random.default_rng(4)
    cfg = FusionConfig(t1_iou=0.0)
    for _ in range(300):
        aug, depth, r = random_case(rng)
        t = dadm(aug, depth, r, cfg)
        assert t.branch is Branch.IOU_GATE and t.chosen_box == aug[0].box


def test_no_gate_no_second_prediction_equals_strategy_a():
    rng = np.random.default_rng(5)
    bare = FusionConfig(t1_iou=1.01, t2_conf=1.01)
    no_second = FusionConfig(t2_conf=1.01)
    for _ in range(2000):
        aug, depth, r = random_case(rng)
        a = strategy_a_distance(aug, depth, r).chosen_box
        assert dadm(aug, depth, r, bare).chosen_box == a
        t = dadm(aug, depth, r, no_second)
        if t.branch is not Branch.IOU_GATE:
            assert t.chosen_box == a
