"""The nine acceptance criteria, each at its stated size and tolerance."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from eru_fusion.augment import EXPANSION_FACTOR, CountMismatchError, expand_dataset, parse_response
from eru_fusion.cli import main
from eru_fusion.data import (
    DepthMap,
    ModelOutput,
    SceneRecord,
    ScoredPrediction,
    read_depth,
    read_scenes,
    write_depth,
    write_scenes,
)
from eru_fusion.fusion import Branch, FusionConfig, dadm, strategy_a_distance
from eru_fusion.geometry import BoundingBox, Point2, PointingRay, giou, iou, rasterize_ray
from eru_fusion.metrics import evaluate
from eru_fusion.synth import SynthConfig, generate, single_model_baseline
from oracles import brute_force_raster, naive_dadm
from randomized import as_tuples, random_box, random_case, random_record

FIXTURES = Path(__file__).parent / "fixtures"
N_RANDOM = 10_000


def ac(number, title):
    return pytest.mark.acceptance(number, title)


def _ray_tuples(r):
    if r is None:
        return None, None
    return (r.eye.x, r.eye.y), (r.fingertip.x, r.fingertip.y)


@ac(1, "DADM agrees with the naive oracle on 10,000 random inputs in < 10 s")
def test_ac1_oracle_equivalence():
    rng = np.random.default_rng(20240601)
    cases = [random_case(rng) for _ in range(N_RANDOM)]
    start = time.perf_counter()
    mismatches = 0
    for aug, depth, r in cases:
        got = dadm(aug, depth, r).chosen_box.as_list()
        expected = naive_dadm(as_tuples(aug), as_tuples(depth), *_ray_tuples(r))
        mismatches += tuple(got) != tuple(expected)
    elapsed = time.perf_counter() - start
    assert mismatches == 0
    assert elapsed < 10.0


B = BoundingBox
UP = PointingRay(Point2(4.5, 5), Point2(4.5, 4))


def _out(*pairs):
    return ModelOutput(tuple(ScoredPrediction(B(*b), c) for b, c in pairs))


@ac(2, "Algorithm hand cases")
def test_ac2_iou_gate_identity():
    t = dadm(_out(([0, 0, 1, 1], 0.3)), _out(([0, 0, 1, 1], 0.99), ([5, 5, 6, 6], 0.9)), UP)
    assert (t.branch, t.chosen_source, t.chosen_box) == (Branch.IOU_GATE, "b0_aug", B(0, 0, 1, 1))


@ac(2, "Algorithm hand cases")
def test_ac2_distance_branch_picks_depth():
    t = dadm(_out(([0, 0, 1, 1], 0.9), ([8, 0, 9, 1], 0.5)), _out(([4, 0, 5, 1], 0.8), ([8, 0, 9, 1], 0.5)), UP)
    assert (t.branch, t.chosen_source, t.chosen_box) == (Branch.DISTANCE, "b0_depth", B(4, 0, 5, 1))


@ac(2, "Algorithm hand cases")
def test_ac2_t2_inclusion_and_tie_break():
    aug = _out(([0, 0, 1, 1], 0.9), ([4, 0, 5, 1], 0.6))
    depth = _out(([4, 0, 5, 1], 0.8), ([8, 0, 9, 1], 0.5))
    t = dadm(aug, depth, UP)
    assert [c.source for c in t.candidates] == ["b0_aug", "b0_depth", "b1_aug"]
    assert t.candidates[1].distance == t.candidates[2].distance == 0.0
    assert t.chosen_source == "b0_depth"


@ac(3, "IoU/GIoU properties on 10,000 pairs; raster equals brute force on 200 rays over 64x64")
def test_ac3_geometry():
    rng = np.random.default_rng(7)
    for _ in range(N_RANDOM):
        a, b = random_box(rng), random_box(rng)
        v, g = iou(a, b), giou(a, b)
        assert v == iou(b, a)
        assert math.isclose(g, giou(b, a), abs_tol=1e-12)
        assert 0.0 <= v <= 1.0
        assert g <= v + 1e-12
        assert giou(a, a) == 1.0
    for k in range(200):
        eye = rng.uniform(-16, 80, 2)
        tip = eye + rng.normal(0, 8, 2)
        angle = float([0.0, 2.0, 5.0, 15.0, 45.0][k % 5])
        r = PointingRay(Point2(*map(float, eye)), Point2(*map(float, tip)))
        assert rasterize_ray(r, 64, 64, angle) == brute_force_raster(tuple(eye), tuple(tip), 64, 64, angle)


@ac(4, "Perfect -> 100%, disjoint -> 0%, monotone over 1,000 random reports")
def test_ac4_metric_harness():
    recs = generate(SynthConfig(60, 11))
    perfect = evaluate(recs, lambda r: r.gt_box)
    assert all(v == 1.0 for row in perfect.table() for v in row)
    disjoint = evaluate(recs, _far_corner)
    assert all(v == 0.0 for row in disjoint.table() for v in row)

    rng = np.random.default_rng(99)
    for _ in range(1000):
        n = int(rng.integers(1, 25))
        boxes = {}
        for i in range(n):
            gt = random_box(rng)
            boxes[f"s{i}"] = (gt, random_box(rng) if rng.random() < 0.4 else _perturb(rng, gt))
        scenes = [SceneRecord(k, 100, 100, "x", gt) for k, (gt, _) in boxes.items()]
        rep = evaluate(scenes, lambda r: boxes[r.id][1])
        for bucket in ("all", "S", "M", "L"):
            accs = [rep.accuracy(t, bucket) for t in rep.thresholds]
            assert accs[0] >= accs[1] >= accs[2]


def _far_corner(rec):
    """A 1x1 box in an image corner the ground truth does not touch."""
    g = rec.gt_box
    if g.x_min >= 1 and g.y_min >= 1:
        return B(0, 0, 1, 1)
    return B(rec.image_width - 1, rec.image_height - 1, rec.image_width, rec.image_height)


def _perturb(rng, b):
    d = rng.normal(0, 0.2, 4) * np.array([b.width, b.height, b.width, b.height])
    x0, y0 = max(0.0, b.x_min + d[0]), max(0.0, b.y_min + d[1])
    return B(float(x0), float(y0), float(max(x0 + 0.5, b.x_max + d[2])), float(max(y0 + 0.5, b.y_max + d[3])))


@ac(5, "Seed-42 synthetic set: dadm@0.25 >= best single model + 5 points, golden values, < 5 s")
def test_ac5_fusion_dominance():
    golden = json.loads((FIXTURES / "synth_seed42_golden.json").read_text())
    start = time.perf_counter()
    recs = generate(SynthConfig(1000, 42))
    fused = evaluate(recs, "dadm")
    aug = single_model_baseline(recs, "aug")
    depth = single_model_baseline(recs, "depth")
    elapsed = time.perf_counter() - start
    acc = {k: 100.0 * r.accuracy(0.25) for k, r in (("dadm", fused), ("aug", aug), ("depth", depth))}
    assert acc["dadm"] >= max(acc["aug"], acc["depth"]) + 5.0
    assert [c["all"] for c in fused.correct] == golden["correct"]["dadm"]
    assert [c["all"] for c in aug.correct] == golden["correct"]["only-aug"]
    assert [c["all"] for c in depth.correct] == golden["correct"]["only-depth"]
    assert evaluate(recs, "dadm").correct == fused.correct
    assert elapsed < 5.0


@ac(6, "T2 > 1 makes dadm equal strategy A on 10,000 inputs; T1 = 0 always returns b0_aug")
def test_ac6_degenerate_thresholds():
    rng = np.random.default_rng(6)
    no_second = FusionConfig(t2_conf=1.01)
    gate_all = FusionConfig(t1_iou=0.0)
    differ, differ_gated, gate_misses = 0, 0, 0
    for _ in range(N_RANDOM):
        aug, depth, r = random_case(rng)
        t = dadm(aug, depth, r, no_second)
        if t.chosen_box != strategy_a_distance(aug, depth, r).chosen_box:
            differ += 1
            differ_gated += t.branch is Branch.IOU_GATE
        gate_misses += dadm(aug, depth, r, gate_all).chosen_box != aug[0].box
    assert gate_misses == 0
    # Stated without touching T1: the IoU gate (default 0.9) still fires, and
    # strategy A has no gate, so near-identical top boxes can disagree.
    assert differ == 0, f"{differ}/{N_RANDOM} inputs differ, {differ_gated} of them via the IoU gate"


@ac(7, "Stub expansion of N records gives exactly 21*N; 19- and 21-line replies rejected")
def test_ac7_augmentation(tmp_path):
    for n in (0, 1, 7, 25):
        src = tmp_path / f"in{n}.jsonl"
        write_scenes(generate(SynthConfig(n, n)), src)
        res = expand_dataset(read_scenes(src))
        assert len(res.records) == EXPANSION_FACTOR * n == 21 * n
    for name, found in (("augment_19.txt", 19), ("augment_21.txt", 21)):
        with pytest.raises(CountMismatchError) as ei:
            parse_response((FIXTURES / name).read_text())
        assert ei.value.found == found


@ac(8, "JSONL round trip on 1,000 records; 2x2 PFM bit-exact with row flip")
def test_ac8_round_trips(tmp_path):
    rng = np.random.default_rng(8)
    recs = [random_record(rng, i) for i in range(1000)]
    p = tmp_path / "r.jsonl"
    write_scenes(recs, p)
    assert read_scenes(p) == recs
    q = tmp_path / "r2.jsonl"
    write_scenes(read_scenes(p), q)
    assert q.read_bytes() == p.read_bytes()

    pattern = np.array([[1.5, 2.25], [1e-7, 3.4028235e38]], dtype=np.float32)
    for little in (True, False):
        f = tmp_path / f"d{int(little)}.pfm"
        write_depth(DepthMap(2, 2, pattern), f, little_endian=little)
        # stored bottom row first
        stored = np.frombuffer(f.read_bytes()[-16:], dtype="<f4" if little else ">f4").reshape(2, 2)
        assert stored.tobytes() == np.flipud(pattern).astype(stored.dtype).tobytes()
        back = read_depth(f).values
        assert back.dtype == np.float32 and back.tobytes() == pattern.tobytes()


@ac(9, "synth -> buckets -> eval twice gives byte-identical reports; whole suite < 60 s")
def test_ac9_end_to_end(tmp_path):
    outputs = []
    for run in ("one", "two"):
        d = tmp_path / run
        d.mkdir()
        assert main(["synth", "--n", "300", "--seed", "42", "--out", str(d / "scenes.jsonl")]) == 0
        assert main(["buckets", str(d / "scenes.jsonl"), "--out", str(d / "bucketed.jsonl")]) == 0
        for fmt in ("markdown", "csv"):
            out = d / f"report.{fmt}"
            assert main(["eval", str(d / "bucketed.jsonl"), "--format", fmt, "--out", str(out)]) == 0
        outputs.append([(d / n).read_bytes() for n in ("scenes.jsonl", "bucketed.jsonl", "report.markdown", "report.csv")])
    assert outputs[0] == outputs[1]
    rows = outputs[0][3].decode().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["dadm", "a", "b", "c", "conf", "adaptive"]
