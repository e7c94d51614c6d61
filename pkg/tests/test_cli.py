import csv
import json

import numpy as np
import pytest
from PIL import Image

from hppseg import io, pipeline, subspace
from hppseg.cli import ksweep, main
from hppseg.core import N_COLORS, normalize_unit
from hppseg.evaluation import video_prf
from hppseg.patchmodel import (SelectionMask, build_training_set, design_matrix, evaluate_dense,
                               train_regression)
from hppseg.pipeline import STAGE_GROUPS, STAGE_MASKS, PipelineConfig
from hppseg.synthetic import moving_square


@pytest.fixture(scope="module")
def clip(tmp_path_factory):
    sv = moving_square(n_frames=8, seed=1)
    d = tmp_path_factory.mktemp("frames")
    io.write_frames(d, sv.video.frames)
    return d, sv


def _run(*argv):
    return main([str(a) for a in argv])


def test_segment_outputs(clip, tmp_path):
    frames, sv = clip
    out = tmp_path / "out"
    assert _run("segment", frames, "-o", out, "--threads", 1, "--debug-stages", "--trimap") == 0
    assert len(list((out / "masks").glob("*.png"))) == len(sv.video)
    assert sorted(p.name for p in (out / "stages").iterdir()) == sorted(STAGE_MASKS)
    tri = np.array(Image.open(out / "trimaps" / "0003.png"))
    assert set(np.unique(tri)) <= {0, 128, 255}
    boxes = json.loads((out / "boxes.json").read_text())
    assert [b["frame"] for b in boxes] == list(range(len(sv.video)))
    man = json.loads((out / "manifest.json").read_text())
    for key in ("config", "input", "output", "build", "stage_seconds_per_frame", "seed"):
        assert key in man
    assert set(man["stage_seconds_per_frame"]) == set(STAGE_GROUPS)


def test_segment_is_deterministic(clip, tmp_path):
    frames, _ = clip
    outs = []
    for i, threads in enumerate((1, 1, 2)):
        out = tmp_path / f"o{i}"
        assert _run("segment", frames, "-o", out, "--threads", threads) == 0
        outs.append(out)
    ref = outs[0]
    for other in outs[1:]:
        assert (ref / "boxes.json").read_bytes() == (other / "boxes.json").read_bytes()
        for p in sorted((ref / "masks").glob("*.png")):
            assert p.read_bytes() == (other / "masks" / p.name).read_bytes()


def test_mixed_sizes_rejected(tmp_path, capsys):
    Image.fromarray(np.zeros((10, 12, 3), np.uint8)).save(tmp_path / "0000.png")
    Image.fromarray(np.zeros((10, 12, 3), np.uint8)).save(tmp_path / "0001.png")
    Image.fromarray(np.zeros((11, 12, 3), np.uint8)).save(tmp_path / "0002.png")
    assert _run("segment", tmp_path, "-o", tmp_path / "out") != 0
    assert "0002.png" in capsys.readouterr().err


def test_config_file_and_flag_override(clip, tmp_path):
    frames, _ = clip
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 20, "lam": 5.0}))
    out = tmp_path / "out"
    assert _run("segment", frames, "-o", out, "--config", cfg, "--k", 30, "--threads", 1) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["k"] == 30 and man["config"]["lam"] == 5.0


def test_unknown_config_key(clip, tmp_path):
    frames, _ = clip
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kay": 20}))
    assert _run("segment", frames, "-o", tmp_path / "o", "--config", cfg) == 2


def test_bench_report(tmp_path):
    out = tmp_path / "bench.json"
    assert _run("bench", "--width", 80, "--height", 60, "--frames", 6, "--threads", 1,
                "-o", out) == 0
    rep = json.loads(out.read_text())
    assert set(rep["stages"]) == set(STAGE_GROUPS)
    assert rep["repeats"] >= 3 and len(rep["runs"]) == rep["repeats"]
    assert rep["total"] == pytest.approx(sum(rep["stages"].values()), rel=0.05)
    assert rep["unit"] == "seconds per frame" and rep["hardware"]


def test_bench_needs_three_repeats():
    with pytest.raises(SystemExit):
        main(["bench", "--repeats", "2"])


def test_ksweep_csv(tmp_path):
    out = tmp_path / "k.csv"
    assert _run("ksweep", "--k", "5,20", "--threads", 1, "-o", out) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["k", "f_measure", "sec_per_frame"]
    assert [int(r[0]) for r in rows[1:]] == [5, 20]


def _no_selection_f(sv, cfg):
    """Step 5 trained on every color with no selection step at all."""
    q = sv.video.quantized
    h, w = sv.video.shape
    s1 = pipeline.pixel_stage(q, pipeline.initial_cues(sv.video.gray, cfg), cfg)[1]
    p2 = subspace.project_masks(s1, cfg.n_mask_components, sigma=cfg.sigma2_frac * min(h, w))
    s2 = pipeline.pixel_stage(q, p2, cfg)[1]
    window = pipeline.patch_window(cfg, (h, w))
    D, s, _ = build_training_set(q, s2, cfg.stride, window, cfg.max_samples, cfg.seed)
    every = SelectionMask(np.full(N_COLORS, 1.0 / N_COLORS), np.ones(N_COLORS, np.int8),
                          N_COLORS, np.arange(N_COLORS))
    model = train_regression(design_matrix(D, every), s, cfg.lam, every)
    s3 = np.stack([evaluate_dense(f, model, window) for f in q])
    norm = np.stack([normalize_unit(m, cfg.clip_percentile) for m in s3])
    return video_prf(norm, sv.gt_masks)["f_measure"]


def test_ksweep_full_palette_matches_no_selection():
    sv = moving_square(n_frames=10, seed=4)
    cfg = PipelineConfig()
    (_, f_full, _), = ksweep([N_COLORS], cfg, threads=1, synthetic=sv)
    assert abs(f_full - _no_selection_f(sv, cfg)) <= 0.01


def test_ksweep_time_grows_with_k():
    sv = moving_square(n_frames=10, seed=4)
    rows = ksweep([2, 2, 60, 60], PipelineConfig(), threads=1, synthetic=sv)
    small = min(rows[0][2], rows[1][2])
    large = min(rows[2][2], rows[3][2])
    assert large >= 0.9 * small


def test_ksweep_rejects_bad_k():
    with pytest.raises(ValueError):
        ksweep([0])


def test_hpp_sim(tmp_path):
    out = tmp_path / "sim.json"
    assert _run("hpp-sim", "--scenarios", 200, "--seed", 3, "-o", out) == 0
    rep = json.loads(out.read_text())
    assert rep["holds_count"] == rep["scenarios"] == 200
    assert _run("hpp-sim", "--scenarios", 200, "--violate", "-o", out) == 0
    rep = json.loads(out.read_text())
    assert rep["holds_count"] < rep["scenarios"]


def test_eval_commands(tmp_path):
    gt = [{"frame": i, "x": 0, "y": 0, "w": 10, "h": 10} for i in range(4)]
    pred = [{"frame": i, "x": s, "y": 0, "w": 10, "h": 10} for i, s in enumerate([0, 1, 8, 9])]
    (tmp_path / "gt.json").write_text(json.dumps(gt))
    (tmp_path / "pred.json").write_text(json.dumps(pred))
    out = tmp_path / "r.json"
    assert _run("eval", "--pred-boxes", tmp_path / "pred.json", "--gt-boxes",
                tmp_path / "gt.json", "-o", out) == 0
    assert json.loads(out.read_text())["corloc"] == 50.0

    g = np.zeros((2, 6, 6))
    g[:, :3] = 1
    io.write_masks(tmp_path / "gm", g)
    io.write_masks(tmp_path / "pm", g * 0.9)
    assert _run("eval", "--metric", "prf", "--pred-masks", tmp_path / "pm", "--gt-masks",
                tmp_path / "gm", "-o", out) == 0
    assert json.loads(out.read_text())["f_measure"] == 1.0
    assert _run("eval", "--metric", "iou", "--pred-masks", tmp_path / "pm", "--gt-masks",
                tmp_path / "gm", "--threshold", 0.95, "-o", out) == 0
    assert json.loads(out.read_text())["iou"] == 0.0
