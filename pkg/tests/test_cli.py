import csv
import json
import math

import numpy as np
import pytest

from smalltarget import cli, experiments, io
from smalltarget.lptc import CalibrationError
from smalltarget.pipeline import Detector, ModelConfig
from smalltarget.synthgen import SceneSpec, generate, generate_calibration, initial_video_spec


def _small_scene(tmp_path, **kw):
    spec = initial_video_spec(width=80, height=60, duration=200, target_start_position=(75.0, 30.0), **kw)
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(spec.to_dict()))
    return path


@pytest.fixture
def fast_calibration(monkeypatch):
    """Shrink the calibration stimulus so the real calibration path runs in seconds."""
    def small(v, d=0.0, **kw):
        kw.update(size=(40, 40), duration=160.0)
        return generate_calibration(v, d, **kw)

    monkeypatch.setattr(experiments, "generate_calibration", small)


def test_generate_writes_frames_and_truth(tmp_path):
    scene = _small_scene(tmp_path)
    assert cli.main(["generate", "--scene", str(scene), "--out", str(tmp_path / "g")]) == 0
    frames = io.list_frames(tmp_path / "g" / "frames")
    assert len(frames) == 200
    truth = io.read_truth_csv(tmp_path / "g" / "truth.csv")
    assert truth[0] == [(75.0, 30.0)]
    assert json.loads((tmp_path / "g" / "scene.json").read_text())["width"] == 80


def test_run_on_frame_directory_with_truth(tmp_path):
    scene = _small_scene(tmp_path)
    cli.main(["generate", "--scene", str(scene), "--out", str(tmp_path / "g")])
    out = tmp_path / "r"
    rc = cli.main(["run", "--input", str(tmp_path / "g" / "frames"), "--truth", str(tmp_path / "g" / "truth.csv"),
                   "--feedback", "time-delay", "--out", str(out), "--roc-steps", "20"])
    assert rc == 0
    rows = list(csv.reader(open(out / "roc.csv")))
    assert rows[0] == ["threshold", "detection_rate", "false_alarm_rate"] and len(rows) == 21
    assert (out / "detections.csv").read_text().startswith("frame,x,y,score\n")


def test_frame_directory_run_matches_library(tmp_path):
    scene = _small_scene(tmp_path)
    cli.main(["generate", "--scene", str(scene), "--out", str(tmp_path / "g")])
    cli.main(["run", "--input", str(tmp_path / "g" / "frames"), "--feedback", "none", "--out", str(tmp_path / "b")])
    got = io.read_detections_csv(tmp_path / "b" / "detections.csv")
    # PGM frames are the synthetic frames rounded to 8 bits
    frames, _ = generate(SceneSpec.from_dict(json.loads(scene.read_text())))
    cands = experiments.run_detector(np.rint(frames), ModelConfig().with_mode("none"))
    top = max(c[2] for v in cands.values() for c in v)
    want = {f: [c for c in v if c[2] >= cli.DEFAULT_RELATIVE_THRESHOLD * top] for f, v in cands.items()}
    assert {f: v for f, v in want.items() if v} == got


def test_none_and_spatio_temporal_give_two_roc_files(tmp_path, fast_calibration):
    scene = _small_scene(tmp_path)
    tuning = tmp_path / "tuning.csv"
    for mode in ("none", "spatio-temporal"):
        rc = cli.main(["run", "--scene", str(scene), "--feedback", mode, "--betas", "2,6,10", "--tuning", str(tuning),
                       "--out", str(tmp_path / mode)])
        assert rc == 0
    assert tuning.exists()
    a = (tmp_path / "none" / "roc.csv").read_bytes()
    b = (tmp_path / "spatio-temporal" / "roc.csv").read_bytes()
    assert a != b


def test_dumped_config_reruns_identically(tmp_path, capsys):
    scene = _small_scene(tmp_path)
    assert cli.main(["run", "--feedback", "time-delay", "--dump-config"]) == 0
    cfg = tmp_path / "cfg.json"
    cfg.write_text(capsys.readouterr().out)
    cli.main(["run", "--scene", str(scene), "--feedback", "time-delay", "--out", str(tmp_path / "a")])
    cli.main(["run", "--scene", str(scene), "--config", str(cfg), "--out", str(tmp_path / "b")])
    for name in ("detections.csv", "roc.csv", "config.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_dump_layers_writes_rescaled_maps(tmp_path):
    spec = initial_video_spec(width=40, height=30, duration=5, target_start_position=(30.0, 15.0))
    scene = tmp_path / "s.json"
    scene.write_text(json.dumps(spec.to_dict()))
    out = tmp_path / "o"
    assert cli.main(["run", "--scene", str(scene), "--feedback", "none", "--dump-layers", "--out", str(out)]) == 0
    for name in cli.LAYER_NAMES:
        assert len(io.list_frames(out / "layers" / name)) == 5
    rows = list(csv.DictReader(open(out / "layers" / "P" / "scale.csv")))
    assert len(rows) == 5
    # pixel values map back to the photoreceptor output through offset + scale * pixel
    img = io.read_pgm(out / "layers" / "P" / io.frame_name(0))
    lo, scale = float(rows[0]["offset"]), float(rows[0]["scale"])
    assert lo + scale * img.max() > lo


def test_missing_input_directory_exits_2(tmp_path, capsys):
    assert cli.main(["run", "--input", str(tmp_path / "nope"), "--feedback", "none", "--out", str(tmp_path / "o")]) == cli.EXIT_INPUT
    assert "error" in capsys.readouterr().err


def test_color_input_exits_2(tmp_path):
    d = tmp_path / "frames"
    d.mkdir()
    (d / "frame_000000.ppm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    (d / "frame_000000.pgm").write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    assert cli.main(["run", "--input", str(d), "--feedback", "none", "--out", str(tmp_path / "o")]) == cli.EXIT_INPUT


def test_input_source_must_be_unique(tmp_path):
    assert cli.main(["run", "--feedback", "none", "--out", str(tmp_path / "o")]) == cli.EXIT_INPUT


def test_unknown_experiment_exits_2(tmp_path):
    assert cli.main(["experiment", "not-a-sweep", "--out", str(tmp_path / "o")]) == cli.EXIT_INPUT


def test_invalid_parameter_exits_3(tmp_path):
    scene = _small_scene(tmp_path)
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"stmd": {"alpha": -1.0}}))
    assert cli.main(["run", "--scene", str(scene), "--config", str(cfg), "--feedback", "none",
                    "--out", str(tmp_path / "o")]) == cli.EXIT_INVARIANT


def test_calibration_failure_exits_4(tmp_path, monkeypatch):
    def boom(config):
        raise CalibrationError("argmax not increasing between beta=2 and beta=4")

    monkeypatch.setattr(cli, "calibrate_for", boom)
    assert cli.main(["calibrate", "--out", str(tmp_path)]) == cli.EXIT_CALIBRATION


def test_calibrate_is_byte_identical_on_rerun(tmp_path, fast_calibration):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["calibrate", "--betas", "2,6", "--tuning", str(a)]) == 0
    assert cli.main(["calibrate", "--betas", "2,6", "--tuning", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_single_beta_calibration_is_legal(tmp_path, fast_calibration):
    path = tmp_path / "one.csv"
    assert cli.main(["calibrate", "--betas", "4", "--tuning", str(path)]) == 0
    rows = list(csv.DictReader(open(path)))
    assert {r["beta"] for r in rows} == {"4"} and len(rows) == 40


def test_mismatched_tuning_table_exits_2(tmp_path, fast_calibration):
    path = tmp_path / "t.csv"
    cli.main(["calibrate", "--betas", "4", "--tuning", str(path)])
    scene = _small_scene(tmp_path)
    assert cli.main(["run", "--scene", str(scene), "--tuning", str(path), "--out", str(tmp_path / "o")]) == cli.EXIT_INPUT


def test_experiment_subset_writes_point_and_summary(tmp_path):
    out = tmp_path / "e"
    rc = cli.main(["experiment", "luminance-sweep", "--points", "luminance-0", "--feedback-modes", "none",
                   "--roc-steps", "10", "--out", str(out)])
    assert rc == 0
    rows = list(csv.reader(open(out / "summary.csv")))
    assert rows[0] == ["point", "mode", "dr_at_fa5"] and rows[1][:2] == ["luminance-0", "none"]
    assert len(list(csv.reader(open(out / "luminance-0.csv")))) == 11


def test_experiment_catalogue():
    sizes = [p.label for p in experiments.EXPERIMENTS["size-sweep"]]
    assert sizes[0] == "size-1x1" and sizes[-1] == "size-25x25"
    lums = [p.label for p in experiments.EXPERIMENTS["luminance-sweep"]]
    assert lums[0] == "luminance-0" and lums[-1] == "luminance-100"
    abl = experiments.ablation_scene(0)
    assert abl.bg_velocity == 450.0 and abl.targets[0].velocity == 350.0


@pytest.mark.slow
def test_initial_video_detections_near_truth(tmp_path, tuning_file):
    # [DERIVED] every scored frame has a detection within 5 px of the target
    spec_path = tmp_path / "scene.json"
    spec_path.write_text(json.dumps(initial_video_spec().to_dict()))
    out = tmp_path / "run"
    assert cli.main(["run", "--scene", str(spec_path), "--tuning", str(tuning_file), "--out", str(out)]) == 0
    dets = io.read_detections_csv(out / "detections.csv")
    from smalltarget.experiments import truth_by_frame
    from smalltarget.synthgen import generate

    _, rows = generate(initial_video_spec())
    truth = truth_by_frame(rows)
    warm = Detector((250, 250), ModelConfig().with_mode("none")).warmup_frames
    for f in range(warm, len(truth)):
        tx, ty = truth[f][0]
        assert any(math.hypot(x - tx, y - ty) <= 5 for x, y, _ in dets.get(f, [])), f
