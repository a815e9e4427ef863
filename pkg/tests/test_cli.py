import csv
import json
import math

import numpy as np
import pytest

from retipulse import cli, imageio, pulse, segment, skeleton

SCENE = """
[scene]
width = 256
height = 256
background = 160
noise_sigma = 5
seed = 2

[vessel.1]
points = 30,70; 226,95
width = 9
intensity = 60

[vessel.2]
points = 30,190; 226,160
width = 7
intensity = 60
"""


def oblique(cy, phase):
    d = 85 * math.cos(math.radians(20)), 85 * math.sin(math.radians(20))
    return (f"points = {128 - d[0]:.3f},{cy - d[1]:.3f}; {128 + d[0]:.3f},{cy + d[1]:.3f}\n"
            f"width = 10\nintensity = 60\npulse_amplitude = 1.5\npulse_frequency = 1.2\n"
            f"pulse_phase = {phase}\n")


SEQUENCE = f"""
[scene]
width = 256
height = 256
background = 160
noise_sigma = 5
fps = 30
duration = 3
seed = 3

[vessel.1]
{oblique(75, 0.0)}
[vessel.2]
{oblique(185, math.pi)}
"""


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    (root / "scene.ini").write_text(SCENE)
    assert run("synth", root / "scene.ini", "-o", root / "out") == 0
    return root / "out"


@pytest.fixture(scope="module")
def image(synth_dir):
    return synth_dir / "images" / "01_synth.png"


# -- synth ------------------------------------------------------------------

def test_synth_layout(synth_dir):
    for name in ("images/01_synth.png", "1st_manual/01_manual1.png", "mask/01_synth_mask.png",
                 "truth.csv", "scene.ini", "manifest.json"):
        assert (synth_dir / name).is_file(), name
    assert b"\r" not in (synth_dir / "truth.csv").read_bytes()


def test_synth_sequence_frame_count(tmp_path):
    (tmp_path / "s.ini").write_text("[scene]\nfps = 30\nduration = 2\n\n[vessel.1]\n"
                                    "points = 40,128; 216,128\npulse_amplitude = 1\n")
    assert run("synth", tmp_path / "s.ini", "-o", tmp_path / "o") == 0
    frames = sorted((tmp_path / "o" / "frames").iterdir())
    assert [f.name for f in frames] == [f"frame_{k:04d}.png" for k in range(60)]
    rows = read_csv(tmp_path / "o" / "series_truth.csv")
    assert len(rows) == 60 and list(rows[0]) == ["frame_index", "time_s", "vessel_1_px"]


def test_synth_same_seed_identical(tmp_path):
    (tmp_path / "s.ini").write_text(SCENE)
    for out in ("a", "b"):
        assert run("synth", tmp_path / "s.ini", "-o", tmp_path / out, "--seed", 17) == 0
    a = (tmp_path / "a" / "images" / "01_synth.png").read_bytes()
    assert a == (tmp_path / "b" / "images" / "01_synth.png").read_bytes()
    assert run("synth", tmp_path / "s.ini", "-o", tmp_path / "c", "--seed", 18) == 0
    assert a != (tmp_path / "c" / "images" / "01_synth.png").read_bytes()


def test_synth_nyquist_guard(tmp_path, capsys):
    (tmp_path / "s.ini").write_text("[scene]\nfps = 30\nduration = 1\n\n[vessel.1]\n"
                                    "points = 40,128; 216,128\npulse_frequency = 16\n")
    assert run("synth", tmp_path / "s.ini", "-o", tmp_path / "o") == cli.EXIT_CONFIG
    assert "vessel.1.pulse_frequency" in capsys.readouterr().err


def test_synth_missing_scene(tmp_path):
    assert run("synth", tmp_path / "none.ini", "-o", tmp_path / "o") == cli.EXIT_IO


# -- segment ----------------------------------------------------------------

def test_segment_outputs_match_library(image, tmp_path):
    out = tmp_path / "seg"
    assert run("segment", image, "-o", out) == 0
    for name in ("vessel_mask.png", "fov_mask.png", "centerline_overlay.png", "segments.csv",
                 "manifest.json"):
        assert (out / name).is_file(), name
    assert not (out / "stages").exists()
    lib = segment.segment_vessels(imageio.read_rgb(image)).vessel_mask
    assert np.array_equal(imageio.read_mask(out / "vessel_mask.png"), lib)
    rows = read_csv(out / "segments.csv")
    paths = skeleton.extract_centerlines(lib).paths
    assert [int(r["length"]) for r in rows] == [len(p) for p in paths]


def test_segment_debug_stages(image, tmp_path):
    assert run("segment", image, "-o", tmp_path, "--debug") == 0
    names = sorted(p.name for p in (tmp_path / "stages").iterdir())
    assert names == ["1_original.png", "2_green.png", "3_clahe.png", "4_background_subtracted.png",
                     "5_threshold.png", "6_segmented.png"]


def test_segment_truncated_png(image, tmp_path, capsys):
    bad = tmp_path / "bad.png"
    bad.write_bytes(image.read_bytes()[:300])
    out = tmp_path / "out"
    assert run("segment", bad, "-o", out) == cli.EXIT_IO
    assert "bad.png" in capsys.readouterr().err
    assert not out.exists()


def test_segment_missing_file(tmp_path):
    assert run("segment", tmp_path / "nope.png", "-o", tmp_path / "o") == cli.EXIT_IO


# -- measure ----------------------------------------------------------------

def test_measure_at(image, tmp_path, capsys):
    assert run("measure", image, "--at", "128,82", "-o", tmp_path) == 0
    summary = json.loads(capsys.readouterr().out)
    rows = read_csv(tmp_path / "widths.csv")
    assert list(rows[0]) == ["point", "cx", "cy", "width_px"]
    assert len(rows) == summary["points"]
    assert summary == json.loads((tmp_path / "summary.json").read_text())
    for name in ("profile_stack.png", "clustered_mask.png", "repaired_mask.png"):
        assert (tmp_path / name).is_file()
    assert abs(summary["mean_width"] - 9) <= 1.5


def test_measure_segment_equals_at(image, tmp_path):
    assert run("measure", image, "--segment", 2, "-o", tmp_path / "s") == 0
    rows = read_csv(tmp_path / "s" / "widths.csv")
    x, y = rows[len(rows) // 3]["cx"], rows[len(rows) // 3]["cy"]
    assert run("measure", image, "--at", f"{x},{y}", "-o", tmp_path / "a") == 0
    assert (tmp_path / "s" / "widths.csv").read_bytes() == (tmp_path / "a" / "widths.csv").read_bytes()


def test_measure_both_selectors(image, tmp_path):
    assert run("measure", image, "--segment", 1, "--at", "1,1", "-o", tmp_path) == cli.EXIT_USAGE


def test_measure_neither_selector(image, tmp_path):
    assert run("measure", image, "-o", tmp_path) == cli.EXIT_USAGE


def test_measure_far_point(image, tmp_path, capsys):
    assert run("measure", image, "--at", "5,5", "-o", tmp_path) == cli.EXIT_NO_VESSEL
    assert "no vessel near point" in capsys.readouterr().err


def test_measure_unknown_segment(image, tmp_path):
    assert run("measure", image, "--segment", 99, "-o", tmp_path) == cli.EXIT_NO_VESSEL


def test_bad_point_syntax(image, tmp_path):
    with pytest.raises(SystemExit) as info:
        run("measure", image, "--at", "12", "-o", tmp_path)
    assert info.value.code == cli.EXIT_USAGE


# -- track ------------------------------------------------------------------

def test_track_single_frame(image, tmp_path):
    assert run("track", image, "--at", "128,82", "--fps", 30, "-o", tmp_path / "o") == cli.EXIT_USAGE
    assert not (tmp_path / "o").exists()


def test_track_missing_frames(tmp_path):
    assert run("track", tmp_path / "none", "--at", "1,1", "-o", tmp_path / "o") == cli.EXIT_IO


@pytest.mark.slow
def test_track_dual_anti_phase(tmp_path):
    (tmp_path / "seq.ini").write_text(SEQUENCE)
    assert run("synth", tmp_path / "seq.ini", "-o", tmp_path / "s") == 0
    out = tmp_path / "t"
    code = run("track", tmp_path / "s" / "frames", "--at", "128,75", "--at", "128,185",
               "--kind", "vein", "--kind", "artery", "--fps", 30, "-o", out)
    assert code == 0
    report = json.loads((out / "pulse_report.json").read_text())
    assert report["frames"] == 90
    for v in report["vessels"]:
        assert v["report"]["heart_rate_bpm"] == pytest.approx(72, abs=2)
        assert set(v["report"]["bpm_by_formula"]) == {pulse.TWICE_SEPARATION, pulse.SEPARATION}
    assert report["pearson_r_smoothed"] <= -0.8
    assert [v["kind"] for v in report["vessels"]] == ["vein", "artery"]
    assert len(read_csv(out / "series.csv")) == 90
    assert (out / "series_2.csv").is_file() and (out / "pulse_plot.png").is_file()


def test_track_lost(tmp_path, capsys):
    (tmp_path / "seq.ini").write_text("[scene]\nbackground = 160\nnoise_sigma = 5\nfps = 30\n"
                                      "duration = 0.3\n\n[vessel.1]\n" + oblique(128, 0.0))
    assert run("synth", tmp_path / "seq.ini", "-o", tmp_path / "s") == 0
    frames = tmp_path / "s" / "frames"
    blank = np.full((256, 256, 3), 160, np.uint8)
    imageio.write_png(frames / "frame_0005.png", blank)
    code = run("track", frames, "--at", "128,128", "--fps", 30, "-o", tmp_path / "t")
    assert code == cli.EXIT_TRACKING_LOST
    assert "frame 5" in capsys.readouterr().err


# -- eval -------------------------------------------------------------------

def test_eval_drive_perfect(synth_dir, tmp_path, capsys):
    pred = tmp_path / "pred"
    pred.mkdir()
    (pred / "01_pred.png").write_bytes((synth_dir / "1st_manual" / "01_manual1.png").read_bytes())
    assert run("eval", "--drive", synth_dir, "--predictions", pred, "-o", tmp_path / "e") == 0
    rows = read_csv(tmp_path / "e" / "drive_scores.csv")
    assert [r["image"] for r in rows] == ["01_synth.png", "average"]
    for r in rows:
        assert (r["accuracy"], r["sensitivity"], r["specificity"]) == ("1.0000",) * 3


def test_eval_drive_segmented(synth_dir, tmp_path, capsys):
    assert run("eval", "--drive", synth_dir, "-o", tmp_path) == 0
    avg = json.loads(capsys.readouterr().out)["average"]
    assert avg["accuracy"] > 0.95 and avg["sensitivity"] > 0.7


def test_eval_missing_truth(synth_dir, tmp_path, capsys):
    drive = tmp_path / "d"
    (drive / "images").mkdir(parents=True)
    (drive / "mask").mkdir()
    (drive / "images" / "01_synth.png").write_bytes((synth_dir / "images" / "01_synth.png").read_bytes())
    assert run("eval", "--drive", drive, "-o", tmp_path / "e") == cli.EXIT_IO
    assert "1st_manual" in capsys.readouterr().err


def test_eval_review(synth_dir, tmp_path):
    assert run("eval", "--review", synth_dir / "truth.csv", "--images", synth_dir / "images",
               "--literal-mu", "-o", tmp_path) == 0
    doc = json.loads((tmp_path / "review_scores.json").read_text())
    assert [s["segment"] for s in doc["segments"]] == ["1", "2"]
    assert all(s["matched"] > 150 for s in doc["segments"])
    assert abs(doc["average"]["mu_error"]) <= 1.5
    assert doc["average"]["sigma_error"] <= 1.0


def test_eval_needs_one_source(tmp_path):
    assert run("eval", "-o", tmp_path) == cli.EXIT_USAGE


# -- config and manifest ----------------------------------------------------

def test_bad_config(image, tmp_path, capsys):
    (tmp_path / "c.ini").write_text("[caliper]\nrow_join = -1\n")
    assert run("segment", image, "-c", tmp_path / "c.ini", "-o", tmp_path / "o") == cli.EXIT_CONFIG
    assert "caliper.row_join" in capsys.readouterr().err


def test_config_changes_manifest(image, tmp_path):
    (tmp_path / "c.ini").write_text("[skeleton]\nprune_length = 40\n")
    assert run("segment", image, "-c", tmp_path / "c.ini", "-o", tmp_path / "o") == 0
    doc = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert doc["config"]["skeleton"]["prune_length"] == 40


def test_manifest_determinism(image, tmp_path):
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert run("measure", image, "--at", "128,82", "-o", out) == 0
    a, b = (json.loads((o / "manifest.json").read_text()) for o in outs)
    assert a == b
    assert a["tool"] == "retipulse" and a["command"] == "measure"
    assert a["inputs"][0]["sha256"] and len(a["inputs"][0]["sha256"]) == 64
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(outs[1]) for p in outs[1].rglob("*") if p.is_file())
    for rel in files:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        run("--version")
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("retipulse ")
