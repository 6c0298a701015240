import json

import numpy as np
import pytest

from posecond import cli, pipeline, trajectory
from posecond.pose_io import CameraPose, PoseFrame, PoseSequence, serialize_sequence
from posecond.tensor import load_tensor

from conftest import read_ppm


def _gen(tmp_path, kind, frames=17, speed=0.1, seed=0, name=None):
    path = tmp_path / (name or f"{kind}.txt")
    assert cli.main(["gen-traj", kind, "--frames", str(frames), "--speed", str(speed),
                     "--seed", str(seed), "--out", str(path)]) == 0
    return path


def test_gen_traj_writes_header_plus_poses(tmp_path, capsys):
    path = _gen(tmp_path, "zoom-in", 17, 0.1)
    lines = path.read_text().splitlines()
    assert len(lines) == 18
    assert lines[0] == "synthetic://posecond/zoom-in"
    assert "zoom-in 17 frames speed=0.1" in capsys.readouterr().out


def test_gen_traj_to_stdout(capsys):
    assert cli.main(["gen-traj", "pan-up", "--frames", "3"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 4


def test_gen_traj_unknown_kind(tmp_path, capsys):
    assert cli.main(["gen-traj", "sideways", "--out", str(tmp_path / "x.txt")]) == 2
    assert "usage" in capsys.readouterr().err


def test_gen_traj_shake_determinism(tmp_path):
    a = _gen(tmp_path, "shake", seed=7, name="a.txt")
    b = _gen(tmp_path, "shake", seed=7, name="b.txt")
    assert a.read_bytes() == b.read_bytes()


def test_encode_seventeen_poses(tmp_path, capsys):
    poses = _gen(tmp_path, "zoom-in", 17, 0.05)
    capsys.readouterr()
    out = tmp_path / "enc"
    assert cli.main(["encode", str(poses), "--out-dir", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == {"frames": 16, "grid": [16, 9], "latent_shape": [4, 5, 8, 4]}
    ppms = sorted(out.glob("motion_*.ppm"))
    assert len(ppms) == 16
    w, h, _ = read_ppm(ppms[0].read_bytes())
    assert (w, h) == (640, 360)
    summary = json.loads((out / "summary.json").read_text())
    assert summary["run"]["lr"] == 5e-5 and summary["run"]["guidance_scale"] == 7.0
    assert summary["vae_input_shape"] == [16, 40, 64, 3]
    assert load_tensor((out / "latent.txt").read_text()).shape == (4, 5, 8, 4)


def test_encode_two_poses_gives_one_latent_frame(tmp_path, capsys):
    seq = PoseSequence((PoseFrame(0, trajectory.default_intrinsics(), CameraPose.identity()),
                        PoseFrame(1, trajectory.default_intrinsics(), CameraPose(np.eye(3), [0.1, 0, 0]))))
    path = tmp_path / "two.txt"
    path.write_text(serialize_sequence(seq))
    assert cli.main(["encode", str(path), "--out-dir", str(tmp_path / "o")]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["frames"] == 1
    assert printed["latent_shape"][0] == 1


def test_encode_corrupt_file(tmp_path, capsys):
    good = _gen(tmp_path, "zoom-in", 3).read_text().splitlines()
    fields = good[2].split()
    fields[5] = "x"
    good[2] = " ".join(fields)
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(good) + "\n")
    assert cli.main(["encode", str(bad), "--out-dir", str(tmp_path / "o")]) == 1
    assert "line 3" in capsys.readouterr().err


def test_encode_missing_file(tmp_path):
    assert cli.main(["encode", str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path)]) == 1


def _training_dir(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    for spec in pipeline.synthetic_specs():
        (data / f"{spec.kind.value}.txt").write_text(serialize_sequence(trajectory.generate(spec)))
    return data


def test_train_vae_loss_trend_and_checkpoint(tmp_path, capsys):
    data = _training_dir(tmp_path)
    out = tmp_path / "run"
    assert cli.main(["train-vae", str(data), "--out-dir", str(out)]) == 0
    hist = json.loads((out / "loss_history.json").read_text())
    loss = hist["loss"]
    assert len(loss) == 500
    assert np.mean(loss[-50:]) < np.mean(loss[:50])
    assert hist["recon_mse"][-1] < 0.1 * hist["recon_mse"][0]
    ckpt = out / "vae.ckpt"
    capsys.readouterr()
    assert cli.main(["encode", str(data / "zoom-in.txt"), "--checkpoint", str(ckpt),
                     "--out-dir", str(tmp_path / "enc")]) == 0


def test_train_vae_is_byte_deterministic(tmp_path):
    data = _training_dir(tmp_path)
    for name in ("a", "b"):
        assert cli.main(["train-vae", str(data), "--steps", "15", "--out-dir", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "loss_history.json").read_bytes() == \
        (tmp_path / "b" / "loss_history.json").read_bytes()


def test_train_vae_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert cli.main(["train-vae", str(tmp_path / "empty")]) == 2


def test_inject_demo_tai(capsys):
    assert cli.main(["inject-demo", "tai"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["grad_check_max_rel_err"] < 1e-4
    assert report["shape_preserved"]


def test_inject_demo_zero_pose(capsys):
    assert cli.main(["inject-demo", "tai", "--zero-pose"]) == 0
    assert json.loads(capsys.readouterr().out)["layernorm_baseline_max_abs_diff"] < 1e-12


def test_inject_demo_unknown_strategy():
    assert cli.main(["inject-demo", "bogus"]) == 2


def test_cammc_commands(tmp_path, capsys):
    zoom = _gen(tmp_path, "zoom-in", 9, 0.1)
    static = tmp_path / "static.txt"
    static.write_text(serialize_sequence(PoseSequence(tuple(
        PoseFrame(33333 * k, trajectory.default_intrinsics(), CameraPose.identity()) for k in range(9)))))
    capsys.readouterr()
    assert cli.main(["cammc", str(zoom), str(zoom)]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == 0.0
    assert cli.main(["cammc", str(zoom), str(static)]) == 0
    assert json.loads(capsys.readouterr().out)["value"] == pytest.approx(0.1, abs=1e-12)
    short = _gen(tmp_path, "zoom-in", 5, 0.1, name="short.txt")
    capsys.readouterr()
    assert cli.main(["cammc", str(zoom), str(short)]) == 1
    assert "has 9 poses" in capsys.readouterr().err


def test_selftest_passes_and_is_repeatable(capsys, monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    assert cli.main(["selftest"]) == 0
    first = capsys.readouterr().out
    assert cli.main(["selftest"]) == 0
    assert capsys.readouterr().out == first
    assert "FAIL" not in first


def test_selftest_fault_injection(capsys, monkeypatch):
    monkeypatch.setenv("NO_COLOR", "1")
    assert cli.main(["selftest", "--fault", "layer_norm"]) == 1
    out = capsys.readouterr().out
    failed = [line.split()[0] for line in out.splitlines() if "  FAIL  " in line]
    assert "grad_layer_norm" in failed
    assert cli.main(["selftest", "--fault", "nonsense"]) == 2
