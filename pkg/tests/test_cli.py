import subprocess
import sys

import numpy as np
import pytest

from motionmaps import fileio
from motionmaps.cli import main
from motionmaps.geometry import STACK_ORDER
from motionmaps.trajectory import Trajectory


def run_pipeline(root, dof="tz", magnitude=-0.2, seed=1, frames=4, scene="plane", extra=()):
    # rotation-only ground truth has zero path length, so only ATE applies
    metric = "ate" if dof.startswith("r") else "ate,rmse,rpe"
    d = root / "synth"
    assert main(["synth", "--dof", dof, "--magnitude", str(magnitude), "--scene", scene,
                 "--seed", str(seed), "--frames", str(frames), "--out-dir", str(d), *extra]) == 0
    pairs = frames - 1
    flows = [str(d / f"flow_{i:04d}.flo") for i in range(pairs)]
    depths = [str(d / f"depth_{i:04d}.fmap") for i in range(pairs)]
    maps = []
    for i in range(pairs):
        out = root / f"maps_{i:04d}.fmap"
        assert main(["decompose", "--flow", flows[i], "--depth", depths[i],
                     "--camera", str(d / "camera.txt"), "--out", str(out)]) == 0
        maps.append(str(out))
    assert main(["estimate", "--maps", *maps, "--out-poses", str(root / "est.txt"),
                 "--out-relative", str(root / "rel.txt")]) == 0
    assert main(["eval", "--gt", str(d / "gt_poses.txt"), "--est", str(root / "est.txt"),
                 "--metric", metric, "--lengths", "0.2,0.4", "--format", "csv", "--digits", "12",
                 "--out", str(root / "table.csv")]) == 0
    return d


def all_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_pipeline_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    run_pipeline(a, "rx", 0.01, seed=3, scene="height_field", extra=["--flow-noise", "0.1",
                                                                      "--outlier-fraction", "0.05"])
    run_pipeline(b, "rx", 0.01, seed=3, scene="height_field", extra=["--flow-noise", "0.1",
                                                                      "--outlier-fraction", "0.05"])
    files_a, files_b = all_bytes(a), all_bytes(b)
    assert len(files_a) == 8 + 3 + 3  # synth, maps, estimate and eval outputs
    assert files_a == files_b


def test_different_seed_changes_output(tmp_path):
    run_pipeline(tmp_path / "a", "tx", 0.2, seed=1, scene="height_field")
    run_pipeline(tmp_path / "b", "tx", 0.2, seed=2, scene="height_field")
    assert (tmp_path / "a/synth/flow_0000.flo").read_bytes() != \
        (tmp_path / "b/synth/flow_0000.flo").read_bytes()


def test_pure_tz_pipeline_recovers_trajectory(tmp_path):
    d = run_pipeline(tmp_path, "tz", -0.2, frames=6)
    gt = fileio.read_trajectory(d / "gt_poses.txt")
    est = fileio.read_trajectory(tmp_path / "est.txt")
    path = gt.cumulative_length[-1]
    assert path == pytest.approx(1.0)
    from motionmaps.metrics import ate
    assert ate(gt, est) < 1e-6 * path
    rel = np.loadtxt(tmp_path / "rel.txt")
    # per-pair scene motion; float32 flow on disk limits agreement
    np.testing.assert_allclose(rel[:, 2], -0.2, rtol=1e-6)


@pytest.mark.xfail(strict=True, reason="pure t_x leaks into the yaw (ry) estimate as t_x/Z, "
                                       "and integrating that rotation bends the path")
def test_pure_tx_pipeline_ate(tmp_path):
    d = run_pipeline(tmp_path, "tx", -0.2, frames=6)
    from motionmaps.metrics import ate
    gt = fileio.read_trajectory(d / "gt_poses.txt")
    est = fileio.read_trajectory(tmp_path / "est.txt")
    assert ate(gt, est) < 1e-6 * gt.cumulative_length[-1]


def test_synth_outputs(tmp_path):
    d = run_pipeline(tmp_path, "ty", 0.1, frames=3)
    cam = fileio.read_camera(d / "camera.txt")
    assert (cam.width, cam.height) == (128, 96)
    u, v = fileio.read_flow(d / "flow_0000.flo")
    assert u.shape == (96, 128)
    # scene moves +y (down) by 0.1 at depth 5: 100 px focal -> 2 px of flow
    np.testing.assert_allclose(v[fileio.flow_valid(u, v)], 2.0, rtol=1e-6)
    maps = fileio.read_raster(tmp_path / "maps_0000.fmap")
    assert maps.shape == (7, 96, 128)
    ty = maps[STACK_ORDER.index("t_y")]
    np.testing.assert_allclose(ty[np.isfinite(ty)], 0.1, rtol=1e-6)
    gt = fileio.read_poses(d / "gt_poses.txt")
    assert gt.shape == (3, 3, 4)
    np.testing.assert_allclose(gt[-1, 1, 3], -0.2, atol=1e-15)


def test_decompose_camera_convention_flips_sign(tmp_path):
    d = run_pipeline(tmp_path, "rz", 0.02, frames=2, scene="slanted")
    out = tmp_path / "cam_maps.fmap"
    assert main(["decompose", "--flow", str(d / "flow_0000.flo"), "--depth",
                 str(d / "depth_0000.fmap"), "--camera", str(d / "camera.txt"),
                 "--convention", "camera", "--out", str(out)]) == 0
    a = fileio.read_raster(tmp_path / "maps_0000.fmap")
    b = fileio.read_raster(out)
    np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
    np.testing.assert_array_equal(a[~np.isnan(a)], -b[~np.isnan(b)])


def test_estimate_from_flow_matches_maps(tmp_path):
    d = run_pipeline(tmp_path, "tz", 0.1, frames=3, scene="slanted")
    out = tmp_path / "est_flow.txt"
    assert main(["estimate", "--flow", str(d / "flow_0000.flo"), str(d / "flow_0001.flo"),
                 "--depth", str(d / "depth_0000.fmap"), str(d / "depth_0001.fmap"),
                 "--camera", str(d / "camera.txt"), "--out-poses", str(out)]) == 0
    # the map files hold float32, so agreement is to single precision
    np.testing.assert_allclose(fileio.read_poses(out), fileio.read_poses(tmp_path / "est.txt"),
                               rtol=0, atol=1e-6)


def test_eval_gt_equals_est_is_zero(tmp_path, capsys):
    rng = np.random.default_rng(0)
    poses = np.tile(np.eye(4), (30, 1, 1))
    poses[:, :3, 3] = np.cumsum(rng.normal(size=(30, 3)), axis=0)
    path = tmp_path / "gt.txt"
    fileio.write_poses(path, poses)
    assert main(["eval", "--gt", str(path), "--est", str(path), "--lengths", "1,2,4",
                 "--format", "csv"]) == 0
    header, row = capsys.readouterr().out.splitlines()
    assert header == "label,ATE,RMSE_t,RMSE_r,RPE_t,RPE_r"
    assert all(float(x) == 0 for x in row.split(",")[1:])


def test_eval_runs_and_metric_selection(tmp_path, capsys):
    gt = np.tile(np.eye(4), (20, 1, 1))
    gt[:, 2, 3] = np.arange(20.0)
    paths = []
    for k, s in enumerate((0.01, 0.03)):
        est = gt.copy()
        est[:, 2, 3] *= 1 + s
        paths.append(tmp_path / f"est{k}.txt")
        fileio.write_poses(paths[-1], est)
    fileio.write_poses(tmp_path / "gt.txt", gt)
    assert main(["eval", "--gt", str(tmp_path / "gt.txt"), "--est", *map(str, paths),
                 "--runs", "2", "--metric", "rpe", "--lengths", "0.5,1", "--length-scale", "4",
                 "--digits", "2", "--label", "straight"]) == 0
    out = capsys.readouterr().out
    assert "RPE_t" in out and "RMSE_t" not in out and "ATE" not in out
    assert "2.00 ± 1.41" in out and out.splitlines()[2].startswith("straight")


def test_eval_run_count_mismatch(tmp_path, capsys):
    fileio.write_poses(tmp_path / "p.txt", np.eye(4)[None].repeat(3, 0))
    p = str(tmp_path / "p.txt")
    assert main(["eval", "--gt", p, "--est", p, "--runs", "2"]) == 1
    assert "expected 2 --est files" in capsys.readouterr().err


def test_eval_unknown_metric(tmp_path, capsys):
    fileio.write_poses(tmp_path / "p.txt", np.eye(4)[None].repeat(3, 0))
    p = str(tmp_path / "p.txt")
    assert main(["eval", "--gt", p, "--est", p, "--metric", "ate,mse"]) == 1
    assert "mse" in capsys.readouterr().err


def test_decompose_size_mismatch(tmp_path, capsys):
    fileio.write_flow(tmp_path / "f.flo", np.zeros((4, 6)), np.zeros((4, 6)))
    fileio.write_raster(tmp_path / "d.fmap", np.ones((5, 6), dtype=np.float32))
    out = tmp_path / "m.fmap"
    code = main(["decompose", "--flow", str(tmp_path / "f.flo"), "--depth",
                 str(tmp_path / "d.fmap"), "--fx", "0.5", "--fy", "0.5", "--out", str(out)])
    err = capsys.readouterr().err
    assert code != 0 and len(err.strip().splitlines()) == 1
    assert "DimensionMismatch" in err and "6x4" in err and "6x5" in err
    assert not out.exists()


def test_decompose_camera_size_mismatch(tmp_path, capsys):
    fileio.write_flow(tmp_path / "f.flo", np.zeros((4, 6)), np.zeros((4, 6)))
    fileio.write_raster(tmp_path / "d.fmap", np.ones((4, 6), dtype=np.float32))
    fileio.write_camera(tmp_path / "c.txt", __import__("motionmaps").CameraModel(1, 1, 8, 4))
    code = main(["decompose", "--flow", str(tmp_path / "f.flo"), "--depth",
                 str(tmp_path / "d.fmap"), "--camera", str(tmp_path / "c.txt"),
                 "--out", str(tmp_path / "m.fmap")])
    assert code == 4 and "camera is 8x4" in capsys.readouterr().err


@pytest.mark.parametrize("argv,code,needle", [
    (["decompose", "--flow", "missing.flo", "--depth", "x", "--fx", "1", "--fy", "1",
      "--out", "o"], 6, "missing.flo"),
    (["decompose", "--flow", "BAD", "--depth", "x", "--fx", "1", "--fy", "1", "--out", "o"],
     3, "magic"),
    (["decompose", "--flow", "GOOD", "--depth", "GOODD", "--out", "o"], 1, "intrinsics"),
    (["synth", "--dof", "tx", "--magnitude", "0.1", "--frames", "1", "--out-dir", "s"],
     1, "--frames"),
    (["estimate", "--out-poses", "p"], 1, "--maps"),
])
def test_error_exit_codes(tmp_path, monkeypatch, capsys, argv, code, needle):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "BAD").write_bytes(b"nope" * 5)
    fileio.write_flow(tmp_path / "GOOD", np.zeros((2, 2)), np.zeros((2, 2)))
    fileio.write_raster(tmp_path / "GOODD", np.ones((2, 2)))
    assert main(argv) == code
    err = capsys.readouterr().err
    assert needle in err and len(err.strip().splitlines()) == 1


def test_estimate_insufficient_pixels(tmp_path, capsys):
    arr = np.full((7, 4, 4), np.nan, dtype=np.float32)
    arr[:, 0, 0] = 0.1
    arr[:4] = 0.1
    fileio.write_raster(tmp_path / "m.fmap", arr)
    code = main(["estimate", "--maps", str(tmp_path / "m.fmap"), "--min-valid-fraction", "0.5",
                 "--out-poses", str(tmp_path / "p.txt")])
    # r_x is estimated first and is read from the r_y map
    assert code == 5 and "'r_y'" in capsys.readouterr().err
    assert not (tmp_path / "p.txt").exists()


def test_estimate_rejects_wrong_channel_count(tmp_path, capsys):
    fileio.write_raster(tmp_path / "d.fmap", np.ones((3, 3)))
    assert main(["estimate", "--maps", str(tmp_path / "d.fmap"),
                 "--out-poses", str(tmp_path / "p.txt")]) == 4


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "motionmaps", "synth", "--dof", "tz",
                           "--magnitude", "0.1", "--frames", "2", "--width", "16", "--height",
                           "12", "--out-dir", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "camera.txt", "depth_0000.fmap", "flow_0000.flo", "gt_poses.txt"]
    traj = Trajectory(fileio.read_poses(tmp_path / "gt_poses.txt"))
    assert traj.positions[-1, 2] == pytest.approx(-0.1)
