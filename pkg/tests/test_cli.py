import numpy as np
import pytest
from conftest import write_dataset
from test_evaluation import HAND_AP, HAND_DET, HAND_GT

from monolift import geometry as geo
from monolift import kitti_io as kio
from monolift import shiftnet as sn
from monolift import synthetic as syn
from monolift.cli import main

ZERO_NOISE = ["--noise-t", "0", "0", "0", "--noise-d", "0", "--noise-a", "0"]


def read_kv(path):
    out = {}
    for line in path.read_text().splitlines():
        k, v = line.split("=")
        out[k] = None if v == "n/a" else float(v)
    return out


def two_faces_visible(s):
    # both extreme vertical edges sit across a diagonal of the footprint
    corners = geo.box_corners(s.dims, s.alpha_g, s.target)
    u = geo.project_points(corners, s.P)[0][:4, 0]
    return (int(np.argmax(u)) - int(np.argmin(u))) % 4 == 2


def test_lift_empty_dir(tmp_path):
    (tmp_path / "l").mkdir()
    (tmp_path / "c").mkdir()
    assert main(["lift", "--labels", str(tmp_path / "l"), "--calib", str(tmp_path / "c"), "--out", str(tmp_path / "o")]) == 0
    assert list((tmp_path / "o").iterdir()) == []


def test_lift_missing_calib(dataset, tmp_path, caplog):
    labels, calib = dataset
    (calib / "000000.txt").unlink()
    args = ["lift", "--labels", str(labels), "--calib", str(calib), "--out", str(tmp_path / "o")]
    assert main(args) != 0
    assert "no calibration" in caplog.text
    assert main(args + ["--lenient"]) == 0


def test_missing_directory_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["lift", "--labels", str(tmp_path / "nope"), "--calib", str(tmp_path), "--out", str(tmp_path / "o")])


def test_unknown_flag_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["lift", "--labels", ".", "--calib", ".", "--out", ".", "--bogus"])


def test_lift_writes_scored_detections(dataset, tmp_path):
    labels, calib = dataset
    out = tmp_path / "det"
    assert main(["lift", "--labels", str(labels), "--calib", str(calib), "--out", str(out)]) == 0
    gt = kio.read_labels(labels / "000000.txt")
    det = kio.read_labels(out / "000000.txt")
    assert len(det) == len(gt)
    assert all(0.0 <= d.score <= 1.0 for d in det)


def test_synth_zero_noise_recovers_targets(dataset, tmp_path, capsys):
    labels, calib = dataset
    out = tmp_path / "s.ndjson"
    assert main(["synth", "--labels", str(labels), "--calib", str(calib), "--out", str(out)] + ZERO_NOISE) == 0
    assert capsys.readouterr().out.strip() == "samples 60 skipped 0"
    samples = sn.read_samples(out)
    gt = [r for f in sorted(labels.glob("*.txt")) for r in kio.read_labels(f)]
    for s, r in zip(samples, gt):
        assert s.target == r.location
    checked = [s for s in samples if two_faces_visible(s)]
    assert len(checked) > 40
    for s in checked:
        assert np.abs(np.subtract(s.t_prime, s.target)).max() < 1e-3


def test_synth_byte_identical(dataset, tmp_path):
    labels, calib = dataset
    paths = [tmp_path / f"{k}.ndjson" for k in "abc"]
    seeds = ["7", "7", "8"]
    for p, seed in zip(paths, seeds):
        main(["synth", "--labels", str(labels), "--calib", str(calib), "--out", str(p), "--seed", seed])
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert paths[0].read_bytes() != paths[2].read_bytes()


def test_synth_rejection_rate(tmp_path, capsys):
    labels, calib = write_dataset(tmp_path / "big", 1000, seed=3, per_file=50)
    out = tmp_path / "s.ndjson"
    assert main(["synth", "--labels", str(labels), "--calib", str(calib), "--out", str(out)]) == 0
    n = len(sn.read_samples(out))
    assert n >= 990
    assert capsys.readouterr().out.startswith(f"samples {n} ")


def test_train_and_predict(dataset, tmp_path, capsys):
    labels, calib = dataset
    data, model = tmp_path / "s.ndjson", tmp_path / "m.bin"
    main(["synth", "--labels", str(labels), "--calib", str(calib), "--out", str(data)])
    capsys.readouterr()
    argv = ["train", "--train", str(data), "--finetune", str(data), "--out", str(model)]
    argv += ["--epochs", "3", "--finetune-epochs", "2", "--hidden", "16", "--residual"]
    assert main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[0] for ln in lines] == ["pretrain"] * 3 + ["finetune"] * 2
    assert sn.load_model(model).residual
    out = tmp_path / "det"
    assert main(["predict", "--labels", str(labels), "--calib", str(calib), "--model", str(model), "--out", str(out)]) == 0
    assert len(list(out.glob("*.txt"))) == 6


def test_eval_identity_and_empty(dataset, tmp_path):
    labels, _ = dataset
    det = tmp_path / "det"
    det.mkdir()
    for f in labels.glob("*.txt"):
        recs = [r.__class__(**{**r.__dict__, "score": 1.0}) for r in kio.read_labels(f)]
        kio.write_detection(recs, det / f.name)
    kv = tmp_path / "m.txt"
    assert main(["eval", "--labels", str(labels), "--det", str(det), "--out", str(kv)]) == 0
    metrics = read_kv(kv)
    ap = {k: v for k, v in metrics.items() if k.startswith("ap")}
    assert len(ap) == 18 and all(v == pytest.approx(100.0) for v in ap.values())
    empty = tmp_path / "none"
    empty.mkdir()
    assert main(["eval", "--labels", str(labels), "--det", str(empty), "--out", str(kv)]) == 0
    assert all(v == 0.0 for k, v in read_kv(kv).items() if k.startswith("ap"))


def test_eval_reports_missing_class_as_na(tmp_path):
    labels, _ = write_dataset(tmp_path / "cars", 10, depth=(5.0, 20.0), classes=("Car",))
    kv = tmp_path / "m.txt"
    assert main(["eval", "--labels", str(labels), "--det", str(labels), "--out", str(kv)]) != 0  # unscored detections
    metrics = read_kv(kv)
    assert metrics["ap3d/Pedestrian/Moderate"] is None
    assert metrics["acc3d/Cyclist"] is None


def test_eval_reproduces_hand_fixture(tmp_path):
    gt, det = tmp_path / "gt", tmp_path / "det"
    gt.mkdir()
    det.mkdir()
    kio.write_labels(HAND_GT, gt / "000000.txt")
    kio.write_detection(HAND_DET, det / "000000.txt")
    kv = tmp_path / "m.txt"
    assert main(["eval", "--labels", str(gt), "--det", str(det), "--out", str(kv)]) == 0
    assert read_kv(kv)["ap3d/Car/Moderate"] == pytest.approx(100 * HAND_AP, abs=1e-4)


def test_p2_used_for_lift(dataset):
    # the fixture uses the stock camera; make sure the helper did not drift
    _, calib = dataset
    np.testing.assert_allclose(kio.read_calib(calib / "000000.txt").p2, syn.KITTI_P2, rtol=1e-12)
