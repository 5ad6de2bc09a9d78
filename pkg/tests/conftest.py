import numpy as np
import pytest

from monolift import kitti_io as kio
from monolift import synthetic as syn


def write_dataset(root, n_objects, seed=0, per_file=10, depth=(5.0, 60.0), classes=("Car", "Pedestrian", "Cyclist")):
    """Synthetic KITTI-layout tree: ``root/label_2`` and ``root/calib`` with the stock P2."""
    labels, calib = root / "label_2", root / "calib"
    labels.mkdir(parents=True)
    calib.mkdir()
    rng = np.random.default_rng(seed)
    objs = syn.sample_objects(n_objects, rng, depth=depth, classes=classes)
    records = [
        kio.LabelRecord(o.class_name, 0.0, 0, o.alpha, o.bbox, o.dims, o.location, o.rotation_y) for o in objs
    ]
    for i in range(0, len(records), per_file):
        stem = f"{i // per_file:06d}"
        kio.write_labels(records[i : i + per_file], labels / f"{stem}.txt")
        (calib / f"{stem}.txt").write_text(kio.format_calib(syn.KITTI_P2))
    return labels, calib


@pytest.fixture
def dataset(tmp_path):
    return write_dataset(tmp_path / "kitti", 60, depth=(5.0, 25.0))


# acceptance criteria report one verdict line each; collected here and printed at the end of the run
ACCEPTANCE: dict[str, str] = {}


def report(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
