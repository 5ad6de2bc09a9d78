"""Command line front end: ``monolift {lift,synth,train,predict,eval}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from monolift import evaluation as ev
from monolift import geometry as geo
from monolift import kitti_io as kio
from monolift import shiftnet as sn
from monolift.errors import Degenerate, EmptyGroundTruth, EmptyInput, MonoliftError
from monolift.lift import lift

log = logging.getLogger("monolift")

CLASSES = ("Car", "Pedestrian", "Cyclist")


class Counter:
    def __init__(self):
        self.errors = 0

    def fail(self, msg, *args):
        self.errors += 1
        log.error(msg, *args)


def _label_files(d: Path) -> list[Path]:
    return sorted(d.glob("*.txt"))


def _require_dir(p: Path, what: str) -> Path:
    if not p.is_dir():
        raise SystemExit(f"error: {what} directory {p} does not exist")
    return p


def _load_pairs(labels: Path, calib: Path, errs: Counter):
    """Yield ``(stem, records, P2)`` for every label file with a readable calibration."""
    for f in _label_files(labels):
        cal = calib / f.name
        if not cal.exists():
            errs.fail("%s: no calibration file %s", f.name, cal)
            continue
        try:
            records = kio.read_labels(f)
            P = kio.read_calib(cal).p2
        except MonoliftError as e:
            errs.fail("%s: %s", f.name, e)
            continue
        yield f.stem, records, P


def _lift_record(r: kio.LabelRecord, P, model=None):
    sol = lift(r.bbox, r.dims, r.alpha, P)
    t = sol.translation
    if model is not None:
        feats = sn.feature_vector(t, r.bbox, r.dims, r.alpha, sol.alpha_g, P)
        t = tuple(float(v) for v in model.forward(feats))
    return replace(r, location=geo.Translation(*t), rotation_y=sol.alpha_g, score=sol.reprojection_iou)


def _run_detection(args, model=None) -> int:
    labels = _require_dir(Path(args.labels), "label")
    calib = _require_dir(Path(args.calib), "calibration")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    errs = Counter()
    n = 0
    for stem, records, P in _load_pairs(labels, calib, errs):
        dets = []
        for i, r in enumerate(records):
            if r.is_dont_care:
                continue
            try:
                dets.append(_lift_record(r, P, model))
            except (MonoliftError, ValueError) as e:
                errs.fail("%s line %d: %s", stem, i + 1, e)
        kio.write_detection(dets, out / f"{stem}.txt")
        n += len(dets)
    log.info("wrote %d detections to %s (%d errors)", n, out, errs.errors)
    return 0 if errs.errors == 0 or args.lenient else 1


def cmd_lift(args) -> int:
    return _run_detection(args)


def cmd_predict(args) -> int:
    model = sn.load_model(args.model)
    return _run_detection(args, model)


def cmd_synth(args) -> int:
    labels = _require_dir(Path(args.labels), "label")
    calib = _require_dir(Path(args.calib), "calibration")
    sx, sy, sz = args.noise_t
    spec = kio.PerturbSpec(
        t_std=(sx, sy, 0.0), t_std_depth=sz, d_std=args.noise_d, a_std=args.noise_a, seed=args.seed
    )
    rng = np.random.default_rng(args.seed)
    errs = Counter()
    samples, skipped = [], 0
    for stem, records, P in _load_pairs(labels, calib, errs):
        for r in records:
            if r.is_dont_care:
                continue
            for _ in range(args.copies):
                try:
                    samples.append(kio.perturb_record(r, spec, P, rng))
                except Degenerate:
                    skipped += 1
    tmp = Path(args.out).with_name(Path(args.out).name + ".tmp")
    sn.write_samples(samples, tmp)
    tmp.replace(args.out)
    log.info("wrote %d samples to %s, skipped %d degenerate records", len(samples), args.out, skipped)
    print(f"samples {len(samples)} skipped {skipped}")
    return 0 if errs.errors == 0 or args.lenient else 1


def cmd_train(args) -> int:
    cfg = sn.TrainConfig(
        lr=args.lr,
        batch_size=args.batch_size,
        pretrain_epochs=args.epochs,
        finetune_epochs=args.finetune_epochs,
        seed=args.seed,
        hidden=args.hidden,
        residual=args.residual,
    )
    pre = [s for p in args.train for s in sn.read_samples(p)]
    model = sn.train(pre, cfg, "pretrain")
    for i, v in enumerate(model.history):
        print(f"pretrain epoch {i + 1} mean_vdl {v:.6f}")
    if args.finetune:
        fine = [s for p in args.finetune for s in sn.read_samples(p)]
        start = len(model.history)
        model = sn.train(fine, cfg, "finetune", model)
        for i, v in enumerate(model.history[start:]):
            print(f"finetune epoch {i + 1} mean_vdl {v:.6f}")
    sn.save_model(model, args.out)
    return 0


def _read_dir(d: Path, errs: Counter) -> dict[str, list]:
    out = {}
    for f in _label_files(d):
        try:
            out[f.stem] = kio.read_labels(f)
        except MonoliftError as e:
            errs.fail("%s: %s", f, e)
    return out


def evaluate(gt: dict, det: dict, iou_thresholds: dict, points: int = 11, strict: bool = False) -> dict[str, float | None]:
    """AP_3D / AP_BEV (in percent) per class and difficulty, plus matched-pair accuracy."""
    metrics: dict[str, float | None] = {}
    for cls in CLASSES:
        thr = iou_thresholds[cls]
        for name, fn in (("ap3d", ev.iou_3d), ("apbev", ev.iou_bev_boxes)):
            for diff in ev.DIFFICULTIES:
                key = f"{name}/{cls}/{diff.name}"
                try:
                    curve = ev.average_precision(gt, det, fn, thr, diff, cls, points, strict)
                    metrics[key] = 100.0 * curve.ap
                except EmptyGroundTruth:
                    metrics[key] = None
        pairs = []
        for stem, gts in gt.items():
            cands = [d for d in det.get(stem, ()) if d.class_name == cls]
            for g in gts:
                if g.class_name == cls and cands:
                    pairs.append((max(cands, key=lambda d: ev.iou_3d(d, g)), g))
        try:
            metrics[f"acc3d/{cls}"] = ev.accuracy_at_iou(pairs, thr)
        except EmptyInput:
            metrics[f"acc3d/{cls}"] = None
    return metrics


def format_table(metrics: dict) -> str:
    def cell(v):
        return "n/a" if v is None else f"{v:6.2f}"

    names = [d.name for d in ev.DIFFICULTIES]
    lines = [f"{'class':<11}{'metric':<7}" + "".join(f"{n:>10}" for n in names)]
    for cls in CLASSES:
        for m in ("ap3d", "apbev"):
            lines.append(f"{cls:<11}{m:<7}" + "".join(f"{cell(metrics[f'{m}/{cls}/{n}']):>10}" for n in names))
    for cls in CLASSES:
        lines.append(f"{cls:<11}acc3d  {cell(metrics[f'acc3d/{cls}']):>10}")
    return "\n".join(lines)


def cmd_eval(args) -> int:
    gt_dir = _require_dir(Path(args.labels), "ground-truth label")
    det_dir = _require_dir(Path(args.det), "detection")
    errs = Counter()
    gt = _read_dir(gt_dir, errs)
    det = _read_dir(det_dir, errs)
    for stem, recs in det.items():
        if any(r.score is None for r in recs):
            errs.fail("%s: detection without a score, file skipped", stem)
            det[stem] = []
    thresholds = {"Car": args.iou_car, "Pedestrian": args.iou_ped, "Cyclist": args.iou_ped}
    metrics = evaluate(gt, det, thresholds, args.ap_points, args.strict)
    print(format_table(metrics))
    if args.out:
        text = "".join(f"{k}={'n/a' if v is None else f'{v:.4f}'}\n" for k, v in metrics.items())
        kio.atomic_write(args.out, text)
    return 0 if errs.errors == 0 or args.lenient else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="monolift", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--labels", required=True, help="directory of KITTI label files")
        sp.add_argument("--out", required=True, help=out_help)
        sp.add_argument("--lenient", action="store_true", help="exit 0 despite record-level errors")

    sp = sub.add_parser("lift", help="closed-form translation for every label record")
    common(sp, "output directory for detection files")
    sp.add_argument("--calib", required=True)
    sp.set_defaults(func=cmd_lift)

    sp = sub.add_parser("predict", help="lift then refine with a trained model")
    common(sp, "output directory for detection files")
    sp.add_argument("--calib", required=True)
    sp.add_argument("--model", required=True)
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("synth", help="perturb ground truth into a training dataset")
    common(sp, "output newline-delimited JSON file")
    sp.add_argument("--calib", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--noise-t", type=float, nargs=3, default=(0.25, 0.10, 0.02), metavar=("SX", "SY", "SZ_REL"),
                    help="translation std: x and y in metres, z as a fraction of depth")
    sp.add_argument("--noise-d", type=float, default=0.08, help="multiplicative dimension std")
    sp.add_argument("--noise-a", type=float, default=0.05, help="yaw std in radians")
    sp.add_argument("--copies", type=int, default=1, help="perturbed samples per record")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="pre-train (and optionally fine-tune) the refiner")
    sp.add_argument("--train", nargs="+", required=True, help="pre-training sample files")
    sp.add_argument("--finetune", nargs="*", default=[], help="fine-tuning sample files")
    sp.add_argument("--out", required=True, help="model file")
    sp.add_argument("--lr", type=float, default=1e-3)
    sp.add_argument("--epochs", type=int, default=200, help="pre-training epochs")
    sp.add_argument("--finetune-epochs", type=int, default=100)
    sp.add_argument("--batch-size", type=int, default=64)
    sp.add_argument("--hidden", type=int, default=1024)
    sp.add_argument("--residual", action="store_true", help="regress a correction to the lifted translation")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="AP_3D / AP_BEV against ground truth")
    sp.add_argument("--labels", required=True, help="ground-truth label directory")
    sp.add_argument("--det", required=True, help="detection directory")
    sp.add_argument("--out", help="write metric=value lines here")
    sp.add_argument("--iou-car", type=float, default=ev.DEFAULT_IOU["Car"])
    sp.add_argument("--iou-ped", type=float, default=ev.DEFAULT_IOU["Pedestrian"],
                    help="threshold for Pedestrian and Cyclist")
    sp.add_argument("--ap-points", type=int, choices=(11, 40), default=11)
    sp.add_argument("--strict", action="store_true", help="no ignore regions: hits on filtered ground truth count as false positives")
    sp.add_argument("--lenient", action="store_true")
    sp.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except MonoliftError as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
