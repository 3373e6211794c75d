"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 I/O or format error, 4 numeric error.
Machine-readable JSON goes to stdout (or ``--out``); diagnostics go to stderr.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

from . import formats
from .cam import CamConfig, eigen_cam, overlay, quantize
from .errors import FormatError, NumericError, TapNotFeatureMap, UsageError
from .localize import DEFAULT_IOU_THRESHOLD, DEFAULT_THRESHOLD, THRESHOLD_RANGE, cam_similarity
from .pipeline import (
    ModelSource,
    RecordFailure,
    draw_box,
    evaluate_manifest,
    load_feature_map,
    localize_cam,
)
from .refnet import forward_to_tap, last_feature_tap, propagate_shapes
from .tensor import image_to_tensor

log = logging.getLogger("eigencam")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


class _Usage(Exception):
    pass


def _source_flags(p, fmap_append=False):
    g = p.add_argument_group("activation source (one of --model or --fmap)")
    g.add_argument("--model", metavar="DIR", help="model directory (model.json + weight dumps)")
    g.add_argument("--tap", type=int, metavar="N", help="0-based layer index to explain (default: last spatial layer)")
    if fmap_append:
        g.add_argument("--fmap", action="append", metavar="FILE",
                       help="activation dump; give it twice, once per image")
    else:
        g.add_argument("--fmap", metavar="FILE", help="activation dump (C, H, W) in FMAP format")


def _cam_flags(p):
    p.add_argument("--component", type=int, default=1, metavar="K", help="singular component (default 1)")
    p.add_argument("--center", action="store_true", help="mean-center channels before factorizing")


def _threshold_flag(p):
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, metavar="F",
                   help="binarization cut as a fraction of 255 (default 0.10)")


def build_parser():
    parser = argparse.ArgumentParser(prog="eigencam", description="Eigen-CAM explanations and localization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explain", help="write a CAM overlay and the raw map")
    p.add_argument("image")
    _source_flags(p)
    _cam_flags(p)
    p.add_argument("--alpha", type=float, default=0.5, metavar="F", help="overlay opacity in [0, 1]")
    p.add_argument("--out", required=True, metavar="PATH", help="overlay image (PPM/PGM); raw map goes to PATH.cam.fmap")

    p = sub.add_parser("localize", help="bounding box of the largest CAM segment")
    p.add_argument("image")
    _source_flags(p)
    _cam_flags(p)
    _threshold_flag(p)
    p.add_argument("--annotate", metavar="PATH", help="also write the image with the box drawn")
    p.add_argument("--out", metavar="PATH", help="write JSON here instead of stdout")

    p = sub.add_parser("evaluate", help="localization error over a JSONL manifest")
    p.add_argument("manifest")
    _source_flags(p)
    _cam_flags(p)
    _threshold_flag(p)
    p.add_argument("--iou-threshold", type=float, default=DEFAULT_IOU_THRESHOLD, metavar="F")
    p.add_argument("--gate-on-classification", action="store_true",
                   help="count a hit only when the record is flagged classified_correctly")
    p.add_argument("--jobs", type=int, default=1, metavar="N")
    p.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")

    p = sub.add_parser("compare", help="similarity of the CAMs of two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    _source_flags(p, fmap_append=True)
    _cam_flags(p)
    _threshold_flag(p)
    p.add_argument("--out", metavar="PATH")

    p = sub.add_parser("dump-activations", help="run the model to --tap and write an FMAP dump")
    p.add_argument("image")
    p.add_argument("--model", required=True, metavar="DIR")
    p.add_argument("--tap", type=int, metavar="N")
    p.add_argument("--out", required=True, metavar="PATH")
    return parser


def _validate(args):
    cmd = args.command
    fmap = getattr(args, "fmap", None)
    if cmd != "dump-activations":
        if args.model and fmap:
            raise _Usage("--model and --fmap are mutually exclusive")
        if args.tap is not None and not args.model:
            raise _Usage("--tap needs --model")
        if cmd in ("explain", "localize", "compare") and not (args.model or fmap):
            raise _Usage("give an activation source: --model DIR or --fmap FILE")
        if cmd == "evaluate" and fmap:
            raise _Usage("evaluate reads dumps from the manifest's \"fmap\" field; --fmap is not accepted")
        if cmd == "compare" and fmap and len(fmap) != 2:
            raise _Usage("compare needs --fmap twice (one per image)")
        if args.component < 1:
            raise _Usage("--component must be >= 1")
    if args.tap is not None and args.tap < 0:
        raise _Usage("--tap must be >= 0")
    if hasattr(args, "threshold"):
        lo, hi = THRESHOLD_RANGE
        if not lo <= args.threshold <= hi:
            raise _Usage(f"--threshold must lie in [{lo}, {hi}]")
    if hasattr(args, "alpha") and not 0.0 <= args.alpha <= 1.0:
        raise _Usage("--alpha must lie in [0, 1]")
    if hasattr(args, "iou_threshold") and not 0.0 < args.iou_threshold <= 1.0:
        raise _Usage("--iou-threshold must lie in (0, 1]")
    if hasattr(args, "jobs") and args.jobs < 1:
        raise _Usage("--jobs must be >= 1")


def _model_source(args):
    model = formats.read_model(args.model)
    tap = args.tap if args.tap is not None else last_feature_tap(model)
    if tap >= len(model.layers) or len(propagate_shapes(model)[tap]) != 3:
        raise TapNotFeatureMap(f"layer {tap} does not output a (C, H, W) feature map")
    return ModelSource(model, tap)


def _cfg(args):
    return CamConfig(component=args.component, center=args.center)


def _emit(doc, out):
    text = formats.dumps_report(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _feature_map(args, image, fmap_path=None):
    if args.model:
        return _model_source(args)(image)
    return load_feature_map(fmap_path or args.fmap)


def cmd_explain(args):
    image = formats.read_image(args.image)
    fm = _feature_map(args, image)
    amap = quantize(eigen_cam(fm, _cfg(args)), image.height, image.width)
    out = Path(args.out)
    formats.write_image(out, overlay(image, amap.quantized, args.alpha))
    cam_path = Path(f"{out}.cam.fmap")
    formats.write_fmap(cam_path, amap.values)
    _emit({"overlay": str(out), "cam": str(cam_path), "component": amap.component, "sigma": amap.sigma}, None)


def cmd_localize(args):
    image = formats.read_image(args.image)
    fm = _feature_map(args, image)
    amap = quantize(eigen_cam(fm, _cfg(args)), image.height, image.width)
    box, fallback = localize_cam(amap.quantized, args.threshold)
    if args.annotate:
        formats.write_image(args.annotate, draw_box(image, box))
    _emit({"box": box.as_list(), "threshold": args.threshold, "fallback": fallback}, args.out)


def cmd_evaluate(args):
    records = formats.read_manifest(args.manifest)
    source = _model_source(args) if args.model else None
    log.info("evaluating %d records with %d job(s)", len(records), args.jobs)
    report = evaluate_manifest(
        records,
        source=source,
        cfg=_cfg(args),
        threshold_fraction=args.threshold,
        iou_threshold=args.iou_threshold,
        gate_on_classification=args.gate_on_classification,
        jobs=args.jobs,
    )
    log.info("error rate %.4f", report["aggregate"]["error_rate"])
    _emit(report, args.out)


def cmd_compare(args):
    img_a = formats.read_image(args.image_a)
    img_b = formats.read_image(args.image_b)
    if (img_a.height, img_a.width) != (img_b.height, img_b.width):
        raise _Usage(f"image sizes differ: {img_a.width}x{img_a.height} vs {img_b.width}x{img_b.height}")
    fmaps = args.fmap or [None, None]
    cfg = _cfg(args)
    cams = []
    for img, fmap_path in zip((img_a, img_b), fmaps):
        fm = _feature_map(args, img, fmap_path)
        cams.append(quantize(eigen_cam(fm, cfg), img.height, img.width).quantized)
    sim = cam_similarity(cams[0], cams[1], args.threshold)
    _emit({"pearson": sim.pearson, "mask_iou": sim.mask_iou, "undefined": sim.undefined}, args.out)


def cmd_dump(args):
    source = _model_source(args)
    image = formats.read_image(args.image)
    fm = forward_to_tap(source.model, image_to_tensor(image), source.tap)
    formats.write_fmap(args.out, fm.data)
    _emit({"fmap": str(args.out), "dims": list(fm.shape), "tap": source.tap}, None)


COMMANDS = {
    "explain": cmd_explain,
    "localize": cmd_localize,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "dump-activations": cmd_dump,
}


def _fail(code, kind, message):
    print(f"eigencam: error: {kind}: {message}", file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        _validate(args)
        COMMANDS[args.command](args)
    except _Usage as exc:
        return _fail(EXIT_USAGE, "usage", exc)
    except RecordFailure as exc:
        err = exc.error
        code = EXIT_NUMERIC if isinstance(err, NumericError) else EXIT_IO
        if isinstance(err, UsageError):
            code = EXIT_USAGE
        return _fail(code, type(err).__name__, exc)
    except UsageError as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, exc)
    except NumericError as exc:
        return _fail(EXIT_NUMERIC, type(exc).__name__, exc)
    except (FormatError, OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        return _fail(EXIT_IO, type(exc).__name__, exc)
    except ValueError as exc:
        return _fail(EXIT_USAGE, type(exc).__name__, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
