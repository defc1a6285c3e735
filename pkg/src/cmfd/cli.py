"""``cmfd`` command line: detect, synth, eval.

Exit codes: 0 clean verdict / success, 3 forged verdict, 64 usage error,
65 no or bad data (empty manifest, image too small for a fragment), 66
unreadable input, 70 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from PIL import Image

from . import __version__
from .config import CONFIG_ENV, Config, load_config
from .ecdc import run_pipeline, write_mask_png
from .errors import CmfdError, DecodeError, InvalidInputError
from .evalkit import batch_evaluate, default_jobs, load_manifest, render_overlay, write_report
from .forgerylab import SCENARIOS, attack_suite, write_suite
from .imgcore import GrayImage, read_raster

EXIT_OK = 0
EXIT_FORGED = 3
EXIT_USAGE = 64
EXIT_NODATA = 65
EXIT_DATAERR = 65
EXIT_NOINPUT = 66
EXIT_SOFTWARE = 70

log = logging.getLogger("cmfd")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad flags; route that to 64 instead."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _overrides(args) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if getattr(args, "mode", None):
        out["blockfeat.mode"] = args.mode
    return out


def _config(args) -> Config:
    try:
        return load_config(args.config, _overrides(args))
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def _add_config_flags(p: argparse.ArgumentParser, mode: bool = True) -> None:
    if mode:
        p.add_argument("--mode", choices=("dct", "pcet"), help="block feature used by the domain growth")
    p.add_argument("--config", help=f"key = value config file (fallback: ${CONFIG_ENV})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key (repeatable)")


def cmd_detect(args) -> int:
    cfg = _config(args)
    path = Path(args.input)
    raster = read_raster(path)
    img = GrayImage.from_array(raster)
    det = run_pipeline(img, cfg)
    mask_path = Path(args.mask) if args.mask else path.with_name(path.stem + ".mask.png")
    write_mask_png(det.mask, mask_path)
    if args.overlay:
        Image.fromarray(render_overlay(det.mask, raster)).save(args.overlay)
    if args.matches:
        with open(args.matches, "w") as fh:
            for p in det.filtered:
                fh.write(p.to_json() + "\n")
    summary = {
        "input": str(path),
        "forged": det.forged,
        "forged_pixels": det.mask.area,
        "sift": len(det.sift),
        "lpsd": len(det.lpsd),
        "matches": len(det.matches),
        "filtered": len(det.filtered),
        "mask": str(mask_path),
    }
    print(json.dumps(summary))
    return EXIT_FORGED if det.forged else EXIT_OK


def cmd_synth(args) -> int:
    raster = read_raster(Path(args.base))
    cases = attack_suite(raster, args.scenario, seed=args.seed, frag=args.frag)
    manifest = write_suite(cases, args.out, args.scenario, base=raster if args.with_original else None)
    print(json.dumps({"manifest": str(manifest), "cases": len(cases) + bool(args.with_original)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    manifest = load_manifest(args.manifest)
    if not manifest["cases"]:
        print(f"cmfd: {args.manifest}: manifest lists no cases", file=sys.stderr)
        return EXIT_NODATA
    jobs = args.jobs if args.jobs is not None else default_jobs()
    result = batch_evaluate(manifest, cfg, jobs=max(1, jobs))
    report = Path(args.report) if args.report else Path(args.manifest).with_name("report.json")
    rpath, cpath = write_report(result, report, args.curves)
    p = result.pixel
    print(json.dumps({"report": str(rpath), "curves": str(cpath), "p": p.p, "r": p.r, "f1": p.f1, "errors": result.errors}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cmfd", description="Copy-move forgery detection (keypoints + evolving circular domains).")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="detect copy-move forgery in one image")
    d.add_argument("input")
    d.add_argument("--mask", help="mask PNG output (default: <input>.mask.png)")
    d.add_argument("--overlay", help="write the image with detected pixels tinted")
    d.add_argument("--matches", help="write surviving matches as JSON lines")
    d.add_argument("--jobs", type=int, default=None, help="accepted for symmetry; detection runs in-process")
    _add_config_flags(d)
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("synth", help="synthesize an attack suite from a base image")
    s.add_argument("base")
    s.add_argument("--scenario", required=True, choices=sorted(SCENARIOS))
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frag", type=int, default=None, help="fragment side in pixels (default: min side / 5)")
    s.add_argument("--with-original", action="store_true", help="also write the untampered base as a control case")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("eval", help="run detection over a suite manifest and score it")
    e.add_argument("manifest")
    e.add_argument("--report", help="report JSON path (default: report.json beside the manifest)")
    e.add_argument("--curves", help="curves CSV path (default: report path with .csv)")
    e.add_argument("--jobs", type=int, default=None, help="worker processes (default: logical cores)")
    _add_config_flags(e)
    e.set_defaults(func=cmd_eval)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"cmfd: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DecodeError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"cmfd: cannot read input: {exc}", file=sys.stderr)
        return EXIT_NOINPUT
    except InvalidInputError as exc:
        print(f"cmfd: {exc}", file=sys.stderr)
        return EXIT_DATAERR
    except CmfdError as exc:
        print(f"cmfd: {exc}", file=sys.stderr)
        return EXIT_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
