"""Precision / recall / F1 at image and pixel level, tri-colour overlays and batch runs.

Division-by-zero conventions:

* pixel level: if exactly one of prediction and truth is empty, p = r = F1 = 0;
  if both are empty the report is marked ``degenerate`` and scores 1.
* image level: with no forged images and no alarms, p = r = F1 = 1 and the
  report is marked ``degenerate``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import Config
from .ecdc import CoverageMask, detect, read_mask_png
from .errors import CmfdError, DecodeError, InvalidInputError
from .imgcore import load_grayscale

log = logging.getLogger(__name__)

GREEN = (0, 255, 0)
RED = (255, 0, 0)
WHITE = (255, 255, 255)


@dataclass(frozen=True)
class PixelCounts:
    tp: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn) < 0:
            raise InvalidInputError("counts must be non-negative")


@dataclass
class EvalReport:
    level: str
    counts: PixelCounts
    p: float
    r: float
    f1: float
    degenerate: bool = False
    cases: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "tp": self.counts.tp,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "p": self.p,
            "r": self.r,
            "f1": self.f1,
            "degenerate": self.degenerate,
            "cases": self.cases,
        }


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _mask(m) -> np.ndarray:
    return m.mask if isinstance(m, CoverageMask) else np.asarray(m, dtype=bool)


def pixel_score(pred, truth) -> EvalReport:
    a, b = _mask(pred), _mask(truth)
    if a.shape != b.shape:
        raise InvalidInputError(f"mask shapes differ: {a.shape} vs {b.shape}")
    tp = int(np.count_nonzero(a & b))
    fp = int(np.count_nonzero(a & ~b))
    fn = int(np.count_nonzero(~a & b))
    if tp + fp + fn == 0:
        return EvalReport("pixel", PixelCounts(0, 0, 0), 1.0, 1.0, 1.0, degenerate=True)
    return EvalReport("pixel", PixelCounts(tp, fp, fn), *prf(tp, fp, fn))


def image_score(decisions: Sequence[tuple[bool, bool]]) -> EvalReport:
    """Score ``(predicted_forged, actually_forged)`` decisions."""
    if not decisions:
        raise InvalidInputError("no decisions to score")
    tp = sum(1 for p, t in decisions if p and t)
    fp = sum(1 for p, t in decisions if p and not t)
    fn = sum(1 for p, t in decisions if not p and t)
    if tp + fp + fn == 0:
        return EvalReport("image", PixelCounts(0, 0, 0), 1.0, 1.0, 1.0, degenerate=True)
    return EvalReport("image", PixelCounts(tp, fp, fn), *prf(tp, fp, fn))


def render_tricolor(pred, truth, base) -> np.ndarray:
    """RGB uint8: green = hit, red = false alarm, white = missed truth, base elsewhere."""
    a, b = _mask(pred), _mask(truth)
    base = np.asarray(base, dtype=np.float64)
    if a.shape != b.shape or base.shape[:2] != a.shape:
        raise InvalidInputError("pred, truth and base must share dimensions")
    if base.ndim == 2:
        base = np.repeat(base[..., None], 3, axis=2)
    out = np.clip(np.round(base[..., :3]), 0, 255).astype(np.uint8)
    out[a & b] = GREEN
    out[a & ~b] = RED
    out[~a & b] = WHITE
    return out


def render_overlay(pred, base, tint=RED, alpha: float = 0.5) -> np.ndarray:
    """Source image with detected pixels tinted."""
    a = _mask(pred)
    base = np.asarray(base, dtype=np.float64)
    if base.ndim == 2:
        base = np.repeat(base[..., None], 3, axis=2)
    out = base[..., :3].copy()
    out[a] = (1 - alpha) * out[a] + alpha * np.asarray(tint, dtype=np.float64)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


# --------------------------------------------------------------------------
# Batch evaluation

Detector = Callable[..., CoverageMask]


@dataclass
class BatchResult:
    pixel: EvalReport
    image: Optional[EvalReport]
    curves: list  # rows (attack, attack_param, mean_p, mean_r, mean_f1)
    errors: int = 0

    def to_dict(self) -> dict:
        d = self.pixel.to_dict()
        d["image"] = self.image.to_dict() if self.image else None
        d["errors"] = self.errors
        d["aggregation"] = "p, r and f1 are means over scored forged cases; tp/fp/fn are pooled sums"
        return d


def load_manifest(path) -> dict:
    path = Path(path)
    try:
        m = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise DecodeError(f"cannot read manifest {path}: {exc}") from exc
    if not isinstance(m, dict) or not isinstance(m.get("cases"), list):
        raise InvalidInputError("manifest must be an object with a 'cases' list")
    m["_root"] = str(path.parent)
    return m


def _evaluate_case(entry: dict, root: str, cfg: Config, detector: Optional[Detector]) -> dict:
    cid = entry.get("id", entry.get("dir", "?"))
    out = {"id": cid, "attack": entry.get("attack", "none"), "param": entry.get("param"), "forged": bool(entry.get("forged", True))}
    try:
        d = Path(root) / entry.get("dir", cid)
        img = load_grayscale(d / "forged.png")
        truth = read_mask_png(d / "truth.png") if (d / "truth.png").exists() else CoverageMask.empty(*img.shape)
        if detector is None:
            pred = detect(img, cfg)
        else:
            pred = detector(img, cfg, truth=truth, case=entry)
        rep = pixel_score(pred, truth)
        out.update(p=rep.p, r=rep.r, f1=rep.f1, tp=rep.counts.tp, fp=rep.counts.fp, fn=rep.counts.fn, predicted=pred.any())
    except (CmfdError, OSError, ValueError) as exc:
        out["error"] = str(exc)
    return out


def batch_evaluate(
    manifest,
    cfg: Config | None = None,
    detector: Optional[Detector] = None,
    jobs: int = 1,
) -> BatchResult:
    """Run the detector over every case of a suite manifest and aggregate the scores.

    ``detector(img, cfg, truth=..., case=...)`` replaces the pipeline when
    given (test hook). Case errors are recorded and the run continues.
    """
    cfg = cfg or Config()
    m = load_manifest(manifest) if not isinstance(manifest, dict) else manifest
    root = m.get("_root", ".")
    entries = sorted(m["cases"], key=lambda e: str(e.get("id", e.get("dir"))))
    if jobs > 1 and len(entries) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_evaluate_case, entries, [root] * len(entries), [cfg] * len(entries), [detector] * len(entries)))
    else:
        rows = [_evaluate_case(e, root, cfg, detector) for e in entries]

    scored = [r for r in rows if "error" not in r and r["forged"]]
    tp = sum(r["tp"] for r in scored)
    fp = sum(r["fp"] for r in scored)
    fn = sum(r["fn"] for r in scored)
    mean = lambda k: float(np.mean([r[k] for r in scored])) if scored else 0.0  # noqa: E731
    cases = []
    for r in rows:
        c = {"id": r["id"]}
        if "error" in r:
            c["error"] = r["error"]
        else:
            c.update(p=r["p"], r=r["r"], f1=r["f1"])
        cases.append(c)
    pixel = EvalReport("pixel", PixelCounts(tp, fp, fn), mean("p"), mean("r"), mean("f1"), cases=cases)

    decisions = [(r["predicted"], r["forged"]) for r in rows if "error" not in r]
    image = image_score(decisions) if decisions else None

    groups = defaultdict(list)
    for r in scored:
        groups[(r["attack"], r["param"])].append(r)
    curves = []
    for (attack, param), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] if kv[0][1] is not None else -1)):
        curves.append(
            (attack, param, float(np.mean([x["p"] for x in rs])), float(np.mean([x["r"] for x in rs])), float(np.mean([x["f1"] for x in rs])))
        )
    errors = sum(1 for r in rows if "error" in r)
    return BatchResult(pixel, image, curves, errors)


def write_report(result: BatchResult, report_path, curves_path=None) -> tuple[Path, Path]:
    report_path = Path(report_path)
    curves_path = Path(curves_path) if curves_path else report_path.with_suffix(".csv")
    report_path.write_text(json.dumps(result.to_dict(), indent=2))
    with open(curves_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["attack", "attack_param", "mean_p", "mean_r", "mean_f1"])
        for attack, param, p, r, f1 in result.curves:
            w.writerow([attack, "" if param is None else param, f"{p:.6f}", f"{r:.6f}", f"{f1:.6f}"])
    return report_path, curves_path


def default_jobs() -> int:
    return os.cpu_count() or 1
