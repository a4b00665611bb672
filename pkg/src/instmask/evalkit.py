"""Editing-corpus metrics: mask overlap and in/out-of-region pixel change.

A manifest lists samples (image, ground-truth mask, prompts, category); the
evaluator pairs each with an edit run's outputs and reports per-sample and
aggregate IoU, C_m (mean change inside the ground-truth region), C_non
(mean change outside it), and their ratio.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fileio
from .maskgen import BinaryMask
from .schemas import validate_manifest
from .util import worker_count

RATIO_FLOOR = 1e-6  # C_non floor so perfect preservation does not blow up


@dataclass(frozen=True)
class EditingMaskSample:
    sample_id: str
    image: str
    mask: str
    input_text: str
    edit_text: str
    category: str


@dataclass(frozen=True)
class Manifest:
    version: int
    samples: tuple[EditingMaskSample, ...]
    root: Path

    @classmethod
    def load(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        d = fileio.read_json(path)
        validate_manifest(d)
        samples = tuple(
            EditingMaskSample(sample_id=s["id"], image=s["image"],
                              mask=s["mask"], input_text=s["input_text"],
                              edit_text=s["edit_text"], category=s["category"])
            for s in d["samples"])
        return cls(version=int(d["version"]), samples=samples,
                   root=path.parent)


def _as_binary(mask) -> np.ndarray:
    if isinstance(mask, BinaryMask):
        mask = mask.grid
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must be 0 or 1")
    return arr.astype(bool)


def iou(m_gen, m_gt) -> float:
    """Intersection over union of two binary masks; two empty masks give 1."""
    a = _as_binary(m_gen)
    b = _as_binary(m_gt)
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def pixel_change(a, b) -> np.ndarray:
    """Per-pixel mean absolute 8-bit difference across channels, in [0, 255]."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"image shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != np.uint8 or b.dtype != np.uint8:
        raise ValueError("images must be 8-bit")
    diff = np.abs(a.astype(np.float64) - b.astype(np.float64))
    return diff if diff.ndim == 2 else diff.mean(axis=2)


def change_rates(orig, edited, m_gt) -> tuple[float, float]:
    """(C_m, C_non): normalized mean change inside / outside the gt mask."""
    gt = _as_binary(m_gt)
    p = pixel_change(orig, edited)
    if p.shape != gt.shape:
        raise ValueError(f"mask {gt.shape} does not match images {p.shape}")
    n_in = np.count_nonzero(gt)
    n_out = gt.size - n_in
    if n_in == 0 or n_out == 0:
        raise ValueError("ground-truth mask must contain both 0s and 1s")
    c_m = float(p[gt].sum() / (255.0 * n_in))
    c_non = float(p[~gt].sum() / (255.0 * n_out))
    return c_m, c_non


@dataclass
class SampleMetrics:
    sample_id: str
    category: str
    iou: float | None = None
    c_m: float | None = None
    c_non: float | None = None
    ratio: float | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        d = {"id": self.sample_id, "category": self.category}
        if self.error is not None:
            d["error"] = self.error
        else:
            d.update(iou=self.iou, c_m=self.c_m, c_non=self.c_non,
                     ratio=self.ratio)
        return d


@dataclass
class MetricsReport:
    per_sample: list[SampleMetrics]
    aggregates: dict[str, float] = field(default_factory=dict)
    by_category: dict[str, dict[str, float]] = field(default_factory=dict)

    @property
    def error_count(self) -> int:
        return sum(1 for s in self.per_sample if s.error is not None)

    def to_json_dict(self, config: dict | None = None) -> dict:
        return {
            "version": 1,
            "config": config or {},
            "per_sample": [s.to_json_dict() for s in self.per_sample],
            "aggregates": self.aggregates,
            "by_category": self.by_category,
            "errors": self.error_count,
        }


def _aggregate(rows: list[SampleMetrics]) -> dict[str, float]:
    ok = [r for r in rows if r.error is None]
    if not ok:
        return {"count": 0.0}
    return {
        "count": float(len(ok)),
        "mean_iou": float(np.mean([r.iou for r in ok])),
        "mean_c_m": float(np.mean([r.c_m for r in ok])),
        "mean_c_non": float(np.mean([r.c_non for r in ok])),
        "mean_ratio": float(np.mean([r.ratio for r in ok])),
    }


def evaluate_sample(sample: EditingMaskSample, root: Path,
                    outputs_dir: Path) -> SampleMetrics:
    """Metrics for one sample from its edit outputs on disk."""
    try:
        orig = fileio.load_rgb_png(root / sample.image)
        gt = fileio.load_mask_png(root / sample.mask)
        out_dir = outputs_dir / sample.sample_id
        edited = fileio.load_rgb_png(out_dir / "output.png")
        gen_mask = fileio.load_mask_png(out_dir / "final_mask.png")
        c_m, c_non = change_rates(orig, edited, gt)
        return SampleMetrics(
            sample_id=sample.sample_id, category=sample.category,
            iou=iou(gen_mask, gt), c_m=c_m, c_non=c_non,
            ratio=(c_m / max(c_non, RATIO_FLOOR)))
    except (OSError, ValueError) as exc:
        return SampleMetrics(sample_id=sample.sample_id,
                             category=sample.category, error=str(exc))


def evaluate_corpus(manifest: Manifest,
                    outputs_dir: str | Path) -> MetricsReport:
    """Evaluate every manifest sample; failures become per-sample errors."""
    if not manifest.samples:
        raise ValueError("manifest lists no samples")
    outputs_dir = Path(outputs_dir)
    workers = min(worker_count(), len(manifest.samples))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(
                lambda s: evaluate_sample(s, manifest.root, outputs_dir),
                manifest.samples))
    else:
        rows = [evaluate_sample(s, manifest.root, outputs_dir)
                for s in manifest.samples]

    report = MetricsReport(per_sample=rows, aggregates=_aggregate(rows))
    for cat in sorted({r.category for r in rows}):
        report.by_category[cat] = _aggregate(
            [r for r in rows if r.category == cat])
    return report


def format_summary(report: MetricsReport) -> str:
    """Plain-text table over aggregates: IoU, C_m%, C_non%, ratio."""
    header = (f"{'scope':<18}{'n':>5}{'IoU':>8}{'C_m%':>9}{'C_non%':>9}"
              f"{'ratio':>12}")
    lines = [header, "-" * len(header)]

    def row(name: str, agg: dict[str, float]) -> str:
        if agg.get("count", 0) == 0:
            return f"{name:<18}{0:>5}" + " " * 26 + "   (no results)"
        return (f"{name:<18}{int(agg['count']):>5}"
                f"{agg['mean_iou']:>8.3f}"
                f"{100 * agg['mean_c_m']:>9.2f}"
                f"{100 * agg['mean_c_non']:>9.3f}"
                f"{agg['mean_ratio']:>12.2f}")

    lines.append(row("all", report.aggregates))
    for cat, agg in report.by_category.items():
        lines.append(row(cat, agg))
    if report.error_count:
        lines.append(f"errors: {report.error_count}")
    return "\n".join(lines)
