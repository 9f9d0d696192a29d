"""Robust estimation of the label-wise intensity-model hyperparameters.

Locations are medians, scales are 1.4826x the median absolute deviation
(the consistency factor for normal data).  Per-label, per-channel centers
come from voxels pooled across example scans; the spreads come from the
dispersion of per-scan statistics and are then inflated (default x5.0) so
the generator covers a much wider intensity range than the examples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, EstimationError, InputError
from .volumes import LabelVolume, Volume

__all__ = ["MAD_SCALE", "robust_location", "robust_scale",
           "GmmHyperParams", "estimate_hyperparams"]

MAD_SCALE = 1.4826

CHANNELS = ("t1", "t2")

# Fallback relative spread when only one example scan exists, and relative
# floor applied to scale estimates (both against the channel intensity range).
SINGLE_SCAN_SPREAD = 0.2
STD_CENTER_FLOOR = 1e-3


def _as_samples(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise InputError("empty sample set")
    if not np.all(np.isfinite(x)):
        raise InputError("samples contain non-finite values")
    return x


def robust_location(samples) -> float:
    """Median; the average of the two middle values for even counts."""
    return float(np.median(_as_samples(samples)))


def robust_scale(samples) -> float:
    """1.4826 x median absolute deviation from the median."""
    x = _as_samples(samples)
    return MAD_SCALE * float(np.median(np.abs(x - np.median(x))))


@dataclass(frozen=True)
class GmmHyperParams:
    """Per-label, per-channel intensity model parameters.

    Arrays have shape (L, C) with C = 2 channels ordered (t1, t2).
    ``std_floor`` (per channel) is the lower bound applied to sampled
    standard deviations by the generator.
    """

    labels: tuple[int, ...]
    mean_center: np.ndarray
    mean_spread: np.ndarray
    std_center: np.ndarray
    std_spread: np.ndarray
    inflation: float = 5.0
    std_floor: tuple[float, float] = (1e-6, 1e-6)
    label_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.labels)
        for name in ("mean_center", "mean_spread", "std_center", "std_spread"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            if a.shape != (n, len(CHANNELS)):
                raise InputError(f"{name} must have shape ({n}, {len(CHANNELS)}), got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise InputError(f"{name} contains non-finite values")
            object.__setattr__(self, name, a)
        if np.any(self.mean_spread < 0) or np.any(self.std_spread < 0):
            raise InputError("spreads must be >= 0")
        if np.any(self.std_center <= 0):
            raise InputError("std_center must be > 0")
        object.__setattr__(self, "labels", tuple(int(l) for l in self.labels))

    def index_of(self, label: int) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InputError(f"no hyperparameters for label {label}") from None

    def to_json(self) -> dict:
        rows = []
        for i, lab in enumerate(self.labels):
            row = {"label": lab, "name": self.label_names.get(lab, f"label_{lab}")}
            for c, ch in enumerate(CHANNELS):
                row[ch] = {
                    "mean_center": float(self.mean_center[i, c]),
                    "mean_spread": float(self.mean_spread[i, c]),
                    "std_center": float(self.std_center[i, c]),
                    "std_spread": float(self.std_spread[i, c]),
                }
            rows.append(row)
        return {"inflation": self.inflation,
                "std_floor": list(self.std_floor),
                "channels": list(CHANNELS),
                "labels": rows}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_json(cls, obj) -> "GmmHyperParams":
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        if list(obj.get("channels", CHANNELS)) != list(CHANNELS):
            raise ConfigError(f"unsupported channel set {obj.get('channels')}")
        rows = obj["labels"]
        labels = tuple(int(r["label"]) for r in rows)
        names = {int(r["label"]): r.get("name", f"label_{r['label']}") for r in rows}
        arrays = {k: np.zeros((len(rows), len(CHANNELS))) for k in
                  ("mean_center", "mean_spread", "std_center", "std_spread")}
        for i, r in enumerate(rows):
            for c, ch in enumerate(CHANNELS):
                for k in arrays:
                    arrays[k][i, c] = float(r[ch][k])
        return cls(labels=labels, inflation=float(obj.get("inflation", 5.0)),
                   std_floor=tuple(obj.get("std_floor", (1e-6, 1e-6))),
                   label_names=names, **arrays)


def estimate_hyperparams(
    scans: Sequence[tuple[Volume, Volume, LabelVolume]],
    inflation: float = 5.0,
    labels: Sequence[int] | None = None,
) -> GmmHyperParams:
    """Estimate per-label hyperparameters from (t1, t2, segmentation) scans.

    Centers are the robust location/scale of voxels pooled across scans;
    mean_spread and std_spread are ``inflation`` times the robust scale of
    the per-scan medians and per-scan scales.  With a single scan those
    cross-scan dispersions are unavailable and the (pre-inflation) spread
    falls back to 0.2x the unfloored scale estimate.
    """
    if len(scans) == 0:
        raise InputError("at least one scan is required")
    if inflation < 0 or not np.isfinite(inflation):
        raise InputError(f"inflation must be finite and >= 0, got {inflation}")
    for t1, t2, seg in scans:
        if not (t1.grid.matches(seg.grid) and t2.grid.matches(seg.grid)):
            raise InputError("each scan's channels and segmentation must share one grid")

    if labels is None:
        all_labels: set[int] = set()
        for _, _, seg in scans:
            all_labels.update(seg.label_table)
        labels = sorted(all_labels)
    labels = [int(l) for l in labels]
    names: dict[int, str] = {}
    for _, _, seg in scans:
        for lab, name in seg.label_table.items():
            names.setdefault(int(lab), name)

    n_l, n_c = len(labels), len(CHANNELS)
    mean_center = np.zeros((n_l, n_c))
    mean_spread = np.zeros((n_l, n_c))
    std_center = np.zeros((n_l, n_c))
    std_spread = np.zeros((n_l, n_c))

    channel_data = [[t1.data, t2.data] for t1, t2, _ in scans]
    floors = []
    for c in range(n_c):
        vals = np.concatenate([channel_data[s][c].ravel() for s in range(len(scans))])
        rng_c = float(vals.max() - vals.min())
        floors.append(max(STD_CENTER_FLOOR * rng_c, 1e-12))

    for i, lab in enumerate(labels):
        for c in range(n_c):
            pooled = []
            per_scan_loc = []
            per_scan_scale = []
            for s, (_, _, seg) in enumerate(scans):
                vox = channel_data[s][c][seg.data == lab]
                if vox.size:
                    pooled.append(vox)
                    per_scan_loc.append(robust_location(vox))
                    per_scan_scale.append(robust_scale(vox))
            if not pooled:
                raise EstimationError(f"label {lab} has no voxels in any scan")
            pooled = np.concatenate(pooled)
            raw_scale = robust_scale(pooled)
            mean_center[i, c] = robust_location(pooled)
            std_center[i, c] = max(raw_scale, floors[c])
            if len(per_scan_loc) >= 2:
                mean_spread[i, c] = inflation * robust_scale(per_scan_loc)
                std_spread[i, c] = inflation * robust_scale(per_scan_scale)
            else:
                fallback = SINGLE_SCAN_SPREAD * raw_scale
                mean_spread[i, c] = inflation * fallback
                std_spread[i, c] = inflation * fallback

    return GmmHyperParams(labels=tuple(labels), mean_center=mean_center,
                          mean_spread=mean_spread, std_center=std_center,
                          std_spread=std_spread, inflation=float(inflation),
                          std_floor=tuple(floors), label_names=names)
