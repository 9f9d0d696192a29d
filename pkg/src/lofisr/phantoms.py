"""Deterministic labeled 3D phantoms standing in for real anatomy.

A phantom is a list of geometric primitives (sphere, box, ellipsoid)
rasterized by voxel-center membership onto a regular grid, later primitives
overwriting earlier ones.  Rendering returns the intensity image, the label
volume, and the exact per-label voxel counts, so every downstream statistic
has a known ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError
from .volumes import LabelVolume, Volume, default_affine, voxel_to_world

__all__ = ["Primitive", "PhantomSpec", "PhantomRender", "render",
           "phantom_spec_from_json", "phantom_spec_to_json", "toy_phantom_spec"]

_KINDS = ("sphere", "box", "ellipsoid")


@dataclass(frozen=True)
class Primitive:
    """One shape: ``size`` is (radius,)*3 for spheres, full edge lengths for
    boxes, and semi-axes for ellipsoids, all in mm."""

    kind: str
    label: int
    center: tuple[float, float, float]
    size: tuple[float, float, float]
    intensity: float

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown primitive kind {self.kind!r}")
        if self.label == 0:
            raise ConfigError("primitive labels must be distinct from background (0)")
        if any(s <= 0 for s in self.size):
            raise ConfigError(f"primitive size must be positive, got {self.size}")

    def half_extent(self) -> tuple[float, float, float]:
        if self.kind == "box":
            return tuple(s / 2.0 for s in self.size)
        return tuple(self.size)


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    primitives: tuple[Primitive, ...] = ()
    background_intensity: float = 0.0
    texture_std: float = 0.0
    label_names: dict[int, str] = field(default_factory=dict)


@dataclass(frozen=True)
class PhantomRender:
    image: Volume
    labels: LabelVolume
    voxel_counts: dict[int, int]


def _membership(p: Primitive, world: np.ndarray) -> np.ndarray:
    d = world - np.asarray(p.center, dtype=np.float64)
    if p.kind == "sphere":
        return (d ** 2).sum(axis=-1) <= p.size[0] ** 2
    if p.kind == "box":
        half = np.asarray(p.size) / 2.0
        return np.all(np.abs(d) <= half, axis=-1)
    return ((d / np.asarray(p.size)) ** 2).sum(axis=-1) <= 1.0


def render(spec: PhantomSpec, rng: np.random.Generator | None = None) -> PhantomRender:
    """Rasterize the phantom; same spec + seed gives bit-identical output."""
    dims = tuple(int(d) for d in spec.dims)
    affine = default_affine(spec.spacing)
    lo_world = voxel_to_world(affine, np.array([-0.5, -0.5, -0.5]))
    hi_world = voxel_to_world(affine, np.asarray(dims, dtype=np.float64) - 0.5)
    for p in spec.primitives:
        half = np.asarray(p.half_extent())
        c = np.asarray(p.center)
        if np.any(c - half < lo_world) or np.any(c + half > hi_world):
            raise InputError(f"primitive with label {p.label} extends outside the grid")

    ii, jj, kk = np.meshgrid(*(np.arange(n) for n in dims), indexing="ij")
    world = voxel_to_world(affine, np.stack([ii, jj, kk], axis=-1))

    labels = np.zeros(dims, dtype=np.int32)
    image = np.full(dims, float(spec.background_intensity))
    for p in spec.primitives:  # later primitives win on overlap
        inside = _membership(p, world)
        labels[inside] = p.label
        image[inside] = p.intensity

    if spec.texture_std > 0:
        if rng is None:
            rng = np.random.default_rng(0)
        image = image + rng.normal(0.0, spec.texture_std, size=dims)

    table = {0: "background"}
    for p in spec.primitives:
        table[p.label] = spec.label_names.get(p.label, f"label_{p.label}")
    table.update({int(k): str(v) for k, v in spec.label_names.items()})

    counts = {lab: int((labels == lab).sum()) for lab in table}
    return PhantomRender(
        image=Volume(image, spec.spacing, affine),
        labels=LabelVolume(labels, spec.spacing, affine, table),
        voxel_counts=counts,
    )


def phantom_spec_to_json(spec: PhantomSpec) -> dict:
    return {
        "dims": list(spec.dims),
        "spacing": list(spec.spacing),
        "background_intensity": spec.background_intensity,
        "texture_std": spec.texture_std,
        "label_names": {str(k): v for k, v in spec.label_names.items()},
        "primitives": [
            {"kind": p.kind, "label": p.label, "center": list(p.center),
             "size": list(p.size), "intensity": p.intensity}
            for p in spec.primitives
        ],
    }


def phantom_spec_from_json(obj) -> PhantomSpec:
    if isinstance(obj, (str, Path)):
        obj = json.loads(Path(obj).read_text())
    known = {"dims", "spacing", "background_intensity", "texture_std",
             "label_names", "primitives"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown phantom spec keys: {sorted(unknown)}")
    prims = tuple(
        Primitive(kind=p["kind"], label=int(p["label"]), center=tuple(p["center"]),
                  size=tuple(p["size"]), intensity=float(p["intensity"]))
        for p in obj.get("primitives", ())
    )
    return PhantomSpec(
        dims=tuple(obj["dims"]),
        spacing=tuple(obj.get("spacing", (1.0, 1.0, 1.0))),
        primitives=prims,
        background_intensity=float(obj.get("background_intensity", 0.0)),
        texture_std=float(obj.get("texture_std", 0.0)),
        label_names={int(k): str(v) for k, v in obj.get("label_names", {}).items()},
    )


def toy_phantom_spec(seed: int, dims=(32, 32, 32), spacing=(1.0, 1.0, 1.0),
                     texture_std: float = 0.01) -> PhantomSpec:
    """A four-structure pseudo-anatomy with per-seed geometric jitter.

    Label 1 is a large ellipsoid "tissue" body, labels 2-4 are internal
    structures at distinct nominal intensities; sizes and positions wobble
    with the seed so a pool of phantoms has subject-like variation.
    """
    rng = np.random.default_rng(np.random.SeedSequence([0x70AD, seed]))
    extent = np.asarray(dims) * np.asarray(spacing)
    c = extent / 2.0

    def jitter(scale):
        return rng.uniform(-scale, scale, size=3)

    body_ax = extent * 0.40 * rng.uniform(0.92, 1.0, size=3)
    prims = [
        Primitive("ellipsoid", 1, tuple(c + jitter(extent[0] * 0.02)), tuple(body_ax), 0.35),
        Primitive("sphere", 2, tuple(c + extent * 0.12 + jitter(extent[0] * 0.03)),
                  (extent[0] * rng.uniform(0.10, 0.14),) * 3, 0.85),
        Primitive("box", 3, tuple(c - extent * 0.10 + jitter(extent[0] * 0.03)),
                  tuple(extent * rng.uniform(0.16, 0.22, size=3)), 0.55),
        Primitive("sphere", 4, tuple(c + np.array([-1, 1, 0]) * extent * 0.16
                                     + jitter(extent[0] * 0.02)),
                  (extent[0] * rng.uniform(0.06, 0.09),) * 3, 1.0),
    ]
    names = {1: "tissue", 2: "core", 3: "block", 4: "nodule"}
    return PhantomSpec(dims=tuple(int(d) for d in dims), spacing=tuple(spacing),
                       primitives=tuple(prims), background_intensity=0.0,
                       texture_std=texture_std, label_names=names)
