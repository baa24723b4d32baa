"""Sparse multi-resolution intensity descriptors.

A descriptor is a vector of intensities sampled at fixed millimeter offsets
around a point. Offsets live in world space, so the sampler adapts to each
volume's voxel spacing with plain nearest-voxel lookups; multiplying the
offsets by a scale factor zooms the same layout in or out without touching
the image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .volume_io import Volume

GRID_KINDS = ("grid3d", "plane_xy", "plane_xz", "plane_yz")


@dataclass(frozen=True)
class OffsetGrid:
    """One part of a descriptor layout: a cubic grid or an axis-aligned plane.

    Offsets are enumerated in a fixed order (ascending z, then y, then x) so
    descriptors are comparable across runs and processes.
    """

    kind: str
    extent: int
    spacing_mm: float
    offsets: np.ndarray  # (count, 3) float64 mm, symmetric around zero

    @property
    def count(self) -> int:
        return self.offsets.shape[0]


def make_offset_grid(kind: str, extent: int = 7, spacing_mm: float = 8.0) -> OffsetGrid:
    if kind not in GRID_KINDS:
        raise ValueError(f"unknown grid kind {kind!r}, expected one of {GRID_KINDS}")
    if extent < 1 or extent % 2 == 0:
        raise ValueError(f"extent must be odd and positive, got {extent}")
    if not spacing_mm > 0:
        raise ValueError(f"spacing_mm must be > 0, got {spacing_mm}")
    half = extent // 2
    steps = (np.arange(extent) - half) * float(spacing_mm)
    zero = np.zeros(1)
    if kind == "grid3d":
        ax_x, ax_y, ax_z = steps, steps, steps
    elif kind == "plane_xy":
        ax_x, ax_y, ax_z = steps, steps, zero
    elif kind == "plane_xz":
        ax_x, ax_y, ax_z = steps, zero, steps
    else:  # plane_yz
        ax_x, ax_y, ax_z = zero, steps, steps
    zz, yy, xx = np.meshgrid(ax_z, ax_y, ax_x, indexing="ij")
    offsets = np.stack([xx.reshape(-1), yy.reshape(-1), zz.reshape(-1)], axis=1)
    offsets.flags.writeable = False
    return OffsetGrid(kind=kind, extent=int(extent), spacing_mm=float(spacing_mm), offsets=offsets)


@dataclass(frozen=True)
class DescriptorSpec:
    """Ordered sequence of offset grids; the sampled vector concatenates them."""

    parts: tuple[OffsetGrid, ...]
    offsets: np.ndarray  # (total_length, 3) float64

    @property
    def total_length(self) -> int:
        return self.offsets.shape[0]

    def part_slice(self, part_index: int) -> slice:
        if not 0 <= part_index < len(self.parts):
            raise IndexError(f"part index {part_index} out of range")
        start = sum(p.count for p in self.parts[:part_index])
        return slice(start, start + self.parts[part_index].count)


def make_spec(parts: Iterable) -> DescriptorSpec:
    """Build a spec from OffsetGrid objects or {kind, extent, spacing_mm} dicts."""
    built = []
    for p in parts:
        if isinstance(p, OffsetGrid):
            built.append(p)
        else:
            built.append(
                make_offset_grid(p["kind"], int(p.get("extent", 7)), float(p["spacing_mm"]))
            )
    if not built:
        raise ValueError("descriptor spec needs at least one part")
    offsets = np.concatenate([p.offsets for p in built], axis=0)
    offsets.flags.writeable = False
    return DescriptorSpec(parts=tuple(built), offsets=offsets)


def spec_to_json(spec: DescriptorSpec) -> str:
    doc = {
        "parts": [
            {"kind": p.kind, "extent": p.extent, "spacing_mm": p.spacing_mm} for p in spec.parts
        ]
    }
    return json.dumps(doc, indent=2)


def spec_from_json(text: str) -> DescriptorSpec:
    doc = json.loads(text)
    return make_spec(doc["parts"])


def load_spec(path) -> DescriptorSpec:
    return spec_from_json(Path(path).read_text())


def default_spec() -> DescriptorSpec:
    """The stock layout: 7^3 grids at 8/20/48/128 mm, three 7x7 planes at 6 mm,
    and a 7^3 grid at 80 mm (1862 samples total)."""
    text = resources.files("pointmatch").joinpath("data/default_descriptor.json").read_text()
    return spec_from_json(text)


@dataclass(frozen=True)
class Descriptor:
    """Sampled intensity vector for one point at one scale."""

    values: np.ndarray  # (total_length,) float32 in [0, 4096]
    point_mm: np.ndarray  # (3,)
    scale: float


def sample_descriptor_batch(
    volume: Volume, points_mm: np.ndarray, spec: DescriptorSpec, scale: float = 1.0
) -> np.ndarray:
    """Sample descriptors for many points at once; returns (n_points, total_length).

    Out-of-volume offsets read as 0. No intermediate image is materialized;
    each value is a single nearest-voxel lookup.
    """
    if not scale > 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    pts = np.ascontiguousarray(np.asarray(points_mm, dtype=np.float64).reshape(-1, 3))
    offsets = np.ascontiguousarray(spec.offsets * float(scale))
    out = np.empty((pts.shape[0], spec.total_length), dtype=np.float32)
    _kernels.gather_values(
        volume.voxels,
        volume.frame.world_to_voxel_matrix(),
        volume.frame.origin,
        pts,
        offsets,
        out,
    )
    return out


def sample_descriptor(
    volume: Volume, point_mm, spec: DescriptorSpec, scale: float = 1.0
) -> Descriptor:
    values = sample_descriptor_batch(volume, np.asarray(point_mm, dtype=np.float64), spec, scale)[0]
    return Descriptor(values=values, point_mm=np.asarray(point_mm, dtype=np.float64), scale=float(scale))


def decode_descriptor(
    desc: Descriptor, spec: DescriptorSpec, part_index: int, out_resolution_mm: float = 1.0
) -> np.ndarray:
    """Render one part's center slice to a regular 2D raster (inspection only).

    For a grid3d part the slice through offset 0 perpendicular to z is used;
    plane parts render whole. The raster covers the part's span at
    ``out_resolution_mm`` pitch and each output pixel takes the nearest
    sample's value. Returned array is [row, col] with col along the first
    in-plane axis and row along the second, both ascending in mm.
    """
    part = spec.parts[part_index]  # raises IndexError for invalid index
    if not out_resolution_mm > 0:
        raise ValueError("out_resolution_mm must be > 0")
    values = desc.values[spec.part_slice(part_index)]
    if part.kind == "grid3d":
        values = values[part.offsets[:, 2] == 0.0]

    # Enumeration within a part is ascending z, then y, then x, so the center
    # slice reshapes directly to [second in-plane axis, first in-plane axis].
    grid = values.reshape(part.extent, part.extent)

    pitch = part.spacing_mm * desc.scale
    half_span = (part.extent // 2) * pitch
    n_out = int(np.floor(2.0 * half_span / out_resolution_mm)) + 1
    coords = -half_span + np.arange(n_out) * out_resolution_mm
    nearest = np.clip(np.floor((coords + half_span) / pitch + 0.5), 0, part.extent - 1).astype(int)
    return grid[np.ix_(nearest, nearest)]
