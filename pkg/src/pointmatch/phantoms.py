"""Synthetic analytic phantoms for tests, benchmarks and demos.

Each phantom is a closed-form scalar field over world millimeters, rendered
onto a voxel grid without any interpolation, so ground truth stays exact: a
content translation is exact by construction, and a warped pair is built by
evaluating the same field through an analytic displacement whose inverse is
recovered numerically to floating precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .volume_io import Volume, WorldFrame

Field = Callable[[np.ndarray], np.ndarray]  # (n, 3) mm -> (n,) intensity


def render_field(
    field: Field,
    dims: tuple[int, int, int] = (48, 48, 48),
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5),
    origin_mm: tuple[float, float, float] = (0.0, 0.0, 0.0),
    frame_label: str = "unknown",
) -> Volume:
    """Evaluate a field at every voxel center (values are clipped on store)."""
    nx, ny, nz = dims
    frame = WorldFrame(origin=origin_mm, spacing=spacing_mm, axes=np.eye(3), frame_label=frame_label)
    ii = np.stack(
        np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    pts = frame.voxel_to_world(ii.astype(np.float64))
    values = np.asarray(field(pts), dtype=np.float64).reshape(nx, ny, nz)
    return Volume(voxels=np.clip(values, 0.0, 4096.0).astype(np.float32), frame=frame)


def _extent_mm(dims, spacing) -> np.ndarray:
    return (np.asarray(dims, dtype=np.float64) - 1.0) * np.asarray(spacing, dtype=np.float64)


def body_envelope(extent_mm, edge_mm: float = 8.0, semiaxes_frac=(0.40, 0.37, 0.42)) -> Field:
    """Soft ellipsoidal body mask in [0, 1]: 1 deep inside, 0 in the air.

    The high-contrast outline is what coarse search levels latch onto, the
    same way the body surface anchors whole-image matching on real scans.
    """
    ext = np.asarray(extent_mm, dtype=np.float64)
    center = ext / 2.0
    semi = np.asarray(semiaxes_frac, dtype=np.float64) * ext
    sharp = float(np.mean(semi)) / edge_mm

    def mask(pts: np.ndarray) -> np.ndarray:
        r = np.sqrt(np.sum(((pts - center) / semi) ** 2, axis=1))
        return 1.0 / (1.0 + np.exp(np.clip((r - 1.0) * sharp, -60.0, 60.0)))

    return mask


def ripple_field(extent_mm, seed: int = 0, n_waves: int = 60, min_wavelength: float = 16.0) -> Field:
    """Zero-mean band-limited random texture: a sum of random plane cosines."""
    rng = np.random.default_rng(seed)
    ext = np.asarray(extent_mm, dtype=np.float64)
    span = float(np.max(ext))
    wavelengths = np.exp(rng.uniform(np.log(min_wavelength), np.log(1.5 * span), size=n_waves))
    dirs = rng.normal(size=(n_waves, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    freqs = dirs * (2.0 * np.pi / wavelengths)[:, None]
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_waves)
    amps = rng.uniform(0.6, 1.0, size=n_waves) / np.sqrt(n_waves)

    def field(pts: np.ndarray) -> np.ndarray:
        out = np.zeros(pts.shape[0])
        for f, ph, a in zip(freqs, phases, amps):
            out = out + a * np.cos(pts @ f + ph)
        return out

    return field


AIR_VALUE = 20.0


def blob_field(extent_mm, seed: int = 0, n_blobs: int = 18) -> Field:
    """Body with internal blobs of assorted widths plus faint texture."""
    rng = np.random.default_rng(seed)
    ext = np.asarray(extent_mm, dtype=np.float64)
    body = body_envelope(ext)
    centers = rng.uniform(0.22, 0.78, size=(n_blobs, 3)) * ext
    sigmas = rng.uniform(6.0, 20.0, size=n_blobs)
    amps = rng.uniform(700.0, 2400.0, size=n_blobs)
    grad = rng.uniform(1.0, 3.0, size=3) / np.maximum(ext, 1.0)
    ripple = ripple_field(ext, seed=seed + 7777, n_waves=40)

    def field(pts: np.ndarray) -> np.ndarray:
        inner = 900.0 + 500.0 * (pts @ grad) + 260.0 * ripple(pts)
        for c, s, a in zip(centers, sigmas, amps):
            d2 = np.sum((pts - c) ** 2, axis=1)
            inner = inner + a * np.exp(-0.5 * d2 / (s * s))
        return AIR_VALUE + body(pts) * inner

    return field


def twinblob_field(
    extent_mm, seed: int = 0, n_pairs: int = 6, jitter: float = 0.03, column_period_mm: float = 26.0
) -> Field:
    """Body with repetitive structure: mirrored twin blobs and a periodic column.

    Each blob has an almost identical twin mirrored across the left-right
    midplane (the way paired organs confuse purely local matching), and a
    column of identical blobs repeats along z like vertebrae, so matching can
    alias by one period; global context or round-trip consistency is needed
    to pick the right instance.
    """
    rng = np.random.default_rng(seed)
    ext = np.asarray(extent_mm, dtype=np.float64)
    body = body_envelope(ext)
    base = rng.uniform([0.58, 0.25, 0.25], [0.78, 0.75, 0.75], size=(n_pairs, 3)) * ext
    mirrored = base.copy()
    mirrored[:, 0] = ext[0] - mirrored[:, 0]
    centers = np.concatenate([base, mirrored], axis=0)
    sigmas = np.tile(rng.uniform(7.0, 15.0, size=n_pairs), 2)
    amps = np.tile(rng.uniform(900.0, 2000.0, size=n_pairs), 2)
    amps = amps * (1.0 + rng.uniform(-jitter, jitter, size=2 * n_pairs))

    column_z = np.arange(0.18 * ext[2], 0.82 * ext[2], column_period_mm)
    column = np.stack(
        [np.full(column_z.shape, 0.5 * ext[0]), np.full(column_z.shape, 0.40 * ext[1]), column_z], axis=1
    )
    centers = np.concatenate([centers, column], axis=0)
    sigmas = np.concatenate([sigmas, np.full(column_z.shape, 8.0)])
    amps = np.concatenate([amps, np.full(column_z.shape, 1700.0)])
    ripple = ripple_field(ext, seed=seed + 7777, n_waves=40)

    def field(pts: np.ndarray) -> np.ndarray:
        inner = 900.0 + 110.0 * ripple(pts)
        for c, s, a in zip(centers, sigmas, amps):
            d2 = np.sum((pts - c) ** 2, axis=1)
            inner = inner + a * np.exp(-0.5 * d2 / (s * s))
        return AIR_VALUE + body(pts) * inner

    return field


def ramp_field(extent_mm) -> Field:
    """Body filled with monotone ramps of distinct curvature per axis.

    Strictly different derivatives everywhere keep every neighborhood unique,
    unlike a single linear ramp whose level planes are ambiguous.
    """
    ext = np.asarray(extent_mm, dtype=np.float64)
    body = body_envelope(ext)

    def field(pts: np.ndarray) -> np.ndarray:
        t = np.clip(pts / ext, 0.0, 1.0)
        inner = 500.0 + 1000.0 * t[:, 0] + 1200.0 * t[:, 1] ** 2 + 1000.0 * np.sqrt(t[:, 2])
        return AIR_VALUE + body(pts) * inner

    return field


def texture_field(extent_mm, seed: int = 0, n_waves: int = 60) -> Field:
    """Body filled with strong broadband texture."""
    ext = np.asarray(extent_mm, dtype=np.float64)
    body = body_envelope(ext)
    ripple = ripple_field(ext, seed=seed, n_waves=n_waves)

    def field(pts: np.ndarray) -> np.ndarray:
        return AIR_VALUE + body(pts) * (1500.0 + 1100.0 * ripple(pts))

    return field


PHANTOM_KINDS = ("blobs", "ramps", "texture", "twinblobs")


def phantom_field(kind: str, extent_mm, seed: int = 0) -> Field:
    if kind == "blobs":
        return blob_field(extent_mm, seed)
    if kind == "ramps":
        return ramp_field(extent_mm)
    if kind == "texture":
        return texture_field(extent_mm, seed)
    if kind == "twinblobs":
        return twinblob_field(extent_mm, seed)
    raise ValueError(f"unknown phantom kind {kind!r}, expected one of {PHANTOM_KINDS}")


def make_phantom(
    kind: str,
    seed: int = 0,
    dims: tuple[int, int, int] = (48, 48, 48),
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5),
) -> Volume:
    field = phantom_field(kind, _extent_mm(dims, spacing_mm), seed)
    return render_field(field, dims, spacing_mm)


def two_blob_phantom(
    separation_mm: float = 60.0,
    dims: tuple[int, int, int] = (48, 48, 48),
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5),
) -> tuple[Volume, np.ndarray, np.ndarray]:
    """Two distinguishable blobs along x; returns (volume, center_a, center_b)."""
    ext = _extent_mm(dims, spacing_mm)
    mid = ext / 2.0
    a = mid - np.array([separation_mm / 2.0, 0.0, 0.0])
    b = mid + np.array([separation_mm / 2.0, 0.0, 0.0])

    def field(pts: np.ndarray) -> np.ndarray:
        da = np.sum((pts - a) ** 2, axis=1)
        db = np.sum((pts - b) ** 2, axis=1)
        return 100.0 + 3000.0 * np.exp(-0.5 * da / 81.0) + 2100.0 * np.exp(-0.5 * db / 144.0)

    return render_field(field, dims, spacing_mm), a, b


def translate_content(volume: Volume, shift_voxels) -> Volume:
    """Shift the voxel content by whole voxels (zero fill), same frame.

    The world-space ground truth for a point p is p + shift_voxels * spacing
    (axes are assumed identity-aligned for phantoms).
    """
    shift = np.asarray(shift_voxels, dtype=np.int64)
    src = volume.voxels
    out = np.zeros_like(src)
    src_slices = []
    dst_slices = []
    for a in range(3):
        s = int(shift[a])
        n = src.shape[a]
        if abs(s) >= n:
            return Volume(voxels=out, frame=volume.frame)
        if s >= 0:
            src_slices.append(slice(0, n - s))
            dst_slices.append(slice(s, n))
        else:
            src_slices.append(slice(-s, n))
            dst_slices.append(slice(0, n + s))
    out[tuple(dst_slices)] = src[tuple(src_slices)]
    return Volume(voxels=out, frame=volume.frame)


def sample_structured_points(
    volume: Volume,
    n: int,
    seed: int = 0,
    margin_mm: float = 24.0,
    min_value: float = 400.0,
    max_value: float = 3600.0,
) -> np.ndarray:
    """Seeded in-body query points: inside the margin and on actual structure.

    The intensity window keeps queries off the air background and off
    saturated plateaus, where localization is inherently ambiguous.
    """
    rng = np.random.default_rng(seed)
    lo, hi = volume.world_bounds()
    lo = lo + margin_mm
    hi = hi - margin_mm
    if np.any(hi <= lo):
        raise ValueError("margin leaves no interior")
    picked = []
    tries = 0
    while len(picked) < n:
        tries += 1
        if tries > 500 * n:
            raise RuntimeError("could not find enough structured points; widen the intensity window")
        p = rng.uniform(lo, hi)
        idx = np.floor(volume.frame.world_to_voxel(p) + 0.5).astype(int)
        if min_value <= volume.voxels[idx[0], idx[1], idx[2]] <= max_value:
            picked.append(p)
    return np.array(picked)


@dataclass(frozen=True)
class SmoothWarp:
    """Analytic sinusoidal displacement applied on the target side.

    The target volume stores field(y + displacement(y)); the point in the
    target corresponding to source point p solves y + displacement(y) = p,
    recovered by fixed-point iteration (the displacement is a contraction).
    """

    freqs: np.ndarray  # (w, 3) rad/mm
    phases: np.ndarray  # (w, 3)
    amps: np.ndarray  # (w, 3) mm

    def displacement(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        out = np.zeros_like(pts, dtype=np.float64)
        for w in range(self.freqs.shape[0]):
            phase = pts @ self.freqs[w]
            for c in range(3):
                out[:, c] += self.amps[w, c] * np.sin(phase + self.phases[w, c])
        return out

    def map_source_to_target(self, p, max_iter: int = 80, tol: float = 1e-10) -> np.ndarray:
        p = np.asarray(p, dtype=np.float64).reshape(3)
        y = p.copy()
        for _ in range(max_iter):
            y_next = p - self.displacement(y[None, :])[0]
            if np.max(np.abs(y_next - y)) < tol:
                y = y_next
                break
            y = y_next
        residual = np.linalg.norm(y + self.displacement(y[None, :])[0] - p)
        if residual > 1e-6:
            raise RuntimeError(f"warp inversion did not converge (residual {residual:.2e})")
        return y


def make_smooth_warp(seed: int, extent_mm, amplitude_mm: float = 6.0, n_waves: int = 3) -> SmoothWarp:
    """Random smooth displacement with |grad| safely below 1 (invertible)."""
    rng = np.random.default_rng(seed)
    span = float(np.max(np.asarray(extent_mm, dtype=np.float64)))
    wavelengths = rng.uniform(1.2 * span, 2.5 * span, size=n_waves)
    dirs = rng.normal(size=(n_waves, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    freqs = dirs * (2.0 * np.pi / wavelengths)[:, None]
    amps = rng.uniform(0.5, 1.0, size=(n_waves, 3)) * (amplitude_mm / n_waves)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=(n_waves, 3))
    # contraction check: sum over waves of amp * |freq| must stay < 1
    lipschitz = float(np.sum(np.max(amps, axis=1) * np.linalg.norm(freqs, axis=1)))
    if lipschitz >= 0.9:
        raise ValueError(f"warp too aggressive (lipschitz {lipschitz:.2f})")
    return SmoothWarp(freqs=freqs, phases=phases, amps=amps)


def warped_pair(
    kind: str = "blobs",
    seed: int = 0,
    dims: tuple[int, int, int] = (48, 48, 48),
    spacing_mm: tuple[float, float, float] = (2.5, 2.5, 2.5),
    amplitude_mm: float = 6.0,
    noise_amplitude: float = 0.0,
) -> tuple[Volume, Volume, SmoothWarp]:
    """Source phantom plus a smoothly deformed (optionally noised) target.

    Ground truth: warp.map_source_to_target(query) for any source point.
    """
    ext = _extent_mm(dims, spacing_mm)
    field = phantom_field(kind, ext, seed)
    warp = make_smooth_warp(seed + 1000, ext, amplitude_mm)
    source = render_field(field, dims, spacing_mm)

    noise = ripple_field(ext, seed=seed + 2000, n_waves=40) if noise_amplitude > 0 else None

    def target_field(pts: np.ndarray) -> np.ndarray:
        moved = pts + warp.displacement(pts)
        out = field(moved)
        if noise is not None:
            out = out + noise_amplitude * noise(pts)
        return out

    target = render_field(target_field, dims, spacing_mm)
    return source, target, warp
