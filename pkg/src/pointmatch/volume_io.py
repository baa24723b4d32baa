"""Loading and world-coordinate access for 3D scalar volumes.

Supported formats are NIfTI-1 (optionally gzip-compressed, single ``.nii``
file) and MetaImage (``.mhd`` + raw data file, or a self-contained ``.mha``).
Volumes are immutable after load: intensities are clamped to [0, 4096] and
never resampled; all geometry is expressed through the world frame read from
the header.
"""

from __future__ import annotations

import gzip
import logging
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

INTENSITY_MIN = 0.0
INTENSITY_MAX = 4096.0

FRAME_RAS = "RAS"
FRAME_LPS = "LPS"
FRAME_UNKNOWN = "unknown"


class VolumeFormatError(ValueError):
    """A volume file could not be parsed or violates a basic constraint."""


def _as_vec3(x, dtype=np.float64) -> np.ndarray:
    a = np.asarray(x, dtype=dtype).reshape(3).copy()
    return a


@dataclass(frozen=True)
class WorldFrame:
    """Affine voxel->world mapping: world = origin + axes @ (spacing * index).

    ``axes`` columns are the unit direction of each voxel axis in world space
    and must be orthonormal; ``spacing`` is strictly positive, in mm/voxel.
    """

    origin: np.ndarray
    spacing: np.ndarray
    axes: np.ndarray
    frame_label: str = FRAME_UNKNOWN

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec3(self.origin))
        object.__setattr__(self, "spacing", _as_vec3(self.spacing))
        axes = np.asarray(self.axes, dtype=np.float64).reshape(3, 3).copy()
        object.__setattr__(self, "axes", axes)
        if not np.all(np.isfinite(self.origin)):
            raise VolumeFormatError("non-finite origin")
        if not np.all(self.spacing > 0):
            raise VolumeFormatError(f"non-positive spacing {self.spacing.tolist()}")
        if np.max(np.abs(axes.T @ axes - np.eye(3))) > 1e-6:
            raise VolumeFormatError("axes columns are not orthonormal")
        for a in (self.origin, self.spacing, self.axes):
            a.flags.writeable = False

    def voxel_to_world(self, index) -> np.ndarray:
        idx = np.asarray(index, dtype=np.float64)
        return (idx * self.spacing) @ self.axes.T + self.origin

    def world_to_voxel(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=np.float64)
        return ((p - self.origin) @ self.axes) / self.spacing

    def world_to_voxel_matrix(self) -> np.ndarray:
        """3x3 matrix M with voxel_index = M @ (world - origin)."""
        return (self.axes / self.spacing[None, :]).T


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar volume with intensities clamped to [0, 4096]."""

    voxels: np.ndarray  # (nx, ny, nz) float32, C-contiguous
    frame: WorldFrame

    def __post_init__(self):
        v = np.ascontiguousarray(self.voxels, dtype=np.float32)
        if v.ndim != 3:
            raise VolumeFormatError(f"expected 3D voxel array, got {v.ndim}D")
        object.__setattr__(self, "voxels", v)
        v.flags.writeable = False

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.voxels.shape  # type: ignore[return-value]

    def world_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned world box spanned by the voxel centers."""
        nx, ny, nz = self.dims
        corners = np.array(
            [[x, y, z] for x in (0, nx - 1) for y in (0, ny - 1) for z in (0, nz - 1)],
            dtype=np.float64,
        )
        pts = self.frame.voxel_to_world(corners)
        return pts.min(axis=0), pts.max(axis=0)

    def contains_world_point(self, p) -> bool:
        """True if the nearest voxel to p exists (consistent with sample_at)."""
        idx = np.floor(self.frame.world_to_voxel(p) + 0.5).astype(np.int64)
        return bool(np.all(idx >= 0) and np.all(idx < np.array(self.dims)))


def clip_intensities(raw: np.ndarray) -> np.ndarray:
    """Clamp to the fixed [0, 4096] intensity domain (negatives map to 0)."""
    return np.clip(raw, INTENSITY_MIN, INTENSITY_MAX).astype(np.float32)


def voxel_to_world(volume: Volume, index) -> np.ndarray:
    return volume.frame.voxel_to_world(index)


def world_to_voxel(volume: Volume, point) -> np.ndarray:
    return volume.frame.world_to_voxel(point)


def sample_at(volume: Volume, point) -> float:
    """Nearest-voxel intensity at a world point; 0 outside the volume."""
    idx = np.floor(volume.frame.world_to_voxel(point) + 0.5).astype(np.int64)
    if np.any(idx < 0) or np.any(idx >= np.array(volume.dims)):
        return 0.0
    return float(volume.voxels[idx[0], idx[1], idx[2]])


# --------------------------------------------------------------------------
# NIfTI-1
# --------------------------------------------------------------------------

_NIFTI_DTYPES = {
    2: np.dtype(np.uint8),
    4: np.dtype(np.int16),
    8: np.dtype(np.int32),
    16: np.dtype(np.float32),
    64: np.dtype(np.float64),
    256: np.dtype(np.int8),
    512: np.dtype(np.uint16),
    768: np.dtype(np.uint32),
}


def _read_maybe_gzip(path: Path) -> bytes:
    with open(path, "rb") as f:
        head = f.read(2)
    if head == b"\x1f\x8b":
        with gzip.open(path, "rb") as g:
            return g.read()
    return path.read_bytes()


def _quaternion_to_rotation(b: float, c: float, d: float) -> np.ndarray:
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a2) if a2 > 0 else 0.0
    return np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )


def _orthonormalize(axes: np.ndarray) -> np.ndarray:
    """Snap direction columns to the nearest orthonormal matrix.

    Header floats are single precision, so honest direction matrices can miss
    exact orthonormality by ~1e-7; anything worse than 1e-3 is rejected as a
    sheared (non-rigid) frame we do not support.
    """
    err = np.max(np.abs(axes.T @ axes - np.eye(3)))
    if err > 1e-3:
        raise VolumeFormatError(f"direction matrix has shear/scale (deviation {err:.2e})")
    u, _, vt = np.linalg.svd(axes)
    return u @ vt


def _frame_from_affine(affine34: np.ndarray, label: str) -> WorldFrame:
    lin = affine34[:, :3]
    spacing = np.linalg.norm(lin, axis=0)
    if np.any(spacing <= 0):
        raise VolumeFormatError(f"non-positive spacing {spacing.tolist()}")
    axes = _orthonormalize(lin / spacing[None, :])
    return WorldFrame(origin=affine34[:, 3], spacing=spacing, axes=axes, frame_label=label)


def load_nifti(path) -> Volume:
    path = Path(path)
    blob = _read_maybe_gzip(path)
    if len(blob) < 352:
        raise VolumeFormatError(f"{path}: too short for a NIfTI-1 file")
    for endian in ("<", ">"):
        (sizeof_hdr,) = struct.unpack_from(endian + "i", blob, 0)
        if sizeof_hdr == 348:
            break
    else:
        raise VolumeFormatError(f"{path}: bad sizeof_hdr, not NIfTI-1")
    magic = struct.unpack_from("4s", blob, 344)[0]
    if magic not in (b"n+1\x00", b"ni1\x00"):
        raise VolumeFormatError(f"{path}: bad NIfTI magic {magic!r}")
    if magic == b"ni1\x00":
        raise VolumeFormatError(f"{path}: two-file NIfTI (.hdr/.img) is not supported")

    dim = struct.unpack_from(endian + "8h", blob, 40)
    datatype, _bitpix = struct.unpack_from(endian + "2h", blob, 70)
    pixdim = struct.unpack_from(endian + "8f", blob, 76)
    (vox_offset,) = struct.unpack_from(endian + "f", blob, 108)
    scl_slope, scl_inter = struct.unpack_from(endian + "2f", blob, 112)
    qform_code, sform_code = struct.unpack_from(endian + "2h", blob, 252)
    quat = struct.unpack_from(endian + "3f", blob, 256)
    qoffset = struct.unpack_from(endian + "3f", blob, 268)
    srow = np.array(struct.unpack_from(endian + "12f", blob, 280), dtype=np.float64).reshape(3, 4)

    ndim = dim[0]
    if ndim < 3:
        raise VolumeFormatError(f"{path}: {ndim}D image, need a 3D volume")
    if ndim > 3 and any(d > 1 for d in dim[4 : 1 + ndim]):
        raise VolumeFormatError(f"{path}: {ndim}D image with non-singleton extra dims")
    nx, ny, nz = (int(d) for d in dim[1:4])
    if min(nx, ny, nz) < 1:
        raise VolumeFormatError(f"{path}: bad dims {(nx, ny, nz)}")

    if datatype not in _NIFTI_DTYPES:
        raise VolumeFormatError(f"{path}: unsupported NIfTI datatype code {datatype}")
    dtype = _NIFTI_DTYPES[datatype].newbyteorder(endian)

    count = nx * ny * nz
    start = int(vox_offset)
    need = start + count * dtype.itemsize
    if len(blob) < need:
        raise VolumeFormatError(f"{path}: truncated voxel data ({len(blob)} < {need} bytes)")
    raw = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
    data = raw.reshape((nx, ny, nz), order="F").astype(np.float64)
    if scl_slope not in (0.0, 1.0) or (scl_slope == 1.0 and scl_inter != 0.0):
        data = data * scl_slope + scl_inter

    if sform_code > 0:
        frame = _frame_from_affine(srow, FRAME_RAS)
        hdr_spacing = np.abs(np.array(pixdim[1:4], dtype=np.float64))
        if np.any(hdr_spacing > 0) and np.max(np.abs(frame.spacing - hdr_spacing)) > 1e-3 * max(
            1.0, float(np.max(hdr_spacing))
        ):
            logger.warning(
                "%s: sform spacing %s disagrees with pixdim %s; using sform",
                path,
                frame.spacing.tolist(),
                hdr_spacing.tolist(),
            )
    elif qform_code > 0:
        spacing = np.abs(np.array(pixdim[1:4], dtype=np.float64))
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        rot = _quaternion_to_rotation(*quat)
        lin = rot * spacing[None, :]
        lin[:, 2] *= qfac
        aff = np.concatenate([lin, np.array(qoffset, dtype=np.float64).reshape(3, 1)], axis=1)
        frame = _frame_from_affine(aff, FRAME_RAS)
    else:
        spacing = np.abs(np.array(pixdim[1:4], dtype=np.float64))
        if np.any(spacing <= 0):
            raise VolumeFormatError(f"{path}: non-positive pixdim {spacing.tolist()}")
        frame = WorldFrame(origin=np.zeros(3), spacing=spacing, axes=np.eye(3), frame_label=FRAME_UNKNOWN)

    return Volume(voxels=clip_intensities(data), frame=frame)


def save_nifti(volume: Volume, path) -> None:
    """Write a single-file NIfTI-1 volume (float32, sform only)."""
    path = Path(path)
    nx, ny, nz = volume.dims
    hdr = bytearray(348)
    struct.pack_into("<i", hdr, 0, 348)
    struct.pack_into("<8h", hdr, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<2h", hdr, 70, 16, 32)  # float32
    struct.pack_into("<8f", hdr, 76, 1.0, *volume.frame.spacing, 1.0, 1.0, 1.0, 1.0)
    struct.pack_into("<f", hdr, 108, 352.0)
    struct.pack_into("<2f", hdr, 112, 1.0, 0.0)
    struct.pack_into("<2h", hdr, 252, 0, 1)  # qform none, sform scanner
    lin = volume.frame.axes * volume.frame.spacing[None, :]
    srow = np.concatenate([lin, volume.frame.origin.reshape(3, 1)], axis=1)
    struct.pack_into("<12f", hdr, 280, *srow.reshape(-1))
    struct.pack_into("4s", hdr, 344, b"n+1\x00")
    payload = bytes(hdr) + b"\x00\x00\x00\x00" + np.asfortranarray(volume.voxels).tobytes(order="F")
    if str(path).endswith(".gz"):
        with gzip.open(path, "wb") as g:
            g.write(payload)
    else:
        path.write_bytes(payload)


# --------------------------------------------------------------------------
# MetaImage (MHD / MHA)
# --------------------------------------------------------------------------

_MHD_DTYPES = {
    "MET_UCHAR": np.dtype(np.uint8),
    "MET_CHAR": np.dtype(np.int8),
    "MET_SHORT": np.dtype(np.int16),
    "MET_USHORT": np.dtype(np.uint16),
    "MET_INT": np.dtype(np.int32),
    "MET_UINT": np.dtype(np.uint32),
    "MET_FLOAT": np.dtype(np.float32),
    "MET_DOUBLE": np.dtype(np.float64),
}


def _parse_mhd_header(path: Path) -> tuple[dict, int]:
    """Key/value header lines; returns fields and the byte offset past the header."""
    fields: dict[str, str] = {}
    offset = 0
    with open(path, "rb") as f:
        while True:
            line = f.readline()
            if not line:
                break
            offset = f.tell()
            text = line.decode("ascii", errors="replace").strip()
            if not text:
                continue
            if "=" not in text:
                raise VolumeFormatError(f"{path}: malformed MetaImage header line {text!r}")
            key, value = (s.strip() for s in text.split("=", 1))
            fields[key] = value
            if key == "ElementDataFile":
                break
    if "ElementDataFile" not in fields:
        raise VolumeFormatError(f"{path}: header has no ElementDataFile")
    return fields, offset


def load_mhd(path) -> Volume:
    path = Path(path)
    fields, data_offset = _parse_mhd_header(path)

    ndims = int(fields.get("NDims", "0"))
    if ndims != 3:
        raise VolumeFormatError(f"{path}: NDims={ndims}, need a 3D volume")
    dims = [int(v) for v in fields["DimSize"].split()]
    if len(dims) != 3 or min(dims) < 1:
        raise VolumeFormatError(f"{path}: bad DimSize {fields['DimSize']!r}")
    nx, ny, nz = dims

    etype = fields.get("ElementType", "MET_SHORT")
    if etype not in _MHD_DTYPES:
        raise VolumeFormatError(f"{path}: unsupported ElementType {etype}")
    dtype = _MHD_DTYPES[etype]
    if fields.get("BinaryDataByteOrderMSB", fields.get("ElementByteOrderMSB", "False")) == "True":
        dtype = dtype.newbyteorder(">")

    spacing_key = "ElementSpacing" if "ElementSpacing" in fields else "ElementSize"
    spacing = np.array([float(v) for v in fields.get(spacing_key, "1 1 1").split()], dtype=np.float64)
    if spacing.size != 3 or np.any(spacing <= 0):
        raise VolumeFormatError(f"{path}: non-positive spacing {spacing.tolist()}")
    origin_text = fields.get("Offset", fields.get("Origin", fields.get("Position", "0 0 0")))
    origin = np.array([float(v) for v in origin_text.split()], dtype=np.float64)

    if "TransformMatrix" in fields or "Orientation" in fields or "Rotation" in fields:
        raw_mat = fields.get("TransformMatrix", fields.get("Orientation", fields.get("Rotation")))
        mat = np.array([float(v) for v in raw_mat.split()], dtype=np.float64)
        if mat.size != 9:
            raise VolumeFormatError(f"{path}: TransformMatrix needs 9 values")
        # Serialized row i = world direction of voxel axis i; our columns are axes.
        axes = _orthonormalize(mat.reshape(3, 3).T)
    else:
        axes = np.eye(3)

    datafile = fields["ElementDataFile"]
    if datafile == "LIST":
        raise VolumeFormatError(f"{path}: multi-file MetaImage (LIST) is not supported")
    if datafile == "LOCAL":
        blob = path.read_bytes()[data_offset:]
    else:
        blob = (path.parent / datafile).read_bytes()
    if fields.get("CompressedData", "False") == "True":
        blob = zlib.decompress(blob)

    count = nx * ny * nz
    if len(blob) < count * dtype.itemsize:
        raise VolumeFormatError(f"{path}: truncated voxel data")
    raw = np.frombuffer(blob, dtype=dtype, count=count)
    data = raw.reshape((nx, ny, nz), order="F")

    frame = WorldFrame(origin=origin, spacing=spacing, axes=axes, frame_label=FRAME_LPS)
    return Volume(voxels=clip_intensities(data), frame=frame)


def save_mhd(volume: Volume, path) -> None:
    """Write an .mhd header plus a sibling .raw file (MET_FLOAT)."""
    path = Path(path)
    if path.suffix != ".mhd":
        raise ValueError("save_mhd expects a .mhd path")
    rawname = path.with_suffix(".raw").name
    # Row i of the serialized matrix is the world direction of voxel axis i.
    tm = " ".join(f"{v:.17g}" for v in volume.frame.axes.T.reshape(-1))
    lines = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        f"TransformMatrix = {tm}",
        "Offset = " + " ".join(f"{v:.17g}" for v in volume.frame.origin),
        "ElementSpacing = " + " ".join(f"{v:.17g}" for v in volume.frame.spacing),
        f"DimSize = {volume.dims[0]} {volume.dims[1]} {volume.dims[2]}",
        "ElementType = MET_FLOAT",
        f"ElementDataFile = {rawname}",
    ]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    (path.parent / rawname).write_bytes(volume.voxels.tobytes(order="F"))


_NIFTI_SUFFIXES = (".nii", ".nii.gz")
_MHD_SUFFIXES = (".mhd", ".mha")


def detect_format(path) -> str:
    name = str(path).lower()
    if name.endswith(_NIFTI_SUFFIXES):
        return "nifti1"
    if name.endswith(_MHD_SUFFIXES):
        return "mhd"
    raise VolumeFormatError(f"cannot infer volume format from {path!r}")


def load_volume(path, format: str | None = None) -> Volume:
    """Load a volume, inferring format from the suffix unless given."""
    path = Path(path)
    if not path.exists():
        raise VolumeFormatError(f"no such file: {path}")
    fmt = format or detect_format(path)
    if fmt == "nifti1":
        return load_nifti(path)
    if fmt == "mhd":
        return load_mhd(path)
    raise VolumeFormatError(f"unknown format {fmt!r}")


def save_volume(volume: Volume, path) -> None:
    fmt = detect_format(path)
    if fmt == "nifti1":
        save_nifti(volume, path)
    else:
        save_mhd(volume, path)
