"""Adapter from lesion-tracking annotation CSVs to a pair manifest.

The public DeepLesion tracking annotations list lesion pairs across studies
of the same patient, one pair per row, with the lesion center given per study.
Column names vary between releases, so the adapter takes a column map and
ships a sensible default; annotation data itself is never vendored here.

Expected default layout (override any name via ``columns``):

    source_image, target_image   relative volume filenames (joined to the
                                 volume directory; a ``suffix`` can be
                                 appended, e.g. ".nii.gz")
    source_x, source_y, source_z lesion center in the source volume
    target_x, target_y, target_z lesion center in the target volume

Coordinates may be voxel indices (``coordinates="voxel"``, default -- they
are converted to world mm through each volume's header when the manifest is
built) or already world millimeters (``coordinates="mm"``).
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

from .evalharness import PairEntry, PairManifest
from .volume_io import load_volume

logger = logging.getLogger(__name__)

DEFAULT_COLUMNS = {
    "source_image": "source_image",
    "target_image": "target_image",
    "source_x": "source_x",
    "source_y": "source_y",
    "source_z": "source_z",
    "target_x": "target_x",
    "target_y": "target_y",
    "target_z": "target_z",
}


def manifest_from_tracking_csv(
    csv_path,
    volume_dir,
    columns: dict | None = None,
    coordinates: str = "voxel",
    suffix: str = "",
) -> PairManifest:
    """Build a PairManifest from a lesion-tracking CSV and a volume directory.

    With voxel coordinates every referenced volume is opened once to read its
    world frame; volumes that fail to load are skipped with a warning so a
    partially downloaded dataset still evaluates.
    """
    if coordinates not in ("voxel", "mm"):
        raise ValueError("coordinates must be 'voxel' or 'mm'")
    cols = dict(DEFAULT_COLUMNS)
    if columns:
        cols.update(columns)
    volume_dir = Path(volume_dir)

    frames: dict[str, object] = {}

    def world_point(rel_path: str, xyz) -> tuple[float, float, float] | None:
        if coordinates == "mm":
            return tuple(float(v) for v in xyz)  # type: ignore[return-value]
        path = str(volume_dir / (rel_path + suffix))
        if path not in frames:
            try:
                frames[path] = load_volume(path).frame
            except Exception as e:  # noqa: BLE001
                logger.warning("skipping %s: %s", path, e)
                frames[path] = None
        frame = frames[path]
        if frame is None:
            return None
        return tuple(frame.voxel_to_world([float(v) for v in xyz]).tolist())

    entries = []
    skipped = 0
    with open(csv_path, newline="") as f:
        for i, row in enumerate(csv.DictReader(f)):
            try:
                src = row[cols["source_image"]].strip()
                tgt = row[cols["target_image"]].strip()
                q = world_point(src, (row[cols["source_x"]], row[cols["source_y"]], row[cols["source_z"]]))
                t = world_point(tgt, (row[cols["target_x"]], row[cols["target_y"]], row[cols["target_z"]]))
            except KeyError as e:
                raise ValueError(f"row {i}: missing column {e}; pass a column map") from e
            if q is None or t is None:
                skipped += 1
                continue
            entries.append(
                PairEntry(
                    source_path=str(volume_dir / (src + suffix)),
                    target_path=str(volume_dir / (tgt + suffix)),
                    query_mm=q,
                    truth_mm=t,
                    tag=f"row{i}:{src}->{tgt}",
                )
            )
    if skipped:
        logger.warning("skipped %d rows with unreadable volumes", skipped)
    if not entries:
        raise ValueError(f"{csv_path}: no usable rows")
    return PairManifest(entries=tuple(entries))
