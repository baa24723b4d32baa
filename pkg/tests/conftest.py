import numpy as np
import pytest

from pointmatch import _kernels, phantoms
from pointmatch.search import LevelSchedule

# Non-commensurate spacing: descriptor offsets must not all land voxel-aligned,
# otherwise half-pitch candidates sample identical voxels and tie exactly.
PHANTOM_SPACING = (3.7, 3.7, 3.7)
PHANTOM_DIMS = (48, 48, 48)

# Whole-image scans in tests use the coarse level-1 stride escape hatch; the
# phantoms are small enough that an 16 mm coarse sweep still finds the basin.
TEST_SCHEDULE = LevelSchedule(level1_stride_mm=16.0)


@pytest.fixture(scope="session", autouse=True)
def kernels_warm():
    _kernels.warmup()


@pytest.fixture(scope="session")
def blob_phantom():
    return phantoms.make_phantom("blobs", seed=11, dims=PHANTOM_DIMS, spacing_mm=PHANTOM_SPACING)


@pytest.fixture(scope="session")
def texture_phantom():
    return phantoms.make_phantom("texture", seed=12, dims=PHANTOM_DIMS, spacing_mm=PHANTOM_SPACING)


@pytest.fixture(scope="session")
def ramp_phantom():
    return phantoms.make_phantom("ramps", dims=PHANTOM_DIMS, spacing_mm=PHANTOM_SPACING)


@pytest.fixture(scope="session")
def structured_queries(blob_phantom):
    return phantoms.sample_structured_points(blob_phantom, 4, seed=3)


def small_spec():
    """Compact descriptor layout for search-semantics tests that do not need
    the full-size default layout."""
    from pointmatch.descriptor import make_spec

    return make_spec(
        [
            {"kind": "grid3d", "extent": 5, "spacing_mm": 8.0},
            {"kind": "plane_xy", "extent": 5, "spacing_mm": 6.0},
            {"kind": "grid3d", "extent": 5, "spacing_mm": 40.0},
        ]
    )


@pytest.fixture(scope="session")
def compact_spec():
    return small_spec()


def identity_volume(data: np.ndarray, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)):
    """Volume with identity axes from a raw float array (clipped on store)."""
    from pointmatch.volume_io import Volume, WorldFrame

    return Volume(
        voxels=np.clip(np.asarray(data, dtype=np.float64), 0, 4096).astype(np.float32),
        frame=WorldFrame(origin=origin, spacing=spacing, axes=np.eye(3), frame_label="unknown"),
    )
