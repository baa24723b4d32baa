"""Training-free anatomical point correspondence for 3D medical volumes.

Maps a query point in one volume to its anatomical counterpart in another by
hierarchical search over sparse millimeter-space intensity descriptors, with
an optional round-trip consistency voting stage for robustness.
"""

from .config import MatcherConfig
from .consistent import consistency_distance, consistent_point_matching, neighbor_offsets
from .descriptor import (
    Descriptor,
    DescriptorSpec,
    OffsetGrid,
    decode_descriptor,
    default_spec,
    make_offset_grid,
    make_spec,
    sample_descriptor,
    sample_descriptor_batch,
)
from .evalharness import (
    EvalSummary,
    FrocCurve,
    PairManifest,
    froc,
    landmark_cohort,
    load_manifest,
    run_eval,
)
from .search import (
    CandidateScore,
    LevelSchedule,
    MatchResult,
    SearchRegionError,
    level_search,
    point_matching,
)
from .similarity import (
    SimilarityParams,
    combined_similarity,
    combined_similarity_batch,
    cosine,
    normalized_mutual_information,
)
from .volume_io import (
    Volume,
    VolumeFormatError,
    WorldFrame,
    load_volume,
    sample_at,
    save_volume,
    voxel_to_world,
    world_to_voxel,
)

__version__ = "0.1.0"

__all__ = [
    "MatcherConfig",
    "consistency_distance",
    "consistent_point_matching",
    "neighbor_offsets",
    "Descriptor",
    "DescriptorSpec",
    "OffsetGrid",
    "decode_descriptor",
    "default_spec",
    "make_offset_grid",
    "make_spec",
    "sample_descriptor",
    "sample_descriptor_batch",
    "EvalSummary",
    "FrocCurve",
    "PairManifest",
    "froc",
    "landmark_cohort",
    "load_manifest",
    "run_eval",
    "CandidateScore",
    "LevelSchedule",
    "MatchResult",
    "SearchRegionError",
    "level_search",
    "point_matching",
    "SimilarityParams",
    "combined_similarity",
    "combined_similarity_batch",
    "cosine",
    "normalized_mutual_information",
    "Volume",
    "VolumeFormatError",
    "WorldFrame",
    "load_volume",
    "sample_at",
    "save_volume",
    "voxel_to_world",
    "world_to_voxel",
]
