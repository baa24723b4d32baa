"""Hierarchical point matching: coarse-to-fine candidate-grid descriptor search.

Each level scans a regular millimeter lattice of candidate locations in the
target, scores the query descriptor against every candidate descriptor (both
sampled at the level's zoom factor) and re-centers on the argmax. Level 1
covers the whole target; each following level halves the lattice pitch and
the descriptor scale while shrinking the region around the previous best.

Candidate lattices are anchored on the query point of each single-level
search and expressed in exact step units relative to the match's base point,
so that a search over an identical volume reproduces its own query location
bit for bit (self matches and round trips are exact, not just close).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .descriptor import DescriptorSpec, default_spec, sample_descriptor_batch
from .similarity import DEFAULT_PARAMS, QueryPack, SimilarityParams, combined_similarity_batch
from .volume_io import Volume

logger = logging.getLogger(__name__)


class SearchRegionError(RuntimeError):
    """The candidate region for a level search contained no valid points."""


@dataclass(frozen=True)
class LevelSchedule:
    """Step / zoom ladder: step(l) = base * 2^-l, zoom(l) = 2^(levels - l).

    With the defaults the five levels use steps {8, 4, 2, 1, 0.5} mm and
    descriptor scale factors {16, 8, 4, 2, 1}. Level 1 searches the whole
    target; later levels search a box of region_halfwidth_steps grid steps
    around the running center. level1_stride_mm optionally coarsens the
    whole-image scan (it is rounded to the nearest multiple of the level-1
    step so lattices stay aligned).
    """

    base_step_mm: float = 16.0
    levels: int = 5
    region_halfwidth_steps: int = 4
    level1_stride_mm: float | None = None

    def __post_init__(self):
        if not self.base_step_mm > 0 or self.levels < 1:
            raise ValueError("base_step_mm must be > 0 and levels >= 1")

    def step_mm(self, level: int) -> float:
        self._check(level)
        return self.base_step_mm * 2.0 ** (-level)

    def scale_factor(self, level: int) -> float:
        self._check(level)
        return 2.0 ** (self.levels - level)

    def stride_steps(self, level: int) -> float:
        """Lattice pitch at this level in units of step_mm(level)."""
        if level == 1 and self.level1_stride_mm is not None:
            return max(1.0, float(round(self.level1_stride_mm / self.step_mm(1))))
        return 1.0

    def _check(self, level: int) -> None:
        if not 1 <= level <= self.levels:
            raise ValueError(f"level must be in 1..{self.levels}, got {level}")


@dataclass(frozen=True)
class CandidateScore:
    point_mm: np.ndarray
    similarity: float


@dataclass
class VoteRecord:
    """One consistency vote: a neighbor's forward match and its round trip."""

    offset_mm: np.ndarray
    forward_mm: np.ndarray  # match of query+offset in the target
    roundtrip_mm: np.ndarray  # match of forward_mm back in the source
    consistency_mm: float  # | (query+offset) - roundtrip |
    vote_mm: np.ndarray  # forward_mm - offset
    similarity: float  # forward search's best similarity
    weight: float


@dataclass
class LevelTrace:
    level: int
    step_mm: float
    scale_factor: float
    center_in_mm: np.ndarray
    center_out_mm: np.ndarray
    best_similarity: float
    forward_searches: int = 1
    backward_searches: int = 0
    votes: list[VoteRecord] = field(default_factory=list)


@dataclass
class MatchResult:
    """Estimated corresponding point plus the full per-level search trace."""

    point_mm: np.ndarray
    similarity: float
    levels: list[LevelTrace]
    elapsed_seconds: float
    mean_consistency_mm: float | None = None
    method: str = "pm"


def materialize_steps(base_mm: np.ndarray, steps: np.ndarray, step_mm: float) -> np.ndarray:
    """base + steps * step_mm with a single rounding per coordinate.

    Step values are halves of integers and step_mm is a power-of-two fraction
    of the base step, so equal step coordinates always materialize to equal
    floats regardless of which search produced them.
    """
    return base_mm + np.asarray(steps, dtype=np.float64) * step_mm


def _axis_lattice(anchor_step: float, lo_steps: float, hi_steps: float, stride: float) -> np.ndarray:
    """Lattice values anchor + stride*k (in step units) covering [lo, hi]."""
    k_min = int(np.ceil((lo_steps - anchor_step) / stride - 1e-9))
    k_max = int(np.floor((hi_steps - anchor_step) / stride + 1e-9))
    if k_max < k_min:
        return np.empty(0, dtype=np.float64)
    return anchor_step + np.arange(k_min, k_max + 1, dtype=np.float64) * stride


def candidate_steps(
    target: Volume,
    base_mm: np.ndarray,
    anchor_steps: np.ndarray,
    center_mm: np.ndarray,
    level: int,
    schedule: LevelSchedule,
) -> np.ndarray:
    """Candidate lattice for one level in step units, ordered ascending (z, y, x).

    The lattice is anchored on the search's query point (anchor_steps) so the
    query location itself is always a lattice point. Level 1 covers the whole
    target bounding box; later levels cover region_halfwidth_steps steps
    around the center. Candidates are kept within the target bounding box
    expanded by one level-1 step.
    """
    step = schedule.step_mm(level)
    lo, hi = target.world_bounds()
    pad = schedule.step_mm(1)
    stride = schedule.stride_steps(level)
    axes = []
    for a in range(3):
        if level == 1:
            lo_s = (lo[a] - base_mm[a]) / step
            hi_s = (hi[a] - base_mm[a]) / step
        else:
            hw = float(schedule.region_halfwidth_steps)
            lo_s = max((center_mm[a] - base_mm[a]) / step - hw, (lo[a] - pad - base_mm[a]) / step)
            hi_s = min((center_mm[a] - base_mm[a]) / step + hw, (hi[a] + pad - base_mm[a]) / step)
        axes.append(_axis_lattice(float(anchor_steps[a]), lo_s, hi_s, stride))
    if any(ax.shape[0] == 0 for ax in axes):
        return np.empty((0, 3), dtype=np.float64)
    zz, yy, xx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    steps = np.stack([xx.reshape(-1), yy.reshape(-1), zz.reshape(-1)], axis=1)
    pts = materialize_steps(base_mm, steps, step)
    keep = np.all((pts >= lo - pad) & (pts <= hi + pad), axis=1)
    return np.ascontiguousarray(steps[keep])


def select_best(scores: np.ndarray, points: np.ndarray) -> tuple[int, float]:
    """Argmax with deterministic tie-break: smallest (z, y, x) among exact ties.

    Independent of candidate ordering, so permuting the evaluation order can
    never change the winner.
    """
    best = float(np.max(scores))
    ties = np.flatnonzero(scores == best)
    if ties.shape[0] > 1:
        pts = points[ties]
        order = np.lexsort((pts[:, 0], pts[:, 1], pts[:, 2]))
        return int(ties[order[0]]), best
    return int(ties[0]), best


def _group_by_phase(anchor_steps: np.ndarray, stride: float) -> list[np.ndarray]:
    """Group searches whose anchors lie on the same lattice (equal mod stride).

    Grouping only keys on the residue; each group's lattice is built from its
    first anchor, so anchors that merely straddle a rounding edge still get a
    lattice through their own location.
    """
    phases = np.round(np.mod(anchor_steps, stride), 9) % stride
    groups: dict[tuple, list[int]] = {}
    for i in range(anchor_steps.shape[0]):
        groups.setdefault(tuple(phases[i]), []).append(i)
    return [np.array(idx, dtype=np.int64) for idx in groups.values()]


def batched_level_search(
    query_volume: Volume,
    target_volume: Volume,
    base_mm: np.ndarray,
    anchor_steps: np.ndarray,
    center_mm: np.ndarray,
    level: int,
    spec: DescriptorSpec,
    schedule: LevelSchedule,
    params: SimilarityParams,
    chunk_candidates: int = 8192,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run one search level for several queries sharing a region.

    Each row of anchor_steps (step units relative to base_mm) is one
    single-level search: its query descriptor is sampled in query_volume at
    the anchor, and its candidates lie on the anchor's lattice inside the
    region around center_mm in target_volume. Searches whose anchors share a
    lattice phase share one gathered candidate block.

    Returns (best_steps (q, 3), best_points_mm (q, 3), similarities (q,)).
    """
    anchors = np.atleast_2d(np.asarray(anchor_steps, dtype=np.float64))
    nq = anchors.shape[0]
    step = schedule.step_mm(level)
    scale = schedule.scale_factor(level)
    qpoints = materialize_steps(base_mm, anchors, step)
    pack = QueryPack(sample_descriptor_batch(query_volume, qpoints, spec, scale), params)

    best_steps = np.zeros((nq, 3))
    best_scores = np.full(nq, -1.0)
    for group in _group_by_phase(anchors, schedule.stride_steps(level)):
        cand = candidate_steps(target_volume, base_mm, anchors[group[0]], center_mm, level, schedule)
        if cand.shape[0] == 0:
            raise SearchRegionError(
                f"level {level} search region around {np.asarray(center_mm).tolist()} "
                "contains no candidates inside the target bounds"
            )
        sub_pack = pack if group.shape[0] == nq else QueryPack(pack.values[group], params)
        for start in range(0, cand.shape[0], chunk_candidates):
            chunk = cand[start : start + chunk_candidates]
            descs = sample_descriptor_batch(
                target_volume, materialize_steps(base_mm, chunk, step), spec, scale
            )
            scores = combined_similarity_batch(sub_pack, descs, params)
            for row, qi in enumerate(group):
                idx, score = select_best(scores[row], chunk)
                if score > best_scores[qi]:
                    best_scores[qi] = score
                    best_steps[qi] = chunk[idx]
                elif score == best_scores[qi]:
                    a, b = chunk[idx], best_steps[qi]
                    if (a[2], a[1], a[0]) < (b[2], b[1], b[0]):
                        best_steps[qi] = a
    best_points = materialize_steps(base_mm, best_steps, step)
    return best_steps, best_points, best_scores


def level_search(
    source: Volume,
    query_mm,
    target: Volume,
    center_mm,
    level: int,
    spec: DescriptorSpec | None = None,
    schedule: LevelSchedule | None = None,
    params: SimilarityParams | None = None,
) -> CandidateScore:
    """Single-level search: best candidate in the target for one source point."""
    spec = spec or default_spec()
    schedule = schedule or LevelSchedule()
    params = params or DEFAULT_PARAMS
    query = np.asarray(query_mm, dtype=np.float64).reshape(3)
    _, pts, sims = batched_level_search(
        source, target, query, np.zeros((1, 3)), np.asarray(center_mm, dtype=np.float64),
        level, spec, schedule, params,
    )
    return CandidateScore(point_mm=pts[0], similarity=float(sims[0]))


def check_query_inside(source: Volume, query_mm) -> np.ndarray:
    q = np.asarray(query_mm, dtype=np.float64).reshape(3)
    if not source.contains_world_point(q):
        raise ValueError(f"query point {q.tolist()} is outside the source volume")
    return q


def warn_on_frame_mismatch(source: Volume, target: Volume) -> None:
    a, b = source.frame.frame_label, target.frame.frame_label
    if "unknown" not in (a, b) and a != b:
        logger.warning("source frame is %s but target frame is %s; matching in raw header frames", a, b)


def point_matching(
    source: Volume,
    query_mm,
    target: Volume,
    spec: DescriptorSpec | None = None,
    schedule: LevelSchedule | None = None,
    params: SimilarityParams | None = None,
    chunk_candidates: int = 8192,
) -> MatchResult:
    """Five-level (by default) hierarchical search for the corresponding point."""
    spec = spec or default_spec()
    schedule = schedule or LevelSchedule()
    params = params or DEFAULT_PARAMS
    query = check_query_inside(source, query_mm)
    warn_on_frame_mismatch(source, target)

    t0 = time.perf_counter()
    center = query.copy()
    traces: list[LevelTrace] = []
    similarity = 0.0
    anchor = np.zeros((1, 3))
    for level in range(1, schedule.levels + 1):
        _, pts, sims = batched_level_search(
            source, target, query, anchor, center, level, spec, schedule, params, chunk_candidates
        )
        similarity = float(sims[0])
        traces.append(
            LevelTrace(
                level=level,
                step_mm=schedule.step_mm(level),
                scale_factor=schedule.scale_factor(level),
                center_in_mm=center.copy(),
                center_out_mm=pts[0].copy(),
                best_similarity=similarity,
            )
        )
        center = pts[0]
    return MatchResult(
        point_mm=center.copy(),
        similarity=similarity,
        levels=traces,
        elapsed_seconds=time.perf_counter() - t0,
        mean_consistency_mm=None,
        method="pm",
    )
