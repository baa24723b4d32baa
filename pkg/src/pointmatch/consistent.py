"""Consistency-weighted point matching with neighbor voting.

A forward match is trusted only as far as its round trip: map the query into
the target, map that estimate back, and measure how far it lands from where
it started. Neighbors of the query vote alongside it at every search level;
each vote is weighted by exp(-roundtrip_distance / base_step) times the
forward similarity, the best votes are averaged into the next level's center,
and gross forward mismatches get outvoted instead of propagating.
"""

from __future__ import annotations

import time

import numpy as np

from .descriptor import DescriptorSpec, default_spec
from .search import (
    LevelSchedule,
    LevelTrace,
    MatchResult,
    VoteRecord,
    batched_level_search,
    check_query_inside,
    materialize_steps,
    point_matching,
    warn_on_frame_mismatch,
)
from .similarity import DEFAULT_PARAMS, SimilarityParams
from .volume_io import Volume

NEIGHBOR_VARIANTS = (1, 3, 7, 13)

TOP_K_VOTES = 5


def neighbor_offset_steps(variant: int) -> np.ndarray:
    """Vote offsets in units of the level step (exact halves).

    13 = center plus rings at 1.5 and 0.5 steps along each axis; 7 = center
    plus the 0.5-step ring; 3 = center plus 0.5 steps along the left-right
    axis only; 1 = center only.
    """
    if variant not in NEIGHBOR_VARIANTS:
        raise ValueError(f"variant must be one of {NEIGHBOR_VARIANTS}, got {variant}")
    rows = [(0.0, 0.0, 0.0)]
    if variant == 13:
        for axis in range(3):
            for r in (1.5, 0.5):
                for sign in (+1.0, -1.0):
                    v = [0.0, 0.0, 0.0]
                    v[axis] = sign * r
                    rows.append(tuple(v))
    elif variant == 7:
        for axis in range(3):
            for sign in (+1.0, -1.0):
                v = [0.0, 0.0, 0.0]
                v[axis] = sign * 0.5
                rows.append(tuple(v))
    elif variant == 3:
        rows.append((0.5, 0.0, 0.0))
        rows.append((-0.5, 0.0, 0.0))
    return np.array(rows, dtype=np.float64)


def neighbor_offsets(variant: int, step_mm: float) -> np.ndarray:
    """Vote offsets for one level in millimeters."""
    return neighbor_offset_steps(variant) * float(step_mm)


def vote_weight(consistency_mm: float, similarity: float, base_step_mm: float) -> float:
    """exp(-roundtrip_distance / base_step) * forward_similarity."""
    return float(np.exp(-consistency_mm / base_step_mm) * similarity)


def consolidate_votes(
    vote_points: np.ndarray, weights: np.ndarray, top_k: int = TOP_K_VOTES, weighted_mean: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Mean of the top-min(top_k, n) votes by weight; ties keep earlier votes.

    Returns (center, chosen_indices). The plain mean is the default; the
    weight-weighted mean is available behind the flag. Identical top votes
    consolidate to that exact point.
    """
    order = np.argsort(-weights, kind="stable")
    chosen = order[: min(top_k, weights.shape[0])]
    pts = vote_points[chosen]
    if np.all(pts == pts[0]):
        return pts[0].copy(), chosen
    if weighted_mean:
        w = weights[chosen]
        if w.sum() > 0:
            return (pts * w[:, None]).sum(axis=0) / w.sum(), chosen
    return pts.mean(axis=0), chosen


def consistent_point_matching(
    source: Volume,
    query_mm,
    target: Volume,
    variant: int = 13,
    spec: DescriptorSpec | None = None,
    schedule: LevelSchedule | None = None,
    params: SimilarityParams | None = None,
    weight_consistency: bool = True,
    top_k: int = TOP_K_VOTES,
    weighted_mean: bool = False,
    rescore_final: bool = False,
    chunk_candidates: int = 8192,
) -> MatchResult:
    """Neighbor-voting hierarchical matching of one query point.

    Per level, every neighbor offset is matched forward into the target
    around the running center, the forward estimate is matched backward into
    the source around the query, and the votes (forward estimates minus their
    offsets) are consolidated by weight into the next center. With variant 1
    and weighting disabled this degenerates to plain point matching exactly.
    """
    spec = spec or default_spec()
    schedule = schedule or LevelSchedule()
    params = params or DEFAULT_PARAMS
    if variant not in NEIGHBOR_VARIANTS:
        raise ValueError(f"variant must be one of {NEIGHBOR_VARIANTS}, got {variant}")
    if variant == 1 and not weight_consistency:
        return point_matching(source, query_mm, target, spec, schedule, params, chunk_candidates)

    query = check_query_inside(source, query_mm)
    warn_on_frame_mismatch(source, target)

    t0 = time.perf_counter()
    base_step = schedule.base_step_mm
    offset_steps = neighbor_offset_steps(variant)
    center = query.copy()
    traces: list[LevelTrace] = []
    final_similarity = 0.0
    final_mean_consistency = 0.0
    for level in range(1, schedule.levels + 1):
        step = schedule.step_mm(level)
        offsets_mm = offset_steps * step
        query_points = materialize_steps(query, offset_steps, step)
        fwd_steps, fwd_points, fwd_sims = batched_level_search(
            source, target, query, offset_steps, center, level, spec, schedule, params, chunk_candidates
        )
        _, back_points, _ = batched_level_search(
            target, source, query, fwd_steps, query, level, spec, schedule, params, chunk_candidates
        )

        vote_steps = fwd_steps - offset_steps  # exact: both live on half-step lattices
        vote_points = materialize_steps(query, vote_steps, step)
        votes: list[VoteRecord] = []
        for i in range(offset_steps.shape[0]):
            distance = float(np.linalg.norm(query_points[i] - back_points[i]))
            sim = float(fwd_sims[i])
            weight = vote_weight(distance, sim, base_step) if weight_consistency else sim
            votes.append(
                VoteRecord(
                    offset_mm=offsets_mm[i].copy(),
                    forward_mm=fwd_points[i].copy(),
                    roundtrip_mm=back_points[i].copy(),
                    consistency_mm=distance,
                    vote_mm=vote_points[i].copy(),
                    similarity=sim,
                    weight=weight,
                )
            )
        weights = np.array([v.weight for v in votes])
        new_center, _ = consolidate_votes(vote_points, weights, top_k, weighted_mean)
        traces.append(
            LevelTrace(
                level=level,
                step_mm=step,
                scale_factor=schedule.scale_factor(level),
                center_in_mm=center.copy(),
                center_out_mm=new_center.copy(),
                best_similarity=float(weights.max()),
                forward_searches=offset_steps.shape[0],
                backward_searches=offset_steps.shape[0],
                votes=votes,
            )
        )
        center = new_center
        final_similarity = float(weights.max())
        final_mean_consistency = float(np.mean([v.consistency_mm for v in votes]))

    if rescore_final:
        from .descriptor import sample_descriptor
        from .similarity import combined_similarity

        scale = schedule.scale_factor(schedule.levels)
        qd = sample_descriptor(source, query, spec, scale)
        cd = sample_descriptor(target, center, spec, scale)
        final_similarity = combined_similarity(qd.values, cd.values, params)

    return MatchResult(
        point_mm=center.copy(),
        similarity=final_similarity,
        levels=traces,
        elapsed_seconds=time.perf_counter() - t0,
        mean_consistency_mm=final_mean_consistency,
        method=f"cpm{variant}",
    )


def consistency_distance(
    source: Volume,
    query_mm,
    target: Volume,
    forward_mm,
    level: int,
    spec: DescriptorSpec | None = None,
    schedule: LevelSchedule | None = None,
    params: SimilarityParams | None = None,
) -> float:
    """Round-trip distance of one forward estimate at one search level.

    Runs only the backward single-level search (target point matched back
    into the source around the query) and returns |query - roundtrip|.
    """
    spec = spec or default_spec()
    schedule = schedule or LevelSchedule()
    params = params or DEFAULT_PARAMS
    query = check_query_inside(source, query_mm)
    forward = np.asarray(forward_mm, dtype=np.float64).reshape(3)
    step = schedule.step_mm(level)
    anchor = (forward - query) / step  # backward lattice anchored on the forward point
    _, back_points, _ = batched_level_search(
        target, source, query, anchor.reshape(1, 3), query, level, spec, schedule, params
    )
    return float(np.linalg.norm(query - back_points[0]))
