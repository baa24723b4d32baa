"""Evaluation harness: annotated pair manifests, FROC curves, summary tables.

A manifest is JSON-lines, one entry per line:

    {"source_path": "...", "target_path": "...", "query_mm": [x, y, z],
     "truth_mm": [x, y, z], "tag": "free text"}

Per pair the harness runs the configured matcher, records the Euclidean
distance between estimate and annotation, and writes:

    pairs.csv    id,distance_mm,status       (deterministic, byte-stable)
    timing.csv   id,seconds                  (wall time per matcher call)
    froc.csv     threshold,sensitivity
    summary.json mean/median distance, sensitivity@10mm, mean seconds

Entries whose volumes fail to load are reported, marked failed, and counted
as misses at every threshold; the run continues.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .volume_io import Volume, load_volume

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PairEntry:
    source_path: str
    target_path: str
    query_mm: tuple[float, float, float]
    truth_mm: tuple[float, float, float]
    tag: str = ""


@dataclass(frozen=True)
class PairManifest:
    entries: tuple[PairEntry, ...]

    def __len__(self) -> int:
        return len(self.entries)


def _vec3(raw, what: str) -> tuple[float, float, float]:
    v = tuple(float(x) for x in raw)
    if len(v) != 3 or not all(math.isfinite(x) for x in v):
        raise ValueError(f"{what} must be 3 finite numbers, got {raw!r}")
    return v  # type: ignore[return-value]


def manifest_from_dicts(rows) -> PairManifest:
    entries = []
    for i, row in enumerate(rows):
        try:
            entries.append(
                PairEntry(
                    source_path=str(row["source_path"]),
                    target_path=str(row["target_path"]),
                    query_mm=_vec3(row["query_mm"], "query_mm"),
                    truth_mm=_vec3(row["truth_mm"], "truth_mm"),
                    tag=str(row.get("tag", "")),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"manifest entry {i}: {e}") from e
    if not entries:
        raise ValueError("manifest is empty")
    return PairManifest(entries=tuple(entries))


def load_manifest(path) -> PairManifest:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line:
            rows.append(json.loads(line))
    return manifest_from_dicts(rows)


def save_manifest(manifest: PairManifest, path) -> None:
    lines = []
    for e in manifest.entries:
        lines.append(
            json.dumps(
                {
                    "source_path": e.source_path,
                    "target_path": e.target_path,
                    "query_mm": list(e.query_mm),
                    "truth_mm": list(e.truth_mm),
                    "tag": e.tag,
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class FrocCurve:
    """Sensitivity (fraction of distances within threshold) per threshold."""

    thresholds: np.ndarray
    sensitivity: np.ndarray
    n: int


@dataclass(frozen=True)
class EvalSummary:
    mean_mm: float | None
    median_mm: float | None
    sens_at_10mm: float
    mean_seconds: float | None
    n_pairs: int
    n_failed: int


@dataclass
class EvalRecord:
    index: int
    tag: str
    status: str  # ok | load_error | match_error
    distance_mm: float  # inf when failed
    seconds: float
    estimate_mm: tuple[float, float, float] | None
    truth_mm: tuple[float, float, float]
    message: str = ""


def default_thresholds() -> np.ndarray:
    """0..20 mm at 0.5 mm pitch; covers the usual operating points incl. 10 mm."""
    return np.arange(0.0, 20.0 + 1e-9, 0.5)


def froc(distances, thresholds=None) -> FrocCurve:
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        raise ValueError("froc needs at least one distance")
    if np.any(d[np.isfinite(d)] < 0):
        raise ValueError("distances must be non-negative")
    t = default_thresholds() if thresholds is None else np.asarray(thresholds, dtype=np.float64)
    sens = np.array([float(np.count_nonzero(d <= ti)) / d.size for ti in t])
    return FrocCurve(thresholds=t, sensitivity=sens, n=int(d.size))


def sensitivity_at(distances, threshold_mm: float) -> float:
    d = np.asarray(distances, dtype=np.float64)
    return float(np.count_nonzero(d <= threshold_mm)) / d.size


def _sequential_mean(values) -> float:
    # plain left-to-right accumulation so an independent pass agrees exactly
    acc = 0.0
    for v in values:
        acc += float(v)
    return acc / len(values)


def _plain_median(values) -> float:
    s = sorted(float(v) for v in values)
    n = len(s)
    if n % 2 == 1:
        return s[n // 2]
    return 0.5 * (s[n // 2 - 1] + s[n // 2])


def summarize(records: list[EvalRecord]) -> EvalSummary:
    ok = [r for r in records if r.status == "ok"]
    distances_all = [r.distance_mm for r in records]
    return EvalSummary(
        mean_mm=_sequential_mean([r.distance_mm for r in ok]) if ok else None,
        median_mm=_plain_median([r.distance_mm for r in ok]) if ok else None,
        sens_at_10mm=sensitivity_at(distances_all, 10.0),
        mean_seconds=_sequential_mean([r.seconds for r in ok]) if ok else None,
        n_pairs=len(records),
        n_failed=len(records) - len(ok),
    )


class _VolumeCache:
    """Load each unique path once; volumes are immutable and shared."""

    def __init__(self):
        self._cache: dict[str, Volume] = {}

    def get(self, path: str) -> Volume:
        if path not in self._cache:
            self._cache[path] = load_volume(path)
        return self._cache[path]


def _eval_one(entry: PairEntry, index: int, cache: _VolumeCache, config) -> EvalRecord:
    import time

    try:
        source = cache.get(entry.source_path)
        target = cache.get(entry.target_path)
    except Exception as e:  # noqa: BLE001 - any load failure is a per-entry miss
        logger.warning("pair %d (%s): volume load failed: %s", index, entry.tag, e)
        return EvalRecord(
            index=index, tag=entry.tag, status="load_error", distance_mm=math.inf,
            seconds=0.0, estimate_mm=None, truth_mm=entry.truth_mm, message=str(e),
        )
    try:
        t0 = time.perf_counter()
        result = config.match(source, entry.query_mm, target)
        seconds = time.perf_counter() - t0
    except Exception as e:  # noqa: BLE001
        logger.warning("pair %d (%s): matcher failed: %s", index, entry.tag, e)
        return EvalRecord(
            index=index, tag=entry.tag, status="match_error", distance_mm=math.inf,
            seconds=0.0, estimate_mm=None, truth_mm=entry.truth_mm, message=str(e),
        )
    est = np.asarray(result.point_mm, dtype=np.float64)
    dist = float(np.linalg.norm(est - np.asarray(entry.truth_mm)))
    return EvalRecord(
        index=index, tag=entry.tag, status="ok", distance_mm=dist, seconds=seconds,
        estimate_mm=tuple(est.tolist()), truth_mm=entry.truth_mm,
    )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_artifacts(records: list[EvalRecord], curve: FrocCurve, summary: EvalSummary, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pair_lines = ["id,distance_mm,status"]
    timing_lines = ["id,seconds"]
    for r in sorted(records, key=lambda r: r.index):
        pair_lines.append(f"{r.index},{_fmt(r.distance_mm)},{r.status}")
        timing_lines.append(f"{r.index},{_fmt(r.seconds)}")
    (out / "pairs.csv").write_text("\n".join(pair_lines) + "\n")
    (out / "timing.csv").write_text("\n".join(timing_lines) + "\n")
    froc_lines = ["threshold,sensitivity"]
    for t, s in zip(curve.thresholds, curve.sensitivity):
        froc_lines.append(f"{_fmt(t)},{_fmt(s)}")
    (out / "froc.csv").write_text("\n".join(froc_lines) + "\n")
    doc = {
        "mean_mm": summary.mean_mm,
        "median_mm": summary.median_mm,
        "sens_at_10mm": summary.sens_at_10mm,
        "mean_seconds": summary.mean_seconds,
        "n_pairs": summary.n_pairs,
        "n_failed": summary.n_failed,
    }
    (out / "summary.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_eval(
    manifest: PairManifest,
    config,
    out_dir=None,
    thresholds=None,
    workers: int = 1,
) -> tuple[EvalSummary, FrocCurve, list[EvalRecord]]:
    """Match every manifest pair and aggregate distances into FROC + summary.

    config is a MatcherConfig (anything with a .match(source, query, target)
    returning a MatchResult). Records come back in manifest order regardless
    of worker scheduling.
    """
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    cache = _VolumeCache()
    # Preload sequentially: the cache dict is then read-only under the pool.
    for e in manifest.entries:
        for p in (e.source_path, e.target_path):
            try:
                cache.get(p)
            except Exception:  # noqa: BLE001 - recorded per entry below
                pass

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(
                pool.map(
                    lambda ie: _eval_one(ie[1], ie[0], cache, config),
                    enumerate(manifest.entries),
                )
            )
    else:
        records = [_eval_one(e, i, cache, config) for i, e in enumerate(manifest.entries)]
    records.sort(key=lambda r: r.index)

    curve = froc([r.distance_mm for r in records], thresholds)
    summary = summarize(records)
    if out_dir is not None:
        write_artifacts(records, curve, summary, out_dir)
    return summary, curve, records


@dataclass(frozen=True)
class CohortEntry:
    volume_path: str
    truth_mm: tuple[float, float, float]
    tag: str = ""


def load_cohort(path) -> tuple[CohortEntry, ...]:
    entries = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        row = json.loads(line)
        entries.append(
            CohortEntry(
                volume_path=str(row["volume_path"]),
                truth_mm=_vec3(row["truth_mm"], "truth_mm"),
                tag=str(row.get("tag", "")),
            )
        )
    if not entries:
        raise ValueError("cohort is empty")
    return tuple(entries)


def landmark_cohort(
    template: Volume,
    template_point_mm,
    cohort: tuple[CohortEntry, ...],
    config,
    out_dir=None,
    thresholds=None,
) -> tuple[EvalSummary, FrocCurve, list[EvalRecord]]:
    """Propagate one annotated template landmark to every cohort volume.

    Equivalent to run_eval over pairs (template -> cohort case) with the
    cohort's annotations as truth.
    """
    tp = tuple(np.asarray(template_point_mm, dtype=np.float64).tolist())
    cache = _VolumeCache()
    records: list[EvalRecord] = []
    for i, case in enumerate(cohort):
        entry = PairEntry(
            source_path="<template>", target_path=case.volume_path,
            query_mm=tp, truth_mm=case.truth_mm, tag=case.tag,
        )
        try:
            target = cache.get(case.volume_path)
        except Exception as e:  # noqa: BLE001
            logger.warning("cohort case %d (%s): load failed: %s", i, case.tag, e)
            records.append(
                EvalRecord(
                    index=i, tag=case.tag, status="load_error", distance_mm=math.inf,
                    seconds=0.0, estimate_mm=None, truth_mm=case.truth_mm, message=str(e),
                )
            )
            continue
        import time

        t0 = time.perf_counter()
        result = config.match(template, tp, target)
        seconds = time.perf_counter() - t0
        est = np.asarray(result.point_mm, dtype=np.float64)
        records.append(
            EvalRecord(
                index=i, tag=case.tag, status="ok",
                distance_mm=float(np.linalg.norm(est - np.asarray(case.truth_mm))),
                seconds=seconds, estimate_mm=tuple(est.tolist()), truth_mm=case.truth_mm,
            )
        )
    curve = froc([r.distance_mm for r in records], thresholds)
    summary = summarize(records)
    if out_dir is not None:
        write_artifacts(records, curve, summary, out_dir)
    return summary, curve, records
