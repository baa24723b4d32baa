"""Matcher configuration: one JSON-serializable bundle for all knobs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .consistent import NEIGHBOR_VARIANTS, consistent_point_matching
from .descriptor import DescriptorSpec, default_spec, make_spec
from .search import LevelSchedule, MatchResult, point_matching
from .similarity import SimilarityParams
from .volume_io import Volume

METHODS = ("cpm", "pm")


@dataclass
class MatcherConfig:
    descriptor: DescriptorSpec = field(default_factory=default_spec)
    schedule: LevelSchedule = field(default_factory=LevelSchedule)
    similarity: SimilarityParams = field(default_factory=SimilarityParams)
    method: str = "cpm"
    variant: int = 13
    weight_consistency: bool = True
    top_k: int = 5
    weighted_mean: bool = False
    rescore_final: bool = False
    chunk_candidates: int = 8192

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.variant not in NEIGHBOR_VARIANTS:
            raise ValueError(f"variant must be one of {NEIGHBOR_VARIANTS}")

    def match(self, source: Volume, query_mm, target: Volume) -> MatchResult:
        if self.method == "pm":
            return point_matching(
                source, query_mm, target,
                spec=self.descriptor, schedule=self.schedule, params=self.similarity,
                chunk_candidates=self.chunk_candidates,
            )
        return consistent_point_matching(
            source, query_mm, target,
            variant=self.variant, spec=self.descriptor, schedule=self.schedule,
            params=self.similarity, weight_consistency=self.weight_consistency,
            top_k=self.top_k, weighted_mean=self.weighted_mean,
            rescore_final=self.rescore_final, chunk_candidates=self.chunk_candidates,
        )

    def to_json(self) -> str:
        doc = {
            "method": self.method,
            "variant": self.variant,
            "descriptor": {
                "parts": [
                    {"kind": p.kind, "extent": p.extent, "spacing_mm": p.spacing_mm}
                    for p in self.descriptor.parts
                ]
            },
            "schedule": {
                "base_step_mm": self.schedule.base_step_mm,
                "levels": self.schedule.levels,
                "region_halfwidth_steps": self.schedule.region_halfwidth_steps,
                "level1_stride_mm": self.schedule.level1_stride_mm,
            },
            "similarity": {
                "histogram_bins": self.similarity.histogram_bins,
                "intensity_range": list(self.similarity.intensity_range),
                "combine": self.similarity.combine,
            },
            "weight_consistency": self.weight_consistency,
            "top_k": self.top_k,
            "weighted_mean": self.weighted_mean,
            "rescore_final": self.rescore_final,
            "chunk_candidates": self.chunk_candidates,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "MatcherConfig":
        doc = json.loads(text)
        kwargs = {}
        if "descriptor" in doc:
            kwargs["descriptor"] = make_spec(doc["descriptor"]["parts"])
        if "schedule" in doc:
            s = doc["schedule"]
            kwargs["schedule"] = LevelSchedule(
                base_step_mm=float(s.get("base_step_mm", 16.0)),
                levels=int(s.get("levels", 5)),
                region_halfwidth_steps=int(s.get("region_halfwidth_steps", 4)),
                level1_stride_mm=(
                    None if s.get("level1_stride_mm") is None else float(s["level1_stride_mm"])
                ),
            )
        if "similarity" in doc:
            p = doc["similarity"]
            kwargs["similarity"] = SimilarityParams(
                histogram_bins=int(p.get("histogram_bins", 16)),
                intensity_range=tuple(p.get("intensity_range", (0.0, 4096.0))),  # type: ignore[arg-type]
                combine=str(p.get("combine", "product")),
            )
        for key in (
            "method", "variant", "weight_consistency", "top_k",
            "weighted_mean", "rescore_final", "chunk_candidates",
        ):
            if key in doc:
                kwargs[key] = doc[key]
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "MatcherConfig":
        return cls.from_json(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")
