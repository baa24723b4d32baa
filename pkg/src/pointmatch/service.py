"""HTTP service: volume registry, slice rendering, and matching endpoints.

Endpoints
    GET  /volumes                 registered volumes with dims/spacing/frame
    GET  /slice?volume=&axis=&index=&wl_low=&wl_high=
                                  8-bit grayscale PNG of an orthogonal slice,
                                  window/level applied server-side
    POST /match                   MatchRequest -> MatchResponse (JSON);
                                  per-level trace included with ?trace=1 or
                                  "trace": true in the body

Volumes are read from one directory at startup (ids are file stems, which
must be unique), loaded lazily, and cached immutable. Matching runs on a
bounded compute pool; identical requests give identical responses.
"""

from __future__ import annotations

import io
import logging
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image
from pydantic import BaseModel, Field

from .config import MatcherConfig
from .search import MatchResult, SearchRegionError
from .volume_io import Volume, load_volume

logger = logging.getLogger(__name__)

VOLUME_SUFFIXES = (".nii", ".nii.gz", ".mhd", ".mha")

_AXIS_NAMES = {"x": 0, "y": 1, "z": 2, "0": 0, "1": 1, "2": 2}


def volume_id_for(path: Path) -> str:
    name = path.name
    for suffix in sorted(VOLUME_SUFFIXES, key=len, reverse=True):
        if name.lower().endswith(suffix):
            return name[: -len(suffix)]
    return path.stem


class VolumeRegistry:
    """Maps volume ids (file stems) to lazily loaded, cached volumes."""

    def __init__(self, volumes_dir):
        self.volumes_dir = Path(volumes_dir)
        if not self.volumes_dir.is_dir():
            raise ValueError(f"not a directory: {self.volumes_dir}")
        self.paths: dict[str, Path] = {}
        for path in sorted(self.volumes_dir.iterdir()):
            if path.is_file() and path.name.lower().endswith(VOLUME_SUFFIXES):
                vid = volume_id_for(path)
                if vid in self.paths:
                    raise ValueError(f"volume id collision: {path.name} vs {self.paths[vid].name}")
                self.paths[vid] = path
        if not self.paths:
            raise ValueError(f"no volumes found in {self.volumes_dir}")
        self._cache: dict[str, Volume] = {}
        self._lock = threading.Lock()

    def ids(self) -> list[str]:
        return sorted(self.paths)

    def get(self, vid: str) -> Volume:
        vol = self._cache.get(vid)
        if vol is not None:
            return vol
        if vid not in self.paths:
            raise KeyError(vid)
        with self._lock:
            if vid not in self._cache:
                self._cache[vid] = load_volume(self.paths[vid])
        return self._cache[vid]


class MatchRequest(BaseModel):
    source_id: str
    target_id: str
    point_mm: list[float] = Field(min_length=3, max_length=3)
    variant: int | None = None
    trace: bool = False


def _trace_payload(result: MatchResult) -> list[dict]:
    levels = []
    for t in result.levels:
        votes = []
        for v in t.votes:
            d = asdict(v)
            votes.append({k: (val.tolist() if isinstance(val, np.ndarray) else val) for k, val in d.items()})
        levels.append(
            {
                "level": t.level,
                "step_mm": t.step_mm,
                "scale_factor": t.scale_factor,
                "center_in_mm": t.center_in_mm.tolist(),
                "center_out_mm": t.center_out_mm.tolist(),
                "best_similarity": t.best_similarity,
                "forward_searches": t.forward_searches,
                "backward_searches": t.backward_searches,
                "votes": votes,
            }
        )
    return levels


def slice_image(volume: Volume, axis: int, index: int, wl_low: float, wl_high: float) -> bytes:
    """Orthogonal slice as an 8-bit PNG; columns run along the first in-plane
    volume axis and rows along the second (both ascending)."""
    if axis == 2:
        plane = volume.voxels[:, :, index].T  # rows y, cols x
    elif axis == 1:
        plane = volume.voxels[:, index, :].T  # rows z, cols x
    else:
        plane = volume.voxels[index, :, :].T  # rows z, cols y
    scaled = (np.clip((plane.astype(np.float64) - wl_low) / (wl_high - wl_low), 0.0, 1.0) * 255.0).astype(
        np.uint8
    )
    img = Image.fromarray(scaled, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def create_app(
    volumes_dir,
    config: MatcherConfig | None = None,
    threads: int | None = None,
    ui_dir=None,
) -> FastAPI:
    config = config or MatcherConfig()
    registry = VolumeRegistry(volumes_dir)
    workers = threads or os.cpu_count() or 2
    app = FastAPI(title="pointmatch", version="0.1.0")
    app.state.registry = registry
    app.state.config = config
    app.state.executor = ThreadPoolExecutor(max_workers=workers)

    @app.exception_handler(Exception)
    async def internal_error(_request: Request, exc: Exception):
        logger.exception("internal error: %s", exc)
        return JSONResponse(status_code=500, content={"error": "internal_error", "message": "internal error"})

    @app.get("/volumes")
    def volumes():
        out = []
        for vid in registry.ids():
            vol = registry.get(vid)
            out.append(
                {
                    "id": vid,
                    "dims": list(vol.dims),
                    "spacing_mm": vol.frame.spacing.tolist(),
                    "frame": {
                        "origin_mm": vol.frame.origin.tolist(),
                        "axes": vol.frame.axes.tolist(),
                        "label": vol.frame.frame_label,
                    },
                }
            )
        return out

    @app.get("/slice")
    def slice_endpoint(
        volume: str,
        axis: str = "z",
        index: int = 0,
        wl_low: float = Query(default=0.0),
        wl_high: float = Query(default=4096.0),
    ):
        try:
            vol = registry.get(volume)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown volume {volume!r}")
        if axis not in _AXIS_NAMES:
            raise HTTPException(status_code=400, detail=f"invalid axis {axis!r}")
        ax = _AXIS_NAMES[axis]
        if not 0 <= index < vol.dims[ax]:
            raise HTTPException(status_code=400, detail=f"index {index} out of range for axis {axis}")
        if not wl_high > wl_low:
            raise HTTPException(status_code=400, detail="wl_high must exceed wl_low")
        png = slice_image(vol, ax, index, wl_low, wl_high)
        return Response(content=png, media_type="image/png")

    @app.post("/match")
    def match_endpoint(req: MatchRequest, trace: int = Query(default=0)):
        try:
            source = registry.get(req.source_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown volume {req.source_id!r}")
        try:
            target = registry.get(req.target_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown volume {req.target_id!r}")
        cfg = app.state.config
        variant = req.variant if req.variant is not None else cfg.variant
        if variant not in (1, 3, 7, 13):
            raise HTTPException(status_code=400, detail=f"invalid variant {variant}")
        run = MatcherConfig(
            descriptor=cfg.descriptor, schedule=cfg.schedule, similarity=cfg.similarity,
            method=cfg.method, variant=variant, weight_consistency=cfg.weight_consistency,
            top_k=cfg.top_k, weighted_mean=cfg.weighted_mean, rescore_final=cfg.rescore_final,
            chunk_candidates=cfg.chunk_candidates,
        )
        try:
            result = app.state.executor.submit(run.match, source, req.point_mm, target).result()
        except ValueError as e:  # query outside volume and similar precondition failures
            raise HTTPException(status_code=400, detail=str(e))
        except SearchRegionError as e:
            raise HTTPException(status_code=400, detail=str(e))
        payload = {
            "point_mm": result.point_mm.tolist(),
            "similarity": result.similarity,
            "mean_consistency_mm": result.mean_consistency_mm,
            "elapsed_seconds": result.elapsed_seconds,
            "method": result.method,
        }
        if req.trace or trace:
            payload["trace"] = _trace_payload(result)
        return payload

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
