"""Command-line entry points.

    pointmatch match     one query point between two volume files
    pointmatch eval      run an annotated pair manifest, write FROC artifacts
    pointmatch landmark  propagate one template landmark to a cohort
    pointmatch bench     repeat one match N times, report timing
    pointmatch serve     HTTP service over a volume directory
    pointmatch phantom   generate synthetic demo volumes

Flags mirror environment variables (POINTMATCH_CONFIG, POINTMATCH_VARIANT,
POINTMATCH_THREADS, POINTMATCH_BIND, POINTMATCH_VOLUMES_DIR); the flag wins.
Successful commands print JSON to stdout and exit 0. Failures print an error
JSON object and exit 1; eval/landmark exit 2 when any entry failed to load.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

logger = logging.getLogger(__name__)


def _env(name: str, default=None):
    return os.environ.get(f"POINTMATCH_{name}", default)


def parse_point(text: str) -> np.ndarray:
    parts = [float(v) for v in text.replace(" ", "").split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected x,y,z - got {text!r}")
    return np.array(parts)


def load_config(args) -> "MatcherConfig":
    from .config import MatcherConfig

    config = MatcherConfig.load(args.config) if args.config else MatcherConfig()
    if getattr(args, "variant", None) is not None:
        config.variant = args.variant
    if getattr(args, "method", None):
        config.method = args.method
    return config


def apply_threads(args) -> None:
    if getattr(args, "threads", None):
        from . import _kernels

        _kernels.set_num_threads(args.threads)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pointmatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, variant=True):
        p.add_argument("--config", default=_env("CONFIG"), help="matcher config JSON path")
        p.add_argument("--threads", type=int, default=int(_env("THREADS", 0)) or None)
        if variant:
            p.add_argument(
                "--variant", type=int, choices=(1, 3, 7, 13),
                default=int(_env("VARIANT", 0)) or None,
                help="neighbor-vote count (default from config: 13)",
            )

    p = sub.add_parser("match", help="match one point between two volumes")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--point", required=True, help="query in source world mm: x,y,z")
    p.add_argument("--method", choices=("cpm", "pm"), default=None)
    p.add_argument("--trace", action="store_true", help="include the per-level trace")
    common(p)

    p = sub.add_parser("eval", help="evaluate an annotated pair manifest")
    p.add_argument("--manifest", required=True, help="JSON-lines pair manifest")
    p.add_argument("--out", required=True, help="output directory for artifacts")
    p.add_argument("--method", choices=("cpm", "pm"), default=None)
    p.add_argument("--workers", type=int, default=1)
    common(p)

    p = sub.add_parser("landmark", help="propagate a template landmark to a cohort")
    p.add_argument("--template", required=True, help="template volume path")
    p.add_argument("--point", required=True, help="template landmark mm: x,y,z")
    p.add_argument("--cohort", required=True, help="JSON-lines cohort manifest")
    p.add_argument("--out", required=True)
    common(p)

    p = sub.add_parser("bench", help="repeat one match and report timing")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--point", required=True)
    p.add_argument("-n", "--repeats", type=int, default=10)
    common(p)

    p = sub.add_parser("serve", help="serve matching and slices over HTTP")
    p.add_argument("--volumes-dir", default=_env("VOLUMES_DIR"), required=_env("VOLUMES_DIR") is None)
    p.add_argument("--bind", default=_env("BIND", "127.0.0.1:8000"), help="host:port")
    p.add_argument("--ui-dir", default=None, help="static viewer bundle to mount at /ui")
    common(p)

    p = sub.add_parser("phantom", help="write a synthetic phantom volume")
    p.add_argument("--kind", choices=("blobs", "ramps", "texture"), default="blobs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", default="64,64,64")
    p.add_argument("--spacing", default="3.5,3.5,3.5")
    p.add_argument("--out", required=True, help="output volume path (.mhd/.mha/.nii/.nii.gz)")
    p.add_argument("--warped-twin", default=None, help="also write a smoothly warped twin here")
    p.add_argument("--warp-amplitude-mm", type=float, default=6.0)
    return parser


def cmd_match(args) -> int:
    from .volume_io import load_volume

    config = load_config(args)
    source = load_volume(args.source)
    target = load_volume(args.target)
    result = config.match(source, parse_point(args.point), target)
    payload = {
        "point_mm": result.point_mm.tolist(),
        "similarity": result.similarity,
        "mean_consistency_mm": result.mean_consistency_mm,
        "elapsed_seconds": result.elapsed_seconds,
        "method": result.method,
    }
    if args.trace:
        from .service import _trace_payload

        payload["trace"] = _trace_payload(result)
    print(json.dumps(payload))
    return 0


def cmd_eval(args) -> int:
    from .evalharness import load_manifest, run_eval

    config = load_config(args)
    manifest = load_manifest(args.manifest)
    summary, _, _ = run_eval(manifest, config, out_dir=args.out, workers=args.workers)
    print(
        json.dumps(
            {
                "mean_mm": summary.mean_mm,
                "median_mm": summary.median_mm,
                "sens_at_10mm": summary.sens_at_10mm,
                "mean_seconds": summary.mean_seconds,
                "n_pairs": summary.n_pairs,
                "n_failed": summary.n_failed,
                "out": args.out,
            }
        )
    )
    return 2 if summary.n_failed else 0


def cmd_landmark(args) -> int:
    from .evalharness import landmark_cohort, load_cohort
    from .volume_io import load_volume

    config = load_config(args)
    template = load_volume(args.template)
    cohort = load_cohort(args.cohort)
    summary, _, _ = landmark_cohort(template, parse_point(args.point), cohort, config, out_dir=args.out)
    print(
        json.dumps(
            {
                "mean_mm": summary.mean_mm,
                "sens_at_10mm": summary.sens_at_10mm,
                "n_cases": summary.n_pairs,
                "n_failed": summary.n_failed,
                "out": args.out,
            }
        )
    )
    return 2 if summary.n_failed else 0


def cmd_bench(args) -> int:
    from .volume_io import load_volume

    config = load_config(args)
    source = load_volume(args.source)
    target = load_volume(args.target)
    point = parse_point(args.point)
    config.match(source, point, target)  # warm caches and jit outside the timed loop
    times = []
    for _ in range(args.repeats):
        t0 = time.perf_counter()
        config.match(source, point, target)
        times.append(time.perf_counter() - t0)
    arr = np.array(times)
    print(
        json.dumps(
            {
                "repeats": args.repeats,
                "mean_seconds": float(arr.mean()),
                "stddev_seconds": float(arr.std()),
                "min_seconds": float(arr.min()),
                "max_seconds": float(arr.max()),
            }
        )
    )
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.bind.rpartition(":")
    app = create_app(args.volumes_dir, config=load_config(args), threads=args.threads, ui_dir=args.ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


def cmd_phantom(args) -> int:
    from . import phantoms
    from .volume_io import save_volume

    dims = tuple(int(v) for v in args.dims.split(","))
    spacing = tuple(float(v) for v in args.spacing.split(","))
    if args.warped_twin:
        source, target, _ = phantoms.warped_pair(
            kind=args.kind, seed=args.seed, dims=dims, spacing_mm=spacing,
            amplitude_mm=args.warp_amplitude_mm,
        )
        save_volume(source, args.out)
        save_volume(target, args.warped_twin)
        print(json.dumps({"out": args.out, "warped_twin": args.warped_twin, "dims": list(dims)}))
    else:
        save_volume(phantoms.make_phantom(args.kind, seed=args.seed, dims=dims, spacing_mm=spacing), args.out)
        print(json.dumps({"out": args.out, "dims": list(dims)}))
    return 0


COMMANDS = {
    "match": cmd_match,
    "eval": cmd_eval,
    "landmark": cmd_landmark,
    "bench": cmd_bench,
    "serve": cmd_serve,
    "phantom": cmd_phantom,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    apply_threads(args)
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        return 1
    except Exception as e:  # noqa: BLE001 - CLI boundary: every failure becomes a structured error
        logger.error("%s", e)
        print(json.dumps({"error": {"type": type(e).__name__, "message": str(e)}}))
        return 1


if __name__ == "__main__":
    sys.exit(main())
