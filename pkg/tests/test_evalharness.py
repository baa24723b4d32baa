import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pointmatch import phantoms
from pointmatch.config import MatcherConfig
from pointmatch.deeplesion import manifest_from_tracking_csv
from pointmatch.evalharness import (
    CohortEntry,
    default_thresholds,
    froc,
    landmark_cohort,
    load_manifest,
    manifest_from_dicts,
    run_eval,
    save_manifest,
    sensitivity_at,
    summarize,
)
from pointmatch.volume_io import save_volume

from .conftest import PHANTOM_SPACING, TEST_SCHEDULE
from .oracles import brute_froc, brute_mean, brute_median


def fast_config(variant=13, method="cpm"):
    return MatcherConfig(schedule=TEST_SCHEDULE, variant=variant, method=method)


class TestFroc:
    def test_single_zero_distance(self):
        curve = froc([0.0], thresholds=[0.0])
        assert curve.sensitivity[0] == 1.0 and curve.n == 1

    def test_simple_counts(self):
        curve = froc([3.0, 12.0, 5.0], thresholds=[10.0])
        assert curve.sensitivity[0] == pytest.approx(2.0 / 3.0)

    def test_all_zero_distances(self):
        curve = froc([0.0, 0.0, 0.0])
        assert np.all(curve.sensitivity == 1.0)

    def test_matches_brute_force_counting(self):
        rng = np.random.default_rng(0)
        thresholds = default_thresholds()
        for _ in range(50):
            d = rng.uniform(0, 25, size=rng.integers(1, 40))
            curve = froc(d, thresholds)
            assert np.array_equal(curve.sensitivity, brute_froc(d.tolist(), thresholds.tolist()))

    def test_infinite_distance_counts_as_miss(self):
        curve = froc([1.0, math.inf], thresholds=[10.0, 1e9])
        assert curve.sensitivity[0] == 0.5 and curve.sensitivity[1] == 0.5

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            froc([])

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            froc([-1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=0, max_value=50, allow_nan=False), min_size=1, max_size=60))
def test_froc_monotone(distances):
    curve = froc(distances)
    assert np.all(np.diff(curve.sensitivity) >= 0)
    assert 0.0 <= curve.sensitivity[0] and curve.sensitivity[-1] <= 1.0


class TestManifest:
    def test_round_trip(self, tmp_path):
        m = manifest_from_dicts(
            [
                {"source_path": "a.nii", "target_path": "b.nii", "query_mm": [1, 2, 3],
                 "truth_mm": [4, 5, 6], "tag": "x"},
                {"source_path": "c.nii", "target_path": "d.nii", "query_mm": [0, 0, 0],
                 "truth_mm": [1, 1, 1]},
            ]
        )
        path = tmp_path / "m.jsonl"
        save_manifest(m, path)
        again = load_manifest(path)
        assert again == m

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            manifest_from_dicts(
                [{"source_path": "a", "target_path": "b", "query_mm": [1, 2, float("nan")],
                  "truth_mm": [0, 0, 0]}]
            )

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            manifest_from_dicts([])


@pytest.fixture(scope="module")
def pair_files(tmp_path_factory):
    """Small on-disk identity + translated pair shared by harness tests."""
    root = tmp_path_factory.mktemp("vols")
    vol = phantoms.make_phantom("blobs", seed=21, dims=(44, 44, 44), spacing_mm=PHANTOM_SPACING)
    shift = np.array([4, -3, 5])
    target = phantoms.translate_content(vol, shift)
    src = root / "case_a.mhd"
    tgt = root / "case_b.mhd"
    save_volume(vol, src)
    save_volume(target, tgt)
    t = shift * np.array(PHANTOM_SPACING)
    queries = phantoms.sample_structured_points(vol, 3, seed=9, margin_mm=40)
    return src, tgt, queries, t


def toy_manifest(pair_files):
    src, tgt, queries, t = pair_files
    rows = []
    for q in queries:
        rows.append(
            {"source_path": str(src), "target_path": str(tgt),
             "query_mm": list(q), "truth_mm": list(q + t), "tag": "shifted"}
        )
    rows.append(
        {"source_path": str(src), "target_path": str(src),
         "query_mm": list(queries[0]), "truth_mm": list(queries[0]), "tag": "identity"}
    )
    return manifest_from_dicts(rows)


class TestRunEval:
    def test_end_to_end_artifacts(self, pair_files, tmp_path):
        manifest = toy_manifest(pair_files)
        out = tmp_path / "out"
        summary, curve, records = run_eval(manifest, fast_config(), out_dir=out)
        assert summary.n_pairs == 4 and summary.n_failed == 0
        assert summary.mean_mm <= 2.0
        assert summary.sens_at_10mm == 1.0
        pairs_csv = (out / "pairs.csv").read_text().splitlines()
        assert pairs_csv[0] == "id,distance_mm,status"
        assert len(pairs_csv) == 5
        froc_csv = (out / "froc.csv").read_text().splitlines()
        assert froc_csv[0] == "threshold,sensitivity"
        sens = [float(line.split(",")[1]) for line in froc_csv[1:]]
        assert sens == sorted(sens)
        doc = json.loads((out / "summary.json").read_text())
        assert set(doc) == {"mean_mm", "median_mm", "sens_at_10mm", "mean_seconds", "n_pairs", "n_failed"}
        timing = (out / "timing.csv").read_text().splitlines()
        assert timing[0] == "id,seconds" and len(timing) == 5

    def test_missing_volume_marked_failed_run_continues(self, pair_files, tmp_path):
        src, tgt, queries, t = pair_files
        manifest = manifest_from_dicts(
            [
                {"source_path": str(src), "target_path": "/nonexistent/gone.mhd",
                 "query_mm": list(queries[0]), "truth_mm": [0, 0, 0], "tag": "broken"},
                {"source_path": str(src), "target_path": str(src),
                 "query_mm": list(queries[0]), "truth_mm": list(queries[0]), "tag": "ok"},
            ]
        )
        summary, curve, records = run_eval(manifest, fast_config(), out_dir=tmp_path / "o")
        assert summary.n_failed == 1 and summary.n_pairs == 2
        assert records[0].status == "load_error" and math.isinf(records[0].distance_mm)
        assert records[1].status == "ok"
        assert summary.sens_at_10mm == 0.5  # failure counts as a miss
        line = (tmp_path / "o" / "pairs.csv").read_text().splitlines()[1]
        assert line == "0,inf,load_error"

    def test_byte_identical_across_runs(self, pair_files, tmp_path):
        manifest = toy_manifest(pair_files)
        run_eval(manifest, fast_config(), out_dir=tmp_path / "r1")
        run_eval(manifest, fast_config(), out_dir=tmp_path / "r2")
        a = (tmp_path / "r1" / "pairs.csv").read_bytes()
        b = (tmp_path / "r2" / "pairs.csv").read_bytes()
        assert a == b
        assert (tmp_path / "r1" / "froc.csv").read_bytes() == (tmp_path / "r2" / "froc.csv").read_bytes()

    def test_worker_pool_same_results(self, pair_files, tmp_path):
        manifest = toy_manifest(pair_files)
        run_eval(manifest, fast_config(), out_dir=tmp_path / "w1", workers=1)
        run_eval(manifest, fast_config(), out_dir=tmp_path / "w2", workers=3)
        assert (tmp_path / "w1" / "pairs.csv").read_bytes() == (tmp_path / "w2" / "pairs.csv").read_bytes()

    def test_summary_matches_brute_force(self, pair_files):
        manifest = toy_manifest(pair_files)
        summary, _, records = run_eval(manifest, fast_config(variant=3))
        ok = [r.distance_mm for r in records if r.status == "ok"]
        assert summary.mean_mm == brute_mean(ok)
        assert summary.median_mm == brute_median(ok)
        assert summary.sens_at_10mm == sensitivity_at([r.distance_mm for r in records], 10.0)


class TestSummarize:
    def test_all_failed(self):
        from pointmatch.evalharness import EvalRecord

        records = [
            EvalRecord(index=0, tag="", status="load_error", distance_mm=math.inf,
                       seconds=0.0, estimate_mm=None, truth_mm=(0, 0, 0))
        ]
        s = summarize(records)
        assert s.mean_mm is None and s.median_mm is None and s.sens_at_10mm == 0.0


class TestLandmarkCohort:
    def test_self_template_and_translated_cohort(self, pair_files, tmp_path):
        src, tgt, queries, t = pair_files
        from pointmatch.volume_io import load_volume

        template = load_volume(src)
        point = queries[0]
        cohort = (
            CohortEntry(volume_path=str(src), truth_mm=tuple(point), tag="self"),
            CohortEntry(volume_path=str(tgt), truth_mm=tuple(point + t), tag="shifted"),
        )
        summary, curve, records = landmark_cohort(template, point, cohort, fast_config(), out_dir=tmp_path)
        assert records[0].distance_mm <= 1.0
        assert records[1].distance_mm <= 2.0
        assert curve.n == 2
        assert (tmp_path / "froc.csv").exists()


class TestDeepLesionAdapter:
    def test_voxel_coordinates_converted(self, pair_files, tmp_path):
        src, tgt, queries, t = pair_files
        csv_path = tmp_path / "pairs.csv"
        csv_path.write_text(
            "source_image,target_image,source_x,source_y,source_z,target_x,target_y,target_z\n"
            f"{src.name},{tgt.name},10,11,12,14,8,17\n"
        )
        manifest = manifest_from_tracking_csv(csv_path, src.parent)
        e = manifest.entries[0]
        sp = np.array(PHANTOM_SPACING)
        assert np.allclose(e.query_mm, np.array([10, 11, 12]) * sp)
        assert np.allclose(e.truth_mm, np.array([14, 8, 17]) * sp)

    def test_mm_passthrough_and_column_map(self, pair_files, tmp_path):
        src, tgt, _, _ = pair_files
        csv_path = tmp_path / "pairs.csv"
        csv_path.write_text(
            "img0,img1,ax,ay,az,bx,by,bz\n"
            f"{src.name},{tgt.name},1.5,2.5,3.5,4.5,5.5,6.5\n"
        )
        manifest = manifest_from_tracking_csv(
            csv_path,
            src.parent,
            columns={
                "source_image": "img0", "target_image": "img1",
                "source_x": "ax", "source_y": "ay", "source_z": "az",
                "target_x": "bx", "target_y": "by", "target_z": "bz",
            },
            coordinates="mm",
        )
        assert manifest.entries[0].query_mm == (1.5, 2.5, 3.5)

    def test_unreadable_volume_skipped(self, pair_files, tmp_path):
        src, tgt, _, _ = pair_files
        csv_path = tmp_path / "pairs.csv"
        csv_path.write_text(
            "source_image,target_image,source_x,source_y,source_z,target_x,target_y,target_z\n"
            f"missing.mhd,{tgt.name},1,1,1,2,2,2\n"
            f"{src.name},{tgt.name},3,3,3,4,4,4\n"
        )
        manifest = manifest_from_tracking_csv(csv_path, src.parent)
        assert len(manifest) == 1

    def test_missing_column_raises(self, pair_files, tmp_path):
        src, tgt, _, _ = pair_files
        csv_path = tmp_path / "bad.csv"
        csv_path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            manifest_from_tracking_csv(csv_path, src.parent)
