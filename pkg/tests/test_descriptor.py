import json

import numpy as np
import pytest

from pointmatch.descriptor import (
    decode_descriptor,
    default_spec,
    make_offset_grid,
    make_spec,
    sample_descriptor,
    sample_descriptor_batch,
    spec_from_json,
    spec_to_json,
)

from .conftest import identity_volume


class TestOffsetGrid:
    def test_grid3d_count_and_span(self):
        g = make_offset_grid("grid3d", extent=7, spacing_mm=8.0)
        assert g.count == 343
        assert g.offsets.min() == -24.0 and g.offsets.max() == 24.0

    def test_plane_xy_zero_z(self):
        g = make_offset_grid("plane_xy", extent=7, spacing_mm=6.0)
        assert g.count == 49
        assert np.all(g.offsets[:, 2] == 0.0)

    def test_symmetry(self):
        for kind in ("grid3d", "plane_xy", "plane_xz", "plane_yz"):
            g = make_offset_grid(kind, extent=5, spacing_mm=3.0)
            negated = {tuple(-o) for o in g.offsets}
            assert negated == {tuple(o) for o in g.offsets}

    def test_even_extent_rejected(self):
        with pytest.raises(ValueError):
            make_offset_grid("grid3d", extent=6, spacing_mm=8.0)

    def test_nonpositive_spacing_rejected(self):
        with pytest.raises(ValueError):
            make_offset_grid("grid3d", extent=7, spacing_mm=0.0)

    def test_enumeration_order_z_then_y_then_x(self):
        g = make_offset_grid("grid3d", extent=3, spacing_mm=1.0)
        # ascending z slowest, x fastest
        assert np.array_equal(g.offsets[0], [-1.0, -1.0, -1.0])
        assert np.array_equal(g.offsets[1], [0.0, -1.0, -1.0])
        assert np.array_equal(g.offsets[3], [-1.0, 0.0, -1.0])
        assert np.array_equal(g.offsets[9], [-1.0, -1.0, 0.0])


class TestSpec:
    def test_default_total_length(self):
        spec = default_spec()
        # enumeration oracle: four 7^3 grids, three 7^2 planes, one 7^3 grid
        assert spec.total_length == 4 * 343 + 3 * 49 + 343 == 1862
        assert spec.offsets.shape == (1862, 3)

    def test_json_round_trip(self):
        spec = default_spec()
        again = spec_from_json(spec_to_json(spec))
        assert np.array_equal(spec.offsets, again.offsets)
        doc = json.loads(spec_to_json(spec))
        assert len(doc["parts"]) == 8

    def test_part_slice(self):
        spec = default_spec()
        assert spec.part_slice(0) == slice(0, 343)
        assert spec.part_slice(4) == slice(4 * 343, 4 * 343 + 49)
        with pytest.raises(IndexError):
            spec.part_slice(8)


class TestSampling:
    def test_constant_volume(self):
        vol = identity_volume(np.full((20, 20, 20), 7.0))
        spec = make_spec([{"kind": "grid3d", "extent": 3, "spacing_mm": 2.0}])
        d = sample_descriptor(vol, (10.0, 10.0, 10.0), spec, scale=1.0)
        assert np.all(d.values == 7.0)
        d2 = sample_descriptor(vol, (9.0, 11.0, 10.0), spec, scale=2.5)
        assert np.all(d2.values == 7.0)

    def test_linear_ramp_scale_doubles_delta(self):
        # volume value = x coordinate in mm (unit spacing)
        nx = 128
        data = np.broadcast_to(np.arange(nx, dtype=np.float64)[:, None, None], (nx, 16, 16))
        vol = identity_volume(data)
        spec = make_spec([{"kind": "grid3d", "extent": 7, "spacing_mm": 8.0}])
        p = (64.0, 8.0, 8.0)
        k = int(np.flatnonzero((spec.offsets == [8.0, 0.0, 0.0]).all(axis=1))[0])
        center = int(np.flatnonzero((spec.offsets == [0.0, 0.0, 0.0]).all(axis=1))[0])
        d1 = sample_descriptor(vol, p, spec, scale=1.0)
        d2 = sample_descriptor(vol, p, spec, scale=2.0)
        delta1 = d1.values[k] - d1.values[center]
        delta2 = d2.values[k] - d2.values[center]
        assert delta1 == 8.0 and delta2 == 16.0

    def test_far_outside_is_all_zero(self):
        vol = identity_volume(np.full((10, 10, 10), 100.0))
        d = sample_descriptor(vol, (1000.0, 1000.0, 1000.0), default_spec(), scale=1.0)
        assert np.all(d.values == 0.0)

    def test_determinism(self, blob_phantom):
        p = (60.0, 55.0, 70.0)
        a = sample_descriptor(blob_phantom, p, default_spec(), scale=2.0)
        b = sample_descriptor(blob_phantom, p, default_spec(), scale=2.0)
        assert np.array_equal(a.values, b.values)

    def test_batch_matches_single(self, blob_phantom):
        rng = np.random.default_rng(0)
        pts = rng.uniform(20, 120, size=(5, 3))
        batch = sample_descriptor_batch(blob_phantom, pts, default_spec(), scale=4.0)
        for i, p in enumerate(pts):
            single = sample_descriptor(blob_phantom, p, default_spec(), scale=4.0)
            assert np.array_equal(batch[i], single.values)

    def test_translation_covariance_integer_voxels(self):
        rng = np.random.default_rng(1)
        data = rng.uniform(0, 4096, size=(24, 24, 24))
        vol = identity_volume(data, spacing=(2.0, 2.0, 2.0))
        shifted = identity_volume(np.roll(data, (3, 0, 0), axis=(0, 1, 2)), spacing=(2.0, 2.0, 2.0))
        spec = make_spec([{"kind": "grid3d", "extent": 3, "spacing_mm": 4.0}])
        p = np.array([20.0, 24.0, 22.0])
        t = np.array([6.0, 0.0, 0.0])  # 3 voxels * 2 mm
        a = sample_descriptor(vol, p, spec, scale=1.0)
        b = sample_descriptor(shifted, p + t, spec, scale=1.0)
        assert np.array_equal(a.values, b.values)

    def test_scale_multiplicativity(self, blob_phantom):
        parts = [{"kind": "grid3d", "extent": 5, "spacing_mm": 6.0}]
        spec = make_spec(parts)
        spec_scaled = make_spec([{"kind": "grid3d", "extent": 5, "spacing_mm": 12.0}])
        p = (70.0, 66.0, 80.0)
        a = sample_descriptor(blob_phantom, p, spec, scale=2.0 * 1.5)
        b = sample_descriptor(blob_phantom, p, spec_scaled, scale=1.5)
        assert np.array_equal(a.values, b.values)

    def test_values_stay_in_clipped_range(self, texture_phantom):
        rng = np.random.default_rng(2)
        pts = rng.uniform(-50, 250, size=(20, 3))
        batch = sample_descriptor_batch(texture_phantom, pts, default_spec(), scale=8.0)
        assert batch.min() >= 0.0 and batch.max() <= 4096.0

    def test_nonpositive_scale_rejected(self, blob_phantom):
        with pytest.raises(ValueError):
            sample_descriptor(blob_phantom, (10, 10, 10), default_spec(), scale=0.0)


class TestDecode:
    def test_constant_volume_constant_raster(self):
        # part 0 spans +-24 mm; keep every sample inside the constant volume
        vol = identity_volume(np.full((60, 60, 60), 55.0))
        spec = default_spec()
        d = sample_descriptor(vol, (30.0, 30.0, 30.0), spec, scale=1.0)
        img = decode_descriptor(d, spec, part_index=0, out_resolution_mm=4.0)
        assert np.all(img == 55.0)

    def test_identity_raster_at_native_pitch(self, blob_phantom):
        spec = default_spec()
        d = sample_descriptor(blob_phantom, (70.0, 75.0, 80.0), spec, scale=1.0)
        part = spec.parts[0]  # grid3d at 8 mm
        img = decode_descriptor(d, spec, part_index=0, out_resolution_mm=8.0)
        assert img.shape == (7, 7)
        vals = d.values[spec.part_slice(0)][part.offsets[:, 2] == 0.0].reshape(7, 7)
        assert np.array_equal(img, vals)

    def test_plane_part_decodes(self, blob_phantom):
        spec = default_spec()
        d = sample_descriptor(blob_phantom, (70.0, 75.0, 80.0), spec, scale=1.0)
        img = decode_descriptor(d, spec, part_index=4, out_resolution_mm=1.0)
        assert img.shape == (37, 37)  # span 36 mm at 1 mm pitch

    def test_invalid_part_raises(self, blob_phantom):
        spec = default_spec()
        d = sample_descriptor(blob_phantom, (70.0, 75.0, 80.0), spec, scale=1.0)
        with pytest.raises(IndexError):
            decode_descriptor(d, spec, part_index=99)
