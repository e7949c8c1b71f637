import json

import numpy as np
import pytest

from ridnet.sdk.data import (
    HU_MAX,
    HU_MIN,
    LesionSpec,
    Volume,
    attenuation_to_hu,
    build_dataset,
    export_pgm,
    extract_patches,
    generate_phantom,
    hu_to_attenuation,
    insert_poisson_noise,
    list_volume_pairs,
    read_volume,
    simulate_dataset,
    simulate_pair,
    split_by_volume,
    tile_grid,
    window_denormalize,
    window_normalize,
    write_volume,
)
from ridnet.sdk.errors import ShapeError, VolumeFormatError
from ridnet.sdk.models.canonical_types import Protocol
from ridnet.sdk.models.config import DataConfig, WindowSpec

DIMS = (9, 64, 64)


class TestVolume:
    def test_rejects_out_of_range_hu(self):
        with pytest.raises(ValueError):
            Volume(hu=np.full((1, 2, 2), HU_MAX + 1.0))

    def test_rejects_non_3d(self):
        with pytest.raises(ValueError):
            Volume(hu=np.zeros((4, 4)))

    def test_window_round_trip(self):
        window = WindowSpec.abdomen()
        hu = np.array([-160.0, 0.0, 40.0, 239.0])
        np.testing.assert_allclose(window_denormalize(window_normalize(hu, window), window), hu, atol=1e-9)

    def test_window_center_maps_to_half(self):
        window = WindowSpec.abdomen()
        np.testing.assert_allclose(window_normalize(np.array([40.0, -160.0]), window), [0.5, 0.0])

    def test_window_clamps(self):
        np.testing.assert_array_equal(window_normalize(np.array([-1000.0, 1000.0]), WindowSpec.abdomen()), [0.0, 1.0])


class TestPhantom:
    def test_deterministic_per_seed(self):
        a = generate_phantom(4, DIMS)
        b = generate_phantom(4, DIMS)
        c = generate_phantom(5, DIMS)
        np.testing.assert_array_equal(a.hu, b.hu)
        assert not np.array_equal(a.hu, c.hu)
        assert a.provenance == b.provenance

    def test_hu_range_and_anatomy(self):
        volume = generate_phantom(1, DIMS)
        assert volume.dims == DIMS
        assert HU_MIN <= volume.hu.min() and volume.hu.max() <= HU_MAX
        assert volume.hu[0, 0, 0] == pytest.approx(-1000.0)
        assert volume.provenance["lesions"]

    def test_chest_protocol_has_lungs(self):
        volume = generate_phantom(1, DIMS, protocol=Protocol.CHEST)
        assert np.any(np.isclose(volume.hu, -850.0))
        assert volume.provenance["protocol"] == "chest"

    def test_requested_lesion(self):
        spec = LesionSpec(center=(4, 32, 32), radius=5.0, contrast=30.0)
        base = generate_phantom(2, DIMS)
        with_lesion = generate_phantom(2, DIMS, lesions=[spec])
        diff = with_lesion.hu - base.hu
        assert diff[4, 32, 32] == pytest.approx(30.0, abs=1e-3)
        assert diff[4, 5, 5] == 0.0
        assert with_lesion.provenance["lesions"][-1]["requested"] is True

    def test_minimum_dims(self):
        with pytest.raises(ValueError):
            generate_phantom(0, (3, 64, 64))

    def test_slices_carry_shared_structure(self):
        volume = generate_phantom(3, DIMS)
        neighbours = np.corrcoef(volume.hu[4].ravel(), volume.hu[5].ravel())[0, 1]
        assert neighbours > 0.9


class TestNoise:
    def test_attenuation_round_trip(self):
        hu = np.array([-500.0, 0.0, 1000.0])
        np.testing.assert_allclose(attenuation_to_hu(hu_to_attenuation(hu)), hu, atol=1e-9)

    @pytest.mark.parametrize("dose", [0.0, -0.1, 1.5])
    def test_dose_must_be_a_fraction(self, dose):
        with pytest.raises(ValueError):
            insert_poisson_noise(generate_phantom(0, DIMS), dose)

    def test_deterministic_per_seed(self):
        clean = generate_phantom(0, DIMS)
        a = insert_poisson_noise(clean, 0.25, seed=7)
        b = insert_poisson_noise(clean, 0.25, seed=7)
        np.testing.assert_array_equal(a.hu, b.hu)
        assert a.provenance["noise_seed"] == 7
        assert a.provenance["dose_fraction"] == 0.25
        assert "flagged_voxels" in a.provenance

    def test_high_count_limit_is_nearly_clean(self):
        clean = generate_phantom(0, DIMS)
        noisy = insert_poisson_noise(clean, 1.0, i0=1e10, seed=2)
        assert np.max(np.abs(noisy.hu - clean.hu)) < 1.0

    def test_extreme_counts_are_clamped_and_flagged(self):
        clean = generate_phantom(0, DIMS)
        noisy = insert_poisson_noise(clean, 1.0, i0=1e19, seed=2)
        assert noisy.provenance["flagged_voxels"] == clean.hu.size
        assert np.all(np.isfinite(noisy.hu))
        assert noisy.hu.min() >= HU_MIN and noisy.hu.max() <= HU_MAX

    def test_deviation_grows_as_dose_falls(self):
        clean = generate_phantom(0, DIMS)
        deviation = [np.mean((insert_poisson_noise(clean, dose, seed=3).hu - clean.hu) ** 2) for dose in (1.0, 0.5, 0.25, 0.1)]
        assert all(a < b for a, b in zip(deviation, deviation[1:]))

    def test_lower_dose_is_noisier(self):
        clean = generate_phantom(0, DIMS)
        body = clean.hu > -500
        quarter = insert_poisson_noise(clean, 0.25, seed=1).hu - clean.hu
        full = insert_poisson_noise(clean, 1.0, seed=1).hu - clean.hu
        assert quarter[body].std() > 1.5 * full[body].std()
        assert abs(quarter[body].mean()) < quarter[body].std()


class TestSynthesis:
    def test_pairs_are_pure_functions_of_index(self):
        config = DataConfig(seed=2, volumes=2, dims=DIMS)
        clean0, noisy0 = simulate_pair(config, 0)
        again = simulate_dataset(config)
        np.testing.assert_array_equal(again[0][1].hu, noisy0.hu)
        assert not np.array_equal(again[1][0].hu, clean0.hu)
        assert noisy0.provenance["noise_seed"] != clean0.provenance["seed"]

    def test_chest_protocol_defaults(self):
        config = DataConfig(protocol="chest")
        assert config.dose == pytest.approx(0.10)
        assert config.window.level == -600.0


class TestPatches:
    def test_tile_grid(self):
        assert tile_grid(64, 16) == [0, 16, 32, 48]
        assert tile_grid(64, 16, 5) == [5, 21, 37]

    def test_patches_of_interior_slices(self, volume_pair, small_data_config):
        clean, noisy = volume_pair
        window = small_data_config.window
        samples = extract_patches(noisy, clean, window, patch=16)
        assert len(samples) == 7 * 16
        first = samples[0]
        assert first.low_stack.shape == (3, 16, 16)
        assert first.slice_index == 1
        np.testing.assert_allclose(first.target, window_normalize(clean.hu[1, :16, :16], window), atol=1e-6)
        np.testing.assert_allclose(first.low_stack[0], window_normalize(noisy.hu[0, :16, :16], window), atol=1e-6)

    def test_random_offset_is_seeded(self, volume_pair, small_data_config):
        clean, noisy = volume_pair
        a = extract_patches(noisy, clean, small_data_config.window, 16, random_offset=True, seed=4)
        b = extract_patches(noisy, clean, small_data_config.window, 16, random_offset=True, seed=4)
        assert [s.source for s in a] == [s.source for s in b]
        assert all(0 <= s.row <= 48 and 0 <= s.col <= 48 for s in a)

    def test_misaligned_volumes(self, volume_pair, small_data_config):
        clean, _ = volume_pair
        other = Volume(hu=np.zeros((9, 32, 32)))
        with pytest.raises(ShapeError):
            extract_patches(other, clean, small_data_config.window)

    def test_patch_larger_than_slice(self, volume_pair, small_data_config):
        clean, noisy = volume_pair
        with pytest.raises(ShapeError):
            extract_patches(noisy, clean, small_data_config.window, patch=128)

    def test_dataset_truncates_and_tags_volumes(self, volume_pair, small_data_config):
        clean, noisy = volume_pair
        samples = build_dataset([(noisy, clean), (noisy, clean)], small_data_config.window, 16, max_patches=120)
        assert len(samples) == 120
        assert samples[-1].volume == 1

    def test_split_by_volume(self):
        assert split_by_volume(list(range(10)), 0.4) == (list(range(6)), [6, 7, 8, 9])
        assert split_by_volume([0, 1], 0.1) == ([0], [1])
        assert split_by_volume([0], 0.5) == ([0], [])
        assert split_by_volume([0, 1, 2], 0.0) == ([0, 1, 2], [])


class TestVolumeFiles:
    def test_round_trip_with_window(self, tmp_path, volume_pair):
        clean, _ = volume_pair
        sidecar = write_volume(clean, tmp_path / "clean_000", WindowSpec.abdomen())
        volume, window = read_volume(sidecar)
        np.testing.assert_array_equal(volume.hu, clean.hu)
        assert volume.spacing == clean.spacing
        assert window == WindowSpec.abdomen()
        assert volume.provenance["seed"] == clean.provenance["seed"]

    def test_rewrite_is_byte_identical(self, tmp_path, volume_pair):
        clean, _ = volume_pair
        write_volume(clean, tmp_path / "a" / "v")
        write_volume(clean, tmp_path / "b" / "v")
        for suffix in (".json", ".f32"):
            assert (tmp_path / "a" / f"v{suffix}").read_bytes() == (tmp_path / "b" / f"v{suffix}").read_bytes()

    def test_missing_sidecar(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_volume(tmp_path / "nothing")

    def test_malformed_sidecar(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(VolumeFormatError):
            read_volume(tmp_path / "bad")

    def test_blob_size_mismatch(self, tmp_path, volume_pair):
        clean, _ = volume_pair
        sidecar = write_volume(clean, tmp_path / "v")
        meta = json.loads(sidecar.read_text())
        meta["dims"] = [9, 64, 32]
        sidecar.write_text(json.dumps(meta))
        with pytest.raises(VolumeFormatError):
            read_volume(sidecar)

    def test_list_pairs(self, tmp_path, volume_pair):
        clean, noisy = volume_pair
        for k in range(2):
            write_volume(clean, tmp_path / f"clean_{k:03d}")
            write_volume(noisy, tmp_path / f"noisy_{k:03d}")
        pairs = list_volume_pairs(tmp_path)
        assert [(n.name, c.name) for n, c in pairs] == [
            ("noisy_000.json", "clean_000.json"),
            ("noisy_001.json", "clean_001.json"),
        ]
        (tmp_path / "clean_001.json").unlink()
        with pytest.raises(VolumeFormatError):
            list_volume_pairs(tmp_path)

    def test_pgm_export(self, tmp_path, volume_pair):
        clean, _ = volume_pair
        path = export_pgm(clean, 4, WindowSpec.abdomen(), tmp_path / "slice.pgm")
        data = path.read_bytes()
        header = b"P5\n64 64\n65535\n"
        assert data.startswith(header)
        assert len(data) == len(header) + 64 * 64 * 2
