import struct

import numpy as np
import numpy.testing as npt
import pytest

from distillbound import dataio


class TestSynthetic:
    def test_margin_and_norms_enforced(self):
        spec = dataio.SynthSpec(n=200, d=8, target_half_margin=0.15,
                                direction_seed=1, sample_seed=2)
        ds, u = dataio.generate_synthetic(spec)
        npt.assert_allclose(np.linalg.norm(u), 1.0, rtol=1e-12)
        npt.assert_allclose(np.linalg.norm(ds.inputs, axis=1), 1.0, rtol=1e-12)
        assert np.min(np.abs(ds.inputs @ u)) >= 2 * 0.15 * (1 - 1e-12)
        npt.assert_array_equal(ds.labels, np.sign(ds.inputs @ u))
        assert ds.norm_floor == 1.0

    def test_deterministic(self):
        spec = dataio.SynthSpec(n=30, d=5, target_half_margin=0.1,
                                direction_seed=7, sample_seed=8)
        a, ua = dataio.generate_synthetic(spec)
        b, ub = dataio.generate_synthetic(spec)
        npt.assert_array_equal(a.inputs, b.inputs)
        npt.assert_array_equal(ua, ub)

    def test_direction_and_sample_seeds_independent(self):
        base = dataio.SynthSpec(n=20, d=5, target_half_margin=0.1,
                                direction_seed=1, sample_seed=2)
        other = dataio.SynthSpec(n=20, d=5, target_half_margin=0.1,
                                 direction_seed=1, sample_seed=99)
        _, u1 = dataio.generate_synthetic(base)
        _, u2 = dataio.generate_synthetic(other)
        npt.assert_array_equal(u1, u2)

    def test_extreme_margin_collapses_to_direction(self):
        # margin 0.5 forces |x.u| >= 1, so every unit point is +-u
        spec = dataio.SynthSpec(n=6, d=4, target_half_margin=0.5,
                                direction_seed=3, sample_seed=4)
        ds, u = dataio.generate_synthetic(spec)
        aligned = np.abs(ds.inputs @ u)
        npt.assert_allclose(aligned, 1.0, rtol=1e-12)

    def test_high_margin_low_dim_still_terminates(self):
        # acceptance probability is tiny; the reflection fallback must kick in
        spec = dataio.SynthSpec(n=50, d=40, target_half_margin=0.45,
                                direction_seed=5, sample_seed=6)
        ds, u = dataio.generate_synthetic(spec)
        assert np.min(np.abs(ds.inputs @ u)) >= 0.9 * (1 - 1e-12)
        npt.assert_allclose(np.linalg.norm(ds.inputs, axis=1), 1.0, rtol=1e-12)

    def test_rejects_bad_margin(self):
        for bad in (0.0, 0.6, -0.1):
            with pytest.raises(ValueError):
                dataio.generate_synthetic(dataio.SynthSpec(
                    n=4, d=3, target_half_margin=bad,
                    direction_seed=0, sample_seed=0))


class TestIdxFormat:
    def _write_pair(self, tmp_path, n=10, rows=3, cols=3, seed=0):
        rng = np.random.default_rng(seed)
        images = rng.integers(1, 255, size=(n, rows, cols), dtype=np.uint8)
        digits = rng.integers(0, 10, size=n, dtype=np.uint8)
        ip = str(tmp_path / "imgs")
        lp = str(tmp_path / "labs")
        dataio.write_idx_images(ip, images)
        dataio.write_idx_labels(lp, digits)
        return ip, lp, images, digits

    def test_round_trip(self, tmp_path):
        ip, lp, images, digits = self._write_pair(tmp_path)
        ds = dataio.load_digits_binary(ip, lp)
        assert ds.n == 10
        assert ds.d == 9
        npt.assert_array_equal(ds.labels, np.where(digits > 4, 1.0, -1.0))
        # inputs are raw pixels over the max norm
        flat = images.reshape(10, 9).astype(np.float64)
        scale = np.linalg.norm(flat, axis=1).max()
        npt.assert_allclose(ds.inputs, flat / scale, rtol=1e-15)
        assert np.linalg.norm(ds.inputs, axis=1).max() <= 1.0 + 1e-12

    def test_exclude_digits(self, tmp_path):
        ip, lp, _, digits = self._write_pair(tmp_path, n=60, seed=1)
        ds = dataio.load_digits_binary(ip, lp, exclude_digits=(1, 4, 7, 9))
        kept = digits[~np.isin(digits, [1, 4, 7, 9])]
        assert ds.n == kept.size
        npt.assert_array_equal(ds.labels, np.where(kept > 4, 1.0, -1.0))

    def test_max_n_truncates_in_file_order(self, tmp_path):
        ip, lp, images, _ = self._write_pair(tmp_path, n=20, seed=2)
        ds = dataio.load_digits_binary(ip, lp, max_n=5)
        assert ds.n == 5
        flat = images.reshape(20, 9).astype(np.float64)[:5]
        scale = np.linalg.norm(flat, axis=1).max()
        npt.assert_allclose(ds.inputs, flat / scale, rtol=1e-15)

    def test_bad_images_magic(self, tmp_path):
        path = tmp_path / "bad"
        path.write_bytes(struct.pack(">llll", 0x00000804, 1, 2, 2) + b"\x01" * 4)
        with pytest.raises(ValueError, match="magic"):
            dataio.load_digits_binary(str(path), str(path))

    def test_truncated_pixels(self, tmp_path):
        ip = tmp_path / "imgs"
        ip.write_bytes(struct.pack(">llll", dataio.IMAGES_MAGIC, 4, 2, 2)
                       + b"\x01" * 7)  # needs 16 bytes
        lp = tmp_path / "labs"
        dataio.write_idx_labels(str(lp), np.ones(4, dtype=np.uint8))
        with pytest.raises(ValueError, match="truncated"):
            dataio.load_digits_binary(str(ip), str(lp))

    def test_count_mismatch(self, tmp_path):
        ip = tmp_path / "imgs"
        lp = tmp_path / "labs"
        dataio.write_idx_images(str(ip), np.ones((3, 2, 2), dtype=np.uint8))
        dataio.write_idx_labels(str(lp), np.ones(5, dtype=np.uint8))
        with pytest.raises(ValueError, match="mismatch"):
            dataio.load_digits_binary(str(ip), str(lp))

    def test_everything_excluded(self, tmp_path):
        ip, lp, _, _ = self._write_pair(tmp_path, n=10, seed=3)
        with pytest.raises(ValueError, match="no samples"):
            dataio.load_digits_binary(str(ip), str(lp),
                                      exclude_digits=tuple(range(10)))

    def test_duplicate_inputs_warn(self, tmp_path):
        images = np.tile(np.arange(1, 5, dtype=np.uint8).reshape(1, 2, 2),
                         (4, 1, 1))
        ip = str(tmp_path / "imgs")
        lp = str(tmp_path / "labs")
        dataio.write_idx_images(ip, images)
        dataio.write_idx_labels(lp, np.array([0, 1, 5, 6], dtype=np.uint8))
        with pytest.warns(UserWarning, match="parallel"):
            dataio.load_digits_binary(ip, lp)

    def test_real_digit_files(self, digits_idx):
        ds = dataio.load_digits_binary(*digits_idx, max_n=300)
        assert ds.n == 300
        assert 0.0 < ds.norm_floor <= 1.0
        assert set(np.unique(ds.labels)) <= {-1.0, 1.0}


class TestNoise:
    def test_sigma_zero_is_identity(self, small_ds):
        ds, _ = small_ds
        out = dataio.add_gaussian_noise(ds, 0.0, seed=5)
        npt.assert_array_equal(out.inputs, ds.inputs)
        assert out.norm_floor == ds.norm_floor

    def test_noise_rescales_to_unit_max_norm(self, small_ds):
        ds, _ = small_ds
        out = dataio.add_gaussian_noise(ds, 0.3, seed=5)
        norms = np.linalg.norm(out.inputs, axis=1)
        npt.assert_allclose(norms.max(), 1.0, rtol=1e-12)
        npt.assert_allclose(out.norm_floor, norms.min(), rtol=1e-12)
        npt.assert_array_equal(out.labels, ds.labels)

    def test_noise_deterministic(self, small_ds):
        ds, _ = small_ds
        a = dataio.add_gaussian_noise(ds, 0.2, seed=9)
        b = dataio.add_gaussian_noise(ds, 0.2, seed=9)
        npt.assert_array_equal(a.inputs, b.inputs)

    def test_rejects_negative_sigma(self, small_ds):
        ds, _ = small_ds
        with pytest.raises(ValueError):
            dataio.add_gaussian_noise(ds, -0.1, seed=0)


class TestCsv:
    def test_dataset_round_trip(self, tmp_path, small_ds):
        ds, _ = small_ds
        path = tmp_path / "ds.csv"
        dataio.write_dataset_csv(ds, path)
        back = dataio.read_dataset_csv(path)
        npt.assert_array_equal(back.inputs, ds.inputs)
        npt.assert_array_equal(back.labels, ds.labels)
        npt.assert_allclose(back.norm_floor, 1.0, rtol=1e-12)

    def test_direction_round_trip(self, tmp_path, small_ds):
        _, u = small_ds
        path = tmp_path / "u.csv"
        dataio.write_direction_csv(u, path)
        npt.assert_array_equal(dataio.read_direction_csv(path), u)

    def test_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,x0\n1,0.5\n")
        with pytest.raises(ValueError, match="header"):
            dataio.read_dataset_csv(path)

    def test_rejects_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("y,x0,x1\n")
        with pytest.raises(ValueError, match="empty"):
            dataio.read_dataset_csv(path)

    def test_rejects_oversized_norm(self, tmp_path):
        path = tmp_path / "big.csv"
        path.write_text("y,x0,x1\n1,2.0,0\n")
        with pytest.raises(ValueError, match="norm"):
            dataio.read_dataset_csv(path)
