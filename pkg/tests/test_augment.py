import numpy as np
import pytest

from spectralforge.augment import AugmentConfig, augment
from spectralforge.preprocess import snv


class TestAugment:
    def test_factor_one_is_identity(self, small_dataset):
        x, y = small_dataset
        ax, ay = augment(x, y, AugmentConfig(factor=1, seed=3))
        np.testing.assert_array_equal(ax.rows, x.rows)
        np.testing.assert_array_equal(ay.rows, y.rows)

    def test_row_count_multiplication(self, small_dataset):
        x, y = small_dataset
        ax, ay = augment(x, y, AugmentConfig(factor=50, seed=3))
        assert ax.n_samples == 50 * x.n_samples
        assert ay.n_samples == 50 * y.n_samples

    def test_paper_scale_example(self):
        # 32 training samples at factor 50 -> 1600 rows
        from conftest import make_matrix
        from spectralforge.core import TargetMatrix

        rng = np.random.default_rng(0)
        x32 = make_matrix(rng.uniform(1, 2, (32, 10)))
        y32 = TargetMatrix(rng.uniform([70, 10, 2], [80, 20, 8], (32, 3)))
        ax, ay = augment(x32, y32, AugmentConfig(factor=50, seed=1))
        assert ax.rows.shape == (1600, 10)
        assert ay.rows.shape == (1600, 3)

    def test_originals_kept_and_targets_copied_bitwise(self, small_dataset):
        x, y = small_dataset
        factor = 5
        ax, ay = augment(x, y, AugmentConfig(factor=factor, seed=9))
        for i in range(x.n_samples):
            np.testing.assert_array_equal(ax.rows[i * factor], x.rows[i])
            for j in range(factor):
                assert np.array_equal(ay.rows[i * factor + j], y.rows[i])

    def test_zero_scales_reproduce_sources_exactly(self, small_dataset):
        x, y = small_dataset
        cfg = AugmentConfig(factor=4, offset_scale=0, mult_scale=0, slope_scale=0, seed=2)
        ax, _ = augment(x, y, cfg)
        for i in range(x.n_samples):
            for j in range(4):
                np.testing.assert_array_equal(ax.rows[i * 4 + j], x.rows[i])

    def test_seed_determinism(self, small_dataset):
        x, y = small_dataset
        a1, _ = augment(x, y, AugmentConfig(factor=7, seed=42))
        a2, _ = augment(x, y, AugmentConfig(factor=7, seed=42))
        np.testing.assert_array_equal(a1.rows, a2.rows)
        a3, _ = augment(x, y, AugmentConfig(factor=7, seed=43))
        assert not np.array_equal(a1.rows, a3.rows)

    def test_offset_only_variants_are_snv_invariant(self, small_dataset):
        # offsets are exactly what SNV removes
        x, y = small_dataset
        cfg = AugmentConfig(factor=6, offset_scale=0.5, mult_scale=0, slope_scale=0, seed=8)
        ax, _ = augment(x, y, cfg)
        for i in range(x.n_samples):
            expected = snv(x.rows[i])
            for j in range(6):
                np.testing.assert_allclose(snv(ax.rows[i * 6 + j]), expected, atol=1e-10)

    def test_augmented_ids_unique(self, small_dataset):
        x, y = small_dataset
        ax, _ = augment(x, y, AugmentConfig(factor=3, seed=0))
        assert len(set(ax.sample_ids)) == ax.n_samples

    def test_invalid_factor(self):
        with pytest.raises(ValueError, match="factor"):
            AugmentConfig(factor=0)
