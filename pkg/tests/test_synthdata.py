"""Test phantoms, masks, noise and dataset assembly"""

import numpy as np
import pytest

from shared.exceptions import DatasetFormatError, ValidationError
from shared.imaging.operators import FourierModel, IdentityModel, Image, radon_build
from shared.imaging.synthdata import (
    build_dataset,
    dataset_from_config,
    load_dataset,
    make_mask,
    make_phantom,
    perturb_mask,
    read_meta,
    replay_dataset,
    round_half_up,
    save_dataset,
    simulate_measurement,
)
from shared.models.configs import DataConfig, NoiseConfig, RadonGeometry
from shared.models.enums import FlipGranularity, OperatorKind, PhantomKind


def assert_same_dataset(a, b):
    assert len(a.unpaired_measurements) == len(b.unpaired_measurements)
    for ya, yb in zip(a.unpaired_measurements, b.unpaired_measurements):
        assert np.array_equal(ya.data, yb.data)
    for xa, xb in zip(a.clean_images, b.clean_images):
        assert np.array_equal(xa.data, xb.data)
    for split_a, split_b in ((a.paired, b.paired), (a.validation, b.validation)):
        assert len(split_a) == len(split_b)
        for (ya, xa), (yb, xb) in zip(split_a, split_b):
            assert np.array_equal(ya.data, yb.data)
            assert np.array_equal(xa.data, xb.data)


class TestRounding:
    """Test counts derived from fractions"""

    @pytest.mark.parametrize("value,expected", [(0.48, 0), (0.5, 1), (2.5, 3), (3.49, 3), (4.0, 4)])
    def test_half_rounds_up(self, value, expected):
        """Test ties round away from zero for positive values"""
        assert round_half_up(value) == expected


class TestPhantoms:
    """Test synthetic phantom generation"""

    @pytest.mark.parametrize("kind", list(PhantomKind))
    def test_values_in_unit_range(self, kind):
        """Test phantoms are bounded by [0, 1]"""
        image = make_phantom(kind, 16, seed=4)
        assert image.data.min() >= 0.0
        assert image.data.max() <= 1.0
        assert image.data.max() > 0.0

    def test_same_seed_same_image(self):
        """Test phantoms are a pure function of their seed"""
        a = make_phantom(PhantomKind.ELLIPSES, 16, seed=9)
        b = make_phantom(PhantomKind.ELLIPSES, 16, seed=9)
        c = make_phantom(PhantomKind.ELLIPSES, 16, seed=10)
        assert np.array_equal(a.data, b.data)
        assert not np.array_equal(a.data, c.data)

    def test_ellipses_are_piecewise_constant(self):
        """Test an ellipse phantom uses only a handful of intensity levels"""
        image = make_phantom(PhantomKind.ELLIPSES, 32, seed=1)
        assert len(np.unique(image.data)) <= 8

    def test_ellipse_mean_intensity(self):
        """Test the average intensity of ellipse phantoms over 100 seeds lies in (0.05, 0.6)"""
        means = [make_phantom(PhantomKind.ELLIPSES, 16, seed=seed).data.mean() for seed in range(100)]
        assert 0.05 < np.mean(means) < 0.6
        assert min(means) > 0.0

    def test_too_small(self):
        """Test sides below 8 are rejected"""
        with pytest.raises(ValidationError, match="phantom side must be >= 8"):
            make_phantom(PhantomKind.BLOCKS, 4, seed=0)


class TestMasks:
    """Test row masks and their perturbation"""

    def test_row_budget_and_centre(self, fourier_model):
        """Test 4× acceleration keeps n/4 rows including the zero frequency"""
        mask = fourier_model.mask
        assert mask.rows.sum() == 4
        # the two centre rows land at indices 0 and n-1 in the unshifted layout
        assert mask.rows[0] and mask.rows[15]
        assert np.all(mask.keep == mask.rows[:, None])

    def test_deterministic(self):
        """Test the same seed draws the same rows"""
        assert np.array_equal(make_mask(32, 4.0, 0.125, seed=5).keep, make_mask(32, 4.0, 0.125, seed=5).keep)

    def test_centre_exceeding_budget(self):
        """Test a centre band wider than the row budget is rejected"""
        with pytest.raises(ValidationError, match="exceed the budget"):
            make_mask(16, 8.0, 0.5, seed=0)

    def test_invalid_acceleration(self):
        """Test accelerations below one are rejected"""
        with pytest.raises(ValidationError, match="acceleration"):
            make_mask(16, 0.5, 0.125, seed=0)

    def test_flip_count(self, fourier_model):
        """Test flipping a quarter of 16 rows toggles exactly 4"""
        perturbed = perturb_mask(fourier_model.mask, 0.25, seed=2)
        assert np.sum(perturbed.rows != fourier_model.mask.rows) == 4

    def test_flip_is_an_involution(self, fourier_model):
        """Test perturbing twice with the same seed restores the mask"""
        once = perturb_mask(fourier_model.mask, 0.25, seed=2)
        twice = perturb_mask(once, 0.25, seed=2)
        assert np.array_equal(twice.keep, fourier_model.mask.keep)

    def test_small_fraction_rounds_to_no_flips(self, fourier_model):
        """Test 3% of 16 rows rounds to zero rows"""
        perturbed = perturb_mask(fourier_model.mask, 0.03, seed=2)
        assert np.array_equal(perturbed.keep, fourier_model.mask.keep)

    def test_entry_granularity(self, fourier_model):
        """Test entry flips toggle round(fraction · n²) single samples"""
        perturbed = perturb_mask(fourier_model.mask, 0.01, seed=2, granularity=FlipGranularity.ENTRIES)
        assert np.sum(perturbed.keep != fourier_model.mask.keep) == 3

    def test_fraction_out_of_range(self, fourier_model):
        """Test flip fractions above 1 are rejected"""
        with pytest.raises(ValidationError, match="flip_fraction"):
            perturb_mask(fourier_model.mask, 1.5, seed=0)


class TestNoise:
    """Test measurement simulation"""

    def test_noiseless_equals_forward(self, fourier_model):
        """Test zero noise returns A(x) exactly"""
        x = make_phantom(PhantomKind.ELLIPSES, 16, seed=0)
        y = simulate_measurement(x, fourier_model, NoiseConfig(), seed=0)
        assert np.array_equal(y.to_real(), fourier_model.forward_real(x.data))

    def test_gaussian_noise_respects_mask(self, fourier_model):
        """Test noise only touches observed frequencies"""
        x = make_phantom(PhantomKind.ELLIPSES, 16, seed=0)
        y = simulate_measurement(x, fourier_model, NoiseConfig(gaussian_sigma=0.1), seed=0)
        assert np.all(y.data[~fourier_model.mask.keep] == 0)
        assert not np.array_equal(y.to_real(), fourier_model.forward_real(x.data))

    def test_noise_is_seeded(self, radon_model):
        """Test the same seed draws the same noise"""
        x = make_phantom(PhantomKind.BLOCKS, 16, seed=0)
        nc = NoiseConfig(gaussian_sigma=0.05)
        a = simulate_measurement(x, radon_model, nc, seed=11)
        b = simulate_measurement(x, radon_model, nc, seed=11)
        assert np.array_equal(a.data, b.data)

    def test_photon_counts_on_radon(self, radon_model):
        """Test photon-count noise gives finite log-transformed sinograms"""
        x = make_phantom(PhantomKind.ELLIPSES, 16, seed=0)
        y = simulate_measurement(x, radon_model, NoiseConfig(poisson_photon_flux=1e4), seed=0)
        assert y.data.shape == radon_model.range_shape
        assert np.all(np.isfinite(y.data))

    def test_photon_counts_need_radon(self, fourier_model):
        """Test photon-count noise is rejected for k-space data"""
        x = make_phantom(PhantomKind.ELLIPSES, 16, seed=0)
        with pytest.raises(ValidationError, match="Radon measurements only"):
            simulate_measurement(x, fourier_model, NoiseConfig(poisson_photon_flux=1e4), seed=0)

    def test_shape_mismatch(self, fourier_model):
        """Test an image of the wrong side is rejected"""
        with pytest.raises(ValidationError, match="does not match model domain"):
            simulate_measurement(Image(np.zeros((8, 8))), fourier_model, NoiseConfig(), seed=0)


class TestDataset:
    """Test dataset assembly, replay and storage"""

    def test_counts(self, tiny_dataset):
        """Test every split has the configured size"""
        assert len(tiny_dataset.unpaired_measurements) == 6
        assert len(tiny_dataset.clean_images) == 6
        assert len(tiny_dataset.paired) == 3
        assert len(tiny_dataset.validation) == 2

    def test_deterministic(self, tiny_data_cfg, tiny_dataset):
        """Test the same config regenerates the same dataset"""
        assert_same_dataset(dataset_from_config(tiny_data_cfg), tiny_dataset)

    def test_subset_streams_are_independent(self, tiny_data_cfg, tiny_dataset):
        """Test growing the unpaired split leaves the other splits unchanged"""
        bigger = dataset_from_config(tiny_data_cfg.model_copy(update={"n_unpaired": 9}))
        for a, b in zip(bigger.clean_images, tiny_dataset.clean_images):
            assert np.array_equal(a.data, b.data)
        for (ya, _), (yb, _) in zip(bigger.paired, tiny_dataset.paired):
            assert np.array_equal(ya.data, yb.data)
        for a, b in zip(bigger.unpaired_measurements, tiny_dataset.unpaired_measurements):
            assert np.array_equal(a.data, b.data)

    def test_splits_use_their_forward_models(self):
        """Test paired data goes through the train mask and validation through the test mask"""
        cfg = DataConfig(n=16, n_unpaired=1, n_clean=1, n_paired=2, n_val=2, flip_fraction=0.25, seed=1)
        dataset = dataset_from_config(cfg)
        assert not np.array_equal(dataset.fm_train.mask.keep, dataset.fm_test.mask.keep)
        y, x = dataset.paired[0]
        assert np.array_equal(y.to_real(), dataset.fm_train.forward_real(x.data))
        y, x = dataset.validation[0]
        assert np.array_equal(y.to_real(), dataset.fm_test.forward_real(x.data))

    def test_radon_recipe_shares_one_model(self):
        """Test the Radon recipe uses one projector for both roles"""
        cfg = DataConfig(operator=OperatorKind.RADON, radon=RadonGeometry(n_angles=6), n_unpaired=1, n_clean=1,
                         n_paired=1, n_val=0)
        dataset = dataset_from_config(cfg)
        assert dataset.fm_train is dataset.fm_test
        assert dataset.paired[0][0].data.shape == (6, 23)

    def test_negative_count(self, identity_model):
        """Test negative subset sizes are rejected"""
        with pytest.raises(ValidationError, match="n_paired must be >= 0"):
            build_dataset(1, 1, -1, identity_model, identity_model, NoiseConfig(), seed=0)

    def test_model_kinds_must_match(self, fourier_model):
        """Test train and test models of different families are rejected"""
        with pytest.raises(ValidationError, match="test model is identity"):
            build_dataset(1, 1, 1, fourier_model, IdentityModel(16), NoiseConfig(), seed=0)

    def test_replay_from_meta(self, tiny_dataset):
        """Test the meta document alone regenerates the dataset"""
        assert_same_dataset(replay_dataset(tiny_dataset.meta), tiny_dataset)

    def test_save_and_load(self, tiny_dataset, tmp_path):
        """Test the on-disk layout reads back to the same arrays and masks"""
        save_dataset(tiny_dataset, tmp_path / "data")
        assert (tmp_path / "data" / "meta.json").exists()
        assert (tmp_path / "data" / "paired" / "x_00002.bin").exists()

        loaded = load_dataset(tmp_path / "data")
        assert_same_dataset(loaded, tiny_dataset)
        assert isinstance(loaded.fm_test, FourierModel)
        assert np.array_equal(loaded.fm_test.mask.keep, tiny_dataset.fm_test.mask.keep)
        assert read_meta(tmp_path / "data") == tiny_dataset.meta

    def test_radon_save_and_load(self, tmp_path):
        """Test sinogram datasets rebuild their projector on load"""
        fm = radon_build(16, 4)
        dataset = build_dataset(2, 1, 1, fm, fm, NoiseConfig(gaussian_sigma=0.01), seed=2)
        save_dataset(dataset, tmp_path)
        loaded = load_dataset(tmp_path)
        assert loaded.fm_train.range_shape == (4, 23)
        assert_same_dataset(loaded, dataset)

    def test_missing_meta(self, tmp_path):
        """Test loading a directory without meta.json fails"""
        with pytest.raises(DatasetFormatError, match="no meta.json"):
            load_dataset(tmp_path)

    def test_corrupt_meta(self, tmp_path):
        """Test unparseable meta documents raise DatasetFormatError"""
        (tmp_path / "meta.json").write_text("{not json", encoding="utf-8")
        with pytest.raises(DatasetFormatError, match="invalid dataset meta"):
            read_meta(tmp_path)
