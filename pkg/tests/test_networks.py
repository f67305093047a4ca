"""Test the regularizer field, the critic and Lipschitz control"""

import numpy as np
import pytest

from shared.autodiff.gradcheck import check_grad
from shared.exceptions import ValidationError
from shared.imaging.operators import Image
from shared.models.configs import CriticArch, RegularizerArch
from shared.models.enums import Activation
from shared.networks.convnets import (
    conv_layers,
    critic_apply,
    critic_scores,
    critic_tensor,
    hphi_apply,
    hphi_tensor,
    init_params,
    layout_for,
)
from shared.networks.lipschitz import clip_weights, estimate_lipschitz, lipschitz_upper_bound


@pytest.fixture
def critic_params():
    return init_params(CriticArch(channels=[1, 4, 4]), seed=0)


@pytest.fixture
def regularizer_params():
    return init_params(RegularizerArch(channels=[1, 4, 1]), seed=0)


class TestArchitecture:
    """Test parameter layouts and initialization"""

    def test_regularizer_layout(self):
        """Test segment shapes follow the channel list"""
        layout = layout_for(RegularizerArch(channels=[1, 8, 1], kernel=5))
        assert layout["conv0.weight"].shape == (8, 1, 5, 5)
        assert layout["conv1.bias"].shape == (1,)
        assert len(conv_layers(layout)) == 2

    def test_critic_layout_has_head(self):
        """Test the critic adds a linear head over the last channel width"""
        layout = layout_for(CriticArch(channels=[1, 3, 6]))
        assert layout["head.weight"].shape == (6,)
        assert layout["head.bias"].shape == (1,)

    def test_untrained_field_is_zero(self, regularizer_params, rng):
        """Test H_phi starts at zero so the untrained flow is pure data fidelity"""
        out = hphi_apply(regularizer_params, Image(rng.random((16, 16))))
        assert np.array_equal(out.data, np.zeros((16, 16)))

    def test_init_is_seeded(self):
        """Test the same seed draws the same weights"""
        arch = CriticArch(channels=[1, 4])
        assert np.array_equal(init_params(arch, seed=3).values, init_params(arch, seed=3).values)
        assert not np.array_equal(init_params(arch, seed=3).values, init_params(arch, seed=4).values)

    def test_invalid_channels(self):
        """Test the regularizer must map one channel to one channel"""
        with pytest.raises(ValueError, match="first and last channel widths must be 1"):
            RegularizerArch(channels=[1, 4, 2])

    def test_even_kernel(self):
        """Test even kernels are rejected"""
        with pytest.raises(ValueError, match="odd"):
            CriticArch(kernel=4)


class TestForward:
    """Test network evaluation"""

    def test_field_preserves_shape(self, rng):
        """Test H_phi maps a batch of images to images of the same size"""
        params = init_params(RegularizerArch(channels=[1, 3, 1]), seed=0)
        params = params.with_values(params.values + 0.1)
        out = hphi_tensor(params, rng.random((2, 16, 16)))
        assert out.shape == (2, 16, 16)
        assert np.all(out.data != 0)

    def test_single_image_is_batched(self, critic_params, rng):
        """Test a bare (n, n) array is scored as a batch of one"""
        out = critic_tensor(critic_params, rng.random((16, 16)))
        assert out.shape == (1,)

    def test_scores_match_single_evaluation(self, critic_params, rng):
        """Test batched scores agree with image-by-image evaluation"""
        batch = rng.random((3, 16, 16))
        scores = critic_scores(critic_params, batch)
        assert scores.shape == (3,)
        for i in range(3):
            assert scores[i] == pytest.approx(critic_apply(critic_params, Image(batch[i])), abs=1e-14)

    def test_softplus_differs_from_tanh(self, critic_params, rng):
        """Test the nonlinearity is honored"""
        batch = rng.random((2, 16, 16))
        tanh_scores = critic_scores(critic_params, batch, Activation.TANH)
        softplus_scores = critic_scores(critic_params, batch, Activation.SOFTPLUS)
        assert not np.allclose(tanh_scores, softplus_scores)

    def test_critic_params_rejected_as_field(self, critic_params, rng):
        """Test a critic vector cannot drive the regularizer field"""
        with pytest.raises(ValidationError, match="belongs to a critic"):
            hphi_tensor(critic_params, rng.random((1, 16, 16)))

    def test_field_params_rejected_as_critic(self, regularizer_params, rng):
        """Test a regularizer vector has no critic head"""
        with pytest.raises(ValidationError, match="no critic head"):
            critic_tensor(regularizer_params, rng.random((1, 16, 16)))

    def test_bad_batch_rank(self, critic_params):
        """Test four-dimensional input is rejected"""
        with pytest.raises(ValidationError, match="expected a"):
            critic_tensor(critic_params, np.zeros((1, 1, 16, 16)))

    def test_critic_gradient(self, rng):
        """Test critic parameter gradients against finite differences"""
        params = init_params(CriticArch(channels=[1, 2]), seed=1)
        batch = rng.random((2, 8, 8))
        report = check_grad(lambda b: critic_tensor(b, batch).mean(), params, tol=1e-4)
        assert report.passed


class TestLipschitz:
    """Test clipping, the empirical audit and the analytic bound"""

    def test_clip_bounds_every_coordinate(self, critic_params):
        """Test clipping clamps weights and biases to [-c, c]"""
        wide = critic_params.with_values(critic_params.values * 10.0 + 0.2)
        clipped = clip_weights(wide, 0.05)
        assert np.max(np.abs(clipped.values)) <= 0.05
        assert clipped.layout == wide.layout

    def test_clip_needs_positive_bound(self, critic_params):
        """Test a non-positive clip bound is rejected"""
        with pytest.raises(ValidationError, match="clip bound"):
            clip_weights(critic_params, 0.0)

    def test_estimate_below_analytic_bound(self, critic_params, rng):
        """Test finite-pair ratios never exceed the analytic bound"""
        pairs = [(Image(rng.random((16, 16))), Image(rng.random((16, 16)))) for _ in range(10)]
        estimate = estimate_lipschitz(critic_params, pairs)
        assert 0.0 < estimate <= lipschitz_upper_bound(critic_params, 16) * (1.0 + 1e-9)

    def test_clipping_shrinks_bound(self, critic_params):
        """Test clipping to a small bound lowers the analytic constant"""
        assert lipschitz_upper_bound(clip_weights(critic_params, 0.01), 16) < lipschitz_upper_bound(critic_params, 16)

    def test_identical_pairs_are_skipped(self, critic_params, rng):
        """Test only identical pairs leave nothing to estimate from"""
        image = Image(rng.random((16, 16)))
        with pytest.raises(ValidationError, match="distinct images"):
            estimate_lipschitz(critic_params, [(image, image)])

    def test_bound_needs_critic(self, regularizer_params):
        """Test the analytic bound refuses a regularizer layout"""
        with pytest.raises(ValidationError, match="needs a critic layout"):
            lipschitz_upper_bound(regularizer_params, 16)
