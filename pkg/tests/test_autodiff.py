"""Test the reverse-mode gradient engine and the finite-difference oracle"""

import numpy as np
import pytest

from shared.autodiff.gradcheck import away_from_kinks, check_grad, evaluate, finite_diff_grad, grad, value_and_grad
from shared.autodiff.params import ParamLayout, ParamVector
from shared.autodiff.tensor import Tensor, absolute, backward, conv2d, softplus, tanh
from shared.exceptions import ConvergenceError, NonFiniteError, ValidationError


def scalar_params(value):
    return ParamVector(np.array([value]), ParamLayout.from_shapes([("p", (1,))]))


class TestTensor:
    """Test gradients of individual operations"""

    def test_square_gradient(self):
        """Test p ↦ p² at p = 3 has gradient 6"""
        g = grad(lambda b: (b["p"] ** 2).sum(), scalar_params(3.0))
        assert g == pytest.approx([6.0], abs=1e-12)

    def test_constant_loss_has_zero_gradient(self):
        """Test a constant loss yields a zero gradient everywhere"""
        params = ParamVector(np.ones(4), ParamLayout.from_shapes([("w", (2, 2))]))
        g = grad(lambda b: 7.0, params)
        assert np.array_equal(g, np.zeros(4))

    def test_abs_subgradient_is_zero_at_kink(self):
        """Test the l1 subgradient at zero is 0"""
        g = grad(lambda b: absolute(b["p"]).sum(), scalar_params(0.0))
        assert g[0] == 0.0

    def test_broadcast_add_sums_gradient(self):
        """Test broadcasting a (1,) bias over a (3, 2) array sums the incoming gradient"""
        bias = Tensor(np.array([0.5]), requires_grad=True)
        out = (Tensor(np.ones((3, 2))) + bias).sum()
        backward(out)
        assert bias.grad == pytest.approx([6.0])

    def test_shared_node_accumulates(self):
        """Test a node used twice receives both contributions"""
        x = Tensor(np.array([2.0]), requires_grad=True)
        out = (x * x + x).sum()
        backward(out)
        assert x.grad == pytest.approx([5.0])

    def test_tanh_and_softplus_derivatives(self):
        """Test the smooth activations against their analytic derivatives"""
        x = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
        backward(tanh(x).sum())
        assert x.grad == pytest.approx(1.0 - np.tanh([-1.0, 0.0, 2.0]) ** 2)

        y = Tensor(np.array([-1.0, 0.0, 2.0]), requires_grad=True)
        backward(softplus(y).sum())
        assert y.grad == pytest.approx(1.0 / (1.0 + np.exp(-np.array([-1.0, 0.0, 2.0]))))

    def test_conv2d_gradient_matches_finite_differences(self, rng):
        """Test convolution weight and bias gradients against the oracle"""
        x = rng.standard_normal((2, 1, 5, 5))
        layout = ParamLayout.from_shapes([("w", (2, 1, 3, 3)), ("b", (2,))])
        params = ParamVector(0.3 * rng.standard_normal(layout.size), layout)

        def loss(b):
            return tanh(conv2d(x, b["w"], b["b"])).mean()

        report = check_grad(loss, params, tol=1e-4)
        assert report.passed

    def test_conv2d_input_gradient(self, rng):
        """Test the gradient of a convolution with respect to its input"""
        weight = rng.standard_normal((1, 1, 3, 3))
        layout = ParamLayout.from_shapes([("x", (1, 1, 4, 4))])
        params = ParamVector(rng.standard_normal(16), layout)

        def loss(b):
            out = conv2d(b["x"], weight, np.zeros(1))
            return (out * out).sum()

        assert check_grad(loss, params, tol=1e-6).passed

    def test_non_finite_value_names_node(self):
        """Test a division by zero raises NonFiniteError naming the operation"""
        with pytest.raises(NonFiniteError, match="div") as exc:
            Tensor(np.array([1.0])) / Tensor(np.array([0.0]))
        assert exc.value.node == "div"

    def test_backward_needs_scalar(self):
        """Test backward refuses non-scalar outputs"""
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ValidationError, match="scalar"):
            backward(x * 2.0)

    def test_conv2d_channel_mismatch(self):
        """Test conv2d rejects inconsistent channel counts"""
        with pytest.raises(ValidationError, match="conv2d shape mismatch"):
            conv2d(np.ones((1, 2, 4, 4)), np.ones((1, 1, 3, 3)), np.zeros(1))


class TestParamVector:
    """Test flat parameter storage"""

    def test_layout_offsets(self):
        """Test segments are packed back to back"""
        layout = ParamLayout.from_shapes([("a", (2, 3)), ("b", (4,))])
        assert layout.size == 10
        assert layout["b"].offset == 6
        assert layout.names == ["a", "b"]

    def test_duplicate_segment_rejected(self):
        """Test segment names must be unique"""
        with pytest.raises(ValidationError, match="duplicate"):
            ParamLayout.from_shapes([("a", (1,)), ("a", (2,))])

    def test_length_must_match_layout(self):
        """Test a vector of the wrong length is rejected"""
        with pytest.raises(ValidationError, match="layout needs 3"):
            ParamVector(np.zeros(2), ParamLayout.from_shapes([("a", (3,))]))

    def test_non_finite_values_rejected(self):
        """Test NaN parameters are rejected"""
        with pytest.raises(NonFiniteError):
            ParamVector(np.array([np.nan]), ParamLayout.from_shapes([("a", (1,))]))

    def test_values_are_immutable(self):
        """Test the stored array cannot be written in place"""
        params = scalar_params(1.0)
        with pytest.raises(ValueError):
            params.values[0] = 2.0

    def test_replace_segment(self):
        """Test replacing one segment leaves the others untouched"""
        layout = ParamLayout.from_shapes([("a", (2,)), ("b", (2,))])
        params = ParamVector(np.arange(4.0), layout).replace_segment("b", [9.0, 8.0])
        assert np.array_equal(params.values, [0.0, 1.0, 9.0, 8.0])
        assert params.segment("a").shape == (2,)

    def test_layout_dict_form(self):
        """Test layouts survive their JSON-friendly form"""
        layout = ParamLayout.from_shapes([("conv0.weight", (4, 1, 3, 3)), ("conv0.bias", (4,))])
        assert ParamLayout.from_dict(layout.to_dict()) == layout

    def test_unknown_segment(self):
        """Test looking up a missing segment raises"""
        with pytest.raises(ValidationError, match="no segment 'z'"):
            scalar_params(1.0).segment("z")


class TestGradCheck:
    """Test the finite-difference oracle and check_grad reports"""

    def test_finite_difference_square(self):
        """Test central differences of p² at 3"""
        g = finite_diff_grad(lambda b: (b["p"] ** 2).sum(), scalar_params(3.0), h=1e-5)
        assert g[0] == pytest.approx(6.0, abs=1e-8)

    def test_finite_difference_abs_away_from_kink(self):
        """Test central differences of |p| at 0.5"""
        g = finite_diff_grad(lambda b: absolute(b["p"]).sum(), scalar_params(0.5), h=1e-5)
        assert g[0] == pytest.approx(1.0, abs=1e-8)

    def test_step_must_be_positive(self):
        """Test h <= 0 is rejected"""
        with pytest.raises(ValidationError, match="step must be > 0"):
            finite_diff_grad(lambda b: b["p"].sum(), scalar_params(1.0), h=0.0)

    def test_quadratic_passes(self, rng):
        """Test a quadratic loss passes at tolerance 1e-6"""
        layout = ParamLayout.from_shapes([("w", (5,))])
        params = ParamVector(rng.standard_normal(5), layout)
        report = check_grad(lambda b: (b["w"] * b["w"]).sum() * 0.5, params, tol=1e-6)
        assert report.passed
        assert report.analytic.shape == report.numeric.shape

    def test_corrupted_gradient_fails(self, rng):
        """Test doubling one analytic coordinate fails and is located"""
        layout = ParamLayout.from_shapes([("w", (5,))])
        params = ParamVector(rng.standard_normal(5) + 2.0, layout)

        def loss(b):
            return (b["w"] * b["w"]).sum()

        analytic = grad(loss, params)
        analytic[3] *= 2.0
        report = check_grad(loss, params, tol=1e-4, analytic=analytic)
        assert not report.passed
        assert report.worst_index == 3

    def test_tolerance_must_be_positive(self):
        """Test tol <= 0 is rejected"""
        with pytest.raises(ValidationError, match="tolerance"):
            check_grad(lambda b: b["p"].sum(), scalar_params(1.0), tol=0.0)

    def test_non_finite_shifted_point_is_reported(self):
        """Test a loss that blows up at a shifted point names the coordinate"""
        with pytest.raises(NonFiniteError, match="coordinate 0"):
            finite_diff_grad(lambda b: (b["p"] ** 0.5).sum(), scalar_params(0.0), h=1e-5)

    def test_gradient_is_linear(self, rng):
        """Test grad(a·f + b·g) = a·grad(f) + b·grad(g)"""
        layout = ParamLayout.from_shapes([("w", (6,))])
        params = ParamVector(rng.standard_normal(6), layout)

        def f(b):
            return tanh(b["w"]).sum()

        def g(b):
            return (b["w"] * b["w"] * b["w"]).mean()

        combined = grad(lambda b: 2.0 * f(b) - 3.0 * g(b), params)
        assert combined == pytest.approx(2.0 * grad(f, params) - 3.0 * grad(g, params), abs=1e-12)

    def test_gradient_is_deterministic(self, rng):
        """Test two evaluations give bit-identical results"""
        layout = ParamLayout.from_shapes([("w", (8,))])
        params = ParamVector(rng.standard_normal(8), layout)

        def loss(b):
            return softplus(b["w"] * 3.0).sum()

        first_value, first = value_and_grad(loss, params)
        second_value, second = value_and_grad(loss, params)
        assert first_value == second_value == evaluate(loss, params)
        assert np.array_equal(first, second)


class TestKinkAvoidance:
    """Test moving the gradient check off the kinks of absolute values"""

    @staticmethod
    def loss(b):
        return absolute(b["p"]).sum()

    @staticmethod
    def residuals(params):
        return params.values

    def test_near_kink_fails_without_reseed(self):
        """Test a point closer to the kink than h gives a wrong central difference"""
        report = check_grad(self.loss, scalar_params(1e-7), tol=1e-4)
        assert not report.passed

    def test_reseed_moves_off_kink(self):
        """Test the near-kink point is replaced and the check passes"""
        report = check_grad(
            self.loss,
            scalar_params(1e-7),
            tol=1e-4,
            residuals=self.residuals,
            reseed=lambda attempt: scalar_params(0.5 * attempt),
        )
        assert report.passed
        assert report.reseeds == 1
        assert report.analytic == pytest.approx([1.0])

    def test_exact_zero_residuals_are_ignored(self):
        """Test coordinates that are identically zero never trigger a reseed"""
        params = ParamVector(np.array([0.3, 0.0]), ParamLayout.from_shapes([("p", (2,))]))
        point, reseeds = away_from_kinks(params, lambda p: np.array([p.values[0], 0.0]), reseed=None)
        assert point is params
        assert reseeds == 0

    def test_exhausted_reseeds_raise(self):
        """Test a reseed that never clears the margin is a convergence failure"""
        with pytest.raises(ConvergenceError, match="after 3 reseeds"):
            away_from_kinks(scalar_params(1e-9), self.residuals, lambda attempt: scalar_params(1e-9), attempts=3)

    def test_residuals_need_reseed(self):
        """Test residuals without a reseed function are rejected"""
        with pytest.raises(ValidationError, match="reseed function"):
            check_grad(self.loss, scalar_params(0.5), residuals=self.residuals)
