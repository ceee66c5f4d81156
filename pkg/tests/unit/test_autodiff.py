"""Tests for the reverse-mode tape, optimizers and derivative helpers."""

import numpy as np
import pytest

from indm_core.autodiff import (
    Parameter,
    ParameterCollection,
    Value,
    backward,
    concat,
    exp,
    grad,
    log,
    matmul,
    mean,
    no_grad,
    sigmoid,
    sin,
    square,
    swish,
    tanh,
    vsum,
)
from indm_core.autodiff.functional import batched_jacobian, exact_divergence, hutchinson_divergence
from indm_core.autodiff.gradcheck import check_parameter_gradients, numerical_gradient
from indm_core.autodiff.optim import SGD, Adam, clip_by_global_norm
from indm_core.autodiff.tensor import enable_grad, getitem, is_grad_enabled, reshape
from indm_core.exceptions.indm_exceptions import (
    GradientException,
    InvalidParameterException,
    ShapeMismatchException,
)


@pytest.fixture
def params():
    rng = np.random.default_rng(42)
    return ParameterCollection(
        [
            Parameter(rng.standard_normal((3, 4)) * 0.5, "w"),
            Parameter(rng.standard_normal(4) * 0.1, "b"),
        ]
    )


@pytest.mark.unit
class TestGradcheck:
    """Reverse-mode gradients agree with central differences."""

    def test_elementwise_and_matmul(self, params):
        x = np.random.default_rng(1).standard_normal((5, 3))

        def loss():
            h = tanh(matmul(Value(x), params["w"]) + params["b"])
            y = swish(h) * sin(h) + exp(h * 0.5) / (sigmoid(h) + 1.0)
            return mean(square(y)) + mean(log(square(h) + 1.0))

        errors = check_parameter_gradients(loss, params)
        assert set(errors) == {"w", "b"}
        assert max(errors.values()) < 1e-5

    def test_shape_operations(self, params):
        weights = np.arange(9.0)

        def loss():
            a = params["w"]
            joined = concat([a, square(a)], axis=1)
            picked = getitem(joined, (slice(None), [0, 5, 7]))
            return vsum(reshape(picked, (9,)) * weights)

        errors = check_parameter_gradients(loss, params, names=("w",))
        assert errors["w"] < 1e-5

    def test_repeated_index_accumulates(self):
        p = Parameter(np.array([1.0, 2.0, 3.0]), "p")
        picked = getitem(p, np.array([0, 0, 2]))
        backward(vsum(square(picked)))
        np.testing.assert_allclose(p.grad, [4.0, 0.0, 6.0])


@pytest.mark.unit
class TestBackward:
    def test_non_scalar_root_raises(self):
        p = Parameter(np.ones(3), "p")
        with pytest.raises(GradientException):
            backward(p * 2.0)

    def test_gradients_accumulate_until_zeroed(self):
        p = Parameter(np.array([2.0]), "p")
        backward(vsum(square(p)))
        backward(vsum(square(p)))
        np.testing.assert_allclose(p.grad, [8.0])
        p.zero_grad()
        assert p.grad is None

    def test_no_grad_records_nothing(self):
        p = Parameter(np.array([2.0]), "p")
        with no_grad():
            out = vsum(square(p))
        assert not out.requires_grad
        assert backward(out) == {}
        assert p.grad is None

    def test_constant_root_zero_fills_listed_params(self, params):
        frozen = Parameter(np.ones(2), "frozen", trainable=False)
        result = backward(Value(np.array(3.0)), params=[*params, frozen])
        assert set(result) == {"w", "b"}
        np.testing.assert_array_equal(params["w"].grad, np.zeros((3, 4)))
        np.testing.assert_array_equal(params["b"].grad, np.zeros(4))
        assert frozen.grad is None

    def test_unreached_param_gets_zero_grad(self, params):
        result = backward(vsum(square(params["b"])), params=params)
        np.testing.assert_array_equal(result["w"], np.zeros((3, 4)))
        np.testing.assert_allclose(result["b"], 2.0 * params["b"].data)

    def test_grad_mode_nesting(self):
        assert is_grad_enabled()
        with no_grad():
            assert not is_grad_enabled()
            with enable_grad():
                assert is_grad_enabled()
            assert not is_grad_enabled()
        assert is_grad_enabled()

    def test_second_order_via_create_graph(self):
        """d/dx of (grad f . v) for f = sum x^3 is 6 x v."""
        x = Value(np.array([0.5, -1.0, 2.0]), requires_grad=True)
        v = np.array([1.0, 2.0, -1.0])
        (g,) = grad(vsum(x**3), [x], create_graph=True)
        np.testing.assert_allclose(g.data, 3.0 * x.data**2)
        (hv,) = grad(vsum(g * v), [x])
        np.testing.assert_allclose(hv.data, 6.0 * x.data * v)

    def test_broadcast_shape_mismatch(self):
        with pytest.raises(ShapeMismatchException):
            Value(np.ones((2, 3))) + Value(np.ones((4,)))


@pytest.mark.unit
class TestFunctional:
    @staticmethod
    def linear_field(matrix):
        return lambda z: matmul(z, matrix.T)

    def test_batched_jacobian_of_linear_map(self):
        matrix = np.array([[1.0, 2.0], [-3.0, 0.5]])
        x = np.random.default_rng(0).standard_normal((4, 2))
        jac = batched_jacobian(self.linear_field(matrix), x)
        assert jac.shape == (4, 2, 2)
        np.testing.assert_allclose(jac, np.broadcast_to(matrix, (4, 2, 2)))

    def test_exact_divergence_is_trace(self):
        matrix = np.array([[1.0, 2.0], [-3.0, 0.5]])
        x = np.random.default_rng(0).standard_normal((4, 2))
        np.testing.assert_allclose(exact_divergence(self.linear_field(matrix), x), 1.5)

    def test_hutchinson_is_exact_for_diagonal_and_rademacher(self):
        matrix = np.diag([2.0, -1.0])
        x = np.random.default_rng(0).standard_normal((3, 2))
        probes = np.random.default_rng(1).choice([-1.0, 1.0], size=(5, 3, 2))
        estimates = hutchinson_divergence(self.linear_field(matrix), x, probes)
        np.testing.assert_allclose(estimates, 1.0)

    def test_numerical_gradient_of_quadratic(self):
        x = np.array([1.0, -2.0])
        np.testing.assert_allclose(
            numerical_gradient(lambda a: float(np.sum(a**2)), x), 2.0 * x, atol=1e-6
        )


@pytest.mark.unit
class TestOptimizers:
    def test_adam_minimizes_quadratic(self):
        p = Parameter(np.array([3.0, -2.0]), "p")
        params = ParameterCollection([p])
        opt = Adam(params, lr=0.1)
        for _ in range(1000):
            opt.zero_grad()
            backward(vsum(square(p)))
            opt.step()
        assert np.all(np.abs(p.data) < 0.1)

    def test_adam_first_step_moves_by_lr(self):
        p = Parameter(np.array([1.0, -1.0]), "p")
        opt = Adam(ParameterCollection([p]), lr=0.01)
        backward(vsum(square(p)))
        opt.step()
        np.testing.assert_allclose(p.data, [0.99, -0.99], atol=1e-6)

    def test_nan_gradient_names_parameter(self):
        p = Parameter(np.array([1.0]), "weights")
        opt = Adam(ParameterCollection([p]))
        p.grad = np.array([np.nan])
        with pytest.raises(GradientException) as excinfo:
            opt.step()
        assert excinfo.value.context["param_name"] == "weights"

    def test_learning_rate_drop(self):
        p = Parameter(np.array([1.0]), "p")
        opt = Adam(ParameterCollection([p]), lr=1e-2, lr_drop_step=2, lr_drop_value=1e-4)
        assert opt.current_lr() == 1e-2
        for _ in range(2):
            p.grad = np.array([1.0])
            opt.step()
        assert opt.current_lr() == 1e-4

    def test_frozen_parameters_do_not_move(self):
        frozen = Parameter(np.array([1.0]), "frozen", trainable=False)
        live = Parameter(np.array([1.0]), "live")
        opt = SGD(ParameterCollection([frozen, live]), lr=0.5)
        live.grad = np.array([1.0])
        opt.step()
        assert frozen.data[0] == 1.0
        assert live.data[0] == 0.5

    def test_clip_by_global_norm(self):
        clipped = clip_by_global_norm({"a": np.array([3.0]), "b": np.array([4.0])}, 1.0)
        np.testing.assert_allclose(clipped["a"], [0.6])
        np.testing.assert_allclose(clipped["b"], [0.8])

    def test_state_dict_round_trip(self):
        p = Parameter(np.array([1.0, 2.0]), "p")
        opt = Adam(ParameterCollection([p]))
        p.grad = np.array([0.1, -0.2])
        opt.step()
        other = Adam(ParameterCollection([Parameter(np.zeros(2), "p")]))
        other.load_state_dict(opt.state_dict())
        assert other.state.step == 1
        np.testing.assert_array_equal(other.state.m["p"], opt.state.m["p"])


@pytest.mark.unit
class TestParameterCollection:
    def test_duplicate_name_rejected(self):
        params = ParameterCollection([Parameter(np.zeros(1), "a")])
        with pytest.raises(InvalidParameterException):
            params.add(Parameter(np.zeros(1), "a"))

    def test_load_state_dict_checks_shapes(self):
        params = ParameterCollection([Parameter(np.zeros(2), "a")])
        with pytest.raises(ShapeMismatchException):
            params.load_state_dict({"a": np.zeros(3)})

    def test_set_trainable(self):
        params = ParameterCollection([Parameter(np.zeros(2), "a")])
        params.set_trainable(False)
        assert params.trainable() == []
        assert params.num_elements() == 2
