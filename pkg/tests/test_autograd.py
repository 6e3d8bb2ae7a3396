"""Backward-pass semantics and finite-difference verification of every op."""
import numpy as np
import pytest

from fpam.errors import ContractError
from fpam.gradcheck import grad_check
from fpam.ops import (
    channel_reduce,
    concat_channels,
    conv2d,
    global_pool,
    linear,
    pool2d,
    resample_spatial,
    softmax_cross_entropy,
)
from fpam.optim import ParamStore, sgd_momentum_step
from fpam.tensor import Tensor, add, mul, relu, scale, sigmoid, tsum


class TestBackwardSemantics:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
        tsum(x).backward()
        assert np.array_equal(x.grad, np.ones((3, 4)))

    def test_square_gradient(self):
        data = np.random.default_rng(1).normal(size=(2, 3))
        x = Tensor(data, requires_grad=True)
        tsum(mul(x, x)).backward()
        assert np.allclose(x.grad, 2 * data)

    def test_backward_twice_is_error(self):
        x = Tensor(np.ones(3), requires_grad=True)
        loss = tsum(x)
        loss.backward()
        with pytest.raises(ContractError, match="twice"):
            loss.backward()

    def test_backward_on_detached_tensor(self):
        with pytest.raises(ContractError, match="detached"):
            Tensor(np.ones(1)).backward()

    def test_backward_needs_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError, match="scalar"):
            mul(x, x).backward()

    def test_deterministic_gradients(self):
        data = np.random.default_rng(2).normal(size=(1, 2, 4, 4))
        grads = []
        for _ in range(2):
            x = Tensor(data.copy(), requires_grad=True)
            tsum(sigmoid(conv2d(x, Tensor(np.ones((1, 2, 3, 3)))))).backward()
            grads.append(x.grad.copy())
        assert np.array_equal(grads[0], grads[1])

    def test_diamond_graph_accumulates(self):
        x = Tensor(np.array([2.0]), requires_grad=True)
        y = add(mul(x, x), scale(x, 3.0))  # x^2 + 3x -> dy/dx = 2x + 3
        tsum(y).backward()
        assert x.grad[0] == pytest.approx(7.0)


class TestGradCheckPerOp:
    """Central differences against the analytic gradients, op by op."""

    def check(self, fn, params, tol=1e-6):
        err = grad_check(fn, params)
        assert err < tol, f"max relative error {err}"

    def test_linear(self):
        rng = np.random.default_rng(3)
        w = Tensor(rng.normal(size=(4, 3)))
        b = Tensor(rng.normal(size=3))
        x = Tensor(rng.normal(size=(2, 4)))
        self.check(lambda: tsum(mul(y := linear(x, w, b), y)), [w, b, x], tol=1e-7)

    def test_conv2d(self):
        rng = np.random.default_rng(4)
        x = Tensor(rng.normal(size=(1, 2, 5, 5)))
        k = Tensor(rng.normal(size=(2, 2, 3, 3)))
        b = Tensor(rng.normal(size=2))
        self.check(lambda: tsum(mul(y := conv2d(x, k, b, stride=2, padding=1), y)), [x, k, b])

    def test_conv2d_stem_geometry(self):
        # the 7x7 stride-2 pad-3 stem configuration at tiny dims
        rng = np.random.default_rng(40)
        x = Tensor(rng.normal(size=(1, 1, 9, 8)))
        k = Tensor(rng.normal(size=(2, 1, 7, 7)) * 0.3)
        b = Tensor(rng.normal(size=2))
        self.check(lambda: tsum(mul(y := conv2d(x, k, b, stride=2, padding=3), y)), [x, k, b])

    def test_relu_off_kink(self):
        rng = np.random.default_rng(5)
        data = rng.normal(size=(3, 3))
        data[np.abs(data) < 0.15] = 0.2  # probe away from the kink
        x = Tensor(data)
        self.check(lambda: tsum(mul(y := relu(x), y)), [x])

    def test_sigmoid_chain_depth_3(self):
        x = Tensor(np.random.default_rng(6).normal(size=(2, 3)))
        self.check(lambda: tsum(sigmoid(sigmoid(sigmoid(x)))), [x], tol=1e-5)

    @pytest.mark.parametrize("kind", ["max", "avg"])
    def test_pool2d(self, kind):
        x = Tensor(np.random.default_rng(7).normal(size=(1, 2, 6, 6)))
        self.check(lambda: tsum(mul(y := pool2d(x, kind, (2, 2), 2), y)), [x])

    def test_pool2d_overlapping_windows(self):
        x = Tensor(np.random.default_rng(8).normal(size=(1, 1, 5, 5)))
        self.check(lambda: tsum(mul(y := pool2d(x, "max", (3, 3), 1), y)), [x])

    @pytest.mark.parametrize("kind", ["max", "avg"])
    def test_channel_reduce(self, kind):
        x = Tensor(np.random.default_rng(9).normal(size=(2, 4, 3, 3)))
        self.check(lambda: tsum(mul(y := channel_reduce(x, kind), y)), [x])

    @pytest.mark.parametrize("kind", ["max", "avg"])
    def test_global_pool(self, kind):
        x = Tensor(np.random.default_rng(10).normal(size=(2, 3, 4, 4)))
        self.check(lambda: tsum(mul(y := global_pool(x, kind), y)), [x])

    def test_resample_nearest_up(self):
        x = Tensor(np.random.default_rng(11).normal(size=(1, 2, 3, 2)))
        self.check(lambda: tsum(mul(y := resample_spatial(x, (7, 5), "nearest_up"), y)), [x])

    def test_resample_adaptive_down(self):
        x = Tensor(np.random.default_rng(12).normal(size=(1, 2, 7, 5)))
        self.check(lambda: tsum(mul(y := resample_spatial(x, (3, 2), "adaptive_avg_down"), y)), [x])

    def test_concat_channels(self):
        rng = np.random.default_rng(13)
        a = Tensor(rng.normal(size=(1, 2, 3, 3)))
        b = Tensor(rng.normal(size=(1, 3, 3, 3)))
        self.check(lambda: tsum(mul(y := concat_channels([a, b]), y)), [a, b])

    def test_softmax_cross_entropy(self):
        rng = np.random.default_rng(14)
        logits = Tensor(rng.normal(size=(3, 5)))
        target = np.zeros((3, 5))
        target[np.arange(3), [1, 0, 4]] = 1.0
        self.check(lambda: softmax_cross_entropy(logits, target), [logits])

    def test_broadcast_mul_gates(self):
        rng = np.random.default_rng(15)
        x = Tensor(rng.normal(size=(1, 3, 2, 2)))
        chan_gate = Tensor(rng.uniform(0.2, 0.8, size=(1, 3, 1, 1)))
        spat_gate = Tensor(rng.uniform(0.2, 0.8, size=(1, 1, 2, 2)))
        self.check(lambda: tsum(mul(mul(x, chan_gate), spat_gate)), [x, chan_gate, spat_gate])


class TestMaxTieBreaking:
    def test_gradient_to_first_row_major_max(self):
        x = Tensor(np.array([[1.0, 3.0], [3.0, 0.0]]).reshape(1, 1, 2, 2), requires_grad=True)
        tsum(pool2d(x, "max", (2, 2), 2)).backward()
        assert x.grad.reshape(4).tolist() == [0.0, 1.0, 0.0, 0.0]

    def test_channel_reduce_first_max(self):
        x = Tensor(np.array([2.0, 2.0, 1.0]).reshape(1, 3, 1, 1), requires_grad=True)
        tsum(channel_reduce(x, "max")).backward()
        assert x.grad.reshape(3).tolist() == [1.0, 0.0, 0.0]


class TestSgdMomentum:
    def test_plain_step(self):
        store = ParamStore()
        p = store.add("p", Tensor(np.array([1.0])))
        p.grad = np.array([1.0])
        sgd_momentum_step(store, lr=0.01, momentum=0.0)
        assert p.data[0] == pytest.approx(0.99)

    def test_momentum_recurrence(self):
        store = ParamStore()
        p = store.add("p", Tensor(np.array([0.0])))
        p.grad = np.array([1.0])
        sgd_momentum_step(store, lr=1.0, momentum=0.9)
        assert p.data[0] == pytest.approx(-1.0)  # first step moves by lr*g
        p.grad = np.array([1.0])
        sgd_momentum_step(store, lr=1.0, momentum=0.9)
        assert p.data[0] == pytest.approx(-2.9)  # second step moves by 1.9

    def test_quadratic_trajectory_matches_scalar_recurrence(self):
        # minimize 0.5*p^2: gradient is p itself
        store = ParamStore()
        p = store.add("p", Tensor(np.array([2.0])))
        lr, mom = 0.1, 0.9
        sim_p, sim_v = 2.0, 0.0
        for _ in range(5):
            p.grad = p.data.copy()
            sgd_momentum_step(store, lr, mom)
            sim_v = mom * sim_v + sim_p
            sim_p = sim_p - lr * sim_v
            assert p.data[0] == pytest.approx(sim_p, rel=1e-12)

    def test_missing_gradient_names_parameter(self):
        store = ParamStore()
        store.add("conv.weight", Tensor(np.zeros(3)))
        with pytest.raises(ContractError, match="conv.weight"):
            sgd_momentum_step(store, 0.1, 0.9)

    def test_momentum_buffer_dims_match(self):
        store = ParamStore()
        p = store.add("p", Tensor(np.zeros((2, 3))))
        p.grad = np.ones((2, 3))
        sgd_momentum_step(store, 0.1, 0.9)
        assert store.momentum_of("p").shape == (2, 3)

    def test_duplicate_name_rejected(self):
        store = ParamStore()
        store.add("p", Tensor(np.zeros(1)))
        with pytest.raises(ContractError, match="duplicate"):
            store.add("p", Tensor(np.zeros(1)))
