"""Pyramid attention: alignment, spatial gates, fusion, head, gradient checks."""
import numpy as np
import pytest

from fpam.attention import PyramidAttention, SpatialAttention
from fpam.backbone import FeaturePyramid
from fpam.errors import ConfigError
from fpam.gradcheck import grad_check
from fpam.model import SoundClassifier
from fpam.ops import resample_spatial
from fpam.optim import ParamStore
from fpam.tensor import Tensor, no_grad, tsum


def tiny_pyramid(rng, n=1, channels=(8, 12, 16), dims=((6, 4), (3, 2), (2, 1))):
    maps = [Tensor(rng.normal(size=(n, c, h, w))) for c, (h, w) in zip(channels, dims)]
    return FeaturePyramid(Tensor(rng.normal(size=(n, 4, 12, 8))), *maps)


def make_module(rng_seed=0, in_channels=(8, 12, 16), c_align=8):
    store = ParamStore()
    rng = np.random.default_rng(rng_seed)
    return PyramidAttention(store, "fpam", rng, in_channels, c_align), store


class TestDimAlign:
    def test_paper_scale_channels(self):
        model = SoundClassifier("paper50", 50, seed=0)
        x = Tensor(np.random.default_rng(0).normal(size=(1, 1, 201, 64)))
        with no_grad():
            pyramid = model.backbone.forward_pyramid(x)
            f3, f4, f5 = model.fpam.align(pyramid)
        assert f3.dims == (1, 1024, 51, 16)
        assert f4.dims == (1, 1024, 26, 8)
        assert f5.dims == (1, 1024, 13, 4)

    def test_identity_initialized_passthrough(self):
        module, store = make_module(c_align=8, in_channels=(8, 12, 16))
        w = store["fpam.align3.weight"]
        w.data = np.eye(8).reshape(8, 8, 1, 1)
        store["fpam.align3.bias"].data[:] = 0.0
        rng = np.random.default_rng(1)
        pyr = tiny_pyramid(rng)
        with no_grad():
            f3, _, _ = module.align(pyr)
        assert np.allclose(f3.data, pyr.c3.data)

    def test_matches_per_pixel_matmul(self):
        module, store = make_module()
        rng = np.random.default_rng(2)
        pyr = tiny_pyramid(rng)
        with no_grad():
            f4 = module.align(pyr)[1]
        w = store["fpam.align4.weight"].data[:, :, 0, 0]
        b = store["fpam.align4.bias"].data
        for i in range(3):
            for j in range(2):
                expect = w @ pyr.c4.data[0, :, i, j] + b
                assert np.allclose(f4.data[0, :, i, j], expect, atol=1e-12)


class TestSpatialAttention:
    def test_gate_dims_and_range(self):
        store = ParamStore()
        sam = SpatialAttention(store, "sam", np.random.default_rng(0), channels=6)
        x = Tensor(np.random.default_rng(1).normal(size=(2, 6, 26, 8)))
        with no_grad():
            gate, gated = sam(x)
        assert gate.dims == (2, 1, 26, 8)
        assert gated.dims == x.dims
        assert np.all(gate.data > 0.0) and np.all(gate.data < 1.0)

    def test_forced_positive_bias_gives_identity(self):
        store = ParamStore()
        sam = SpatialAttention(store, "sam", np.random.default_rng(0), channels=4)
        store["sam.refine.weight"].data[:] = 0.0
        store["sam.refine.bias"].data[:] = 50.0  # sigmoid saturates at the clamp
        x = Tensor(np.abs(np.random.default_rng(2).normal(size=(1, 4, 5, 5))))
        with no_grad():
            gate, gated = sam(x)
        assert np.allclose(gated.data, x.data * gate.data)
        assert np.all(gate.data > 1.0 - 1e-15)

    def test_gated_matches_broadcast_loop(self):
        store = ParamStore()
        sam = SpatialAttention(store, "sam", np.random.default_rng(3), channels=5)
        x = Tensor(np.random.default_rng(4).normal(size=(1, 5, 4, 3)))
        with no_grad():
            gate, gated = sam(x)
        for c in range(5):
            assert np.allclose(gated.data[0, c], x.data[0, c] * gate.data[0, 0])


class TestPyramidForward:
    def test_output_dims_at_middle_scale(self):
        module, _ = make_module()
        pyr = tiny_pyramid(np.random.default_rng(5))
        with no_grad():
            bundle = module(pyr)
        assert bundle.fused.dims == (1, 8, 3, 2)
        assert bundle.channel_gate.dims == (1, 8, 1, 1)
        for scale, dims in (("s3", (6, 4)), ("s4", (3, 2)), ("s5", (2, 1))):
            assert bundle.spatial_maps[scale].dims == (1, 1, *dims)

    def test_gate_ranges_strict(self):
        module, _ = make_module(rng_seed=6)
        pyr = tiny_pyramid(np.random.default_rng(7))
        with no_grad():
            bundle = module(pyr)
        for gate in (*bundle.spatial_maps.values(), bundle.channel_gate):
            assert np.all(gate.data > 0.0) and np.all(gate.data < 1.0)

    def test_constant_coarse_map_upsampled_constant(self):
        rng = np.random.default_rng(8)
        x = Tensor(np.full((1, 3, 13, 4), 2.5))
        up = resample_spatial(x, (26, 8), "nearest_up")
        assert np.all(up.data == 2.5)

    def test_identity_gate_reduces_to_plain_mean(self):
        module, _ = make_module(rng_seed=9)
        module.force_gates_one = True
        pyr = tiny_pyramid(np.random.default_rng(10))
        with no_grad():
            bundle = module(pyr)
            f3, f4, f5 = module.align(pyr)
            a3 = resample_spatial(f3, (3, 2), "adaptive_avg_down")
            a5 = resample_spatial(f5, (3, 2), "nearest_up")
        expected = (a3.data + f4.data + a5.data) / 3.0
        assert np.abs(bundle.fused.data - expected).max() < 1e-6

    def test_three_identical_maps_give_gated_map(self):
        # algebraic identity: mean of three equal channel-gated maps is one gated map
        module, _ = make_module(rng_seed=11)
        pyr = tiny_pyramid(np.random.default_rng(12))
        with no_grad():
            bundle = module(pyr)
        a3, a4, a5 = bundle.aligned_maps
        gate = bundle.channel_gate.data
        expected = gate * (a3.data + a4.data + a5.data) / 3.0
        assert np.allclose(bundle.fused.data, expected, atol=1e-12)

    def test_odd_c_align_rejected(self):
        with pytest.raises(ConfigError, match="even"):
            make_module(c_align=7)

    def test_pca_shapes_paper_scale(self):
        model = SoundClassifier("paper50", 10, seed=1)
        x = Tensor(np.random.default_rng(13).normal(size=(1, 1, 201, 64)))
        with no_grad():
            pyramid = model.backbone.forward_pyramid(x)
            f3, f4, f5 = model.fpam.align(pyramid)
            from fpam.ops import concat_channels

            _, a3 = model.fpam.sam3(f3)
            _, a4 = model.fpam.sam4(f4)
            _, a5 = model.fpam.sam5(f5)
            a3m = resample_spatial(a3, (26, 8), "adaptive_avg_down")
            a5m = resample_spatial(a5, (26, 8), "nearest_up")
            fused_in = concat_channels([a3m, a4, a5m])
            refined = concat_channels(
                [model.fpam.fuse_conv1(fused_in), model.fpam.fuse_conv3(fused_in)]
            )
        assert fused_in.dims == (1, 3072, 26, 8)
        assert refined.dims == (1, 1024, 26, 8)

    def test_zero_fused_features_give_half_gate(self):
        module, store = make_module(rng_seed=14)
        for name in ("fpam.fuse_conv1", "fpam.fuse_conv3"):
            store[f"{name}.weight"].data[:] = 0.0
            store[f"{name}.bias"].data[:] = 0.0
        pyr = tiny_pyramid(np.random.default_rng(15))
        with no_grad():
            bundle = module(pyr)
        assert np.allclose(bundle.channel_gate.data, 0.5)


class TestClassifyHead:
    def test_paper_scale_logits(self):
        model = SoundClassifier("paper50", 50, seed=2)
        x = Tensor(np.random.default_rng(16).normal(size=(1, 1, 201, 64)))
        with no_grad():
            logits = model(x)
        assert logits.dims == (1, 50)

    def test_constant_fused_map_pools_to_constant(self):
        from fpam.nn import spatial_mean_flatten

        x = Tensor(np.full((2, 6, 4, 4), 1.75))
        pooled = spatial_mean_flatten(x)
        assert pooled.dims == (2, 6)
        assert np.allclose(pooled.data, 1.75)

    def test_pooled_matches_flat_mean(self):
        from fpam.nn import spatial_mean_flatten

        data = np.random.default_rng(17).normal(size=(1, 3, 26, 8))
        pooled = spatial_mean_flatten(Tensor(data))
        for c in range(3):
            assert pooled.data[0, c] == pytest.approx(data[0, c].mean())

    def test_class_permutation_equivariance(self):
        model = SoundClassifier("tiny", 6, seed=3)
        rng = np.random.default_rng(18)
        model.head.fc.weight.data = rng.normal(size=model.head.fc.weight.dims)
        model.head.fc.bias.data = rng.normal(size=model.head.fc.bias.dims)
        x = Tensor(rng.normal(size=(1, 1, 64, 32)))
        with no_grad():
            before = model(x).data.copy()
        perm = np.random.default_rng(19).permutation(6)
        model.head.fc.weight.data = model.head.fc.weight.data[:, perm]
        model.head.fc.bias.data = model.head.fc.bias.data[perm]
        with no_grad():
            after = model(x).data
        assert np.allclose(after, before[:, perm], atol=1e-12)


class TestFullModuleGradients:
    def test_fpam_parameters_pass_finite_differences(self):
        module, store = make_module(rng_seed=20, in_channels=(5, 6, 7), c_align=8)
        pyr = tiny_pyramid(np.random.default_rng(21), channels=(5, 6, 7))

        def forward():
            from fpam.tensor import mul

            bundle = module(pyr)
            return tsum(mul(bundle.fused, bundle.fused))

        params = [p for _, p in store.items()]
        err = grad_check(forward, params, eps=1e-5)
        assert err < 1e-4, f"worst relative error {err}"

    def test_gradient_reaches_every_fpam_parameter(self):
        module, store = make_module(rng_seed=22)
        pyr = tiny_pyramid(np.random.default_rng(23))
        bundle = module(pyr)
        tsum(bundle.fused).backward()
        for name, p in store.items():
            assert p.grad is not None, f"{name} has no gradient"
            assert np.any(p.grad != 0.0), f"{name} gradient identically zero"
