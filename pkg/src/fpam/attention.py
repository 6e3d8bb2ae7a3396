"""Pyramid attention over three backbone scales.

The three coarsest pyramid levels are first mapped to a common channel width
by 1x1 convolutions. Each aligned map gets its own spatial gate: four
single-channel branches (channel max, channel mean, a 3x3 conv, a 1x1 conv)
are concatenated and refined by a 3x3 conv into one sigmoid map that
multiplies the input. The gated maps are brought to the middle scale
(average-pool down for the finer one, nearest-neighbor up for the coarser),
fused by channel concatenation, refined by parallel 1x1/3x3 convs into the
aligned width, and squeezed through global max+avg pooling and a sigmoid
into a per-channel gate. The output is the mean of the three gated maps.

``force_gates_one`` replaces both sigmoids with the constant 1, collapsing
the module to a plain average of the spatially aligned maps (the analytic
degenerate case used by tests).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import FeaturePyramid
from .errors import ConfigError, ShapeError
from .nn import Conv2d, Linear, spatial_mean_flatten
from .ops import channel_reduce, concat_channels, global_pool, resample_spatial
from .tensor import Tensor, add, mul, scale, sigmoid


@dataclass
class AttentionBundle:
    """Everything the pyramid attention computes in one forward pass."""

    spatial_maps: dict[str, Tensor]   # per-scale N x 1 x H x W gates, in (0,1)
    gated_maps: dict[str, Tensor]     # per-scale gated feature maps
    aligned_maps: tuple[Tensor, Tensor, Tensor]  # gated maps at the fused scale
    channel_gate: Tensor              # N x C_align x 1 x 1, in (0,1)
    fused: Tensor                     # N x C_align x H4 x W4


class SpatialAttention:
    """Single-channel spatial gate for one feature map."""

    def __init__(self, store, name, rng, channels):
        self.conv3 = Conv2d(store, f"{name}.conv3", rng, channels, 1, 3, 1, 1)
        self.conv1 = Conv2d(store, f"{name}.conv1", rng, channels, 1, 1, 1, 0)
        self.refine = Conv2d(store, f"{name}.refine", rng, 4, 1, 3, 1, 1)

    def __call__(self, x, force_gate_one: bool = False):
        branches = [
            channel_reduce(x, "max"),
            channel_reduce(x, "avg"),
            self.conv3(x),
            self.conv1(x),
        ]
        pre = self.refine(concat_channels(branches))
        if force_gate_one:
            gate = Tensor(np.ones_like(pre.data))
        else:
            gate = sigmoid(pre)
        return gate, mul(x, gate)


class PyramidAttention:
    def __init__(self, store, name, rng, in_channels: tuple[int, int, int], c_align: int):
        if c_align % 2 != 0:
            raise ConfigError(f"aligned channel width must be even, got {c_align}")
        self.c_align = c_align
        self.force_gates_one = False
        c3, c4, c5 = in_channels
        self.align3 = Conv2d(store, f"{name}.align3", rng, c3, c_align, 1, 1, 0)
        self.align4 = Conv2d(store, f"{name}.align4", rng, c4, c_align, 1, 1, 0)
        self.align5 = Conv2d(store, f"{name}.align5", rng, c5, c_align, 1, 1, 0)
        self.sam3 = SpatialAttention(store, f"{name}.sam3", rng, c_align)
        self.sam4 = SpatialAttention(store, f"{name}.sam4", rng, c_align)
        self.sam5 = SpatialAttention(store, f"{name}.sam5", rng, c_align)
        self.fuse_conv1 = Conv2d(store, f"{name}.fuse_conv1", rng, 3 * c_align, c_align // 2, 1, 1, 0)
        self.fuse_conv3 = Conv2d(store, f"{name}.fuse_conv3", rng, 3 * c_align, c_align // 2, 3, 1, 1)

    def align(self, pyramid: FeaturePyramid) -> tuple[Tensor, Tensor, Tensor]:
        """1x1-convolve c3/c4/c5 to a common channel width, spatial dims untouched."""
        return (self.align3(pyramid.c3), self.align4(pyramid.c4), self.align5(pyramid.c5))

    def __call__(self, pyramid: FeaturePyramid) -> AttentionBundle:
        f3, f4, f5 = self.align(pyramid)
        h4, w4 = f4.dims[2], f4.dims[3]
        if f3.dims[2] < h4 or f3.dims[3] < w4 or f5.dims[2] > h4 or f5.dims[3] > w4:
            raise ShapeError(
                f"pyramid spatial dims not nested: {f3.dims} / {f4.dims} / {f5.dims}"
            )

        s3, a3 = self.sam3(f3, self.force_gates_one)
        s4, a4 = self.sam4(f4, self.force_gates_one)
        s5, a5 = self.sam5(f5, self.force_gates_one)

        a3_mid = resample_spatial(a3, (h4, w4), "adaptive_avg_down")
        a5_mid = resample_spatial(a5, (h4, w4), "nearest_up")

        fused_in = concat_channels([a3_mid, a4, a5_mid])
        refined = concat_channels([self.fuse_conv1(fused_in), self.fuse_conv3(fused_in)])
        gate_pre = add(global_pool(refined, "max"), global_pool(refined, "avg"))
        if self.force_gates_one:
            channel_gate = Tensor(np.ones_like(gate_pre.data))
        else:
            channel_gate = sigmoid(gate_pre)

        fused = scale(
            add(add(mul(channel_gate, a3_mid), mul(channel_gate, a4)), mul(channel_gate, a5_mid)),
            1.0 / 3.0,
        )
        return AttentionBundle(
            spatial_maps={"s3": s3, "s4": s4, "s5": s5},
            gated_maps={"s3": a3, "s4": a4, "s5": a5},
            aligned_maps=(a3_mid, a4, a5_mid),
            channel_gate=channel_gate,
            fused=fused,
        )


class ClassifyHead:
    """Spatial mean then a fully connected layer to class logits.

    The weights start at zero so initial logits are uniform regardless of the
    trunk's activation scale; the norm-free backbone makes that scale vary a
    lot across seeds, and a zero head keeps the first updates bounded.
    """

    def __init__(self, store, name, rng, c_in, n_classes):
        self.fc = Linear(store, f"{name}.fc", rng, c_in, n_classes)
        self.fc.weight.data[:] = 0.0

    def __call__(self, fused):
        return self.fc(spatial_mean_flatten(fused))
