"""ResNet-style multi-scale feature extractor.

The stem is a single 7x7 stride-2 convolution (no max pool), so a 1x201x64
input reaches the four residual stages at 101x32 / 51x16 / 26x8 / 13x4.
Blocks are conv + bias + ReLU: the trunk is deliberately norm-free, with
He-uniform initialization standing in for pretrained weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Conv2d
from .optim import ParamStore
from .tensor import Tensor, add, relu


@dataclass(frozen=True)
class BackboneConfig:
    stem_channels: int
    stage_channels: tuple[int, int, int, int]
    blocks_per_stage: tuple[int, int, int, int]
    expansion: int
    input_channels: int = 1

    # stage strides are fixed at (1, 2, 2, 2); the stem is 7x7 stride 2 pad 3
    STAGE_STRIDES = (1, 2, 2, 2)


PRESETS = {
    "paper50": BackboneConfig(64, (256, 512, 1024, 2048), (3, 4, 6, 3), 4),
    "tiny": BackboneConfig(16, (16, 32, 64, 128), (1, 1, 1, 1), 1),
}


def preset_config(name: str) -> BackboneConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown backbone preset {name!r}; choose from {sorted(PRESETS)}")
    return PRESETS[name]


@dataclass
class FeaturePyramid:
    """Residual stage outputs, finest to coarsest."""

    c2: Tensor
    c3: Tensor
    c4: Tensor
    c5: Tensor

    def levels(self) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        return (self.c2, self.c3, self.c4, self.c5)


class BasicBlock:
    """Two 3x3 convs with an identity (or 1x1-projected) shortcut."""

    def __init__(self, store, name, rng, cin, cout, stride):
        self.conv1 = Conv2d(store, f"{name}.conv1", rng, cin, cout, 3, stride, 1)
        self.conv2 = Conv2d(store, f"{name}.conv2", rng, cout, cout, 3, 1, 1)
        self.proj = None
        if stride != 1 or cin != cout:
            self.proj = Conv2d(store, f"{name}.proj", rng, cin, cout, 1, stride, 0)

    def __call__(self, x):
        identity = self.proj(x) if self.proj is not None else x
        y = relu(self.conv1(x))
        y = self.conv2(y)
        return relu(add(y, identity))


class BottleneckBlock:
    """1x1 reduce, 3x3 (carries the stride), 1x1 expand."""

    def __init__(self, store, name, rng, cin, cout, stride, expansion):
        width = cout // expansion
        self.conv1 = Conv2d(store, f"{name}.conv1", rng, cin, width, 1, 1, 0)
        self.conv2 = Conv2d(store, f"{name}.conv2", rng, width, width, 3, stride, 1)
        self.conv3 = Conv2d(store, f"{name}.conv3", rng, width, cout, 1, 1, 0)
        self.proj = None
        if stride != 1 or cin != cout:
            self.proj = Conv2d(store, f"{name}.proj", rng, cin, cout, 1, stride, 0)

    def __call__(self, x):
        identity = self.proj(x) if self.proj is not None else x
        y = relu(self.conv1(x))
        y = relu(self.conv2(y))
        y = self.conv3(y)
        return relu(add(y, identity))


class Backbone:
    def __init__(self, store: ParamStore, cfg: BackboneConfig, rng, name: str = "backbone"):
        self.cfg = cfg
        self.stem = Conv2d(store, f"{name}.stem", rng, cfg.input_channels, cfg.stem_channels, 7, 2, 3)
        self.stages = []
        cin = cfg.stem_channels
        for s, (cout, blocks, stride) in enumerate(
            zip(cfg.stage_channels, cfg.blocks_per_stage, BackboneConfig.STAGE_STRIDES), start=2
        ):
            stage = []
            for b in range(blocks):
                block_name = f"{name}.res{s}.block{b}"
                block_stride = stride if b == 0 else 1
                if cfg.expansion == 1:
                    stage.append(BasicBlock(store, block_name, rng, cin, cout, block_stride))
                else:
                    stage.append(BottleneckBlock(store, block_name, rng, cin, cout, block_stride, cfg.expansion))
                cin = cout
            self.stages.append(stage)

    def forward_pyramid(self, x: Tensor) -> FeaturePyramid:
        """Run the stem and the four stages, returning every stage output."""
        if x.data.ndim != 4 or x.dims[1] != self.cfg.input_channels:
            raise ShapeError(
                f"backbone expects N x {self.cfg.input_channels} x H x W input, got dims {x.dims}"
            )
        _check_depth(x.dims[2], x.dims[3])
        y = relu(self.stem(x))
        outputs = []
        for stage in self.stages:
            for block in stage:
                y = block(y)
            outputs.append(y)
        return FeaturePyramid(*outputs)


def _check_depth(h: int, w: int) -> None:
    """Every halving (stem plus stages 3..5) must keep both extents >= 1."""
    for _ in range(4):
        if h < 2 or w < 2:
            raise ShapeError(f"input {h}x{w} too small to survive the stem and stage halvings")
        h = -(-h // 2)
        w = -(-w // 2)


def build_backbone(cfg, seed: int, store: ParamStore | None = None) -> tuple[Backbone, ParamStore]:
    """Construct a backbone (preset name or config) with seeded He-uniform parameters."""
    if isinstance(cfg, str):
        cfg = preset_config(cfg)
    if store is None:
        store = ParamStore()
    rng = np.random.default_rng(seed)
    return Backbone(store, cfg, rng), store
