"""Full classifiers: the attention model and the plain global-pool baseline.

Log-Mel features are shifted and scaled before entering the network so the
log floor ln(1e-10) lands exactly at -1 and typical peaks near +1; the trunk
is norm-free, so a fixed input range is what keeps He-init activations sane.
"""
from __future__ import annotations

import numpy as np

from .attention import AttentionBundle, ClassifyHead, PyramidAttention
from .backbone import Backbone, BackboneConfig, preset_config
from .errors import DataError
from .optim import ParamStore
from .tensor import Tensor, precision


# half of -ln(1e-10): maps the log floor to -1 and unit mel power to +1
INPUT_CENTER = 11.512925464970229


def network_input(features: np.ndarray) -> np.ndarray:
    """Fixed affine map from raw log-Mel values to the network's input range."""
    return (features + INPUT_CENTER) / INPUT_CENTER


class SoundClassifier:
    """Backbone pyramid -> pyramid attention -> class logits."""

    def __init__(self, preset: str | BackboneConfig, n_classes: int, seed: int,
                 c_align: int | None = None):
        cfg = preset_config(preset) if isinstance(preset, str) else preset
        self.preset = preset if isinstance(preset, str) else "custom"
        self.cfg = cfg
        self.n_classes = n_classes
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(self.store, cfg, rng)
        # the aligned width defaults to the third stage's channel count
        self.c_align = cfg.stage_channels[2] if c_align is None else c_align
        self.fpam = PyramidAttention(
            self.store, "fpam", rng,
            (cfg.stage_channels[1], cfg.stage_channels[2], cfg.stage_channels[3]),
            self.c_align,
        )
        self.head = ClassifyHead(self.store, "head", rng, self.c_align, n_classes)

    def forward(self, x: Tensor) -> Tensor:
        return self.forward_with_attention(x)[0]

    def forward_with_attention(self, x: Tensor) -> tuple[Tensor, AttentionBundle]:
        pyramid = self.backbone.forward_pyramid(x)
        bundle = self.fpam(pyramid)
        return self.head(bundle.fused), bundle

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


class BaselineClassifier:
    """Ablation baseline: global average pool on the last stage, then FC."""

    def __init__(self, preset: str | BackboneConfig, n_classes: int, seed: int):
        cfg = preset_config(preset) if isinstance(preset, str) else preset
        self.preset = preset if isinstance(preset, str) else "custom"
        self.cfg = cfg
        self.n_classes = n_classes
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        self.backbone = Backbone(self.store, cfg, rng)
        self.head = ClassifyHead(self.store, "baseline_head", rng, cfg.stage_channels[3], n_classes)

    def forward(self, x: Tensor) -> Tensor:
        pyramid = self.backbone.forward_pyramid(x)
        return self.head(pyramid.c5)

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)


def build_model(head: str, preset: str, n_classes: int, seed: int):
    if head == "fpam":
        return SoundClassifier(preset, n_classes, seed)
    if head == "baseline":
        return BaselineClassifier(preset, n_classes, seed)
    raise DataError(f"unknown head {head!r}; expected 'fpam' or 'baseline'")


def infer_model_from_params(params: dict[str, np.ndarray]):
    """Reconstruct the model family, preset, and class count from checkpoint dims."""
    stem = params.get("backbone.stem.weight")
    if stem is None:
        raise DataError("checkpoint has no backbone.stem.weight; cannot infer architecture")
    stem_channels = stem.shape[0]
    preset = None
    for name, cfg in (("paper50", preset_config("paper50")), ("tiny", preset_config("tiny"))):
        if cfg.stem_channels == stem_channels:
            preset = name
            break
    if preset is None:
        raise DataError(f"stem width {stem_channels} matches no known preset")
    if "head.fc.bias" in params:
        n_classes = params["head.fc.bias"].shape[0]
        return "fpam", preset, int(n_classes)
    if "baseline_head.fc.bias" in params:
        n_classes = params["baseline_head.fc.bias"].shape[0]
        return "baseline", preset, int(n_classes)
    raise DataError("checkpoint has no recognizable classification head")


def load_model_from_params(params: dict[str, np.ndarray]):
    """Build the matching model and copy every checkpoint tensor into it.

    Checkpoints store 32-bit values, so the model is reconstructed at f32 and
    reproduces training-time evaluation bit for bit.
    """
    head, preset, n_classes = infer_model_from_params(params)
    with precision("f32"):
        model = build_model(head, preset, n_classes, seed=0)
    expected = set(model.store.names())
    got = set(params)
    if expected != got:
        missing = sorted(expected - got)[:3]
        extra = sorted(got - expected)[:3]
        raise DataError(f"checkpoint parameter names mismatch (missing {missing}, extra {extra})")
    for name, value in params.items():
        slot = model.store[name]
        if slot.dims != value.shape:
            raise DataError(f"parameter {name}: checkpoint dims {value.shape} vs model dims {slot.dims}")
        slot.data = value.astype(slot.dtype)
    return model
