"""Line-oriented config files: ``key = value`` under ``[section]`` headers.

Precedence is preset defaults, then the config file, then CLI flags. Every
run echoes its fully-resolved configuration so it can be reproduced from the
log alone.
"""
from __future__ import annotations

from dataclasses import dataclass

from .data import SynthSpec
from .errors import ConfigError
from .frontend import FrontendParams
from .train import TrainConfig

_TRAIN_KEYS = {
    "preset": str,
    "head": str,
    "epochs": int,
    "batch_size": int,
    "lr0": float,
    "lr_decay_every": int,
    "lr_decay_factor": float,
    "momentum": float,
    "mixup": str,
    "seed": int,
    "precision": str,
    "folds": str,
    "run_name": str,
}

_DATA_KEYS = {
    "source": str,
    "classes": int,
    "clips_per_class": int,
    "seconds": float,
    "sample_rate": int,
    "seed": int,
    "root": str,
    "meta": str,
    "audio_dir": str,
}

_FRONTEND_KEYS = {
    "mels": int,
    "hop": int,
    "win": int,
    "fft": int,
}

_SECTIONS = {"train": _TRAIN_KEYS, "data": _DATA_KEYS, "frontend": _FRONTEND_KEYS}


def parse_config_file(path) -> dict[str, dict[str, str]]:
    sections: dict[str, dict[str, str]] = {}
    current = None
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1].strip()
                if current not in _SECTIONS:
                    raise ConfigError(f"{path}:{lineno}: unknown section [{current}]")
                sections.setdefault(current, {})
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            if current is None:
                raise ConfigError(f"{path}:{lineno}: key outside any [section]")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _SECTIONS[current]:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in section [{current}]")
            sections[current][key] = value
    return sections


def _convert(section: str, key: str, value: str):
    typ = _SECTIONS[section][key]
    try:
        return typ(value)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {value!r} as {typ.__name__}") from exc


def parse_folds(value: str) -> tuple[int, ...]:
    if value == "all":
        return (1, 2, 3, 4, 5)
    try:
        folds = tuple(int(v) for v in value.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"cannot parse folds {value!r}: {exc}") from exc
    if not folds:
        raise ConfigError("folds must name at least one fold or 'all'")
    return folds


def parse_mixup(value: str) -> float | None:
    if value == "off":
        return None
    try:
        return float(value)
    except ValueError as exc:
        raise ConfigError(f"mixup must be 'off' or an alpha value, got {value!r}") from exc


@dataclass
class ResolvedConfig:
    train: TrainConfig
    run_name: str
    data_source: str            # "synth" or "csv"
    synth_spec: SynthSpec | None
    synth_seed: int
    data_root: str
    meta_path: str | None
    audio_dir: str | None
    frontend: FrontendParams

    def echo_lines(self) -> list[str]:
        t = self.train
        lines = [
            f"train.preset = {t.preset}",
            f"train.head = {t.head}",
            f"train.epochs = {t.epochs}",
            f"train.batch_size = {t.batch_size}",
            f"train.lr0 = {t.lr0}",
            f"train.lr_decay_every = {t.lr_decay_every}",
            f"train.lr_decay_factor = {t.lr_decay_factor}",
            f"train.momentum = {t.momentum}",
            f"train.mixup = {'off' if t.mixup_alpha is None else t.mixup_alpha}",
            f"train.seed = {t.seed}",
            f"train.precision = {t.precision}",
            f"train.folds = {','.join(str(f) for f in t.folds)}",
            f"train.run_name = {self.run_name}",
            f"data.source = {self.data_source}",
            f"data.root = {self.data_root}",
        ]
        if self.data_source == "synth":
            s = self.synth_spec
            lines += [
                f"data.classes = {s.n_classes}",
                f"data.clips_per_class = {s.clips_per_class}",
                f"data.seconds = {s.seconds}",
                f"data.sample_rate = {s.sample_rate}",
                f"data.seed = {self.synth_seed}",
            ]
        else:
            lines += [f"data.meta = {self.meta_path}", f"data.audio_dir = {self.audio_dir}"]
        p = self.frontend
        lines += [
            f"frontend.mels = {p.n_mels}",
            f"frontend.hop = {p.hop_length}",
            f"frontend.win = {p.win_length}",
            f"frontend.fft = {p.fft_size}",
        ]
        return lines


def resolve_config(path, overrides: dict[str, str] | None = None) -> ResolvedConfig:
    """Merge the config file with CLI overrides (flags win) into typed configs."""
    sections = parse_config_file(path)
    overrides = overrides or {}
    train_raw = dict(sections.get("train", {}))
    for key, value in overrides.items():
        if value is not None:
            train_raw[key] = value
    data_raw = sections.get("data", {})
    frontend_raw = sections.get("frontend", {})

    converted = {k: _convert("train", k, v) for k, v in train_raw.items()}
    run_name = converted.pop("run_name", "run")
    if "mixup" in converted:
        converted["mixup_alpha"] = parse_mixup(converted.pop("mixup"))
    if "folds" in converted:
        converted["folds"] = parse_folds(converted["folds"])
    train_cfg = TrainConfig(**converted)
    train_cfg.validate()

    data = {k: _convert("data", k, v) for k, v in data_raw.items()}
    source = data.get("source", "synth")
    if source not in ("synth", "csv"):
        raise ConfigError(f"data.source must be 'synth' or 'csv', got {source!r}")
    root = data.get("root", "runs/data")

    fe = {k: _convert("frontend", k, v) for k, v in frontend_raw.items()}
    frontend = FrontendParams(
        sample_rate=data.get("sample_rate", 16000),
        seconds=data.get("seconds", 5.0),
        n_mels=fe.get("mels", 64),
        fft_size=fe.get("fft", 1024),
        win_length=fe.get("win", 1024),
        hop_length=fe.get("hop", 400),
    )

    synth_spec = None
    if source == "synth":
        synth_spec = SynthSpec(
            n_classes=data.get("classes", 4),
            clips_per_class=data.get("clips_per_class", 40),
            seconds=data.get("seconds", 5.0),
            sample_rate=data.get("sample_rate", 16000),
        )
    else:
        if "meta" not in data:
            raise ConfigError("data.source = csv requires data.meta")

    return ResolvedConfig(
        train=train_cfg,
        run_name=run_name,
        data_source=source,
        synth_spec=synth_spec,
        synth_seed=data.get("seed", 7),
        data_root=root,
        meta_path=data.get("meta"),
        audio_dir=data.get("audio_dir"),
        frontend=frontend,
    )
