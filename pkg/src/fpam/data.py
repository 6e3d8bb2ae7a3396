"""Dataset ingestion: metadata CSV, 5-fold splits, and the synthetic generator.

The synthetic generator writes real WAV files so training exercises the full
audio path. Every clip is deterministic in (seed, class, clip index).
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .frontend import Waveform, write_wav

N_FOLDS = 5

SYNTH_VOCABULARY = (
    "pure_tone",
    "linear_chirp",
    "white_noise",
    "silence_click",
    "am_tone",
    "tone_burst",
    "harmonic_stack",
    "filtered_noise",
)


@dataclass(frozen=True)
class ClipEntry:
    filename: str
    fold: int
    target: int
    category: str


@dataclass
class DatasetIndex:
    entries: list[ClipEntry]
    n_classes: int
    audio_dir: str

    def __len__(self) -> int:
        return len(self.entries)

    def path_of(self, entry: ClipEntry) -> str:
        return os.path.join(self.audio_dir, entry.filename)


def load_metadata(csv_path, audio_dir: str | None = None) -> DatasetIndex:
    """Parse an ESC-style metadata CSV (filename, fold, target, category)."""
    required = ("filename", "fold", "target", "category")
    entries: list[ClipEntry] = []
    seen: set[str] = set()
    with open(csv_path, newline="") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{csv_path}: missing required columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            name = row["filename"]
            if name in seen:
                raise DataError(f"{csv_path}:{lineno}: duplicated filename {name!r}")
            seen.add(name)
            try:
                fold = int(row["fold"])
                target = int(row["target"])
            except ValueError as exc:
                raise DataError(f"{csv_path}:{lineno}: non-integer fold/target: {exc}") from exc
            if not 1 <= fold <= N_FOLDS:
                raise DataError(f"{csv_path}:{lineno}: fold {fold} outside 1..{N_FOLDS}")
            entries.append(ClipEntry(name, fold, target, row["category"]))
    if not entries:
        raise DataError(f"{csv_path}: no data rows")
    targets = sorted({e.target for e in entries})
    if targets != list(range(len(targets))):
        raise DataError(f"{csv_path}: class ids {targets} are not contiguous from 0")
    return DatasetIndex(entries, len(targets), audio_dir or os.path.dirname(os.fspath(csv_path)))


def make_cv_splits(index: DatasetIndex) -> list[tuple[list[ClipEntry], list[ClipEntry]]]:
    """Split k tests on fold k and trains on the other four folds."""
    splits = []
    for k in range(1, N_FOLDS + 1):
        test = [e for e in index.entries if e.fold == k]
        train = [e for e in index.entries if e.fold != k]
        if not test:
            raise DataError(f"fold {k} is empty; cannot build a 5-fold protocol")
        splits.append((train, test))
    return splits


# -- synthetic audio ----------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """K classes from the generator vocabulary, in vocabulary order."""

    n_classes: int = 4
    clips_per_class: int = 40
    seconds: float = 5.0
    sample_rate: int = 16000

    def class_names(self) -> tuple[str, ...]:
        if not 1 <= self.n_classes <= len(SYNTH_VOCABULARY):
            raise ConfigError(
                f"{self.n_classes} classes requested, vocabulary has {len(SYNTH_VOCABULARY)}"
            )
        return SYNTH_VOCABULARY[: self.n_classes]


def _normalize(x: np.ndarray, peak: float) -> np.ndarray:
    top = np.abs(x).max()
    return x * (peak / top) if top > 0 else x


def synth_clip(category: str, rng: np.random.Generator, seconds: float, rate: int) -> Waveform:
    """One clip of the named class with randomized frequency/phase/level."""
    n = round(seconds * rate)
    t = np.arange(n) / rate
    amp = rng.uniform(0.25, 0.7)

    if category == "pure_tone":
        f = rng.uniform(300.0, 900.0)
        x = amp * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    elif category == "linear_chirp":
        # sweep band kept disjoint from the pure-tone band
        f0 = rng.uniform(1500.0, 2500.0)
        f1 = rng.uniform(5000.0, 7000.0)
        phase = 2 * np.pi * (f0 * t + (f1 - f0) * t * t / (2 * seconds))
        x = amp * np.sin(phase + rng.uniform(0, 2 * np.pi))
    elif category == "white_noise":
        x = _normalize(rng.normal(size=n), amp)
    elif category == "silence_click":
        x = np.zeros(n)
        n_clicks = rng.integers(5, 10)
        width = 64
        positions = np.sort(rng.integers(rate // 4, n - rate // 4, size=n_clicks))
        envelope = np.exp(-np.arange(width) / 12.0)
        for p in positions:
            x[p : p + width] += rng.uniform(0.6, 0.9) * rng.choice((-1.0, 1.0)) * envelope
        x = np.clip(x, -0.95, 0.95)
    elif category == "am_tone":
        fc = rng.uniform(500.0, 3000.0)
        fm = rng.uniform(2.0, 8.0)
        carrier = np.sin(2 * np.pi * fc * t + rng.uniform(0, 2 * np.pi))
        x = amp * carrier * (0.5 + 0.5 * np.sin(2 * np.pi * fm * t + rng.uniform(0, 2 * np.pi)))
    elif category == "tone_burst":
        f = rng.uniform(400.0, 2500.0)
        period = rng.uniform(0.3, 0.5)
        duty = rng.uniform(0.2, 0.4)
        gate = ((t % period) < duty * period).astype(np.float64)
        x = amp * gate * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    elif category == "harmonic_stack":
        f0 = rng.uniform(150.0, 400.0)
        x = np.zeros(n)
        for k in range(1, 6):
            x += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
        x = _normalize(x, amp)
    elif category == "filtered_noise":
        lo = rng.uniform(500.0, 2000.0)
        hi = lo + rng.uniform(500.0, 2000.0)
        spec = np.fft.rfft(rng.normal(size=n))
        freqs = np.fft.rfftfreq(n, 1.0 / rate)
        spec[(freqs < lo) | (freqs > hi)] = 0
        x = _normalize(np.fft.irfft(spec, n=n), amp)
    else:
        raise ConfigError(f"unknown synthetic category {category!r}")
    return Waveform(x, rate)


def synth_dataset(spec: SynthSpec, seed: int, out_dir) -> DatasetIndex:
    """Generate WAVs plus a metadata CSV; folds are assigned round-robin."""
    classes = spec.class_names()
    audio_dir = os.path.join(os.fspath(out_dir), "audio")
    os.makedirs(audio_dir, exist_ok=True)
    entries: list[ClipEntry] = []
    for target, category in enumerate(classes):
        for i in range(spec.clips_per_class):
            rng = np.random.default_rng([seed, target, i])
            w = synth_clip(category, rng, spec.seconds, spec.sample_rate)
            name = f"{category}_{i:03d}.wav"
            write_wav(os.path.join(audio_dir, name), w)
            entries.append(ClipEntry(name, (i % N_FOLDS) + 1, target, category))
    meta_path = os.path.join(os.fspath(out_dir), "meta.csv")
    with open(meta_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["filename", "fold", "target", "category"])
        for e in entries:
            writer.writerow([e.filename, e.fold, e.target, e.category])
    return DatasetIndex(entries, len(classes), audio_dir)
