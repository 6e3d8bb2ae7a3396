"""Fixture clips and their log-Mel golden vectors.

The fixture set pins every frontend convention (window, padding, mel scale,
normalization, log floor). An independent reference implementation can read
the WAVs, recompute the features, and diff against the emitted tensors.
Regeneration is byte-identical.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .data import synth_clip
from .frontend import FrontendParams, Waveform, featurize_file, write_wav
from .textio import save_tensor_text

GOLDEN_TOLERANCE = 1e-4


def _tone(freq: float, amp: float, seconds: float, rate: int) -> Waveform:
    t = np.arange(round(seconds * rate)) / rate
    return Waveform(amp * np.sin(2 * np.pi * freq * t), rate)


def fixture_set(params: FrontendParams) -> dict[str, Waveform]:
    """The canonical fixtures: tones, a chirp, noise, clicks, silence."""
    rate, seconds = params.sample_rate, params.seconds
    n = round(seconds * rate)
    t = np.arange(n) / rate

    chirp_phase = 2 * np.pi * (250.0 * t + (4000.0 - 250.0) * t * t / (2 * seconds))
    fixtures = {
        "silence": Waveform(np.zeros(n), rate),
        "tone_440": _tone(440.0, 0.5, seconds, rate),
        "tone_1000": _tone(1000.0, 0.5, seconds, rate),
        "chirp_250_4000": Waveform(0.5 * np.sin(chirp_phase), rate),
        "white_noise": Waveform(
            np.clip(0.2 * np.random.default_rng(20470).normal(size=n), -0.95, 0.95), rate
        ),
        "click_train": synth_clip("silence_click", np.random.default_rng(20471), seconds, rate),
        "am_tone_800": synth_clip("am_tone", np.random.default_rng(20472), seconds, rate),
        "harmonic_220": synth_clip("harmonic_stack", np.random.default_rng(20473), seconds, rate),
    }
    return fixtures


def emit_goldens(out_dir, params: FrontendParams | None = None) -> dict:
    """Write fixture WAVs, their log-Mel tensors, and a manifest. Returns the manifest."""
    params = params or FrontendParams()
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    manifest = {
        "version": 1,
        "frontend": {
            "sample_rate": params.sample_rate,
            "seconds": params.seconds,
            "n_mels": params.n_mels,
            "fft_size": params.fft_size,
            "win_length": params.win_length,
            "hop_length": params.hop_length,
            "fmin": params.fmin,
            "fmax": params.fmax,
            "log_eps": 1e-10,
        },
        "fixtures": [],
    }
    for name, w in fixture_set(params).items():
        wav_path = os.path.join(out_dir, f"{name}.wav")
        tensor_path = os.path.join(out_dir, f"{name}.logmel.txt")
        write_wav(wav_path, w)
        # featurize what a reader of the WAV will see, i.e. after PCM-16 quantization
        feat = featurize_file(wav_path, params)
        save_tensor_text(tensor_path, feat.data)
        manifest["fixtures"].append(
            {
                "name": name,
                "wav": f"{name}.wav",
                "tensor": f"{name}.logmel.txt",
                "tolerance": GOLDEN_TOLERANCE,
            }
        )
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest
