"""Audio frontend: WAV ingestion to log-Mel spectrograms.

The canonical configuration is 16 kHz mono, clips fixed to 5 s, STFT with a
1024-sample Hann window (periodic), hop 400, reflect center padding, and a
64-band HTK-scale mel filterbank with Slaney area normalization over
0..Nyquist. That yields a 1 x 201 x 64 feature tensor per clip.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DataError

LOG_FLOOR_EPS = 1e-10


@dataclass
class Waveform:
    """Mono audio in [-1, 1] at a known sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FrontendParams:
    """Everything that determines the log-Mel output for a given clip."""

    sample_rate: int = 16000
    seconds: float = 5.0
    n_mels: int = 64
    fft_size: int = 1024
    win_length: int = 1024
    hop_length: int = 400
    fmin: float = 0.0
    fmax: float | None = None  # defaults to Nyquist

    def __post_init__(self):
        if self.fmax is None:
            self.fmax = self.sample_rate / 2

    def cache_key(self) -> str:
        return (
            f"rate={self.sample_rate};sec={self.seconds};mels={self.n_mels};"
            f"fft={self.fft_size};win={self.win_length};hop={self.hop_length};"
            f"fmin={self.fmin};fmax={self.fmax}"
        )


@dataclass
class LogMelSpectrogram:
    """1 x T x M log-Mel features plus the parameters that produced them."""

    data: np.ndarray  # 1 x T x M
    frame_rate: float
    params: FrontendParams

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_mels(self) -> int:
        return self.data.shape[2]


# -- WAV I/O ----------------------------------------------------------------


def load_wav(path) -> Waveform:
    """Read a RIFF/WAVE PCM-16 file; stereo is averaged down to mono."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise DataError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or len(fmt) < 16:
        raise DataError(f"{path}: missing or truncated fmt chunk")
    if data is None:
        raise DataError(f"{path}: missing data chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format != 1 or bits != 16:
        raise DataError(f"{path}: unsupported encoding (format={audio_format}, bits={bits}); need PCM-16")
    if channels not in (1, 2):
        raise DataError(f"{path}: unsupported channel count {channels}")

    pcm = np.frombuffer(data[: len(data) - len(data) % (2 * channels)], dtype="<i2")
    samples = pcm.astype(np.float64) / 32768.0
    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return Waveform(samples, rate)


def write_wav(path, w: Waveform) -> None:
    """Write mono PCM-16. Values are round-tripped exactly for k/32768 inputs."""
    pcm = np.clip(np.rint(w.samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    with open(path, "wb") as f:
        f.write(header + data)


# -- resampling / length fixing ----------------------------------------------


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Polyphase windowed-sinc resampling (64 taps per phase, Kaiser window).

    Same-rate input is returned untouched. Output length is
    round(n * target / source).
    """
    if w.sample_rate <= 0 or target_rate <= 0:
        raise ContractError("sample rates must be positive")
    if w.sample_rate == target_rate:
        return w

    g = math.gcd(target_rate, w.sample_rate)
    up = target_rate // g
    down = w.sample_rate // g
    taps_per_phase = 64
    half = taps_per_phase * up // 2
    length = 2 * half + 1

    # lowpass at the tighter of the two Nyquists, in units of the upsampled rate
    cutoff = min(1.0 / up, 1.0 / down)
    t = np.arange(length, dtype=np.float64) - half
    h = cutoff * np.sinc(cutoff * t) * np.kaiser(length, 8.6) * up

    x = w.samples
    n_out = round(len(x) * target_rate / w.sample_rate)
    j = np.arange(n_out)
    # position of output j on the upsampled grid, shifted by the filter's group delay
    tpos = j * down + half
    base = tpos // up
    phase = tpos % up
    k = np.arange(taps_per_phase + 1)
    src = base[:, None] - k[None, :]
    taps = phase[:, None] + k[None, :] * up
    tap_ok = (taps >= 0) & (taps < length)
    src_ok = (src >= 0) & (src < len(x))
    hvals = np.where(tap_ok, h[np.clip(taps, 0, length - 1)], 0.0)
    xvals = np.where(src_ok, x[np.clip(src, 0, len(x) - 1)], 0.0)
    y = (hvals * xvals).sum(axis=1)
    return Waveform(y, target_rate)


def fix_length(w: Waveform, seconds: float) -> Waveform:
    """Keep the first ``seconds`` of audio; zero-pad the tail when shorter."""
    if len(w.samples) == 0:
        raise ContractError("fix_length on empty waveform")
    n = round(seconds * w.sample_rate)
    if len(w.samples) >= n:
        return Waveform(w.samples[:n], w.sample_rate)
    padded = np.zeros(n, dtype=np.float64)
    padded[: len(w.samples)] = w.samples
    return Waveform(padded, w.sample_rate)


# -- STFT / mel --------------------------------------------------------------


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _reflect_pad(x: np.ndarray, pad: int) -> np.ndarray:
    """Reflect padding that tolerates pad amounts beyond the signal length."""
    n = len(x)
    if n == 1:
        return np.full(n + 2 * pad, x[0])
    idx = np.arange(-pad, n + pad)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    idx = np.where(idx >= n, period - idx, idx)
    return x[idx]


def stft_power(w: Waveform, win_length: int = 1024, hop_length: int = 400, fft_size: int = 1024) -> np.ndarray:
    """Power spectrogram, T x (fft_size/2 + 1), with reflect center padding.

    T = 1 + floor(n / hop): an 80000-sample clip at hop 400 yields 201 frames.
    """
    if win_length > fft_size:
        raise ContractError(f"window length {win_length} exceeds FFT size {fft_size}")
    x = w.samples
    if len(x) < 1:
        raise ContractError("stft_power on empty waveform")
    n_frames = 1 + len(x) // hop_length
    padded = _reflect_pad(x, fft_size // 2)

    starts = np.arange(n_frames) * hop_length
    frames = padded[starts[:, None] + np.arange(fft_size)[None, :]]
    window = np.zeros(fft_size)
    offset = (fft_size - win_length) // 2
    window[offset : offset + win_length] = hann_window(win_length)
    spec = np.fft.rfft(frames * window, n=fft_size, axis=1)
    return (spec.real**2 + spec.imag**2).astype(np.float64)


def hz_to_mel(f):
    """HTK mel scale: m = 2595 log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = 64, fft_size: int = 1024, rate: int = 16000,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters with Slaney area normalization, n_mels x (fft/2+1).

    Centers are uniform on the mel scale; each filter is scaled by
    2 / (f_hi - f_lo) so rows integrate to comparable mass.
    """
    if fmax is None:
        fmax = rate / 2
    mel_pts = np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    if np.any(np.diff(hz_pts) <= 0):
        raise ConfigError(
            f"degenerate mel config: {n_mels} filters cannot fit strictly increasing "
            f"centers between {fmin} Hz and {fmax} Hz"
        )
    bin_freqs = np.arange(fft_size // 2 + 1) * (rate / fft_size)
    lower = (bin_freqs[None, :] - hz_pts[:-2, None]) / (hz_pts[1:-1] - hz_pts[:-2])[:, None]
    upper = (hz_pts[2:, None] - bin_freqs[None, :]) / (hz_pts[2:] - hz_pts[1:-1])[:, None]
    fb = np.maximum(0.0, np.minimum(lower, upper))
    fb *= (2.0 / (hz_pts[2:] - hz_pts[:-2]))[:, None]
    return fb


def log_mel(power: np.ndarray, fb: np.ndarray, params: FrontendParams) -> LogMelSpectrogram:
    """Project a T x bins power spectrogram onto mel filters, then ln(. + eps)."""
    mel_power = power @ fb.T
    data = np.log(mel_power + LOG_FLOOR_EPS)
    return LogMelSpectrogram(data[None, :, :], params.sample_rate / params.hop_length, params)


def featurize_waveform(w: Waveform, params: FrontendParams) -> LogMelSpectrogram:
    """Full chain: resample, fix length, STFT power, mel projection, log."""
    w = resample(w, params.sample_rate)
    w = fix_length(w, params.seconds)
    power = stft_power(w, params.win_length, params.hop_length, params.fft_size)
    fb = _cached_filterbank(params)
    return log_mel(power, fb, params)


def featurize_file(path, params: FrontendParams) -> LogMelSpectrogram:
    return featurize_waveform(load_wav(path), params)


_FB_CACHE: dict[tuple, np.ndarray] = {}


def _cached_filterbank(params: FrontendParams) -> np.ndarray:
    key = (params.n_mels, params.fft_size, params.sample_rate, params.fmin, params.fmax)
    fb = _FB_CACHE.get(key)
    if fb is None:
        fb = mel_filterbank(params.n_mels, params.fft_size, params.sample_rate, params.fmin, params.fmax)
        _FB_CACHE[key] = fb
    return fb


def naive_dft(frame: np.ndarray) -> np.ndarray:
    """Direct O(N^2) DFT at 64-bit; the test-side ground truth for the FFT."""
    x = np.asarray(frame, dtype=np.float64)
    n = len(x)
    k = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return basis @ x.astype(np.complex128)


# -- FPAF feature cache format -------------------------------------------------

FPAF_MAGIC = b"FPAF"
FPAF_VERSION = 1


def save_fpaf(path, features: np.ndarray) -> None:
    """Write a T x M feature matrix as FPAF v1 (f32 little-endian, row-major)."""
    arr = np.asarray(features)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ContractError(f"FPAF stores a T x M matrix, got dims {arr.shape}")
    t, m = arr.shape
    with open(path, "wb") as f:
        f.write(FPAF_MAGIC)
        f.write(struct.pack("<III", FPAF_VERSION, t, m))
        f.write(arr.astype("<f4").tobytes())


def load_fpaf(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) < 16 or head[:4] != FPAF_MAGIC:
            raise DataError(f"{path}: bad FPAF magic")
        version, t, m = struct.unpack("<III", head[4:])
        if version != FPAF_VERSION:
            raise DataError(f"{path}: unsupported FPAF version {version}")
        body = f.read(4 * t * m)
        if len(body) != 4 * t * m:
            raise DataError(f"{path}: truncated FPAF payload")
    return np.frombuffer(body, dtype="<f4").reshape(t, m).astype(np.float64)
