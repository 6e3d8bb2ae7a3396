"""File exports: attention-map overlays, training curves, confusion matrices.

Attention maps go out as P5 PGM images (linear [0,1] -> 0..255) next to CSVs
carrying the raw values, all resampled to the input spectrogram's resolution.
Exports never mutate model state.
"""
from __future__ import annotations

import os

import numpy as np

from .errors import DataError
from .frontend import FrontendParams, featurize_file
from .model import network_input
from .ops import resample_spatial
from .tensor import Tensor, no_grad
from .train import TrainReport


def write_pgm(path, values01: np.ndarray) -> None:
    """P5 PGM, maxval 255; input values are clipped to [0, 1]."""
    arr = np.clip(np.asarray(values01, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 2:
        raise DataError(f"PGM wants a 2-d map, got dims {arr.shape}")
    h, w = arr.shape
    data = np.rint(arr * 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise DataError(f"{path}: not a P5 PGM")
    w, h = (int(v) for v in parts[1].split())
    maxval = int(parts[2])
    pixels = np.frombuffer(parts[3][: w * h], dtype=np.uint8).reshape(h, w)
    return pixels.astype(np.float64) / maxval


def write_csv_matrix(path, matrix: np.ndarray, fmt: str = "%.9e") -> None:
    with open(path, "w") as f:
        for row in np.atleast_2d(matrix):
            f.write(",".join(fmt % v for v in row) + "\n")


def export_attention(model, clip_path, out_dir, params: FrontendParams | None = None) -> list[str]:
    """Write per-scale attention maps plus the input spectrogram for one clip.

    Layout: <out_dir>/attn/<clip>/<scale>.pgm|.csv, with the channel gate in
    channel_gate.csv and the normalized input in spectrogram.pgm|.csv.
    """
    params = params or FrontendParams()
    feat = featurize_file(clip_path, params)
    x = Tensor(network_input(feat.data)[None, :, :, :])  # 1 x 1 x T x M
    with no_grad():
        _, bundle = model.forward_with_attention(x)

    clip_name = os.path.splitext(os.path.basename(os.fspath(clip_path)))[0]
    dest = os.path.join(os.fspath(out_dir), "attn", clip_name)
    os.makedirs(dest, exist_ok=True)
    t, m = feat.data.shape[1], feat.data.shape[2]

    written = []
    for scale, gate in bundle.spatial_maps.items():
        resampled = resample_spatial(gate, (t, m), "nearest_up").data[0, 0]
        pgm = os.path.join(dest, f"{scale}.pgm")
        csv = os.path.join(dest, f"{scale}.csv")
        write_pgm(pgm, resampled)
        write_csv_matrix(csv, resampled)
        written += [pgm, csv]

    spect = feat.data[0]
    lo, hi = spect.min(), spect.max()
    norm = (spect - lo) / (hi - lo) if hi > lo else np.zeros_like(spect)
    spec_pgm = os.path.join(dest, "spectrogram.pgm")
    spec_csv = os.path.join(dest, "spectrogram.csv")
    write_pgm(spec_pgm, norm)
    write_csv_matrix(spec_csv, spect)
    gate_csv = os.path.join(dest, "channel_gate.csv")
    write_csv_matrix(gate_csv, bundle.channel_gate.data.reshape(1, -1))
    written += [spec_pgm, spec_csv, gate_csv]
    return written


def export_metrics(report: TrainReport, out_dir) -> list[str]:
    """Write per-fold curves.csv and confusion_fold<k>.csv files."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fold in report.folds:
        fold_dir = os.path.join(out_dir, f"fold{fold.fold}")
        os.makedirs(fold_dir, exist_ok=True)
        curves = os.path.join(fold_dir, "curves.csv")
        with open(curves, "w") as f:
            f.write("epoch,train_acc,test_acc,train_loss,test_loss\n")
            for s in fold.epochs:
                f.write(
                    f"{s.epoch},{s.train_acc:.9e},{s.test_acc:.9e},"
                    f"{s.train_loss:.9e},{s.test_loss:.9e}\n"
                )
        confusion = os.path.join(out_dir, f"confusion_fold{fold.fold}.csv")
        write_csv_matrix(confusion, fold.confusion, fmt="%d")
        written += [curves, confusion]

    summary = os.path.join(out_dir, "summary.txt")
    with open(summary, "w") as f:
        for fold in report.folds:
            f.write(
                f"fold {fold.fold}: final_acc {fold.final_accuracy:.9e} "
                f"best_acc {fold.best_accuracy:.9e} (epoch {fold.best_epoch})\n"
            )
        f.write(f"mean_accuracy {report.mean_accuracy:.9e}\n")
    written.append(summary)
    return written
