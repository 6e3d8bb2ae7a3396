"""Batch featurization with a content-hash cache.

Each clip becomes one FPAF file in the cache directory. A manifest maps clip
names to a sha256 of (WAV bytes, frontend parameters); unchanged clips are
skipped on rerun. Worker threads may fan out across files (one output file
per worker task), so results are identical at any thread count.
"""
from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import ClipEntry, DatasetIndex
from .errors import FpamError
from .frontend import FrontendParams, featurize_file, load_fpaf, save_fpaf

MANIFEST_NAME = "manifest.txt"


@dataclass
class FeaturizeSummary:
    computed: int = 0
    skipped: int = 0
    total_frames: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)


def content_hash(wav_path, params: FrontendParams) -> str:
    h = hashlib.sha256()
    with open(wav_path, "rb") as f:
        h.update(f.read())
    h.update(params.cache_key().encode())
    return h.hexdigest()


def cache_path(cache_dir, filename: str) -> str:
    stem = os.path.splitext(filename)[0]
    return os.path.join(os.fspath(cache_dir), stem + ".fpaf")


def _read_manifest(cache_dir) -> dict[str, str]:
    path = os.path.join(os.fspath(cache_dir), MANIFEST_NAME)
    if not os.path.exists(path):
        return {}
    manifest = {}
    with open(path) as f:
        for line in f:
            parts = line.split()
            if len(parts) == 2:
                manifest[parts[1]] = parts[0]
    return manifest


def _write_manifest(cache_dir, manifest: dict[str, str]) -> None:
    path = os.path.join(os.fspath(cache_dir), MANIFEST_NAME)
    with open(path, "w") as f:
        for name in sorted(manifest):
            f.write(f"{manifest[name]} {name}\n")


def featurize_index(index: DatasetIndex, params: FrontendParams, cache_dir,
                    threads: int = 0) -> FeaturizeSummary:
    """Featurize every indexed clip into the cache, honoring existing entries."""
    os.makedirs(os.fspath(cache_dir), exist_ok=True)
    manifest = _read_manifest(cache_dir)
    summary = FeaturizeSummary()
    new_manifest: dict[str, str] = {}

    def job(entry: ClipEntry):
        wav_path = index.path_of(entry)
        digest = content_hash(wav_path, params)
        out = cache_path(cache_dir, entry.filename)
        if manifest.get(entry.filename) == digest and os.path.exists(out):
            return entry.filename, digest, None, True
        feat = featurize_file(wav_path, params)
        save_fpaf(out, feat.data[0])
        return entry.filename, digest, feat.data.shape[1], False

    def run(entry: ClipEntry):
        try:
            return job(entry)
        except (FpamError, OSError) as exc:
            return entry.filename, None, str(exc), None

    if threads > 0:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, index.entries))
    else:
        results = [run(e) for e in index.entries]

    for filename, digest, extra, cached in results:
        if digest is None:
            summary.failures.append((filename, extra))
            continue
        new_manifest[filename] = digest
        if cached:
            summary.skipped += 1
            summary.total_frames += _frames_of(cache_path(cache_dir, filename))
        else:
            summary.computed += 1
            summary.total_frames += extra
    _write_manifest(cache_dir, new_manifest)
    return summary


def _frames_of(fpaf_path) -> int:
    import struct

    with open(fpaf_path, "rb") as f:
        head = f.read(16)
    return struct.unpack("<III", head[4:])[1]


def load_feature_matrix(index: DatasetIndex, entries, cache_dir) -> np.ndarray:
    """Stack cached features for the given entries into N x 1 x T x M."""
    feats = [load_fpaf(cache_path(cache_dir, e.filename)) for e in entries]
    return np.stack(feats)[:, None, :, :]
