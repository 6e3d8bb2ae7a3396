"""Dataset ingestion, splits, synthetic generator, mixup, schedule, training."""
import os

import numpy as np
import pytest

from fpam.checkpoint import load_checkpoint, restore_into, save_checkpoint
from fpam.data import (
    ClipEntry,
    DatasetIndex,
    SynthSpec,
    load_metadata,
    make_cv_splits,
    synth_dataset,
)
from fpam.errors import ConfigError, ContractError, DataError
from fpam.featurize import featurize_index, load_feature_matrix
from fpam.frontend import FrontendParams, featurize_file, LOG_FLOOR_EPS
from fpam.model import build_model
from fpam.optim import ParamStore
from fpam.tensor import Tensor, precision
from fpam.train import TrainConfig, evaluate, lr_at, mixup, one_hot, train


def write_esc_style_csv(path, rows_per_class, n_classes, categories=None):
    lines = ["filename,fold,target,category,extra"]
    i = 0
    for target in range(n_classes):
        category = categories[target] if categories else f"class{target}"
        for k in range(rows_per_class):
            fold = (i % 5) + 1
            lines.append(f"{target}-{k}.wav,{fold},{target},{category},x")
            i += 1
    path.write_text("\n".join(lines) + "\n")


class TestLoadMetadata:
    def test_esc50_shape(self, tmp_path):
        csv = tmp_path / "esc50.csv"
        write_esc_style_csv(csv, 40, 50)
        index = load_metadata(csv)
        assert len(index) == 2000
        assert index.n_classes == 50
        per_fold = {k: sum(1 for e in index.entries if e.fold == k) for k in range(1, 6)}
        assert all(count == 400 for count in per_fold.values())
        per_class = {}
        for e in index.entries:
            per_class[e.target] = per_class.get(e.target, 0) + 1
        assert all(count == 40 for count in per_class.values())

    def test_esc10_split_sizes(self, tmp_path):
        csv = tmp_path / "esc10.csv"
        write_esc_style_csv(csv, 40, 10)
        index = load_metadata(csv)
        train_entries, test_entries = make_cv_splits(index)[0]
        assert len(train_entries) == 320
        assert len(test_entries) == 80

    def test_duplicate_filename_rejected(self, tmp_path):
        csv = tmp_path / "dup.csv"
        csv.write_text("filename,fold,target,category\na.wav,1,0,x\na.wav,2,0,x\n")
        with pytest.raises(DataError, match="duplicated"):
            load_metadata(csv)

    def test_missing_column_rejected(self, tmp_path):
        csv = tmp_path / "missing.csv"
        csv.write_text("filename,fold,target\na.wav,1,0\n")
        with pytest.raises(DataError, match="category"):
            load_metadata(csv)

    def test_fold_out_of_range(self, tmp_path):
        csv = tmp_path / "fold.csv"
        csv.write_text("filename,fold,target,category\na.wav,6,0,x\n")
        with pytest.raises(DataError, match="fold 6"):
            load_metadata(csv)

    def test_non_contiguous_classes(self, tmp_path):
        csv = tmp_path / "gap.csv"
        csv.write_text("filename,fold,target,category\na.wav,1,0,x\nb.wav,2,2,y\n")
        with pytest.raises(DataError, match="contiguous"):
            load_metadata(csv)


class TestCvSplits:
    def test_esc50_split_sizes(self, tmp_path):
        csv = tmp_path / "esc50.csv"
        write_esc_style_csv(csv, 40, 50)
        splits = make_cv_splits(load_metadata(csv))
        assert len(splits) == 5
        for train_entries, test_entries in splits:
            assert len(train_entries) == 1600
            assert len(test_entries) == 400

    def test_each_entry_tested_once(self, tmp_path):
        csv = tmp_path / "small.csv"
        write_esc_style_csv(csv, 10, 3)
        index = load_metadata(csv)
        splits = make_cv_splits(index)
        seen = []
        for _, test_entries in splits:
            seen.extend(e.filename for e in test_entries)
        assert sorted(seen) == sorted(e.filename for e in index.entries)

    def test_partition_is_disjoint(self, tmp_path):
        csv = tmp_path / "small.csv"
        write_esc_style_csv(csv, 10, 3)
        for train_entries, test_entries in make_cv_splits(load_metadata(csv)):
            assert not {e.filename for e in train_entries} & {e.filename for e in test_entries}

    def test_empty_fold_rejected(self):
        index = DatasetIndex([ClipEntry("a.wav", 1, 0, "x")], 1, ".")
        with pytest.raises(DataError, match="fold 2"):
            make_cv_splits(index)


class TestSynthDataset:
    def test_regeneration_is_bit_exact(self, tmp_path):
        spec = SynthSpec(n_classes=4, clips_per_class=2, seconds=1.0)
        a = synth_dataset(spec, seed=7, out_dir=tmp_path / "a")
        b = synth_dataset(spec, seed=7, out_dir=tmp_path / "b")
        assert [e.filename for e in a.entries] == [e.filename for e in b.entries]
        for e in a.entries:
            bytes_a = open(a.path_of(e), "rb").read()
            bytes_b = open(os.path.join(tmp_path / "b", "audio", e.filename), "rb").read()
            assert bytes_a == bytes_b

    def test_round_robin_folds(self, tmp_path):
        spec = SynthSpec(n_classes=2, clips_per_class=10, seconds=1.0)
        index = synth_dataset(spec, seed=1, out_dir=tmp_path)
        for e in index.entries:
            clip_no = int(e.filename.rsplit("_", 1)[1].split(".")[0])
            assert e.fold == (clip_no % 5) + 1

    def test_vocabulary_limit(self, tmp_path):
        with pytest.raises(ConfigError, match="vocabulary"):
            synth_dataset(SynthSpec(n_classes=9), seed=1, out_dir=tmp_path)

    def test_pure_tone_energy_concentrated(self, tmp_path):
        spec = SynthSpec(n_classes=1, clips_per_class=3)
        index = synth_dataset(spec, seed=3, out_dir=tmp_path)
        for e in index.entries:
            feat = featurize_file(index.path_of(e), FrontendParams())
            linear_power = np.exp(feat.data[0]).mean(axis=0)  # per mel band
            order = np.argsort(linear_power)[::-1]
            top3 = np.sort(order[:3])
            assert top3[2] - top3[0] <= 2, "top-3 bands not adjacent"
            assert linear_power[order[:3]].sum() / linear_power.sum() > 0.95

    def test_silence_click_mostly_floor(self, tmp_path):
        spec = SynthSpec(n_classes=4, clips_per_class=1)
        index = synth_dataset(spec, seed=5, out_dir=tmp_path)
        click_entries = [e for e in index.entries if e.category == "silence_click"]
        assert click_entries
        floor = np.log(LOG_FLOOR_EPS)
        for e in click_entries:
            feat = featurize_file(index.path_of(e), FrontendParams())
            frame_peaks = feat.data[0].max(axis=1)
            quiet = (frame_peaks < floor + 1.0).mean()
            assert quiet > 0.9


class TestMixup:
    def test_lambda_one_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 1, 3, 3))
        y = one_hot(np.array([0, 1, 2, 3]), 4, np.float64)

        class ForcedRng:
            def beta(self, a, b):
                return 1.0

            def permutation(self, n):
                return np.arange(n)[::-1]

        mx, my, lam = mixup(x, y, 0.2, ForcedRng())
        assert lam == 1.0
        assert np.allclose(mx, x)
        assert np.allclose(my, y)

    def test_half_mix_of_two_classes(self):
        x = np.zeros((2, 1, 1, 1))
        y = one_hot(np.array([0, 1]), 2, np.float64)

        class HalfRng:
            def beta(self, a, b):
                return 0.5

            def permutation(self, n):
                return np.array([1, 0])

        _, my, _ = mixup(x, y, 0.2, HalfRng())
        assert np.allclose(my, [[0.5, 0.5], [0.5, 0.5]])

    def test_targets_sum_to_one_and_convex(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(8, 1, 4, 4))
        y = one_hot(rng.integers(0, 3, size=8), 3, np.float64)
        for _ in range(50):
            mx, my, lam = mixup(x, y, 0.2, rng)
            assert 0.0 <= lam <= 1.0
            assert np.abs(my.sum(axis=1) - 1.0).max() < 1e-9
            assert np.all(mx <= x.max() + 1e-12) and np.all(mx >= x.min() - 1e-12)

    def test_beta_mean_symmetry(self):
        rng = np.random.default_rng(2)
        draws = rng.beta(0.2, 0.2, size=100_000)
        assert abs(draws.mean() - 0.5) < 0.01


class TestLrSchedule:
    def test_paper_schedule_table(self):
        cfg = TrainConfig(epochs=60)
        assert lr_at(0, cfg) == pytest.approx(0.01)
        assert lr_at(19, cfg) == pytest.approx(0.01)
        assert lr_at(20, cfg) == pytest.approx(0.001)
        assert lr_at(39, cfg) == pytest.approx(0.001)
        assert lr_at(40, cfg) == pytest.approx(0.0001)
        assert lr_at(59, cfg) == pytest.approx(0.0001)

    def test_epoch_out_of_range(self):
        cfg = TrainConfig(epochs=60)
        with pytest.raises(ContractError):
            lr_at(60, cfg)
        with pytest.raises(ContractError):
            lr_at(-1, cfg)


class TestCheckpoints:
    def make_store(self, dtype=np.float32):
        store = ParamStore()
        rng = np.random.default_rng(3)
        store.add("a.weight", Tensor(rng.normal(size=(2, 3)).astype(dtype)))
        store.add("a.bias", Tensor(rng.normal(size=3).astype(dtype)))
        store.add("b.weight", Tensor(rng.normal(size=(4, 2, 3, 3)).astype(dtype)))
        return store

    def test_round_trip_bit_exact(self, tmp_path):
        store = self.make_store()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, store)
        params = load_checkpoint(path)
        assert list(params) == store.names()
        for name, value in params.items():
            assert np.array_equal(value, store[name].data)

    def test_restore_into_store(self, tmp_path):
        store = self.make_store()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, store)
        other = self.make_store()
        other["a.weight"].data[:] = 0.0
        restore_into(other, load_checkpoint(path))
        assert np.array_equal(other["a.weight"].data, store["a.weight"].data)

    def test_corrupted_header_rejected(self, tmp_path):
        store = self.make_store()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, store)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(DataError, match="magic"):
            load_checkpoint(path)

    def test_truncation_rejected(self, tmp_path):
        store = self.make_store()
        path = tmp_path / "m.ckpt"
        save_checkpoint(path, store)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_tiny_checkpoint_under_5mb(self, tmp_path):
        model = build_model("fpam", "tiny", 4, seed=0)
        path = tmp_path / "tiny.ckpt"
        save_checkpoint(path, model.store)
        assert os.path.getsize(path) < 5 * 2**20


@pytest.fixture(scope="module")
def tiny_synth(tmp_path_factory):
    """1-second 3-class set so the training smoke tests stay quick."""
    root = tmp_path_factory.mktemp("synth")
    spec = SynthSpec(n_classes=3, clips_per_class=10, seconds=1.0)
    index = synth_dataset(spec, seed=11, out_dir=root)
    params = FrontendParams(seconds=1.0)
    featurize_index(index, params, root / "features")
    return index, str(root / "features")


class TestTraining:
    def test_deterministic_reports(self, tiny_synth):
        index, cache = tiny_synth
        cfg = TrainConfig(preset="tiny", epochs=2, batch_size=8, seed=3, folds=(1,))
        r1, _ = train(cfg, index, cache)
        r2, _ = train(cfg, index, cache)
        for f1, f2 in zip(r1.folds, r2.folds):
            for s1, s2 in zip(f1.epochs, f2.epochs):
                assert s1 == s2
            assert np.array_equal(f1.confusion, f2.confusion)

    def test_loss_decreases(self, tiny_synth):
        index, cache = tiny_synth
        cfg = TrainConfig(preset="tiny", epochs=8, batch_size=8, lr0=0.003,
                          lr_decay_every=10, seed=3, folds=(1,))
        report, _ = train(cfg, index, cache)
        stats = report.folds[0].epochs
        assert stats[-1].train_loss < stats[0].train_loss

    def test_checkpoints_written(self, tiny_synth, tmp_path):
        index, cache = tiny_synth
        cfg = TrainConfig(preset="tiny", epochs=2, batch_size=8, seed=4, folds=(2,))
        train(cfg, index, cache, tmp_path)
        assert (tmp_path / "fold2" / "best.ckpt").exists()
        assert (tmp_path / "fold2" / "final.ckpt").exists()

    def test_mixup_arm_trains(self, tiny_synth):
        index, cache = tiny_synth
        cfg = TrainConfig(preset="tiny", epochs=2, batch_size=8, seed=5, folds=(1,),
                          mixup_alpha=0.2)
        report, _ = train(cfg, index, cache)
        assert len(report.folds) == 1


class TestEvaluate:
    def test_perfect_predictor_diag(self):
        class Oracle:
            def __call__(self, xb):
                n = xb.dims[0]
                logits = np.zeros((n, 3))
                logits[np.arange(n), self.targets[self.pos : self.pos + n]] = 5.0
                self.pos += n
                return Tensor(logits)

        model = Oracle()
        model.targets = np.array([0, 1, 2, 1, 0, 2])
        model.pos = 0
        features = np.zeros((6, 1, 4, 4))
        acc, confusion, _ = evaluate(model, features, model.targets, 3, batch_size=2)
        assert acc == 1.0
        assert np.array_equal(confusion, np.diag([2, 2, 2]))

    def test_row_sums_match_class_counts(self, tiny_synth):
        index, cache = tiny_synth
        with precision("f32"):
            model = build_model("fpam", "tiny", index.n_classes, seed=0)
            entries = [e for e in index.entries if e.fold == 1]
            x = load_feature_matrix(index, entries, cache)
            y = np.array([e.target for e in entries])
            _, confusion, _ = evaluate(model, x, y, index.n_classes)
        for target in range(index.n_classes):
            assert confusion[target].sum() == (y == target).sum()

    def test_uniform_random_predictor_near_chance(self):
        rng = np.random.default_rng(6)

        class RandomModel:
            def __call__(self, xb):
                return Tensor(rng.normal(size=(xb.dims[0], 10)))

        targets = np.repeat(np.arange(10), 40)
        acc, _, _ = evaluate(RandomModel(), np.zeros((400, 1, 2, 2)), targets, 10)
        assert abs(acc - 0.1) < 0.05

    def test_empty_split_rejected(self):
        with pytest.raises(ContractError):
            evaluate(lambda xb: Tensor(np.zeros((0, 2))), np.zeros((0, 1, 2, 2)), np.array([]), 2)


class TestFeaturizeCache:
    def test_cache_hit_skips_recompute(self, tmp_path):
        spec = SynthSpec(n_classes=2, clips_per_class=2, seconds=1.0)
        index = synth_dataset(spec, seed=9, out_dir=tmp_path)
        params = FrontendParams(seconds=1.0)
        s1 = featurize_index(index, params, tmp_path / "features")
        assert s1.computed == 4 and s1.skipped == 0
        s2 = featurize_index(index, params, tmp_path / "features")
        assert s2.computed == 0 and s2.skipped == 4
        assert s1.total_frames == s2.total_frames

    def test_param_change_invalidates(self, tmp_path):
        spec = SynthSpec(n_classes=1, clips_per_class=1, seconds=1.0)
        index = synth_dataset(spec, seed=9, out_dir=tmp_path)
        featurize_index(index, FrontendParams(seconds=1.0), tmp_path / "features")
        s = featurize_index(index, FrontendParams(seconds=1.0, n_mels=32), tmp_path / "features")
        assert s.computed == 1

    def test_threaded_matches_sequential(self, tmp_path):
        spec = SynthSpec(n_classes=2, clips_per_class=3, seconds=1.0)
        index = synth_dataset(spec, seed=10, out_dir=tmp_path)
        params = FrontendParams(seconds=1.0)
        featurize_index(index, params, tmp_path / "seq", threads=0)
        featurize_index(index, params, tmp_path / "par", threads=4)
        for e in index.entries:
            stem = e.filename.replace(".wav", ".fpaf")
            a = (tmp_path / "seq" / stem).read_bytes()
            b = (tmp_path / "par" / stem).read_bytes()
            assert a == b
        assert (tmp_path / "seq" / "manifest.txt").read_text() == (
            tmp_path / "par" / "manifest.txt"
        ).read_text()
