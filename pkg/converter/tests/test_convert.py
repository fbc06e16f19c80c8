import json

import numpy as np
import pytest

from frdw import load_bundle, write_bundle
from mi_convert import ConversionError, ConversionSpec, convert
from mi_convert.cli import main

from conftest import FS, make_dataset, make_run, trial_value, write_session


class TestMiniMi1:
    def test_counts_channels_and_validation(self, mini_mi1, tmp_path):
        src, _ = mini_mi1
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi1", src=src, out=out, subjects=[1, 2]))
        bundle = load_bundle(out)
        assert len(bundle.subjects) == 2
        assert bundle.n_channels == 22
        assert bundle.n_classes == 4
        assert bundle.fs == FS
        for sub in bundle.subjects:
            assert len(sub.train_trials) == 12
            assert len(sub.test_trials) == 12
            assert all(t.n_samples == 750 for t in sub.train_trials)

    def test_epoch_alignment_and_labels(self, mini_mi1, tmp_path):
        src, expected = mini_mi1
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi1", src=src, out=out, subjects=[1, 2]))
        bundle = load_bundle(out)
        g = 0
        for sub in bundle.subjects:
            for split, key in (("train", "T"), ("test", "E")):
                trials = sub.train_trials if split == "train" else sub.test_trials
                labels_1based = expected[f"{sub.id}{key}"]
                for t, label1 in zip(trials, labels_1based):
                    assert t.label == label1 - 1
                    # every sample of every channel carries the coded constant
                    for c in (0, 7, 21):
                        want = trial_value(label1, c, g)
                        got = np.float64(np.float32(want))  # binary32 payload
                        assert np.all(t.data[c] == got)
                    g += 1

    def test_count_warnings_recorded(self, mini_mi1, tmp_path):
        src, _ = mini_mi1
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi1", src=src, out=out, subjects=[1, 2]))
        manifest = json.loads((out / "manifest.json").read_text())
        conv = manifest["conversion"]
        assert conv["artifact_trials_kept"] is True
        assert any("published statistics" in w for w in conv["count_warnings"])

    def test_epoch_window_override(self, mini_mi1, tmp_path):
        src, _ = mini_mi1
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi1", src=src, out=out,
                               epoch_start_s=0.5, epoch_len_s=1.0,
                               subjects=[1, 2]))
        bundle = load_bundle(out)
        assert bundle.subjects[0].train_trials[0].n_samples == 250


class TestMi2Remap:
    def test_keeps_left_right_and_remaps(self, mini_mi1, tmp_path):
        src, expected = mini_mi1
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi2", src=src, out=out, subjects=[1, 2]))
        bundle = load_bundle(out)
        assert bundle.n_classes == 2
        for sub in bundle.subjects:
            want = [l - 1 for l in expected[f"{sub.id}T"] if l in (1, 2)]
            assert [t.label for t in sub.train_trials] == want
            assert 0 < len(want) < len(expected[f"{sub.id}T"])


class TestMi3:
    def test_session_structure(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        # 3 training sessions (2 x 12 + 16 trials) and 2 test sessions (16 each)
        for subject in (1, 2):
            g = 0
            t_runs, e_runs = [], []
            for count in (12, 12, 16):
                labels = [(i % 2) + 1 for i in range(count)]
                t_runs.append(make_run(count, labels, 6, 3.0, 3.0, g))
                g += count
            for count in (16, 16):
                labels = [(i % 2) + 1 for i in range(count)]
                e_runs.append(make_run(count, labels, 6, 3.0, 3.0, g))
                g += count
            write_session(src / f"B{subject:02d}T.mat", t_runs)
            write_session(src / f"B{subject:02d}E.mat", e_runs)
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi3", src=src, out=out, subjects=[1, 2]))
        bundle = load_bundle(out)
        assert bundle.n_channels == 3
        assert bundle.channel_names == ["C3", "Cz", "C4"]
        assert len(bundle.subjects[0].train_trials) == 40
        assert len(bundle.subjects[0].test_trials) == 32
        assert {t.label for t in bundle.subjects[0].train_trials} == {0, 1}


class TestErrors:
    def test_missing_session_file(self, mini_mi1, tmp_path):
        src, _ = mini_mi1
        (src / "A02E.mat").unlink()
        with pytest.raises(ConversionError, match="A02E.mat"):
            convert(ConversionSpec(dataset="mi1", src=src, out=tmp_path / "b",
                                   subjects=[1, 2]))

    def test_truncated_file_named(self, mini_mi1, tmp_path):
        src, _ = mini_mi1
        target = src / "A01T.mat"
        target.write_bytes(target.read_bytes()[:200])
        with pytest.raises(ConversionError, match="A01T.mat"):
            convert(ConversionSpec(dataset="mi1", src=src, out=tmp_path / "b",
                                   subjects=[1, 2]))

    def test_epoch_past_recording_end_named(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        run = make_run(2, [1, 2], 25, 2.0, 3.0, 0)
        run["X"] = run["X"][:1500]  # second epoch now exceeds the recording
        for suffix in ("T", "E"):
            write_session(src / f"A01{suffix}.mat", [run])
        with pytest.raises(ConversionError, match="truncated source file"):
            convert(ConversionSpec(dataset="mi1", src=src, out=tmp_path / "b",
                                   subjects=[1]))

    def test_unexpected_channel_count(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        run = make_run(2, [1, 2], 20, 2.0, 3.0, 0)
        for suffix in ("T", "E"):
            write_session(src / f"A01{suffix}.mat", [run])
        with pytest.raises(ConversionError, match="channels"):
            convert(ConversionSpec(dataset="mi1", src=src, out=tmp_path / "b",
                                   subjects=[1]))

    def test_unknown_dataset(self, tmp_path):
        with pytest.raises(ConversionError, match="unknown dataset"):
            ConversionSpec(dataset="mi9", src=tmp_path, out=tmp_path)


class TestNanHandling:
    def test_nans_zeroed_and_counted(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        run = make_run(2, [1, 2], 25, 2.0, 3.0, 0)
        cue0 = int(round(2.0 * FS))
        run["X"][cue0 + 5:cue0 + 8, 0] = np.nan  # inside the first epoch
        for suffix in ("T", "E"):
            write_session(src / f"A01{suffix}.mat", [run])
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi1", src=src, out=out, subjects=[1]))
        bundle = load_bundle(out)  # validator enforces finiteness
        assert bundle.subjects[0].train_trials[0].data[0, 5] == 0.0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["conversion"]["nan_samples_zeroed"] == 6  # 3 per split


class TestCli:
    def test_happy_path(self, mini_mi1, tmp_path, capsys):
        src, _ = mini_mi1
        out = tmp_path / "bundle"
        rc = main(["--dataset", "mi1", "--src", str(src), "--out", str(out),
                   "--subjects", "1", "2"])
        assert rc == 0
        assert (out / "manifest.json").is_file()

    def test_error_exit_code(self, tmp_path):
        rc = main(["--dataset", "mi1", "--src", str(tmp_path), "--out",
                   str(tmp_path / "b")])
        assert rc == 2


@pytest.mark.slow
class TestAcceptanceMi1Scale:
    def test_full_table_scale_bundle(self, tmp_path):
        """9 subjects, 22 channels, 288/288 trials, 4 classes; loader round-trip."""
        src = tmp_path / "src"
        make_dataset(src, prefix="A", n_subjects=9, n_channels=25,
                     cue_offset_s=2.0, runs_per_session=6, trials_per_run=48,
                     n_classes=4)
        out = tmp_path / "bundle"
        convert(ConversionSpec(dataset="mi1", src=src, out=out))
        bundle = load_bundle(out)
        ok = (len(bundle.subjects) == 9 and bundle.n_channels == 22
              and bundle.n_classes == 4
              and all(len(s.train_trials) == 288 and len(s.test_trials) == 288
                      for s in bundle.subjects))
        manifest = json.loads((out / "manifest.json").read_text())
        ok &= manifest["conversion"]["count_warnings"] == []
        # full loader round-trip: rewrite and compare payload bytes
        rt = tmp_path / "rt"
        write_bundle(bundle, rt)
        for f in sorted(out.glob("*.f32")):
            ok &= (rt / f.name).read_bytes() == f.read_bytes()
        tag = "PASS" if ok else "FAIL"
        print(f"[{tag}] converter table-scale bundle — 9 subjects, 22 channels, "
              f"288/288 trials, 4 classes, loader round-trip bit-exact")
        assert ok
