import numpy as np
import pytest
from scipy.io import savemat

FS = 250.0


def trial_value(label_1based, channel, global_index):
    """Deterministic epoch fill so tests can verify alignment exactly."""
    return float(label_1based) + 0.01 * channel + 1e-4 * global_index


def make_run(n_trials, labels, n_channels, cue_offset_s, epoch_end_s,
             global_start, gap_samples=50):
    """One continuous run: zeros everywhere except constant-coded epochs."""
    span = int(round((cue_offset_s + epoch_end_s) * FS)) + gap_samples
    x = np.zeros((n_trials * span + gap_samples, n_channels), dtype=np.float32)
    starts = []
    for t in range(n_trials):
        start0 = t * span
        starts.append(start0 + 1)  # 1-based trial marker
        cue0 = start0 + int(round(cue_offset_s * FS))
        cue_end = start0 + int(round((cue_offset_s + epoch_end_s) * FS))
        for c in range(n_channels):
            x[cue0:cue_end, c] = trial_value(labels[t], c, global_start + t)
    return {
        "X": x,
        "trial": np.array(starts, dtype=np.float64).reshape(-1, 1),
        "y": np.array(labels, dtype=np.float64).reshape(-1, 1),
        "fs": FS,
        "artifacts": np.zeros((n_trials, 1)),
    }


def empty_run(n_channels, samples=500):
    return {"X": np.zeros((samples, n_channels), dtype=np.float32),
            "trial": np.zeros((0, 1)), "y": np.zeros((0, 1)), "fs": FS}


def write_session(path, runs):
    data = np.empty((1, len(runs)), dtype=object)
    for i, run in enumerate(runs):
        data[0, i] = run
    savemat(path, {"data": data}, do_compression=True)


def make_dataset(src, *, prefix, n_subjects, n_channels, cue_offset_s,
                 runs_per_session, trials_per_run, n_classes,
                 epoch_end_s=3.0, with_empty_runs=True):
    """Write a full synthetic source tree; returns expected labels per file."""
    src.mkdir(parents=True, exist_ok=True)
    expected = {}
    g = 0
    for subject in range(1, n_subjects + 1):
        for suffix in ("T", "E"):
            runs = [empty_run(n_channels)] if with_empty_runs else []
            labels_all = []
            for r in range(runs_per_session):
                labels = [(i % n_classes) + 1 for i in range(trials_per_run)]
                runs.append(make_run(trials_per_run, labels, n_channels,
                                     cue_offset_s, epoch_end_s, g))
                labels_all.extend(labels)
                g += trials_per_run
            write_session(src / f"{prefix}{subject:02d}{suffix}.mat", runs)
            expected[f"{prefix}{subject:02d}{suffix}"] = labels_all
    return expected


@pytest.fixture()
def mini_mi1(tmp_path):
    """Two subjects, 2 task runs x 6 trials per session (25-channel layout)."""
    src = tmp_path / "src"
    expected = make_dataset(src, prefix="A", n_subjects=2, n_channels=25,
                            cue_offset_s=2.0, runs_per_session=2,
                            trials_per_run=6, n_classes=4)
    return src, expected
