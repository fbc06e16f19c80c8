"""Epoch the continuous .mat recordings and emit a portable trial bundle.

Sources are the per-subject .mat files distributed at
http://www.bnci-horizon-2020.eu/database/data-sets (datasets 001-2014 and
004-2014): each file holds ``data``, a cell array of session/run structs
with fields ``X`` (samples x channels, EEG first then 3 EOG), ``trial``
(1-based trial start indices), ``y`` (1-based labels) and ``fs``.

Epoching is cue-relative.  The cue appears a fixed time after the recorded
trial start (2 s for the 22-channel sets, 3 s for the 3-channel set); the
default epoch is cue onset to cue onset + 3 s, both ends adjustable.  All
trials are kept, including those the competition marked as artifacts; NaN
samples in the continuous signals are zeroed and counted in the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import loadmat

BUNDLE_FORMAT_VERSION = 1

MI1_CHANNELS = ["Fz", "FC3", "FC1", "FCz", "FC2", "FC4", "C5", "C3", "C1", "Cz",
                "C2", "C4", "C6", "CP3", "CP1", "CPz", "CP2", "CP4", "P1", "Pz",
                "P2", "POz"]
MI3_CHANNELS = ["C3", "Cz", "C4"]


class ConversionError(Exception):
    """Unreadable, incomplete or malformed source recordings."""


@dataclass(frozen=True)
class DatasetInfo:
    """Layout constants for one public dataset."""

    file_prefix: str            # "A" or "B"
    n_subjects: int
    eeg_channels: list[str]
    n_extra_channels: int       # trailing EOG columns to drop
    n_classes: int
    class_names: list[str]
    keep_labels: tuple[int, ...] | None   # 1-based labels to keep (None: all)
    cue_offset_s: float         # cue onset relative to the recorded trial start
    expected_train: int
    expected_test: int


DATASETS: dict[str, DatasetInfo] = {
    "mi1": DatasetInfo(file_prefix="A", n_subjects=9, eeg_channels=MI1_CHANNELS,
                       n_extra_channels=3, n_classes=4,
                       class_names=["left_hand", "right_hand", "feet", "tongue"],
                       keep_labels=None, cue_offset_s=2.0,
                       expected_train=288, expected_test=288),
    "mi2": DatasetInfo(file_prefix="A", n_subjects=9, eeg_channels=MI1_CHANNELS,
                       n_extra_channels=3, n_classes=2,
                       class_names=["left_hand", "right_hand"],
                       keep_labels=(1, 2), cue_offset_s=2.0,
                       expected_train=144, expected_test=144),
    "mi3": DatasetInfo(file_prefix="B", n_subjects=9, eeg_channels=MI3_CHANNELS,
                       n_extra_channels=3, n_classes=2,
                       class_names=["left_hand", "right_hand"],
                       keep_labels=None, cue_offset_s=3.0,
                       expected_train=400, expected_test=320),
}


@dataclass
class ConversionSpec:
    """What to convert and how to epoch it."""

    dataset: str                # "mi1" | "mi2" | "mi3"
    src: Path
    out: Path
    epoch_start_s: float = 0.0  # relative to cue onset
    epoch_len_s: float = 3.0
    subjects: list[int] | None = None   # 1-based subject numbers (None: all)

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ConversionError(
                f"unknown dataset {self.dataset!r}; expected one of {sorted(DATASETS)}"
            )
        if self.epoch_len_s <= 0:
            raise ConversionError(f"epoch length must be positive, got {self.epoch_len_s}")
        self.src = Path(self.src)
        self.out = Path(self.out)

    @property
    def info(self) -> DatasetInfo:
        return DATASETS[self.dataset]


@dataclass
class _SplitData:
    trials: np.ndarray | None = None     # (n_trials, C, S) float32
    labels: list[int] = field(default_factory=list)
    nan_zeroed: int = 0


def _load_runs(path: Path):
    """Return the list of run/session structs inside one .mat file."""
    if not path.is_file():
        raise ConversionError(f"missing session file: {path}")
    try:
        mat = loadmat(path, squeeze_me=True, struct_as_record=False)
    except Exception as exc:
        raise ConversionError(f"unreadable source file {path}: {exc}") from exc
    if "data" not in mat:
        raise ConversionError(f"source file {path} has no 'data' variable")
    data = mat["data"]
    runs = np.atleast_1d(data).ravel().tolist()
    if not runs:
        raise ConversionError(f"source file {path} contains no runs")
    return runs


def _run_field(run, name, path: Path):
    value = getattr(run, name, None)
    if value is None:
        raise ConversionError(f"source file {path}: run lacks field {name!r}")
    return value


def _epoch_run(run, spec: ConversionSpec, path: Path, split: _SplitData,
               fs_seen: list[float]):
    info = spec.info
    x = np.asarray(_run_field(run, "X", path), dtype=np.float64)
    if x.ndim != 2:
        raise ConversionError(f"source file {path}: X must be 2-D, got {x.shape}")
    expected_cols = len(info.eeg_channels) + info.n_extra_channels
    if x.shape[1] != expected_cols:
        raise ConversionError(
            f"source file {path}: expected {expected_cols} channels "
            f"({len(info.eeg_channels)} EEG + {info.n_extra_channels} EOG), "
            f"got {x.shape[1]}"
        )
    fs = float(np.asarray(_run_field(run, "fs", path)).ravel()[0])
    if fs_seen and fs != fs_seen[0]:
        raise ConversionError(
            f"source file {path}: sampling rate {fs} differs from {fs_seen[0]}"
        )
    fs_seen.append(fs)

    starts = np.atleast_1d(np.asarray(_run_field(run, "trial", path))).astype(int)
    labels = np.atleast_1d(np.asarray(_run_field(run, "y", path))).astype(int)
    if starts.size == 0:
        return  # EOG-calibration runs carry no trials
    if starts.shape != labels.shape:
        raise ConversionError(
            f"source file {path}: {starts.size} trial markers vs {labels.size} labels"
        )

    offset = int(round((info.cue_offset_s + spec.epoch_start_s) * fs))
    length = int(round(spec.epoch_len_s * fs))
    n_eeg = len(info.eeg_channels)
    epochs, kept_labels, nan_zeroed = [], [], 0
    for start1, label in zip(starts, labels):
        if info.keep_labels is not None and label not in info.keep_labels:
            continue
        lo = (start1 - 1) + offset
        hi = lo + length
        if lo < 0 or hi > x.shape[0]:
            raise ConversionError(
                f"truncated source file {path}: epoch [{lo}, {hi}) exceeds "
                f"{x.shape[0]} recorded samples"
            )
        epoch = x[lo:hi, :n_eeg].T.copy()
        bad = ~np.isfinite(epoch)
        if bad.any():
            nan_zeroed += int(bad.sum())
            epoch[bad] = 0.0
        epochs.append(epoch.astype(np.float32))
        kept_labels.append(int(label) - 1 if info.keep_labels is None
                           else info.keep_labels.index(int(label)))

    if not epochs:
        return
    block = np.stack(epochs)
    split.trials = block if split.trials is None else np.concatenate(
        [split.trials, block])
    split.labels.extend(kept_labels)
    split.nan_zeroed += nan_zeroed


def _convert_subject(spec: ConversionSpec, subject: int, fs_seen: list[float]):
    info = spec.info
    splits = {}
    for split_name, suffix in (("train", "T"), ("test", "E")):
        path = spec.src / f"{info.file_prefix}{subject:02d}{suffix}.mat"
        split = _SplitData()
        for run in _load_runs(path):
            _epoch_run(run, spec, path, split, fs_seen)
        if split.trials is None:
            raise ConversionError(f"source file {path} yielded no trials")
        splits[split_name] = split
    return splits


def _write_payload(path: Path, trials: np.ndarray):
    np.ascontiguousarray(trials, dtype="<f4").tofile(path)


def convert(spec: ConversionSpec) -> Path:
    """Convert one dataset into a bundle directory; returns the output path.

    The emitted directory follows the bundle contract exactly (manifest plus
    little-endian binary32 payloads, trial-major / channel-major / sample).
    A count mismatch against the published dataset statistics is reported as
    a warning in the manifest, not an error, so partial downloads remain
    convertible.
    """
    info = spec.info
    subjects = spec.subjects or list(range(1, info.n_subjects + 1))
    spec.out.mkdir(parents=True, exist_ok=True)

    fs_seen: list[float] = []
    manifest_subjects = []
    warnings = []
    total_nan = 0
    for subject in subjects:
        sid = f"{info.file_prefix}{subject:02d}"
        splits = _convert_subject(spec, subject, fs_seen)
        entry = {"id": sid}
        for split_name, split in splits.items():
            fname = f"{sid}_{split_name}.f32"
            _write_payload(spec.out / fname, split.trials)
            entry[split_name] = {
                "file": fname,
                "n_trials": int(split.trials.shape[0]),
                "n_samples": int(split.trials.shape[2]),
                "labels": split.labels,
            }
            total_nan += split.nan_zeroed
            expected = (info.expected_train if split_name == "train"
                        else info.expected_test)
            if split.trials.shape[0] != expected:
                warnings.append(
                    f"{sid} {split_name}: {split.trials.shape[0]} trials, "
                    f"published statistics say {expected}"
                )
        manifest_subjects.append(entry)

    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "fs": fs_seen[0],
        "n_channels": len(info.eeg_channels),
        "n_classes": info.n_classes,
        "channel_names": info.eeg_channels,
        "subjects": manifest_subjects,
        "class_names": info.class_names,
        "conversion": {
            "dataset": spec.dataset,
            "cue_offset_s": info.cue_offset_s,
            "epoch_start_s": spec.epoch_start_s,
            "epoch_len_s": spec.epoch_len_s,
            "artifact_trials_kept": True,
            "nan_samples_zeroed": total_nan,
            "count_warnings": warnings,
        },
    }
    (spec.out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return spec.out
