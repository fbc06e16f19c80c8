"""Trial bundles: the portable on-disk dataset format and its loader.

A bundle is a directory containing ``manifest.json`` plus one raw payload
file per subject per split.  Payloads are IEEE 754 binary32, little-endian,
laid out trial-major, then channel-major, then sample
(``index = t*C*S + c*S + s``).  Labels are 0-based class indices; class
names live only in the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BundleError

FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class Trial:
    """One EEG epoch: ``data`` is channels x samples, ``label`` optional.

    Parameters
    ----------
    data : (C, S) array_like
        Real-valued samples, C >= 1 channels, S >= 1 samples, all finite.
    fs : float
        Sampling rate in Hz, > 0.
    label : int or None
        0-based class index, or None for unlabeled trials.
    """

    data: np.ndarray
    fs: float
    label: int | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise BundleError(f"trial data must be 2-D (C x S), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise BundleError(f"trial needs >= 1 channel and >= 1 sample, got {data.shape}")
        if not np.isfinite(data).all():
            raise BundleError("trial contains non-finite samples")
        if not (self.fs > 0):
            raise BundleError(f"sampling rate must be positive, got {self.fs}")
        if self.label is not None and self.label < 0:
            raise BundleError(f"label must be a 0-based class index, got {self.label}")
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass
class SubjectData:
    """Train/test trial lists for one recorded subject."""

    id: str
    train_trials: list[Trial]
    test_trials: list[Trial]

    def __post_init__(self):
        if not self.train_trials or not self.test_trials:
            raise BundleError(f"subject {self.id!r}: train and test lists must be non-empty")


@dataclass
class DatasetBundle:
    """A validated collection of subjects sharing channel set and rate."""

    subjects: list[SubjectData]
    n_classes: int
    channel_names: list[str]
    fs: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    def validate(self):
        if self.n_classes < 2:
            raise BundleError(f"need >= 2 classes, got {self.n_classes}")
        if not self.subjects:
            raise BundleError("bundle has no subjects")
        if not (self.fs > 0):
            raise BundleError(f"bundle fs must be positive, got {self.fs}")
        c = self.n_channels
        if c < 1:
            raise BundleError("bundle needs >= 1 channel name")
        n_samples = None
        for sub in self.subjects:
            for trial in sub.train_trials + sub.test_trials:
                if trial.n_channels != c:
                    raise BundleError(
                        f"subject {sub.id!r}: trial has {trial.n_channels} channels, "
                        f"bundle declares {c}"
                    )
                if trial.fs != self.fs:
                    raise BundleError(
                        f"subject {sub.id!r}: trial fs {trial.fs} != bundle fs {self.fs}"
                    )
                if n_samples is None:
                    n_samples = trial.n_samples
                elif trial.n_samples != n_samples:
                    raise BundleError(
                        f"subject {sub.id!r}: trial length {trial.n_samples} differs from "
                        f"{n_samples}; bundles require equal-length trials"
                    )
                if trial.label is not None and trial.label >= self.n_classes:
                    raise BundleError(
                        f"subject {sub.id!r}: label {trial.label} >= n_classes {self.n_classes}"
                    )


@dataclass(frozen=True)
class ValidationPolicy:
    """How to carve a validation set out of a subject's training trials.

    ``last_k_per_class`` keeps each class's last ``k`` trials (the final
    recording block); ``last_fraction`` holds out the last ``fraction`` of
    all training trials regardless of class.
    """

    kind: str  # "last_k_per_class" | "last_fraction"
    k: int = 0
    fraction: float = 0.0

    def __post_init__(self):
        if self.kind not in ("last_k_per_class", "last_fraction"):
            raise BundleError(f"unknown validation policy {self.kind!r}")
        if self.kind == "last_k_per_class" and self.k < 0:
            raise BundleError("k must be >= 0")
        if self.kind == "last_fraction" and not (0.0 <= self.fraction < 1.0):
            raise BundleError("fraction must be in [0, 1)")


def _reject_nonfinite(token):
    raise BundleError(f"manifest contains non-decimal number token {token!r}")


def _require(cond: bool, msg: str):
    if not cond:
        raise BundleError(msg)


def _as_int(value, name: str) -> int:
    # bool is an int subclass; the manifest must use plain decimal integers
    _require(isinstance(value, int) and not isinstance(value, bool), f"{name} must be an integer")
    return value


def load_bundle(path) -> DatasetBundle:
    """Load and fully validate a bundle directory.

    Raises :class:`BundleError` on a missing or corrupt manifest, dimension
    mismatch between manifest and payload, non-finite samples, or labels
    outside ``[0, n_classes)``.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise BundleError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(
            manifest_path.read_text(encoding="utf-8"), parse_constant=_reject_nonfinite
        )
    except json.JSONDecodeError as exc:
        raise BundleError(f"corrupt manifest {manifest_path}: {exc}") from exc

    _require(isinstance(manifest, dict), "manifest root must be a JSON object")
    version = _as_int(manifest.get("format_version"), "format_version")
    _require(version == FORMAT_VERSION, f"unsupported format_version {version}")
    fs = manifest.get("fs")
    _require(isinstance(fs, (int, float)) and not isinstance(fs, bool) and fs > 0,
             "fs must be a positive number")
    n_channels = _as_int(manifest.get("n_channels"), "n_channels")
    n_classes = _as_int(manifest.get("n_classes"), "n_classes")
    channel_names = manifest.get("channel_names")
    _require(
        isinstance(channel_names, list) and all(isinstance(n, str) for n in channel_names),
        "channel_names must be a list of strings",
    )
    _require(
        len(channel_names) == n_channels,
        f"channel_names has {len(channel_names)} entries, n_channels is {n_channels}",
    )
    subjects_meta = manifest.get("subjects")
    _require(isinstance(subjects_meta, list) and subjects_meta, "subjects must be a non-empty list")

    subjects = []
    for meta in subjects_meta:
        _require(isinstance(meta, dict) and isinstance(meta.get("id"), str),
                 "each subject entry needs a string id")
        splits = {}
        for split in ("train", "test"):
            info = meta.get(split)
            _require(isinstance(info, dict), f"subject {meta['id']!r}: missing {split} block")
            n_trials = _as_int(info.get("n_trials"), f"{split}.n_trials")
            n_samples = _as_int(info.get("n_samples"), f"{split}.n_samples")
            labels = info.get("labels")
            _require(isinstance(labels, list), f"{split}.labels must be a list")
            _require(len(labels) == n_trials,
                     f"subject {meta['id']!r}: {split} has {len(labels)} labels for "
                     f"{n_trials} trials")
            payload_path = root / str(info.get("file"))
            if not payload_path.is_file():
                raise BundleError(f"missing payload file: {payload_path}")
            expected = n_trials * n_channels * n_samples * 4
            actual = payload_path.stat().st_size
            if actual != expected:
                raise BundleError(
                    f"payload {payload_path.name}: {actual} bytes on disk, manifest implies "
                    f"{expected} (trials={n_trials}, channels={n_channels}, samples={n_samples})"
                )
            raw = np.fromfile(payload_path, dtype="<f4")
            data = raw.reshape(n_trials, n_channels, n_samples).astype(np.float64)
            if not np.isfinite(data).all():
                raise BundleError(f"payload {payload_path.name} contains non-finite samples")
            trials = []
            for t in range(n_trials):
                label = labels[t]
                if label is not None:
                    label = _as_int(label, f"{split}.labels[{t}]")
                    if not (0 <= label < n_classes):
                        raise BundleError(
                            f"subject {meta['id']!r}: {split} label {label} outside "
                            f"[0, {n_classes})"
                        )
                trials.append(Trial(data=data[t], fs=float(fs), label=label))
            splits[split] = trials
        subjects.append(SubjectData(id=meta["id"], train_trials=splits["train"],
                                    test_trials=splits["test"]))

    return DatasetBundle(
        subjects=subjects,
        n_classes=n_classes,
        channel_names=list(channel_names),
        fs=float(fs),
        extra={k: v for k, v in manifest.items()
               if k not in ("format_version", "fs", "n_channels", "n_classes",
                            "channel_names", "subjects")},
    )


def write_bundle(bundle: DatasetBundle, path) -> None:
    """Write ``bundle`` to a directory so that :func:`load_bundle` inverts it.

    Validates invariants before touching the filesystem; payload samples are
    cast to binary32.
    """
    bundle.validate()
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise BundleError(f"cannot create bundle directory {root}: {exc}") from exc

    subjects_meta = []
    payloads = []
    for sub in bundle.subjects:
        entry = {"id": sub.id}
        for split, trials in (("train", sub.train_trials), ("test", sub.test_trials)):
            fname = f"{sub.id}_{split}.f32"
            stacked = np.stack([t.data for t in trials])
            if not np.isfinite(stacked).all():
                # guards against post-construction mutation of trial arrays
                raise BundleError(
                    f"subject {sub.id!r} {split}: non-finite samples, refusing to write"
                )
            stacked = stacked.astype("<f4")
            payloads.append((root / fname, stacked))
            entry[split] = {
                "file": fname,
                "n_trials": len(trials),
                "n_samples": trials[0].n_samples,
                "labels": [t.label for t in trials],
            }
        subjects_meta.append(entry)

    manifest = {
        "format_version": FORMAT_VERSION,
        "fs": bundle.fs,
        "n_channels": bundle.n_channels,
        "n_classes": bundle.n_classes,
        "channel_names": bundle.channel_names,
        "subjects": subjects_meta,
    }
    manifest.update(bundle.extra)
    try:
        (root / MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        for fpath, stacked in payloads:
            stacked.tofile(fpath)
    except OSError as exc:
        raise BundleError(f"cannot write bundle to {root}: {exc}") from exc


def split_validation(subject: SubjectData, policy: ValidationPolicy):
    """Split a subject's training trials into (train, validation) lists.

    Both outputs preserve the original trial order; together they are exactly
    the original training list.
    """
    return split_trials(subject.train_trials, policy)


def split_trials(trials: list[Trial], policy: ValidationPolicy):
    """Policy split on a plain trial list (see :func:`split_validation`)."""
    n = len(trials)
    if policy.kind == "last_fraction":
        n_val = int(round(n * policy.fraction))
        return trials[: n - n_val], trials[n - n_val:]

    k = policy.k
    if k == 0:
        return list(trials), []
    val_idx = set()
    by_class: dict[int, list[int]] = {}
    for i, t in enumerate(trials):
        if t.label is None:
            raise BundleError("last-k-per-class split requires labeled trials")
        by_class.setdefault(t.label, []).append(i)
    for label, idxs in by_class.items():
        if len(idxs) < k:
            raise BundleError(
                f"class {label} has only {len(idxs)} trials, cannot hold out last {k}"
            )
        val_idx.update(idxs[-k:])
    train = [t for i, t in enumerate(trials) if i not in val_idx]
    val = [t for i, t in enumerate(trials) if i in val_idx]
    return train, val
