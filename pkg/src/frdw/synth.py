"""Seeded synthetic bundles with class-dependent oscillatory variance.

Each class drives a different channel group with a strong in-band (12 Hz)
oscillation on top of broadband noise, the classic spatial-variance contrast
that CSP is built to pick up.  Pseudo-subjects differ by per-channel gain
jitter so cross-subject transfer is imperfect but alignable.
"""

from __future__ import annotations

import numpy as np

from .bundle import DatasetBundle, SubjectData, Trial


def _class_gains(n_classes: int, n_channels: int, strong: float, weak: float,
                 group_size: int) -> np.ndarray:
    gains = np.full((n_classes, n_channels), weak)
    for m in range(n_classes):
        lo = (m * group_size) % max(1, n_channels - group_size + 1)
        gains[m, lo:lo + group_size] = strong
    return gains


def make_synthetic_bundle(n_subjects: int = 9, n_classes: int = 2,
                          n_channels: int = 22, fs: float = 250.0,
                          trial_len: int = 750, n_train: int = 40,
                          n_test: int = 30, seed: int = 0,
                          strong: float = 3.0, weak: float = 0.6,
                          noise: float = 0.5, osc_hz: float = 12.0,
                          subject_jitter: float = 0.15) -> DatasetBundle:
    """Build a labeled bundle of oscillatory trials, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    group = max(2, n_channels // (2 * n_classes))
    gains = _class_gains(n_classes, n_channels, strong, weak, group)
    t = np.arange(trial_len) / fs

    subjects = []
    for s in range(n_subjects):
        channel_gain = 1.0 + subject_jitter * rng.standard_normal(n_channels)

        def gen_trials(count):
            trials = []
            labels = np.tile(np.arange(n_classes), count // n_classes + 1)[:count]
            rng.shuffle(labels)
            for label in labels:
                phases = rng.uniform(0, 2 * np.pi, size=n_channels)
                amp = gains[label] * (1.0 + 0.1 * rng.standard_normal(n_channels))
                osc = amp[:, None] * np.sin(2 * np.pi * osc_hz * t[None, :]
                                            + phases[:, None])
                x = channel_gain[:, None] * osc + noise * rng.standard_normal(
                    (n_channels, trial_len))
                trials.append(Trial(data=x, fs=fs, label=int(label)))
            return trials

        subjects.append(SubjectData(id=f"S{s + 1:02d}",
                                    train_trials=gen_trials(n_train),
                                    test_trials=gen_trials(n_test)))

    names = [f"CH{i + 1}" for i in range(n_channels)]
    return DatasetBundle(subjects=subjects, n_classes=n_classes,
                         channel_names=names, fs=fs,
                         extra={"generator": "synthetic-oscillatory", "seed": seed})
