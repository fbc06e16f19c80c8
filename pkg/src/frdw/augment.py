"""Training-set augmentation by sliding windows.

Three schemes: ``none`` cuts non-overlapping windows of the training length,
``overlap`` slides windows of the training length by a fixed stride, and
``fr`` slides shorter windows that are tiled back up to the training length
by front-end replication.  Every produced window has exactly the target
length and inherits the source trial's label.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bundle import Trial
from .errors import ConfigError

SCHEMES = ("none", "overlap", "fr")


@dataclass(frozen=True)
class AugmentSpec:
    """Windowing scheme plus its geometry.

    ``fr_window`` defaults to ``ceil(0.7 * target_len)`` when left at 0.
    """

    scheme: str = "none"
    target_len: int = 750
    stride: int = 25
    fr_window: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown augmentation scheme {self.scheme!r}")
        if self.target_len < 1:
            raise ConfigError(f"target_len must be >= 1, got {self.target_len}")
        if not (0 < self.stride <= self.target_len):
            raise ConfigError(
                f"stride must be in (0, target_len={self.target_len}], got {self.stride}"
            )
        fr_window = self.fr_window or math.ceil(0.7 * self.target_len)
        if fr_window > self.target_len:
            raise ConfigError(
                f"fr_window {fr_window} exceeds target_len {self.target_len}"
            )
        if self.scheme == "fr" and fr_window < self.stride:
            raise ConfigError(
                f"fr scheme needs fr_window >= stride, got {fr_window} < {self.stride}"
            )
        object.__setattr__(self, "fr_window", fr_window)


def crop_to_length(trial: Trial, n: int) -> Trial:
    """First ``n`` samples of every channel; error if the trial is shorter."""
    if trial.n_samples < n:
        raise ConfigError(f"trial has {trial.n_samples} samples, cannot crop to {n}")
    return Trial(data=trial.data[:, :n].copy(), fs=trial.fs, label=trial.label)


def _window_offsets(total: int, window: int, stride: int) -> range:
    # floor((total - window) / stride) + 1 windows
    return range(0, total - window + 1, stride)


def _slice(trial: Trial, start: int, length: int) -> Trial:
    return Trial(data=trial.data[:, start:start + length].copy(),
                 fs=trial.fs, label=trial.label)


def augment_overlap(trial: Trial, spec: AugmentSpec) -> list[Trial]:
    """Stride-spaced windows of the full target length."""
    n = spec.target_len
    if trial.n_samples < n:
        raise ConfigError(f"trial has {trial.n_samples} samples, needs >= {n}")
    return [_slice(trial, off, n) for off in _window_offsets(trial.n_samples, n, spec.stride)]


def augment_fr(trial: Trial, spec: AugmentSpec) -> list[Trial]:
    """Stride-spaced short windows, each tiled up to the target length."""
    from .controller import front_end_replicate

    win = spec.fr_window
    if trial.n_samples < win:
        raise ConfigError(f"trial has {trial.n_samples} samples, needs >= {win}")
    out = []
    for off in _window_offsets(trial.n_samples, win, spec.stride):
        piece = trial.data[:, off:off + win]
        out.append(Trial(data=front_end_replicate(piece, spec.target_len),
                         fs=trial.fs, label=trial.label))
    return out


def augment_none(trial: Trial, spec: AugmentSpec) -> list[Trial]:
    """Non-overlapping windows of the target length (>= 1 per trial)."""
    n = spec.target_len
    if trial.n_samples < n:
        raise ConfigError(f"trial has {trial.n_samples} samples, needs >= {n}")
    return [_slice(trial, off, n) for off in _window_offsets(trial.n_samples, n, n)]


def apply_augmentation(trials: list[Trial], spec: AugmentSpec) -> list[Trial]:
    """Expand a trial list according to the configured scheme."""
    fn = {"none": augment_none, "overlap": augment_overlap, "fr": augment_fr}[spec.scheme]
    out = []
    for t in trials:
        out.extend(fn(t, spec))
    return out
