"""Per-trial detrending and Butterworth bandpass filtering.

The bandpass is realized internally as cascaded second-order sections (a
5th-order prototype becomes a 10th-order bandpass, ill-conditioned in direct
form at fs = 250 Hz); the equivalent transfer-function coefficients are
exposed for inspection.  Offline training data is filtered zero-phase;
streaming application is causal and chunk-incremental, with state carried
in :class:`FilterState` and reset between trials.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from .bundle import Trial
from .errors import ConfigError, StreamError

CAUSAL = "causal"
ZERO_PHASE = "zero-phase"


@dataclass(frozen=True)
class FilterCoeffs:
    """Designed IIR bandpass: SOS cascade plus equivalent (b, a) form."""

    sos: np.ndarray      # (n_sections, 6)
    b: np.ndarray        # numerator, len 2*order + 1
    a: np.ndarray        # denominator, a[0] == 1
    fs: float
    band: tuple[float, float]
    order: int

    @property
    def n_coeffs(self) -> int:
        return max(len(self.b), len(self.a))


@dataclass
class FilterState:
    """Per-stream delay-line memory for causal chunked filtering."""

    zi: np.ndarray       # (n_sections, n_channels, 2)
    n_channels: int

    def reset(self):
        self.zi[...] = 0.0


def detrend(trial: Trial) -> Trial:
    """Subtract each channel's least-squares straight-line fit.

    A single-sample channel is its own line, so the result is zero.
    """
    x = trial.data
    if x.shape[1] == 1:
        resid = np.zeros_like(x)
    else:
        n = x.shape[1]
        t = np.arange(n, dtype=np.float64)
        design = np.column_stack([t, np.ones(n)])
        coef, *_ = np.linalg.lstsq(design, x.T, rcond=None)
        resid = x - (design @ coef).T
    return Trial(data=resid, fs=trial.fs, label=trial.label)


def design_bandpass(order: int = 5, low: float = 8.0, high: float = 26.0,
                    fs: float = 250.0) -> FilterCoeffs:
    """Design a Butterworth bandpass (bilinear transform with pre-warping).

    ``order`` is the analog prototype order; the digital bandpass has twice
    that many poles.  Raises :class:`ConfigError` for band edges outside
    (0, fs/2).
    """
    if not (0.0 < low < high < fs / 2.0):
        raise ConfigError(f"band edges must satisfy 0 < {low} < {high} < fs/2 = {fs / 2}")
    sos = signal.butter(order, [low, high], btype="bandpass", fs=fs, output="sos")
    b, a = signal.sos2tf(sos)
    poles = np.abs(np.roots(a))
    if poles.size and poles.max() >= 1.0:
        raise ConfigError(f"designed filter is unstable (max |pole| = {poles.max():.6f})")
    return FilterCoeffs(sos=sos, b=b, a=a, fs=fs, band=(low, high), order=order)


def make_filter_state(coeffs: FilterCoeffs, n_channels: int) -> FilterState:
    """Fresh all-zero delay-line state for one trial stream."""
    zi = np.zeros((coeffs.sos.shape[0], n_channels, 2))
    return FilterState(zi=zi, n_channels=n_channels)


def apply_offline(coeffs: FilterCoeffs, trial: Trial, mode: str = ZERO_PHASE) -> Trial:
    """Filter a whole trial, either causally or forward-backward.

    Causal mode is a single forward pass from zero initial state; zero-phase
    runs forward and backward (squared magnitude response, no phase shift)
    and needs more than ``3 * n_coeffs`` samples of padding room.
    """
    x = trial.data
    if mode == CAUSAL:
        y = signal.sosfilt(coeffs.sos, x, axis=-1)
    elif mode == ZERO_PHASE:
        padlen = 3 * coeffs.n_coeffs
        if x.shape[1] <= padlen:
            raise ConfigError(
                f"zero-phase filtering needs > {padlen} samples, trial has {x.shape[1]}"
            )
        y = signal.sosfiltfilt(coeffs.sos, x, axis=-1, padlen=padlen)
    else:
        raise ConfigError(f"unknown filter mode {mode!r}")
    return Trial(data=np.asarray(y, dtype=np.float64), fs=trial.fs, label=trial.label)


def apply_streaming(coeffs: FilterCoeffs, state: FilterState, chunk: np.ndarray):
    """Causally filter one chunk, carrying delay-line state forward.

    Concatenating the outputs over any chunking of a trial reproduces the
    one-shot causal output exactly.  Returns ``(filtered_chunk, state)``.
    """
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.ndim != 2 or chunk.shape[0] != state.n_channels:
        raise StreamError(
            f"chunk shape {chunk.shape} does not match {state.n_channels} stream channels"
        )
    y, zi = signal.sosfilt(coeffs.sos, chunk, axis=-1, zi=state.zi)
    state.zi = zi
    return y, state
