"""Euclidean alignment: reference covariance and whitening of trials.

The reference is the arithmetic mean of per-trial covariances X X^T; each
trial is aligned by the symmetric inverse square root of that reference, so
the aligned set's mean covariance is the identity.  The online accumulator
supports the cross-subject warm-up: covariances are summed trial by trial
and the reference is frozen once finalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import Trial
from .errors import PipelineError

# Relative ridge added before the eigendecomposition; rank-deficient warm-up
# sets would otherwise blow up the inverse square root.
RIDGE_SCALE = 1e-8


@dataclass
class EaState:
    """Running covariance accumulator plus the finalized reference."""

    n_channels: int
    sum_cov: np.ndarray = field(default=None)  # type: ignore[assignment]
    count: int = 0
    ref: np.ndarray | None = None
    ref_inv_sqrt: np.ndarray | None = None

    def __post_init__(self):
        if self.sum_cov is None:
            self.sum_cov = np.zeros((self.n_channels, self.n_channels))

    @property
    def finalized(self) -> bool:
        return self.ref_inv_sqrt is not None


def accumulate(state: EaState, trial: Trial) -> EaState:
    """Add one trial's covariance X X^T to the accumulator."""
    x = trial.data
    if x.shape[0] != state.n_channels:
        raise PipelineError(
            f"trial has {x.shape[0]} channels, accumulator expects {state.n_channels}"
        )
    cov = x @ x.T
    state.sum_cov = state.sum_cov + 0.5 * (cov + cov.T)  # keep exactly symmetric
    state.count += 1
    return state


def inv_sqrt_spd(mat: np.ndarray) -> np.ndarray:
    """Symmetric inverse square root Q diag(1/sqrt(l)) Q^T of an SPD matrix."""
    eigvals, eigvecs = np.linalg.eigh(mat)
    if eigvals.min() <= 0.0:
        raise PipelineError(
            f"matrix is not positive definite (min eigenvalue {eigvals.min():.3e})"
        )
    return (eigvecs * (1.0 / np.sqrt(eigvals))) @ eigvecs.T


def finalize(state: EaState) -> EaState:
    """Freeze the reference: mean covariance, ridge, then inverse sqrt.

    Deterministic and idempotent; recomputes from the raw sums each call.
    Raises :class:`PipelineError` when the accumulated covariance is not
    positive definite even after the ridge (e.g. all-zero data).
    """
    if state.count < 1:
        raise PipelineError("cannot finalize an empty alignment accumulator")
    ref = state.sum_cov / state.count
    c = state.n_channels
    ridge = RIDGE_SCALE * np.trace(ref) / c
    ref = ref + ridge * np.eye(c)
    state.ref = ref
    state.ref_inv_sqrt = inv_sqrt_spd(ref)
    return state


def align(trial: Trial, state: EaState) -> Trial:
    """Whiten one trial with the finalized reference: R^{-1/2} X."""
    if not state.finalized:
        raise PipelineError("alignment state not finalized; call finalize() first")
    return Trial(data=state.ref_inv_sqrt @ trial.data, fs=trial.fs, label=trial.label)


def reference_from_trials(trials, n_channels: int) -> EaState:
    """Build and finalize an alignment state over a full trial list."""
    state = EaState(n_channels=n_channels)
    for t in trials:
        accumulate(state, t)
    return finalize(state)
