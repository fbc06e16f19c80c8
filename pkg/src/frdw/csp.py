"""Common spatial patterns: binary and one-vs-rest fitting, log-variance features.

Binary CSP averages trace-normalized trial covariances per class and solves
the generalized eigenproblem ``S1 w = l (S1 + S2) w``; the returned filter
rows are eigenvectors from both spectral ends, ordered by descending
eigenvalue.  The eigenvectors are normalized against ``S1 + S2``, so
``W (S1 + S2) W^T = I`` on the selected rows.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .bundle import Trial
from .errors import PipelineError

BINARY = "binary"
OVR = "ovr"

# Relative ridge on the averaged class covariances; short replicated windows
# can be rank-deficient.
COV_RIDGE = 1e-9


@dataclass(frozen=True)
class CspModel:
    """Spatial filter bank: ``filters`` is K x C, rows are filters."""

    filters: np.ndarray
    n_classes: int
    layout: str                 # BINARY | OVR
    rows_per_class: int | None = None
    eigvals: np.ndarray | None = None   # per-row generalized eigenvalues

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    @property
    def n_channels(self) -> int:
        return self.filters.shape[1]

    def to_dict(self) -> dict:
        rows32 = np.ascontiguousarray(self.filters, dtype="<f4")
        return {
            "layout": self.layout,
            "n_classes": self.n_classes,
            "rows_per_class": self.rows_per_class,
            "shape": list(self.filters.shape),
            "filters_b32": base64.b64encode(rows32.tobytes()).decode("ascii"),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CspModel":
        shape = tuple(d["shape"])
        raw = base64.b64decode(d["filters_b32"])
        filters = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)
        return cls(filters=filters, n_classes=d["n_classes"], layout=d["layout"],
                   rows_per_class=d.get("rows_per_class"))


def _mean_normalized_cov(trials: list[Trial]) -> np.ndarray:
    c = trials[0].n_channels
    acc = np.zeros((c, c))
    for t in trials:
        cov = t.data @ t.data.T
        tr = np.trace(cov)
        if tr <= 0.0:
            raise PipelineError("trial covariance has non-positive trace (all-zero trial?)")
        acc += cov / tr
    mean = acc / len(trials)
    mean += COV_RIDGE * np.trace(mean) / c * np.eye(c)
    return 0.5 * (mean + mean.T)


def _fix_signs(rows: np.ndarray) -> np.ndarray:
    # determinism: make each row's largest-magnitude component positive
    out = rows.copy()
    for i in range(out.shape[0]):
        j = np.argmax(np.abs(out[i]))
        if out[i, j] < 0:
            out[i] = -out[i]
    return out


def fit_csp_binary(trials: list[Trial], labels, n_filters: int = 6) -> CspModel:
    """Fit binary CSP; keeps ``n_filters/2`` eigenvectors from each spectral end.

    Parameters
    ----------
    trials : list of Trial
        Training windows, all with the same channel count.
    labels : sequence of int
        Exactly two distinct class labels; the smaller one plays class 1 in
        the eigenproblem.
    n_filters : even int
        Number of filter rows, 2 <= n_filters <= n_channels (rows must be
        distinct eigenvectors for the whitening property to hold).
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) != 2:
        raise PipelineError(f"binary CSP needs exactly 2 classes, got {classes.tolist()}")
    c = trials[0].n_channels
    if n_filters % 2 != 0 or not (2 <= n_filters <= c):
        raise PipelineError(
            f"n_filters must be even and in [2, {c}] for {c} channels, got {n_filters}"
        )
    by_class = []
    for cls in classes:
        cls_trials = [t for t, l in zip(trials, labels) if l == cls]
        if not cls_trials:
            raise PipelineError(f"class {cls} has no trials")
        by_class.append(_mean_normalized_cov(cls_trials))
    s1, s2 = by_class
    composite = s1 + s2
    try:
        eigvals, eigvecs = linalg.eigh(s1, composite)
    except linalg.LinAlgError as exc:
        raise PipelineError(f"composite covariance not positive definite: {exc}") from exc
    order = np.argsort(eigvals)[::-1]          # descending eigenvalue
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]
    half = n_filters // 2
    pick = list(range(half)) + list(range(c - half, c))
    w = _fix_signs(eigvecs[:, pick].T)
    return CspModel(filters=w, n_classes=2, layout=BINARY, eigvals=eigvals[pick])


def fit_csp_ovr(trials: list[Trial], labels, rows_per_class: int = 4) -> CspModel:
    """One-vs-rest CSP for M >= 3 classes.

    For each class the binary class-vs-rest problem is solved and its
    ``rows_per_class`` largest-eigenvalue rows are kept; blocks are stacked
    in ascending class order, giving ``M * rows_per_class`` rows total.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    m = len(classes)
    if m < 3:
        raise PipelineError(f"one-vs-rest CSP needs >= 3 classes, got {m}; use fit_csp_binary")
    c = trials[0].n_channels
    if not (1 <= rows_per_class <= c // 2):
        raise PipelineError(
            f"rows_per_class must be in [1, {c // 2}] for {c} channels, got {rows_per_class}"
        )
    blocks = []
    for cls in classes:
        rest = labels != cls
        # class of interest becomes the smaller pseudo-label, so its
        # high-variance directions sit at the top of the spectrum
        pseudo = np.where(rest, 1, 0)
        sub = fit_csp_binary(trials, pseudo, n_filters=2 * rows_per_class)
        blocks.append(sub.filters[:rows_per_class])
    w = np.vstack(blocks)
    return CspModel(filters=w, n_classes=m, layout=OVR, rows_per_class=rows_per_class)


def features_from_array(model: CspModel, x: np.ndarray) -> np.ndarray:
    """Log-variance features straight from a (C, S) array (hot path)."""
    if x.shape[0] != model.n_channels:
        raise PipelineError(
            f"window has {x.shape[0]} channels, model expects {model.n_channels}"
        )
    z = model.filters @ x
    variances = z.var(axis=1)
    total = variances.sum()
    if total <= 0.0 or (variances <= 0.0).any():
        raise PipelineError("zero-variance projected signal; window is degenerate")
    return np.log(variances / total)


def extract_features(model: CspModel, trial: Trial) -> np.ndarray:
    """Normalized log-variance features: log(var_k / sum_j var_j).

    Invariant under rescaling of the trial; ``sum(exp(features)) == 1``.
    """
    return features_from_array(model, trial.data)


def extract_feature_matrix(model: CspModel, trials: list[Trial]) -> np.ndarray:
    """Stack per-trial features into an (n_trials, K) matrix."""
    return np.stack([extract_features(model, t) for t in trials])
