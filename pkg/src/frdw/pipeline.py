"""Trained decoding pipelines: preprocessing + CSP + classifier, plus training.

A :class:`Pipeline` owns the filter design (applied causally by the stream
controller), the fitted spatial filters and the probabilistic classifier.
Training offline uses detrending and zero-phase filtering; the train/test
filtering mismatch (zero-phase offline vs causal online) is deliberate,
since a causal system cannot look ahead.

Within-subject training picks the window length with the best validation
ITR and refits on train+validation; cross-subject training is
leave-one-subject-out, keeping the best-validating model without
retraining and pairing an unaligned pipeline with one trained on
per-subject-whitened source data.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import alignment, classifier, controller, csp, metrics, preproc
from .augment import AugmentSpec, apply_augmentation, crop_to_length
from .bundle import DatasetBundle, SubjectData, Trial, ValidationPolicy, split_trials
from .errors import ConfigError, PipelineError

PIPELINE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ClassifierSpec:
    """Which classifier to train and with what knobs."""

    kind: str = classifier.LOGREG      # "logreg" | "svm"
    l2: float = 1e-2                   # logreg ridge
    kernel: str = "rbf"                # svm kernel
    c: float = 0.1                     # svm box constraint
    gamma: float | None = None

    def __post_init__(self):
        if self.kind not in (classifier.LOGREG, classifier.SVM):
            raise ConfigError(f"unknown classifier kind {self.kind!r}")

    def train(self, features, labels) -> classifier.ProbClassifier:
        if self.kind == classifier.LOGREG:
            return classifier.train_logreg(features, labels, l2=self.l2)
        spec = classifier.KernelSpec(kind=self.kernel, c=self.c, gamma=self.gamma)
        return classifier.train_svm(features, labels, spec)


@dataclass
class Pipeline:
    """Trained composition producing (probability, class) from a full window."""

    coeffs: preproc.FilterCoeffs | None
    csp_model: csp.CspModel
    clf: classifier.ProbClassifier
    n_train: int
    fs: float
    meta: dict = field(default_factory=dict)

    @property
    def n_channels(self) -> int:
        return self.csp_model.n_channels

    def classify_window(self, window: np.ndarray) -> tuple[float, int]:
        feat = csp.features_from_array(self.csp_model, window)
        _, m, p = classifier.predict_proba(self.clf, feat)
        return p, m

    def classify_trial(self, trial: Trial) -> tuple[float, int]:
        return self.classify_window(crop_to_length(trial, self.n_train).data)


def default_binary_filters(n_channels: int, requested: int | None = None) -> int:
    """Largest even filter count <= min(6, n_channels), unless overridden."""
    if requested is not None:
        return requested
    return max(2, min(6, n_channels) // 2 * 2)


def preprocess_trials(trials: list[Trial], coeffs: preproc.FilterCoeffs) -> list[Trial]:
    """Offline conditioning: per-channel detrend, then zero-phase bandpass."""
    return [preproc.apply_offline(coeffs, preproc.detrend(t), mode=preproc.ZERO_PHASE)
            for t in trials]


def make_augment_spec(scheme: str, n_train: int, stride: int = 25,
                      fr_ratio: float = 0.7) -> AugmentSpec:
    return AugmentSpec(scheme=scheme, target_len=n_train, stride=stride,
                       fr_window=math.ceil(fr_ratio * n_train) if scheme == "fr" else 0)


def fit_pipeline(preprocessed: list[Trial], *, n_train: int, n_classes: int,
                 augment: AugmentSpec, clf_spec: ClassifierSpec,
                 coeffs: preproc.FilterCoeffs | None, fs: float,
                 n_filters: int | None = None, rows_per_class: int = 4,
                 meta: dict | None = None) -> Pipeline:
    """Fit CSP and the classifier on augmented training windows."""
    if augment.target_len != n_train:
        raise ConfigError(
            f"augment target_len {augment.target_len} != n_train {n_train}"
        )
    windows = apply_augmentation(preprocessed, augment)
    labels = [w.label for w in windows]
    if any(l is None for l in labels):
        raise PipelineError("training trials must be labeled")
    if n_classes == 2:
        model = csp.fit_csp_binary(
            windows, labels,
            n_filters=default_binary_filters(windows[0].n_channels, n_filters),
        )
    else:
        model = csp.fit_csp_ovr(windows, labels, rows_per_class=rows_per_class)
    feats = csp.extract_feature_matrix(model, windows)
    clf = clf_spec.train(feats, labels)
    return Pipeline(coeffs=coeffs, csp_model=model, clf=clf, n_train=n_train, fs=fs,
                    meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def pipeline_to_dict(p: Pipeline) -> dict:
    d = {
        "format_version": PIPELINE_FORMAT_VERSION,
        "kind": "frdw-pipeline",
        "n_train": p.n_train,
        "fs": p.fs,
        "preproc": None,
        "csp": p.csp_model.to_dict(),
        "classifier": p.clf.to_dict(),
        "meta": p.meta,
    }
    if p.coeffs is not None:
        d["preproc"] = {"order": p.coeffs.order, "low": p.coeffs.band[0],
                        "high": p.coeffs.band[1], "fs": p.coeffs.fs}
    return d


def pipeline_from_dict(d: dict) -> Pipeline:
    if d.get("format_version") != PIPELINE_FORMAT_VERSION:
        raise ConfigError(f"unsupported pipeline format {d.get('format_version')!r}")
    coeffs = None
    if d.get("preproc"):
        pp = d["preproc"]
        coeffs = preproc.design_bandpass(order=pp["order"], low=pp["low"],
                                         high=pp["high"], fs=pp["fs"])
    return Pipeline(
        coeffs=coeffs,
        csp_model=csp.CspModel.from_dict(d["csp"]),
        clf=classifier.ProbClassifier.from_dict(d["classifier"]),
        n_train=d["n_train"],
        fs=d["fs"],
        meta=d.get("meta", {}),
    )


def save_pipeline(p: Pipeline, path) -> None:
    Path(path).write_text(
        json.dumps(pipeline_to_dict(p), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_pipeline(path) -> Pipeline:
    return pipeline_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# training orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainSettings:
    """Everything training needs besides the data."""

    candidate_n: tuple[int, ...]
    scheme: str = "none"
    stride: int = 25
    fr_ratio: float = 0.7
    clf_spec: ClassifierSpec = ClassifierSpec()
    frdw: controller.FrdwConfig | None = None    # l_min/tau/l_prime/n_ea for validation
    validation: ValidationPolicy = ValidationPolicy(kind="last_fraction", fraction=0.2)
    band: tuple[float, float] = (8.0, 26.0)
    filter_order: int = 5
    n_filters: int | None = None
    rows_per_class: int = 4

    def frdw_for(self, n_train: int, fs: float, mode: str) -> controller.FrdwConfig:
        base = self.frdw or controller.FrdwConfig(n_train=n_train, l_min=60, tau=0.7)
        return replace(base, n_train=n_train, l_min=min(base.l_min, n_train),
                       fs=fs, mode=mode)


def _validation_itr(records, labels, n_classes) -> float:
    sm = metrics.session_metrics(records, labels, n_classes)
    return sm.itr


def train_within_subject(subject: SubjectData, bundle: DatasetBundle,
                         settings: TrainSettings) -> tuple[Pipeline, dict]:
    """Pick the best window length on validation ITR, then refit on all data."""
    coeffs = preproc.design_bandpass(order=settings.filter_order, low=settings.band[0],
                                     high=settings.band[1], fs=bundle.fs)
    prepped = preprocess_trials(subject.train_trials, coeffs)
    train_part, val_part = split_trials(prepped, settings.validation)
    raw_train, raw_val = split_trials(subject.train_trials, settings.validation)
    if not val_part:
        raise ConfigError("validation split is empty; cannot select hyperparameters")

    scores: dict[int, float] = {}
    for n in sorted(set(settings.candidate_n)):
        aug = make_augment_spec(settings.scheme, n, settings.stride, settings.fr_ratio)
        pipe = fit_pipeline(train_part, n_train=n, n_classes=bundle.n_classes,
                            augment=aug, clf_spec=settings.clf_spec, coeffs=coeffs,
                            fs=bundle.fs, n_filters=settings.n_filters,
                            rows_per_class=settings.rows_per_class)
        cfg = settings.frdw_for(n, bundle.fs, controller.WITHIN)
        records = [
            controller.run_trial_within(controller.iter_chunks(t.data, cfg.l_prime),
                                        cfg, pipe, trial_index=i)
            for i, t in enumerate(raw_val)
        ]
        scores[n] = _validation_itr(records, [t.label for t in raw_val],
                                    bundle.n_classes)

    best_n = metrics.select_hyperparams(scores)
    aug = make_augment_spec(settings.scheme, best_n, settings.stride, settings.fr_ratio)
    final = fit_pipeline(train_part + val_part, n_train=best_n,
                         n_classes=bundle.n_classes, augment=aug,
                         clf_spec=settings.clf_spec, coeffs=coeffs, fs=bundle.fs,
                         n_filters=settings.n_filters,
                         rows_per_class=settings.rows_per_class,
                         meta={"subject": subject.id, "mode": "within",
                               "scheme": settings.scheme, "chosen_n": best_n,
                               "validation_itr": scores})
    return final, {"chosen_n": best_n, "validation_itr": scores}


def _fit_cross_pair(source_parts: list[list[Trial]], n: int, bundle: DatasetBundle,
                    settings: TrainSettings, coeffs) -> tuple[Pipeline, Pipeline]:
    aug = make_augment_spec(settings.scheme, n, settings.stride, settings.fr_ratio)
    pooled = [t for part in source_parts for t in part]
    common = dict(n_train=n, n_classes=bundle.n_classes, augment=aug,
                  clf_spec=settings.clf_spec, coeffs=coeffs, fs=bundle.fs,
                  n_filters=settings.n_filters, rows_per_class=settings.rows_per_class)
    pipe_no_ea = fit_pipeline(pooled, **common, meta={"mode": "cross", "ea": False,
                                                      "scheme": settings.scheme,
                                                      "chosen_n": n})
    aligned = []
    for part in source_parts:
        # each source subject whitened by its own reference over N-cropped trials
        state = alignment.reference_from_trials(
            [crop_to_length(t, n) for t in part], bundle.n_channels
        )
        aligned.extend(alignment.align(t, state) for t in part)
    pipe_ea = fit_pipeline(aligned, **common, meta={"mode": "cross", "ea": True,
                                                    "scheme": settings.scheme,
                                                    "chosen_n": n})
    return pipe_no_ea, pipe_ea


def train_cross_subject(bundle: DatasetBundle, held_out_id: str,
                        settings: TrainSettings) -> tuple[Pipeline, Pipeline, dict]:
    """Leave-one-subject-out: train on pooled sources, validate, keep best."""
    if held_out_id not in {s.id for s in bundle.subjects}:
        raise ConfigError(f"held-out subject {held_out_id!r} not in bundle")
    sources = [s for s in bundle.subjects if s.id != held_out_id]
    if not sources:
        raise ConfigError(f"no source subjects besides {held_out_id!r}")
    coeffs = preproc.design_bandpass(order=settings.filter_order, low=settings.band[0],
                                     high=settings.band[1], fs=bundle.fs)
    prepped = {s.id: preprocess_trials(s.train_trials, coeffs) for s in sources}
    split = {s.id: split_trials(prepped[s.id], settings.validation) for s in sources}
    raw_split = {s.id: split_trials(s.train_trials, settings.validation) for s in sources}

    best = None
    for n in sorted(set(settings.candidate_n)):
        pair = _fit_cross_pair([split[s.id][0] for s in sources], n, bundle, settings,
                               coeffs)
        cfg = settings.frdw_for(n, bundle.fs, controller.CROSS)
        records, labels = [], []
        for s in sources:
            raw_val = raw_split[s.id][1]
            if not raw_val:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                recs = controller.run_session_cross(
                    raw_val, cfg, pair[0], pair[1],
                    alignment.EaState(n_channels=bundle.n_channels),
                )
            records.extend(recs)
            labels.extend(t.label for t in raw_val)
        if not records:
            raise ConfigError("validation split is empty; cannot select hyperparameters")
        score = _validation_itr(records, labels, bundle.n_classes)
        if best is None or score > best[0] or (score == best[0] and n < best[1]):
            best = (score, n, pair)

    score, n, (pipe_no_ea, pipe_ea) = best
    info = {"chosen_n": n, "validation_itr": score, "held_out": held_out_id}
    pipe_no_ea.meta.update({"held_out": held_out_id})
    pipe_ea.meta.update({"held_out": held_out_id})
    return pipe_no_ea, pipe_ea, info
