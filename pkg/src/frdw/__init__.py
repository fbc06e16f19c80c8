"""Streaming motor-imagery EEG decoding with front-end replication dynamic windows."""

from .alignment import EaState, accumulate, align, finalize, inv_sqrt_spd
from .augment import AugmentSpec, augment_fr, augment_overlap, crop_to_length
from .bundle import (DatasetBundle, SubjectData, Trial, ValidationPolicy, load_bundle,
                     split_validation, write_bundle)
from .classifier import (KernelSpec, ProbClassifier, predict_proba, train_logreg,
                         train_svm)
from .controller import (DecisionRecord, FrdwConfig, UNREACHABLE_TAU,
                         front_end_replicate, run_session_cross, run_trial_within,
                         step)
from .csp import CspModel, extract_features, fit_csp_binary, fit_csp_ovr
from .errors import BundleError, ConfigError, FrdwError, PipelineError, StreamError
from .metrics import (SessionMetrics, itr, paired_t_test, select_hyperparams,
                      sensitivity_sweep, session_metrics)
from .pipeline import (ClassifierSpec, Pipeline, TrainSettings, fit_pipeline,
                       load_pipeline, save_pipeline, train_cross_subject,
                       train_within_subject)
from .preproc import (FilterCoeffs, FilterState, apply_offline, apply_streaming,
                      design_bandpass, detrend, make_filter_state)
from .replay import LatencyStats, ReplayPlan, make_stream, replay_subject
from .synth import make_synthetic_bundle

__version__ = "0.1.0"

__all__ = [
    "AugmentSpec", "BundleError", "ClassifierSpec", "ConfigError", "CspModel",
    "DatasetBundle", "DecisionRecord", "EaState", "FilterCoeffs", "FilterState",
    "FrdwConfig", "FrdwError", "KernelSpec", "LatencyStats", "Pipeline",
    "PipelineError", "ProbClassifier", "ReplayPlan", "SessionMetrics", "StreamError",
    "SubjectData", "TrainSettings", "Trial", "UNREACHABLE_TAU", "ValidationPolicy",
    "accumulate", "align", "apply_offline", "apply_streaming", "augment_fr",
    "augment_overlap", "crop_to_length", "design_bandpass", "detrend",
    "extract_features", "finalize", "fit_csp_binary", "fit_csp_ovr", "fit_pipeline",
    "front_end_replicate", "inv_sqrt_spd", "itr", "load_bundle", "load_pipeline",
    "make_filter_state", "make_stream", "make_synthetic_bundle", "paired_t_test",
    "predict_proba", "replay_subject", "run_session_cross", "run_trial_within",
    "save_pipeline", "select_hyperparams", "sensitivity_sweep", "session_metrics",
    "split_validation", "step", "train_cross_subject", "train_logreg", "train_svm",
    "train_within_subject", "write_bundle",
]
