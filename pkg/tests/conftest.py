import pytest

import frdw
from frdw import pipeline


class ScriptedPipeline:
    """Emits a fixed probability sequence; position = number of windows scored."""

    coeffs = None

    def __init__(self, probs, preds=None):
        self.probs = list(probs)
        self.preds = list(preds) if preds is not None else [0] * len(self.probs)
        self.calls = 0

    def classify_window(self, window):
        i = min(self.calls, len(self.probs) - 1)
        self.calls += 1
        return float(self.probs[i]), int(self.preds[i])

    def reset(self):
        self.calls = 0


@pytest.fixture(scope="session")
def small_bundle():
    return frdw.make_synthetic_bundle(n_subjects=2, n_classes=2, n_channels=8,
                                      trial_len=750, n_train=16, n_test=10, seed=11)


@pytest.fixture(scope="session")
def trained_small(small_bundle):
    """One trained within-subject pipeline on the small synthetic bundle."""
    coeffs = frdw.design_bandpass(fs=small_bundle.fs)
    prepped = pipeline.preprocess_trials(small_bundle.subjects[0].train_trials, coeffs)
    pipe = pipeline.fit_pipeline(
        prepped, n_train=250, n_classes=2,
        augment=pipeline.make_augment_spec("fr", 250),
        clf_spec=pipeline.ClassifierSpec(), coeffs=coeffs, fs=small_bundle.fs,
    )
    return pipe

