import numpy as np
import pytest

from frdw import PipelineError, Trial, extract_features, fit_csp_binary, fit_csp_ovr
from frdw.csp import CspModel, extract_feature_matrix


def gaussian_trials(rng, cov, count, n=200, label=0, fs=250.0):
    chol = np.linalg.cholesky(cov)
    return [Trial(data=chol @ rng.standard_normal((cov.shape[0], n)), fs=fs,
                  label=label) for _ in range(count)]


def two_class_set(rng, cov0, cov1, count=60, n=200):
    t0 = gaussian_trials(rng, cov0, count, n, label=0)
    t1 = gaussian_trials(rng, cov1, count, n, label=1)
    trials = t0 + t1
    labels = [t.label for t in trials]
    return trials, labels


def mean_normalized_cov_oracle(trials):
    """Independent covariance route for the whitening check."""
    acc = np.zeros((trials[0].n_channels,) * 2)
    for t in trials:
        cov = t.data @ t.data.T
        acc += cov / np.trace(cov)
    return acc / len(trials)


class TestBinaryCsp:
    def test_strong_contrast_concentrates_variance(self):
        # true covariances diag(8, 1) / diag(1, 8): the top filter projects
        # onto channel 1 where the class-0/class-1 variance ratio is 8
        rng = np.random.default_rng(0)
        trials, labels = two_class_set(rng, np.diag([8.0, 1.0]), np.diag([1.0, 8.0]))
        model = fit_csp_binary(trials, labels, n_filters=2)
        w_top = model.filters[0]
        var0 = np.mean([np.var(w_top @ t.data) for t in trials if t.label == 0])
        var1 = np.mean([np.var(w_top @ t.data) for t in trials if t.label == 1])
        assert var0 / var1 > 5.0

    def test_mild_contrast_ratio_matches_direct_variance_oracle(self):
        # diag(2, 1) vs diag(1, 2) caps the achievable ratio at 2
        rng = np.random.default_rng(1)
        trials, labels = two_class_set(rng, np.diag([2.0, 1.0]), np.diag([1.0, 2.0]),
                                       count=200)
        model = fit_csp_binary(trials, labels, n_filters=2)
        w_top = model.filters[0]
        var0 = np.mean([np.var(w_top @ t.data) for t in trials if t.label == 0])
        var1 = np.mean([np.var(w_top @ t.data) for t in trials if t.label == 1])
        assert 1.5 < var0 / var1 < 2.5

    def test_identical_distributions_give_half_eigenvalues(self):
        rng = np.random.default_rng(2)
        cov = np.diag([1.0, 2.0, 3.0])
        trials, labels = two_class_set(rng, cov, cov, count=300, n=300)
        model = fit_csp_binary(trials, labels, n_filters=2)
        assert np.allclose(model.eigvals, 0.5, atol=0.05)

    def test_whitening_property(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((6, 6))
        b = rng.standard_normal((6, 6))
        trials, labels = two_class_set(rng, a @ a.T + np.eye(6), b @ b.T + np.eye(6),
                                       count=40, n=150)
        model = fit_csp_binary(trials, labels, n_filters=6)
        s0 = mean_normalized_cov_oracle([t for t in trials if t.label == 0])
        s1 = mean_normalized_cov_oracle([t for t in trials if t.label == 1])
        prod = model.filters @ (s0 + s1) @ model.filters.T
        assert np.max(np.abs(prod - np.eye(6))) < 1e-6

    def test_simultaneous_diagonalization(self):
        rng = np.random.default_rng(4)
        a = rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4))
        trials, labels = two_class_set(rng, a @ a.T + np.eye(4), b @ b.T + np.eye(4),
                                       count=30, n=120)
        model = fit_csp_binary(trials, labels, n_filters=4)
        for cls in (0, 1):
            s = mean_normalized_cov_oracle([t for t in trials if t.label == cls])
            prod = model.filters @ s @ model.filters.T
            off = prod - np.diag(np.diag(prod))
            assert np.max(np.abs(off)) < 1e-6

    def test_deterministic_refit(self):
        rng = np.random.default_rng(5)
        trials, labels = two_class_set(rng, np.diag([3.0, 1.0]), np.diag([1.0, 3.0]),
                                       count=20, n=100)
        m1 = fit_csp_binary(trials, labels, n_filters=2)
        m2 = fit_csp_binary(trials, labels, n_filters=2)
        assert np.array_equal(m1.filters, m2.filters)

    def test_requires_two_classes(self):
        rng = np.random.default_rng(6)
        trials = gaussian_trials(rng, np.eye(2), 10)
        with pytest.raises(PipelineError, match="2 classes"):
            fit_csp_binary(trials, [0] * 10, n_filters=2)

    def test_missing_class_trials(self):
        rng = np.random.default_rng(7)
        trials = gaussian_trials(rng, np.eye(2), 4)
        with pytest.raises(PipelineError):
            fit_csp_binary(trials, [0, 0, 1, 2], n_filters=2)

    def test_filter_count_bounds(self):
        rng = np.random.default_rng(8)
        trials, labels = two_class_set(rng, np.eye(3), np.eye(3), count=5, n=50)
        with pytest.raises(PipelineError, match="n_filters"):
            fit_csp_binary(trials, labels, n_filters=3)   # odd
        with pytest.raises(PipelineError, match="n_filters"):
            fit_csp_binary(trials, labels, n_filters=4)   # > channels


class TestOvrCsp:
    def _four_class(self, rng, c=22, count=15, n=150):
        trials = []
        for m in range(4):
            cov = np.eye(c)
            cov[3 * m:3 * m + 3, 3 * m:3 * m + 3] *= 6.0
            trials.extend(gaussian_trials(rng, cov, count, n, label=m))
        return trials, [t.label for t in trials]

    def test_sixteen_rows_for_four_classes(self):
        rng = np.random.default_rng(9)
        trials, labels = self._four_class(rng)
        model = fit_csp_ovr(trials, labels, rows_per_class=4)
        assert model.n_filters == 16
        assert model.layout == "ovr"

    def test_binary_input_redirected(self):
        rng = np.random.default_rng(10)
        trials, labels = two_class_set(rng, np.eye(2), np.eye(2), count=5, n=50)
        with pytest.raises(PipelineError, match="fit_csp_binary"):
            fit_csp_ovr(trials, labels)

    def test_label_permutation_permutes_blocks_mod_sign(self):
        rng = np.random.default_rng(11)
        trials, labels = self._four_class(rng, c=8, count=20)
        m1 = fit_csp_ovr(trials, labels, rows_per_class=2)
        perm = {0: 2, 1: 3, 2: 0, 3: 1}
        m2 = fit_csp_ovr(trials, [perm[l] for l in labels], rows_per_class=2)
        # block for original class c sits at position perm[c] after relabeling
        for cls in range(4):
            b1 = m1.filters[2 * cls:2 * cls + 2]
            b2 = m2.filters[2 * perm[cls]:2 * perm[cls] + 2]
            for r1, r2 in zip(b1, b2):
                assert (np.allclose(r1, r2, atol=1e-8)
                        or np.allclose(r1, -r2, atol=1e-8))


class TestFeatures:
    def test_equal_variances(self):
        rng = np.random.default_rng(12)
        model = CspModel(filters=np.eye(2), n_classes=2, layout="binary")
        x = rng.standard_normal((2, 20000))
        x = (x - x.mean(axis=1, keepdims=True)) / x.std(axis=1, keepdims=True)
        feats = extract_features(model, Trial(data=x, fs=250.0))
        assert np.allclose(feats, [np.log(0.5), np.log(0.5)], atol=1e-12)

    def test_three_to_one_variances(self):
        model = CspModel(filters=np.eye(2), n_classes=2, layout="binary")
        x = np.vstack([np.sqrt(3.0) * np.sin(np.linspace(0, 40 * np.pi, 4000)),
                       np.sin(np.linspace(0, 40 * np.pi, 4000))])
        feats = extract_features(model, Trial(data=x, fs=250.0))
        # oracle: direct variance computation on the projected rows
        v = x.var(axis=1)
        expected = np.log(v / v.sum())
        assert np.allclose(feats, expected, atol=1e-12)
        assert np.allclose(expected, [np.log(0.75), np.log(0.25)], atol=1e-12)

    def test_sum_exp_is_one(self):
        rng = np.random.default_rng(13)
        model = CspModel(filters=rng.standard_normal((4, 6)), n_classes=2,
                         layout="binary")
        feats = extract_features(model, Trial(data=rng.standard_normal((6, 100)),
                                              fs=250.0))
        assert abs(np.exp(feats).sum() - 1.0) < 1e-9

    def test_scale_invariance(self):
        rng = np.random.default_rng(14)
        model = CspModel(filters=rng.standard_normal((4, 6)), n_classes=2,
                         layout="binary")
        x = rng.standard_normal((6, 100))
        f1 = extract_features(model, Trial(data=x, fs=250.0))
        f2 = extract_features(model, Trial(data=-17.5 * x, fs=250.0))
        assert np.max(np.abs(f1 - f2)) < 1e-9

    def test_zero_variance_rejected(self):
        model = CspModel(filters=np.eye(2), n_classes=2, layout="binary")
        with pytest.raises(PipelineError, match="zero-variance"):
            extract_features(model, Trial(data=np.ones((2, 10)), fs=250.0))


class TestSerialization:
    def test_round_trip(self):
        rng = np.random.default_rng(15)
        trials, labels = two_class_set(rng, np.diag([4.0, 1.0, 1.0]),
                                       np.diag([1.0, 1.0, 4.0]), count=20, n=100)
        model = fit_csp_binary(trials, labels, n_filters=2)
        back = CspModel.from_dict(model.to_dict())
        # filters are stored binary32; the round trip is exact at that precision
        assert np.array_equal(back.filters,
                              model.filters.astype(np.float32).astype(np.float64))
        assert back.layout == model.layout
        assert back.n_classes == model.n_classes
        feats = extract_feature_matrix(back, trials[:3])
        assert feats.shape == (3, 2)
