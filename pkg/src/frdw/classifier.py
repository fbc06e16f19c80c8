"""Calibrated probabilistic classifiers over CSP features.

Two interchangeable implementations sit behind :func:`predict_proba`:

* multinomial logistic regression trained by full-batch gradient descent
  with backtracking line search (the reference path: deterministic, exact
  gradient, used by the acceptance suite), and
* kernel SVM trained by SMO with per-problem Platt sigmoid calibration
  fitted on the training decision values (no inner cross-validation),
  one-vs-rest for more than two classes.
"""

from __future__ import annotations

import base64
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import PipelineError

LOGREG = "logreg"
SVM = "svm"

_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class KernelSpec:
    """Kernel and box constraint for the SVM path."""

    kind: str = "rbf"            # "linear" | "rbf"
    c: float = 0.1
    gamma: float | None = None   # None: 1 / (K * var(features)) at fit time

    def __post_init__(self):
        if self.kind not in ("linear", "rbf"):
            raise PipelineError(f"unknown kernel {self.kind!r}")
        if not (self.c > 0):
            raise PipelineError(f"C must be positive, got {self.c}")
        if self.gamma is not None and not (self.gamma > 0):
            raise PipelineError(f"gamma must be positive, got {self.gamma}")


@dataclass
class BinarySvm:
    """One trained binary sub-problem: support expansion plus Platt (A, B)."""

    support_x: np.ndarray     # (n_sv, K)
    dual_coef: np.ndarray     # (n_sv,) alpha_i * y_i
    bias: float
    platt_a: float
    platt_b: float
    converged: bool = True


@dataclass
class ProbClassifier:
    """Trained classifier; ``kind`` selects the parameter layout."""

    kind: str
    n_classes: int
    n_features: int
    # logreg parameters
    weights: np.ndarray | None = None   # (M, K)
    bias: np.ndarray | None = None      # (M,)
    # svm parameters
    kernel: KernelSpec | None = None
    gamma: float | None = None          # resolved value actually used
    problems: list[BinarySvm] = field(default_factory=list)
    converged: bool = True

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n_classes": self.n_classes, "n_features": self.n_features}
        if self.kind == LOGREG:
            d["weights_b64"] = _encode(self.weights)
            d["bias_b64"] = _encode(self.bias)
        else:
            d["kernel"] = {"kind": self.kernel.kind, "c": self.kernel.c,
                           "gamma": self.kernel.gamma}
            d["gamma"] = self.gamma
            d["problems"] = [
                {
                    "support_b64": _encode(p.support_x),
                    "n_sv": int(p.support_x.shape[0]),
                    "dual_coef_b64": _encode(p.dual_coef),
                    "bias": p.bias,
                    "platt_a": p.platt_a,
                    "platt_b": p.platt_b,
                    "converged": p.converged,
                }
                for p in self.problems
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ProbClassifier":
        kind = d["kind"]
        if kind == LOGREG:
            k = d["n_features"]
            m = d["n_classes"]
            return cls(kind=kind, n_classes=m, n_features=k,
                       weights=_decode(d["weights_b64"]).reshape(m, k),
                       bias=_decode(d["bias_b64"]))
        spec = KernelSpec(**d["kernel"])
        problems = [
            BinarySvm(
                support_x=_decode(p["support_b64"]).reshape(p["n_sv"], d["n_features"]),
                dual_coef=_decode(p["dual_coef_b64"]),
                bias=p["bias"], platt_a=p["platt_a"], platt_b=p["platt_b"],
                converged=p["converged"],
            )
            for p in d["problems"]
        ]
        return cls(kind=kind, n_classes=d["n_classes"], n_features=d["n_features"],
                   kernel=spec, gamma=d["gamma"], problems=problems,
                   converged=all(p.converged for p in problems))


def _encode(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def _decode(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").copy()


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def logreg_loss_grad(w: np.ndarray, b: np.ndarray, x: np.ndarray, y_onehot: np.ndarray,
                     l2: float):
    """Mean cross-entropy + 0.5*l2*||W||^2 and its exact gradient."""
    n = x.shape[0]
    logits = x @ w.T + b
    zmax = logits.max(axis=1, keepdims=True)
    logsumexp = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    ce = (logsumexp - (logits * y_onehot).sum(axis=1)).mean()
    loss = ce + 0.5 * l2 * float((w * w).sum())
    p = _softmax(logits)
    diff = (p - y_onehot) / n
    grad_w = diff.T @ x + l2 * w
    grad_b = diff.sum(axis=0)
    return loss, grad_w, grad_b


def train_logreg(features, labels, l2: float = 1e-2, max_iter: int = 5000,
                 grad_tol: float = 1e-6) -> ProbClassifier:
    """Fit multinomial logistic regression by gradient descent.

    Full-batch descent with Armijo backtracking, run until the flattened
    gradient norm drops below ``grad_tol`` or ``max_iter`` iterations.
    The bias is not regularized.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise PipelineError(f"features must be 2-D, got shape {x.shape}")
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    m = int(classes.max()) + 1
    if len(classes) < 2:
        raise PipelineError("need at least 2 classes to train a classifier")
    if l2 < 0:
        raise PipelineError(f"l2 must be >= 0, got {l2}")
    n, k = x.shape
    y_onehot = np.zeros((n, m))
    y_onehot[np.arange(n), y] = 1.0

    w = np.zeros((m, k))
    b = np.zeros(m)
    step = 1.0
    loss, gw, gb = logreg_loss_grad(w, b, x, y_onehot, l2)
    for _ in range(max_iter):
        gnorm = math.sqrt(float((gw * gw).sum() + (gb * gb).sum()))
        if gnorm < grad_tol:
            break
        # Armijo backtracking on the steepest-descent direction
        step = min(step * 2.0, 1e6)
        gsq = gnorm * gnorm
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            loss_new, gw_new, gb_new = logreg_loss_grad(w_new, b_new, x, y_onehot, l2)
            if loss_new <= loss - 1e-4 * step * gsq or step < 1e-16:
                break
            step *= 0.5
        w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new

    return ProbClassifier(kind=LOGREG, n_classes=m, n_features=k, weights=w, bias=b)


# ---------------------------------------------------------------------------
# SVM: SMO dual solver + Platt calibration
# ---------------------------------------------------------------------------

def _kernel_matrix(spec_kind: str, gamma: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if spec_kind == "linear":
        return a @ b.T
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


class _Smo:
    """Platt-style SMO on the dual problem, deterministic scan order."""

    def __init__(self, gram: np.ndarray, y: np.ndarray, c: float,
                 tol: float = 1e-3, max_sweeps: int = 20000):
        self.k = gram
        self.y = y.astype(np.float64)
        self.c = c
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.n = len(y)
        self.alpha = np.zeros(self.n)
        self.b = 0.0
        # f(x_i) - y_i with alpha = 0, b = 0
        self.errors = -self.y.copy()
        self.converged = False

    def decision(self) -> np.ndarray:
        return (self.alpha * self.y) @ self.k + self.b

    def _take_step(self, i1: int, i2: int) -> bool:
        if i1 == i2:
            return False
        a1, a2 = self.alpha[i1], self.alpha[i2]
        y1, y2 = self.y[i1], self.y[i2]
        e1, e2 = self.errors[i1], self.errors[i2]
        s = y1 * y2
        if s > 0:
            lo, hi = max(0.0, a1 + a2 - self.c), min(self.c, a1 + a2)
        else:
            lo, hi = max(0.0, a2 - a1), min(self.c, self.c + a2 - a1)
        if lo >= hi:
            return False
        k11, k12, k22 = self.k[i1, i1], self.k[i1, i2], self.k[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 1e-15:
            a2_new = a2 + y2 * (e1 - e2) / eta
            a2_new = min(max(a2_new, lo), hi)
        else:
            # objective is flat or linear along the constraint line: evaluate
            # the restricted dual at both clipped ends and take the smaller
            v1 = (e1 + y1 - self.b) - y1 * a1 * k11 - y2 * a2 * k12
            v2 = (e2 + y2 - self.b) - y1 * a1 * k12 - y2 * a2 * k22

            def psi(c1, c2):
                return (0.5 * k11 * c1 * c1 + 0.5 * k22 * c2 * c2 + s * k12 * c1 * c2
                        + y1 * c1 * v1 + y2 * c2 * v2 - c1 - c2)

            obj_lo = psi(a1 + s * (a2 - lo), lo)
            obj_hi = psi(a1 + s * (a2 - hi), hi)
            if obj_lo < obj_hi - 1e-12:
                a2_new = lo
            elif obj_lo > obj_hi + 1e-12:
                a2_new = hi
            else:
                a2_new = a2
        if abs(a2_new - a2) < 1e-12 * (a2_new + a2 + 1e-12):
            return False
        a1_new = a1 + s * (a2 - a2_new)
        d1 = y1 * (a1_new - a1)
        d2 = y2 * (a2_new - a2)

        # pick b so a free multiplier sits exactly on its margin
        b1 = self.b - e1 - d1 * k11 - d2 * k12
        b2 = self.b - e2 - d1 * k12 - d2 * k22
        if 0.0 < a1_new < self.c:
            b_new = b1
        elif 0.0 < a2_new < self.c:
            b_new = b2
        else:
            b_new = 0.5 * (b1 + b2)

        # errors track f(x_j) - y_j with f = sum(alpha y K) + b
        self.errors += d1 * self.k[i1] + d2 * self.k[i2] + (b_new - self.b)
        self.alpha[i1], self.alpha[i2] = a1_new, a2_new
        self.b = b_new
        return True

    def _second_choice(self, i2: int) -> int:
        e2 = self.errors[i2]
        gaps = np.abs(self.errors - e2)
        gaps[i2] = -1.0
        return int(np.argmax(gaps))

    def _examine(self, i2: int) -> bool:
        y2, a2, e2 = self.y[i2], self.alpha[i2], self.errors[i2]
        r2 = e2 * y2
        if (r2 < -self.tol and a2 < self.c) or (r2 > self.tol and a2 > 0.0):
            non_bound = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.c))
            if len(non_bound) > 1 and self._take_step(self._second_choice(i2), i2):
                return True
            for i1 in non_bound:
                if self._take_step(int(i1), i2):
                    return True
            for i1 in range(self.n):
                if self._take_step(i1, i2):
                    return True
        return False

    def kkt_violation(self) -> float:
        """Largest KKT residual |y_i f(x_i) - 1| in the active direction."""
        margins = self.y * self.decision()
        resid = np.zeros(self.n)
        free = (self.alpha > 1e-12) & (self.alpha < self.c - 1e-12)
        resid[free] = np.abs(margins[free] - 1.0)
        at_zero = self.alpha <= 1e-12
        resid[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
        at_c = self.alpha >= self.c - 1e-12
        resid[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
        return float(resid.max()) if self.n else 0.0

    def solve(self):
        examine_all = True
        for _ in range(self.max_sweeps):
            changed = 0
            if examine_all:
                targets = range(self.n)
            else:
                targets = np.flatnonzero((self.alpha > 0.0) & (self.alpha < self.c))
            for i2 in targets:
                changed += self._examine(int(i2))
            if examine_all:
                if changed == 0:
                    self.converged = True
                    break
                examine_all = False
            elif changed == 0:
                examine_all = True
        else:
            self.converged = self.kkt_violation() <= self.tol
        return self


def platt_fit(decisions: np.ndarray, targets: np.ndarray,
              max_iter: int = 100) -> tuple[float, float]:
    """Fit sigmoid parameters (A, B) with P(y=1|f) = 1/(1+exp(A f + B)).

    Newton iterations with backtracking on the regularized maximum-likelihood
    target (Platt's method with the Lin/Weng numerics); ``targets`` are
    +1/-1 labels.
    """
    prior1 = float((targets > 0).sum())
    prior0 = float(len(targets) - prior1)
    hi = (prior1 + 1.0) / (prior1 + 2.0)
    lo = 1.0 / (prior0 + 2.0)
    t = np.where(targets > 0, hi, lo)
    f = np.asarray(decisions, dtype=np.float64)

    def objective(a, b):
        fab = a * f + b
        return float(np.where(fab >= 0,
                              t * fab + np.log1p(np.exp(-fab)),
                              (t - 1.0) * fab + np.log1p(np.exp(fab))).sum())

    a, b = 0.0, math.log((prior0 + 1.0) / (prior1 + 1.0))
    fval = objective(a, b)
    sigma = 1e-12
    for _ in range(max_iter):
        fab = a * f + b
        p = np.where(fab >= 0, np.exp(-fab) / (1.0 + np.exp(-fab)),
                     1.0 / (1.0 + np.exp(fab)))
        q = 1.0 - p
        d2 = p * q
        h11 = float((f * f * d2).sum()) + sigma
        h22 = float(d2.sum()) + sigma
        h21 = float((f * d2).sum())
        d1 = t - p
        g1 = float((f * d1).sum())
        g2 = float(d1.sum())
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= 1e-10:
            a_new, b_new = a + step * da, b + step * db
            f_new = objective(a_new, b_new)
            if f_new < fval + 1e-4 * step * gd:
                a, b, fval = a_new, b_new, f_new
                break
            step *= 0.5
        else:
            break
    return a, b


def _fit_binary_svm(x: np.ndarray, y_pm: np.ndarray, spec: KernelSpec,
                    gamma: float) -> BinarySvm:
    gram = _kernel_matrix(spec.kind, gamma, x, x)
    smo = _Smo(gram, y_pm, spec.c).solve()
    if not smo.converged:
        warnings.warn(
            f"SMO did not reach KKT tolerance (violation {smo.kkt_violation():.3e})",
            RuntimeWarning, stacklevel=2,
        )
    decisions = smo.decision()
    a, b = platt_fit(decisions, y_pm)
    keep = smo.alpha > 1e-12
    return BinarySvm(
        support_x=x[keep].copy(),
        dual_coef=(smo.alpha * y_pm)[keep].copy(),
        bias=smo.b,
        platt_a=a,
        platt_b=b,
        converged=smo.converged,
    )


def train_svm(features, labels, spec: KernelSpec) -> ProbClassifier:
    """Train a kernel SVM with Platt-calibrated probabilities.

    Binary problems are solved directly; for M >= 3 classes a one-vs-rest
    bank is trained and the per-class sigmoid outputs are normalized to
    sum to one.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    m = int(classes.max()) + 1
    if len(classes) < 2:
        raise PipelineError("need at least 2 classes to train a classifier")
    k = x.shape[1]
    gamma = spec.gamma
    if gamma is None:
        v = float(x.var())
        gamma = 1.0 / (k * v) if v > 0 else 1.0

    problems = []
    if m == 2:
        problems.append(_fit_binary_svm(x, np.where(y == 1, 1.0, -1.0), spec, gamma))
    else:
        for cls in range(m):
            problems.append(_fit_binary_svm(x, np.where(y == cls, 1.0, -1.0), spec, gamma))
    return ProbClassifier(kind=SVM, n_classes=m, n_features=k, kernel=spec, gamma=gamma,
                          problems=problems, converged=all(p.converged for p in problems))


def svm_decision_values(model: ProbClassifier, features: np.ndarray) -> np.ndarray:
    """Signed decision value of each binary sub-problem, shape (n, n_problems)."""
    x = np.atleast_2d(np.asarray(features, dtype=np.float64))
    cols = []
    for p in model.problems:
        gram = _kernel_matrix(model.kernel.kind, model.gamma, x, p.support_x)
        cols.append(gram @ p.dual_coef + p.bias)
    return np.stack(cols, axis=1)


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def predict_proba(model: ProbClassifier, feature) -> tuple[np.ndarray, int, float]:
    """Class probabilities for one feature vector.

    Returns ``(probs, m, p)`` where ``m`` is the argmax class (ties broken
    toward the lowest index) and ``p = probs[m]``.
    """
    feat = np.asarray(feature, dtype=np.float64).ravel()
    if feat.shape[0] != model.n_features:
        raise PipelineError(
            f"feature has length {feat.shape[0]}, model expects {model.n_features}"
        )
    if model.kind == LOGREG:
        logits = model.weights @ feat + model.bias
        probs = _softmax(logits)
    else:
        dec = svm_decision_values(model, feat[None, :])[0]
        if model.n_classes == 2:
            p1 = float(_sigmoid(-(model.problems[0].platt_a * dec[0]
                                  + model.problems[0].platt_b)))
            probs = np.array([1.0 - p1, p1])
        else:
            per_class = np.array([
                _sigmoid(-(p.platt_a * d + p.platt_b))
                for p, d in zip(model.problems, dec)
            ])
            probs = per_class / per_class.sum()
    probs = np.clip(probs, _PROB_FLOOR, None)
    probs = probs / probs.sum()
    m = int(np.argmax(probs))
    return probs, m, float(probs[m])
