"""Evaluation: accuracy, information transfer rate, paired t-tests, sweeps.

The ITR (bits/min) for accuracy P over M classes with mean decision time T
seconds is ``(60/T) * (log2 M + P log2 P + (1-P) log2((1-P)/(M-1)))`` with
the ``x log x -> 0`` convention at the endpoints, floored to 0 whenever P is
below chance (1/M).  ``T`` is purely mean decision time (samples used over
sampling rate); cue and rest periods are not accounted.

The t-test p-value is computed from the Student-t CDF via the regularized
incomplete beta function (Lentz continued fraction), accurate to well below
1e-8; no lookup tables.
"""

from __future__ import annotations

import csv as _csv
import io
import math
import warnings
from dataclasses import dataclass, field

from .errors import ConfigError

SWEEP_CSV_HEADER = ["l_min", "tau", "scheme", "acc", "itr", "mean_time_s"]


def itr(p: float, m: int, t: float) -> float:
    """Information transfer rate in bits/min; 0 below chance accuracy."""
    if not (0.0 <= p <= 1.0):
        raise ConfigError(f"accuracy must be in [0, 1], got {p}")
    if m < 2:
        raise ConfigError(f"need >= 2 classes, got {m}")
    if not (t > 0):
        raise ConfigError(f"mean decision time must be positive, got {t}")
    if p < 1.0 / m:
        return 0.0
    bits = math.log2(m)
    if p > 0.0:
        bits += p * math.log2(p)
    if p < 1.0:
        bits += (1.0 - p) * math.log2((1.0 - p) / (m - 1))
    return max(0.0, 60.0 / t * bits)


@dataclass(frozen=True)
class SessionMetrics:
    """Summary of one replayed session."""

    acc: float
    mean_time_s: float
    n_classes: int
    itr: float
    n_trials: int


def session_metrics(records, labels, n_classes: int) -> SessionMetrics:
    """Accuracy, mean decision time and ITR over one session's records."""
    if not records:
        raise ConfigError("cannot compute session metrics from zero records")
    if len(records) != len(labels):
        raise ConfigError(f"{len(records)} records vs {len(labels)} labels")
    correct = sum(1 for r, l in zip(records, labels) if r.pred == l)
    acc = correct / len(records)
    mean_t = sum(r.decision_time_s for r in records) / len(records)
    return SessionMetrics(acc=acc, mean_time_s=mean_t, n_classes=n_classes,
                          itr=itr(acc, n_classes, mean_t), n_trials=len(records))


# ---------------------------------------------------------------------------
# paired t-test
# ---------------------------------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    # Lentz's continued fraction for the incomplete beta function
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            break
    return h


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log(1.0 - x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail probability P(|T| >= |t|) for df degrees of freedom."""
    if df < 1:
        raise ConfigError(f"degrees of freedom must be >= 1, got {df}")
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b) -> tuple[float, float]:
    """Paired-sample t statistic and two-sided p-value.

    All-zero differences report ``(0.0, 1.0)``; zero spread with nonzero mean
    reports an infinite statistic with p = 0.
    """
    if len(a) != len(b):
        raise ConfigError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise ConfigError("paired t-test needs at least 2 pairs")
    d = [float(x) - float(y) for x, y in zip(a, b)]
    mean = sum(d) / n
    var = sum((x - mean) ** 2 for x in d) / (n - 1)
    if var == 0.0:
        if mean == 0.0:
            return 0.0, 1.0
        return math.copysign(math.inf, mean), 0.0
    t = mean / math.sqrt(var / n)
    return t, student_t_sf2(t, n - 1)


# ---------------------------------------------------------------------------
# hyperparameter selection and sensitivity sweep
# ---------------------------------------------------------------------------

def select_hyperparams(validation_itrs: dict[int, float]) -> int:
    """Window length with the best validation ITR; ties go to the smallest."""
    if not validation_itrs:
        raise ConfigError("no candidate window lengths to select from")
    best = max(validation_itrs.values())
    return min(n for n, v in validation_itrs.items() if v == best)


@dataclass
class SweepCell:
    l_min: int
    tau: float
    scheme: str
    metrics: SessionMetrics | None
    error: str | None = None


@dataclass
class SweepResult:
    """Full-factorial (l_min, tau, scheme) grid of session metrics."""

    cells: list[SweepCell] = field(default_factory=list)

    def rows(self):
        for c in self.cells:
            if c.metrics is None:
                yield [c.l_min, c.tau, c.scheme, math.nan, math.nan, math.nan]
            else:
                yield [c.l_min, c.tau, c.scheme, c.metrics.acc, c.metrics.itr,
                       c.metrics.mean_time_s]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = _csv.writer(buf)
        writer.writerow(SWEEP_CSV_HEADER)
        for row in self.rows():
            writer.writerow(row)
        return buf.getvalue()


def sensitivity_sweep(replay_fn, l_min_grid, tau_grid,
                      schemes=("none", "overlap", "fr")) -> SweepResult:
    """Replay every (scheme, l_min, tau) cell; failed cells are kept as NaN.

    ``replay_fn(scheme, l_min, tau)`` must return ``(records, labels)`` pooled
    over the replayed subjects; class count is taken per call from the label
    range handed back by the runner.
    """
    l_min_grid = _dedupe(l_min_grid, "l_min")
    tau_grid = _dedupe(tau_grid, "tau")
    if not l_min_grid or not tau_grid:
        raise ConfigError("sweep grids must be non-empty")
    result = SweepResult()
    for scheme in schemes:
        for l_min in l_min_grid:
            for tau in tau_grid:
                try:
                    records, labels, n_classes = replay_fn(scheme, l_min, tau)
                    sm = session_metrics(records, labels, n_classes)
                    result.cells.append(SweepCell(l_min, tau, scheme, sm))
                except Exception as exc:  # keep sweeping; cell marked failed
                    result.cells.append(SweepCell(l_min, tau, scheme, None, str(exc)))
    return result


def _dedupe(grid, name: str) -> list:
    out = []
    for v in grid:
        if v in out:
            warnings.warn(f"duplicate {name} grid value {v} dropped", stacklevel=3)
        else:
            out.append(v)
    return out
