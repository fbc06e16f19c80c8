"""Dynamic-window decision loop with front-end replication.

A trial arrives in fixed-size chunks.  Once the buffered length reaches the
minimum window, every update replicates the partial trial up to the training
length and asks the classifier for a (probability, class) pair; the trial is
decided as soon as the probability reaches the confidence threshold, or
unconditionally when the full training length has arrived.

The cross-subject variant adds an alignment warm-up: the first ``n_ea``
trials are classified at full length by the unaligned pipeline while their
covariances accumulate; the reference is then frozen and later trials are
whitened before windowing and decided by the aligned pipeline.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import alignment, preproc
from .bundle import Trial
from .errors import ConfigError, StreamError

WITHIN = "within"
CROSS = "cross"

#: Threshold no probability can reach; forces full-length (fixed window) decisions.
UNREACHABLE_TAU = math.inf


def front_end_replicate(partial: np.ndarray, n: int) -> np.ndarray:
    """Tile a partial trial periodically up to ``n`` columns.

    Output column ``j`` equals input column ``j mod L``; the first ``L``
    columns are the input itself, bit for bit.
    """
    partial = np.asarray(partial)
    if partial.ndim != 2:
        raise StreamError(f"partial trial must be 2-D, got shape {partial.shape}")
    l = partial.shape[1]
    if l == 0:
        raise StreamError("cannot replicate an empty partial trial")
    if l >= n:
        return partial[:, :n].copy()
    reps = -(-n // l)  # ceil
    return np.tile(partial, (1, reps))[:, :n]


@dataclass(frozen=True)
class FrdwConfig:
    """Controller hyperparameters.

    ``tau`` may exceed 1 (see :data:`UNREACHABLE_TAU`) to force fixed-window
    behaviour; ``n_ea = 0`` disables the alignment warm-up entirely, which
    collapses the cross-subject loop onto the within-subject one.
    """

    n_train: int                 # training window length N, samples
    l_min: int = 60              # minimum decision length, samples
    l_prime: int = 10            # samples per update
    tau: float = 0.7             # confidence threshold
    n_ea: int = 10               # warm-up trials before alignment engages
    mode: str = WITHIN           # WITHIN | CROSS
    fs: float = 250.0

    def __post_init__(self):
        if self.n_train < 1:
            raise ConfigError(f"n_train must be >= 1, got {self.n_train}")
        if not (1 <= self.l_min <= self.n_train):
            raise ConfigError(
                f"l_min must be in [1, n_train={self.n_train}], got {self.l_min}"
            )
        if self.l_prime < 1:
            raise ConfigError(f"l_prime must be >= 1, got {self.l_prime}")
        if not (self.tau >= 0) or (math.isnan(self.tau)):
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if self.n_ea < 0:
            raise ConfigError(f"n_ea must be >= 0, got {self.n_ea}")
        if self.mode not in (WITHIN, CROSS):
            raise ConfigError(f"mode must be 'within' or 'cross', got {self.mode!r}")
        if not (self.fs > 0):
            raise ConfigError(f"fs must be positive, got {self.fs}")


@dataclass
class TrialStreamState:
    """Growing per-trial buffer of causally filtered samples."""

    n_channels: int
    n_train: int
    buffer: np.ndarray = field(default=None)  # type: ignore[assignment]
    received: int = 0
    decided: bool = False
    filter_state: preproc.FilterState | None = None

    def __post_init__(self):
        if self.buffer is None:
            self.buffer = np.zeros((self.n_channels, self.n_train))


@dataclass(frozen=True)
class Decision:
    pred: int
    confidence: float
    samples_used: int


@dataclass(frozen=True)
class StepResult:
    """Outcome of one chunk update: a decision, or not yet."""

    decision: Decision | None
    evaluated: bool = False     # True when a classification window was scored
    prob: float | None = None
    pred: int | None = None

    @property
    def decided(self) -> bool:
        return self.decision is not None


@dataclass
class DecisionRecord:
    """Per-trial outcome of the online loop."""

    trial_index: int
    pred: int
    confidence: float
    samples_used: int
    decision_time_s: float
    update_ms: list[float]
    used_ea: bool = False

    def decision_fields(self) -> tuple:
        """The reproducible part of the record (timings excluded)."""
        return (self.trial_index, self.pred, self.confidence, self.samples_used,
                self.decision_time_s, self.used_ea)


def new_stream_state(n_channels: int, config: FrdwConfig, pipeline) -> TrialStreamState:
    state = TrialStreamState(n_channels=n_channels, n_train=config.n_train)
    coeffs = getattr(pipeline, "coeffs", None)
    if coeffs is not None:
        state.filter_state = preproc.make_filter_state(coeffs, n_channels)
    return state


def step(state: TrialStreamState, chunk: np.ndarray, config: FrdwConfig, pipeline,
         align_matrix: np.ndarray | None = None) -> StepResult:
    """Consume one chunk and maybe decide the trial.

    The chunk is causally filtered into the buffer.  Below ``l_min`` nothing
    is scored; between ``l_min`` and ``n_train`` the replicated window is
    scored and the trial is decided iff the probability reaches ``tau``;
    at ``n_train`` the full window is scored and the trial is decided
    unconditionally.
    """
    if state.decided:
        raise StreamError("step() called after the trial was already decided")
    chunk = np.asarray(chunk, dtype=np.float64)
    if chunk.ndim != 2 or chunk.shape[0] != state.n_channels:
        raise StreamError(
            f"chunk shape {chunk.shape} does not match {state.n_channels} channels"
        )
    if chunk.shape[1] != config.l_prime:
        raise StreamError(
            f"chunk has {chunk.shape[1]} columns, expected l_prime={config.l_prime}"
        )

    coeffs = getattr(pipeline, "coeffs", None)
    if coeffs is not None:
        chunk, _ = preproc.apply_streaming(coeffs, state.filter_state, chunk)

    n = config.n_train
    start = state.received
    stop = min(start + config.l_prime, n)
    if stop > start:
        state.buffer[:, start:stop] = chunk[:, : stop - start]
    state.received += config.l_prime
    l = state.received

    if l < config.l_min:
        return StepResult(decision=None)

    l_eff = min(l, n)
    window = state.buffer[:, :l_eff]
    if align_matrix is not None:
        window = align_matrix @ window
    full = front_end_replicate(window, n) if l_eff < n else window
    p, m = pipeline.classify_window(full)

    if l >= n:
        state.decided = True
        return StepResult(decision=Decision(pred=m, confidence=p, samples_used=n),
                          evaluated=True, prob=p, pred=m)
    if p >= config.tau:
        state.decided = True
        return StepResult(decision=Decision(pred=m, confidence=p, samples_used=l),
                          evaluated=True, prob=p, pred=m)
    return StepResult(decision=None, evaluated=True, prob=p, pred=m)


def iter_chunks(data: np.ndarray, l_prime: int):
    """Split a (C, S) array into consecutive (C, l_prime) chunks, tail dropped."""
    n_chunks = data.shape[1] // l_prime
    for k in range(n_chunks):
        yield data[:, k * l_prime:(k + 1) * l_prime]


def _drive(chunks, config: FrdwConfig, pipeline, align_matrix, trial_index: int,
           used_ea: bool) -> tuple[DecisionRecord, TrialStreamState]:
    state = None
    update_ms: list[float] = []
    for chunk in chunks:
        if state is None:
            state = new_stream_state(np.asarray(chunk).shape[0], config, pipeline)
        t0 = time.perf_counter()
        result = step(state, chunk, config, pipeline, align_matrix=align_matrix)
        elapsed_ms = (time.perf_counter() - t0) * 1e3
        if result.evaluated:
            update_ms.append(elapsed_ms)
        if result.decided:
            d = result.decision
            record = DecisionRecord(
                trial_index=trial_index,
                pred=d.pred,
                confidence=d.confidence,
                samples_used=d.samples_used,
                decision_time_s=d.samples_used / config.fs,
                update_ms=update_ms,
                used_ea=used_ea,
            )
            return record, state
    got = 0 if state is None else state.received
    raise StreamError(
        f"stream exhausted after {got} samples without a decision "
        f"(n_train={config.n_train})"
    )


def run_trial_within(chunks, config: FrdwConfig, pipeline,
                     trial_index: int = 0) -> DecisionRecord:
    """Drive one trial's chunk stream through the dynamic-window loop."""
    record, _ = _drive(chunks, config, pipeline, align_matrix=None,
                       trial_index=trial_index, used_ea=False)
    return record


def run_session_cross(trials: list[Trial], config: FrdwConfig, pipeline_no_ea,
                      pipeline_ea, ea_state: alignment.EaState,
                      chunker=None) -> list[DecisionRecord]:
    """Online cross-subject session: warm-up, freeze reference, then align.

    Trials ``1..n_ea`` are decided at full length by ``pipeline_no_ea`` while
    their (filtered) covariances accumulate into ``ea_state``; the reference
    is frozen after trial ``n_ea``.  Later trials are whitened with the saved
    inverse square root and decided by ``pipeline_ea`` under the regular
    dynamic-window loop.  ``chunker`` overrides how a trial is cut into
    chunks (the replay simulator injects a paced one).
    """
    if config.n_ea > len(trials):
        warnings.warn(
            f"warm-up needs {config.n_ea} trials but session has {len(trials)}; "
            "no aligned decisions will be made",
            RuntimeWarning, stacklevel=2,
        )
    if chunker is None:
        def chunker(t):
            return iter_chunks(t.data, config.l_prime)
    records = []
    warmup_config = replace(config, l_min=config.n_train, tau=UNREACHABLE_TAU)
    for index, trial in enumerate(trials, start=1):
        chunks = chunker(trial)
        if index <= config.n_ea:
            record, state = _drive(chunks, warmup_config, pipeline_no_ea,
                                   align_matrix=None, trial_index=index, used_ea=False)
            alignment.accumulate(
                ea_state, Trial(data=state.buffer, fs=trial.fs, label=trial.label)
            )
            if index == config.n_ea:
                alignment.finalize(ea_state)
        else:
            align_matrix = ea_state.ref_inv_sqrt if ea_state.finalized else None
            record, _ = _drive(chunks, config, pipeline_ea, align_matrix=align_matrix,
                               trial_index=index, used_ea=ea_state.finalized)
        records.append(record)
    return records
