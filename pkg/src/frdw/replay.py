"""Replay recorded trials as a chunked online stream and collect latency.

Each trial is emitted as consecutive fixed-size chunks, one per acquisition
tick (10 samples / 40 ms at 250 Hz).  The simulated clock runs as fast as
possible and is fully deterministic in its decisions; the realtime clock
sleeps out each tick's remainder and reports deadline overruns without
aborting the run.
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import alignment, controller
from .bundle import SubjectData, Trial
from .controller import DecisionRecord, FrdwConfig
from .errors import ConfigError

SIMULATED = "simulated"
REALTIME = "realtime"


@dataclass(frozen=True)
class ReplayPlan:
    """How trials are streamed: chunk size, tick, clock."""

    clock: str = SIMULATED
    l_prime: int = 10
    tick_ms: float | None = None      # None: derived as 1000 * l_prime / fs
    seed: int = 0
    bundle_path: str | None = None

    def __post_init__(self):
        if self.clock not in (SIMULATED, REALTIME):
            raise ConfigError(f"clock must be simulated or realtime, got {self.clock!r}")
        if self.l_prime < 1:
            raise ConfigError(f"l_prime must be >= 1, got {self.l_prime}")

    def resolve_tick_ms(self, fs: float) -> float:
        derived = 1000.0 * self.l_prime / fs
        if self.tick_ms is None:
            return derived
        if not math.isclose(self.tick_ms, derived, rel_tol=1e-9):
            raise ConfigError(
                f"tick {self.tick_ms} ms inconsistent with l_prime/fs = {derived} ms"
            )
        return self.tick_ms


@dataclass
class ModelLatency:
    mean_ms: float
    std_ms: float
    max_ms: float
    n_updates: int


@dataclass
class LatencyStats:
    """Per-update compute time statistics over a whole replay."""

    mean_ms: float
    std_ms: float
    max_ms: float
    n_updates: int
    tick_ms: float
    overruns: int
    per_model: dict[str, ModelLatency] = field(default_factory=dict)


def make_stream(trial: Trial, l_prime: int) -> list[np.ndarray]:
    """Consecutive (C, l_prime) chunks; a ragged tail is dropped."""
    return [c.copy() for c in controller.iter_chunks(trial.data, l_prime)]


def _paced(chunks, tick_s: float):
    start = time.perf_counter()
    for k, chunk in enumerate(chunks):
        due = start + k * tick_s
        now = time.perf_counter()
        if due > now:
            time.sleep(due - now)
        yield chunk


def latency_from_records(records: list[DecisionRecord], tick_ms: float,
                         model_of=None) -> LatencyStats:
    """Aggregate per-update compute times (one entry per classify call)."""
    all_ms, groups = [], {}
    for r in records:
        all_ms.extend(r.update_ms)
        key = model_of(r) if model_of else "all"
        groups.setdefault(key, []).extend(r.update_ms)
    if not all_ms:
        return LatencyStats(0.0, 0.0, 0.0, 0, tick_ms, 0)
    arr = np.asarray(all_ms)
    per_model = {
        k: ModelLatency(float(np.mean(v)), float(np.std(v)), float(np.max(v)), len(v))
        for k, v in groups.items()
    }
    return LatencyStats(
        mean_ms=float(arr.mean()),
        std_ms=float(arr.std()),
        max_ms=float(arr.max()),
        n_updates=len(all_ms),
        tick_ms=tick_ms,
        overruns=int((arr > tick_ms).sum()),
        per_model=per_model,
    )


def replay_subject(plan: ReplayPlan, subject: SubjectData, config: FrdwConfig,
                   pipelines: dict) -> tuple[list[DecisionRecord], LatencyStats]:
    """Stream every test trial of one subject through the decision loop.

    ``pipelines`` holds ``{"within": p}`` for within-subject replay or
    ``{"no_ea": p, "ea": p}`` for the cross-subject protocol.  Trials run
    strictly in arrival order (the warm-up depends on it).
    """
    trials = subject.test_trials
    fs = trials[0].fs
    tick_ms = plan.resolve_tick_ms(fs)
    realtime = plan.clock == REALTIME

    if config.mode == controller.CROSS:
        if "no_ea" not in pipelines or "ea" not in pipelines:
            raise ConfigError("cross-mode replay needs 'no_ea' and 'ea' pipelines")
        chunker = None
        if realtime:
            def chunker(t):
                return _paced(controller.iter_chunks(t.data, config.l_prime),
                              tick_ms / 1000.0)
        records = controller.run_session_cross(
            trials, config, pipelines["no_ea"], pipelines["ea"],
            alignment.EaState(n_channels=trials[0].n_channels),
            chunker=chunker,
        )
        stats = latency_from_records(
            records, tick_ms, model_of=lambda r: "ea" if r.used_ea else "no_ea"
        )
    else:
        pipe = pipelines.get("within") or pipelines.get("no_ea")
        if pipe is None:
            raise ConfigError("within-mode replay needs a 'within' pipeline")
        records = []
        for i, t in enumerate(trials):
            chunks = controller.iter_chunks(t.data, config.l_prime)
            if realtime:
                chunks = _paced(chunks, tick_ms / 1000.0)
            records.append(controller.run_trial_within(chunks, config, pipe,
                                                       trial_index=i))
        stats = latency_from_records(records, tick_ms, model_of=lambda r: "within")

    if realtime and stats.overruns:
        warnings.warn(
            f"{stats.overruns} update(s) exceeded the {tick_ms:.1f} ms tick",
            RuntimeWarning, stacklevel=2,
        )
    return records, stats


def records_to_jsonl(records: list[DecisionRecord], labels) -> str:
    """One JSON object per decision, matching the documented log schema."""
    lines = []
    for r, label in zip(records, labels):
        lines.append(json.dumps({
            "trial": r.trial_index,
            "label": label,
            "pred": r.pred,
            "p": r.confidence,
            "samples_used": r.samples_used,
            "decision_time_s": r.decision_time_s,
            "update_ms": r.update_ms,
            "used_ea": r.used_ea,
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def records_from_jsonl(text: str) -> tuple[list[DecisionRecord], list]:
    records, labels = [], []
    for line in text.strip().splitlines():
        d = json.loads(line)
        records.append(DecisionRecord(
            trial_index=d["trial"], pred=d["pred"], confidence=d["p"],
            samples_used=d["samples_used"], decision_time_s=d["decision_time_s"],
            update_ms=list(d["update_ms"]), used_ea=d["used_ea"],
        ))
        labels.append(d["label"])
    return records, labels
