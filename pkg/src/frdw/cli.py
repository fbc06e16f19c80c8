"""Command-line entry point: train, replay, sweep, bench, validate-bundle.

Every command reads an optional JSON config file; flags override file values
and ``FRDW_SEED`` is the seed fallback.  All outputs (pipelines, record
logs, CSV tables, figures, config echo) land in the configured output
directory, one file per subject so parallel runs never interleave.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 unexpected
runtime failure.  Deadline overruns and solver non-convergence are reported
as warnings, not failures.
"""

from __future__ import annotations

import argparse
import csv as _csv
import json
import math
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from . import metrics, replay, report, synth
from .bundle import SubjectData, ValidationPolicy, load_bundle, write_bundle
from .controller import FrdwConfig, UNREACHABLE_TAU
from .errors import BundleError, ConfigError, FrdwError
from .pipeline import (ClassifierSpec, TrainSettings, load_pipeline, save_pipeline,
                       train_cross_subject, train_within_subject)

STRATEGIES = ("fw", "frdw", "ea_fw", "ea_frdw")


@dataclass
class ExperimentConfig:
    """Declarative run description; serializable to/from JSON."""

    bundle: str = ""
    outdir: str = "frdw_out"
    mode: str = "within"
    seed: int = 0
    subjects: list[str] | None = None
    strategy: str = "frdw"
    jobs: int = 1
    # classifier
    classifier: str = "logreg"
    l2: float = 1e-2
    kernel: str = ""              # "" -> mode default (rbf within, linear cross)
    svm_c: float = 0.0            # 0 -> mode default (0.1 within, 1.0 cross)
    gamma: float | None = None
    # augmentation
    scheme: str = "none"
    stride: int = 25
    fr_ratio: float = 0.7
    # controller
    l_prime: int = 10
    l_min: int = 60
    tau: float = 0.7
    n_ea: int = 10
    # training
    candidate_n: list[int] = field(default_factory=lambda: [100, 125, 150, 200, 250,
                                                            500, 750])
    val_policy: str = "last_k_per_class"
    val_k: int = 12
    val_fraction: float = 0.2
    n_filters: int | None = None
    rows_per_class: int = 4
    # sweep / bench
    sweep_l_min: list[int] = field(default_factory=lambda: [30, 60, 90, 120, 150])
    sweep_tau: list[float] = field(default_factory=lambda: [0.3, 0.5, 0.7, 0.9])
    sweep_n: int = 0              # 0 -> smallest candidate_n
    bench_trials: int = 20
    realtime: bool = False

    def validate(self):
        if not self.bundle:
            raise ConfigError("a bundle path is required (--bundle or config file)")
        if self.mode not in ("within", "cross"):
            raise ConfigError(f"mode must be within|cross, got {self.mode!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy.startswith("ea_") and self.mode != "cross":
            raise ConfigError(f"strategy {self.strategy!r} requires cross mode")
        if not (0.0 <= self.tau <= 1.0):
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if self.mode == "cross" and self.n_ea < 1:
            raise ConfigError("cross mode needs n_ea >= 1")
        if not self.candidate_n:
            raise ConfigError("candidate_n must be non-empty")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def validation_policy(self) -> ValidationPolicy:
        if self.val_policy == "last_k_per_class":
            return ValidationPolicy(kind="last_k_per_class", k=self.val_k)
        if self.val_policy == "last_fraction":
            return ValidationPolicy(kind="last_fraction", fraction=self.val_fraction)
        raise ConfigError(f"unknown validation policy {self.val_policy!r}")

    def classifier_spec(self) -> ClassifierSpec:
        kernel = self.kernel or ("rbf" if self.mode == "within" else "linear")
        c = self.svm_c or (0.1 if self.mode == "within" else 1.0)
        return ClassifierSpec(kind=self.classifier, l2=self.l2, kernel=kernel, c=c,
                              gamma=self.gamma)

    def train_settings(self, fs: float) -> TrainSettings:
        base = FrdwConfig(n_train=max(self.candidate_n), l_min=self.l_min,
                          l_prime=self.l_prime, tau=self.tau, n_ea=self.n_ea,
                          mode=self.mode, fs=fs)
        return TrainSettings(
            candidate_n=tuple(self.candidate_n), scheme=self.scheme,
            stride=self.stride, fr_ratio=self.fr_ratio,
            clf_spec=self.classifier_spec(), frdw=base,
            validation=self.validation_policy(), n_filters=self.n_filters,
            rows_per_class=self.rows_per_class,
        )


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig()
    seed_given = False
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
        known = set(cfg.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
        seed_given = "seed" in data
    for name in cfg.__dataclass_fields__:
        flag = getattr(args, name, None)
        if flag is not None:
            setattr(cfg, name, flag)
            if name == "seed":
                seed_given = True
    if not seed_given and "FRDW_SEED" in os.environ:
        cfg.seed = int(os.environ["FRDW_SEED"])
    cfg.validate()
    return cfg


def _echo_config(cfg: ExperimentConfig, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config_echo.json").write_text(
        json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _select_subjects(bundle, cfg):
    if cfg.subjects:
        wanted = set(cfg.subjects)
        subs = [s for s in bundle.subjects if s.id in wanted]
        missing = wanted - {s.id for s in subs}
        if missing:
            raise ConfigError(f"subjects not in bundle: {sorted(missing)}")
        return subs
    return bundle.subjects


def _pipeline_dir(cfg) -> Path:
    return Path(cfg.outdir) / "pipelines"


def _train_one(subject_id: str, cfg_json: str) -> dict:
    """Worker: train one subject (the unit of --jobs parallelism)."""
    cfg = ExperimentConfig(**json.loads(cfg_json))
    bundle = load_bundle(cfg.bundle)
    settings = cfg.train_settings(bundle.fs)
    pdir = _pipeline_dir(cfg)
    pdir.mkdir(parents=True, exist_ok=True)
    if cfg.mode == "within":
        subject = next(s for s in bundle.subjects if s.id == subject_id)
        pipe, info = train_within_subject(subject, bundle, settings)
        save_pipeline(pipe, pdir / f"{subject_id}.json")
    else:
        pno, pea, info = train_cross_subject(bundle, subject_id, settings)
        save_pipeline(pno, pdir / f"{subject_id}__no_ea.json")
        save_pipeline(pea, pdir / f"{subject_id}__ea.json")
    return {"subject": subject_id, **info}


def cmd_train(cfg: ExperimentConfig) -> int:
    bundle = load_bundle(cfg.bundle)
    subjects = _select_subjects(bundle, cfg)
    outdir = Path(cfg.outdir)
    _echo_config(cfg, outdir)
    cfg_json = json.dumps(asdict(cfg))
    results = []
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            futures = [pool.submit(_train_one, s.id, cfg_json) for s in subjects]
            results = [f.result() for f in futures]
    else:
        for s in subjects:
            results.append(_train_one(s.id, cfg_json))
    (outdir / "train_summary.json").write_text(
        json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    for r in results:
        print(f"trained {r['subject']}: chosen_n={r['chosen_n']}")
    return 0


def _replay_config(cfg: ExperimentConfig, n_train: int, fs: float) -> FrdwConfig:
    tau = cfg.tau
    if cfg.strategy in ("fw", "ea_fw"):
        tau = UNREACHABLE_TAU
    mode = "cross" if cfg.strategy.startswith("ea_") else "within"
    return FrdwConfig(n_train=n_train, l_min=min(cfg.l_min, n_train),
                      l_prime=cfg.l_prime, tau=tau, n_ea=cfg.n_ea, mode=mode, fs=fs)


def _load_pipelines_for(cfg: ExperimentConfig, subject_id: str) -> dict:
    pdir = _pipeline_dir(cfg)
    if cfg.mode == "within":
        path = pdir / f"{subject_id}.json"
        if not path.is_file():
            raise ConfigError(f"missing pipeline file {path}; run train first")
        return {"within": load_pipeline(path)}
    pno = pdir / f"{subject_id}__no_ea.json"
    pea = pdir / f"{subject_id}__ea.json"
    if not pno.is_file() or not pea.is_file():
        raise ConfigError(f"missing pipeline pair for {subject_id}; run train first")
    return {"no_ea": load_pipeline(pno), "ea": load_pipeline(pea)}


def cmd_replay(cfg: ExperimentConfig) -> int:
    bundle = load_bundle(cfg.bundle)
    subjects = _select_subjects(bundle, cfg)
    outdir = Path(cfg.outdir)
    records_dir = outdir / "records"
    records_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(cfg, outdir)
    plan = replay.ReplayPlan(clock=replay.REALTIME if cfg.realtime else replay.SIMULATED,
                             l_prime=cfg.l_prime, seed=cfg.seed, bundle_path=cfg.bundle)
    per_subject = {}
    rows = []
    for subject in subjects:
        pipelines = _load_pipelines_for(cfg, subject.id)
        any_pipe = pipelines.get("within") or pipelines["no_ea"]
        rcfg = _replay_config(cfg, any_pipe.n_train, bundle.fs)
        if cfg.strategy in ("fw", "frdw") and cfg.mode == "cross":
            # unaligned strategies in a cross experiment use the no-EA model per trial
            pipelines = {"within": pipelines["no_ea"]}
            rcfg = replace(rcfg, mode="within")
        records, stats = replay.replay_subject(plan, subject, rcfg, pipelines)
        labels = [t.label for t in subject.test_trials[: len(records)]]
        (records_dir / f"{subject.id}_{cfg.strategy}.jsonl").write_text(
            replay.records_to_jsonl(records, labels), encoding="utf-8"
        )
        sm = metrics.session_metrics(records, labels, bundle.n_classes)
        per_subject[subject.id] = {
            "acc": sm.acc, "itr": sm.itr, "mean_time_s": sm.mean_time_s,
            "decision_times_s": [r.decision_time_s for r in records],
            "latency_mean_ms": stats.mean_ms, "overruns": stats.overruns,
        }
        rows.append([subject.id, rcfg.l_min, cfg.tau, cfg.scheme, sm.acc, sm.itr,
                     sm.mean_time_s])
        print(f"{subject.id}: acc={sm.acc:.3f} itr={sm.itr:.2f} bits/min "
              f"T={sm.mean_time_s:.3f}s")

    with (outdir / f"metrics_{cfg.strategy}.csv").open("w", newline="",
                                                       encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["subject"] + metrics.SWEEP_CSV_HEADER)
        writer.writerows(rows)
    report.save_replay_figure(per_subject, outdir / f"replay_{cfg.strategy}.png")
    return 0


def cmd_sweep(cfg: ExperimentConfig) -> int:
    bundle = load_bundle(cfg.bundle)
    subjects = _select_subjects(bundle, cfg)
    outdir = Path(cfg.outdir)
    _echo_config(cfg, outdir)
    n_train = cfg.sweep_n or min(cfg.candidate_n)
    settings = cfg.train_settings(bundle.fs)

    trained: dict[str, dict] = {}

    def ensure_trained(scheme: str) -> dict:
        if scheme not in trained:
            pipes = {}
            for s in subjects:
                sub_settings = replace(settings, scheme=scheme,
                                       candidate_n=(n_train,))
                pipe, _ = train_within_subject(s, bundle, sub_settings)
                pipes[s.id] = pipe
            trained[scheme] = pipes
        return trained[scheme]

    def replay_cell(scheme: str, l_min: int, tau: float):
        pipes = ensure_trained(scheme)
        pooled_records, pooled_labels = [], []
        plan = replay.ReplayPlan(l_prime=cfg.l_prime, seed=cfg.seed)
        for s in subjects:
            rcfg = FrdwConfig(n_train=n_train, l_min=min(l_min, n_train),
                              l_prime=cfg.l_prime, tau=tau, mode="within",
                              fs=bundle.fs)
            records, _ = replay.replay_subject(plan, s, rcfg, {"within": pipes[s.id]})
            pooled_records.extend(records)
            pooled_labels.extend(t.label for t in s.test_trials[: len(records)])
        return pooled_records, pooled_labels, bundle.n_classes

    result = metrics.sensitivity_sweep(replay_cell, cfg.sweep_l_min, cfg.sweep_tau,
                                       schemes=(cfg.scheme,) if cfg.scheme != "none"
                                       else ("none", "overlap", "fr"))
    (outdir / "sweep.csv").write_text(result.to_csv(), encoding="utf-8")
    report.save_sweep_figure(result, outdir / "sweep.png")
    print(_pretty_table(result))
    failed = [c for c in result.cells if c.metrics is None]
    if failed:
        print(f"warning: {len(failed)} sweep cell(s) failed", file=sys.stderr)
    return 0


def cmd_bench(cfg: ExperimentConfig) -> int:
    bundle = load_bundle(cfg.bundle)
    subjects = _select_subjects(bundle, cfg)
    outdir = Path(cfg.outdir)
    _echo_config(cfg, outdir)
    subject = subjects[0]
    pipelines = _load_pipelines_for(cfg, subject.id)
    any_pipe = pipelines.get("within") or pipelines["no_ea"]
    rcfg = _replay_config(cfg, any_pipe.n_train, bundle.fs)
    limited = _limit_test_trials(subject, cfg.bench_trials)
    plan = replay.ReplayPlan(clock=replay.REALTIME if cfg.realtime else replay.SIMULATED,
                             l_prime=cfg.l_prime, seed=cfg.seed)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        records, stats = replay.replay_subject(plan, limited, rcfg, pipelines)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    all_ms = [ms for r in records for ms in r.update_ms]
    summary = {
        "subject": subject.id,
        "n_trials": len(records),
        "n_updates": stats.n_updates,
        "mean_ms": stats.mean_ms,
        "std_ms": stats.std_ms,
        "max_ms": stats.max_ms,
        "tick_ms": stats.tick_ms,
        "overruns": stats.overruns,
        "per_model": {k: vars(v) for k, v in stats.per_model.items()},
    }
    (outdir / "bench.json").write_text(json.dumps(summary, indent=2, sort_keys=True)
                                       + "\n", encoding="utf-8")
    report.save_latency_figure(all_ms, stats.tick_ms, outdir / "bench_latency.png")
    print(f"bench {subject.id}: mean={stats.mean_ms:.3f} ms std={stats.std_ms:.3f} "
          f"max={stats.max_ms:.3f} over {stats.n_updates} updates; "
          f"overruns(>{stats.tick_ms:g} ms)={stats.overruns}")
    return 0


def _limit_test_trials(subject, limit: int):
    if limit and limit < len(subject.test_trials):
        return SubjectData(id=subject.id, train_trials=subject.train_trials,
                           test_trials=subject.test_trials[:limit])
    return subject


def cmd_validate_bundle(cfg: ExperimentConfig) -> int:
    bundle = load_bundle(cfg.bundle)
    n_train = len(bundle.subjects[0].train_trials)
    n_test = len(bundle.subjects[0].test_trials)
    print(f"bundle ok: {len(bundle.subjects)} subjects, {bundle.n_channels} channels, "
          f"{bundle.n_classes} classes, fs={bundle.fs:g} Hz, "
          f"{n_train}/{n_test} train/test trials (first subject)")
    return 0


def cmd_synth(cfg: ExperimentConfig, args) -> int:
    bundle = synth.make_synthetic_bundle(
        n_subjects=args.n_subjects, n_classes=args.n_classes,
        n_channels=args.n_channels, trial_len=args.trial_len,
        n_train=args.n_train_trials, n_test=args.n_test_trials, seed=cfg.seed,
    )
    write_bundle(bundle, cfg.bundle)
    print(f"wrote synthetic bundle to {cfg.bundle}")
    return 0


def _pretty_table(result) -> str:
    lines = [" ".join(f"{h:>10}" for h in metrics.SWEEP_CSV_HEADER)]
    for row in result.rows():
        cells = []
        for v in row:
            if isinstance(v, float):
                cells.append(f"{v:>10.4f}" if not math.isnan(v) else f"{'failed':>10}")
            else:
                cells.append(f"{v:>10}")
        lines.append(" ".join(cells))
    return "\n".join(lines)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--bundle", help="bundle directory")
    parser.add_argument("--outdir", help="output directory")
    parser.add_argument("--mode", choices=["within", "cross"])
    parser.add_argument("--seed", type=int, help="RNG seed (FRDW_SEED fallback)")
    parser.add_argument("--subjects", nargs="+", help="subset of subject ids")
    parser.add_argument("--classifier", choices=["logreg", "svm"])
    parser.add_argument("--scheme", choices=["none", "overlap", "fr"])
    parser.add_argument("--stride", type=int)
    parser.add_argument("--fr-ratio", dest="fr_ratio", type=float)
    parser.add_argument("--l-prime", dest="l_prime", type=int)
    parser.add_argument("--l-min", dest="l_min", type=int)
    parser.add_argument("--tau", type=float)
    parser.add_argument("--n-ea", dest="n_ea", type=int)
    parser.add_argument("--candidate-n", dest="candidate_n", nargs="+", type=int)
    parser.add_argument("--val-policy", dest="val_policy",
                        choices=["last_k_per_class", "last_fraction"])
    parser.add_argument("--val-k", dest="val_k", type=int)
    parser.add_argument("--val-fraction", dest="val_fraction", type=float)
    parser.add_argument("--jobs", type=int)
    parser.add_argument("--realtime", action="store_const", const=True, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frdw",
                                     description="Streaming motor-imagery decoding "
                                                 "with dynamic windows")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="fit per-subject pipelines")
    _add_common(p_train)

    p_replay = sub.add_parser("replay", help="replay test trials online")
    _add_common(p_replay)
    p_replay.add_argument("--strategy", choices=list(STRATEGIES))

    p_sweep = sub.add_parser("sweep", help="sensitivity sweep over (l_min, tau)")
    _add_common(p_sweep)
    p_sweep.add_argument("--sweep-l-min", dest="sweep_l_min", nargs="+", type=int)
    p_sweep.add_argument("--sweep-tau", dest="sweep_tau", nargs="+", type=float)
    p_sweep.add_argument("--sweep-n", dest="sweep_n", type=int)

    p_bench = sub.add_parser("bench", help="latency benchmark against the tick budget")
    _add_common(p_bench)
    p_bench.add_argument("--strategy", choices=list(STRATEGIES))
    p_bench.add_argument("--bench-trials", dest="bench_trials", type=int)

    p_val = sub.add_parser("validate-bundle", help="validate a bundle directory")
    _add_common(p_val)

    p_synth = sub.add_parser("synth", help="generate a synthetic demo bundle")
    _add_common(p_synth)
    p_synth.add_argument("--n-subjects", type=int, default=3)
    p_synth.add_argument("--n-classes", type=int, default=2)
    p_synth.add_argument("--n-channels", type=int, default=22)
    p_synth.add_argument("--trial-len", type=int, default=750)
    p_synth.add_argument("--n-train-trials", type=int, default=24)
    p_synth.add_argument("--n-test-trials", type=int, default=16)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "replay":
            return cmd_replay(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg)
        if args.command == "bench":
            return cmd_bench(cfg)
        if args.command == "validate-bundle":
            return cmd_validate_bundle(cfg)
        if args.command == "synth":
            return cmd_synth(cfg, args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except BundleError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except FrdwError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
