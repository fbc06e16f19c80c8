import csv
import json

import pytest

import frdw
from frdw.cli import main
from frdw.replay import records_from_jsonl


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Synthetic bundle plus trained within-subject pipelines."""
    root = tmp_path_factory.mktemp("cli")
    bundle_dir = root / "bundle"
    outdir = root / "out"
    bundle = frdw.make_synthetic_bundle(n_subjects=2, n_classes=2, n_channels=8,
                                        trial_len=750, n_train=12, n_test=8, seed=33)
    frdw.write_bundle(bundle, bundle_dir)
    rc = main(["train", "--bundle", str(bundle_dir), "--outdir", str(outdir),
               "--candidate-n", "100", "250", "--scheme", "fr",
               "--val-policy", "last_k_per_class", "--val-k", "2", "--seed", "5"])
    assert rc == 0
    return {"bundle": bundle_dir, "outdir": outdir}


class TestTrain:
    def test_pipeline_files_written(self, workspace):
        pdir = workspace["outdir"] / "pipelines"
        assert (pdir / "S01.json").is_file()
        assert (pdir / "S02.json").is_file()
        assert (workspace["outdir"] / "train_summary.json").is_file()
        assert (workspace["outdir"] / "config_echo.json").is_file()

    def test_rerun_is_byte_identical(self, workspace, tmp_path):
        out2 = tmp_path / "out2"
        rc = main(["train", "--bundle", str(workspace["bundle"]),
                   "--outdir", str(out2), "--candidate-n", "100", "250",
                   "--scheme", "fr", "--val-policy", "last_k_per_class",
                   "--val-k", "2", "--seed", "5"])
        assert rc == 0
        for name in ("S01.json", "S02.json"):
            assert (out2 / "pipelines" / name).read_bytes() == \
                   (workspace["outdir"] / "pipelines" / name).read_bytes()

    def test_parallel_train_matches_serial(self, workspace, tmp_path):
        out2 = tmp_path / "outp"
        rc = main(["train", "--bundle", str(workspace["bundle"]),
                   "--outdir", str(out2), "--candidate-n", "100", "250",
                   "--scheme", "fr", "--val-policy", "last_k_per_class",
                   "--val-k", "2", "--seed", "5", "--jobs", "2"])
        assert rc == 0
        assert (out2 / "pipelines" / "S01.json").read_bytes() == \
               (workspace["outdir"] / "pipelines" / "S01.json").read_bytes()


class TestReplay:
    def _run(self, workspace, strategy):
        rc = main(["replay", "--bundle", str(workspace["bundle"]),
                   "--outdir", str(workspace["outdir"]), "--strategy", strategy,
                   "--l-min", "60", "--tau", "0.7", "--seed", "5"])
        assert rc == 0

    def test_frdw_never_slower_than_fw(self, workspace):
        self._run(workspace, "fw")
        self._run(workspace, "frdw")
        rdir = workspace["outdir"] / "records"
        for subject in ("S01", "S02"):
            fw, _ = records_from_jsonl(
                (rdir / f"{subject}_fw.jsonl").read_text())
            dw, _ = records_from_jsonl(
                (rdir / f"{subject}_frdw.jsonl").read_text())
            for a, b in zip(dw, fw):
                assert a.samples_used <= b.samples_used

    def test_metrics_csv_rederivable_from_record_log(self, workspace):
        self._run(workspace, "frdw")
        outdir = workspace["outdir"]
        with (outdir / "metrics_frdw.csv").open() as fh:
            rows = {r["subject"]: r for r in csv.DictReader(fh)}
        for subject, row in rows.items():
            records, labels = records_from_jsonl(
                (outdir / "records" / f"{subject}_frdw.jsonl").read_text())
            sm = frdw.session_metrics(records, labels, 2)
            assert abs(float(row["acc"]) - sm.acc) < 1e-12
            assert abs(float(row["itr"]) - sm.itr) < 1e-9
            assert abs(float(row["mean_time_s"]) - sm.mean_time_s) < 1e-12

    def test_figure_rendered_alongside_csv(self, workspace):
        self._run(workspace, "frdw")
        png = workspace["outdir"] / "replay_frdw.png"
        assert png.is_file() and png.stat().st_size > 1000

    def test_ea_strategy_in_within_mode_is_usage_error(self, workspace):
        rc = main(["replay", "--bundle", str(workspace["bundle"]),
                   "--outdir", str(workspace["outdir"]), "--strategy", "ea_frdw"])
        assert rc == 1


class TestSweep:
    def test_small_grid_produces_complete_csv_and_figure(self, workspace, tmp_path):
        outdir = tmp_path / "sweep_out"
        rc = main(["sweep", "--bundle", str(workspace["bundle"]),
                   "--outdir", str(outdir), "--scheme", "fr",
                   "--candidate-n", "100", "--sweep-l-min", "60", "100",
                   "--sweep-tau", "0.3", "0.8", "--val-policy", "last_k_per_class",
                   "--val-k", "2", "--seed", "5"])
        assert rc == 0
        lines = (outdir / "sweep.csv").read_text().strip().splitlines()
        assert lines[0] == "l_min,tau,scheme,acc,itr,mean_time_s"
        assert len(lines) == 1 + 4  # 2 l_min x 2 tau x 1 scheme
        png = outdir / "sweep.png"
        assert png.is_file() and png.stat().st_size > 1000

    def test_empty_grid_is_usage_error(self, workspace, tmp_path):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({
            "bundle": str(workspace["bundle"]), "outdir": str(tmp_path / "o"),
            "sweep_l_min": [], "candidate_n": [100],
            "val_policy": "last_k_per_class", "val_k": 2,
        }))
        rc = main(["sweep", "--config", str(cfgfile)])
        assert rc == 1


class TestBench:
    def test_bench_report_consistent(self, workspace):
        rc = main(["bench", "--bundle", str(workspace["bundle"]),
                   "--outdir", str(workspace["outdir"]), "--strategy", "fw",
                   "--l-min", "60", "--bench-trials", "4", "--seed", "5"])
        assert rc == 0
        summary = json.loads((workspace["outdir"] / "bench.json").read_text())
        records, _ = records_from_jsonl(
            (workspace["outdir"] / "records" / "S01_fw.jsonl").read_text())
        assert summary["n_updates"] > 0
        assert summary["mean_ms"] < summary["tick_ms"]
        assert (workspace["outdir"] / "bench_latency.png").is_file()

    def test_bench_mean_matches_logged_updates(self, workspace, tmp_path):
        outdir = tmp_path / "bench_out"
        # reuse the trained pipelines by pointing outdir at a copy
        import shutil
        shutil.copytree(workspace["outdir"] / "pipelines", outdir / "pipelines")
        rc = main(["bench", "--bundle", str(workspace["bundle"]),
                   "--outdir", str(outdir), "--strategy", "frdw",
                   "--l-min", "60", "--tau", "0.7", "--bench-trials", "3",
                   "--seed", "5"])
        assert rc == 0
        summary = json.loads((outdir / "bench.json").read_text())
        per_model = summary["per_model"]
        total = sum(v["n_updates"] for v in per_model.values())
        assert total == summary["n_updates"]


class TestValidateAndSynth:
    def test_synth_then_validate(self, tmp_path):
        bdir = tmp_path / "b"
        rc = main(["synth", "--bundle", str(bdir), "--n-subjects", "2",
                   "--n-channels", "4", "--trial-len", "300",
                   "--n-train-trials", "4", "--n-test-trials", "4", "--seed", "1"])
        assert rc == 0
        assert main(["validate-bundle", "--bundle", str(bdir)]) == 0

    def test_validate_corrupt_bundle_exits_2(self, tmp_path):
        bdir = tmp_path / "b"
        main(["synth", "--bundle", str(bdir), "--n-subjects", "2",
              "--n-channels", "4", "--trial-len", "300", "--n-train-trials", "4",
              "--n-test-trials", "4", "--seed", "1"])
        payload = next(bdir.glob("*_train.f32"))
        payload.write_bytes(payload.read_bytes()[:-8])
        assert main(["validate-bundle", "--bundle", str(bdir)]) == 2

    def test_missing_bundle_is_config_error(self):
        assert main(["validate-bundle"]) == 1

    def test_seed_env_fallback(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FRDW_SEED", "77")
        bdir = tmp_path / "b"
        rc = main(["synth", "--bundle", str(bdir), "--n-subjects", "1",
                   "--n-channels", "3", "--trial-len", "200",
                   "--n-train-trials", "2", "--n-test-trials", "2"])
        assert rc == 0
        manifest = json.loads((bdir / "manifest.json").read_text())
        assert manifest["seed"] == 77
