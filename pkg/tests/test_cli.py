import json

import pytest

from dappbench.cli import main
from dappbench.experiment import RECORDS_CSV, RESOURCES_CSV, TRUTH_CSV, META_JSON
from dappbench.scenarios import scenario_path


@pytest.fixture(scope="module")
def smoke_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli-out")
    code = main(["run", str(scenario_path("smoke")), "--out-dir", str(out), "--no-resources"])
    assert code == 0
    return out / "smoke" / "main"


class TestRun:
    def test_bundle_files_written(self, smoke_bundle):
        for name in (RECORDS_CSV, TRUTH_CSV, RESOURCES_CSV, META_JSON):
            assert (smoke_bundle / name).exists()

    def test_meta_contents(self, smoke_bundle):
        meta = json.loads((smoke_bundle / META_JSON).read_text())
        assert meta["scenario"] == "smoke"
        assert meta["instances"][0]["kind"] == "EBS"
        assert meta["instances"][0]["records"] == 60

    def test_seed_override_reaches_workers(self, smoke_bundle, tmp_path):
        other = tmp_path / "b"
        assert main([
            "run", str(scenario_path("smoke")), "--seed", "1234",
            "--out-dir", str(other), "--no-resources",
        ]) == 0
        base_meta = json.loads((smoke_bundle / META_JSON).read_text())
        meta = json.loads((other / "smoke" / "main" / META_JSON).read_text())
        assert meta["seed"] == 1234
        assert meta["instances"][0]["seed"] != base_meta["instances"][0]["seed"]

    def test_out_dir_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DAPP_BENCH_OUT", str(tmp_path / "from-env"))
        assert main(["run", str(scenario_path("smoke")), "--no-resources"]) == 0
        assert (tmp_path / "from-env" / "smoke" / "main" / RECORDS_CSV).exists()

    def test_missing_scenario_errors(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.json")]) == 2
        assert "error:" in capsys.readouterr().err


class TestReadouts:
    def test_summarize_bundle(self, smoke_bundle, capsys):
        assert main(["summarize", str(smoke_bundle)]) == 0
        out = capsys.readouterr().out
        assert "count            60" in out
        assert "violation rate" in out

    def test_compare_identical(self, smoke_bundle, capsys):
        assert main(["compare", str(smoke_bundle), str(smoke_bundle)]) == 0
        out = capsys.readouterr().out
        assert "mean       +0.0%" in out

    def test_plotdata_cdf(self, smoke_bundle, capsys):
        assert main(["plotdata", str(smoke_bundle), "--kind", "cdf"]) == 0
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "latency_ms,fraction"

    def test_plotdata_phase_bars_to_file(self, smoke_bundle, tmp_path):
        target = tmp_path / "bars.csv"
        assert main(["plotdata", str(smoke_bundle), "--kind", "phase-bars", "--out", str(target)]) == 0
        assert target.read_text().splitlines()[0] == "p1_ms,p2_ms,p3_ms,p4_ms,rtt_ms,total_ms"

    def test_plotdata_sweep_over_scenario_root(self, smoke_bundle, capsys):
        root = smoke_bundle.parent
        assert main(["plotdata", str(root), "--kind", "sweep"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "arm,x,count,mean_ms,p95_ms,max_ms,violation_rate"
        assert len(lines) == 2


def test_kernels_subcommand(capsys, tmp_path):
    csv_path = tmp_path / "kernels.csv"
    assert main(["kernels", "--scale", "0.02", "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert "fcn_forward/3072" in out
    assert csv_path.exists()
