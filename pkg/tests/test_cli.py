import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from losml.cli import RunConfig, main
from losml.errors import ConfigError

FAST = ["--spec", "tiny", "--seed", "3", "--n-boot", "200", "--compare-boot", "200", "--shap-boot", "100",
        "--cv-repeats", "1", "--shap-rows", "8", "--shap-background", "20", "--suppress-volatile"]

EXPECTED = [
    "manifest.json", "data/data.csv", "data/schema.json", "prep/prepped.csv", "prep/plan.json",
    "prep/summary.csv", "select/table2.csv", "select/selected.json", "model/model.json",
    "model/baseline.json", "eval/metrics.json", "eval/table3.csv", "eval/roc.csv",
    "eval/calibration.csv", "eval/comparison.json", "explain/shap_values.csv", "explain/table4.csv",
    "explain/beeswarm.csv", "plots/roc.svg", "plots/calibration.svg", "plots/beeswarm.svg",
]


def files(root: Path):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory):
    roots = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"run{k}")
        assert main(["pipeline", *FAST, "--output-dir", str(out)]) == 0
        roots.append(out / "tiny-seed3")
    return roots


class TestPipeline:
    def test_layout(self, tiny_runs):
        root = tiny_runs[0]
        for rel in EXPECTED:
            assert (root / rel).is_file(), rel

    def test_byte_identical_reruns(self, tiny_runs):
        assert files(tiny_runs[0]) == files(tiny_runs[1])

    def test_manifest(self, tiny_runs):
        m = json.loads((tiny_runs[0] / "manifest.json").read_text())
        assert m["config"]["seed"] == 3 and "timings_seconds" not in m
        assert m["seeds"]["master"] == 3
        assert set(m["seeds"]) >= {"synth", "prep", "select", "train", "evaluate", "compare", "explain"}
        for rel, digest in m["artifacts"].items():
            assert hashlib.sha256((tiny_runs[0] / rel).read_bytes()).hexdigest() == digest

    def test_svgs_suppressed(self, tiny_runs):
        for name in ("roc", "calibration", "beeswarm"):
            text = (tiny_runs[0] / "plots" / f"{name}.svg").read_text()
            assert text.startswith("<svg") and "generated suppressed" in text

    def test_table_shapes(self, tiny_runs):
        t2 = (tiny_runs[0] / "select/table2.csv").read_text().splitlines()
        assert t2[0].startswith("method,") and t2[1].startswith("baseline,")
        t3 = (tiny_runs[0] / "eval/table3.csv").read_text()
        assert "stacking" in t3 and "logistic" in t3
        t4 = (tiny_runs[0] / "explain/table4.csv").read_text().splitlines()
        assert t4[0].startswith("rank,feature,mean_abs_shap")

    def test_compare_self_is_half(self, tiny_runs, tmp_path):
        root = tiny_runs[0]
        rc = main(["compare", *FAST, "--output-dir", str(root.parent), "--a", "model", "--b", "model"])
        assert rc == 0
        out = json.loads((root / "eval/comparison_model_vs_model.json").read_text())
        assert float(out["p_one_sided"]) == 0.5


class TestStages:
    def test_stagewise_matches_pipeline(self, tiny_runs, tmp_path):
        for cmd in ("synth", "prep", "select", "train", "evaluate", "compare", "explain"):
            assert main([cmd, *FAST, "--output-dir", str(tmp_path)]) == 0, cmd
        a, b = files(tiny_runs[0]), files(tmp_path / "tiny-seed3")
        for rel in EXPECTED[1:]:
            assert a[rel] == b[rel], rel


class TestErrors:
    def run(self, *argv, env=None):
        return subprocess.run([sys.executable, "-m", "losml", *argv], capture_output=True, text=True, env=env)

    def test_missing_schema_exit_3(self, tmp_path):
        csv = tmp_path / "d.csv"
        csv.write_text("a\n1\n")
        r = self.run("prep", "--data", str(csv), "--schema", str(tmp_path / "nope.json"),
                     "--output-dir", str(tmp_path))
        assert r.returncode == 3
        err = json.loads(r.stderr.strip().splitlines()[-1])
        assert err["path"].endswith("nope.json") and err["exit_code"] == 3

    def test_bad_model_exit_2(self, tmp_path):
        r = self.run("train", "--spec", "tiny", "--model", "svm", "--output-dir", str(tmp_path))
        assert r.returncode == 2
        assert json.loads(r.stderr.strip())["exit_code"] == 2

    def test_unknown_flag_exit_2(self, tmp_path):
        assert main(["pipeline", "--no-such-flag"]) == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"spec": "tiny", "bogus": 1}))
        assert main(["prep", "--config", str(cfg)]) == 2


class TestConfig:
    def test_round_trip(self):
        cfg = RunConfig(spec="tiny", seed=9, model="gbt_leafwise")
        assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"nope": 1})

    def test_stage_seeds_distinct_and_stable(self):
        cfg = RunConfig(spec="tiny", seed=1)
        seeds = {s: cfg.stage_seed(s) for s in ("prep", "select", "train", "explain")}
        assert len(set(seeds.values())) == 4
        assert seeds == {s: RunConfig(spec="tiny", seed=1).stage_seed(s) for s in seeds}

    def test_precedence(self, tmp_path, monkeypatch):
        from losml.cli import build_parser, config_from_args

        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"spec": "tiny", "seed": 5, "output_dir": "from_file"}))
        args = build_parser().parse_args(["prep", "--config", str(cfg), "--seed", "7"])
        c = config_from_args(args, {"LOSML_OUT_DIR": "from_env"})
        assert (c.seed, c.output_dir) == (7, "from_env")
        args = build_parser().parse_args(["prep", "--config", str(cfg), "--output-dir", "flag"])
        assert config_from_args(args, {"LOSML_OUT_DIR": "from_env"}).output_dir == "flag"
