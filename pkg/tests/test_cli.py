import csv
import json

import numpy as np
import pytest

from hardrank import cli
from hardrank.errors import ConfigError

FAST_SYNTH = ("n_users=40,n_items=100,latent_dim=4,per_user=15,"
              "fn_fraction=0.2,noise=0.05")


def fast_args(out, extra=()):
    return ["run", "--synthetic", FAST_SYNTH, "--dim", "4", "--epochs", "3",
            "--eval-every", "1", "--k", "10", "--pool-size", "4",
            "--batch-size", "256", "--out", str(out), *extra]


class TestConfig:
    def test_defaults_resolve(self):
        cfg = cli.resolve_config()
        assert cfg == cli.DEFAULTS

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config(overrides={"train.momentum": 0.9})

    def test_bad_choice_rejected(self):
        with pytest.raises(ConfigError):
            cli.resolve_config(overrides={"sampler.kind": "importance"})

    def test_type_coercion(self):
        cfg = cli.resolve_config(overrides={"train.lr": "0.5", "train.epochs": "7"})
        assert cfg["train.lr"] == 0.5 and cfg["train.epochs"] == 7

    def test_bad_value_type(self):
        with pytest.raises(ConfigError):
            cli.resolve_config(overrides={"train.epochs": "many"})

    def test_config_file_layering(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("train.lr = 0.2  # comment\n\nsampler.kind = rns\n")
        cfg = cli.resolve_config(cli.parse_config_file(p), {"train.lr": 0.3})
        assert cfg["train.lr"] == 0.3
        assert cfg["sampler.kind"] == "rns"

    def test_config_file_unknown_key(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("nonsense = 1\n")
        with pytest.raises(ConfigError):
            cli.parse_config_file(p)

    def test_config_file_missing_equals(self, tmp_path):
        p = tmp_path / "cfg"
        p.write_text("train.lr\n")
        with pytest.raises(ConfigError):
            cli.parse_config_file(p)


class TestRun:
    def test_manifest_written(self, tmp_path, capsys):
        out = tmp_path / "r"
        assert cli.main(fast_args(out)) == 0
        assert cli.check_manifest(out) == []
        assert (out / "summary.txt").exists()
        assert (out / "planted_false_negatives.csv").exists()
        line = capsys.readouterr().out.strip()
        assert line.startswith("test_recall@10=")
        with open(out / "config.json") as fh:
            assert json.load(fh)["train.epochs"] == 3

    def test_metrics_rows(self, tmp_path):
        out = tmp_path / "r"
        cli.main(fast_args(out))
        with open(out / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert {r["split"] for r in rows} == {"val", "test"}
        assert len([r for r in rows if r["split"] == "val"]) == 3

    def test_deterministic_across_runs(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cli.main(fast_args(out_a, ["--seed", "3"]))
        cli.main(fast_args(out_b, ["--seed", "3"]))
        assert (out_a / "summary.txt").read_text() == (out_b / "summary.txt").read_text()

        def metrics_without_timing(path):
            with open(path) as fh:
                rows = list(csv.DictReader(fh))
            return [{k: v for k, v in r.items() if k != "elapsed_ms"} for r in rows]

        assert metrics_without_timing(out_a / "metrics.csv") == \
            metrics_without_timing(out_b / "metrics.csv")
        with np.load(out_a / "checkpoint.npz") as a, np.load(out_b / "checkpoint.npz") as b:
            np.testing.assert_array_equal(a["user_vectors"], b["user_vectors"])

    def test_seed_changes_result(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cli.main(fast_args(out_a, ["--seed", "1"]))
        cli.main(fast_args(out_b, ["--seed", "2"]))
        assert (out_a / "summary.txt").read_text() != (out_b / "summary.txt").read_text()

    def test_file_dataset_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        lines = [f"u{rng.integers(15)}\ti{rng.integers(40)}\t{t}" for t in range(400)]
        raw = tmp_path / "interactions.tsv"
        raw.write_text("\n".join(lines) + "\n")
        out = tmp_path / "r"
        rc = cli.main(["run", "--dataset", str(raw), "--kcore", "3", "--dim", "4",
                       "--epochs", "2", "--k", "5", "--out", str(out)])
        assert rc == 0
        assert cli.check_manifest(out) == []

    def test_error_exit_code(self, tmp_path, capsys):
        rc = cli.main(["run", "--dataset", str(tmp_path / "absent.tsv"),
                       "--out", str(tmp_path / "r")])
        assert rc == 1  # missing file surfaces as a failure code, not a traceback
        assert "error" in capsys.readouterr().err


class TestSweep:
    def sweep_args(self, out, grid=("sampler.kind=rns,dns",)):
        args = ["sweep", "--synthetic", FAST_SYNTH, "--dim", "4", "--epochs", "2",
                "--k", "10", "--batch-size", "256", "--out", str(out)]
        for g in grid:
            args += ["--grid", g]
        return args

    def test_grid_cells_and_results(self, tmp_path):
        out = tmp_path / "s"
        assert cli.main(self.sweep_args(out)) == 0
        with open(out / "results.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert all(r["status"] == "ok" for r in rows)
        for r in rows:
            assert (out / f"cell_{r['cell']}" / "summary.txt").exists()

    def test_resumable(self, tmp_path):
        out = tmp_path / "s"
        cli.main(self.sweep_args(out))
        before = (out / "results.csv").read_text()
        cli.main(self.sweep_args(out))  # all cells done: no new rows
        assert (out / "results.csv").read_text() == before

    def test_figure_written_for_curve_cells(self, tmp_path):
        out = tmp_path / "s"
        cli.main(self.sweep_args(out, grid=("loss.b=-1.0,0.0",)))
        assert (out / "sweep_curves.png").exists()

    def test_preset_b_cells(self):
        cells = list(cli._grid_cells(cli.PRESET_B, paired=False))
        assert len(cells) == 4
        assert sorted(c["loss.b"] for c in cells) == [-3.0, 0.0, 0.9, 3.0]

    def test_paired_grid_broadcasts_singletons(self):
        grid = {"loss.a": [0.1], "loss.c": [2.0, 1.0]}
        cells = list(cli._grid_cells(grid, paired=True))
        assert cells == [{"loss.a": 0.1, "loss.c": 2.0}, {"loss.a": 0.1, "loss.c": 1.0}]

    def test_paired_grid_length_mismatch(self):
        grid = {"loss.b": [1.0, 2.0], "loss.c": [1.0, 2.0, 3.0]}
        with pytest.raises(ConfigError):
            list(cli._grid_cells(grid, paired=True))

    def test_unknown_grid_key(self, tmp_path):
        rc = cli.main(self.sweep_args(tmp_path / "s", grid=("optimizer=sgd,adam",)))
        assert rc == 1


class TestOtherCommands:
    def test_curve_outputs(self, tmp_path):
        out = tmp_path / "c"
        rc = cli.main(["curve", "--a", "1", "--b", "-1", "--c", "0.8",
                       "--steps", "50", "--out", str(out)])
        assert rc == 0
        with open(out / "curve.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(__import__("hardrank.prefcurve", fromlist=["x"]).SWEEP_COLUMNS)
        assert len(rows) == 51
        assert (out / "curve.png").exists()

    def test_datastats(self, capsys):
        rc = cli.main(["datastats", "--synthetic", FAST_SYNTH])
        assert rc == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0].startswith("#User,#Item")
        assert len(lines[1].split(",")) == 6

    def test_analyze_checkpoint(self, tmp_path, capsys):
        run_out = tmp_path / "r"
        cli.main(fast_args(run_out))
        capsys.readouterr()
        an_out = tmp_path / "an"
        rc = cli.main(["analyze", "--synthetic", FAST_SYNTH,
                       "--checkpoint", str(run_out / "checkpoint.npz"),
                       "--tn-per-user", "40", "--out", str(an_out)])
        assert rc == 0
        assert capsys.readouterr().out.startswith("kl_divergence=")
        for name in ("samples.csv", "densities.csv", "kl.txt", "densities.png"):
            assert (an_out / name).exists()
