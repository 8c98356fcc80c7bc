import csv
import json

import pytest

from evireg.cli import EXIT_AUDIT, EXIT_DATA, EXIT_OK, EXIT_USAGE, main, resolve_config, UsageError

FAST = ["--set", "train.epochs=2", "--set", "net.hidden_sizes=[8, 8]"]


def rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


class TestConfig:
    def test_precedence(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"train.epochs": 7, "seed": 3}))
        c = resolve_config(cfg, seed=5, overrides=["train.epochs=9"])
        assert c["train.epochs"] == 9
        assert c["seed"] == 5 and c["net.seed"] == 5 and c["data.seed"] == 5

    def test_explicit_part_seed_kept(self):
        c = resolve_config(seed=5, overrides=["net.seed=1"])
        assert c["net.seed"] == 1 and c["train.seed"] == 5

    @pytest.mark.parametrize("bad", [["nokey"], ["bogus.key=1"]])
    def test_bad_overrides(self, bad):
        with pytest.raises(UsageError):
            resolve_config(overrides=bad)


class TestSynthData:
    def test_files(self, tmp_path):
        assert main(["synth-data", "--out", str(tmp_path)]) == EXIT_OK
        train = rows(tmp_path / "synth_train.csv")
        assert train[0] == ["x", "y", "region"]
        assert len(train) == 921
        assert {r[2] for r in train[1:]} == {"dense", "sparse"}
        assert len(rows(tmp_path / "synth_test.csv")) == 1081
        assert json.loads((tmp_path / "config.json").read_text())["data.seed"] == 0

    def test_byte_identical_rerun(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["synth-data", "--out", str(a), "--seed", "4"])
        main(["synth-data", "--out", str(b), "--seed", "4"])
        for name in ("synth_train.csv", "synth_test.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()


class TestTrainEval:
    def test_run_directory(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), *FAST]) == EXIT_OK
        for name in ("config.json", "trace.csv", "losses.csv", "checkpoint"):
            assert (tmp_path / name).is_file()
        # 920 samples in batches of 128 -> 8 iterations per epoch
        trace = rows(tmp_path / "trace.csv")
        assert trace[0] == ["iteration", "cosine", "moving_avg"]
        assert len(trace) - 1 == 16
        losses = rows(tmp_path / "losses.csv")
        assert losses[0] == ["epoch", "nll", "aux", "reg", "total"] and len(losses) == 3

        assert main(["eval", "--out", str(tmp_path), *FAST]) == EXIT_OK
        metrics = json.loads((tmp_path / "metrics.json").read_text())
        assert metrics["count"] == 1080
        assert set(metrics["region_rmse"]) == {"dense", "sparse"}

    def test_none_has_empty_trace(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), *FAST, "--set", "train.aux=none"]) == EXIT_OK
        assert rows(tmp_path / "trace.csv") == [["iteration", "cosine", "moving_avg"]]

    def test_deterministic_losses(self, tmp_path):
        for d in ("a", "b"):
            main(["train", "--out", str(tmp_path / d), *FAST, "--seed", "2"])
        assert (tmp_path / "a" / "losses.csv").read_bytes() == (tmp_path / "b" / "losses.csv").read_bytes()
        assert (tmp_path / "a" / "checkpoint").read_bytes() == (tmp_path / "b" / "checkpoint").read_bytes()

    def test_csv_input(self, tmp_path):
        main(["synth-data", "--out", str(tmp_path)])
        args = ["--set", f"data.train_csv=\"{tmp_path / 'synth_train.csv'}\"",
                "--set", f"data.test_csv=\"{tmp_path / 'synth_test.csv'}\""]
        assert main(["train", "--out", str(tmp_path / "r"), *FAST, *args]) == EXIT_OK
        assert main(["eval", "--out", str(tmp_path / "r"), *FAST, *args]) == EXIT_OK


class TestAudit:
    def test_passes(self, tmp_path):
        assert main(["grad-audit", "--out", str(tmp_path)]) == EXIT_OK
        report = json.loads((tmp_path / "audit.json").read_text())
        assert report["passed"] is True
        assert [s["suite"] for s in report["suites"]] == ["finite_difference", "sign_fuzz", "cosine", "shrinkage"]
        curve = report["suites"][3]["abs_d_gamma"]
        assert all(a > b for a, b in zip(curve, curve[1:]))

    def test_perturbed_alpha_partial_fails(self, tmp_path):
        code = main(["grad-audit", "--out", str(tmp_path), "--set", "audit.perturb_d_alpha=1e-3"])
        assert code == EXIT_AUDIT
        fd = json.loads((tmp_path / "audit.json").read_text())["suites"][0]
        assert fd["passed"] is False
        assert fd["max_error_by_partial"]["d_alpha"] > 1e-5
        assert fd["worst"]["partial"] == "d_alpha"


class TestOod:
    def test_untrained_net_well_formed(self, tmp_path):
        from evireg.net import EvidentialMLP, NetConfig, save_checkpoint

        config = NetConfig(hidden_sizes=(8,), seed=1)
        save_checkpoint(tmp_path / "checkpoint", config, EvidentialMLP(config).init())
        assert main(["ood-eval", "--out", str(tmp_path), "--set", "ood.n=50"]) == EXIT_OK
        result = json.loads((tmp_path / "ood.json").read_text())
        assert result["n_ood"] == 50 and result["n_id"] == 1080
        assert 0 <= result["epistemic_auroc"] <= 1 and 0 <= result["aleatoric_auroc"] <= 1
        scores = rows(tmp_path / "ood_scores.csv")
        assert scores[0] == ["split", "x", "epistemic", "aleatoric"] and len(scores) == 1 + 1080 + 50
        hist = rows(tmp_path / "ood_histogram.csv")
        assert hist[0] == ["kind", "bin_left", "bin_right", "id_count", "ood_count"]
        assert sum(int(r[3]) for r in hist[1:] if r[0] == "log_epistemic") == 1080


class TestExitCodes:
    def test_missing_checkpoint(self, tmp_path):
        assert main(["eval", "--out", str(tmp_path)]) == EXIT_DATA
        assert main(["ood-eval", "--out", str(tmp_path)]) == EXIT_DATA

    def test_bad_csv(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n1,oops\n")
        code = main(["train", "--out", str(tmp_path), "--set", f"data.train_csv=\"{bad}\""])
        assert code == EXIT_DATA

    def test_usage_errors(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), "--set", "nope=1"]) == EXIT_USAGE
        assert main(["train", "--out", str(tmp_path), "--set", "train.aux=huber"]) == EXIT_USAGE
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate", "--out", str(tmp_path)])
        assert exc.value.code == EXIT_USAGE
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == EXIT_USAGE

    def test_missing_config_file(self, tmp_path):
        assert main(["train", "--out", str(tmp_path), "--config", str(tmp_path / "none.json")]) == EXIT_USAGE
