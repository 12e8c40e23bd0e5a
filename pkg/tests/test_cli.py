"""Config parsing, command wiring, exit codes, and artifact layout."""

import os

import numpy as np
import pytest

from demix_kge import ConfigError, init_model, save_checkpoint
from demix_kge.cli import (
    RESOLVED_CONFIG_NAME,
    RunConfig,
    load_run_config,
    main,
    parse_config_text,
)
from demix_kge.scoring import EmbeddingModel
from demix_kge.synth import make_synth_kg, write_dataset
from demix_kge.trainer import read_metrics_csv


class TestParseConfigText:
    def test_comments_and_blanks(self):
        text = "# a comment\n\nmodel.kind = TransE\n  seed=4\n"
        assert parse_config_text(text) == {"model.kind": "TransE", "seed": "4"}

    def test_inline_values_keep_spaces_trimmed(self):
        assert parse_config_text("data.train = /tmp/x y.txt \n") == {
            "data.train": "/tmp/x y.txt"
        }

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config_text("seed = 1\nseed = 2\n", source="run.cfg")

    def test_missing_equals_reports_line(self):
        with pytest.raises(ConfigError, match="run.cfg:2"):
            parse_config_text("seed = 1\nbroken-line\n", source="run.cfg")

    def test_empty_key_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("= 3\n")


class TestRunConfigDefaults:
    def test_distance_kind_defaults(self):
        rc = RunConfig.from_flat({})
        assert rc.trainer.kind == "TransE"
        assert rc.trainer.negatives == 16
        assert rc.sampler.negatives == 16
        assert rc.trainer.norm == 1
        assert rc.sampler.strategy == "demix"
        assert rc.trainer.loss == "self_adversarial"

    def test_similarity_kind_negatives(self):
        rc = RunConfig.from_flat({"model.kind": "DistMult"})
        assert rc.trainer.negatives == 50
        assert rc.trainer.norm == 2

    def test_loss_follows_strategy(self):
        rc = RunConfig.from_flat({"sampler.strategy": "uniform"})
        assert rc.trainer.loss == "uniform"
        rc = RunConfig.from_flat({"sampler.strategy": "bernoulli"})
        assert rc.trainer.loss == "uniform"
        rc = RunConfig.from_flat({"sampler.strategy": "self_adversarial"})
        assert rc.trainer.loss == "self_adversarial"

    def test_explicit_loss_wins(self):
        rc = RunConfig.from_flat(
            {"sampler.strategy": "demix", "trainer.loss": "uniform"}
        )
        assert rc.trainer.loss == "uniform"

    def test_t0_defaults_to_warmup(self):
        rc = RunConfig.from_flat({"demix.warmup_epochs": "5"})
        assert rc.demix.t0 == 5
        assert rc.trainer.warmup_epochs == 5

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            RunConfig.from_flat({"trainer.momentum": "0.9"})

    def test_bad_kind_rejected(self):
        with pytest.raises(ConfigError, match="model.kind"):
            RunConfig.from_flat({"model.kind": "HolE"})

    def test_type_errors_name_the_key(self):
        with pytest.raises(ConfigError, match="trainer.epochs"):
            RunConfig.from_flat({"trainer.epochs": "many"})

    def test_round_trip_through_text(self):
        rc = RunConfig.from_flat(
            {
                "model.kind": "RotatE",
                "model.dim": "24",
                "trainer.epochs": "12",
                "trainer.learning_rate": "0.003",
                "sampler.leakage_filter": "true",
                "demix.mu": "1",
                "seed": "9",
            }
        )
        reparsed = RunConfig.from_flat(parse_config_text(rc.to_text()))
        assert reparsed == rc

    def test_validate_missing_file(self, tmp_path):
        rc = RunConfig.from_flat({"data.train": str(tmp_path / "nope.txt")})
        with pytest.raises(ConfigError, match="no such file"):
            rc.validate()

    def test_validate_dict_pairing(self, tmp_path):
        f = tmp_path / "e.dict"
        f.write_text("0\ta\n")
        rc = RunConfig.from_flat({"data.entity_dict": str(f)})
        with pytest.raises(ConfigError, match="go together"):
            rc.validate()


class TestLoadRunConfig:
    def test_overrides_apply(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("trainer.epochs = 4\nseed = 1\n")
        rc = load_run_config(cfg, ["trainer.epochs=9", "model.dim = 32"])
        assert rc.trainer.epochs == 9
        assert rc.trainer.dim == 32

    def test_bad_override_format(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed = 1\n")
        with pytest.raises(ConfigError, match="--set"):
            load_run_config(cfg, ["trainer.epochs"])

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_run_config(tmp_path / "absent.cfg", [])


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    """A small synthetic dataset written as TSV files."""
    out = tmp_path_factory.mktemp("data")
    splits = make_synth_kg(
        num_entities=40, num_relations=3, num_clusters=4, source_clusters=2,
        shared_tails=3, solo_tails=1, holdout_frac=0.25, seed=11,
    )
    write_dataset(out, splits)
    return out


def base_config_text(dataset_dir, out_dir, extra=""):
    return (
        f"data.train = {dataset_dir}/train.txt\n"
        f"data.valid = {dataset_dir}/valid.txt\n"
        f"data.test = {dataset_dir}/test.txt\n"
        f"data.entity_dict = {dataset_dir}/entities.dict\n"
        f"data.relation_dict = {dataset_dir}/relations.dict\n"
        f"output.dir = {out_dir}\n"
        "model.kind = TransE\n"
        "model.dim = 8\n"
        "model.margin = 3.0\n"
        "trainer.epochs = 3\n"
        "demix.warmup_epochs = 1\n"
        "demix.mu = 1\n"
        "trainer.batch_size = 128\n"
        "trainer.learning_rate = 0.003\n"
        "sampler.negatives = 4\n"
        "trainer.checkpoint_every = 1\n"
        "seed = 5\n" + extra
    )


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestCmdTrain:
    def test_end_to_end_artifacts(self, tmp_path, dataset_dir, capsys):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, out))
        rc = main(["train", "--config", cfg, "--quiet"])
        assert rc == 0
        assert (out / "metrics.csv").exists()
        assert (out / "checkpoint-final.ckpt").exists()
        assert (out / "checkpoint-best.ckpt").exists()
        assert (out / "checkpoint-0001.ckpt").exists()
        assert (out / RESOLVED_CONFIG_NAME).exists()
        assert "valid mrr=" in capsys.readouterr().out

    def test_resolved_snapshot_reparses_identically(self, tmp_path, dataset_dir):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, out))
        assert main(["train", "--config", cfg, "--quiet"]) == 0
        resolved = load_run_config(out / RESOLVED_CONFIG_NAME, [])
        original = load_run_config(cfg, [])
        original.threads = resolved.threads
        assert resolved == original

    def test_set_override_lands_in_snapshot(self, tmp_path, dataset_dir):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, out))
        rc = main(
            ["train", "--config", cfg, "--quiet", "--set", "trainer.epochs=2"]
        )
        assert rc == 0
        resolved = load_run_config(out / RESOLVED_CONFIG_NAME, [])
        assert resolved.trainer.epochs == 2

    def test_zero_epoch_run_writes_initial_checkpoint_only(
        self, tmp_path, dataset_dir, capsys
    ):
        out = tmp_path / "noop"
        cfg = write_cfg(
            tmp_path,
            base_config_text(dataset_dir, out),
        )
        rc = main([
            "train", "--config", cfg, "--quiet",
            "--set", "trainer.epochs=0",
            "--set", "demix.warmup_epochs=0",
        ])
        assert rc == 0
        assert (out / "checkpoint-final.ckpt").exists()
        assert not (out / "checkpoint-best.ckpt").exists()
        assert not (out / "checkpoint-0001.ckpt").exists()
        rows = read_metrics_csv(out / "metrics.csv")
        assert rows == []

    def test_missing_train_path_exits_2(self, tmp_path, dataset_dir, capsys):
        out = tmp_path / "run"
        text = base_config_text(dataset_dir, out).replace(
            f"data.train = {dataset_dir}/train.txt",
            f"data.train = {dataset_dir}/absent.txt",
        )
        cfg = write_cfg(tmp_path, text)
        assert main(["train", "--config", cfg, "--quiet"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_strategies_diverge_beyond_warmup(self, tmp_path, dataset_dir):
        """Same seed, demix vs plain self-adversarial: warm-up epochs match,
        later epochs differ."""
        losses = {}
        for strategy in ("demix", "self_adversarial"):
            out = tmp_path / f"run_{strategy}"
            cfg = write_cfg(
                tmp_path,
                base_config_text(dataset_dir, out),
                name=f"{strategy}.cfg",
            )
            rc = main([
                "train", "--config", cfg, "--quiet",
                "--set", f"sampler.strategy={strategy}",
            ])
            assert rc == 0
            rows = read_metrics_csv(out / "metrics.csv")
            losses[strategy] = [row["loss"] for row in rows]
        assert losses["demix"][0] == losses["self_adversarial"][0]
        assert losses["demix"][1:] != losses["self_adversarial"][1:]

    def test_unexpected_failure_exits_1(self, tmp_path, dataset_dir, monkeypatch, capsys):
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, tmp_path / "run"))

        def boom(*args, **kwargs):
            raise RuntimeError("induced failure")

        monkeypatch.setattr("demix_kge.trainer.train", boom)
        assert main(["train", "--config", cfg, "--quiet"]) == 1
        assert "unexpected" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("run")
    cfg_path = out / "run.cfg"
    cfg_path.write_text(base_config_text(dataset_dir, out))
    assert main(["train", "--config", str(cfg_path), "--quiet"]) == 0
    return str(cfg_path), out


class TestCmdEval:
    def test_eval_writes_reports(self, trained, capsys):
        cfg, out = trained
        rc = main([
            "eval", "--config", cfg, "--quiet",
            "--checkpoint", str(out / "checkpoint-final.ckpt"),
            "--split", "test",
        ])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "split=test" in stdout and "mrr=" in stdout
        assert (out / "eval_test.csv").exists()
        assert (out / "eval_test_by_relation.csv").exists()
        header = (out / "eval_test_by_relation.csv").read_text().splitlines()[0]
        assert header == "relation,count,mrr,hits1,hits3,hits10"

    def test_nonexistent_checkpoint_exits_2(self, trained, capsys):
        cfg, out = trained
        rc = main([
            "eval", "--config", cfg, "--quiet",
            "--checkpoint", str(out / "missing.ckpt"),
        ])
        assert rc == 2

    def test_vocab_mismatch_exits_2(self, trained, tmp_path, capsys):
        cfg, out = trained
        other = init_model(7, 2, 8, "TransE", margin=3.0, seed=0)
        bad = tmp_path / "other.ckpt"
        save_checkpoint(other, bad, epoch=1)
        rc = main(["eval", "--config", cfg, "--quiet", "--checkpoint", str(bad)])
        assert rc == 2
        assert "does not match" in capsys.readouterr().err


class TestEvalRankOracleFixture:
    def test_exact_mrr_on_pinned_model(self, tmp_path, capsys):
        """Hand-built 4-entity model: tail query ranks 1, head query ranks 3,
        so the pooled MRR is (1 + 1/3) / 2."""
        (tmp_path / "entities.dict").write_text("0\te0\n1\te1\n2\te2\n3\te3\n")
        (tmp_path / "relations.dict").write_text("0\tr0\n")
        (tmp_path / "train.txt").write_text("e0\tr0\te1\n")
        (tmp_path / "test.txt").write_text("e0\tr0\te2\n")
        model = EmbeddingModel(
            kind="DistMult", dim=1, margin=0.0,
            entity_table=np.array([[1.0], [2.0], [3.0], [1.0]]),
            relation_table=np.array([[1.0]]),
            norm_p=2,
        )
        ckpt = tmp_path / "pinned.ckpt"
        save_checkpoint(model, ckpt, epoch=0)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            f"data.train = {tmp_path}/train.txt\n"
            f"data.test = {tmp_path}/test.txt\n"
            f"data.entity_dict = {tmp_path}/entities.dict\n"
            f"data.relation_dict = {tmp_path}/relations.dict\n"
            "model.dim = 1\n"
            "model.kind = DistMult\n"
        )
        rc = main([
            "eval", "--config", str(cfg), "--quiet",
            "--checkpoint", str(ckpt), "--split", "test",
        ])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert "mrr=0.6667" in stdout
        assert "hits@1=0.5000" in stdout
        assert "hits@3=1.0000" in stdout


class TestCmdDiagnose:
    def test_export_embeddings_shape(self, tmp_path, capsys):
        model = init_model(3, 2, 4, "DistMult", margin=0.0, seed=1)
        ckpt = tmp_path / "m.ckpt"
        save_checkpoint(model, ckpt, epoch=0)
        out = tmp_path / "exported"
        cfg = write_cfg(tmp_path, f"output.dir = {out}\nmodel.dim = 4\nmodel.kind = DistMult\n")
        rc = main([
            "diagnose", "--config", cfg, "--quiet",
            "--mode", "export_embeddings", "--checkpoint", str(ckpt),
        ])
        assert rc == 0
        ent_lines = (out / "entities.tsv").read_text().splitlines()
        assert ent_lines[0] == "id\tv0\tv1\tv2\tv3"
        assert len(ent_lines) == 1 + 3
        values = [float(v) for v in ent_lines[1].split("\t")[1:]]
        np.testing.assert_allclose(values, model.entity_table[0].astype(np.float32))
        rel_lines = (out / "relations.tsv").read_text().splitlines()
        assert len(rel_lines) == 1 + 2

    def test_estimation_accuracy_over_run(self, tmp_path, dataset_dir, capsys):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, out))
        assert main(["train", "--config", cfg, "--quiet"]) == 0
        rc = main([
            "diagnose", "--config", cfg, "--quiet", "--mode", "estimation_accuracy",
        ])
        assert rc == 0
        lines = (out / "estimation_accuracy.csv").read_text().splitlines()
        assert lines[0] == "epoch,side,evaluable,detected,accuracy,baseline"
        body = [line.split(",") for line in lines[1:]]
        # Both sides for each checkpointed epoch (1, 2, 3).
        assert [row[0] for row in body] == ["1", "1", "2", "2", "3", "3"]
        assert [row[1] for row in body] == ["hr", "rt"] * 3

    def test_estimation_accuracy_needs_checkpoints(self, tmp_path, dataset_dir):
        out = tmp_path / "empty_run"
        os.makedirs(out)
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, out))
        rc = main([
            "diagnose", "--config", cfg, "--quiet", "--mode", "estimation_accuracy",
        ])
        assert rc == 2

    def test_leakage_compare_writes_paired_curves(self, tmp_path, dataset_dir, capsys):
        out = tmp_path / "leak"
        cfg = write_cfg(
            tmp_path,
            base_config_text(dataset_dir, out)
            + "trainer.eval_every = 1\n",
        )
        rc = main([
            "diagnose", "--config", cfg, "--quiet", "--mode", "leakage_compare",
        ])
        assert rc == 0
        lines = (out / "leakage_compare.csv").read_text().splitlines()
        assert lines[0] == (
            "epoch,split,mrr_normal,hits10_normal,mrr_leakage,hits10_leakage"
        )
        # 3 valid-curve rows plus the final test row.
        assert len(lines) == 1 + 3 + 1
        assert lines[-1].split(",")[1] == "test"
        assert (out / "leakage_normal" / "metrics.csv").exists()
        assert (out / "leakage_leakage" / "metrics.csv").exists()
        assert "final test mrr" in capsys.readouterr().out


class TestThreadsResolution:
    def test_env_fallback(self, tmp_path, dataset_dir, monkeypatch):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, out))
        monkeypatch.setenv("DEMIX_KGE_THREADS", "3")
        assert main([
            "train", "--config", cfg, "--quiet", "--set", "trainer.epochs=1",
        ]) == 0
        resolved = load_run_config(out / RESOLVED_CONFIG_NAME, [])
        assert resolved.threads == 3

    def test_flag_beats_env(self, tmp_path, dataset_dir, monkeypatch):
        out = tmp_path / "run"
        cfg = write_cfg(tmp_path, base_config_text(dataset_dir, out))
        monkeypatch.setenv("DEMIX_KGE_THREADS", "3")
        assert main([
            "train", "--config", cfg, "--quiet", "--threads", "2",
            "--set", "trainer.epochs=1",
        ]) == 0
        resolved = load_run_config(out / RESOLVED_CONFIG_NAME, [])
        assert resolved.threads == 2
