import filecmp
import json
import os

import numpy as np
import pytest

from kgalign.cli import main
from kgalign.inference import mapping_accuracy
from kgalign.pipeline import ConfigError, PipelineConfig, run_pipeline
from kgalign.reasoning import ParisConfig, emit_mappings, run_paris
from kgalign.synth import SynthSpec, generate
from kgalign.train import TrainConfig


def small_cfg(**kw):
    base = dict(
        paris=ParisConfig(),
        train=TrainConfig(epochs=30, neg_k=2),
        dim=8,
        rounds=2,
        seed=0,
    )
    base.update(kw)
    return PipelineConfig(**base)


@pytest.fixture(scope="module")
def fixture_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    pair = generate(
        SynthSpec(n_entities=30, n_relations=1, n_attributes=2, avg_degree=2,
                  name_overlap_ratio=0.3, feature_noise_sigma=0.2, seed=13, feat_dim=8),
        str(out),
    )
    return pair, str(out)


class TestRunPipeline:
    def test_fusion_improves_over_step1(self, fixture_pair):
        pair, _ = fixture_pair
        result = run_pipeline(
            pair, small_cfg(rounds=1, dim=16, train=TrainConfig(epochs=60, neg_k=3))
        )
        step1 = mapping_accuracy(result.step1_mappings, pair.gold_links)
        final = mapping_accuracy(result.mappings, pair.gold_links)
        assert final >= step1
        # every pair found by pure reasoning survives into the final mapping
        assert {m[:2] for m in result.step1_mappings} <= {m[:2] for m in result.mappings}

    def test_alpha_one_final_pr_equals_paris_only(self, fixture_pair):
        pair, _ = fixture_pair
        cfg = small_cfg(paris=ParisConfig(alpha=1.0), final="pr")
        result = run_pipeline(pair, cfg)
        paris_state = run_paris(pair, ParisConfig(alpha=1.0))
        want = emit_mappings(paris_state, 0.5)
        assert result.mappings == want

    def test_deterministic_outputs(self, fixture_pair):
        pair, _ = fixture_pair
        a = run_pipeline(pair, small_cfg())
        b = run_pipeline(pair, small_cfg())
        assert a.mappings == b.mappings
        assert a.state.ent_prob == b.state.ent_prob

    def test_round_log_length(self, fixture_pair):
        pair, _ = fixture_pair
        result = run_pipeline(pair, small_cfg(rounds=2))
        assert 1 <= len(result.round_log) <= 2
        for i, entry in enumerate(result.round_log, start=1):
            assert entry.round == i

    def test_empty_seed_path_runs_with_untrained_model(self, tmp_path):
        pair = generate(
            SynthSpec(n_entities=15, n_relations=2, n_attributes=2, avg_degree=3,
                      name_overlap_ratio=0.0, feature_noise_sigma=0.05, seed=3, feat_dim=8),
            str(tmp_path / "noseed"),
        )
        result = run_pipeline(pair, small_cfg(rounds=1))
        assert result.round_log[0].trained is False
        assert result.round_log[0].n_seed_mappings == 0
        # similarity candidates keep step 3 alive despite the empty seed set
        assert len(result.pr_mappings) > 0
        assert len(result.mappings) == 15

    def test_invalid_config_lists_all_errors(self, fixture_pair):
        pair, _ = fixture_pair
        bad = PipelineConfig(
            paris=ParisConfig(alpha=2.0),
            train=TrainConfig(gamma=-1.0),
            rounds=0,
        )
        with pytest.raises(ConfigError) as err:
            run_pipeline(pair, bad)
        message = str(err.value)
        assert "alpha" in message and "gamma" in message and "rounds" in message


class TestCli:
    def test_align_happy_path(self, fixture_pair, tmp_path, capsys):
        _, root = fixture_pair
        out = tmp_path / "mappings.tsv"
        log = tmp_path / "log.json"
        model_out = tmp_path / "model.bin"
        code = main([
            "align",
            "--kg1", os.path.join(root, "kg1"),
            "--kg2", os.path.join(root, "kg2"),
            "--features1", os.path.join(root, "features1.tsv"),
            "--features2", os.path.join(root, "features2.tsv"),
            "--gold", os.path.join(root, "ent_links"),
            "--dim", "8", "--rounds", "1", "--epochs", "20",
            "--out", str(out), "--log", str(log), "--model-out", str(model_out),
        ])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 30
        assert all(len(line.split("\t")) == 3 for line in lines)
        payload = json.loads(log.read_text())
        assert payload["rounds"][0]["seed_mappings"] > 0
        assert model_out.exists()

    def test_align_byte_identical_reruns(self, fixture_pair, tmp_path):
        _, root = fixture_pair
        outs = []
        for run in range(2):
            out = tmp_path / f"m{run}.tsv"
            code = main([
                "align",
                "--kg1", os.path.join(root, "kg1"),
                "--kg2", os.path.join(root, "kg2"),
                "--features1", os.path.join(root, "features1.tsv"),
                "--features2", os.path.join(root, "features2.tsv"),
                "--dim", "8", "--rounds", "1", "--epochs", "10",
                "--seed", "5",
                "--out", str(out),
            ])
            assert code == 0
            outs.append(out)
        assert filecmp.cmp(str(outs[0]), str(outs[1]), shallow=False)

    def test_missing_required_flag_exits_2(self, capsys):
        code = main(["align", "--kg1", "somewhere"])
        assert code == 2
        assert "--kg2" in capsys.readouterr().err

    def test_unknown_flag_exits_2(self, capsys):
        code = main(["align", "--nonsense"])
        assert code == 2

    def test_config_error_exits_2(self, fixture_pair, tmp_path, capsys):
        _, root = fixture_pair
        code = main([
            "align",
            "--kg1", os.path.join(root, "kg1"), "--kg2", os.path.join(root, "kg2"),
            "--features1", os.path.join(root, "features1.tsv"),
            "--features2", os.path.join(root, "features2.tsv"),
            "--alpha", "2.0", "--out", str(tmp_path / "m.tsv"),
        ])
        assert code == 2
        assert "alpha" in capsys.readouterr().err

    def test_paris_only_and_eval(self, fixture_pair, tmp_path, capsys):
        _, root = fixture_pair
        out = tmp_path / "paris.tsv"
        code = main([
            "paris-only",
            "--kg1", os.path.join(root, "kg1"),
            "--kg2", os.path.join(root, "kg2"),
            "--out", str(out),
        ])
        assert code == 0
        capsys.readouterr()
        code = main(["eval", "--mappings", str(out), "--gold", os.path.join(root, "ent_links")])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert set(report) == {"hit", "mrr", "n"}
        assert report["n"] == 30
        assert report["hit"]["1"] > 0.5

    def test_synth_subcommand(self, tmp_path):
        out = tmp_path / "generated"
        code = main([
            "synth", "--out", str(out), "--entities", "10", "--relations", "2",
            "--avg-degree", "3", "--seed", "2",
        ])
        assert code == 0
        assert (out / "kg1" / "rel_triples").exists()
        assert (out / "ent_links").exists()

    def test_runtime_error_exits_1(self, tmp_path, capsys):
        code = main([
            "paris-only", "--kg1", str(tmp_path / "missing"),
            "--kg2", str(tmp_path / "missing"), "--out", str(tmp_path / "x"),
        ])
        assert code == 1
