from __future__ import annotations

import json
from pathlib import Path

import pytest

from weakforge.pipeline.artifacts import (
    PseudoEntry,
    PseudoLabeledSet,
    load_pseudolabels,
    save_pseudolabels,
)
from weakforge.pipeline.cli import main
from weakforge.pipeline.combine import combine_union
from weakforge.pipeline.report import (
    render_report_json,
    render_report_text,
    report_from_dict,
)
from weakforge.pipeline.run import ConfigError, RunConfig, run

FAST = dict(hash_dim=2**14, end_epochs=200)


def entry(doc_id: str, label: int, origin: str) -> PseudoEntry:
    probs = (0.3, 0.7) if label == 1 else (0.7, 0.3)
    return PseudoEntry(doc_id=doc_id, label=label, posterior=probs, origin=origin)


def fast_config(data_dir: Path, tmp_path: Path, **overrides) -> RunConfig:
    base = dict(
        data_dir=data_dir,
        out_dir=tmp_path / "out",
        cache_dir=tmp_path / "cache",
        label_models=("mv",),
        **FAST,
    )
    base.update(overrides)
    return RunConfig(**base)


class TestCombineUnion:
    def test_human_priority(self):
        human = PseudoLabeledSet(entries=(entry("a", 1, "human"), entry("b", 0, "human")), n_split=3)
        synth = PseudoLabeledSet(
            entries=(entry("b", 1, "synthesized"), entry("c", 1, "synthesized")), n_split=3
        )
        combined = combine_union(human, synth, ["a", "b", "c"])
        by_id = combined.by_id()
        assert by_id["a"].label == 1 and by_id["a"].origin == "human"
        assert by_id["b"].label == 0 and by_id["b"].origin == "human"
        assert by_id["c"].label == 1 and by_id["c"].origin == "synthesized"
        assert combined.coverage == 1.0

    def test_human_entries_unchanged_entrywise(self):
        human = PseudoLabeledSet(entries=(entry("a", 1, "human"), entry("c", 0, "human")), n_split=4)
        synth = PseudoLabeledSet(
            entries=tuple(entry(i, 1, "synthesized") for i in "abcd"), n_split=4
        )
        combined = combine_union(human, synth, list("abcd"))
        for e in human.entries:
            assert combined.by_id()[e.doc_id] == e

    def test_empty_human_side_yields_synth(self):
        human = PseudoLabeledSet(entries=(), n_split=2)
        synth = PseudoLabeledSet(
            entries=(entry("a", 0, "synthesized"), entry("b", 1, "synthesized")), n_split=2
        )
        combined = combine_union(human, synth, ["a", "b"])
        assert combined.entries == synth.entries

    def test_coverage_at_least_each_side(self):
        human = PseudoLabeledSet(entries=(entry("a", 1, "human"),), n_split=3)
        synth = PseudoLabeledSet(entries=(entry("b", 0, "synthesized"),), n_split=3)
        combined = combine_union(human, synth, ["a", "b", "c"])
        assert combined.coverage >= max(human.coverage, synth.coverage)
        assert combined.coverage == 2 / 3

    def test_unknown_id_rejected(self):
        human = PseudoLabeledSet(entries=(entry("zz", 1, "human"),), n_split=2)
        synth = PseudoLabeledSet(entries=(), n_split=2)
        with pytest.raises(ValueError, match="zz"):
            combine_union(human, synth, ["a", "b"])

    def test_split_size_mismatch_rejected(self):
        human = PseudoLabeledSet(entries=(), n_split=2)
        synth = PseudoLabeledSet(entries=(), n_split=3)
        with pytest.raises(ValueError, match="mismatch"):
            combine_union(human, synth, ["a", "b"])


class TestPseudolabelIO:
    def test_round_trip(self, tmp_path):
        pls = PseudoLabeledSet(
            entries=(entry("a", 1, "human"), entry("b", 0, "synthesized")), n_split=5
        )
        save_pseudolabels(pls, tmp_path / "pl.jsonl")
        assert load_pseudolabels(tmp_path / "pl.jsonl") == pls

    def test_posterior_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sums"):
            PseudoEntry(doc_id="a", label=0, posterior=(0.5, 0.6), origin="human")


class TestRun:
    def test_synthesized_run_produces_report_and_artifacts(self, data_dir, tmp_path):
        config = fast_config(data_dir, tmp_path, run_id="t1")
        report = run(config)
        out = tmp_path / "out" / "t1"
        for artifact in (
            "report.json", "report.txt", "config-echo.json", "timings.json",
            "votes/synthesized_train.votes.txt", "models/synthesized_mv.json",
            "pseudolabels/synthesized_mv.jsonl",
        ):
            assert (out / artifact).exists(), artifact
        assert report.metric == "f1_binary"
        assert "synthesized" in report.lf_stats
        assert set(report.label_models["per_model"]) == {"mv"}
        assert 0.0 <= report.end_models["per_model"]["mv"]["f1_binary"] <= 1.0

    def test_determinism_byte_identical_reports(self, data_dir, tmp_path):
        config_a = fast_config(data_dir, tmp_path, run_id="da", label_models=("mv", "ds"))
        run(config_a)
        bytes_a = (tmp_path / "out" / "da" / "report.json").read_bytes()
        config_b = fast_config(data_dir, tmp_path, run_id="da", label_models=("mv", "ds"),
                               out_dir=tmp_path / "out2")
        run(config_b)
        bytes_b = (tmp_path / "out2" / "da" / "report.json").read_bytes()
        assert bytes_a == bytes_b

    def test_combined_run_reaches_full_coverage(self, data_dir, tmp_path):
        config = fast_config(
            data_dir, tmp_path, run_id="cmb", lf_source="combined",
            human_lf_dir=data_dir / "human_lfs",
        )
        report = run(config)
        assert report.combine_mode == "union"
        assert report.end_models["coverage"] == 1.0
        assert set(report.lf_stats) == {"human", "synthesized"}

    def test_refit_mode_runs(self, data_dir, tmp_path):
        config = fast_config(
            data_dir, tmp_path, run_id="rf", lf_source="combined", combine_mode="refit",
            human_lf_dir=data_dir / "human_lfs",
        )
        report = run(config)
        assert report.combine_mode == "refit"
        assert (tmp_path / "out" / "rf" / "models" / "combined_mv.json").exists()
        assert report.end_models["coverage"] == 1.0

    def test_combine_without_human_lfs_is_config_error(self, data_dir, tmp_path):
        config = fast_config(data_dir, tmp_path, lf_source="combined")
        with pytest.raises(ConfigError, match="human LF set required"):
            run(config)

    def test_report_json_round_trip_lossless(self, data_dir, tmp_path):
        config = fast_config(data_dir, tmp_path, run_id="rt")
        report = run(config)
        parsed = report_from_dict(json.loads(render_report_json(report)))
        assert parsed == report

    def test_report_text_renders(self, data_dir, tmp_path):
        config = fast_config(data_dir, tmp_path, run_id="txt")
        text = render_report_text(run(config))
        assert "Label models" in text and "End models" in text and "#LFs" in text


class TestStageComposability:
    def test_cli_stages_reproduce_run_numbers(self, data_dir, tmp_path):
        config = fast_config(data_dir, tmp_path, run_id="comp")
        report = run(config)
        work = tmp_path / "stages"
        work.mkdir()
        data = str(data_dir)
        cache = str(tmp_path / "cache")  # shared cache: same record, same LFs

        assert main(["synthesize", "--data-dir", data, "--cache-dir", cache,
                     "--out", str(work / "lfs")]) == 0
        assert main(["apply", "--data-dir", data, "--lf-dir", str(work / "lfs"),
                     "--split", "train", "--out", str(work / "train.votes")]) == 0
        assert main(["apply", "--data-dir", data, "--lf-dir", str(work / "lfs"),
                     "--split", "test", "--out", str(work / "test.votes")]) == 0
        assert main(["stats", "--data-dir", data, "--votes", str(work / "train.votes"),
                     "--format", "machine-readable", "--out", str(work / "stats.json")]) == 0
        assert main(["fit", "--data-dir", data, "--votes", str(work / "train.votes"),
                     "--label-model", "mv", "--out", str(work / "mv.json")]) == 0
        assert main(["pseudolabel", "--data-dir", data, "--votes", str(work / "train.votes"),
                     "--model", str(work / "mv.json"), "--split", "train",
                     "--out", str(work / "pl.jsonl")]) == 0
        assert main(["train", "--data-dir", data, "--pseudolabels", str(work / "pl.jsonl"),
                     "--hash-dim", str(FAST["hash_dim"]),
                     "--end-model-epochs", str(FAST["end_epochs"]),
                     "--out", str(work / "end.npz")]) == 0
        assert main(["evaluate", "--data-dir", data, "--end-model", str(work / "end.npz"),
                     "--split", "test", "--out", str(work / "eval.json")]) == 0

        stats = json.loads((work / "stats.json").read_text())
        assert stats == report.lf_stats["synthesized"]
        eval_report = json.loads((work / "eval.json").read_text())
        assert eval_report["f1_binary"] == report.end_models["per_model"]["mv"]["f1_binary"]
        assert eval_report["accuracy"] == report.end_models["per_model"]["mv"]["accuracy"]

        # The persisted pseudolabel file equals the run's intermediate.
        from_run = load_pseudolabels(
            tmp_path / "out" / "comp" / "pseudolabels" / "synthesized_mv.jsonl"
        )
        assert load_pseudolabels(work / "pl.jsonl") == from_run


class TestCLIRun:
    def test_human_only_run_with_model_list(self, data_dir, tmp_path, capsys):
        code = main([
            "run", "--data-dir", str(data_dir), "--lf-source", "human",
            "--human-lf-dir", str(data_dir / "human_lfs"),
            "--label-model", "mv,ds",
            "--out-dir", str(tmp_path / "out"), "--cache-dir", str(tmp_path / "cache"),
            "--run-id", "ho", "--hash-dim", str(FAST["hash_dim"]),
            "--end-model-epochs", str(FAST["end_epochs"]),
        ])
        assert code == 0
        report = json.loads((tmp_path / "out" / "ho" / "report.json").read_text())
        assert set(report["label_models"]["per_model"]) == {"mv", "ds"}
        assert set(report["lf_stats"]) == {"human"}
        # Human LFs cover ~40% of train, so the end model trains on that slice.
        assert report["end_models"]["coverage"] < 0.5
        out = capsys.readouterr().out
        assert "Label models" in out

    def test_report_subcommand_renders_persisted_report(self, data_dir, tmp_path, capsys):
        config = fast_config(data_dir, tmp_path, run_id="rr")
        run(config)
        capsys.readouterr()
        code = main(["report", "--report", str(tmp_path / "out" / "rr" / "report.json")])
        assert code == 0
        assert "End models" in capsys.readouterr().out


class TestCLIErrors:
    def test_missing_data_dir_exits_2(self, tmp_path):
        code = main(["run", "--data-dir", str(tmp_path / "nope"),
                     "--out-dir", str(tmp_path / "out"),
                     "--cache-dir", str(tmp_path / "cache")])
        assert code == 2

    def test_combined_without_human_dir_exits_2(self, data_dir, tmp_path):
        code = main(["run", "--data-dir", str(data_dir), "--combine",
                     "--out-dir", str(tmp_path / "out"),
                     "--cache-dir", str(tmp_path / "cache")])
        assert code == 2

    def test_broken_mock_dir_is_stage_failure_3(self, data_dir, tmp_path, capsys):
        code = main(["run", "--data-dir", str(data_dir),
                     "--mock-dir", str(tmp_path / "missing"),
                     "--out-dir", str(tmp_path / "out"),
                     "--cache-dir", str(tmp_path / "cache")])
        assert code == 3
        assert "synthesize" in capsys.readouterr().err

    def test_cache_ls(self, data_dir, tmp_path, capsys):
        cache = tmp_path / "cache"
        assert main(["synthesize", "--data-dir", str(data_dir), "--cache-dir", str(cache),
                     "--out", str(tmp_path / "lfs")]) == 0
        capsys.readouterr()
        assert main(["cache", "ls", "--cache-dir", str(cache)]) == 0
        out = capsys.readouterr().out
        assert "general" in out and "1 records" in out
