"""The end-to-end run: synthesize, apply, fit, infer, combine, train, evaluate.

Every intermediate is persisted under ``out/<run-id>/`` so each report number
can be recomputed from files, and the stages are individually reachable as
CLI subcommands over the same files. A fixed config and seed reproduce the
report byte for byte; wall-clock timings are kept out of ``report.json`` in
a ``timings.json`` sidecar for that reason.
"""

from __future__ import annotations

import hashlib
import json
import shutil
import time
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from weakforge import endmodel, labelmodels, lfstats
from weakforge.corpus import Dataset, load_dataset
from weakforge.labelmodels import FitConfig, Posterior
from weakforge.lfkit.apply import ApplyOptions, ApplyReport, apply_all
from weakforge.lfkit.scripting import RunnerRegistry
from weakforge.lfkit.types import LabelingFunction, load_lf_dir, save_lf_file
from weakforge.pipeline.artifacts import (
    PseudoEntry,
    PseudoLabeledSet,
    from_posterior,
    save_pseudolabels,
)
from weakforge.pipeline.combine import combine_union
from weakforge.pipeline.report import RunReport, render_report_json, render_report_text
from weakforge.promptforge.build import (
    GenerationParams,
    build_prompt,
    entrypoint_from_signature,
    load_task_spec,
)
from weakforge.promptforge.clients import HTTPCompletionClient, MockCompletionClient
from weakforge.promptforge.synth import record_to_lfs, synthesize
from weakforge.votes import VoteMatrix, hstack, save_vote_matrix

LF_SOURCES = ("synthesized", "human", "combined")
COMBINE_MODES = ("union", "refit")

RUNNER_EXECUTABLE = "runner"


class ConfigError(ValueError):
    """The run configuration is unusable (exit code 2)."""


class StageError(RuntimeError):
    """A pipeline stage failed (exit code 3); partial artifacts are kept."""

    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    data_dir: Path
    out_dir: Path
    cache_dir: Path
    run_id: str | None = None
    strategy: str = "general"
    label_models: tuple[str, ...] = ("mv", "wmv", "ds", "fs")
    lf_source: str = "synthesized"
    combine_mode: str = "union"
    human_lf_dir: Path | None = None
    prompts_dir: Path | None = None
    client: str = "mock"
    mock_dir: Path | None = None
    endpoint: str | None = None
    model_name: str = "mock"
    temperature: float = 0.0
    n_samples: int = 3
    max_tokens: int = 512
    allow_any_temperature: bool = False
    seed: int = 0
    ds_max_iters: int = 100
    ds_tol: float = 1e-6
    fs_moment_floor: float = 1e-3
    lf_timeout_s: float = 5.0
    end_lr: float = 0.1
    end_epochs: int = 500
    end_l2: float = 1e-4
    hash_dim: int = 2**18
    soft_labels: bool = False

    def __post_init__(self) -> None:
        for name in ("data_dir", "out_dir", "cache_dir", "human_lf_dir", "prompts_dir", "mock_dir"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, Path(value))
        object.__setattr__(self, "label_models", tuple(self.label_models))

    def validate(self) -> None:
        if not self.data_dir.is_dir():
            raise ConfigError(f"data dir {self.data_dir} does not exist")
        if self.lf_source not in LF_SOURCES:
            raise ConfigError(f"lf_source must be one of {LF_SOURCES}")
        if self.combine_mode not in COMBINE_MODES:
            raise ConfigError(f"combine_mode must be one of {COMBINE_MODES}")
        if not self.label_models:
            raise ConfigError("at least one label model kind is required")
        for kind in self.label_models:
            if kind not in labelmodels.MODEL_KINDS:
                raise ConfigError(f"unknown label model {kind!r}")
        if self.lf_source in ("human", "combined") and self.human_lf_dir is None:
            raise ConfigError("human LF set required: pass --human-lf-dir")
        if self.lf_source in ("synthesized", "combined"):
            if self.client not in ("mock", "http"):
                raise ConfigError("client must be 'mock' or 'http'")
            if self.client == "http" and not self.endpoint:
                raise ConfigError("http client needs --endpoint")
        if not self.allow_any_temperature and not 0.0 <= self.temperature <= 0.2:
            raise ConfigError(
                f"temperature {self.temperature} outside [0, 0.2]; "
                "pass --allow-any-temperature to override"
            )

    def echo(self) -> dict:
        doc = {
            "data_dir": str(self.data_dir),
            "strategy": self.strategy,
            "label_models": list(self.label_models),
            "lf_source": self.lf_source,
            "combine_mode": self.combine_mode,
            "human_lf_dir": str(self.human_lf_dir) if self.human_lf_dir else None,
            "prompts_dir": str(self.prompts_dir) if self.prompts_dir else None,
            "client": self.client,
            "mock_dir": str(self.mock_dir) if self.mock_dir else None,
            "endpoint": self.endpoint,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "n_samples": self.n_samples,
            "max_tokens": self.max_tokens,
            "seed": self.seed,
            "ds_max_iters": self.ds_max_iters,
            "ds_tol": self.ds_tol,
            "fs_moment_floor": self.fs_moment_floor,
            "lf_timeout_s": self.lf_timeout_s,
            "end_lr": self.end_lr,
            "end_epochs": self.end_epochs,
            "end_l2": self.end_l2,
            "hash_dim": self.hash_dim,
            "soft_labels": self.soft_labels,
        }
        doc["run_id"] = self.resolved_run_id()
        return doc

    def resolved_run_id(self) -> str:
        if self.run_id:
            return self.run_id
        basis = {
            k: v
            for k, v in self.__dict__.items()
            if k not in ("run_id", "out_dir", "cache_dir")
        }
        payload = json.dumps(
            {k: str(v) for k, v in sorted(basis.items())}, sort_keys=True
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:12]


def default_registry() -> RunnerRegistry:
    """Registry with the console-script runner bound when it is on PATH."""
    registry = RunnerRegistry()
    exe = shutil.which(RUNNER_EXECUTABLE)
    if exe:
        registry.register("default", [exe])
    return registry


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e
    finally:
        timings[name] = time.perf_counter() - start


def _fit_config(config: RunConfig) -> FitConfig:
    return FitConfig(
        seed=config.seed,
        ds_max_iters=config.ds_max_iters,
        ds_tol=config.ds_tol,
        fs_moment_floor=config.fs_moment_floor,
    )


def _metrics_dict(report: endmodel.EvalReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "f1_macro": report.f1_macro,
        "f1_binary": report.f1_binary,
    }


def _train_end_model(
    pls: PseudoLabeledSet,
    dataset: Dataset,
    config: RunConfig,
) -> endmodel.LinearModel:
    docs_by_id = {d.id: d for d in dataset.split("train")}
    texts = [docs_by_id[e.doc_id].text for e in pls.entries]
    labels = [e.label for e in pls.entries]
    posteriors = np.asarray([e.posterior for e in pls.entries]) if config.soft_labels else None
    return endmodel.train(
        texts,
        labels,
        dataset.classes.k,
        posteriors=posteriors,
        featurize_config=endmodel.FeaturizeConfig(dim=config.hash_dim),
        config=endmodel.TrainConfig(
            lr=config.end_lr,
            l2=config.end_l2,
            epochs=config.end_epochs,
            seed=config.seed,
            soft_labels=config.soft_labels,
        ),
    )


@dataclass
class _SourceArtifacts:
    """One LF set applied to the splits of interest."""

    lfs: list[LabelingFunction]
    train: ApplyReport
    test: ApplyReport
    valid: ApplyReport | None = None


def _apply_source(
    lfs: list[LabelingFunction],
    dataset: Dataset,
    registry: RunnerRegistry,
    options: ApplyOptions,
) -> _SourceArtifacts:
    train = apply_all(lfs, dataset.split("train"), dataset.classes, registry, options)
    test = apply_all(lfs, dataset.split("test"), dataset.classes, registry, options)
    valid = None
    if "valid" in dataset.splits:
        valid = apply_all(lfs, dataset.split("valid"), dataset.classes, registry, options)
    return _SourceArtifacts(lfs=lfs, train=train, test=test, valid=valid)


def _coverage(matrix: VoteMatrix) -> float:
    if matrix.n == 0:
        return 0.0
    return float((matrix.votes != -1).any(axis=1).sum() / matrix.n)


def run(config: RunConfig, registry: RunnerRegistry | None = None) -> RunReport:
    """Execute the full pipeline, persisting every intermediate artifact."""
    config.validate()
    if registry is None:
        registry = default_registry()
    run_id = config.resolved_run_id()
    out = config.out_dir / run_id
    for sub in ("lfs", "votes", "models", "pseudolabels"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}
    dataset: Dataset | None = None
    warnings: list[str] = []

    config_echo = config.echo()
    (out / "config-echo.json").write_text(
        json.dumps(config_echo, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    with _stage("load", timings):
        dataset = load_dataset(config.data_dir)
        for required in ("train", "test"):
            if required not in dataset.splits:
                raise ValueError(f"data dir lacks the {required!r} split")
        dataset.gold_labels("test")  # evaluation needs a fully labeled test split

    classes = dataset.classes
    sources: dict[str, _SourceArtifacts] = {}
    apply_options = ApplyOptions(timeout_s=config.lf_timeout_s)

    if config.lf_source in ("synthesized", "combined"):
        with _stage("synthesize", timings):
            prompts_dir = config.prompts_dir or (config.data_dir / "prompts")
            task = load_task_spec(prompts_dir / f"{config.strategy}.json")
            params = GenerationParams(
                temperature=config.temperature,
                max_tokens=config.max_tokens,
                n_samples=config.n_samples,
                model_name=config.model_name,
            )
            bundle = build_prompt(
                config.strategy, task, params, allow_any_temperature=config.allow_any_temperature
            )
            if config.client == "mock":
                mock_dir = config.mock_dir or (config.data_dir / "completions")
                client = MockCompletionClient(mock_dir)
            else:
                client = HTTPCompletionClient(config.endpoint)
            entrypoint = None
            if task.output_form == "script":
                entrypoint = entrypoint_from_signature(task.function_signature)
            record = synthesize(
                client,
                bundle,
                classes,
                config.cache_dir,
                output_form=task.output_form,
                entrypoint=entrypoint,
                registry=registry,
            )
            synth_lfs = record_to_lfs(record, classes, scripts_dir=out / "lfs" / "scripts")
            for lf in synth_lfs:
                save_lf_file(lf, out / "lfs" / f"{lf.name}.json")
            if record.rejected:
                warnings.append(f"{len(record.rejected)} completions rejected")

        with _stage("apply", timings):
            sources["synthesized"] = _apply_source(synth_lfs, dataset, registry, apply_options)

    if config.lf_source in ("human", "combined"):
        with _stage("apply-human", timings):
            human_lfs = load_lf_dir(config.human_lf_dir, classes.k)
            sources["human"] = _apply_source(human_lfs, dataset, registry, apply_options)

    with _stage("persist-votes", timings):
        for source, artifacts in sources.items():
            save_vote_matrix(artifacts.train.matrix, out / "votes" / f"{source}_train.votes.txt")
            save_vote_matrix(artifacts.test.matrix, out / "votes" / f"{source}_test.votes.txt")
            if artifacts.valid is not None:
                save_vote_matrix(
                    artifacts.valid.matrix, out / "votes" / f"{source}_valid.votes.txt"
                )

    with _stage("stats", timings):
        train_docs = dataset.split("train")
        train_gold = (
            [d.gold for d in train_docs] if all(d.gold is not None for d in train_docs) else None
        )
        stats_by_source = {
            source: lfstats.stats_to_dict(
                lfstats.compute_stats(artifacts.train.matrix, train_gold, classes)
            )
            for source, artifacts in sources.items()
        }

    if "valid" in dataset.splits and all(d.gold is not None for d in dataset.split("valid")):
        valid_gold = dataset.gold_labels("valid")
    else:
        valid_gold = None

    test_gold = dataset.gold_labels("test")
    train_ids = [d.id for d in dataset.split("train")]
    fit_config = _fit_config(config)
    metric = "f1_binary" if classes.positive_class is not None else "accuracy"

    label_metrics: dict[str, dict] = {}
    end_metrics: dict[str, dict] = {}
    training_sets: dict[str, PseudoLabeledSet] = {}

    with _stage("fit-infer-train", timings):
        for kind in config.label_models:
            per_source_train_post: dict[str, Posterior] = {}
            per_source_test_post: dict[str, Posterior] = {}
            for source, artifacts in sources.items():
                dev = (artifacts.valid.matrix, valid_gold) if (
                    artifacts.valid is not None and valid_gold is not None
                ) else None
                model = labelmodels.fit(kind, artifacts.train.matrix, classes, dev, fit_config)
                labelmodels.save_model(model, out / "models" / f"{source}_{kind}.json")
                per_source_train_post[source] = labelmodels.infer(model, artifacts.train.matrix)
                per_source_test_post[source] = labelmodels.infer(model, artifacts.test.matrix)
                pls = from_posterior(per_source_train_post[source], train_ids, origin=source)
                save_pseudolabels(pls, out / "pseudolabels" / f"{source}_{kind}.jsonl")

            if config.lf_source == "combined":
                if config.combine_mode == "union":
                    human_pls = from_posterior(
                        per_source_train_post["human"], train_ids, origin="human"
                    )
                    synth_pls = from_posterior(
                        per_source_train_post["synthesized"], train_ids, origin="synthesized"
                    )
                    combined_pls = combine_union(human_pls, synth_pls, train_ids)
                    test_hard = per_source_test_post["synthesized"].hard.copy()
                    human_covered = per_source_test_post["human"].covered
                    test_hard[human_covered] = per_source_test_post["human"].hard[human_covered]
                else:
                    joint_train = hstack(
                        sources["human"].train.matrix, sources["synthesized"].train.matrix
                    )
                    joint_test = hstack(
                        sources["human"].test.matrix, sources["synthesized"].test.matrix
                    )
                    joint_dev = None
                    if valid_gold is not None and sources["human"].valid is not None:
                        joint_dev = (
                            hstack(
                                sources["human"].valid.matrix, sources["synthesized"].valid.matrix
                            ),
                            valid_gold,
                        )
                    joint_model = labelmodels.fit(kind, joint_train, classes, joint_dev, fit_config)
                    labelmodels.save_model(joint_model, out / "models" / f"combined_{kind}.json")
                    joint_post = labelmodels.infer(joint_model, joint_train)
                    human_voted = (sources["human"].train.matrix.votes != -1).any(axis=1)
                    combined_pls = PseudoLabeledSet(
                        entries=tuple(
                            PseudoEntry(
                                doc_id=train_ids[i],
                                label=int(joint_post.hard[i]),
                                posterior=tuple(float(p) for p in joint_post.probs[i]),
                                origin="human" if human_voted[i] else "synthesized",
                            )
                            for i in range(joint_post.n)
                            if joint_post.covered[i]
                        ),
                        n_split=joint_post.n,
                    )
                    test_hard = labelmodels.infer(joint_model, joint_test).hard
                save_pseudolabels(combined_pls, out / "pseudolabels" / f"combined_{kind}.jsonl")
                train_pls = combined_pls
            else:
                only_source = config.lf_source
                train_pls = from_posterior(
                    per_source_train_post[only_source], train_ids, origin=only_source
                )
                test_hard = per_source_test_post[only_source].hard

            label_metrics[kind] = _metrics_dict(
                endmodel.metrics_from_predictions(test_hard, test_gold, classes)
            )
            training_sets[kind] = train_pls

            end_model = _train_end_model(train_pls, dataset, config)
            endmodel.save_end_model(
                end_model, out / "models" / f"end_{config.lf_source}_{kind}.npz"
            )
            test_docs = dataset.split("test")
            eval_report = endmodel.evaluate(
                end_model, [d.text for d in test_docs], test_gold, classes
            )
            end_metrics[kind] = _metrics_dict(eval_report)

    with _stage("report", timings):
        if config.lf_source == "combined":
            lf_coverage = training_sets[config.label_models[0]].coverage
        else:
            lf_coverage = _coverage(sources[config.lf_source].train.matrix)
        values = [label_metrics[k][metric] for k in config.label_models]
        label_block = {
            "per_model": label_metrics,
            "average": sum(values) / len(values),
            "coverage": lf_coverage,
        }
        end_values = [end_metrics[k][metric] for k in config.label_models]
        end_block = {
            "per_model": end_metrics,
            "average": sum(end_values) / len(end_values),
            "coverage": training_sets[config.label_models[0]].coverage,
            "n_train": {k: len(training_sets[k].entries) for k in config.label_models},
        }
        report = RunReport(
            config_echo=config_echo,
            metric=metric,
            lf_stats=stats_by_source,
            label_models=label_block,
            end_models=end_block,
            error_tallies={
                source: dict(sorted(artifacts.train.error_tallies.items()))
                for source, artifacts in sources.items()
                if artifacts.train.error_tallies
            },
            combine_mode=config.combine_mode if config.lf_source == "combined" else None,
            warnings=tuple(warnings),
        )
        (out / "report.json").write_text(render_report_json(report), encoding="utf-8")
        (out / "report.txt").write_text(render_report_text(report), encoding="utf-8")
        (out / "timings.json").write_text(
            json.dumps({k: round(v, 6) for k, v in timings.items()}, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    return report
