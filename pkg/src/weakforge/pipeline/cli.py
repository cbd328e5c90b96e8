"""Command-line entry point.

Subcommands mirror the pipeline stages so persisted intermediates can be
replayed piecewise: synthesize, apply, stats, fit, pseudolabel, combine,
train, evaluate, run, and cache ls. Exit codes: 0 success, 2 config error,
3 stage failure (the failing stage is named on stderr).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from weakforge import endmodel, labelmodels, lfstats
from weakforge.corpus import load_dataset
from weakforge.lfkit.apply import ApplyOptions, apply_all
from weakforge.lfkit.types import load_lf_dir, save_lf_file
from weakforge.pipeline.artifacts import from_posterior, load_pseudolabels, save_pseudolabels
from weakforge.pipeline.combine import combine_union
from weakforge.pipeline.report import render_report_text, report_from_dict
from weakforge.pipeline.run import (
    ConfigError,
    RunConfig,
    StageError,
    default_registry,
    run,
)
from weakforge.promptforge.build import (
    GenerationParams,
    build_prompt,
    entrypoint_from_signature,
    load_task_spec,
)
from weakforge.promptforge.clients import HTTPCompletionClient, MockCompletionClient
from weakforge.promptforge.synth import list_cached, record_to_lfs, synthesize
from weakforge.votes import load_vote_matrix, save_vote_matrix

EXIT_CONFIG = 2
EXIT_STAGE = 3


def _add_data_dir(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data-dir", type=Path, required=True,
                   help="directory with classes.json and train/valid/test .jsonl")


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--label-model", default="mv", help="one of mv, wmv, ds, fs")
    p.add_argument("--ds-max-iters", type=int, default=100)
    p.add_argument("--ds-tol", type=float, default=1e-6)
    p.add_argument("--fs-moment-floor", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)


def _add_client_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--client", choices=("mock", "http"), default="mock")
    p.add_argument("--mock-dir", type=Path, help="fixture directory for the mock client")
    p.add_argument("--endpoint", help="completion endpoint URL for the http client")
    p.add_argument("--model", default="mock", dest="model_name")
    p.add_argument("--temperature", type=float, default=0.0)
    p.add_argument("--allow-any-temperature", action="store_true")
    p.add_argument("--n-samples", type=int, default=3)
    p.add_argument("--max-tokens", type=int, default=512)
    p.add_argument("--cache-dir", type=Path, default=Path("cache"))


def _add_end_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--end-model-lr", type=float, default=0.1)
    p.add_argument("--end-model-epochs", type=int, default=500)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--hash-dim", type=int, default=2**18)
    p.add_argument("--soft-labels", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weakforge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="full pipeline: synthesize through evaluate")
    _add_data_dir(p_run)
    p_run.add_argument("--out-dir", type=Path, default=Path("out"))
    p_run.add_argument("--run-id")
    p_run.add_argument("--strategy", default="general")
    p_run.add_argument("--label-model", default="mv,wmv,ds,fs",
                       help="comma-separated kinds from mv, wmv, ds, fs")
    p_run.add_argument("--lf-source", choices=("synthesized", "human", "combined"),
                       default="synthesized")
    p_run.add_argument("--combine", action="store_true",
                       help="shorthand for --lf-source combined")
    p_run.add_argument("--combine-mode", choices=("union", "refit"), default="union")
    p_run.add_argument("--human-lf-dir", type=Path)
    p_run.add_argument("--prompts-dir", type=Path)
    p_run.add_argument("--lf-timeout", type=float, default=5.0)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--ds-max-iters", type=int, default=100)
    p_run.add_argument("--ds-tol", type=float, default=1e-6)
    p_run.add_argument("--fs-moment-floor", type=float, default=1e-3)
    _add_client_flags(p_run)
    _add_end_model_flags(p_run)

    p_synth = sub.add_parser("synthesize", help="generate and validate LFs for one strategy")
    _add_data_dir(p_synth)
    p_synth.add_argument("--strategy", default="general")
    p_synth.add_argument("--prompts-dir", type=Path)
    p_synth.add_argument("--out", type=Path, required=True, help="LF output directory")
    _add_client_flags(p_synth)

    p_apply = sub.add_parser("apply", help="apply an LF directory to one split")
    _add_data_dir(p_apply)
    p_apply.add_argument("--split", default="train")
    p_apply.add_argument("--lf-dir", type=Path, required=True)
    p_apply.add_argument("--out", type=Path, required=True, help="vote matrix output file")
    p_apply.add_argument("--lf-timeout", type=float, default=5.0)

    p_stats = sub.add_parser("stats", help="coverage/overlap/conflict/accuracy table")
    _add_data_dir(p_stats)
    p_stats.add_argument("--split", default="train")
    p_stats.add_argument("--votes", type=Path, required=True)
    p_stats.add_argument("--format", choices=("text-table", "machine-readable"),
                         default="text-table")
    p_stats.add_argument("--out", type=Path, help="write here instead of stdout")

    p_fit = sub.add_parser("fit", help="fit a label model over a persisted vote matrix")
    _add_data_dir(p_fit)
    p_fit.add_argument("--votes", type=Path, required=True)
    p_fit.add_argument("--dev-votes", type=Path, help="vote matrix over the valid split")
    p_fit.add_argument("--out", type=Path, required=True)
    _add_fit_flags(p_fit)

    p_pseudo = sub.add_parser("pseudolabel", help="infer pseudolabels from a fitted model")
    _add_data_dir(p_pseudo)
    p_pseudo.add_argument("--split", default="train")
    p_pseudo.add_argument("--votes", type=Path, required=True)
    p_pseudo.add_argument("--model", type=Path, required=True, dest="model_path")
    p_pseudo.add_argument("--origin", choices=("human", "synthesized"), default="synthesized")
    p_pseudo.add_argument("--out", type=Path, required=True)

    p_combine = sub.add_parser("combine", help="human-priority union of two pseudolabel sets")
    _add_data_dir(p_combine)
    p_combine.add_argument("--split", default="train")
    p_combine.add_argument("--human", type=Path, required=True)
    p_combine.add_argument("--synthesized", type=Path, required=True)
    p_combine.add_argument("--out", type=Path, required=True)

    p_train = sub.add_parser("train", help="train the end model on a pseudolabel set")
    _add_data_dir(p_train)
    p_train.add_argument("--pseudolabels", type=Path, required=True)
    p_train.add_argument("--out", type=Path, required=True)
    p_train.add_argument("--seed", type=int, default=0)
    _add_end_model_flags(p_train)

    p_eval = sub.add_parser("evaluate", help="evaluate a trained end model on a labeled split")
    _add_data_dir(p_eval)
    p_eval.add_argument("--split", default="test")
    p_eval.add_argument("--end-model", type=Path, required=True)
    p_eval.add_argument("--out", type=Path, help="write the JSON report here")

    p_cache = sub.add_parser("cache", help="inspect the completion cache")
    cache_sub = p_cache.add_subparsers(dest="cache_command", required=True)
    p_cache_ls = cache_sub.add_parser("ls", help="list cached generation records")
    p_cache_ls.add_argument("--cache-dir", type=Path, default=Path("cache"))

    p_report = sub.add_parser("report", help="render a persisted report.json as text")
    p_report.add_argument("--report", type=Path, required=True)

    return parser


def _make_client(args: argparse.Namespace, data_dir: Path):
    if args.client == "mock":
        mock_dir = args.mock_dir or (data_dir / "completions")
        return MockCompletionClient(mock_dir)
    if not args.endpoint:
        raise ConfigError("http client needs --endpoint")
    return HTTPCompletionClient(args.endpoint)


def _cmd_run(args: argparse.Namespace) -> int:
    lf_source = "combined" if args.combine else args.lf_source
    config = RunConfig(
        data_dir=args.data_dir,
        out_dir=args.out_dir,
        cache_dir=args.cache_dir,
        run_id=args.run_id,
        strategy=args.strategy,
        label_models=tuple(k.strip() for k in args.label_model.split(",") if k.strip()),
        lf_source=lf_source,
        combine_mode=args.combine_mode,
        human_lf_dir=args.human_lf_dir,
        prompts_dir=args.prompts_dir,
        client=args.client,
        mock_dir=args.mock_dir,
        endpoint=args.endpoint,
        model_name=args.model_name,
        temperature=args.temperature,
        n_samples=args.n_samples,
        max_tokens=args.max_tokens,
        allow_any_temperature=args.allow_any_temperature,
        seed=args.seed,
        ds_max_iters=args.ds_max_iters,
        ds_tol=args.ds_tol,
        fs_moment_floor=args.fs_moment_floor,
        lf_timeout_s=args.lf_timeout,
        end_lr=args.end_model_lr,
        end_epochs=args.end_model_epochs,
        end_l2=args.l2,
        hash_dim=args.hash_dim,
        soft_labels=args.soft_labels,
    )
    report = run(config)
    out = config.out_dir / config.resolved_run_id()
    print(f"run complete: {out}")
    print(render_report_text(report))
    return 0


def _cmd_synthesize(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    prompts_dir = args.prompts_dir or (args.data_dir / "prompts")
    task = load_task_spec(prompts_dir / f"{args.strategy}.json")
    params = GenerationParams(
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        n_samples=args.n_samples,
        model_name=args.model_name,
    )
    bundle = build_prompt(args.strategy, task, params,
                          allow_any_temperature=args.allow_any_temperature)
    client = _make_client(args, args.data_dir)
    entrypoint = None
    if task.output_form == "script":
        entrypoint = entrypoint_from_signature(task.function_signature)
    record = synthesize(
        client, bundle, dataset.classes, args.cache_dir,
        output_form=task.output_form, entrypoint=entrypoint, registry=default_registry(),
    )
    args.out.mkdir(parents=True, exist_ok=True)
    lfs = record_to_lfs(record, dataset.classes, scripts_dir=args.out / "scripts")
    for lf in lfs:
        save_lf_file(lf, args.out / f"{lf.name}.json")
    print(f"accepted {len(record.accepted)}, rejected {len(record.rejected)} "
          f"(prompt {record.prompt_hash[:12]})")
    return 0


def _cmd_apply(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    lfs = load_lf_dir(args.lf_dir, dataset.classes.k)
    report = apply_all(
        lfs, dataset.split(args.split), dataset.classes,
        default_registry(), ApplyOptions(timeout_s=args.lf_timeout),
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_vote_matrix(report.matrix, args.out)
    print(f"wrote {report.matrix.n}x{report.matrix.m} votes to {args.out} "
          f"({report.total_errors} script errors)")
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    matrix = load_vote_matrix(args.votes)
    docs = dataset.split(args.split)
    gold = [d.gold for d in docs] if all(d.gold is not None for d in docs) else None
    stats = lfstats.compute_stats(matrix, gold, dataset.classes)
    if args.format == "machine-readable":
        text = json.dumps(lfstats.stats_to_dict(stats), sort_keys=True, indent=2) + "\n"
    else:
        text = lfstats.render_stats(stats) + "\n"
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_fit(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    matrix = load_vote_matrix(args.votes)
    dev = None
    if args.dev_votes:
        dev_matrix = load_vote_matrix(args.dev_votes)
        dev = (dev_matrix, dataset.gold_labels("valid"))
    config = labelmodels.FitConfig(
        seed=args.seed, ds_max_iters=args.ds_max_iters, ds_tol=args.ds_tol,
        fs_moment_floor=args.fs_moment_floor,
    )
    model = labelmodels.fit(args.label_model, matrix, dataset.classes, dev, config)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    labelmodels.save_model(model, args.out)
    print(f"fitted {args.label_model} over {matrix.n}x{matrix.m} votes -> {args.out}")
    return 0


def _cmd_pseudolabel(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    matrix = load_vote_matrix(args.votes)
    model = labelmodels.load_model(args.model_path)
    posterior = labelmodels.infer(model, matrix)
    ids = [d.id for d in dataset.split(args.split)]
    pls = from_posterior(posterior, ids, origin=args.origin)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_pseudolabels(pls, args.out)
    print(f"pseudolabeled {len(pls.entries)}/{pls.n_split} points (coverage {pls.coverage:.3f})")
    return 0


def _cmd_combine(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    ids = [d.id for d in dataset.split(args.split)]
    combined = combine_union(
        load_pseudolabels(args.human), load_pseudolabels(args.synthesized), ids
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_pseudolabels(combined, args.out)
    print(f"combined coverage {combined.coverage:.3f}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    pls = load_pseudolabels(args.pseudolabels)
    docs_by_id = {d.id: d for d in dataset.split("train")}
    texts = [docs_by_id[e.doc_id].text for e in pls.entries]
    labels = [e.label for e in pls.entries]
    posteriors = np.asarray([e.posterior for e in pls.entries]) if args.soft_labels else None
    model = endmodel.train(
        texts, labels, dataset.classes.k, posteriors=posteriors,
        featurize_config=endmodel.FeaturizeConfig(dim=args.hash_dim),
        config=endmodel.TrainConfig(
            lr=args.end_model_lr, l2=args.l2, epochs=args.end_model_epochs,
            seed=args.seed, soft_labels=args.soft_labels,
        ),
    )
    args.out.parent.mkdir(parents=True, exist_ok=True)
    endmodel.save_end_model(model, args.out)
    print(f"trained on {len(texts)} pseudolabeled docs -> {args.out}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = load_dataset(args.data_dir)
    model = endmodel.load_end_model(args.end_model)
    docs = dataset.split(args.split)
    report = endmodel.evaluate(
        model, [d.text for d in docs], dataset.gold_labels(args.split), dataset.classes
    )
    text = json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if args.out:
        args.out.write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_cache_ls(args: argparse.Namespace) -> int:
    summaries, warnings = list_cached(args.cache_dir)
    for s in summaries:
        print(f"{s.prompt_hash[:12]}  {s.strategy:<18} completions={s.n_completions} "
              f"accepted={s.n_accepted} rejected={s.n_rejected}")
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"{len(summaries)} records, {len(warnings)} unreadable")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    doc = json.loads(args.report.read_text(encoding="utf-8"))
    sys.stdout.write(render_report_text(report_from_dict(doc)))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "synthesize": _cmd_synthesize,
        "apply": _cmd_apply,
        "stats": _cmd_stats,
        "fit": _cmd_fit,
        "pseudolabel": _cmd_pseudolabel,
        "combine": _cmd_combine,
        "train": _cmd_train,
        "evaluate": _cmd_evaluate,
        "report": _cmd_report,
    }
    try:
        if args.command == "cache":
            return _cmd_cache_ls(args)
        return handlers[args.command](args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as e:
        print(f"stage failure [{e.stage}]: {e.cause}", file=sys.stderr)
        return EXIT_STAGE
    except (ValueError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
