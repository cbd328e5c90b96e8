"""Acceptance suite: one test per release criterion, tolerances pinned.

Each test prints a PASS line (visible with ``pytest -s``) naming the
criterion it gates. Everything here runs offline and uses rule-DSL LFs
only, so the suite is independent of the external script runner.
"""

from __future__ import annotations

import random
import time

import numpy as np
import pytest

import oracles
from weakforge import endmodel
from weakforge.corpus import ClassSpace, load_dataset
from weakforge.labelmodels import NoiseModel, fit, infer, triplet_accuracy
from weakforge.lfkit.apply import apply_all
from weakforge.lfkit.types import load_lf_dir
from weakforge.lfstats import compute_stats
from weakforge.pipeline.artifacts import from_posterior
from weakforge.pipeline.combine import combine_union
from weakforge.pipeline.run import RunConfig, run
from weakforge.promptforge import (
    STRATEGIES,
    GenerationParams,
    MockCompletionClient,
    build_prompt,
    load_task_spec,
    record_to_lfs,
    synthesize,
)
from weakforge.votes import VoteMatrix

BINARY = ClassSpace(names=("neg", "pos"))


def vm(rows: list[list[int]]) -> VoteMatrix:
    arr = np.asarray(rows, dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(len(rows), 0)
    return VoteMatrix(arr, tuple(f"lf{a}" for a in range(arr.shape[1])))


def test_label_model_oracle_equivalence_exhaustive():
    """MV and WMV match the brute-force oracle exactly on every vote
    assignment with n <= 4, m <= 3, k = 2, n*m <= 8, in under 10 s."""
    start = time.perf_counter()
    prior = [0.5, 0.5]
    wmv_weights = [1.0, 0.5, 0.25]
    checked = 0
    for n in range(1, 5):
        for m in range(1, 4):
            if n * m > 8:
                continue
            w = wmv_weights[:m]
            mv_model = NoiseModel(kind="mv", k=2, prior=np.asarray(prior))
            wmv_model = NoiseModel(
                kind="wmv", k=2, prior=np.asarray(prior), weights=np.asarray(w)
            )
            for rows in oracles.enumerate_vote_matrices(n, m):
                matrix = vm(rows)
                for model, weights in ((mv_model, [1.0] * m), (wmv_model, w)):
                    post = infer(model, matrix)
                    probs, hard, covered = oracles.mass_vote_posterior(rows, weights, prior)
                    assert post.probs.tolist() == probs
                    assert post.hard.tolist() == hard
                    assert post.covered.tolist() == covered
                checked += 1
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0, f"exhaustive family took {elapsed:.1f}s"
    print(f"\nACCEPTANCE PASS: MV/WMV oracle equivalence ({checked} matrices, {elapsed:.1f}s)")


def test_dawid_skene_recovery():
    """DS recovers the generating confusions (L-inf <= 0.05), EM is monotone
    every iteration, and DS pseudolabels are at least as accurate as MV."""
    start = time.perf_counter()
    rng = random.Random(20240101)
    truth = [[[0.2, 0.8, 0.0], [0.2, 0.0, 0.8]] for _ in range(5)]
    rows, gold = oracles.sample_ds_votes(rng, 2000, [0.5, 0.5], truth)
    matrix = vm(rows)

    ds_model = fit("ds", matrix, BINARY)
    err = float(np.abs(ds_model.confusion - np.asarray(truth)).max())
    assert err <= 0.05, f"confusion recovery L-inf {err:.4f} > 0.05"

    objective = ds_model.diagnostics["objective_trace"]
    loglik = ds_model.diagnostics["log_likelihood_trace"]
    assert all(b >= a - 1e-9 for a, b in zip(objective, objective[1:]))
    assert all(b >= a - 1e-9 for a, b in zip(loglik, loglik[1:]))

    gold_arr = np.asarray(gold)
    ds_acc = float((infer(ds_model, matrix).hard == gold_arr).mean())
    mv_acc = float((infer(fit("mv", matrix, BINARY), matrix).hard == gold_arr).mean())
    assert ds_acc >= mv_acc, f"DS accuracy {ds_acc:.4f} < MV accuracy {mv_acc:.4f}"

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0, f"DS recovery took {elapsed:.1f}s"
    print(
        f"\nACCEPTANCE PASS: DS recovery (L-inf {err:.4f}, DS {ds_acc:.4f} >= MV {mv_acc:.4f}, "
        f"{elapsed:.1f}s)"
    )


def test_triplet_recovery():
    """Median-of-triples accuracies within +/-0.05 of truth; the closed-form
    check sqrt(0.48*0.48/0.36) = 0.8 holds to 1e-12."""
    M = np.asarray([[1.0, 0.48, 0.48], [0.48, 1.0, 0.36], [0.48, 0.36, 1.0]])
    est = triplet_accuracy(M, (0, 1, 2))
    closed_form_err = abs((2 * est[0] - 1) - 0.8)
    assert closed_form_err <= 1e-12

    rng = random.Random(31337)
    accs = [0.9, 0.8, 0.7, 0.65, 0.6]
    rows, _ = oracles.sample_binary_votes(rng, 10000, accs)
    model = fit("fs", vm(rows), BINARY)
    for cls in range(2):
        err = np.abs(model.accuracies[cls] - np.asarray(accs)).max()
        assert err <= 0.05, f"class-{cls} accuracy error {err:.4f} > 0.05"
    worst = float(np.abs(model.accuracies - np.asarray(accs)).max())
    print(
        f"\nACCEPTANCE PASS: triplet recovery (max err {worst:.4f}, "
        f"closed form off by {closed_form_err:.2e})"
    )


def test_lf_statistics_against_double_loop_oracle():
    """Exact match with the double-loop oracle on 1000 random matrices;
    conflict <= overlap <= coverage on all of them."""
    rng = random.Random(2024)
    for _ in range(1000):
        n = rng.randrange(1, 10)
        m = rng.randrange(1, 4)
        k = rng.randrange(2, 4)
        rows = [[rng.randrange(-1, k) for _ in range(m)] for _ in range(n)]
        gold = [rng.randrange(k) for _ in range(n)] if rng.random() < 0.5 else None
        stats = compute_stats(vm(rows), gold)
        expected = oracles.lf_statistics(rows, gold)
        for rec, exp in zip(stats.per_lf, expected):
            assert rec.coverage == exp["coverage"]
            assert rec.overlap == exp["overlap"]
            assert rec.conflict == exp["conflict"]
            assert rec.accuracy == exp["accuracy"]
            assert rec.conflict <= rec.overlap <= rec.coverage
    print("\nACCEPTANCE PASS: LF statistics oracle equivalence (1000 matrices)")


def test_end_model_gradients_monotonicity_and_separable_fit():
    """Analytic gradients within 1e-4 relative of central differences on 10+
    random instances; default-config loss monotone; separable set fits."""
    rng = np.random.default_rng(7)
    worst_rel = 0.0
    for _ in range(10):
        n, d, k = 8, 5, int(rng.integers(2, 4))
        X = rng.normal(size=(n, d))
        targets = np.zeros((n, k))
        targets[np.arange(n), rng.integers(0, k, size=n)] = 1.0
        W = rng.normal(size=(k, d)) * 0.5
        b = rng.normal(size=k) * 0.5
        _, grad_w, grad_b = endmodel.loss_and_grad(W, b, X, targets, 1e-3)
        flat = np.concatenate([W.ravel(), b]).tolist()

        def f(values, k=k, d=d, X=X, targets=targets):
            values = np.asarray(values)
            return endmodel.loss_and_grad(
                values[: k * d].reshape(k, d), values[k * d:], X, targets, 1e-3
            )[0]

        fd = np.asarray(oracles.finite_difference_grad(f, flat, eps=1e-6))
        analytic = np.concatenate([grad_w.ravel(), grad_b])
        rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
        worst_rel = max(worst_rel, rel)
        assert rel < 1e-4

    texts = ["good great", "bad awful", "great fine", "awful poor"]
    model = endmodel.train(
        texts, [1, 0, 1, 0], k=2,
        featurize_config=endmodel.FeaturizeConfig(dim=2**10),
        config=endmodel.TrainConfig(lr=0.5, l2=0.0, epochs=200),
    )
    assert endmodel.predict(model, texts).tolist() == [1, 0, 1, 0]

    default_model = endmodel.train(
        texts * 3, [1, 0, 1, 0] * 3, k=2,
        featurize_config=endmodel.FeaturizeConfig(dim=2**10),
        config=endmodel.TrainConfig(lr=0.1, l2=1e-4, epochs=300),
    )
    trace = default_model.diagnostics["loss_trace"]
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    print(f"\nACCEPTANCE PASS: end model (worst gradient rel err {worst_rel:.2e})")


def test_coverage_lift_analogue(data_dir, tmp_path):
    """Union of ~40%-coverage human LFs with 100%-coverage synthesized LFs
    reaches coverage exactly 1.0 and does not lose test F1, offline, < 60 s."""
    start = time.perf_counter()
    dataset = load_dataset(data_dir)
    classes = dataset.classes
    train_docs = dataset.split("train")
    test_docs = dataset.split("test")
    train_ids = [d.id for d in train_docs]

    human_lfs = load_lf_dir(data_dir / "human_lfs", classes.k)
    task = load_task_spec(data_dir / "prompts" / "general.json")
    client = MockCompletionClient(data_dir / "completions")
    bundle = build_prompt("general", task, GenerationParams(n_samples=3))
    record = synthesize(client, bundle, classes, tmp_path / "cache")
    synth_lfs = record_to_lfs(record, classes)

    human_train = apply_all(human_lfs, train_docs, classes).matrix
    synth_train = apply_all(synth_lfs, train_docs, classes).matrix
    human_cov = float((human_train.votes != -1).any(axis=1).mean())
    synth_cov = float((synth_train.votes != -1).any(axis=1).mean())
    assert 0.30 <= human_cov <= 0.50, f"human coverage {human_cov:.3f} not ~40%"
    assert synth_cov == 1.0

    pls = {}
    for tag, matrix in (("human", human_train), ("synthesized", synth_train)):
        model = fit("mv", matrix, classes)
        pls[tag] = from_posterior(infer(model, matrix), train_ids, origin=tag)
    combined = combine_union(pls["human"], pls["synthesized"], train_ids)
    assert combined.coverage == 1.0

    docs_by_id = {d.id: d for d in train_docs}
    test_texts = [d.text for d in test_docs]
    test_gold = [d.gold for d in test_docs]
    f1 = {}
    for tag, training_set in (("human", pls["human"]), ("combined", combined)):
        model = endmodel.train(
            [docs_by_id[e.doc_id].text for e in training_set.entries],
            [e.label for e in training_set.entries],
            classes.k,
            featurize_config=endmodel.FeaturizeConfig(dim=2**14),
            config=endmodel.TrainConfig(epochs=300),
        )
        f1[tag] = endmodel.evaluate(model, test_texts, test_gold, classes).f1_binary
    assert f1["combined"] >= f1["human"], f"combined {f1['combined']:.3f} < human {f1['human']:.3f}"

    elapsed = time.perf_counter() - start
    assert elapsed < 60.0, f"coverage-lift analogue took {elapsed:.1f}s"
    print(
        f"\nACCEPTANCE PASS: coverage lift ({human_cov:.3f} -> 1.0; "
        f"F1 {f1['human']:.3f} -> {f1['combined']:.3f}; {elapsed:.1f}s)"
    )


def test_pipeline_determinism(data_dir, tmp_path):
    """Two identical run invocations produce byte-identical report.json."""
    kwargs = dict(
        data_dir=data_dir,
        cache_dir=tmp_path / "cache",
        run_id="det",
        label_models=("mv", "wmv", "ds", "fs"),
        hash_dim=2**13,
        end_epochs=150,
    )
    run(RunConfig(out_dir=tmp_path / "out-a", **kwargs))
    run(RunConfig(out_dir=tmp_path / "out-b", **kwargs))
    bytes_a = (tmp_path / "out-a" / "det" / "report.json").read_bytes()
    bytes_b = (tmp_path / "out-b" / "det" / "report.json").read_bytes()
    assert bytes_a == bytes_b
    print(f"\nACCEPTANCE PASS: pipeline determinism ({len(bytes_a)} byte report)")


def test_prompt_layer_containment_and_cache_idempotence(data_dir, tmp_path):
    """All five strategies contain the four general components verbatim, and
    a repeated synthesize issues zero further client calls."""
    classes = load_dataset(data_dir).classes
    client = MockCompletionClient(data_dir / "completions")
    expected_calls = 0
    for strategy in STRATEGIES:
        task = load_task_spec(data_dir / "prompts" / f"{strategy}.json")
        bundle = build_prompt(strategy, task, GenerationParams(n_samples=3))
        for component in (
            task.language_line,
            task.task_description,
            task.function_signature,
            task.labeling_instructions,
        ):
            assert component in bundle.text, f"{strategy}: component missing"
        synthesize(client, bundle, classes, tmp_path / "cache")
        expected_calls += 1
        assert client.calls == expected_calls
        synthesize(client, bundle, classes, tmp_path / "cache")
        assert client.calls == expected_calls, f"{strategy}: cache hit made a client call"
    print("\nACCEPTANCE PASS: prompt layer (5 strategies, cache idempotent)")
