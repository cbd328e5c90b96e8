from __future__ import annotations

import random

import numpy as np
import pytest

import oracles
from weakforge.corpus import ClassSpace
from weakforge.labelmodels import (
    FitConfig,
    MomentBelowFloor,
    NoiseModel,
    fit,
    infer,
    load_model,
    save_model,
    triplet_accuracy,
)
from weakforge.votes import VoteMatrix, hstack

BINARY = ClassSpace(names=("neg", "pos"))
TRINARY = ClassSpace(names=("a", "b", "c"))


def vm(rows: list[list[int]]) -> VoteMatrix:
    arr = np.asarray(rows, dtype=np.int64).reshape(len(rows), -1 if rows and rows[0] else 0)
    m = arr.shape[1]
    return VoteMatrix(arr, tuple(f"lf{a}" for a in range(m)))


class TestMajorityVote:
    def test_counting_row(self):
        post = infer(fit("mv", vm([[0, 0, 1]]), BINARY), vm([[0, 0, 1]]))
        assert post.hard[0] == 0
        assert post.probs[0].tolist() == [2 / 3, 1 / 3]
        assert post.covered[0]

    def test_all_abstain_row_uses_prior_and_tiebreak(self):
        post = infer(fit("mv", vm([[-1, -1, -1]]), BINARY), vm([[-1, -1, -1]]))
        assert post.probs[0].tolist() == [0.5, 0.5]
        assert post.hard[0] == 0
        assert not post.covered[0]

    def test_tiebreak_prefers_higher_prior(self):
        skewed = ClassSpace(names=("neg", "pos"), prior=(0.2, 0.8))
        post = infer(fit("mv", vm([[0, 1]]), skewed), vm([[0, 1]]))
        assert post.hard[0] == 1  # tie on counts, class 1 has the higher prior

    def test_duplicating_all_columns_preserves_posterior_exactly(self):
        rng = random.Random(5)
        for _ in range(50):
            rows = [[rng.randrange(-1, 2) for _ in range(3)] for _ in range(4)]
            matrix = vm(rows)
            doubled = hstack(
                matrix, VoteMatrix(matrix.votes, tuple(f"dup_{n}" for n in matrix.lf_names))
            )
            model = fit("mv", matrix, BINARY)
            base = infer(model, matrix)
            dup = infer(model, doubled)
            assert np.array_equal(base.probs, dup.probs)
            assert np.array_equal(base.hard, dup.hard)

    def test_exhaustive_small_family_matches_oracle_exactly(self):
        prior = [0.5, 0.5]
        for n, m in [(1, 1), (2, 2), (3, 2), (2, 3)]:
            model = fit("mv", vm([[0] * m]), BINARY)
            for rows in oracles.enumerate_vote_matrices(n, m):
                matrix = vm(rows)
                post = infer(model, matrix)
                probs, hard, covered = oracles.mass_vote_posterior(rows, [1.0] * m, prior)
                assert post.probs.tolist() == probs
                assert post.hard.tolist() == hard
                assert post.covered.tolist() == covered


class TestWeightedMajorityVote:
    def test_dev_accuracy_weights(self):
        train = vm([[0, 1, -1]])
        dev = vm([[0, 0, -1], [0, 1, -1], [1, 0, -1], [0, 1, -1]])
        gold = [0, 0, 1, 1]
        model = fit("wmv", train, BINARY, dev=(dev, gold))
        # LF0 correct on 3/4 voted, LF1 on 2/4, LF2 never votes.
        expected = [max(0.75 - 0.5, 0) + 1e-6, max(0.5 - 0.5, 0) + 1e-6, 1e-6]
        assert model.weights.tolist() == pytest.approx(expected, abs=1e-12)
        assert model.diagnostics["weight_basis"] == "dev_accuracy"

    def test_fallback_uses_mv_agreement(self):
        matrix = vm([[0, 0, 1], [0, 0, -1], [1, 1, 0], [1, -1, 1]])
        model = fit("wmv", matrix, BINARY)
        assert model.diagnostics["weight_basis"] == "mv_agreement"
        assert model.weights.min() >= 1e-6

    def test_fallback_disabled_requires_dev(self):
        with pytest.raises(ValueError, match="dev"):
            fit("wmv", vm([[0, 1]]), BINARY, config=FitConfig(wmv_fallback=False))

    def test_exhaustive_small_family_matches_oracle_exactly(self):
        weights = [1.0, 0.5, 0.25]
        prior = [0.5, 0.5]
        for n, m in [(1, 2), (2, 2), (2, 3)]:
            w = weights[:m]
            model = NoiseModel(kind="wmv", k=2, prior=np.asarray(prior), weights=np.asarray(w))
            for rows in oracles.enumerate_vote_matrices(n, m):
                post = infer(model, vm(rows))
                probs, hard, covered = oracles.mass_vote_posterior(rows, w, prior)
                assert post.probs.tolist() == probs
                assert post.hard.tolist() == hard
                assert post.covered.tolist() == covered


class TestDawidSkene:
    def _hand_model(self) -> NoiseModel:
        confusion = np.asarray(
            [
                [[0.2, 0.7, 0.1], [0.3, 0.2, 0.5]],
                [[0.1, 0.6, 0.3], [0.1, 0.25, 0.65]],
            ]
        )
        return NoiseModel(kind="ds", k=2, prior=np.asarray([0.4, 0.6]), confusion=confusion)

    def test_posterior_matches_enumeration_oracle(self):
        model = self._hand_model()
        rows = [[0, 1], [-1, 1], [1, -1]]
        post = infer(model, vm(rows))
        expected = oracles.ds_posterior(
            [0.4, 0.6], model.confusion.tolist(), rows
        )
        np.testing.assert_allclose(post.probs, expected, atol=1e-9)

    def test_abstain_emissions_are_informative(self):
        # Class 1 abstains more often, so an all-abstain row leans class 1.
        confusion = np.asarray(
            [[[0.1, 0.6, 0.3], [0.6, 0.1, 0.3]]]
        )
        model = NoiseModel(kind="ds", k=2, prior=np.asarray([0.5, 0.5]), confusion=confusion)
        post = infer(model, vm([[-1]]))
        assert post.hard[0] == 1
        assert not post.covered[0]

    def test_em_objective_monotone_on_random_matrices(self):
        rng = random.Random(11)
        for _ in range(25):
            n = rng.randrange(4, 30)
            m = rng.randrange(2, 5)
            rows = [[rng.randrange(-1, 2) for _ in range(m)] for _ in range(n)]
            if not any(v != -1 for row in rows for v in row):
                continue
            model = fit("ds", vm(rows), BINARY, config=FitConfig(ds_max_iters=40))
            trace = model.diagnostics["objective_trace"]
            assert all(b >= a - 1e-9 for a, b in zip(trace, trace[1:]))

    def test_recovers_noisy_confusions(self):
        rng = random.Random(77)
        truth = [
            [[0.2, 0.65, 0.15], [0.2, 0.15, 0.65]]
            for _ in range(5)
        ]
        rows, _ = oracles.sample_ds_votes(rng, 1500, [0.5, 0.5], truth)
        model = fit("ds", vm(rows), BINARY)
        err = np.abs(model.confusion - np.asarray(truth)).max()
        assert err < 0.05
        assert model.confusion.sum(axis=2) == pytest.approx(np.ones((5, 2)), abs=1e-9)

    def test_reduces_to_mv_at_symmetric_confusion(self):
        # Uniform abstain mass, symmetric better-than-chance votes: the DS
        # posterior must rank classes exactly like the vote counts do.
        confusion = np.asarray(
            [[[0.25, 0.5, 0.25], [0.25, 0.25, 0.5]]] * 3
        )
        ds_model = NoiseModel(
            kind="ds", k=2, prior=np.asarray([0.5, 0.5]), confusion=confusion
        )
        rng = random.Random(3)
        mv_model = fit("mv", vm([[0, 0, 0]]), BINARY)
        for _ in range(200):
            rows = [[rng.randrange(-1, 2) for _ in range(3)] for _ in range(4)]
            matrix = vm(rows)
            ds_post = infer(ds_model, matrix)
            mv_probs, mv_hard, mv_covered = oracles.mass_vote_posterior(
                rows, [1.0, 1.0, 1.0], [0.5, 0.5]
            )
            for i in range(4):
                if not mv_covered[i]:
                    continue
                mv_ties = {c for c in range(2) if mv_probs[i][c] == max(mv_probs[i])}
                ds_row = ds_post.probs[i]
                ds_ties = {c for c in range(2) if ds_row[c] >= ds_row.max() * (1 - 1e-12)}
                assert ds_ties == mv_ties
                if len(mv_ties) == 1:
                    assert ds_post.hard[i] == mv_hard[i]

    def test_empty_and_all_abstain_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            fit("ds", VoteMatrix(np.empty((0, 2), dtype=np.int64), ("a", "b")), BINARY)
        with pytest.raises(ValueError, match="all-abstain"):
            fit("ds", vm([[-1, -1], [-1, -1]]), BINARY)


class TestTripletMethod:
    def test_closed_form_example(self):
        M = np.asarray([[1.0, 0.48, 0.48], [0.48, 1.0, 0.36], [0.48, 0.36, 1.0]])
        est = triplet_accuracy(M, (0, 1, 2))
        assert abs((2 * est[0] - 1) - 0.8) < 1e-12
        assert est[0] == pytest.approx(0.9, abs=1e-12)
        assert est[1] == pytest.approx(0.8, abs=1e-12)
        assert est[2] == pytest.approx(0.8, abs=1e-12)

    def test_perfect_agreement_clamps(self):
        M = np.ones((3, 3))
        est = triplet_accuracy(M, (0, 1, 2))
        assert est == (1 - 1e-6, 1 - 1e-6, 1 - 1e-6)

    def test_moment_floor_rejection(self):
        M = np.asarray([[1.0, 0.4, 0.4], [0.4, 1.0, 1e-9], [0.4, 1e-9, 1.0]])
        with pytest.raises(MomentBelowFloor):
            triplet_accuracy(M, (0, 1, 2))

    def test_binary_recovery(self):
        rng = random.Random(4242)
        accs = [0.9, 0.8, 0.7]
        rows, _ = oracles.sample_binary_votes(rng, 10000, accs)
        model = fit("fs", vm(rows), BINARY)
        for cls in range(2):
            np.testing.assert_allclose(model.accuracies[cls], accs, atol=0.05)

    def test_needs_three_lfs(self):
        with pytest.raises(ValueError, match="at least 3"):
            fit("fs", vm([[0, 1], [1, 0]]), BINARY)

    def test_all_abstain_row_posterior_equals_balance(self):
        model = NoiseModel(
            kind="fs",
            k=2,
            prior=np.asarray([0.3, 0.7]),
            accuracies=np.full((2, 3), 0.8),
        )
        post = infer(model, vm([[-1, -1, -1]]))
        assert post.probs[0].tolist() == pytest.approx([0.3, 0.7], abs=1e-12)
        assert not post.covered[0]

    def test_multiclass_one_vs_rest_posteriors(self):
        rng = random.Random(99)
        accs = [0.85, 0.8, 0.75, 0.7]
        rows = []
        truth = []
        for _ in range(6000):
            y = rng.randrange(3)
            row = []
            for acc in accs:
                if rng.random() < acc:
                    row.append(y)
                else:
                    row.append(rng.choice([c for c in range(3) if c != y]))
            rows.append(row)
            truth.append(y)
        model = fit("fs", vm(rows), TRINARY)
        post = infer(model, vm(rows))
        np.testing.assert_allclose(post.probs.sum(axis=1), 1.0, atol=1e-9)
        accuracy = float((post.hard == np.asarray(truth)).mean())
        assert accuracy > 0.9

    def test_balance_comes_from_dev_when_no_prior(self):
        rows = [[0, 1, 0], [1, 0, 1]]
        dev_gold = [0, 0, 0, 1]
        model = fit("fs", vm(rows), BINARY, dev=(vm([[0, 0, 0]] * 4), dev_gold))
        assert model.prior.tolist() == [0.75, 0.25]


class TestPosteriorProperties:
    def _models_and_matrix(self):
        rng = random.Random(21)
        rows = [[rng.randrange(-1, 2) for _ in range(4)] for _ in range(30)]
        matrix = vm(rows)
        dev_rows = [[rng.randrange(-1, 2) for _ in range(4)] for _ in range(20)]
        dev = (vm(dev_rows), [rng.randrange(2) for _ in range(20)])
        models = {
            "mv": fit("mv", matrix, BINARY),
            "wmv": fit("wmv", matrix, BINARY, dev=dev),
            "ds": fit("ds", matrix, BINARY),
            "fs": fit("fs", matrix, BINARY, dev=dev),
        }
        return models, matrix

    def test_row_permutation_equivariance(self):
        models, matrix = self._models_and_matrix()
        perm = list(range(matrix.n))
        random.Random(1).shuffle(perm)
        permuted = VoteMatrix(matrix.votes[perm], matrix.lf_names)
        for model in models.values():
            base = infer(model, matrix)
            shuffled = infer(model, permuted)
            assert np.array_equal(base.probs[perm], shuffled.probs)
            assert np.array_equal(base.hard[perm], shuffled.hard)
            assert np.array_equal(base.covered[perm], shuffled.covered)

    def test_lf_permutation_with_parameters(self):
        models, matrix = self._models_and_matrix()
        order = [2, 0, 3, 1]
        permuted = matrix.select(order)
        for kind, model in models.items():
            if kind == "mv":
                permuted_model = model
            elif kind == "wmv":
                permuted_model = NoiseModel(
                    kind="wmv", k=2, prior=model.prior, weights=model.weights[order]
                )
            elif kind == "ds":
                permuted_model = NoiseModel(
                    kind="ds", k=2, prior=model.prior, confusion=model.confusion[order]
                )
            else:
                permuted_model = NoiseModel(
                    kind="fs", k=2, prior=model.prior, accuracies=model.accuracies[:, order]
                )
            base = infer(model, matrix)
            swapped = infer(permuted_model, permuted)
            np.testing.assert_allclose(base.probs, swapped.probs, atol=1e-12)

    def test_rows_sum_to_one_and_covered_flags(self):
        models, matrix = self._models_and_matrix()
        all_abstain = (matrix.votes == -1).all(axis=1)
        for model in models.values():
            post = infer(model, matrix)
            np.testing.assert_allclose(post.probs.sum(axis=1), 1.0, atol=1e-9)
            assert np.array_equal(post.covered, ~all_abstain)

    def test_column_count_mismatch_rejected(self):
        models, matrix = self._models_and_matrix()
        smaller = matrix.select([0, 1])
        for kind, model in models.items():
            if kind == "mv":
                continue
            with pytest.raises(ValueError, match="columns"):
                infer(model, smaller)


class TestSerialization:
    def test_round_trip_every_kind(self, tmp_path):
        rng = random.Random(8)
        rows = [[rng.randrange(-1, 2) for _ in range(3)] for _ in range(40)]
        matrix = vm(rows)
        dev = (matrix, [rng.randrange(2) for _ in range(40)])
        for kind in ("mv", "wmv", "ds", "fs"):
            model = fit(kind, matrix, BINARY, dev=dev)
            path = tmp_path / f"{kind}.json"
            save_model(model, path)
            loaded = load_model(path)
            assert loaded.kind == model.kind
            np.testing.assert_array_equal(loaded.prior, model.prior)
            post_a = infer(model, matrix)
            post_b = infer(loaded, matrix)
            np.testing.assert_array_equal(post_a.probs, post_b.probs)
