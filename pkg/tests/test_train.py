import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgalign.model import embed_pair, init_model_for_pair, pair_inputs, save_model
from kgalign.synth import SynthSpec, generate
from kgalign.train import (
    EmptySeedMappingsError,
    TrainConfig,
    TrainingSet,
    compute_loss_and_grads,
    margin_loss,
    mine_hard_negatives,
    train,
)

from oracles import brute_knn_negatives, finite_difference


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def embedding_with_cosines(anchor, cosines):
    """Rows whose cosine against ``anchor`` equals the requested values."""
    anchor = unit(anchor)
    ortho = unit(np.array([-anchor[1], anchor[0]]))
    return np.stack([c * anchor + np.sqrt(1 - c * c) * ortho for c in cosines])


class TestMining:
    def test_k1_picks_highest_cosine(self):
        fused1 = np.array([[1.0, 0.0], [0.3, 0.7]])
        # candidates 0,1,2 at cosines .9/.5/.1 to e1=0; index 3 is the true e2
        fused2 = np.vstack([embedding_with_cosines([1.0, 0.0], [0.9, 0.5, 0.1]), unit([0.0, 1.0])])
        negs = mine_hard_negatives([(0, 3)], fused1, fused2, k=1)
        assert negs[0][0] == (0, 0)

    def test_k_exhausts_side(self):
        fused1 = np.eye(2)
        fused2 = np.vstack([np.eye(2), unit([1.0, 1.0])])
        negs = mine_hard_negatives([(0, 0)], fused1, fused2, k=10)
        tails = [p for p in negs[0] if p[0] == 0]
        assert sorted(p[1] for p in tails) == [1, 2]

    def test_matches_brute_force_knn(self, rng):
        fused1 = rng.standard_normal((5, 4))
        fused2 = rng.standard_normal((5, 4))
        positives = [(0, 0), (1, 3), (4, 2)]
        got = mine_hard_negatives(positives, fused1, fused2, k=2)
        want = brute_knn_negatives(positives, fused1, fused2, k=2)
        assert got == want

    def test_negatives_never_contain_positives(self, rng):
        fused1 = rng.standard_normal((6, 3))
        fused2 = rng.standard_normal((6, 3))
        positives = [(i, i) for i in range(6)]
        negs = mine_hard_negatives(positives, fused1, fused2, k=4)
        flat = {p for group in negs for p in group}
        assert flat.isdisjoint(set(positives))
        TrainingSet(positives, negs).validate()


class TestMarginLoss:
    def test_inactive_hinge(self):
        fused1 = np.array([[1.0, 0.0]])
        fused2 = np.array([[1.0, 0.0], [-1.0, 0.0]])
        # positive cosine 1, negative cosine -1, margin .5 -> max(0, -1-1+.5) = 0
        loss = margin_loss([(0, 0)], [[(0, 1)]], fused1, fused2, 0.5)
        assert loss == 0.0

    def test_active_hinge_arithmetic(self):
        fused1 = np.array([[1.0, 0.0]])
        fused2 = embedding_with_cosines([1.0, 0.0], [0.2, 0.6])
        loss = margin_loss([(0, 0)], [[(0, 1)]], fused1, fused2, 0.3)
        assert loss == pytest.approx(0.6 - 0.2 + 0.3)

    def test_two_by_two_hand_sum(self):
        fused1 = np.array([[1.0, 0.0], [0.0, 1.0]])
        fused2 = np.array([[1.0, 0.0], [0.0, 1.0], [np.sqrt(0.5), np.sqrt(0.5)]])
        positives = [(0, 0), (1, 1)]
        negatives = [[(0, 1), (0, 2)], [(1, 0), (1, 2)]]
        gamma = 0.4
        c = np.sqrt(0.5)
        want = (
            max(0.0, 0.0 - 1.0 + gamma)
            + max(0.0, c - 1.0 + gamma)
            + max(0.0, 0.0 - 1.0 + gamma)
            + max(0.0, c - 1.0 + gamma)
        )
        got = margin_loss(positives, negatives, fused1, fused2, gamma)
        assert got == pytest.approx(want, abs=1e-12)

    @given(st.floats(min_value=0.01, max_value=0.5), st.floats(min_value=0.01, max_value=0.5))
    @settings(max_examples=50, deadline=None)
    def test_monotone_in_gamma(self, g_small, delta):
        fused1 = np.array([[1.0, 0.0], [0.0, 1.0]])
        fused2 = embedding_with_cosines([1.0, 0.0], [0.7, 0.3])
        positives = [(0, 1), (1, 0)]
        negatives = [[(0, 0)], [(1, 1)]]
        small = margin_loss(positives, negatives, fused1, fused2, g_small)
        large = margin_loss(positives, negatives, fused1, fused2, g_small + delta)
        assert large >= small - 1e-12


@pytest.fixture(scope="module")
def small_pair(tmp_path_factory):
    out = tmp_path_factory.mktemp("trainfix")
    return generate(
        SynthSpec(n_entities=12, n_relations=2, n_attributes=2, avg_degree=3,
                  name_overlap_ratio=0.5, feature_noise_sigma=0.4, seed=21, feat_dim=6),
        str(out),
    )


class TestGradients:
    def test_zero_loss_zero_gradients(self, small_pair):
        model = init_model_for_pair(small_pair, dim=4, seed=0)
        in1, in2 = pair_inputs(small_pair)
        # a huge margin deficit never happens with gamma tiny and identical pairs
        ts = TrainingSet([(0, 0)], [[]])
        loss, grads = compute_loss_and_grads(model, in1, in2, ts, 0.4)
        assert loss == 0.0
        assert all(np.all(g == 0.0) for g in grads.values())

    def test_bias_gradient_matches_finite_difference(self, small_pair):
        model = init_model_for_pair(small_pair, dim=4, seed=2)
        in1, in2 = pair_inputs(small_pair)
        b1, b2 = embed_pair(small_pair, model)
        positives = small_pair.gold_links[:4]
        ts = TrainingSet(positives, mine_hard_negatives(positives, b1.fused, b2.fused, 2))
        _, grads = compute_loss_and_grads(model, in1, in2, ts, 0.4)

        def f(b_name_flat):
            params = model.params()
            params = {k: v.copy() for k, v in params.items()}
            params["b_name"] = b_name_flat.reshape(model.b_name.shape)
            loss, _ = compute_loss_and_grads(model.with_params(params), in1, in2, ts, 0.4)
            return loss

        fd = finite_difference(f, model.b_name.copy(), h=1e-4)
        denom = np.maximum(np.abs(fd), 1e-6)
        rel = np.abs(grads["b_name"] - fd) / denom
        assert rel.max() < 1e-4

    def test_full_sweep_against_finite_differences(self, small_pair, rng):
        model = init_model_for_pair(small_pair, dim=4, seed=5)
        in1, in2 = pair_inputs(small_pair)
        b1, b2 = embed_pair(small_pair, model)
        positives = small_pair.gold_links[:5]
        ts = TrainingSet(positives, mine_hard_negatives(positives, b1.fused, b2.fused, 2))
        _, grads = compute_loss_and_grads(model, in1, in2, ts, 0.4)
        params = model.params()
        names = list(params)
        worst = 0.0
        for _ in range(40):
            name = names[int(rng.integers(0, len(names)))]
            arr = params[name]
            idx = tuple(int(rng.integers(0, s)) for s in arr.shape)
            h = 1e-5
            per = {k: v.copy() for k, v in params.items()}
            per[name][idx] += h
            up, _ = compute_loss_and_grads(model.with_params(per), in1, in2, ts, 0.4)
            per[name][idx] -= 2 * h
            dn, _ = compute_loss_and_grads(model.with_params(per), in1, in2, ts, 0.4)
            fd = (up - dn) / (2 * h)
            an = grads[name][idx]
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-6))
        assert worst < 1e-3


class TestTrainLoop:
    def test_zero_epochs_returns_model_unchanged(self, small_pair):
        model = init_model_for_pair(small_pair, dim=4, seed=1)
        out, history = train(small_pair, small_pair.gold_links[:3], model, TrainConfig(epochs=0))
        assert history == []
        for name, value in model.params().items():
            np.testing.assert_array_equal(getattr(out, name), value)

    def test_empty_seeds_rejected(self, small_pair):
        model = init_model_for_pair(small_pair, dim=4, seed=1)
        with pytest.raises(EmptySeedMappingsError):
            train(small_pair, [], model, TrainConfig(epochs=1))

    def test_best_loss_sequence_non_increasing(self, small_pair):
        model = init_model_for_pair(small_pair, dim=4, seed=3)
        _, history = train(
            small_pair, small_pair.gold_links[:6], model,
            TrainConfig(epochs=40, neg_k=2, neg_refresh_every=10, seed=3),
        )
        best = np.minimum.accumulate(history)
        assert all(b2 <= b1 + 1e-12 for b1, b2 in zip(best, best[1:]))
        assert min(history) < history[0]

    def test_returned_model_attains_best_loss(self, small_pair):
        model = init_model_for_pair(small_pair, dim=4, seed=3)
        trained, history = train(
            small_pair, small_pair.gold_links[:6], model,
            TrainConfig(epochs=30, neg_k=2, seed=3),
        )
        in1, in2 = pair_inputs(small_pair)
        b1, b2 = embed_pair(small_pair, trained)
        positives = [(int(a), int(b)) for a, b in small_pair.gold_links[:6]]
        negs = mine_hard_negatives(positives, b1.fused, b2.fused, 2)
        # the re-evaluated loss of the returned model cannot beat the recorded best
        assert min(history) <= margin_loss(positives, negs, b1.fused, b2.fused, 0.4) + 1e-9

    def test_same_seed_bit_identical_model_files(self, small_pair, tmp_path):
        cfg = TrainConfig(epochs=25, neg_k=2, seed=11)
        files = []
        for run in range(2):
            model = init_model_for_pair(small_pair, dim=4, seed=7)
            trained, _ = train(small_pair, small_pair.gold_links[:5], model, cfg)
            path = tmp_path / f"model_{run}.bin"
            save_model(trained, str(path))
            files.append(path.read_bytes())
        assert files[0] == files[1]

    def test_loss_trace_csv(self, small_pair, tmp_path):
        model = init_model_for_pair(small_pair, dim=4, seed=1)
        trace = tmp_path / "trace.csv"
        _, history = train(
            small_pair, small_pair.gold_links[:4], model,
            TrainConfig(epochs=5, neg_k=1), trace_path=str(trace),
        )
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "epoch,loss"
        assert len(lines) == len(history) + 1
