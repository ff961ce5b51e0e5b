from __future__ import annotations

import copy
import math

import numpy as np
import pytest

from revmatch.errors import CheckpointError, TrainingDivergedError
from revmatch.model import (
    Batch,
    CHECKPOINT_MAGIC,
    MmoeModel,
    ModelDims,
    TrainConfig,
    active_parameters,
    class_weights_from_labels,
    confidence_loss,
    forward,
    forward_batch,
    gate_entropy,
    gradients,
    init_model,
    load_checkpoint,
    models_equal,
    parameter_count,
    parameter_groups,
    param_specs,
    ranking_loss,
    save_checkpoint,
    train_two_stage,
)

from .oracles import all_pairs, max_relative_error, numeric_gradients

DIMS = ModelDims(input_dim=6, expert_hidden_dim=4, expert_out_dim=3, tower_hidden_dim=2)


def zeroed_model(n_experts: int = 3) -> MmoeModel:
    model = init_model(DIMS, n_experts, seed=0)
    for name in model.params:
        model.params[name] = np.zeros_like(model.params[name])
    return model


def toy_data(n: int = 16, seed: int = 5):
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, DIMS.input_dim))
    labels = np.array([1, 0] * (n // 2), dtype=float)
    return features, labels, all_pairs(labels.astype(int).tolist())


class TestParameters:
    def test_parameter_count_matches_manual_formula(self):
        d, h, o, t, n = 6, 4, 3, 2, 2
        per_expert = h * d + h + o * h + o
        gates = 2 * (n * d + n)
        towers = 2 * (t * o + t + t + 1)
        assert parameter_count(DIMS, n) == n * per_expert + gates + towers == 136

    def test_specs_cover_model_params_exactly(self):
        model = init_model(DIMS, 3, seed=1)
        names = [name for name, _, _, _ in param_specs(DIMS, 3)]
        assert names == list(model.params)
        total = sum(p.size for p in model.params.values())
        assert total == parameter_count(DIMS, 3)

    def test_init_is_seeded_and_bounded(self):
        a = init_model(DIMS, 2, seed=9)
        b = init_model(DIMS, 2, seed=9)
        c = init_model(DIMS, 2, seed=10)
        assert models_equal(a, b)
        assert not models_equal(a, c)
        for name, _, fan_in, fan_out in param_specs(DIMS, 2):
            bound = math.sqrt(6.0 / (fan_in + fan_out))
            assert np.abs(a.params[name]).max() <= bound

    def test_invalid_expert_count(self):
        with pytest.raises(ValueError, match="n_experts"):
            init_model(DIMS, 0, seed=0)

    def test_groups_partition_all_parameters(self):
        model = init_model(DIMS, 3, seed=0)
        groups = parameter_groups(model)
        combined = sorted(groups["experts"] + groups["conf"] + groups["rank"])
        assert combined == sorted(model.params)
        assert active_parameters(model, 1) == set(groups["experts"]) | set(groups["conf"])
        assert active_parameters(model, 2) == set(groups["rank"])
        with pytest.raises(ValueError, match="stage"):
            active_parameters(model, 3)


class TestForward:
    def test_batch_shapes_and_ranges(self):
        model = init_model(DIMS, 3, seed=2)
        x = np.random.default_rng(0).standard_normal((5, DIMS.input_dim))
        cache = forward_batch(model, x)
        assert cache.conf_logit.shape == (5,)
        assert cache.rank_score.shape == (5,)
        assert cache.gates["conf"].shape == (5, 3)
        assert np.all(cache.confidence > 0) and np.all(cache.confidence < 1)
        assert np.allclose(cache.gates["conf"].sum(axis=1), 1.0)
        assert np.allclose(cache.gates["rank"].sum(axis=1), 1.0)

    def test_single_input_wrapper(self):
        model = init_model(DIMS, 3, seed=2)
        x = np.random.default_rng(1).standard_normal(DIMS.input_dim)
        confidence, score, gates = forward(model, x)
        cache = forward_batch(model, x[None, :])
        assert confidence == pytest.approx(float(cache.confidence[0]))
        assert score == pytest.approx(float(cache.rank_score[0]))
        assert gates.shape == (2, 3)

    def test_dimension_mismatch(self):
        model = init_model(DIMS, 2, seed=0)
        with pytest.raises(ValueError, match="input dim"):
            forward_batch(model, np.zeros((3, DIMS.input_dim + 1)))

    def test_single_expert_mixture_is_identity(self):
        model = init_model(DIMS, 1, seed=4)
        x = np.random.default_rng(2).standard_normal((4, DIMS.input_dim))
        cache = forward_batch(model, x)
        assert np.allclose(cache.gates["conf"], 1.0)
        assert np.allclose(cache.mixed["conf"], cache.expert_out[0])
        assert np.allclose(cache.mixed["rank"], cache.expert_out[0])


class TestLossValues:
    def test_class_weights(self):
        assert class_weights_from_labels(np.array([1, 1, 0, 0])) == (1.0, 1.0)
        w_neg, w_pos = class_weights_from_labels(np.array([1, 0, 0, 0]))
        assert (w_neg, w_pos) == (4 / 6, 2.0)
        with pytest.raises(ValueError, match="both classes"):
            class_weights_from_labels(np.ones(4))

    def test_gate_entropy(self):
        assert gate_entropy(np.full((2, 3), 1 / 3)) == pytest.approx(math.log(3))
        near_onehot = np.array([[1.0 - 2e-12, 1e-12, 1e-12]])
        assert gate_entropy(near_onehot) == pytest.approx(0.0, abs=1e-9)

    def test_confidence_loss_at_zero_params(self):
        # All-zero parameters: logits are 0 and the 3-way gate is uniform.
        model = zeroed_model(3)
        x = np.zeros((2, DIMS.input_dim))
        y = np.array([1.0, 0.0])
        bonus = confidence_loss(model, x, y, (1.0, 1.0), lambda_entropy=0.5, entropy_bonus=True)
        penalty = confidence_loss(model, x, y, (1.0, 1.0), lambda_entropy=0.5, entropy_bonus=False)
        assert bonus == pytest.approx(math.log(2) - 0.5 * math.log(3))
        assert penalty == pytest.approx(math.log(2) + 0.5 * math.log(3))

    def test_confidence_loss_applies_class_weights(self):
        model = zeroed_model(2)
        x = np.zeros((2, DIMS.input_dim))
        y = np.array([1.0, 0.0])
        loss = confidence_loss(model, x, y, (3.0, 1.0), lambda_entropy=0.0)
        # Weighted BCE at logit zero: mean of (1 * ln2, 3 * ln2).
        assert loss == pytest.approx(2.0 * math.log(2))

    def test_ranking_loss_at_zero_params(self):
        model = zeroed_model(2)
        x = np.zeros((3, DIMS.input_dim))
        loss = ranking_loss(model, x, [(0, 1), (0, 2)], margin=1.0, lambda_auc=0.5)
        assert loss == pytest.approx(0.5 * 1.0 + 0.5 * math.log(2))

    def test_ranking_loss_needs_pairs(self):
        model = zeroed_model(2)
        with pytest.raises(ValueError, match="at least one"):
            ranking_loss(model, np.zeros((2, DIMS.input_dim)), [], 1.0, 0.5)

    def test_labels_must_match_batch(self):
        model = zeroed_model(2)
        with pytest.raises(ValueError, match="batch size"):
            confidence_loss(model, np.zeros((3, DIMS.input_dim)), np.array([1.0]), (1, 1), 0.0)


class TestGradients:
    def config(self) -> TrainConfig:
        return TrainConfig(n_experts=2, lambda_entropy=0.05, lambda_auc=0.5, margin=1.0)

    def test_stage1_analytic_matches_numeric(self):
        model = init_model(DIMS, 2, seed=7)
        features, labels, _ = toy_data(10, seed=3)
        batch = Batch(features=features, labels=labels)
        _, analytic = gradients(model, batch, self.config(), stage=1, class_weights=(1.0, 2.0))
        probe = ["expert0.w1", "expert1.b2", "gate.conf.w", "tower.conf.w2", "tower.conf.b2"]
        numeric = numeric_gradients(model, batch, self.config(), 1, probe, class_weights=(1.0, 2.0))
        for name in probe:
            assert max_relative_error(analytic[name], numeric[name]) < 1e-4, name

    def test_stage2_analytic_matches_numeric(self):
        model = init_model(DIMS, 2, seed=8)
        features, labels, pairs = toy_data(8, seed=4)
        batch = Batch(features=features, pair_index=pairs)
        _, analytic = gradients(model, batch, self.config(), stage=2)
        probe = ["tower.rank.w1", "tower.rank.w2", "gate.rank.b", "tower.rank.b2"]
        numeric = numeric_gradients(model, batch, self.config(), 2, probe)
        for name in probe:
            assert max_relative_error(analytic[name], numeric[name]) < 1e-4, name

    def test_inactive_gradients_are_exact_zeros(self):
        model = init_model(DIMS, 2, seed=9)
        features, labels, pairs = toy_data(8, seed=5)
        _, stage1 = gradients(
            model, Batch(features=features, labels=labels), self.config(), stage=1
        )
        for name in active_parameters(model, 2):
            assert np.all(stage1[name] == 0.0), name
        _, stage2 = gradients(model, Batch(features=features, pair_index=pairs), self.config(), 2)
        for name in active_parameters(model, 1):
            assert np.all(stage2[name] == 0.0), name

    def test_stage1_loss_ignores_ranking_parameters(self):
        model = init_model(DIMS, 2, seed=10)
        features, labels, _ = toy_data(8, seed=6)
        batch = Batch(features=features, labels=labels)
        before, _ = gradients(model, batch, self.config(), 1, class_weights=(1.0, 1.0))
        model.params["tower.rank.w2"] += 10.0
        model.params["gate.rank.w"] -= 3.0
        after, _ = gradients(model, batch, self.config(), 1, class_weights=(1.0, 1.0))
        assert after == before

    def test_missing_inputs_rejected(self):
        model = init_model(DIMS, 2, seed=0)
        features, labels, pairs = toy_data(4, seed=0)
        with pytest.raises(ValueError, match="labels"):
            gradients(model, Batch(features=features), self.config(), 1)
        with pytest.raises(ValueError, match="pair index"):
            gradients(model, Batch(features=features, labels=labels), self.config(), 2)


class TestTraining:
    def config(self, **overrides) -> TrainConfig:
        defaults = dict(
            n_experts=2, epochs_total=4, stage_boundary=2, learning_rate=0.05,
            batch_size=4, seed=3,
        )
        defaults.update(overrides)
        return TrainConfig(**defaults)

    def test_trace_covers_both_stages(self):
        model = init_model(DIMS, 2, seed=11)
        features, labels, pairs = toy_data(16, seed=7)
        result = train_two_stage(model, features, labels, pairs, self.config())
        assert [t["epoch"] for t in result.loss_trace] == [1, 2, 3, 4]
        assert [t["stage"] for t in result.loss_trace] == [1, 1, 2, 2]
        assert all(np.isfinite(t["loss"]) for t in result.loss_trace)
        assert result.model is model

    def test_stage1_never_touches_ranking_parameters(self):
        model = init_model(DIMS, 2, seed=12)
        frozen = {n: model.params[n].copy() for n in active_parameters(model, 2)}
        features, labels, pairs = toy_data(16, seed=8)
        train_two_stage(model, features, labels, pairs, self.config(epochs_total=2))
        for name, before in frozen.items():
            assert np.array_equal(model.params[name], before), name
        # And stage 1 did move its own parameters.
        assert not models_equal(model, init_model(DIMS, 2, seed=12))

    def test_stage2_never_touches_experts_or_confidence(self):
        features, labels, pairs = toy_data(16, seed=8)
        after_stage1 = init_model(DIMS, 2, seed=13)
        train_two_stage(after_stage1, features, labels, pairs, self.config(epochs_total=2))
        snapshot = copy.deepcopy(after_stage1.params)

        full = init_model(DIMS, 2, seed=13)
        train_two_stage(full, features, labels, pairs, self.config(epochs_total=4))
        for name in active_parameters(full, 1):
            assert np.array_equal(full.params[name], snapshot[name]), name
        changed = [
            name
            for name in active_parameters(full, 2)
            if not np.array_equal(full.params[name], snapshot[name])
        ]
        assert changed

    def test_training_is_deterministic(self):
        features, labels, pairs = toy_data(16, seed=9)
        a = train_two_stage(init_model(DIMS, 2, seed=14), features, labels, pairs, self.config())
        b = train_two_stage(init_model(DIMS, 2, seed=14), features, labels, pairs, self.config())
        assert models_equal(a.model, b.model)
        assert a.loss_trace == b.loss_trace

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises_with_trace(self):
        features, labels, pairs = toy_data(16, seed=10)
        model = init_model(DIMS, 2, seed=15)
        with pytest.raises(TrainingDivergedError) as excinfo:
            train_two_stage(model, features, labels, pairs, self.config(learning_rate=1e18, epochs_total=30, stage_boundary=30))
        assert excinfo.value.loss_trace
        assert not np.isfinite(excinfo.value.loss_trace[-1])


class TestCheckpoints:
    def roundtrip_model(self):
        return init_model(DIMS, 2, seed=16), TrainConfig(n_experts=2, seed=16)

    def test_roundtrip(self, tmp_path):
        model, config = self.roundtrip_model()
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, config, path)
        loaded, loaded_config = load_checkpoint(path)
        assert models_equal(model, loaded)
        assert loaded_config == config

    def test_save_is_byte_stable(self, tmp_path):
        model, config = self.roundtrip_model()
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(model, config, a)
        save_checkpoint(model, config, b)
        assert a.read_bytes() == b.read_bytes()

    def test_expected_expert_count_enforced(self, tmp_path):
        model, config = self.roundtrip_model()
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, config, path)
        assert load_checkpoint(path, expected_n_experts=2)[0].n_experts == 2
        with pytest.raises(CheckpointError, match="n_experts"):
            load_checkpoint(path, expected_n_experts=3)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"garbage in, garbage out")
        with pytest.raises(CheckpointError, match="not a model checkpoint"):
            load_checkpoint(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "trunc.ckpt"
        path.write_bytes(CHECKPOINT_MAGIC + b'{"version": 1}')
        with pytest.raises(CheckpointError, match="truncated header"):
            load_checkpoint(path)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "vers.ckpt"
        path.write_bytes(CHECKPOINT_MAGIC + b'{"version": 99}\n')
        with pytest.raises(CheckpointError, match="version 99"):
            load_checkpoint(path)

    def test_truncated_parameters(self, tmp_path):
        model, config = self.roundtrip_model()
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, config, path)
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        with pytest.raises(CheckpointError, match="truncated parameter data"):
            load_checkpoint(path)

    def test_trailing_bytes(self, tmp_path):
        model, config = self.roundtrip_model()
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, config, path)
        path.write_bytes(path.read_bytes() + b"\x00" * 8)
        with pytest.raises(CheckpointError, match="trailing bytes"):
            load_checkpoint(path)


def test_models_equal_detects_differences():
    a = init_model(DIMS, 2, seed=17)
    b = init_model(DIMS, 2, seed=17)
    assert models_equal(a, b)
    b.params["expert0.w1"] = b.params["expert0.w1"] + 1e-12
    assert not models_equal(a, b)
    assert not models_equal(a, init_model(DIMS, 3, seed=17))
