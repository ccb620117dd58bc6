"""Tape autodiff, layers, losses, Adam and checkpoints."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from joint_cache_lab.errors import BoundsError, CheckpointFormatError, ConfigError, NumericDomainError, ShapeError
from joint_cache_lab.nnkit import (
    AdamConfig,
    ContrastiveConfig,
    LstmLayerParams,
    Node,
    ParamStore,
    Tape,
    adam_step,
    adam_step_with,
    backward,
    bce_loss,
    concat,
    contrastive_loss,
    cosine_similarity,
    dense,
    embedding,
    embedding_forward,
    grad_check,
    grad_check_report,
    info_nce,
    init_lstm,
    last_step,
    load_checkpoint,
    lstm_forward,
    lstm_stack,
    numeric_derivative,
    reshape,
    save_checkpoint,
    sigmoid_bce,
    softmax,
    softmax_xent,
    softmax_xent_op,
    tanh,
    weighted_sum,
)


def float64_store(**arrays) -> ParamStore:
    store = ParamStore(np.float64)
    for name, value in arrays.items():
        store.add(name, value)
    return store


class TestEmbedding:
    def test_row_lookup(self):
        table = np.arange(12.0).reshape(4, 3)
        assert_array_equal(embedding_forward(table, np.array([2, 0])), table[[2, 0]])

    def test_empty_ids(self):
        out = embedding_forward(np.ones((4, 3)), np.array([], dtype=np.int64))
        assert out.shape == (0, 3)

    def test_out_of_range(self):
        with pytest.raises(BoundsError, match="token id 4"):
            embedding_forward(np.ones((4, 3)), np.array([4]))

    def test_repeated_ids_accumulate(self):
        store = float64_store(table=np.ones((3, 2)))
        tape = Tape()
        out = embedding(tape, tape.param(store, "table"), np.array([1, 1, 2]))
        loss = reshape(tape, dense(tape, reshape(tape, out, (1, 6)), tape.constant(np.ones((6, 1))),
                                   tape.constant(np.zeros(1))), ())
        backward(tape, loss)
        assert_array_equal(store.grads["table"], [[0, 0], [2, 2], [1, 1]])


class TestLstm:
    def test_zero_parameters_stay_zero(self):
        params = LstmLayerParams.zeros(input_dim=3, hidden=5)
        inputs = np.random.default_rng(0).normal(size=(7, 3))
        final, hidden = lstm_forward(params, inputs)
        assert_array_equal(hidden, np.zeros((7, 5)))
        assert_array_equal(final, np.zeros(5))

    def test_empty_sequence(self):
        final, hidden = lstm_forward(LstmLayerParams.zeros(3, 4), np.zeros((0, 3)))
        assert_array_equal(final, np.zeros(4))
        assert hidden.shape == (0, 4)

    def test_shape_mismatch(self):
        params = LstmLayerParams.zeros(input_dim=3, hidden=4)
        with pytest.raises(ShapeError):
            lstm_forward(params, np.zeros((2, 5)))

    def test_final_state_is_last_hidden(self):
        rng = np.random.default_rng(1)
        store = ParamStore(np.float64)
        init_lstm(store, "enc", 3, 4, rng)
        params = LstmLayerParams([
            (store["enc.l0.wx"], store["enc.l0.wh"], store["enc.l0.b"]),
            (store["enc.l1.wx"], store["enc.l1.wh"], store["enc.l1.b"]),
        ])
        final, hidden = lstm_forward(params, rng.normal(size=(5, 3)))
        assert_array_equal(final, hidden[-1])

    def test_forget_bias_initialised_to_one(self):
        store = ParamStore(np.float64)
        init_lstm(store, "enc", 2, 3, np.random.default_rng(0))
        assert_array_equal(store["enc.l0.b"], [0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0])


class TestScalarLosses:
    @pytest.mark.parametrize(
        "p,y,expected", [(0.5, 1, math.log(2)), (1 - 1e-7, 1, 1e-7), (0.9, 0, -math.log(0.1))]
    )
    def test_bce(self, p, y, expected):
        assert bce_loss(p, y) == pytest.approx(expected, rel=1e-4)

    def test_bce_clamps(self):
        assert bce_loss(0.0, 1) == pytest.approx(-math.log(1e-7))

    @pytest.mark.parametrize(
        "logits,target,expected",
        [
            ([0.0, 0.0, 0.0, 0.0], 2, math.log(4)),
            ([1000.0, 0.0, 0.0], 0, 0.0),
            ([1.0, 0.0], 0, math.log(1 + math.exp(-1))),
        ],
    )
    def test_softmax_xent(self, logits, target, expected):
        assert softmax_xent(np.array(logits), target) == pytest.approx(expected, abs=1e-9)

    def test_softmax_xent_bounds(self):
        with pytest.raises(BoundsError):
            softmax_xent(np.zeros(3), 3)

    def test_softmax_normalised(self):
        probs = softmax(np.random.default_rng(2).normal(scale=20, size=(6, 9)))
        assert_allclose(probs.sum(axis=1), np.ones(6), atol=1e-6)
        assert np.all(probs > 0)


class TestContrastiveLoss:
    def test_one_orthogonal_negative(self):
        loss = contrastive_loss(np.array([1.0, 0]), np.array([1.0, 0]), [np.array([0, 1.0])],
                                ContrastiveConfig(temperature=1.0))
        assert loss == pytest.approx(math.log(1 + math.exp(-1)))

    def test_uniform_similarities(self):
        v = np.array([0.3, -0.2, 0.9])
        assert contrastive_loss(v, v, [v, v, v]) == pytest.approx(math.log(4))

    def test_separation_limit(self):
        loss = contrastive_loss(np.array([1.0, 0]), np.array([2.0, 0]), [np.array([-1.0, 0])],
                                ContrastiveConfig(temperature=0.01))
        assert loss < 1e-6

    def test_scale_invariant(self):
        rng = np.random.default_rng(3)
        a, p = rng.normal(size=4), rng.normal(size=4)
        negs = list(rng.normal(size=(3, 4)))
        base = contrastive_loss(a, p, negs)
        scaled = contrastive_loss(5 * a, 0.5 * p, [2.5 * n for n in negs])
        assert scaled == pytest.approx(base, rel=1e-9)

    def test_zero_vector(self):
        with pytest.raises(NumericDomainError):
            contrastive_loss(np.zeros(2), np.ones(2), [np.ones(2)])

    def test_needs_a_negative(self):
        with pytest.raises(ShapeError):
            contrastive_loss(np.ones(2), np.ones(2), [])

    def test_cosine(self):
        assert cosine_similarity(np.array([1.0, 1.0]), np.array([2.0, 2.0])) == pytest.approx(1.0)

    def test_bad_temperature(self):
        with pytest.raises(ValueError):
            ContrastiveConfig(temperature=0.0)


class TestBackward:
    def test_linear(self):
        store = float64_store(w=np.array([[0.5]]), b=np.zeros(1), unused=np.ones(2))
        tape = Tape()
        tape.param(store, "unused")
        out = dense(tape, tape.constant(np.array([[3.0]])), tape.param(store, "w"), tape.param(store, "b"))
        backward(tape, reshape(tape, out, ()))
        assert store.grads["w"][0, 0] == 3.0
        assert store.grads["b"][0] == 1.0
        assert_array_equal(store.grads["unused"], np.zeros(2))

    def test_non_scalar_loss(self):
        tape = Tape()
        with pytest.raises(ShapeError, match="scalar"):
            backward(tape, tape.constant(np.ones(3)))

    def test_concat_splits_by_range(self):
        store = float64_store(a=np.ones((1, 2)), b=np.ones((1, 3)))
        tape = Tape()
        joined = concat(tape, [tape.param(store, "a"), tape.param(store, "b")])
        weights = np.arange(5.0).reshape(5, 1)
        out = dense(tape, joined, tape.constant(weights), tape.constant(np.zeros(1)))
        backward(tape, reshape(tape, out, ()))
        assert_array_equal(store.grads["a"], [[0.0, 1.0]])
        assert_array_equal(store.grads["b"], [[2.0, 3.0, 4.0]])


def _linear_forward(tape, store, inputs):
    out = dense(tape, tape.constant(inputs), tape.param(store, "w"), tape.param(store, "b"))
    return reshape(tape, out, ())


def _doubled(tape, x):
    out = Node(x.value.copy())

    def back(grad):
        x.accumulate(2.0 * grad)

    return tape.record(out, back)


def _corrupted_forward(tape, store, inputs):
    x, y = inputs
    logits = dense(tape, tape.constant(x), tape.param(store, "w"), tape.param(store, "b"))
    return sigmoid_bce(tape, _doubled(tape, logits), y)


def _lstm_bce_forward(tape, store, inputs):
    x, y = inputs
    hidden = last_step(tape, lstm_stack(tape, store, "enc", tape.constant(x)))
    logits = dense(tape, hidden, tape.param(store, "head.w"), tape.param(store, "head.b"))
    return sigmoid_bce(tape, logits, y, pos_weight=2.0)


def _every_op_forward(tape, store, inputs):
    ids, context, labels, targets, mask, neg_ids = inputs
    emb = embedding(tape, tape.param(store, "emb"), ids)
    hidden = last_step(tape, lstm_stack(tape, store, "enc", emb, layers=1))
    ctx = tanh(tape, dense(tape, tape.constant(context), tape.param(store, "ctx.w"), tape.param(store, "ctx.b")))
    joined = concat(tape, [hidden, ctx])
    repl = dense(tape, joined, tape.param(store, "repl.w"), tape.param(store, "repl.b"))
    pf = dense(tape, joined, tape.param(store, "pf.w"), tape.param(store, "pf.b"))
    bce = sigmoid_bce(tape, repl, labels)
    xent = softmax_xent_op(tape, pf, targets, mask)
    anchors = dense(tape, joined, tape.param(store, "proj.w"), tape.param(store, "proj.b"))
    neg_emb = embedding(tape, tape.param(store, "emb"), neg_ids)
    negatives = reshape(tape, dense(tape, neg_emb, tape.param(store, "proj2.w"), tape.param(store, "proj2.b")),
                        (ids.shape[0], 2, 3))
    positives = dense(tape, ctx, tape.param(store, "proj3.w"), tape.param(store, "proj3.b"))
    nce = info_nce(tape, anchors, positives, negatives, temperature=0.5)
    return weighted_sum(tape, [(bce, 1.0), (xent, 0.7), (nce, 0.3)])


class TestGradCheck:
    def test_linear_model_is_exact(self):
        rng = np.random.default_rng(0)
        store = float64_store(w=rng.normal(size=(3, 1)), b=rng.normal(size=1))
        assert grad_check(_linear_forward, store, rng.normal(size=(1, 3))) < 1e-8

    def test_lstm_with_bce_head(self):
        rng = np.random.default_rng(1)
        store = ParamStore(np.float64)
        init_lstm(store, "enc", 3, 4, rng)
        store.add("head.w", rng.normal(size=(4, 1)))
        store.add("head.b", np.zeros(1))
        inputs = (rng.normal(size=(2, 3, 3)), np.array([1.0, 0.0]))
        assert grad_check(_lstm_bce_forward, store, inputs) < 1e-4

    def test_detects_corrupted_gradient(self):
        rng = np.random.default_rng(2)
        store = float64_store(w=rng.normal(size=(3, 1)), b=rng.normal(size=1))
        inputs = (rng.normal(size=(4, 3)), np.array([1.0, 0.0, 1.0, 1.0]))
        assert grad_check(_corrupted_forward, store, inputs) == pytest.approx(0.5, abs=1e-4)

    def test_stencil_is_exact_on_cubics(self):
        flat = np.array([2.0])
        derivative = numeric_derivative(lambda: float(flat[0] ** 3 - flat[0]), flat, 0, eps=0.1)
        assert derivative == pytest.approx(11.0, rel=1e-12)
        assert flat[0] == 2.0

    def test_small_gradients_are_checked_against_the_floor(self):
        rng = np.random.default_rng(5)
        store = float64_store(w=rng.normal(size=(3, 1)), b=rng.normal(size=1))
        inputs = 1e-9 * rng.normal(size=(1, 3))
        report = grad_check_report(_linear_forward, store, inputs)
        assert report.per_param["w"] < 1e-4

    def test_every_op(self):
        rng = np.random.default_rng(3)
        store = ParamStore(np.float64)
        store.add("emb", rng.normal(size=(6, 3)))
        init_lstm(store, "enc", 3, 4, rng, layers=1)
        for name, shape in [("ctx", (2, 3)), ("repl", (7, 1)), ("pf", (7, 5)), ("proj", (7, 3)),
                            ("proj2", (3, 3)), ("proj3", (3, 3))]:
            store.add(f"{name}.w", rng.normal(size=shape))
            store.add(f"{name}.b", rng.normal(size=shape[1]))
        inputs = (
            np.array([[1, 2, 3], [4, 5, 1]]),
            rng.normal(size=(2, 2)),
            np.array([0.0, 1.0]),
            np.array([4, 0]),
            np.array([True, False]),
            np.array([[2, 3], [5, 4]]),
        )
        report = grad_check_report(_every_op_forward, store, inputs)
        assert report.max_rel_error < 1e-4, report.worst
        assert set(report.per_param) == set(store.params)


class TestMaskedXent:
    def test_masked_rows_ignored(self):
        tape = Tape()
        logits = tape.constant(np.array([[0.0, 0.0], [5.0, -5.0]]))
        loss = softmax_xent_op(tape, logits, np.array([0, 1]), np.array([True, False]))
        assert float(loss.value) == pytest.approx(math.log(2))

    def test_all_masked(self):
        tape = Tape()
        loss = softmax_xent_op(tape, tape.constant(np.zeros((2, 3))), np.array([9, 9]), np.zeros(2, dtype=bool))
        assert float(loss.value) == 0.0


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        store = float64_store(w=np.array([1.0, -2.0]))
        adam_step(store, lr=0.1)
        assert_array_equal(store["w"], [1.0, -2.0])

    def test_first_step_magnitude(self):
        store = float64_store(w=np.array([0.0]))
        store.grads["w"][...] = 1.0
        adam_step(store, lr=0.001, t=1)
        assert store["w"][0] == pytest.approx(-0.001, rel=1e-6)

    def test_deterministic(self):
        results = []
        for _ in range(2):
            store = float64_store(w=np.ones(3))
            for step in range(5):
                store.grads["w"][...] = np.array([0.1, -0.2, 0.3]) * (step + 1)
                adam_step_with(store, AdamConfig(lr=0.01))
            results.append(store["w"].copy())
        assert_array_equal(results[0], results[1])

    def test_names_and_scales(self):
        store = float64_store(a=np.zeros(1), b=np.zeros(1), c=np.zeros(1))
        for name in store:
            store.grads[name][...] = 1.0
        adam_step(store, lr=0.01, names=["a", "b"], lr_scales={"b": 0.1})
        assert store["a"][0] == pytest.approx(-0.01, rel=1e-6)
        assert store["b"][0] == pytest.approx(-0.001, rel=1e-6)
        assert store["c"][0] == 0.0
        assert "c" not in store.steps


class TestCheckpoint:
    @pytest.fixture
    def store(self):
        rng = np.random.default_rng(4)
        store = ParamStore()
        store.add("enc.w", rng.normal(size=(3, 4)))
        store.add("head.b", rng.normal(size=1))
        store.grads["enc.w"][...] = 1.0
        adam_step(store, lr=0.01, names=["enc.w"])
        return store

    def test_round_trip_bit_exact(self, store):
        loaded, meta = load_checkpoint(save_checkpoint(store, {"model_kind": "joint"}))
        assert meta == {"model_kind": "joint"}
        assert loaded.snapshot() == store.snapshot()
        assert_array_equal(loaded.adam_m["enc.w"], store.adam_m["enc.w"])
        assert loaded.steps == {"enc.w": 1}

    def test_without_optimizer(self, store):
        loaded, _ = load_checkpoint(save_checkpoint(store, {}, include_optimizer=False))
        assert loaded.adam_m == {}

    def test_bad_magic(self, store):
        data = b"XXXX" + save_checkpoint(store, {})[4:]
        with pytest.raises(CheckpointFormatError, match="bad magic") as info:
            load_checkpoint(data)
        assert info.value.offset == 0

    def test_truncated(self, store):
        data = save_checkpoint(store, {"k": "v"})
        with pytest.raises(CheckpointFormatError, match="truncated"):
            load_checkpoint(data[:-3])

    def test_unknown_version(self, store):
        data = bytearray(save_checkpoint(store, {}))
        data[4] = 9
        with pytest.raises(CheckpointFormatError, match="version"):
            load_checkpoint(bytes(data))

    def test_trailing_bytes(self, store):
        with pytest.raises(CheckpointFormatError, match="trailing"):
            load_checkpoint(save_checkpoint(store, {}) + b"\0")

    def test_user_key_named_like_optimizer_state(self, store):
        loaded, meta = load_checkpoint(save_checkpoint(store, {"adam_steps": "mine"}))
        assert meta == {"adam_steps": "mine"}
        assert loaded.steps == {"enc.w": 1}

    def test_reserved_prefix_rejected(self, store):
        with pytest.raises(ConfigError):
            save_checkpoint(store, {"jcl.note": "x"})

    @pytest.mark.parametrize("steps, message", [("{oops", "not valid JSON"), ('{"enc.w": -1}', "non-negative")])
    def test_malformed_step_counts(self, store, steps, message):
        data = save_checkpoint(store, {"jclXadam_steps": steps}, include_optimizer=False)
        data = data.replace(b"jclXadam_steps", b"jcl.adam_steps")
        with pytest.raises(CheckpointFormatError, match=message):
            load_checkpoint(data)


def _drive(store, steps, start=0):
    for step in range(start, start + steps):
        for name, value in store.params.items():
            store.grads[name][...] = np.cos(value * (step + 1)) + 0.1 * step
        adam_step_with(store, AdamConfig(lr=0.05))


class TestResume:
    def test_resumed_training_matches_uninterrupted(self):
        rng = np.random.default_rng(6)
        initial = {"enc.w": rng.normal(size=(3, 4)), "head.b": rng.normal(size=2)}

        def fresh():
            store = ParamStore()
            for name, value in initial.items():
                store.add(name, value)
            return store

        straight = fresh()
        _drive(straight, 5)

        interrupted = fresh()
        _drive(interrupted, 3)
        resumed, _ = load_checkpoint(save_checkpoint(interrupted, {}))
        assert resumed.steps == {"enc.w": 3, "head.b": 3}
        _drive(resumed, 2, start=3)

        assert resumed.snapshot() == straight.snapshot()
        assert resumed.steps == straight.steps
        for name in straight.params:
            assert_array_equal(resumed.adam_m[name], straight.adam_m[name])
            assert_array_equal(resumed.adam_v[name], straight.adam_v[name])
