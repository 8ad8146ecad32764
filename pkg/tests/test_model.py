import math

import numpy as np
import pytest

from codesum.autodiff import Tape, Tensor, finite_difference_check
from codesum.corpus import Corpus, Origin, Sample
from codesum.model import (
    AttentionParams,
    CheckpointError,
    Hyperparams,
    LstmLayerParams,
    ModelError,
    TrainingHistory,
    _batch_forward,
    attend,
    decode_step,
    encode,
    forward_loss,
    greedy_decode,
    init_params,
    load_checkpoint,
    lstm_step,
    named_parameters,
    save_checkpoint,
    summarize_text,
    train,
    zero_params,
)
from codesum.vocab import END, START, Vocabulary, pad_batch
from conftest import random_model

TOY = Hyperparams(embed_dim=4, hidden_dim=5, attn_dim=3, num_layers=2,
                  max_len=8, seed=3)


def toy_model(scale=1.0, seed=3, hyper=TOY, vocab=7):
    return random_model(hyper, vocab, vocab, scale, seed)


class TestLstmStep:
    def test_zero_everything_stays_zero(self):
        params = zero_params(7, 7, TOY)
        tape = Tape()
        h, c = lstm_step(tape, Tensor(np.zeros(4)),
                         (Tensor(np.zeros(5)), Tensor(np.zeros(5))),
                         params.enc_layers[0])
        np.testing.assert_allclose(h.data, 0.0, atol=1e-15)
        np.testing.assert_allclose(c.data, 0.0, atol=1e-15)

    def test_zero_weights_halve_cell(self):
        hyper = Hyperparams(embed_dim=2, hidden_dim=1, attn_dim=2,
                            num_layers=1, max_len=4)
        params = zero_params(7, 7, hyper)
        tape = Tape()
        h, c = lstm_step(tape, Tensor(np.zeros(2)),
                         (Tensor(np.zeros(1)), Tensor(np.array([2.0]))),
                         params.enc_layers[0])
        assert abs(c.data[0] - 1.0) < 1e-15
        assert abs(h.data[0] - 0.5 * math.tanh(1.0)) < 1e-15

    def test_saturated_forget_gate_preserves_cell(self):
        hidden = 3
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 40.0  # forget block -> sigmoid ~ 1
        layer = LstmLayerParams(
            w_x=Tensor(np.zeros((4 * hidden, 2))),
            w_h=Tensor(np.zeros((4 * hidden, hidden))),
            b=Tensor(bias),
        )
        cell = np.array([0.3, -0.7, 1.1])
        tape = Tape()
        _, c = lstm_step(tape, Tensor(np.zeros(2)),
                         (Tensor(np.zeros(hidden)), Tensor(cell)), layer)
        # i*g term is exactly zero here (g = tanh(0)), so c' -> c
        np.testing.assert_allclose(c.data, cell, atol=1e-12)

    def test_batch_rows_match_single_vectors(self):
        params = toy_model()
        layer = params.enc_layers[0]
        rng = np.random.default_rng(0)
        xs = rng.uniform(-1, 1, (3, 4))
        hs = rng.uniform(-1, 1, (3, 5))
        cs = rng.uniform(-1, 1, (3, 5))
        tape = Tape()
        h_batch, c_batch = lstm_step(tape, Tensor(xs),
                                     (Tensor(hs), Tensor(cs)), layer)
        for row in range(3):
            h1, c1 = lstm_step(tape, Tensor(xs[row]),
                               (Tensor(hs[row]), Tensor(cs[row])), layer)
            np.testing.assert_allclose(h1.data, h_batch.data[row], atol=1e-15)
            np.testing.assert_allclose(c1.data, c_batch.data[row], atol=1e-15)


class TestEncode:
    def test_single_step_row_equals_final(self):
        params = toy_model()
        tape = Tape()
        enc_states, finals = encode(tape, [4], params)
        assert enc_states.data.shape == (1, 5)
        np.testing.assert_array_equal(enc_states.data[0],
                                      finals[-1][0].data.reshape(-1))

    def test_zero_params_all_zero(self):
        params = zero_params(7, 7, TOY)
        tape = Tape()
        enc_states, _ = encode(tape, [2, 4, 5, 3], params)
        np.testing.assert_allclose(enc_states.data, 0.0, atol=1e-15)

    def test_different_tokens_different_states(self):
        params = toy_model(scale=0.5, seed=9)
        tape = Tape()
        first, _ = encode(tape, [4, 5, 6], params)
        second, _ = encode(tape, [6, 5, 4], params)
        assert not np.allclose(first.data, second.data)

    def test_empty_src_rejected(self):
        with pytest.raises(ModelError, match="empty"):
            encode(Tape(), [], toy_model())

    @pytest.mark.parametrize("layers", [1, 2])
    def test_top_state_shape_independent_of_depth(self, layers):
        hyper = Hyperparams(embed_dim=4, hidden_dim=5, attn_dim=3,
                            num_layers=layers, max_len=8)
        params = random_model(hyper, 7, 7, 0.5, 1)
        tape = Tape()
        enc_states, finals = encode(tape, [2, 4, 3], params)
        assert enc_states.data.shape == (3, 5)
        assert len(finals) == layers


class TestAttend:
    def test_zero_vector_gives_uniform_weights(self):
        params = toy_model()
        attn = AttentionParams(w_enc=params.attention.w_enc,
                               w_dec=params.attention.w_dec,
                               v=Tensor(np.zeros(3)))
        tape = Tape()
        enc_states = Tensor(np.random.default_rng(2).uniform(-1, 1, (4, 5)))
        alpha, _ = attend(tape, enc_states, Tensor(np.zeros(5)), attn,
                          [True, True, False, True])
        np.testing.assert_allclose(alpha.data, [1 / 3, 1 / 3, 0.0, 1 / 3],
                                   atol=1e-12)

    def test_single_unmasked_position_takes_all(self):
        params = toy_model()
        tape = Tape()
        enc_states = Tensor(np.random.default_rng(4).uniform(-1, 1, (3, 5)))
        alpha, context = attend(tape, enc_states, Tensor(np.zeros(5)),
                                params.attention, [False, True, False])
        np.testing.assert_allclose(alpha.data, [0.0, 1.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(context.data, enc_states.data[1], atol=1e-15)

    def test_engineered_scores_softmax_three_to_one(self):
        # e = [ln 3, 0] gives weights [0.75, 0.25]
        attn = AttentionParams(w_enc=Tensor([[1.0]]), w_dec=Tensor([[0.0]]),
                               v=Tensor([2.0]))
        x1 = math.atanh(math.log(3.0) / 2.0)
        enc_states = Tensor(np.array([[x1], [0.0]]))
        tape = Tape()
        alpha, _ = attend(tape, enc_states, Tensor(np.zeros(1)), attn,
                          [True, True])
        np.testing.assert_allclose(alpha.data, [0.75, 0.25], atol=1e-12)

    def test_all_masked_rejected(self):
        params = toy_model()
        tape = Tape()
        enc_states = Tensor(np.zeros((2, 5)))
        with pytest.raises(ModelError, match="masked"):
            attend(tape, enc_states, Tensor(np.zeros(5)), params.attention,
                   [False, False])

    def test_weights_sum_to_one_over_random_steps(self):
        rng = np.random.default_rng(11)
        params = toy_model(scale=1.0, seed=5)
        for _ in range(50):
            t_steps = int(rng.integers(1, 7))
            mask = rng.integers(0, 2, t_steps).astype(bool)
            if not mask.any():
                mask[int(rng.integers(t_steps))] = True
            tape = Tape()
            enc_states = Tensor(rng.uniform(-2, 2, (t_steps, 5)))
            alpha, _ = attend(tape, enc_states,
                              Tensor(rng.uniform(-2, 2, 5)),
                              params.attention, mask.tolist())
            assert abs(alpha.data.sum() - 1.0) <= 1e-9
            assert np.all(alpha.data >= 0.0)


class TestDecodeStep:
    def test_distribution_sums_to_one(self):
        params = toy_model()
        tape = Tape()
        enc_states, state = encode(tape, [2, 4, 3], params)
        dist, _, _ = decode_step(tape, START, state, enc_states,
                                 [True] * 3, params)
        assert abs(dist.data.sum() - 1.0) <= 1e-12

    def test_zero_params_uniform(self):
        params = zero_params(7, 7, TOY)
        tape = Tape()
        enc_states, state = encode(tape, [2, 4, 3], params)
        dist, _, _ = decode_step(tape, START, state, enc_states,
                                 [True] * 3, params)
        np.testing.assert_allclose(dist.data, 1.0 / 7.0, atol=1e-12)

    def test_repeated_calls_bitwise_identical(self):
        params = toy_model()

        def once():
            tape = Tape()
            enc_states, state = encode(tape, [2, 4, 5, 3], params)
            dist, _, alpha = decode_step(tape, 4, state, enc_states,
                                         [True] * 4, params)
            return dist.data.tobytes(), alpha.data.tobytes()

        assert once() == once()

    def test_training_step_distributions_sum_to_one(self):
        params = toy_model(scale=0.9, seed=29)
        src_mat = pad_batch([[START, 4, 5, END], [START, 6, END]], 4)
        tgt_mat = pad_batch([[START, 5, 6, END], [START, 4, END]], 4)
        _, probs, _, _ = _batch_forward(params, src_mat, tgt_mat, True)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        assert np.all(probs > 0.0)

    def test_single_sample_path_matches_batched_path(self):
        params = toy_model(scale=0.8, seed=13)
        src = [START, 4, 5, END]
        tgt = [START, 6, 4, END]
        src_mat = pad_batch([src], len(src))
        tgt_mat = pad_batch([tgt], len(tgt))
        _, probs, _, _ = _batch_forward(params, src_mat, tgt_mat, True)
        tape = Tape()
        enc_states, state = encode(tape, src, params)
        dist, _, _ = decode_step(tape, tgt[0], state, enc_states,
                                 [True] * len(src), params)
        np.testing.assert_allclose(dist.data, probs[0], atol=1e-12)


class TestForwardLoss:
    def test_zero_params_log_vocab(self):
        params = zero_params(9, 9, TOY)
        loss = forward_loss([([START, 4, END], [START, 5, 6, END])], params)
        assert abs(float(loss.data) - math.log(9)) <= 1e-9

    def test_batch_order_invariance(self):
        params = toy_model(scale=0.6, seed=21)
        pairs = [
            ([START, 4, END], [START, 5, END]),
            ([START, 5, 6, END], [START, 6, 4, 5, END]),
            ([START, 6, END], [START, 4, END]),
        ]
        a = float(forward_loss(pairs, params).data)
        b = float(forward_loss(list(reversed(pairs)), params).data)
        assert abs(a - b) <= 1e-12

    def test_saturated_model_reaches_zero_loss(self):
        # a static distribution can only be right everywhere if every target
        # is the same token, so the target repeats token 5 with no end tag
        params = zero_params(7, 7, TOY)
        bias = np.zeros(7)
        bias[5] = 60.0
        params.b_out.data = bias
        loss = forward_loss([([START, 4, END], [START, 5, 5, 5])], params)
        assert 0.0 <= float(loss.data) < 1e-9

    def test_short_target_rejected(self):
        with pytest.raises(ModelError, match="START and END"):
            forward_loss([([START, END], [START])], toy_model())

    def test_empty_batch_rejected(self):
        with pytest.raises(ModelError, match="empty"):
            forward_loss([], toy_model())

    def test_gradient_check_on_toy_loss(self):
        # full acceptance runs every parameter; spot-check three here
        params = toy_model(scale=1.5, seed=3)
        batch = [([START, 4, 5], [START, 5, 6, END])]

        def f(_):
            return forward_loss(batch, params)

        subset = [params.attention.v, params.enc_layers[0].b, params.b_out]
        assert finite_difference_check(f, subset) < 1e-4


class TestGreedyDecode:
    def test_immediate_end_gives_empty_output(self):
        params = zero_params(7, 7, TOY)
        bias = np.zeros(7)
        bias[END] = 5.0
        params.b_out.data = bias
        assert greedy_decode([START, 4, END], params, 6) == []

    def test_no_end_caps_at_max_len(self):
        params = zero_params(7, 7, TOY)
        out = greedy_decode([START, 4, END], params, 5)
        assert len(out) == 5

    def test_exact_ties_choose_lowest_index(self):
        params = zero_params(7, 7, TOY)
        out = greedy_decode([START, 4, END], params, 3)
        assert out == [0, 0, 0]

    def test_pure_function_of_inputs(self):
        params = toy_model(scale=0.7, seed=17)
        src = [START, 5, 6, 4, END]
        assert greedy_decode(src, params, 8) == greedy_decode(src, params, 8)

    def test_empty_src_rejected(self):
        with pytest.raises(ModelError):
            greedy_decode([], toy_model(), 4)


def tiny_corpus():
    rows = [("w1 w2 w3", "m1 m2"), ("w2 w4", "m2 m3"), ("w3 w1", "m3"),
            ("w4 w4 w1", "m1"), ("w1 w4", "m2 m1"), ("w2 w3", "m3 m2")]
    return Corpus(samples=[
        Sample(id=f"t{i}", source=s, target=t, origin=Origin.FUNCTION_PAIR)
        for i, (s, t) in enumerate(rows)
    ])


def tiny_setup(epochs=2, attention=True):
    corpus = tiny_corpus()
    vocab_src = Vocabulary.build([s.source for s in corpus], max_size=50)
    vocab_tgt = Vocabulary.build([s.target for s in corpus], max_size=50)
    hyper = Hyperparams(embed_dim=6, hidden_dim=7, attn_dim=4, num_layers=2,
                        learning_rate=1e-2, epochs=epochs, batch_size=3,
                        max_len=8, seed=11, attention=attention)
    return corpus, vocab_src, vocab_tgt, hyper


class TestTrain:
    def test_zero_epochs_returns_seeded_init(self):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=0)
        params, history = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        expected = init_params(vocab_src.size, vocab_tgt.size, hyper)
        for (_, got), (_, want) in zip(named_parameters(params),
                                       named_parameters(expected)):
            np.testing.assert_array_equal(got.data, want.data)
        assert history.loss == [] and history.accuracy == []

    def test_bitwise_deterministic(self):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=3)
        first, hist1 = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        second, hist2 = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        for (_, a), (_, b) in zip(named_parameters(first),
                                  named_parameters(second)):
            assert a.data.tobytes() == b.data.tobytes()
        assert hist1 == hist2

    def test_loss_decreases_on_tiny_corpus(self):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=15)
        _, history = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        assert len(history.loss) == 15
        assert history.loss[-1] < history.loss[0]

    def test_attention_off_runs(self):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=2,
                                                         attention=False)
        _, history = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        assert len(history.loss) == 2

    def test_sequences_beyond_max_len_are_truncated_not_rejected(self):
        rows = [("w1 " * 30, "m1 " * 30), ("w2 w3", "m2")]
        corpus = Corpus(samples=[
            Sample(id=f"long{i}", source=s.strip(), target=t.strip(),
                   origin=Origin.FUNCTION_PAIR)
            for i, (s, t) in enumerate(rows)
        ])
        vocab_src = Vocabulary.build([s.source for s in corpus], max_size=50)
        vocab_tgt = Vocabulary.build([s.target for s in corpus], max_size=50)
        hyper = Hyperparams(embed_dim=6, hidden_dim=6, attn_dim=3,
                            num_layers=1, epochs=2, batch_size=2, max_len=8,
                            seed=2)
        _, history = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        assert len(history.loss) == 2
        assert all(np.isfinite(history.loss))

    def test_empty_corpus_rejected(self):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup()
        with pytest.raises(ModelError, match="empty"):
            train(Corpus(), corpus, vocab_src, vocab_tgt, hyper)


class TestCheckpoint:
    def test_round_trip_bit_exact_and_same_greedy(self, tmp_path):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=2)
        params, _ = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, (vocab_src, vocab_tgt), hyper, path)
        loaded, (src2, tgt2), hyper2 = load_checkpoint(path)
        assert hyper2 == hyper
        assert src2 == vocab_src and tgt2 == vocab_tgt
        for (_, a), (_, b) in zip(named_parameters(params),
                                  named_parameters(loaded)):
            assert a.data.tobytes() == b.data.tobytes()
        rng = np.random.default_rng(0)
        for _ in range(10):
            src = [START] + rng.integers(4, vocab_src.size,
                                         rng.integers(1, 6)).tolist() + [END]
            assert (greedy_decode(src, params, hyper.max_len)
                    == greedy_decode(src, loaded, hyper2.max_len))

    def test_truncated_file_rejected(self, tmp_path):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=0)
        params, _ = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, (vocab_src, vocab_tgt), hyper, path)
        text = path.read_text()
        path.write_text(text[: len(text) // 2])
        with pytest.raises(CheckpointError, match="corrupted"):
            load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "model.ckpt"
        path.write_text('{"version": 2}')
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError, match="cannot read"):
            load_checkpoint(tmp_path / "nope.ckpt")

    def test_missing_parameter_rejected(self, tmp_path):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=0)
        params, _ = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        path = tmp_path / "model.ckpt"
        save_checkpoint(params, (vocab_src, vocab_tgt), hyper, path)
        import json
        doc = json.loads(path.read_text())
        del doc["params"]["w_out"]
        path.write_text(json.dumps(doc))
        with pytest.raises(CheckpointError, match="w_out"):
            load_checkpoint(path)

    def test_non_ascii_vocabulary_round_trips(self, tmp_path):
        vocab = Vocabulary.build(["prüfen données löschen"], max_size=32)
        hyper = Hyperparams(embed_dim=4, hidden_dim=4, attn_dim=2,
                            num_layers=1, max_len=6)
        params = zero_params(vocab.size, vocab.size, hyper)
        path = tmp_path / "unicode.ckpt"
        save_checkpoint(params, (vocab, vocab), hyper, path)
        _, (loaded_src, _), _ = load_checkpoint(path)
        assert loaded_src == vocab
        assert loaded_src.encode("prüfen") == vocab.encode("prüfen")


class TestSummarizeText:
    def test_produces_text_from_target_vocabulary(self):
        corpus, vocab_src, vocab_tgt, hyper = tiny_setup(epochs=2)
        params, _ = train(corpus, corpus, vocab_src, vocab_tgt, hyper)
        summary = summarize_text("w1 w2", params, vocab_src, vocab_tgt, hyper)
        assert isinstance(summary, str)
        for token in summary.split():
            assert token == "<unk>" or token in vocab_tgt


class TestHyperparams:
    def test_validation(self):
        with pytest.raises(ModelError):
            Hyperparams(embed_dim=0)
        with pytest.raises(ModelError):
            Hyperparams(max_len=1)
        with pytest.raises(ModelError):
            Hyperparams(epochs=-1)
        with pytest.raises(ModelError):
            Hyperparams(learning_rate=0.0)

    def test_history_defaults(self):
        history = TrainingHistory()
        assert history.loss == [] and history.accuracy == []
