import json
import math

import numpy as np
import pytest

from ipalm.autodiff import Parameter, Tensor, is_grad_enabled
from ipalm.errors import ContractError, NumericError, ShapeError
from ipalm.ipa import IPAModel, ModelConfig
from ipalm.tokenizer import bpe_train, byte_tokenizer
from ipalm.train import (
    Adam,
    CorpusStreams,
    MetricsRecord,
    TrainConfig,
    adam_step,
    batch_for_step,
    clip_grad_norm,
    cross_entropy,
    dumps_checkpoint,
    encode_lines,
    evaluate,
    generate,
    load_corpus,
    load_training_state,
    loads_checkpoint,
    make_optimizer,
    read_metrics,
    sample_batch,
    save_training_state,
    train,
    train_step,
    window_batches,
)
from factories import random_ipa
from oracles import cross_entropy_loops


def small_ipa(vocab=12, m_max=8, seed=0, precision=64):
    cfg = ModelConfig(n=8, m_max=m_max, n_layers=1, p_col=2, p_row=2, k=3,
                      vocab_size=vocab, precision=precision)
    return IPAModel(cfg, seed=seed)


# --------------------------------------------------------------- cross entropy

def test_uniform_logits_give_log_v():
    loss = cross_entropy(Tensor(np.zeros((5, 16))), np.arange(5))
    assert abs(float(loss.data) - math.log(16)) < 1e-12
    assert abs(math.log(16) - 2.7726) < 1e-4


def test_confident_correct_logits_approach_zero():
    values = []
    for margin in (5.0, 10.0, 20.0):
        logits = np.zeros((3, 4))
        logits[np.arange(3), [0, 2, 1]] = margin
        values.append(float(cross_entropy(Tensor(logits), np.array([0, 2, 1])).data))
    assert values[0] > values[1] > values[2] > 0
    assert values[2] < 1e-8


def test_random_logits_match_scalar_loops():
    rng = np.random.default_rng(0)
    logits = rng.normal(scale=4.0, size=(2, 6, 9))
    targets = rng.integers(0, 9, size=(2, 6))
    got = float(cross_entropy(Tensor(logits), targets).data)
    expected = cross_entropy_loops(logits.reshape(-1, 9), targets.reshape(-1))
    assert abs(got - expected) < 1e-10


def test_cross_entropy_errors():
    with pytest.raises(IndexError):
        cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 3]))
    with pytest.raises(ShapeError):
        cross_entropy(Tensor(np.zeros((2, 3))), np.array([0, 1, 2]))


# ------------------------------------------------------------------- optimizer

def test_zero_gradient_leaves_parameters_unchanged():
    p = Parameter(np.array([1.0, -2.0]), "p")
    opt = Adam([p], lr=0.1)
    opt.step()
    assert np.array_equal(p.data, [1.0, -2.0])


def test_first_step_matches_hand_evaluation():
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    p = Parameter(np.array([0.5, -1.0, 2.0]), "p")
    g = np.array([0.3, -0.2, 4.0])
    opt = Adam([p], lr=lr, beta1=b1, beta2=b2, eps=eps)
    p.grad[...] = g
    adam_step([p], opt)
    m_hat = (1 - b1) * g / (1 - b1)
    v_hat = (1 - b2) * g * g / (1 - b2)
    expected = np.array([0.5, -1.0, 2.0]) - lr * m_hat / (np.sqrt(v_hat) + eps)
    np.testing.assert_allclose(p.data, expected, rtol=0, atol=1e-15)
    # step 1 moves every coordinate by almost exactly lr against the gradient sign
    np.testing.assert_allclose(p.data - [0.5, -1.0, 2.0], -lr * np.sign(g), rtol=1e-6)


def test_second_step_matches_hand_evaluation():
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    p = Parameter(np.array([1.0]), "p")
    opt = Adam([p], lr=lr)
    g1, g2 = 2.0, -1.0
    p.grad[...] = g1
    opt.step()
    p.grad[...] = g2
    opt.step()
    m = b1 * (1 - b1) * g1 + (1 - b1) * g2
    v = b2 * (1 - b2) * g1 ** 2 + (1 - b2) * g2 ** 2
    expected = 1.0 - lr * g1 / (abs(g1) + eps) - lr * (m / (1 - b1 ** 2)) / (math.sqrt(v / (1 - b2 ** 2)) + eps)
    assert abs(p.data[0] - expected) < 1e-12


def test_identical_states_give_identical_updates():
    rng = np.random.default_rng(1)
    init, grad = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    outs = []
    for _ in range(2):
        p = Parameter(init.copy(), "p")
        opt = Adam([p], lr=0.05)
        for _ in range(3):
            p.grad[...] = grad
            opt.step()
        outs.append(p.data)
    assert np.array_equal(outs[0], outs[1])


def test_nan_gradient_names_the_parameter():
    p = Parameter(np.zeros(2), "layers.0.col.bias")
    p.grad[0] = np.nan
    with pytest.raises(NumericError, match="layers.0.col.bias"):
        Adam([p]).step()


def test_clip_grad_norm_scales_to_limit():
    a, b = Parameter(np.zeros(2), "a"), Parameter(np.zeros(1), "b")
    a.grad[...] = [3.0, 0.0]
    b.grad[...] = [4.0]
    assert clip_grad_norm([a, b], 1.0) == pytest.approx(5.0)
    assert math.sqrt(np.sum(a.grad ** 2) + np.sum(b.grad ** 2)) == pytest.approx(1.0)


# ----------------------------------------------------------------------- data

def test_batches_reconstruct_the_shifted_stream():
    stream = np.arange(1000)
    batch = sample_batch(stream, 10, 32, np.random.default_rng(0))
    for inp, tgt in zip(batch.inputs, batch.targets):
        assert np.array_equal(tgt, stream[inp[0] + 1: inp[0] + 11])
        assert np.array_equal(inp[1:], tgt[:-1])


def test_window_batches_cover_the_stream_in_order():
    stream = np.arange(103) * 7
    batches = list(window_batches(stream, 10, 4))
    inputs = np.concatenate([b.inputs for b in batches]).reshape(-1)
    targets = np.concatenate([b.targets for b in batches]).reshape(-1)
    assert np.array_equal(inputs, stream[:100])
    assert np.array_equal(targets, stream[1:101])


def test_short_stream_is_rejected():
    with pytest.raises(ContractError):
        list(window_batches(np.arange(5), 5, 2))
    with pytest.raises(ContractError):
        sample_batch(np.arange(5), 5, 2, np.random.default_rng(0))


def test_batch_for_step_is_a_pure_function_of_seed_and_step():
    cfg = TrainConfig(seq_len=4, batch_size=3, seed=9)
    stream = np.arange(200)
    a, b = batch_for_step(stream, cfg, 17), batch_for_step(stream, cfg, 17)
    assert np.array_equal(a.inputs, b.inputs)
    assert not np.array_equal(a.inputs, batch_for_step(stream, cfg, 18).inputs)


def write_corpus(tmp_path, size=1000, seed=0, name="corpus.txt"):
    rng = np.random.default_rng(seed)
    words = ["alpha", "beta", "gamma", "delta", "the", "of", "a"]
    text, lines = "", []
    while len(text) < size:
        line = " ".join(rng.choice(words, size=int(rng.integers(1, 8)))) + "\n"
        lines.append(line)
        text += line
    path = tmp_path / name
    path.write_text(text)
    return path, lines


def test_single_file_split_by_fractions(tmp_path):
    path, _ = write_corpus(tmp_path, 5000)
    streams = load_corpus(path, vocab_size=300)
    total = len(streams.train) + len(streams.valid) + len(streams.test)
    for part, frac in zip((streams.train, streams.valid, streams.test), (0.8, 0.1, 0.1)):
        assert abs(len(part) - frac * total) <= 1


def test_total_ids_equal_per_line_encodings(tmp_path):
    path, lines = write_corpus(tmp_path, 1000)
    streams = load_corpus(path, vocab_size=280)
    total = len(streams.train) + len(streams.valid) + len(streams.test)
    assert total == sum(len(streams.tokenizer.encode(line)) for line in lines)
    joined = np.concatenate([streams.train, streams.valid, streams.test])
    assert streams.tokenizer.decode(joined) == path.read_bytes()


def test_pre_split_files_use_train_only_for_merges(tmp_path):
    train_p, _ = write_corpus(tmp_path, 2000, 1, "train.txt")
    valid_p = tmp_path / "valid.txt"
    test_p = tmp_path / "test.txt"
    valid_p.write_text("zzzz zzzz zzzz zzzz\n")
    test_p.write_text("zzzz qqqq\n")
    streams = load_corpus([train_p, valid_p, test_p], vocab_size=300)
    assert streams.tokenizer.merges == bpe_train(train_p.read_bytes(), 300).merges
    assert b"zz" not in streams.tokenizer.vocab


def test_corpus_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_corpus(tmp_path / "missing.txt")
    empty = tmp_path / "empty.txt"
    empty.write_text("")
    path, _ = write_corpus(tmp_path, 500)
    with pytest.raises(ContractError):
        load_corpus([path, path, empty], vocab_size=260)


# ------------------------------------------------------------------ evaluation

def test_evaluate_matches_one_window_at_a_time():
    rng = np.random.default_rng(2)
    model = random_ipa(rng, vocab_size=10, m_max=5)
    stream = rng.integers(0, 10, size=57)
    m = 5
    losses = []
    for start in range(0, (len(stream) - 1) // m * m, m):
        logits = model(stream[start:start + m]).data
        losses.append(cross_entropy_loops(logits, stream[start + 1:start + m + 1]))
    got = evaluate(model, stream, m, batch_size=3)
    assert abs(got - np.mean(losses)) < 1e-12
    assert evaluate(model, stream, m, batch_size=3) == got


def test_overfit_constant_stream_has_tiny_eval_loss():
    model = small_ipa(vocab=5, m_max=6)
    stream = np.full(200, 3)
    cfg = TrainConfig(lr=0.05, batch_size=4, seq_len=6)
    opt = make_optimizer(model, cfg)
    for step in range(150):
        train_step(model, opt, batch_for_step(stream, cfg, step))
    assert evaluate(model, stream, 6) < 0.01


# -------------------------------------------------------------------- training

def test_step_moves_every_parameter_and_lr_zero_moves_none():
    rng = np.random.default_rng(3)
    stream = rng.integers(0, 12, size=300)
    for lr, should_move in ((0.01, True), (0.0, False)):
        model = small_ipa()
        before = {p.name: p.data.copy() for p in model.parameters()}
        cfg = TrainConfig(lr=lr, batch_size=4, seq_len=8)
        train_step(model, make_optimizer(model, cfg), batch_for_step(stream, cfg, 0))
        for p in model.parameters():
            if p.name == "layers.0.row.bias":
                continue   # columns beyond seq_len are unused only when seq_len < m_max
            assert (not np.array_equal(p.data, before[p.name])) == should_move, p.name


def streams_for(stream):
    return CorpusStreams(stream, stream[:100], stream[:100], byte_tokenizer())


def test_zero_steps_returns_initial_evaluation(tmp_path):
    model = small_ipa()
    stream = np.random.default_rng(4).integers(0, 12, size=300)
    hist = train(model, streams_for(stream), TrainConfig(max_steps=0, batch_size=2, seq_len=8),
                 metrics_path=tmp_path / "m.jsonl")
    assert [(r.step, r.split) for r in hist] == [(0, "train"), (0, "test")]
    rows = [json.loads(line) for line in (tmp_path / "m.jsonl").read_text().splitlines()]
    assert [tuple(r) for r in rows] == [("step", "split", "loss", "ms_per_iter", "params")] * 2
    assert rows[0]["params"] == model.num_parameters()


def test_training_writes_checkpoints_and_metrics(tmp_path):
    model = small_ipa()
    stream = np.random.default_rng(5).integers(0, 12, size=400)
    cfg = TrainConfig(lr=0.01, max_steps=6, eval_interval=3, batch_size=2, seq_len=8)
    hist = train(model, streams_for(stream), cfg, out_dir=tmp_path, metrics_path=tmp_path / "m.jsonl")
    assert [r.step for r in hist] == [0, 0, 3, 3, 6, 6]
    assert (tmp_path / "best.ckpt").exists() and (tmp_path / "last.ckpt").exists()
    assert read_metrics(tmp_path / "m.jsonl") == hist
    _, meta, _ = load_training_state(tmp_path / "last.ckpt")
    assert meta["step"] == 6 and meta["train"] == cfg.to_dict()


def test_divergence_writes_last_checkpoint_then_raises(tmp_path):
    model = small_ipa()
    stream = np.random.default_rng(6).integers(0, 12, size=300)
    cfg = TrainConfig(lr=0.01, max_steps=5, eval_interval=10, batch_size=2, seq_len=8)
    calls = {"n": 0}
    real_call = IPAModel.__call__

    def poisoned(self, ids, trace=None):
        out = real_call(self, ids, trace)
        if is_grad_enabled():
            calls["n"] += 1
            if calls["n"] == 5:    # the step-0 probe, then training steps 1 to 4
                out.data[...] = np.nan
        return out

    IPAModel.__call__ = poisoned
    try:
        with pytest.raises(NumericError):
            train(model, streams_for(stream), cfg, out_dir=tmp_path)
    finally:
        IPAModel.__call__ = real_call
    _, meta, _ = load_training_state(tmp_path / "last.ckpt")
    assert meta["step"] == 3


def test_resume_reproduces_uninterrupted_losses(tmp_path):
    stream = np.random.default_rng(7).integers(0, 12, size=500)
    cfg = TrainConfig(lr=0.01, max_steps=8, eval_interval=2, batch_size=2, seq_len=8)
    full = train(small_ipa(), streams_for(stream), cfg, out_dir=tmp_path / "a")

    half = TrainConfig(**{**cfg.to_dict(), "max_steps": 4})
    train(small_ipa(), streams_for(stream), half, out_dir=tmp_path / "b")
    model, meta, tensors = load_training_state(tmp_path / "b" / "last.ckpt")
    rest = train(model, streams_for(stream), cfg, out_dir=tmp_path / "b", resume=(meta, tensors))
    assert [r.loss for r in rest] == [r.loss for r in full if r.step > 4]


# ----------------------------------------------------------------- checkpoints

def test_checkpoint_roundtrip_is_byte_identical_and_logits_bitwise(tmp_path):
    model = random_ipa(np.random.default_rng(8))
    opt = Adam(model.parameters())
    save_training_state(tmp_path / "a.ckpt", model, opt, 3, {"lr": 1.0}, "abc")
    loaded, meta, tensors = load_training_state(tmp_path / "a.ckpt")
    save_training_state(tmp_path / "b.ckpt", loaded, opt, 3, {"lr": 1.0}, "abc")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    ids = np.arange(model.config.m_max) % model.config.vocab_size
    assert np.array_equal(model(ids).data, loaded(ids).data)
    assert meta["tokenizer_hash"] == "abc"


def test_checkpoint_layout():
    blob = dumps_checkpoint({"b": 1, "a": [1, 2]}, {"w": np.arange(6, dtype="<f4").reshape(2, 3)})
    assert blob[:4] == b"IPA1"
    n = int.from_bytes(blob[4:12], "little")
    assert json.loads(blob[12:12 + n]) == {"a": [1, 2], "b": 1}
    rest = blob[12 + n:]
    assert int.from_bytes(rest[:4], "little") == 1 and rest[4:5] == b"w"
    assert rest[5] == 0 and int.from_bytes(rest[6:10], "little") == 2
    assert rest[-24:] == np.arange(6, dtype="<f4").tobytes()
    meta, tensors = loads_checkpoint(blob)
    assert meta == {"a": [1, 2], "b": 1} and tensors["w"].dtype == np.float32


def test_corrupt_checkpoint_is_rejected():
    with pytest.raises(ContractError):
        loads_checkpoint(b"NOPE" + bytes(8))
    blob = dumps_checkpoint({}, {"w": np.zeros(3)})
    with pytest.raises(ContractError):
        loads_checkpoint(blob[:-4])


def test_metrics_record_validation():
    with pytest.raises(ValueError):
        MetricsRecord(1, "train", float("nan"), 1.0, 5)
    with pytest.raises(ValueError):
        MetricsRecord(1, "train", 1.0, 0.0, 5)


# ------------------------------------------------------------------ generation

def test_max_new_zero_returns_prompt():
    assert generate(small_ipa(), [1, 2, 3], 0) == [1, 2, 3]


def test_generation_is_deterministic_given_seed():
    model = small_ipa()
    a = generate(model, [1, 2], 10, temperature=1.0, seed=5)
    assert a == generate(model, [1, 2], 10, temperature=1.0, seed=5)
    assert len(a) == 12


def test_prompt_too_long_is_rejected():
    with pytest.raises(ContractError):
        generate(small_ipa(m_max=4), [1, 2, 3, 4], 1)


def test_overfit_model_recites_its_sentence():
    tok = byte_tokenizer()
    sentence = b"the quick brown fox jumps over the lazy dog. "
    stream = np.asarray(tok.encode(sentence * 30))
    cfg = ModelConfig(n=16, m_max=24, n_layers=1, p_col=2, p_row=2, k=8, vocab_size=257, residual=True)
    model = IPAModel(cfg, seed=0)
    tcfg = TrainConfig(lr=0.02, batch_size=8, seq_len=24)
    opt = make_optimizer(model, tcfg)
    for step in range(400):
        train_step(model, opt, batch_for_step(stream, tcfg, step))
    prompt = tok.encode(sentence[:20])
    out = generate(model, prompt, 25, temperature=0.0)
    assert tok.decode(out) == (sentence * 2)[:45]
