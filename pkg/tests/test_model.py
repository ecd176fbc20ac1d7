import math

import numpy as np
import pytest

from tweet2news import numerics as nx
from tweet2news.batch import pad_batch
from tweet2news.model import (NEWS, TWEET, Attention, Discriminator, FeedForward, ModelConfig,
                              StyleTransferModel, load_checkpoint, save_checkpoint)
from tweet2news.tokenizer import EOS

CFG = ModelConfig(n_layers=2, n_heads=2, d_model=16, d_ff=24, max_len=20, vocab_size=30)


def model(seed=0, cfg=CFG):
    return StyleTransferModel(cfg, seed=seed)


def batch(seqs, style=TWEET):
    return pad_batch(seqs, style)


SEQS = [[5, 6, 7, 8], [9, 10], [5, 6, 7, 8]]


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(d_model=10, n_heads=3)
    with pytest.raises(ValueError):
        ModelConfig(dropout_p=1.0)
    d = ModelConfig()
    assert (d.n_layers, d.n_heads, d.d_model, d.d_ff, d.max_len) == (2, 2, 64, 128, 128)


def test_encode_shape_and_identical_rows():
    enc = model().encode(batch(SEQS), TWEET)
    assert enc.z.shape == (3, 6, 16)
    np.testing.assert_array_equal(enc.z.data[0], enc.z.data[2])
    assert enc.mask[1].tolist() == [True] * 4 + [False] * 2


def test_padding_does_not_leak():
    m = model()
    alone = m.encode(batch([[9, 10]]), TWEET).z.data[0]
    padded = m.encode(batch([[9, 10], [5, 6, 7, 8, 9, 10]]), TWEET).z.data[0, :4]
    np.testing.assert_allclose(alone, padded, atol=1e-12)


def test_style_rows_identical_at_init_then_distinguish():
    m = model()
    b = batch(SEQS)
    np.testing.assert_array_equal(m.encode(b, TWEET).z.data, m.encode(b, NEWS).z.data)
    # a uniform shift would be removed by layer norm; use a random direction
    m.style_emb.data[NEWS] += np.random.default_rng(0).normal(0, 0.5, size=16)
    assert not np.allclose(m.encode(b, TWEET).z.data, m.encode(b, NEWS).z.data)


def test_one_shared_encoder():
    m = model()
    b = batch(SEQS)
    before = m.encode(b, NEWS).z.data.copy()
    # write through the l1 path's parameters, read through l2
    tweet_params = set(map(id, m.encoder_parameters()))
    w = m.enc_layers[0].ff.fc1.weight
    w.data += np.random.default_rng(1).normal(0, 0.3, size=w.shape)
    assert id(m.enc_layers[0].ff.fc1.weight) in tweet_params
    assert not np.allclose(m.encode(b, NEWS).z.data, before)


def test_overlength_and_bad_ids():
    m = model()
    with pytest.raises(ValueError):
        m.encode(batch([list(range(5, 25))]), TWEET)
    with pytest.raises(ValueError):
        m.encode(batch([[31]]), TWEET)
    with pytest.raises(ValueError):
        m.encode(batch([[5]]), 2)


def test_decoder_needs_bos():
    m = model()
    b = batch(SEQS)
    no_bos = pad_batch(SEQS, frame=False)
    with pytest.raises(ValueError):
        m.decode_teacher_forced(m.encode(b, TWEET), no_bos, TWEET)


def test_logits_shape_and_finite():
    m = model()
    b = batch(SEQS)
    logits = m.decode_teacher_forced(m.encode(b, TWEET), b, NEWS)
    assert logits.shape == (3, 5, 30)
    assert np.isfinite(logits.data).all()


def test_causality():
    m = model()
    enc = m.encode(batch([SEQS[0]]), TWEET)
    tgt = batch([[11, 12, 13, 14, 15]], NEWS)
    base = m.decode_teacher_forced(enc, tgt, NEWS).data
    for t in range(1, 6):
        ids = tgt.ids.copy()
        ids[0, t] = 20
        alt = m.decode_teacher_forced(enc, type(tgt)(ids, tgt.lengths, tgt.styles), NEWS).data
        # row j sees target tokens 0..j, so changing token t only moves rows >= t
        np.testing.assert_array_equal(alt[0, :t], base[0, :t])
        assert not np.allclose(alt[0, t:], base[0, t:])


def test_untrained_loss_near_log_vocab():
    cfg = ModelConfig(d_model=32, n_heads=2, d_ff=64, max_len=30, vocab_size=500)
    rng = np.random.default_rng(0)
    for seed in range(3):
        m = model(seed, cfg)
        seqs = [rng.integers(5, 500, size=12).tolist() for _ in range(4)]
        loss = m.reconstruction_loss(batch(seqs), TWEET, batch(seqs, NEWS), NEWS).item()
        assert abs(loss - math.log(500)) <= 0.1 * math.log(500)


def test_generate_eos_forced_is_empty():
    m = model()
    m.out.weight.data[:] = 0.0
    m.out.bias.data[:] = 0.0
    m.out.bias.data[EOS] = 50.0
    assert m.generate(m.encode(batch(SEQS), TWEET), NEWS, max_new=5) == [[], [], []]


def test_generate_deterministic_and_bounded():
    m = model()
    enc = m.encode(batch(SEQS), TWEET)
    a = m.generate(enc, NEWS, max_new=7)
    assert a == m.generate(enc, NEWS, max_new=7)
    assert all(len(s) <= 7 for s in a)
    s1 = m.generate(enc, NEWS, max_new=7, mode="sample", seed=4)
    assert s1 == m.generate(enc, NEWS, max_new=7, mode="sample", seed=4)
    with pytest.raises(ValueError):
        m.generate(enc, NEWS, max_new=0)


def test_copy_task_overfit_reproduces_inputs():
    rng = np.random.default_rng(5)
    seqs = [rng.integers(5, 30, size=rng.integers(3, 7)).tolist() for _ in range(20)]
    m = model(1, ModelConfig(n_layers=2, n_heads=2, d_model=32, d_ff=64, max_len=20, vocab_size=30))
    opt = nx.Adam(m.parameters(), lr=3e-3)
    for step in range(600):
        idx = np.random.default_rng(step).choice(20, 8, replace=False)
        chunk = [seqs[i] for i in idx]
        nx.backward(m.reconstruction_loss(batch(chunk), TWEET, batch(chunk), TWEET))
        opt.step()
    assert m.generate(m.encode(batch(seqs), TWEET), TWEET, max_new=10) == seqs


# ---------------------------------------------------------------- discriminator


def test_discriminator_range_and_duplicates():
    d = Discriminator(16, 8)
    z = nx.Tensor(np.random.default_rng(0).normal(size=(3, 4, 16)))
    z.data[2] = z.data[0]
    p = d.discriminate(z, np.ones((3, 4), dtype=bool)).data
    assert ((p > 0) & (p < 1)).all()
    # batched BLAS may round duplicate rows differently in the last ulp
    np.testing.assert_allclose(p[0], p[2], rtol=1e-14)


def test_discriminator_ignores_padding():
    d = Discriminator(16, 8)
    z = np.random.default_rng(1).normal(size=(1, 5, 16))
    mask = np.array([[1, 1, 1, 0, 0]], dtype=bool)
    p1 = d.discriminate(nx.Tensor(z), mask).data
    z[0, 3:] = 99.0
    assert d.discriminate(nx.Tensor(z), mask).data[0] == p1[0]


def test_discriminator_empty_sequence():
    d = Discriminator(4, 3)
    with pytest.raises(ValueError):
        d.discriminate(nx.Tensor(np.zeros((1, 2, 4))), np.zeros((1, 2), dtype=bool))


def test_discriminator_learns_separable_clusters():
    rng = np.random.default_rng(0)
    d = Discriminator(8, 16, seed=0)
    opt = nx.Adam(d.parameters(), lr=1e-2)

    def sample(n):
        a = rng.normal(1.0, 0.5, size=(n, 6, 8))
        b = rng.normal(-1.0, 0.5, size=(n, 6, 8))
        return a, b

    mask = np.ones((16, 6), dtype=bool)
    for _ in range(60):
        a, b = sample(16)
        loss = nx.mean_all(nx.neg_log_sigmoid(d.logits(nx.Tensor(a), mask))) + \
            nx.mean_all(nx.neg_log_sigmoid(-d.logits(nx.Tensor(b), mask)))
        nx.backward(loss)
        opt.step()
    a, b = sample(100)
    m = np.ones((100, 6), dtype=bool)
    acc = ((d.discriminate(nx.Tensor(a), m).data > 0.5).sum() + (d.discriminate(nx.Tensor(b), m).data <= 0.5).sum()) / 200
    assert acc >= 0.95


# ---------------------------------------------------------------- layers


def test_grad_attention_and_feedforward():
    rng = np.random.default_rng(3)
    att = Attention(8, 2, rng)
    ff = FeedForward(8, 12, rng)
    x = nx.Tensor(rng.normal(size=(2, 4, 8)), requires_grad=True)
    kv = nx.Tensor(rng.normal(size=(2, 3, 8)), requires_grad=True)
    keep = np.array([[1, 1, 1], [1, 1, 0]], dtype=bool)[:, None, None, :]
    w = nx.Tensor(rng.normal(size=(2, 4, 8)))
    params = {**{f"att.{n}": p for n, p in att.named_parameters()},
              **{f"ff.{n}": p for n, p in ff.named_parameters()}, "x": x, "kv": kv}
    errs = nx.check_gradients(lambda: nx.sum_all(ff(att(x, kv, keep)) * w), params)
    assert max(errs.values()) < 1e-4, errs


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_bit_exact(tmp_path):
    m, d = model(3), Discriminator(16, 8, seed=2)
    p = tmp_path / "m.ckpt"
    save_checkpoint(p, m, d)
    m2, d2 = load_checkpoint(p)
    assert m2.cfg == m.cfg
    for (n1, a), (n2, b) in zip(m.named_parameters(), m2.named_parameters()):
        assert n1 == n2 and np.array_equal(a.data, b.data)
    for (_, a), (_, b) in zip(d.named_parameters(), d2.named_parameters()):
        assert np.array_equal(a.data, b.data)
    save_checkpoint(tmp_path / "again.ckpt", m2, d2)
    assert p.read_bytes() == (tmp_path / "again.ckpt").read_bytes()
    assert p.read_bytes().startswith(b"sfck v1")


def test_checkpoint_without_discriminator(tmp_path):
    save_checkpoint(tmp_path / "m.ckpt", model())
    _, d = load_checkpoint(tmp_path / "m.ckpt")
    assert d is None


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x").write_bytes(b"nope")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "x")
