"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines
appear under "acceptance criteria" at the end of the report.
"""
import random
import time
from pathlib import Path

import numpy as np
import pytest
from oracles import (BLEU_FIXTURES, FLEISS_TABLE, FLEISS_VALUE, SMALL_TABLE, SMALL_VALUE, WELCH_A, WELCH_B,
                     WELCH_DF, WELCH_P, WELCH_T)

from tweet2news import numerics as nx
from tweet2news.batch import pad_batch
from tweet2news.cli import main as cli_main
from tweet2news.corpus import bundled, generate_news, generate_tweets
from tweet2news.corruptor import CorruptionTally, Corruptor, corrupt_word
from tweet2news.datakit import make_streams
from tweet2news.evaluation import bleu, fleiss_kappa, welch_t
from tweet2news.model import (NEWS, PROPOSITIONS, SENTENCE, TWEET, Attention, Discriminator, FeedForward,
                              ModelConfig, StyleTransferModel)
from tweet2news.objectives import (DataSource, MlmSpec, NoiseSpec, ScheduleSpec, StyleData, Trainer,
                                   adversarial_loss, apply_mlm_mask, backtranslate_loss, denoise_loss,
                                   discriminator_accuracy, discriminator_loss, merge_loss, noise_C, run_schedule,
                                   synthetic_loss)
from tweet2news.propositions import (PropositionRecord, build_merge_pairs, generate_templated, ingest_clause_file,
                                     token_f1, write_pair_file)
from tweet2news.tokenizer import MASK, train_bpe

FIXTURES = Path(__file__).parent / "fixtures"

# ---------------------------------------------------------------- tolerances
GRAD_REL_ERR = 1e-4
GRAD_SECONDS = 60
MLM_MIN_TOKENS = 100_000
MLM_SELECT, MLM_SELECT_TOL = 0.15, 0.01
MLM_MIX, MLM_MIX_TOL = (0.8, 0.1, 0.1), 0.02
ADV_IDENTITY_TOL = 1e-12
DESCENT_STEPS = 10
DENOISE_TARGET, DENOISE_MAX_STEPS, DENOISE_SECONDS, DENOISE_CORPUS = 0.95, 2000, 300, 50
MERGE_TRAIN, MERGE_HELD = 200, 50
MERGE_EXACT, MERGE_F1, MERGE_SECONDS = 0.95, 0.8, 600
CORRUPT_RATE, CORRUPT_TOL, CORRUPT_SENTENCES = 0.15, 0.02, 10_000
BLEU_PLACES = 2
T_DF_TOL, KAPPA_P_TOL = 1e-9, 1e-6
MAX_SOURCE_TOKENS, MIN_PROPOSITIONS = 512, 2
ADV_DROP, ADV_SEEDS = 0.15, (0, 1, 2)


# ---------------------------------------------------------------- 1


def _grad_cases():
    rng = np.random.default_rng(0)

    def leaf(*shape):
        return nx.Tensor(rng.normal(size=shape), requires_grad=True)

    a, b = leaf(3, 4), leaf(4)
    yield "elementwise", (lambda: nx.sum_all(nx.tanh(nx.gelu(a + b) * nx.sigmoid(a)))), {"a": a, "b": b}
    m1, m2 = leaf(2, 3, 4), leaf(4, 5)
    yield "matmul", (lambda: nx.sum_all(nx.matmul(m1, m2))), {"a": m1, "b": m2}
    s = leaf(2, 5)
    keep = np.array([[1, 1, 1, 0, 0], [1] * 5], dtype=bool)
    ws = nx.Tensor(rng.normal(size=(2, 5)))
    yield "softmax", (lambda: nx.sum_all(nx.softmax(s, keep) * ws)), {"a": s}
    x, g, bb = leaf(3, 6), leaf(6), leaf(6)
    wl = nx.Tensor(rng.normal(size=(3, 6)))
    yield "layer_norm", (lambda: nx.sum_all(nx.layer_norm(x, g, bb) * wl)), {"x": x, "g": g, "b": bb}
    table = leaf(7, 3)
    ids = np.array([[1, 4, 1], [0, 6, 2]])
    we = nx.Tensor(rng.normal(size=(2, 3, 3)))
    yield "embedding", (lambda: nx.sum_all(nx.embedding(table, ids) * we)), {"table": table}
    logits = leaf(2, 4, 6)
    targets = rng.integers(0, 6, size=(2, 4))
    cmask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]], dtype=bool)
    yield "cross_entropy", (lambda: nx.cross_entropy(logits, targets, cmask)), {"logits": logits}
    gru = nx.GRU(3, 4, np.random.default_rng(2))
    gx = leaf(2, 5, 3)
    gmask = np.array([[1] * 5, [1, 1, 0, 0, 0]], dtype=bool)
    wg = nx.Tensor(rng.normal(size=(2, 4)))
    yield "gru", (lambda: nx.sum_all(gru(gx, gmask) * wg)), {**dict(gru.named_parameters()), "x": gx}
    att, ff = Attention(8, 2, rng), FeedForward(8, 12, rng)
    ax, kv = leaf(2, 4, 8), leaf(2, 3, 8)
    akeep = np.array([[1, 1, 1], [1, 1, 0]], dtype=bool)[:, None, None, :]
    wa = nx.Tensor(rng.normal(size=(2, 4, 8)))
    params = {**{f"att.{n}": p for n, p in att.named_parameters()},
              **{f"ff.{n}": p for n, p in ff.named_parameters()}, "x": ax, "kv": kv}
    yield "attention+ffn", (lambda: nx.sum_all(ff(att(ax, kv, akeep)) * wa)), params

    cfg = ModelConfig(n_layers=1, n_heads=2, d_model=8, d_ff=12, max_len=10, vocab_size=12)
    model, disc = StyleTransferModel(cfg, seed=1), Discriminator(8, 5, seed=1)
    # break the identical style rows so their gradients differ
    model.style_emb.data[NEWS] += rng.normal(0, 0.1, size=8)
    bx = pad_batch([[5, 6, 7], [8, 9]], TWEET)
    by = pad_batch([[10, 11, 5, 6], [7]], NEWS)

    def composed():
        rec = model.reconstruction_loss(bx, TWEET, by, NEWS)
        return rec + discriminator_loss(model, disc, bx, by, through_encoder=True)

    yield "transformer+gru_disc", composed, {**{f"m.{n}": p for n, p in model.named_parameters()},
                                             **{f"d.{n}": p for n, p in disc.named_parameters()}}


def test_criterion_01_gradient_suite(criterion):
    t0 = time.perf_counter()
    worst = {}
    for name, fn, params in _grad_cases():
        errs = nx.check_gradients(fn, params)
        worst[name] = max(errs.values())
    elapsed = time.perf_counter() - t0
    top = max(worst, key=worst.get)
    ok = max(worst.values()) < GRAD_REL_ERR and elapsed < GRAD_SECONDS
    criterion(1, ok, f"{len(worst)} checks, worst {top} rel err {worst[top]:.2e} (< {GRAD_REL_ERR}), "
                     f"{elapsed:.1f}s (< {GRAD_SECONDS}s)")
    assert ok, worst


# ---------------------------------------------------------------- 2


def test_criterion_02_mlm_statistics(criterion):
    vocab = train_bpe(bundled("news.txt") + bundled("tweets.txt"), 2000)
    stream = np.concatenate([np.array(s) for s in make_streams(bundled("news.txt") + bundled("tweets.txt"), vocab)])
    reps = -(-MLM_MIN_TOKENS // stream.size)
    stream = np.tile(stream, reps)
    out, selected, orig = apply_mlm_mask(stream, MlmSpec(), 0, len(vocab))
    rate = selected.mean()
    n_sel = selected.sum()
    masked = (out[selected] == MASK).sum() / n_sel
    kept = (out[selected] == orig[selected]).sum() / n_sel
    randomized = 1.0 - masked - kept
    mix = (masked, randomized, kept)
    ok = (stream.size >= MLM_MIN_TOKENS and abs(rate - MLM_SELECT) <= MLM_SELECT_TOL
          and all(abs(m - w) <= MLM_MIX_TOL for m, w in zip(mix, MLM_MIX)))
    criterion(2, ok, f"{stream.size} tokens, selected {rate:.4f}, mask/random/keep "
                     f"{masked:.3f}/{randomized:.3f}/{kept:.3f}")
    assert ok


# ---------------------------------------------------------------- 3


def _descent_setup():
    V = 40
    cfg = ModelConfig(n_layers=1, n_heads=2, d_model=16, d_ff=32, max_len=24, vocab_size=V)
    r = np.random.default_rng(0)

    def rows(lengths):
        return [r.integers(5, V, size=n).tolist() for n in lengths]

    data = {
        "bx": pad_batch(rows((5, 7, 4, 6)), TWEET),
        "by": pad_batch(rows((6, 4, 8, 5)), NEWS),
        "syn": pad_batch(rows((7, 3, 6, 5)), NEWS),
        "src": pad_batch(rows((12, 9, 10, 11)), PROPOSITIONS),
    }
    data["tgt"] = pad_batch([row[1:-1] for row in data["by"].rows()], SENTENCE)

    def fresh():
        m, d = StyleTransferModel(cfg, seed=0), Discriminator(16, 8, seed=0)
        return m, d, Trainer(m, d, lr=1e-5, disc_lr=1e-5, seed=0, corruptor=lambda b: data["syn"])

    return data, fresh


def _descend(fresh, evaluate, step):
    m, d, t = fresh()
    frozen = {}
    with nx.no_grad():
        values = [evaluate(m, d, frozen)]
    for _ in range(DESCENT_STEPS):
        step(t, frozen)
        with nx.no_grad():
            values.append(evaluate(m, d, frozen))
    return values


def test_criterion_03_identities_and_descent(criterion):
    data, fresh = _descent_setup()
    bx, by = data["bx"], data["by"]
    m, d, _ = fresh()
    gaps = []
    for seed in range(5):
        r = np.random.default_rng(seed)
        x = pad_batch([r.integers(5, 40, size=r.integers(2, 9)).tolist() for _ in range(3)], TWEET)
        y = pad_batch([r.integers(5, 40, size=r.integers(2, 9)).tolist() for _ in range(3)], NEWS)
        gaps.append(abs(adversarial_loss(m, d, x, y).item() + discriminator_loss(m, d, x, y).item()))
    noise = NoiseSpec()

    def bt_frozen(m, d, frozen):
        # back-translations made at step 0 are reused; gradients never flow through them anyway
        if "syn" not in frozen:
            frozen["syn"] = backtranslate_loss(m, bx, by).synthetic
        return backtranslate_loss(m, bx, by, frozen["syn"]).loss.item()

    def bt_step(t, frozen):
        t.step_backtranslate(bx, by, frozen["syn"])

    cases = {
        "L_rec": (lambda m, d, f: denoise_loss(m, bx, by, noise, 7).item(),
                  lambda t, f: t.step_denoise(bx, by, seed=7)),
        "L_bt": (bt_frozen, bt_step),
        "L_D": (lambda m, d, f: discriminator_loss(m, d, bx, by).item(),
                lambda t, f: t.step_discriminator(bx, by)),
        "L_adv": (lambda m, d, f: adversarial_loss(m, d, bx, by).item(),
                  lambda t, f: t.step_adversarial(bx, by)),
        "L_syn": (lambda m, d, f: synthetic_loss(m, by, lambda b: data["syn"]).item(),
                  lambda t, f: t.step_synthetic(by)),
        "L_m": (lambda m, d, f: merge_loss(m, data["src"], data["tgt"]).item(),
                lambda t, f: t.step_merge(data["src"], data["tgt"])),
    }
    monotone = {}
    for name, (evaluate, step) in cases.items():
        values = _descend(fresh, evaluate, step)
        monotone[name] = all(b < a for a, b in zip(values, values[1:]))
    live = _descend(fresh, lambda m, d, f: backtranslate_loss(m, bx, by).loss.item(),
                    lambda t, f: t.step_backtranslate(bx, by))
    ok = max(gaps) <= ADV_IDENTITY_TOL and all(monotone.values())
    criterion(3, ok, f"|L_adv + L_D| max {max(gaps):.1e}; strict descent over {DESCENT_STEPS} steps: "
                     + ", ".join(f"{k} {'yes' if v else 'NO'}" for k, v in monotone.items())
                     + f"; L_bt with live regeneration {live[0]:.4f} -> {live[-1]:.4f}")
    assert ok


# ---------------------------------------------------------------- 4


def test_criterion_04_denoising_overfit(criterion):
    half = DENOISE_CORPUS // 2
    tweets, news = generate_tweets(half, seed=7), generate_news(half, seed=7)
    vocab = train_bpe(tweets + news, 400)
    model = StyleTransferModel(ModelConfig(vocab_size=len(vocab), max_len=64), seed=0)
    trainer = Trainer(model, lr=1e-3, seed=0)
    X, Y = [vocab.encode(t) for t in tweets], [vocab.encode(t) for t in news]
    sx, sy = DataSource(X, 4, 0), DataSource(Y, 4, 1)
    full = ((pad_batch(X, TWEET), TWEET), (pad_batch(Y, NEWS), NEWS))

    def accuracy():
        # teacher-forced next-token accuracy from a noised source, every real target token counted
        hit = total = 0
        for batch, style in full:
            src = noise_C(batch, trainer.noise, 123)
            with nx.no_grad():
                pred = model.decode_teacher_forced(model.encode(src, style), batch, style).data.argmax(-1)
            keep = batch.mask[:, 1:]
            hit += ((pred == batch.ids[:, 1:]) & keep).sum()
            total += keep.sum()
        return hit / total

    t0 = time.perf_counter()
    acc, steps = 0.0, 0
    while steps < DENOISE_MAX_STEPS:
        trainer.step_denoise(pad_batch(sx.next(), TWEET), pad_batch(sy.next(), NEWS))
        steps += 1
        if steps % 250 == 0:
            acc = accuracy()
            if acc >= DENOISE_TARGET:
                break
    elapsed = time.perf_counter() - t0
    ok = acc >= DENOISE_TARGET and elapsed < DENOISE_SECONDS
    criterion(4, ok, f"{DENOISE_CORPUS} sentences, token accuracy {acc:.4f} after {steps} steps, {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_05_merge_oracle(criterion):
    records = generate_templated(MERGE_TRAIN + MERGE_HELD, seed=1)
    train, held = records[:MERGE_TRAIN], records[MERGE_TRAIN:]
    vocab = train_bpe([r.sentence for r in records] + [p for r in records for p in r.propositions], 600)
    model = StyleTransferModel(ModelConfig(vocab_size=len(vocab), max_len=128), seed=0)
    trainer = Trainer(model, lr=1e-3, seed=0)
    pairs, held_pairs = build_merge_pairs(train, vocab), build_merge_pairs(held, vocab)
    source = DataSource([(p.source_ids, p.target_ids) for p in pairs], 8, 0)

    def generate(ps):
        out = []
        for i in range(0, len(ps), 25):
            chunk = ps[i:i + 25]
            batch = pad_batch([p.source_ids for p in chunk], PROPOSITIONS)
            with nx.no_grad():
                ids = model.generate(model.encode(batch, PROPOSITIONS), SENTENCE,
                                     max_new=max(len(p.target_ids) for p in chunk) + 5)
            out += [vocab.decode(x) for x in ids]
        return out

    t0 = time.perf_counter()
    for _ in range(1000):
        items = source.next()
        trainer.step_merge(pad_batch([a for a, _ in items], PROPOSITIONS), pad_batch([b for _, b in items], SENTENCE))
    exact = np.mean([g == vocab.decode(p.target_ids) for g, p in zip(generate(pairs), pairs)])
    f1 = np.mean([token_f1(g, vocab.decode(p.target_ids)) for g, p in zip(generate(held_pairs), held_pairs)])
    elapsed = time.perf_counter() - t0
    ok = len(pairs) == MERGE_TRAIN and exact >= MERGE_EXACT and f1 >= MERGE_F1 and elapsed < MERGE_SECONDS
    criterion(5, ok, f"train exact match {exact:.3f} on {len(pairs)}, held-out token F1 {f1:.3f} on "
                     f"{len(held_pairs)}, {elapsed:.0f}s")
    assert ok


# ---------------------------------------------------------------- 6


class _FixedIndex(random.Random):
    def __init__(self, i):
        super().__init__(0)
        self.i = i

    def randrange(self, *args, **kwargs):
        return self.i


def test_criterion_06_corruptor_statistics(criterion):
    c, total = Corruptor(), CorruptionTally()
    for i, line in enumerate(generate_news(CORRUPT_SENTENCES, seed=3)):
        total += c.trace(line, i)[1]
    rates = total.rates()
    rules = (corrupt_word("storm", "devowel", random.Random(0)) == "strm"
             and corrupt_word("peshawar", "devowel", random.Random(0)) == "pshwr"
             and corrupt_word("storm", "swap", _FixedIndex(0)) == "tsorm"
             and corrupt_word("storm", "swap", _FixedIndex(3)) == "stomr")
    ok = rules and all(abs(r - CORRUPT_RATE) <= CORRUPT_TOL for r in rates.values())
    criterion(6, ok, f"{total.sentences} sentences: " + ", ".join(f"{k} {v:.4f}" for k, v in rates.items())
                     + f"; fixture rules {'exact' if rules else 'WRONG'}")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_07_bleu_oracle(criterion):
    got = {}
    for name, (hyps, refs, want) in BLEU_FIXTURES.items():
        score = bleu(hyps, refs).score
        got[name] = (f"{score:.{BLEU_PLACES}f}", f"{want:.{BLEU_PLACES}f}")
    ok = all(a == b for a, b in got.values()) and got["identity"][0] == "100.00" and got["no_4gram"][0] == "0.00"
    criterion(7, ok, ", ".join(f"{k} {a}" for k, (a, _) in got.items()))
    assert ok


# ---------------------------------------------------------------- 8


def test_criterion_08_kappa_ttest_oracles(criterion):
    r = welch_t(WELCH_A, WELCH_B)
    k1, k2 = fleiss_kappa(FLEISS_TABLE), fleiss_kappa(SMALL_TABLE)
    errs = {"t": abs(r.t - WELCH_T), "df": abs(r.df - WELCH_DF), "p": abs(r.p - WELCH_P),
            "kappa": max(abs(k1 - FLEISS_VALUE), abs(k2 - SMALL_VALUE))}
    ok = errs["t"] <= T_DF_TOL and errs["df"] <= T_DF_TOL and errs["p"] <= KAPPA_P_TOL and errs["kappa"] <= KAPPA_P_TOL
    criterion(8, ok, ", ".join(f"{k} err {v:.1e}" for k, v in errs.items()))
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_09_data_rules(criterion, tmp_path):
    records = generate_templated(600, seed=0) + ingest_clause_file(FIXTURES / "airlift.tsv")
    filler = [f"the police found {n} bodies near the coast on friday" for n in ("two", "ten", "many", "four")]
    records += [PropositionRecord("the police found bodies", filler * 40),
                PropositionRecord("one proposition only", ["the army moved"]),
                PropositionRecord("one huge proposition", [" ".join(filler * 30), "the army moved"])]
    vocab = train_bpe([r.sentence for r in records] + [p for r in records for p in r.propositions], 1000)
    pairs = build_merge_pairs(records, vocab, MAX_SOURCE_TOKENS)
    path, vpath = tmp_path / "pairs.tsv", tmp_path / "vocab.txt"
    write_pair_file(pairs, path)
    vocab.save(vpath)
    code = cli_main(["scan-merge-data", str(path), "--vocab", str(vpath), "--max-tokens", str(MAX_SOURCE_TOKENS)])
    good = sum(p.n_propositions >= MIN_PROPOSITIONS and len(vocab.encode(p.source)) <= MAX_SOURCE_TOKENS
               for p in pairs)
    ok = code == 0 and good == len(pairs)
    criterion(9, ok, f"{good}/{len(pairs)} emitted pairs satisfy both rules ({len(records) - len(pairs)} dropped); "
                     f"scan tool exit {code}")
    assert ok


# ---------------------------------------------------------------- 10


def test_criterion_10_determinism(criterion, tmp_path):
    runs = []
    for name in ("first", "second"):
        out = tmp_path / name
        code = cli_main(["pipeline", "--experiment", "xlm-sty-dis-syn-merge",
                         "--inputs", str(FIXTURES / "cyclone_tweets.txt"), "--out", str(out)])
        assert code == 0
        runs.append(out)
    a, b = runs
    names = sorted(p.name for p in a.iterdir())
    same = names == sorted(p.name for p in b.iterdir()) and all(
        (a / n).read_bytes() == (b / n).read_bytes() for n in names)
    ok = same and {"metrics.jsonl", "merge.ckpt", "style.ckpt", "paragraphs.txt"} <= set(names)
    criterion(10, ok, f"{len(names)} files byte-identical across two runs: {', '.join(names)}")
    assert ok


# ---------------------------------------------------------------- 11


def _adversarial_run(seed: int, adversarial: bool):
    base = generate_news(400, seed=100 + seed)
    # the planted marker: every tweet starts with the same nonsense token
    tweets, news = ["zqx " + s for s in base[:150]], base[150:300]
    held_x, held_y = ["zqx " + s for s in base[300:350]], base[350:400]
    vocab = train_bpe(base + ["zqx"] * 10, 500)
    model = StyleTransferModel(ModelConfig(vocab_size=len(vocab), max_len=64), seed=seed)
    disc = Discriminator(64, 32, seed=seed)
    trainer = Trainer(model, disc, lr=1e-3, disc_lr=1e-3, seed=seed)

    def enc(lines):
        return [vocab.encode(s) for s in lines]

    data = StyleData(tweets=DataSource(enc(tweets), 8, seed), news=DataSource(enc(news), 8, seed + 1), max_len=64)
    objectives = ["L_rec", "L_bt", "L_D"] + (["L_adv"] if adversarial else [])
    run_schedule(ScheduleSpec(objectives, 8, 200, seed), trainer, data)
    bx, by = pad_batch(enc(held_x), TWEET), pad_batch(enc(held_y), NEWS)
    acc = discriminator_accuracy(model, disc, bx, by)
    # a fresh probe on the frozen encoder: can the styles still be told apart at all?
    probe = Discriminator(64, 32, seed=seed + 50)
    probe_trainer = Trainer(model, probe, lr=1e-3, disc_lr=1e-3, seed=seed)
    for _ in range(300):
        probe_trainer.step_discriminator(pad_batch(data.tweets.next(), TWEET), pad_batch(data.news.next(), NEWS))
    return acc, discriminator_accuracy(model, probe, bx, by)


@pytest.mark.slow
def test_criterion_11_adversarial_direction(criterion):
    rows = []
    for seed in ADV_SEEDS:
        base_acc, base_probe = _adversarial_run(seed, adversarial=False)
        adv_acc, adv_probe = _adversarial_run(seed, adversarial=True)
        rows.append((seed, base_acc, adv_acc, base_probe, adv_probe))
    drops = [b - a for _, b, a, _, _ in rows]
    ok = float(np.mean(drops)) >= ADV_DROP
    detail = "; ".join(f"seed {s}: disc {b:.2f}->{a:.2f} (probe {bp:.2f}->{ap:.2f})" for s, b, a, bp, ap in rows)
    criterion(11, ok, f"mean drop {np.mean(drops):.2f} (>= {ADV_DROP}); {detail}")
    assert ok
