"""Acceptance criteria 1-12, one test each.

Every test records a PASS/FAIL line with the measured quantity; the lines are
printed together in the pytest terminal summary.
"""

import csv
import hashlib
import json
import math
import time

import numpy as np
import pytest

from neurotalk import audio, cli, dimred, eeg, metrics, synth
from neurotalk.asr import attention, ctc, rnnt
from neurotalk.core.gradcheck import check_gradients
from neurotalk.core.params import ParameterStore, make_rng
from neurotalk.core.tensor import Tensor
from neurotalk.eeg import RawEeg
from neurotalk.features import append_deltas

from oracles import (attention_exhaustive, best_string, ctc_instances, ctc_path_sums, log_softmax,
                     rnnt_instances, rnnt_oracle, tiny_attention_params, tiny_joint)


def test_01_ctc_loss_oracle(acceptance):
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for logits, labels in ctc_instances(50):
        want = -math.log(ctc_path_sums(logits).get(tuple(labels), 0.0))
        got = ctc.ctc_loss(Tensor(logits), labels).item()
        worst = max(worst, abs(got - want))
        count += 1
    elapsed = time.perf_counter() - t0
    ok = count == 50 and worst < 1e-9 and elapsed < 5.0
    assert acceptance(1, ok, f"CTC loss vs exhaustive alignment sum: {count} instances, "
                             f"max |diff| {worst:.1e} (< 1e-9), {elapsed:.2f} s (< 5 s)")


def test_02_rnnt_loss_oracle(acceptance):
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for logits, labels in rnnt_instances(50):
        got = rnnt.rnnt_lattice_loss(Tensor(logits), labels).item()
        worst = max(worst, abs(got - rnnt_oracle(log_softmax(logits), labels)))
        count += 1
    elapsed = time.perf_counter() - t0
    ok = count == 50 and worst < 1e-9 and elapsed < 5.0
    assert acceptance(2, ok, f"RNN-T loss vs exhaustive monotone paths: {count} instances, "
                             f"max |diff| {worst:.1e} (< 1e-9), {elapsed:.2f} s (< 5 s)")


def test_03_gradient_checks(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    errors = {}

    s = ParameterStore()
    s.add("logits", rng.normal(size=(6, 4)))
    errors["ctc"] = check_gradients(lambda st: ctc.ctc_loss(st["logits"], [1, 2, 2]), s)

    s = tiny_joint(H=4, G=3, J=5, V1=4, seed=3)
    s.add("enc", rng.normal(size=(3, 4)))
    s.add("pred", rng.normal(size=(3, 3)))
    errors["rnnt"] = check_gradients(
        lambda st: rnnt.rnnt_loss(st["enc"], st["pred"], [2, 1], st.scope("joint")), s)

    s = tiny_attention_params(seed=11)
    s.add("enc_states", rng.normal(size=(4, 4)))
    errors["attention"] = check_gradients(
        lambda st: attention.attention_teacher_forced_loss(st["enc_states"], [2, 3],
                                                           st.scope("dec"), 0, 1), s)

    x, y = rng.normal(size=(4, 3)), rng.normal(size=(4, 13))
    reg = synth.SynthModel.init(synth.SynthConfig.for_mode("regression", hidden=8, layers=1), 3,
                                make_rng(0))
    errors["rmse"] = check_gradients(lambda st: synth.rmse_loss(reg.generate(x, st), y), reg.gen)

    gan = synth.SynthModel.init(synth.SynthConfig.for_mode("gan", hidden=4, layers=1), 3,
                                make_rng(1))
    errors["gan generator"] = check_gradients(
        lambda st: synth.gan_losses(gan.discriminate(x, y), gan.discriminate(x, gan.generate(x, st)))[0],
        gan.gen)
    fake = gan.generate(x).data
    errors["gan discriminator"] = check_gradients(
        lambda st: synth.gan_losses(gan.discriminate(x, y, st), gan.discriminate(x, fake, st))[1],
        gan.disc)

    worst = {k: max(v.values()) for k, v in errors.items()}
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 60.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    assert acceptance(3, ok, f"finite-difference rel err ({detail}) (< 1e-4), "
                             f"{elapsed:.1f} s (< 60 s)")


def test_04_decoder_oracles(acceptance):
    ctc_ok = att_ok = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        T, V1 = int(r.integers(1, 5)), int(r.integers(2, 4))
        logits = r.normal(0, 1.5, size=(T, V1))
        want, p = best_string(ctc_path_sums(logits))
        hyp = ctc.ctc_beam_search(logits, V1 ** T)
        ctc_ok += hyp.tokens == want and abs(hyp.log_score - math.log(p)) < 1e-9
    for seed in range(20):
        s = tiny_attention_params(W=4, seed=seed)
        enc = Tensor(np.random.default_rng(seed).normal(size=(3, 4)))
        max_len = 1 + seed % 3
        want, score = attention_exhaustive(enc, s.scope("dec"), max_len, 0, 1)
        hyp = attention.attention_beam_decode(enc, s.scope("dec"), 3 ** max_len, max_len, 0, 1)
        att_ok += hyp.tokens == want and abs(hyp.log_score - score) < 1e-9
    ok = ctc_ok == 20 and att_ok == 20
    assert acceptance(4, ok, f"exhaustive-width beams match brute force: CTC prefix {ctc_ok}/20, "
                             f"attention {att_ok}/20")


def test_05_feature_dimension_contract(acceptance):
    raw = RawEeg(np.random.default_rng(9).normal(size=(31, 600)))
    feats = {s: eeg.extract(raw, s) for s in ("1", "2", "3")}
    pre = [feats[s].dim for s in ("1", "2", "3")]
    post, final = [], []
    train = RawEeg(np.random.default_rng(10).normal(size=(31, 1200)))
    for s in ("1", "2", "3"):
        target = dimred.dimension_policy(s)
        f = feats[s].frames
        if target is not None:
            m = dimred.fit_kpca(eeg.extract(train, s).frames, target, standardize=True)
            f = dimred.kpca_project(m, f)
        post.append(f.shape[1])
        final.append(append_deltas(f).shape[1])
    ok = pre == [155, 93, 93] and post == [30, 50, 93] and final == [90, 150, 279]
    assert acceptance(5, ok, f"dims pre {pre}, post-policy {post}, with deltas {final} "
                             "(want 155/93/93, 30/50/93, 90/150/279)")


def test_06_kpca_degenerates_to_pca(acceptance):
    x = np.random.default_rng(6).normal(size=(50, 5)) * [3.0, 2.0, 1.5, 1.0, 0.5]
    pca, _ = dimred.fit_pca(x)
    kp = dimred.fit_kpca(x, out_dim=5, degree=1, gamma=1.0, coef0=0.0)
    got, want = dimred.kpca_project(kp, x), pca.scores(x)
    worst = 0.0
    for j in range(5):
        sign = 1.0 if got[:, j] @ want[:, j] >= 0 else -1.0
        worst = max(worst, float(np.max(np.abs(got[:, j] - sign * want[:, j]))))
    assert acceptance(6, worst < 1e-8, f"linear KPCA vs PCA scores on 50x5: max |diff| "
                                       f"{worst:.1e} (< 1e-8)")


def _amplitude(x, freq, fs=1000.0):
    k = int(round(freq * len(x) / fs))
    return 2 * abs(np.fft.rfft(x)[k]) / len(x)


def _tone(freq, seconds, fs=1000.0):
    return np.sin(2 * np.pi * freq * np.arange(int(seconds * fs)) / fs)


def test_07_dsp_properties(acceptance):
    notch = 20 * math.log10(_amplitude(
        eeg.notch_60(RawEeg(_tone(60.0, 10.0)[None])).samples[0][-5000:], 60.0))
    ripple = max(abs(20 * math.log10(_amplitude(
        eeg.bandpass_iir(RawEeg(_tone(f, 40.0)[None])).samples[0][-10000:], f)))
        for f in (10.0, 35.0))
    drift = 20 * math.log10(_amplitude(
        eeg.bandpass_iir(RawEeg(_tone(0.01, 400.0)[None])).samples[0][-200000:], 0.01))
    hurst = [float(eeg.hurst_rs(np.random.default_rng(s).normal(size=1000)[None])[0][0])
             for s in range(20)]
    pfd = float(eeg.petrosian_fd(np.arange(100.0)[None])[0])
    ok = (notch <= -30 and ripple <= 1.0 and drift <= -20
          and all(0.4 <= h <= 0.6 for h in hurst) and pfd == 1.0)
    assert acceptance(7, ok, f"notch {notch:.1f} dB (<= -30), passband ripple {ripple:.3f} dB "
                             f"(<= 1), 0.01 Hz {drift:.1f} dB (<= -20), white-noise Hurst "
                             f"{min(hurst):.3f}..{max(hurst):.3f} over 20 seeds, ramp PFD {pfd}")


@pytest.fixture(scope="module")
def three_sentence_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("c8")
    cfg = {"out": str(out), "corpus": {"n_subjects": 5, "n_sentences": 3, "repetitions": 3},
           "feature_set": "1", "seed": 0, "hidden": 64}
    path = out / "config.json"
    path.write_text(json.dumps(cfg))
    t0 = time.perf_counter()
    for cmd in ("gen", "featurize", "reduce"):
        assert cli.main([cmd, "--config", str(path)]) == 0
    return out, path, time.perf_counter() - t0


def _error_rate(out, model, column):
    rows = list(csv.DictReader((out / "eval" / f"{model}_set1_spoken.csv").open()))
    return float(rows[-1][column]), len(rows) - 1


def test_08_three_sentence_overfit(acceptance, three_sentence_corpus):
    out, path, prep = three_sentence_corpus
    t0 = time.perf_counter()
    runs = {"attention": ["--epochs", "30", "--lr", "1e-3"], "ctc": ["--epochs", "60", "--lr", "3e-3"]}
    for model, extra in runs.items():
        for cmd in ("train-asr", "decode", "eval"):
            assert cli.main([cmd, "--config", str(path), "--model", model, *extra]) == 0
    wer, n_test = _error_rate(out, "attention", "wer")
    cer, _ = _error_rate(out, "ctc", "cer")
    total = prep + time.perf_counter() - t0
    ok = wer == 0.0 and cer <= 0.15 and total < 600
    assert acceptance(8, ok, f"3 sentences x 5 subjects, random 80/10/10 ({n_test} test "
                             f"utterances): attention WER {wer:.1%} (= 0%), CTC CER {cer:.1%} "
                             f"(<= 15%), {total:.0f} s (< 600 s)")


def _linear_task(seed, n=12, T=30, d=8):
    r = np.random.default_rng(1000 + seed)
    a = r.normal(0, 1 / np.sqrt(d), size=(d, 13))
    xs = [r.normal(size=(T, d)) for _ in range(n)]
    return [(x, x @ a) for x in xs]


def test_09_synthesis_ordering(acceptance):
    t0 = time.perf_counter()
    epochs = {"regression": 200, "gan": 50, "wgan": 50}
    scores = {m: [] for m in epochs}
    for seed in range(3):
        pairs = _linear_task(seed)
        train, test = pairs[:10], pairs[10:]
        for mode, e in epochs.items():
            cfg = synth.SynthConfig.for_mode(mode, hidden=16, lr=1e-2, epochs=e)
            model = synth.train_synth(train, cfg, seed).model
            _, rep = synth.predict_mfcc(model, [x for x, _ in test], [y for _, y in test])
            scores[mode].append(rep.aggregate["nrmse"])
    avg = {m: float(np.mean(v)) for m, v in scores.items()}
    elapsed = time.perf_counter() - t0
    ok = avg["regression"] < 0.05 and avg["regression"] <= min(avg["gan"], avg["wgan"]) \
        and elapsed < 300
    assert acceptance(9, ok, f"noiseless linear map, 3 seeds: mean NRMSE regression "
                             f"{avg['regression']:.4f} (< 0.05), GAN {avg['gan']:.4f}, WGAN "
                             f"{avg['wgan']:.4f}, {elapsed:.0f} s (< 300 s)")


def test_10_metric_identities(acceptance):
    rng = np.random.default_rng(10)
    a = rng.normal(size=(6, 13))
    zeros = [metrics.wer("the cat sat", "the cat sat"), metrics.cer("abc d", "abc d"),
             metrics.rmse(a, a), metrics.normalized_rmse(a, a), metrics.mcd(a, a)]
    one = np.zeros((1, 13))
    one[0, 1] = 1.0
    single = metrics.mcd(np.zeros((1, 13)), one)
    rep = metrics.error_rate_report([("u1", "a b", "a b"), ("u2", "a b c d", "x")], "word")
    pooled = rep.aggregate["wer"]
    ok = all(z == 0 for z in zeros) and abs(single - 6.1421) <= 1e-3 and abs(pooled - 4 / 6) < 1e-12
    assert acceptance(10, ok, f"identical inputs give {zeros}; single-coefficient MCD "
                              f"{single:.4f} (6.1421 +- 1e-3); pooled WER {pooled:.4f} (= 4/6, "
                              "not the per-utterance mean 0.5)")


def _tree(root):
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_11_cli_determinism(acceptance, tmp_path):
    cfg = {"corpus": {"n_subjects": 5, "n_sentences": 2, "repetitions": 2}, "epochs": 1,
           "hidden": 4, "sweep_sizes": [1, 2]}
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    commands = [["gen"], ["featurize"], ["reduce"], ["train-asr"], ["decode"], ["eval"],
                ["train-synth", "--model", "gan"], ["eval", "--model", "gan"],
                ["sweep", "--model", "rnnt"], ["plotdata", "variance"], ["plotdata", "loss"],
                ["plotdata", "nrmse", "--model", "gan"]]
    trees = []
    for name in ("first", "second"):
        out = tmp_path / name
        for c in commands:
            assert cli.main([c[0], "--config", str(path), "--out", str(out), *c[1:]]) == 0, c
        trees.append(_tree(out))
    ok = trees[0] == trees[1]
    differing = sorted(k for k in trees[0] if trees[0].get(k) != trees[1].get(k))
    assert acceptance(11, ok, f"{len(commands)} CLI invocations run twice: {len(trees[0])} files, "
                              f"{len(differing)} with differing hashes")


def test_12_griffin_lim_monotone(acceptance):
    t = np.arange(int(0.5 * audio.SAMPLE_RATE_HZ)) / audio.SAMPLE_RATE_HZ
    tone = audio.AudioClip(0.5 * np.sin(2 * np.pi * 1000.0 * t), audio.SAMPLE_RATE_HZ)
    res = audio.griffin_lim_reconstruct(audio.mfcc13(tone), iters=60)
    steps = np.diff(res.residuals)
    worst = float(steps.max())
    ok = len(res.residuals) == 60 and worst <= 1e-9
    assert acceptance(12, ok, f"60 Griffin-Lim iterations on tone MFCCs: largest residual "
                              f"increase {worst:.1e} (<= 1e-9), residual {res.residuals[0]:.4f} "
                              f"-> {res.residuals[-1]:.4f}")
