import math

import numpy as np
import pytest

from neurotalk import eeg
from neurotalk.eeg import ConfigError, FilterSpec, RawEeg, WindowSpec
from neurotalk.features import FeatureSequence, append_deltas

FS = 1000.0


def tone(freq, seconds, fs=FS, amp=1.0):
    t = np.arange(int(seconds * fs)) / fs
    return amp * np.sin(2 * np.pi * freq * t)


def fft_amplitude(x, freq, fs=FS):
    """Amplitude of ``freq`` in a segment holding an integer number of cycles."""
    n = len(x)
    k = int(round(freq * n / fs))
    assert abs(k * fs / n - freq) < 1e-9, "segment must hold whole cycles"
    return 2 * abs(np.fft.rfft(x)[k]) / n


def db(ratio):
    return 20 * math.log10(ratio)


# -- filters -------------------------------------------------------------------


def test_bandpass_zero_in_zero_out():
    out = eeg.bandpass_iir(RawEeg(np.zeros((2, 500))))
    assert np.all(out.samples == 0)
    assert out.samples.shape == (2, 500)


@pytest.mark.parametrize("freq", [10.0, 35.0])
def test_bandpass_passband_gain(freq):
    x = tone(freq, 40.0)
    y = eeg.bandpass_iir(RawEeg(x[None])).samples[0]
    seg = y[-10000:]  # last 10 s, after the 0.1 Hz transient
    assert abs(db(fft_amplitude(seg, freq) / 1.0)) <= 1.0


def test_bandpass_rejects_drift():
    x = tone(0.01, 400.0)
    y = eeg.bandpass_iir(RawEeg(x[None])).samples[0]
    seg = y[-200000:]  # two full cycles
    assert db(fft_amplitude(seg, 0.01)) <= -20.0


def test_bandpass_linear():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 2000))
    a = eeg.bandpass_iir(RawEeg(2.5 * x)).samples
    b = 2.5 * eeg.bandpass_iir(RawEeg(x)).samples
    assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(b))


def test_bandpass_config_errors():
    with pytest.raises(ConfigError):
        eeg.bandpass_iir(RawEeg(np.zeros((1, 100))), FilterSpec(cutoff_low_hz=10, cutoff_high_hz=600))
    with pytest.raises(ConfigError):
        eeg.bandpass_iir(RawEeg(np.zeros((1, 100))), FilterSpec(cutoff_low_hz=0.0))


def test_notch_removes_60hz():
    x = tone(60.0, 10.0)
    y = eeg.notch_60(RawEeg(x[None])).samples[0][-5000:]
    amp = fft_amplitude(y, 60.0)
    assert amp < 0.03
    assert db(amp) <= -30.0


def test_notch_keeps_10hz_and_dc():
    y = eeg.notch_60(RawEeg(tone(10.0, 10.0)[None])).samples[0][-5000:]
    assert abs(db(fft_amplitude(y, 10.0))) <= 0.5
    dc = eeg.notch_60(RawEeg(np.full((1, 3000), 2.0))).samples[0]
    np.testing.assert_allclose(dc, 2.0, atol=1e-9)


# -- windowing -----------------------------------------------------------------


def test_window_frames_counts():
    w = WindowSpec(100, 10)
    assert eeg.window_frames(np.zeros((1, 1000)), w).shape == (1, 91, 100)
    assert eeg.window_frames(np.zeros((1, 100)), w).shape == (1, 1, 100)
    with pytest.raises(ValueError):
        eeg.window_frames(np.zeros((1, 99)), w)


def test_window_frames_are_contiguous_slices():
    x = np.arange(250.0)[None]
    fr = eeg.window_frames(x, WindowSpec(100, 10))
    for i in range(fr.shape[1]):
        np.testing.assert_array_equal(fr[0, i], x[0, 10 * i: 10 * i + 100])


def test_window_spec_from_rate():
    assert WindowSpec.for_rate(1000.0) == WindowSpec(100, 10)
    with pytest.raises(ConfigError):
        WindowSpec.for_rate(1005.0)


# -- set 1 -----------------------------------------------------------------------


def test_set1_constant_window():
    raw = RawEeg(np.full((31, 100), -1.5))
    f = eeg.extract_set1(raw)
    assert f.dim == 155 and len(f) == 1
    rms, zcr, mean, kurt, ent = f.frames[0, :5]
    assert rms == pytest.approx(1.5)
    assert zcr == 0
    assert mean == pytest.approx(-1.5)
    assert kurt == 0
    assert ent == pytest.approx(0.0, abs=1e-12)
    assert f.degenerate == 31


def test_set1_alternating_zcr():
    x = np.tile([1.0, -1.0], 50)
    assert eeg.zero_crossing_rate(x[None, None])[0, 0] == 1.0


def test_set1_white_noise_entropy_matches_direct_periodogram():
    x = np.random.default_rng(42).normal(size=100)
    got = eeg.power_spectral_entropy(x[None])[0]
    # direct DFT periodogram
    n = len(x)
    psd = []
    for k in range(n // 2 + 1):
        re = sum(x[t] * math.cos(2 * math.pi * k * t / n) for t in range(n))
        im = sum(x[t] * math.sin(2 * math.pi * k * t / n) for t in range(n))
        psd.append(re * re + im * im)
    p = np.array(psd) / sum(psd)
    want = -sum(v * math.log(v) for v in p if v > 0)
    assert got == pytest.approx(want, rel=1e-10)
    # white-noise periodogram bins are ~exponential: entropy sits about
    # (1 - euler_gamma) nats below log(#bins), not within 5% of it
    assert math.log(51) - 0.9 < got < math.log(51)


def test_kurtosis_gaussian_near_three():
    x = np.random.default_rng(1).normal(size=200000)
    k, bad = eeg.kurtosis(x[None])
    assert k[0] == pytest.approx(3.0, abs=0.05)
    assert not bad[0]


def test_set1_channel_major_layout():
    rng = np.random.default_rng(2)
    data = rng.normal(size=(31, 300))
    f = eeg.extract_set1(RawEeg(data)).frames
    ch = 7
    win = data[ch, 50:150]  # frame 5
    assert f[5, ch * 5 + 0] == pytest.approx(np.sqrt(np.mean(win ** 2)))
    assert f[5, ch * 5 + 2] == pytest.approx(win.mean())


def test_entropy_base_knob():
    x = np.random.default_rng(3).normal(size=(31, 100))
    e = eeg.extract_set1(RawEeg(x)).frames[0, 4]
    e2 = eeg.extract_set1(RawEeg(x), opts=eeg.ExtractOptions(entropy_log="2")).frames[0, 4]
    assert e2 == pytest.approx(e / math.log(2))


# -- set 2 -----------------------------------------------------------------------


def dwt_oracle(x, filt):
    """Explicit-loop level-1 DWT with half-sample symmetric extension."""
    n, L = len(x), len(filt)

    def ext(j):
        while j < 0 or j >= n:
            j = -j - 1 if j < 0 else 2 * n - 1 - j
        return x[j]

    return np.array([sum(filt[k] * ext(2 * i + 1 - k) for k in range(L)) for i in range((n + L - 1) // 2)])


def test_db4_filter_properties():
    lo, hi = eeg.DB4_DEC_LO, eeg.DB4_DEC_HI
    assert lo.sum() == pytest.approx(math.sqrt(2), abs=1e-12)
    assert (lo ** 2).sum() == pytest.approx(1.0, abs=1e-11)
    for m in range(4):  # four vanishing moments
        assert abs(sum(k ** m * hi[k] for k in range(8))) < 1e-9
    for s in (2, 4, 6):  # orthogonal to even shifts
        assert abs(np.dot(lo[s:], lo[:-s])) < 1e-11


def test_set2_impulse_matches_direct_dwt():
    x = np.zeros(100)
    x[37] = 1.0
    a, d = eeg.dwt_level1(x[None])
    np.testing.assert_allclose(a[0], dwt_oracle(x, eeg.DB4_DEC_LO), atol=1e-14)
    np.testing.assert_allclose(d[0], dwt_oracle(x, eeg.DB4_DEC_HI), atol=1e-14)
    ea, ed = eeg.wavelet_entropies(x[None])

    def ent(c):
        p = c ** 2 / np.sum(c ** 2)
        p = p[p > 0]
        return -np.sum(p * np.log(p))

    assert ea[0] == pytest.approx(ent(dwt_oracle(x, eeg.DB4_DEC_LO)), rel=1e-12)
    assert ed[0] == pytest.approx(ent(dwt_oracle(x, eeg.DB4_DEC_HI)), rel=1e-12)


def test_set2_zero_and_dc_windows():
    f = eeg.extract_set2(RawEeg(np.zeros((31, 100))))
    assert f.dim == 93
    np.testing.assert_array_equal(f.frames, 0)
    a, d = eeg.dwt_level1(np.full((1, 100), 3.0))
    assert np.max(np.abs(d)) < 1e-9
    f = eeg.extract_set2(RawEeg(np.full((31, 100), 3.0)))
    assert f.frames[0, 2] == 0.0  # detail entropy
    assert f.frames[0, 1] > 0.0


def test_set2_stft_magnitude_scalar():
    x = np.random.default_rng(4).normal(size=100)
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(100) / 100)  # periodic Hann
    want = np.abs(np.fft.rfft(x * w)).mean()
    assert eeg.stft_mean_magnitude(x[None])[0] == pytest.approx(want, rel=1e-12)


# -- set 3 -----------------------------------------------------------------------


def test_pfd_ramp_is_one():
    assert eeg.petrosian_fd(np.arange(100.0)[None])[0] == 1.0


def test_pfd_matches_formula():
    x = np.random.default_rng(5).normal(size=100)
    d = np.diff(x)
    nd = sum(1 for i in range(1, len(d)) if d[i] * d[i - 1] < 0)
    want = math.log10(100) / (math.log10(100) + math.log10(100 / (100 + 0.4 * nd)))
    assert eeg.petrosian_fd(x[None])[0] == pytest.approx(want)


def test_band_entropy_alpha_tone():
    x = tone(10.0, 1.0)
    got = eeg.band_entropy(x[None], FS)[0]
    # oracle: zero-padded periodogram integrated per band
    psd = np.abs(np.fft.rfft(x, 2048)) ** 2
    f = np.arange(len(psd)) * FS / 2048
    bands = [(0.5, 4, False), (4, 7, False), (7, 12, False), (12, 30, True)]
    pw = np.array([psd[(f >= lo) & ((f <= hi) if inc else (f < hi))].sum() for lo, hi, inc in bands])
    p = pw / pw.sum()
    assert got == pytest.approx(-np.sum(p * np.log(p)), rel=1e-12)
    assert p.argmax() == 2  # alpha dominant
    assert got < 0.25


def test_band_entropy_bounds_and_resolution():
    x = np.random.default_rng(6).normal(size=(5, 100))
    e = eeg.band_entropy(x, FS)
    assert np.all((e >= 0) & (e <= math.log(4) + 1e-12))
    f = np.fft.rfftfreq(2048, 1 / FS)
    assert ((f >= 0.5) & (f < 4)).sum() >= 4


@pytest.mark.parametrize("seed", range(5))
def test_hurst_white_noise(seed):
    x = np.random.default_rng(seed).normal(size=1000)
    h, bad = eeg.hurst_rs(x[None])
    assert 0.4 <= h[0] <= 0.6 and not bad[0]


def test_hurst_plain_rs_oracle():
    x = np.random.default_rng(7).normal(size=1000)
    pts = []
    for n in (10, 20, 50, 1000):
        vals = []
        for c in x[: (1000 // n) * n].reshape(-1, n):
            y = np.cumsum(c - c.mean())
            vals.append((y.max() - y.min()) / c.std())
        pts.append((math.log(n), math.log(np.mean(vals))))
    xs, ys = np.array(pts).T
    want = np.polyfit(xs, ys, 1)[0]
    got, _ = eeg.hurst_rs(x[None], correction="none")
    assert got[0] == pytest.approx(want, rel=1e-10)


def test_hurst_persistent_series_above_half():
    x = np.cumsum(np.random.default_rng(8).normal(size=1000))
    assert eeg.hurst_rs(x[None])[0][0] > 0.8


def test_set3_degenerate_constant():
    f = eeg.extract_set3(RawEeg(np.full((31, 100), 1.0)))
    assert f.dim == 93
    assert f.frames[0, 1] == 0.5
    assert f.frames[0, 2] == 1.0
    assert f.degenerate == 31


# -- cross-set contracts -----------------------------------------------------------


def test_dimension_contract_and_frame_equality():
    raw = RawEeg(np.random.default_rng(9).normal(size=(31, 730)))
    outs = [eeg.extract(raw, s) for s in ("1", "2", "3")]
    assert [o.dim for o in outs] == [155, 93, 93]
    assert len({len(o) for o in outs}) == 1
    assert len(outs[0]) == (730 - 100) // 10 + 1
    for o in outs:
        assert np.all(np.isfinite(o.frames))
        assert o.frame_rate_hz == 100.0
    assert [append_deltas(o).dim for o in outs] == [465, 279, 279]


def test_value_ranges():
    raw = RawEeg(np.random.default_rng(10).normal(size=(31, 400)))
    f1 = eeg.extract_set1(raw).frames.reshape(-1, 31, 5)
    assert np.all((f1[..., 1] >= 0) & (f1[..., 1] <= 1))
    assert np.all(f1[..., 0] >= 0)
    f3 = eeg.extract_set3(raw).frames.reshape(-1, 31, 3)
    assert np.all((f3[..., 2] > 0) & (f3[..., 2] <= 1.1))


def test_unknown_set():
    with pytest.raises(ConfigError):
        eeg.extract(RawEeg(np.zeros((31, 100))), "4")


# -- deltas --------------------------------------------------------------------


def test_deltas_constant_and_ramp():
    c = append_deltas(np.full((6, 2), 4.0))
    np.testing.assert_array_equal(c[:, 2:], 0.0)
    r = append_deltas(np.arange(8.0)[:, None])
    np.testing.assert_allclose(r[1:-1, 1], 1.0)
    np.testing.assert_allclose(r[2:-2, 2], 0.0)
    single = append_deltas(np.array([[1.0, 2.0]]))
    np.testing.assert_array_equal(single, [[1, 2, 0, 0, 0, 0]])


def test_deltas_two_pass_oracle():
    x = np.random.default_rng(11).normal(size=(7, 3))

    def d(seq):
        T = len(seq)
        return np.array([(seq[min(t + 1, T - 1)] - seq[max(t - 1, 0)]) / 2 for t in range(T)])

    want = np.concatenate([x, d(x), d(d(x))], axis=1)
    np.testing.assert_allclose(append_deltas(x), want, atol=1e-15)
    fs = append_deltas(FeatureSequence(x, set_id="1"))
    assert fs.dim == 9 and fs.set_id == "1"


# -- channels ------------------------------------------------------------------


def test_select_channels():
    raw = RawEeg(np.arange(31 * 120, dtype=float).reshape(31, 120))
    sub = eeg.select_channels(raw, ["T7", "T8"])
    assert sub.n_channels == 2
    np.testing.assert_array_equal(sub.samples[0], raw.samples[eeg.MONTAGE["T7"]])
    assert eeg.select_channels(raw, list(eeg.CHANNEL_NAMES)).samples.tobytes() == raw.samples.tobytes()
    with pytest.raises(ConfigError):
        eeg.select_channels(raw, [])
    with pytest.raises(ConfigError):
        eeg.select_channels(raw, ["Q9"])
    assert eeg.extract_set1(sub).dim == 10


def test_montage_has_31_channels():
    assert len(eeg.CHANNEL_NAMES) == 31
    assert sorted(eeg.MONTAGE.values()) == list(range(31))
