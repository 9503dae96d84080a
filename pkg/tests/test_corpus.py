import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neurotalk import audio, corpus, fileio
from neurotalk.corpus import CorpusError, ManifestRecord, SplitPlan, SyntheticCorpusSpec
from neurotalk.eeg import RawEeg
from neurotalk.features import FeatureSequence


def tiny(**kw):
    base = dict(n_subjects=2, n_sentences=1, repetitions=1, conditions=("listen", "spoken"),
                sentences=["a cab", "bad"], seed=3)
    base.update(kw)
    return SyntheticCorpusSpec(**base)


def tree_hash(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def fake_records(n, subjects=1):
    return [ManifestRecord(f"u{i}", 1 + i % subjects, 1, 1, "spoken", 65.0, "e", "a", "x")
            for i in range(n)]


# -- generation ----------------------------------------------------------------


def test_same_spec_gives_byte_identical_corpus(tmp_path):
    corpus.generate_synthetic_corpus(tiny(), tmp_path / "a")
    corpus.generate_synthetic_corpus(tiny(), tmp_path / "b")
    assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")
    corpus.generate_synthetic_corpus(tiny(seed=4), tmp_path / "c")
    assert tree_hash(tmp_path / "a") != tree_hash(tmp_path / "c")


def test_generated_files_have_expected_shapes(tmp_path):
    spec = tiny()
    recs = corpus.generate_synthetic_corpus(spec, tmp_path)
    assert len(recs) == 4
    for r in recs:
        x = corpus.load_eeg(tmp_path, r)
        clip = corpus.load_audio(tmp_path, r)
        assert x.n_channels == 31 and x.sample_rate_hz == 1000.0
        assert clip.sample_rate_hz == audio.SAMPLE_RATE_HZ
        # same duration in both streams, proportional to sentence length
        assert len(clip.samples) / clip.sample_rate_hz == pytest.approx(len(x) / 1000.0)
    assert corpus.read_manifest(tmp_path / corpus.MANIFEST_NAME) == recs


def test_longer_sentences_give_longer_recordings(tmp_path):
    spec = tiny(n_sentences=2, conditions=("spoken",), n_subjects=1)
    recs = corpus.generate_synthetic_corpus(spec, tmp_path)
    lengths = {r.transcript: len(corpus.load_eeg(tmp_path, r)) for r in recs}
    assert lengths["a cab"] > lengths["bad"]


def test_database_a_shape_has_540_utterances():
    spec = SyntheticCorpusSpec(n_subjects=20, n_sentences=9, repetitions=3)
    recs = corpus.plan_manifest(spec)
    assert len(recs) == 540
    assert len({r.utt_id for r in recs}) == 540
    assert {r.condition for r in recs} == {"spoken"}


def test_database_b_shape_pairs_listen_and_spoken():
    recs = corpus.plan_manifest(SyntheticCorpusSpec(n_subjects=15, n_sentences=3,
                                                    conditions=("listen", "spoken")))
    listen = {r.pair_key: r for r in recs if r.condition == "listen"}
    spoken = {r.pair_key: r for r in recs if r.condition == "spoken"}
    assert set(listen) == set(spoken) and len(listen) == 15 * 3 * 3
    for k in listen:
        assert listen[k].transcript == spoken[k].transcript


def test_spec_validation_and_roundtrip():
    spec = tiny()
    assert SyntheticCorpusSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(CorpusError):
        SyntheticCorpusSpec(n_sentences=0)
    with pytest.raises(CorpusError):
        SyntheticCorpusSpec(n_sentences=99)
    with pytest.raises(CorpusError):
        SyntheticCorpusSpec(conditions=("whisper",))
    with pytest.raises(CorpusError):
        SyntheticCorpusSpec.from_dict({"n_subject": 3})


def test_default_sentence_list_and_counts():
    s = corpus.default_sentences()
    assert len(s) == 30
    chars, words = corpus.unique_counts(["ab a", "ba c"])
    assert (chars, words) == (3, 4)


# -- manifest --------------------------------------------------------------------


def test_manifest_uses_exact_field_names(tmp_path):
    recs = corpus.generate_synthetic_corpus(tiny(conditions=("spoken",)), tmp_path)
    line = (tmp_path / corpus.MANIFEST_NAME).read_text().splitlines()[0]
    assert list(json.loads(line)) == ["utt_id", "subject_id", "repetition", "sentence_id",
                                      "condition", "noise_db", "eeg_path", "audio_path",
                                      "transcript"]
    assert recs[0].noise_db == 65.0


def test_manifest_detects_missing_files_and_bad_schema(tmp_path):
    recs = corpus.generate_synthetic_corpus(tiny(conditions=("spoken",)), tmp_path)
    (tmp_path / recs[0].eeg_path).unlink()
    with pytest.raises(CorpusError, match="missing file"):
        corpus.read_manifest(tmp_path / corpus.MANIFEST_NAME)
    (tmp_path / "bad.jsonl").write_text(json.dumps({"utt_id": "x"}) + "\n")
    with pytest.raises(CorpusError):
        corpus.read_manifest(tmp_path / "bad.jsonl")


def test_record_invariants():
    with pytest.raises(CorpusError):
        ManifestRecord("u", 1, 0, 1, "spoken", 65.0, "e", "a", "x")
    with pytest.raises(CorpusError):
        ManifestRecord("u", 1, 1, 1, "read", 65.0, "e", "a", "x")


# -- splits ----------------------------------------------------------------------


def test_random_split_counts_and_determinism():
    recs = fake_records(100)
    tr, va, te = corpus.split(recs, SplitPlan(), seed=1)
    assert (len(tr), len(va), len(te)) == (80, 10, 10)
    assert corpus.split(recs, SplitPlan(), seed=1) == (tr, va, te)
    assert corpus.split(recs, SplitPlan(), seed=2) != (tr, va, te)


@settings(max_examples=40, deadline=None)
@given(st.integers(10, 200), st.integers(0, 1000))
def test_random_split_is_disjoint_and_exhaustive(n, seed):
    recs = fake_records(n)
    parts = corpus.split(recs, SplitPlan(), seed=seed)
    ids = [r.utt_id for p in parts for r in p]
    assert sorted(ids) == sorted(r.utt_id for r in recs)


def test_subject_blocks_twenty_subjects():
    recs = corpus.plan_manifest(SyntheticCorpusSpec(n_subjects=20, n_sentences=2, repetitions=1))
    tr, va, te = corpus.split(recs, SplitPlan("subject_blocks"))
    assert {r.subject_id for r in te} == {20}
    assert {r.subject_id for r in va} == {19}
    assert {r.subject_id for r in tr} == set(range(1, 19))


def test_subject_blocks_fifteen_subjects():
    recs = fake_records(45, subjects=15)
    tr, va, te = corpus.split(recs, SplitPlan("subject_blocks"))
    assert {r.subject_id for r in tr} == set(range(1, 13))
    assert {r.subject_id for r in va} == {13, 14}
    assert {r.subject_id for r in te} == {15}


def test_split_errors():
    with pytest.raises(CorpusError):
        corpus.split(fake_records(6, subjects=2), SplitPlan("subject_blocks"))
    with pytest.raises(CorpusError):
        corpus.split(fake_records(9, subjects=3), SplitPlan("subject_blocks", (2, 2, 1)))
    with pytest.raises(CorpusError, match="empty"):
        corpus.split(fake_records(3), SplitPlan())
    with pytest.raises(CorpusError):
        SplitPlan("by_sentence")


# -- conditions ------------------------------------------------------------------


def _features(recs, dims=4):
    r = np.random.default_rng(0)
    return {x.utt_id: FeatureSequence(r.normal(size=(5 + x.sentence_id + (x.condition == "spoken"),
                                                     dims)), 100.0, "1") for x in recs}


def test_both_mode_time_axis_adds_frame_counts():
    recs = corpus.plan_manifest(tiny(n_sentences=2))
    feats = _features(recs)
    ex = corpus.build_condition_features(recs, feats, "both")
    assert len(ex) == 4
    for e in ex:
        key = e.key.replace("_both", "")
        lf, sf = feats[key + "_listen"], feats[key + "_spoken"]
        assert len(e.features) == len(lf) + len(sf)
        np.testing.assert_array_equal(e.features.frames[:len(lf)], lf.frames)


def test_both_mode_feature_axis_stacks_dims():
    recs = corpus.plan_manifest(tiny())
    feats = _features(recs)
    ex = corpus.build_condition_features(recs, feats, "both", axis="feature")
    assert all(e.features.dim == 8 and len(e.features) == 6 for e in ex)


def test_single_condition_modes_and_errors():
    recs = corpus.plan_manifest(tiny())
    feats = _features(recs)
    spoken = corpus.build_condition_features(recs, feats, "spoken")
    assert len(spoken) == sum(r.condition == "spoken" for r in recs)
    with pytest.raises(CorpusError, match="unpaired"):
        corpus.build_condition_features([r for r in recs if r.utt_id != recs[0].utt_id],
                                        feats, "both")
    with pytest.raises(CorpusError):
        corpus.build_condition_features(recs, feats, "imagined")


def test_limit_sentences():
    recs = corpus.plan_manifest(SyntheticCorpusSpec(n_sentences=5))
    assert {r.sentence_id for r in corpus.limit_sentences(recs, 3)} == {1, 2, 3}
    assert corpus.limit_sentences(recs, None) == recs
    with pytest.raises(CorpusError):
        corpus.limit_sentences(recs, 0)


# -- binary containers -----------------------------------------------------------


def test_eeg_container_roundtrip(tmp_path):
    x = RawEeg(np.random.default_rng(1).normal(size=(31, 257)), 1000.0)
    fileio.write_eeg(tmp_path / "x.nteg", x)
    back = fileio.read_eeg(tmp_path / "x.nteg")
    np.testing.assert_array_equal(back.samples, x.samples)
    assert back.sample_rate_hz == 1000.0
    assert (tmp_path / "x.nteg").read_bytes()[:4] == b"NTEG"


def test_feature_container_roundtrip(tmp_path):
    f = FeatureSequence(np.random.default_rng(2).normal(size=(7, 93)), 100.0, "2")
    fileio.write_features(tmp_path / "f.ntfs", f)
    back = fileio.read_features(tmp_path / "f.ntfs", "2")
    np.testing.assert_array_equal(back.frames, f.frames)
    assert back.frame_rate_hz == 100.0


def test_containers_reject_corruption(tmp_path):
    f = FeatureSequence(np.ones((3, 2)), 100.0)
    fileio.write_features(tmp_path / "f.ntfs", f)
    raw = (tmp_path / "f.ntfs").read_bytes()
    (tmp_path / "cut.ntfs").write_bytes(raw[:-8])
    (tmp_path / "magic.ntfs").write_bytes(b"XXXX" + raw[4:])
    for name in ("cut.ntfs", "magic.ntfs"):
        with pytest.raises(fileio.FormatError):
            fileio.read_features(tmp_path / name)
    with pytest.raises(fileio.FormatError):
        fileio.read_eeg(tmp_path / "f.ntfs")


def test_record_replace_keeps_pair_key():
    r = corpus.plan_manifest(tiny())[0]
    assert replace(r, condition="spoken").pair_key == r.pair_key
