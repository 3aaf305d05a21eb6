from collections import Counter
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from deepemo.audio import AudioClip, write_wav
from deepemo.dataset import (
    EMOTIONS,
    CacheReport,
    EmotionLabel,
    LabeledExample,
    actor_disjoint_split,
    build_feature_cache,
    cache_key,
    format_ravdess_filename,
    format_skip_report,
    parse_ravdess_filename,
    read_split_manifest,
    scan_dataset,
    stratified_split,
    write_split_manifest,
)
from deepemo.dsp import SpectrogramConfig, load_mspc
from deepemo.errors import (
    EmptyDataset,
    EmptyInput,
    MalformedFilename,
    MissingDirectory,
    UnknownEmotionCode,
)
from deepemo.hashing import fnv1a64

SMALL = SpectrogramConfig(n_fft=256, hop=128, n_mels=16)


def test_label_order():
    assert EMOTIONS == ("neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised")
    for code, name in enumerate(EMOTIONS, 1):
        assert EmotionLabel(code).name == name
        assert EmotionLabel.from_name(name).code == code


def test_parse_examples():
    label, actor = parse_ravdess_filename("03-01-06-01-02-01-12.wav")
    assert (label.name, actor) == ("fearful", 12)
    label, actor = parse_ravdess_filename("03-01-01-01-01-01-01.wav")
    assert (label.name, actor) == ("neutral", 1)
    with pytest.raises(UnknownEmotionCode):
        parse_ravdess_filename("03-01-09-01-01-01-01.wav")
    with pytest.raises(UnknownEmotionCode):
        parse_ravdess_filename("03-01-00-01-01-01-01.wav")


@pytest.mark.parametrize("name", ["03-01-06-01-02-12.wav", "03-01-6-01-02-01-12.wav",
                                  "03-01-06-01-02-01-12.mp3", "03-01-06-01-02-01-12-01.wav", "x.wav"])
def test_parse_malformed(name):
    with pytest.raises(MalformedFilename):
        parse_ravdess_filename(name)


@given(st.integers(1, 8), st.integers(0, 99))
def test_filename_round_trip(code, actor):
    label, parsed_actor = parse_ravdess_filename(format_ravdess_filename(code, actor))
    assert label.code == code and parsed_actor == actor


def _write(path, n=600, value=0.1):
    path.parent.mkdir(parents=True, exist_ok=True)
    write_wav(path, AudioClip(np.full(n, value) * np.sin(np.arange(n)), 22050))


def test_scan(tmp_path):
    _write(tmp_path / "a" / "03-01-03-01-01-01-02.wav")
    _write(tmp_path / "03-01-05-01-01-01-01.wav")
    _write(tmp_path / "b" / "bad-name.wav")
    (tmp_path / "notes.txt").write_text("ignored")
    skipped = []
    examples = scan_dataset(tmp_path, skipped)
    assert [e.path.name for e in examples] == ["03-01-05-01-01-01-01.wav", "03-01-03-01-01-01-02.wav"]
    assert [e.label.name for e in examples] == ["angry", "happy"]
    assert len(skipped) == 1 and skipped[0][0].name == "bad-name.wav"
    assert format_skip_report(skipped).startswith(f"SKIP {tmp_path / 'b' / 'bad-name.wav'} ")
    again = scan_dataset(tmp_path)
    assert [e.path for e in again] == [e.path for e in examples]


def test_scan_errors(tmp_path):
    with pytest.raises(EmptyDataset):
        scan_dataset(tmp_path)
    with pytest.raises(MissingDirectory):
        scan_dataset(tmp_path / "nope")


def _examples(per_class, actors=4):
    return [LabeledExample(f"/x/{c}-{i}.wav", EmotionLabel(c), 1 + i % actors)
            for c in range(1, 9) for i in range(per_class[c - 1] if isinstance(per_class, list) else per_class)]


def test_split_full_train():
    ex = _examples(3)
    split = stratified_split(ex, 1.0, seed=1)
    assert split.validation == [] and len(split.train) == len(ex)


def test_split_80_20():
    split = stratified_split(_examples(10), 0.8, seed=3)
    assert Counter(e.label.code for e in split.train) == {c: 8 for c in range(1, 9)}
    assert Counter(e.label.code for e in split.validation) == {c: 2 for c in range(1, 9)}


def test_split_deterministic():
    ex = _examples(7)
    a, b = stratified_split(ex, 0.6, 11), stratified_split(ex, 0.6, 11)
    assert [e.path for e in a.train] == [e.path for e in b.train]
    assert [e.path for e in a.validation] == [e.path for e in b.validation]
    c = stratified_split(ex, 0.6, 12)
    assert [e.path for e in a.train] != [e.path for e in c.train]


@given(st.lists(st.integers(0, 12), min_size=8, max_size=8).filter(lambda xs: sum(xs) > 0),
       st.floats(0.01, 1.0), st.integers(0, 1000))
def test_split_partition_property(counts, fraction, seed):
    ex = _examples(counts)
    split = stratified_split(ex, fraction, seed)
    ids = [id(e) for e in split.train + split.validation]
    assert sorted(ids) == sorted(id(e) for e in ex)
    assert not set(map(id, split.train)) & set(map(id, split.validation))
    per_class = Counter(e.label.code for e in split.train)
    for code, n in enumerate(counts, 1):
        if n:
            assert per_class[code] == math.ceil(fraction * n)


def test_split_empty():
    with pytest.raises(EmptyInput):
        stratified_split([], 0.8, 0)


def test_actor_disjoint():
    split = actor_disjoint_split(_examples(6, actors=5), 0.8, 0)
    train_actors = {e.actor_id for e in split.train}
    val_actors = {e.actor_id for e in split.validation}
    assert not train_actors & val_actors
    assert len(train_actors) == 4


def test_manifest_csv(tmp_path):
    split = stratified_split(_examples(2), 0.5, 0)
    write_split_manifest(tmp_path / "m.csv", split)
    rows = read_split_manifest(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "path,label_code,label_name,actor,split"
    assert len(rows) == 16
    assert Counter(r["split"] for r in rows) == {"train": 8, "validation": 8}
    assert all(EMOTIONS[int(r["label_code"]) - 1] == r["label_name"] for r in rows)


def test_fnv1a_reference_vectors():
    # published FNV-1a 64 test vectors
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_fnv1a_jit_matches_python(rng):
    from deepemo.hashing import _fnv1a64_py

    blob = rng.integers(0, 256, 10000, dtype=np.uint8).tobytes()
    assert fnv1a64(blob) == _fnv1a64_py(blob)


def test_cache_key_depends_on_path_and_config():
    base = cache_key("/a.wav", SMALL)
    assert base == cache_key("/a.wav", SpectrogramConfig(n_fft=256, hop=128, n_mels=16))
    assert base != cache_key("/b.wav", SMALL)
    assert base != cache_key("/a.wav", SpectrogramConfig(n_fft=256, hop=64, n_mels=16))
    assert len(base) == 16


def _corpus(root, n=5):
    for i in range(n):
        _write(root / format_ravdess_filename(1 + i % 8, 1 + i), value=0.1 + 0.1 * i)
    return scan_dataset(root)


def test_feature_cache_warm_and_miss(tmp_path):
    examples = _corpus(tmp_path / "data")
    first = CacheReport()
    cold = build_feature_cache(examples, SMALL, tmp_path / "cache", report=first)
    assert (first.computed, first.cached) == (5, 0)
    assert len(list((tmp_path / "cache").glob("*.mspc"))) == 5
    warm_report = CacheReport()
    warm = build_feature_cache(examples, SMALL, tmp_path / "cache", report=warm_report)
    assert (warm_report.computed, warm_report.cached) == (0, 5)
    for a, b in zip(cold, warm):
        assert a.features.data.tobytes() == b.features.data.tobytes()
    changed = CacheReport()
    build_feature_cache(examples, SpectrogramConfig(n_fft=256, hop=64, n_mels=16), tmp_path / "cache",
                        report=changed)
    assert (changed.computed, changed.cached) == (5, 0)


def test_feature_cache_file_format(tmp_path):
    examples = _corpus(tmp_path / "data", 1)
    out = build_feature_cache(examples, SMALL, tmp_path / "cache")
    path = tmp_path / "cache" / (cache_key(examples[0].path, SMALL) + ".mspc")
    stored = load_mspc(path, SMALL)
    np.testing.assert_array_equal(stored.data, out[0].features.data)
    assert stored.data.shape == (16, 1 + (600 - 256) // 128)


def test_feature_cache_partial_failure(tmp_path):
    examples = _corpus(tmp_path / "data", 5)
    examples[2].path.write_bytes(b"RIFF garbage")
    report = CacheReport()
    out = build_feature_cache(examples, SMALL, tmp_path / "cache", report=report, workers=3)
    assert len(out) == 4 and report.computed == 4
    assert len(report.errors) == 1 and report.errors[0][0] == examples[2].path
    assert "MalformedHeader" in report.errors[0][1]


def test_feature_cache_all_fail(tmp_path):
    examples = _corpus(tmp_path / "data", 2)
    for e in examples:
        e.path.write_bytes(b"")
    with pytest.raises(EmptyDataset):
        build_feature_cache(examples, SMALL, tmp_path / "cache")


def test_feature_cache_concurrent_order(tmp_path):
    examples = _corpus(tmp_path / "data", 6)
    serial = build_feature_cache(examples, SMALL, tmp_path / "c1")
    parallel = build_feature_cache(examples, SMALL, tmp_path / "c2", workers=4)
    assert [e.path for e in serial] == [e.path for e in parallel]
    for a, b in zip(serial, parallel):
        assert a.features.data.tobytes() == b.features.data.tobytes()
