import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nicap import data
from nicap.errors import FileFormatError


def test_tokenize_rules():
    assert data.tokenize("A man, riding.") == ["a", "man", ",", "riding", "."]
    assert data.tokenize("DOG dog Dog") == ["dog", "dog", "dog"]
    assert data.tokenize("") == []


@settings(max_examples=100, deadline=None)
@given(st.text())
def test_tokenize_idempotent_on_joined_output(text):
    tokens = data.tokenize(text)
    assert data.tokenize(" ".join(tokens)) == tokens


def test_build_vocab_frequency_then_lexicographic():
    vocab = data.build_vocab(["a b", "a"], min_count=1)
    assert vocab.token_to_id["a"] == 4
    assert vocab.token_to_id["b"] == 5


def test_build_vocab_min_count_threshold():
    vocab = data.build_vocab(["a b", "a"], min_count=2)
    assert vocab.token_to_id["a"] == 4
    assert "b" not in vocab.token_to_id
    assert vocab.encode(["b"]) == [data.UNK_ID]


def test_build_vocab_deterministic_and_order_invariant():
    corpus = ["red cat", "blue dog", "red dog"]
    a = data.build_vocab(corpus).id_to_token
    b = data.build_vocab(corpus).id_to_token
    c = data.build_vocab(list(reversed(corpus))).id_to_token
    assert a == b == c


def test_build_vocab_empty_corpus_rejected():
    with pytest.raises(ValueError):
        data.build_vocab([])


def test_vocab_roundtrip(tmp_path):
    vocab = data.build_vocab(["a cat sat"], min_count=1)
    path = tmp_path / "vocab.json"
    vocab.save(path)
    loaded = data.Vocabulary.load(path)
    assert loaded.id_to_token == vocab.id_to_token
    assert loaded.min_count == vocab.min_count


def test_synth_deterministic():
    a = data.synth_dataset(3, seed=7)
    b = data.synth_dataset(3, seed=7)
    for ra, rb in zip(a[0], b[0]):
        np.testing.assert_array_equal(ra.global_feature, rb.global_feature)
        np.testing.assert_array_equal(ra.regions, rb.regions)
    assert a[1] == b[1]
    assert a[2].id_to_token == b[2].id_to_token


def test_synth_zero_noise_same_triple_identical():
    records, entries, _ = data.synth_dataset(64, seed=1, noise=0.0)
    by_caption = {}
    for rec, (image_id, caps) in zip(records, entries):
        by_caption.setdefault(caps[0], []).append(rec)
    repeated = [v for v in by_caption.values() if len(v) > 1]
    assert repeated, "expected duplicate triples in 64 draws"
    for group in repeated:
        for rec in group[1:]:
            np.testing.assert_array_equal(rec.global_feature,
                                          group[0].global_feature)


def test_synth_caption_length_within_budget():
    _, entries, vocab = data.synth_dataset(20, seed=2)
    for _, caps in entries:
        assert len(data.tokenize(caps[0])) + 2 <= 30  # with <start>/<end> framing


def test_feature_file_roundtrip(tmp_path):
    records, _, _ = data.synth_dataset(5, seed=7)
    path = tmp_path / "f.nicf"
    data.write_features(path, records)
    loaded = data.read_features(path)
    assert len(loaded) == 5
    for a, b in zip(records, loaded):
        assert a.image_id == b.image_id
        np.testing.assert_array_equal(a.global_feature, b.global_feature)
        np.testing.assert_array_equal(a.regions, b.regions)


def test_feature_file_double_roundtrip_bytes(tmp_path):
    records, _, _ = data.synth_dataset(4, seed=9)
    p1, p2 = tmp_path / "a.nicf", tmp_path / "b.nicf"
    data.write_features(p1, records)
    data.write_features(p2, data.read_features(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_feature_file_bad_magic(tmp_path):
    records, _, _ = data.synth_dataset(1, seed=0)
    path = tmp_path / "f.nicf"
    data.write_features(path, records)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(FileFormatError, match="magic"):
        data.read_features(path)


def test_feature_file_truncated(tmp_path):
    records, _, _ = data.synth_dataset(2, seed=0)
    path = tmp_path / "f.nicf"
    data.write_features(path, records)
    path.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(FileFormatError):
        data.read_features(path)


def test_feature_file_header_contradicts_payload(tmp_path):
    records, _, _ = data.synth_dataset(2, seed=0)
    path = tmp_path / "f.nicf"
    data.write_features(path, records)
    raw = bytearray(path.read_bytes())
    raw[8:12] = (5).to_bytes(4, "little")  # claim 5 records
    path.write_bytes(bytes(raw))
    with pytest.raises(FileFormatError, match="header"):
        data.read_features(path)


def test_caption_file_roundtrip(tmp_path):
    entries = [(0, ["a red cat"]), (1, ["a dog", "the dog runs"])]
    path = tmp_path / "c.jsonl"
    data.write_captions(path, entries)
    assert data.read_captions(path) == entries


def test_caption_file_bad_json(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"image_id": 0}\n')
    with pytest.raises(FileFormatError):
        data.read_captions(path)


def test_captions_to_samples_encodes_references():
    vocab = data.build_vocab(["a red cat"])
    samples = data.captions_to_samples([(3, ["a red cat", "a cat"])], vocab)
    assert samples[0].image_id == 3
    assert len(samples[0].references) == 2
    assert all(t >= 4 for ref in samples[0].references for t in ref)
