import json
import math

import numpy as np
import pytest

from nicap.analysis import (caption_embedding, cosine, nearest_neighbors,
                            nn_study, write_reports)
from nicap.data import synth_dataset
from nicap.errors import ShapeError


def test_cosine_hand_values():
    assert cosine([3.0, 4.0], [3.0, 4.0]) == pytest.approx(1.0)
    assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0
    assert cosine([1.0, 1.0], [1.0, 0.0]) == pytest.approx(1.0 / math.sqrt(2.0))
    assert abs(cosine([1.0, 1.0], [1.0, 0.0]) - 0.7071068) < 1e-7


def test_cosine_zero_norm_defined_as_zero():
    assert cosine([0.0, 0.0], [1.0, 2.0]) == 0.0


def test_cosine_dim_mismatch():
    with pytest.raises(ShapeError):
        cosine([1.0], [1.0, 2.0])


def _brute_force_nn(vectors, ids, k):
    out = []
    for a in range(len(vectors)):
        scored = sorted(
            ((-cosine(vectors[a], vectors[j]), ids[j])
             for j in range(len(vectors)) if j != a))
        out.append([i for _, i in scored[:k]])
    return out


@pytest.mark.parametrize("seed", range(5))
def test_nearest_neighbors_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    vectors = rng.normal(size=(12, 4))
    ids = list(rng.permutation(100)[:12])
    assert nearest_neighbors(vectors, ids, 3) == _brute_force_nn(vectors, ids, 3)


def test_nearest_neighbors_excludes_anchor_and_sizes():
    rng = np.random.default_rng(1)
    vectors = rng.normal(size=(6, 3))
    ids = [10, 11, 12, 13, 14, 15]
    for anchor, neighbors in zip(ids, nearest_neighbors(vectors, ids, 3)):
        assert anchor not in neighbors
        assert len(neighbors) == 3


def test_nearest_neighbors_duplicates_are_mutual():
    rng = np.random.default_rng(2)
    base = rng.normal(size=(4, 3))
    vectors = np.concatenate([base, base])  # ids 0..3 duplicated as 4..7
    ids = list(range(8))
    result = nearest_neighbors(vectors, ids, 1)
    for i in range(4):
        assert result[i] == [i + 4]
        assert result[i + 4] == [i]


def test_nearest_neighbors_ties_prefer_lower_id():
    vectors = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    assert nearest_neighbors(vectors, [30, 20, 10], 1) == [[10], [10], [20]]


def test_nearest_neighbors_positive_scaling_invariance():
    rng = np.random.default_rng(3)
    vectors = rng.normal(size=(8, 4))
    ids = list(range(8))
    before = nearest_neighbors(vectors, ids, 3)
    scaled = vectors.copy()
    scaled[2] *= 17.5
    assert nearest_neighbors(scaled, ids, 3) == before


def test_nearest_neighbors_k_too_large():
    with pytest.raises(ShapeError):
        nearest_neighbors(np.ones((3, 2)), [0, 1, 2], 3)


def test_caption_embedding_mean_and_specials():
    table = np.arange(12, dtype=np.float32).reshape(6, 2)
    vec, empty = caption_embedding(table, [1, 4, 5, 2])
    assert not empty
    np.testing.assert_allclose(vec, table[[4, 5]].mean(axis=0))
    vec, empty = caption_embedding(table, [1, 2])
    assert empty
    np.testing.assert_array_equal(vec, 0.0)


def test_nn_study_deterministic(specimen_overfit, specimen_checkpoint):
    a = nn_study(specimen_checkpoint, specimen_overfit.records,
                 sample_size=16, k=3, seed=5, log=None)
    b = nn_study(specimen_checkpoint, specimen_overfit.records,
                 sample_size=16, k=3, seed=5, log=None)
    assert a == b


def test_nn_study_anchor_excluded_and_shapes(specimen_overfit,
                                             specimen_checkpoint):
    reports, summary = nn_study(specimen_checkpoint, specimen_overfit.records,
                                sample_size=16, k=3, seed=0, log=None)
    assert len(reports) == 16
    assert summary["sample_size"] == 16 and summary["k"] == 3
    for rep in reports:
        assert rep["anchor_id"] not in rep["s_i"]
        assert rep["anchor_id"] not in rep["s_c"]
        assert len(rep["s_i"]) == len(rep["s_c"]) == 3
        assert rep["overlap"] == len(set(rep["s_i"]) & set(rep["s_c"]))


def test_nn_study_clamps_oversized_sample(specimen_overfit, specimen_checkpoint):
    reports, summary = nn_study(specimen_checkpoint, specimen_overfit.records,
                                sample_size=10_000, k=3, seed=0, log=None)
    assert summary["sample_size"] == len(specimen_overfit.records)


def test_nn_study_too_few_samples(specimen_checkpoint):
    records, _, _ = synth_dataset(3, seed=0)
    with pytest.raises(ShapeError):
        nn_study(specimen_checkpoint, records, sample_size=3, k=3, log=None)


def test_write_reports_jsonl_roundtrip(tmp_path, specimen_overfit,
                                       specimen_checkpoint):
    reports, _ = nn_study(specimen_checkpoint, specimen_overfit.records,
                          sample_size=8, k=2, seed=1, log=None)
    path = tmp_path / "nn.jsonl"
    write_reports(path, reports)
    loaded = [json.loads(line) for line in path.read_text().splitlines()]
    assert loaded == reports
