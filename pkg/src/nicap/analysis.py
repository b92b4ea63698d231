"""Nearest-neighbor generalizability study: feature-space vs caption-space."""

import json
import sys

import numpy as np

from .data import Vocabulary
from .decode import beam_decode
from .errors import ShapeError
from .models import ARCH_SPECIMEN, FeatureBatch


def cosine(u, v):
    """u.v / (|u||v|); defined as 0 when either norm is 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ShapeError(f"cosine: shapes {u.shape} != {v.shape}")
    nu = np.sqrt((u * u).sum())
    nv = np.sqrt((v * v).sum())
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v / (nu * nv))


def nearest_neighbors(vectors, ids, k):
    """k nearest ids per anchor by cosine, anchor excluded, ties to lower id.

    Vectorized all-pairs ranking; the test suite checks it against a looped
    brute-force oracle.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if k >= n:
        raise ShapeError(f"k={k} needs at least k+1 samples, got {n}")
    norms = np.sqrt((x * x).sum(axis=1))
    safe = np.where(norms == 0.0, 1.0, norms)
    sims = (x @ x.T) / np.outer(safe, safe)
    sims[norms == 0.0, :] = 0.0
    sims[:, norms == 0.0] = 0.0
    out = []
    ids = np.asarray(ids)
    for a in range(n):
        others = [(-sims[a, j], ids[j]) for j in range(n) if j != a]
        others.sort()
        out.append([int(i) for _, i in others[:k]])
    return out


def caption_embedding(embed_matrix, token_ids):
    """Mean word embedding of a caption; specials excluded; empty -> zeros."""
    real = [t for t in token_ids if t > 3]
    if not real:
        return np.zeros(embed_matrix.shape[1], dtype=np.float64), True
    return embed_matrix[real].astype(np.float64).mean(axis=0), False


def nn_study(checkpoint, records, sample_size=1000, k=3, seed=0, beam_size=3,
             log=sys.stderr):
    """Per-anchor neighbor sets in feature space (S_i) vs generated-caption
    embedding space (S_c), plus overlap and caption-diversity summary."""
    model = checkpoint.build_model()
    vocab = Vocabulary(checkpoint.vocab_tokens)
    rng = np.random.default_rng(seed)
    if sample_size > len(records):
        if log is not None:
            print(f"warning: sample_size {sample_size} clamped to {len(records)}",
                  file=log)
        sample_size = len(records)
    if sample_size < k + 1:
        raise ShapeError(f"need at least k+1={k + 1} samples, got {sample_size}")
    chosen = sorted(rng.choice(len(records), size=sample_size, replace=False))
    sampled = [records[i] for i in chosen]
    ids = [r.image_id for r in sampled]

    if checkpoint.config.arch == ARCH_SPECIMEN:
        w = checkpoint.params["img_fc/w"].astype(np.float64)
        b = checkpoint.params["img_fc/b"].astype(np.float64)
        feat_vecs = np.stack([r.global_feature.astype(np.float64) @ w + b
                              for r in sampled])
    else:
        # no trained image FC in this architecture; use the raw global feature
        feat_vecs = np.stack([r.global_feature.astype(np.float64) for r in sampled])

    embed_matrix = checkpoint.params["embed/weight"]
    captions, cap_vecs, empty_flags = [], [], []
    for rec in sampled:
        tokens = beam_decode(model, FeatureBatch.from_records([rec]), beam_size)[0][0]
        vec, empty = caption_embedding(embed_matrix, tokens)
        captions.append(" ".join(vocab.decode(tokens)))
        cap_vecs.append(vec)
        empty_flags.append(empty)

    s_i = nearest_neighbors(feat_vecs, ids, k)
    s_c = nearest_neighbors(np.stack(cap_vecs), ids, k)
    caption_by_id = dict(zip(ids, captions))
    reports = []
    overlaps = []
    distinct_ratios = []
    for idx, anchor in enumerate(ids):
        overlap = len(set(s_i[idx]) & set(s_c[idx]))
        neighbor_caps = [caption_by_id[i] for i in s_c[idx]]
        reports.append({
            "anchor_id": int(anchor),
            "s_i": s_i[idx],
            "s_c": s_c[idx],
            "overlap": overlap,
            "captions": neighbor_caps,
            "empty_caption": bool(empty_flags[idx]),
        })
        overlaps.append(overlap / k)
        distinct_ratios.append(len(set(neighbor_caps)) / k)
    summary = {
        "mean_overlap": float(np.mean(overlaps)),
        "distinct_caption_ratio": float(np.mean(distinct_ratios)),
        "sample_size": sample_size,
        "k": k,
        "beam_size": beam_size,
    }
    return reports, summary


def write_reports(path, reports):
    with open(path, "w", encoding="utf-8") as fh:
        for rep in reports:
            fh.write(json.dumps(rep, sort_keys=True))
            fh.write("\n")
