"""Corpus BLEU-1..4 and CIDEr over token sequences, plus whole-run evaluation."""

import json
import math
from collections import Counter

from .data import captions_to_samples, read_captions, read_features
from .decode import beam_decode
from .errors import ConfigMismatchError
from .models import FeatureBatch

MAX_N = 4


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, references, max_n=MAX_N):
    """Corpus BLEU-1..max_n: clipped modified precisions with brevity penalty.

    references is a list (per candidate) of reference token sequences. The
    brevity-penalty reference length is the closest reference length per
    candidate, ties going to the shorter one.
    """
    if not candidates:
        raise ValueError("bleu: empty candidate set")
    if len(candidates) != len(references):
        raise ValueError("bleu: candidate/reference list lengths differ")
    matches = [0] * (max_n + 1)
    totals = [0] * (max_n + 1)
    cand_len = 0
    ref_len = 0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise ValueError("bleu: candidate without references")
        cand_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in refs)[1]
        for n in range(1, max_n + 1):
            cn = _ngrams(cand, n)
            if not cn:
                continue
            clip = Counter()
            for r in refs:
                rn = _ngrams(r, n)
                for g in cn:
                    clip[g] = max(clip[g], rn.get(g, 0))
            totals[n] += sum(cn.values())
            matches[n] += sum(min(c, clip[g]) for g, c in cn.items())
    if cand_len == 0:
        return [0.0] * max_n
    bp = min(1.0, math.exp(1.0 - ref_len / cand_len))
    precisions = [matches[n] / totals[n] if totals[n] else 0.0
                  for n in range(1, max_n + 1)]
    scores = []
    for k in range(1, max_n + 1):
        if any(precisions[n - 1] == 0.0 for n in range(1, k + 1)):
            scores.append(0.0)
        else:
            scores.append(bp * math.exp(sum(math.log(precisions[n - 1])
                                            for n in range(1, k + 1)) / k))
    return scores


def _tfidf(counts, idf):
    return {g: c * idf.get(g, 0.0) for g, c in counts.items()}


def _cosine_sparse(a, b):
    na = sum(v * v for v in a.values())
    nb = sum(v * v for v in b.values())
    if na == 0.0 or nb == 0.0:
        return 0.0
    num = sum(v * b[g] for g, v in a.items() if g in b)
    return num / math.sqrt(na * nb)


def cider(candidates, references, max_n=MAX_N):
    """Consensus score: mean over n of TF-IDF cosine vs each reference, x10.

    idf(g) = ln(M / df(g)) with document frequency counted over reference
    sets; a corpus of a single document therefore scores 0.
    """
    if not candidates or len(candidates) != len(references):
        raise ValueError("cider: empty or mismatched inputs")
    m = len(references)
    idf = [None] * (max_n + 1)
    for n in range(1, max_n + 1):
        df = Counter()
        for refs in references:
            seen = set()
            for r in refs:
                seen.update(_ngrams(r, n))
            df.update(seen)
        idf[n] = {g: math.log(m / c) for g, c in df.items()}
    total = 0.0
    for cand, refs in zip(candidates, references):
        if not refs:
            raise ValueError("cider: candidate without references")
        per_n = 0.0
        for n in range(1, max_n + 1):
            cv = _tfidf(_ngrams(cand, n), idf[n])
            sim = sum(_cosine_sparse(cv, _tfidf(_ngrams(r, n), idf[n]))
                      for r in refs) / len(refs)
            per_n += sim
        total += per_n / max_n
    return 10.0 * total / len(candidates)


def evaluate_run(checkpoint, feature_path, caption_path, beam_size):
    """Decode every image and score it; returns one table-row-like report dict."""
    from .data import Vocabulary  # local import to avoid a cycle at module load

    model = checkpoint.build_model()
    vocab = Vocabulary(checkpoint.vocab_tokens)
    records = read_features(str(feature_path))
    entries = read_captions(str(caption_path))
    refs_by_id = {image_id: captions for image_id, captions in entries}
    missing = [r.image_id for r in records if r.image_id not in refs_by_id]
    if missing:
        raise ConfigMismatchError(f"no reference captions for image ids {missing[:5]}")
    samples = captions_to_samples(entries, vocab)
    refs_tokens = {s.image_id: s.references for s in samples}
    candidates, references = [], []
    for rec in records:
        ranked = beam_decode(model, FeatureBatch.from_records([rec]), beam_size)
        top = ranked[0][0]
        candidates.append([t for t in top if t > 3])  # drop specials
        references.append(refs_tokens[rec.image_id])
    b = bleu(candidates, references)
    return {
        "arch": checkpoint.config.arch,
        "feature_file": str(feature_path),
        "beam_size": int(beam_size),
        "lstm_layers": checkpoint.config.lstm_layers,
        "bleu": b,
        "cider": cider(candidates, references),
        "n_images": len(records),
    }


def report_to_json(report):
    return json.dumps(report, sort_keys=True)
