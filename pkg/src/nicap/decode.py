"""Greedy and beam-search caption generation over init_state/step models.

Token preferences are deterministic: <pad>, <start> and <unk> are never
emitted; on exact score ties, real words win over <end> and lower ids win
among real words. Scores are raw per-token log-probability sums accumulated
in 64-bit, with no length normalization.
"""

from dataclasses import dataclass

import numpy as np

from .data import END_ID, PAD_ID, START_ID, UNK_ID
from .errors import ShapeError

_MASKED = (PAD_ID, START_ID, UNK_ID)


def _token_key(token):
    # <end> loses exact ties against real words
    return (1 if token == END_ID else 0, token)


def _sequence_key(tokens):
    return tuple(_token_key(t) for t in tokens)


@dataclass
class Hypothesis:
    tokens: list  # generated ids, <start> excluded, <end> included when emitted
    logprob_sum: float  # 64-bit running sum of chosen per-step logprobs
    state: object
    finished: bool = False


def _allowed_row(logprobs_tensor):
    row = np.asarray(logprobs_tensor.data[0], dtype=np.float64).copy()
    row[list(_MASKED)] = -np.inf
    return row


def _pick_argmax(row):
    best = row.max()
    candidates = np.flatnonzero(row == best)
    return int(min(candidates, key=_token_key))


def greedy_decode(model, features, max_len=None):
    """Argmax decoding; stops at <end> or max caption length."""
    max_len = max_len or model.config.max_caption_len
    state = model.init_state(features)
    tokens = []
    prev = np.array([START_ID])
    while len(tokens) < max_len:
        out = model.step(prev, state)
        state = out.state
        tok = _pick_argmax(_allowed_row(out.logprobs))
        tokens.append(tok)
        if tok == END_ID:
            break
        prev = np.array([tok])
    return tokens


def beam_decode(model, features, beam_size, max_len=None):
    """Beam search; returns completed (tokens, logprob_sum) pairs ranked by score.

    Each step expands every live hypothesis over the full vocabulary and keeps
    the top beam_size expansions; of those, finished ones (ending in <end> or
    at max length) retire to the completed pool and the live beam is refilled
    from the next-best unfinished expansions, so completed hypotheses never
    occupy live slots.
    """
    if beam_size < 1:
        raise ShapeError(f"beam_size must be >= 1, got {beam_size}")
    max_len = max_len or model.config.max_caption_len
    init = model.init_state(features)
    live = [Hypothesis([], 0.0, init)]
    completed = []
    while live:
        expansions = []
        for hyp in live:
            prev = np.array([hyp.tokens[-1] if hyp.tokens else START_ID])
            out = model.step(prev, hyp.state)
            row = _allowed_row(out.logprobs)
            for tok in range(row.shape[0]):
                if not np.isfinite(row[tok]):
                    continue
                tokens = hyp.tokens + [tok]
                expansions.append(Hypothesis(
                    tokens, hyp.logprob_sum + float(row[tok]), out.state,
                    finished=(tok == END_ID or len(tokens) >= max_len)))
        expansions.sort(key=lambda h: (-h.logprob_sum, _sequence_key(h.tokens)))
        selected = expansions[:beam_size]
        completed.extend(h for h in selected if h.finished)
        live = [h for h in selected if not h.finished]
        refill = [h for h in expansions[beam_size:] if not h.finished]
        live.extend(refill[:beam_size - len(live)])
    completed.sort(key=lambda h: (-h.logprob_sum, _sequence_key(h.tokens)))
    return [(h.tokens, h.logprob_sum) for h in completed]
