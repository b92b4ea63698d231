"""The two decoder architectures behind a uniform init_state/step interface."""

import sys
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .data import END_ID, PAD_ID, START_ID
from .errors import ConfigMismatchError, ShapeError
from .layers import (AttentionParams, EmbeddingParams, GruParams, LinearParams,
                     LstmParams, LstmState, attend, classify, cross_entropy,
                     embed, gru_cell, linear, lstm_cell, project_regions)
from .tensor import Tensor, add, concat

ARCH_SPECIMEN = "specimen"
ARCH_TOPDOWN = "topdown-lstmgru"
ARCHS = (ARCH_SPECIMEN, ARCH_TOPDOWN)


@dataclass
class ModelConfig:
    arch: str
    vocab_size: int
    feature_dim: int
    region_count: int
    region_dim: int
    embed_size: int = 256
    hidden_size: int = 256
    lstm_layers: int = 1
    attention_size: int = 64
    max_caption_len: int = 30

    def validate(self):
        if self.arch not in ARCHS:
            raise ConfigMismatchError(f"unknown arch {self.arch!r}")
        for name in ("vocab_size", "feature_dim", "region_count", "region_dim",
                     "embed_size", "hidden_size", "attention_size", "max_caption_len"):
            if getattr(self, name) < 1:
                raise ConfigMismatchError(f"{name} must be positive")
        if self.lstm_layers not in (1, 2):
            raise ConfigMismatchError("lstm_layers must be 1 or 2")

    def to_dict(self):
        return {"arch": self.arch, "vocab_size": self.vocab_size,
                "feature_dim": self.feature_dim, "region_count": self.region_count,
                "region_dim": self.region_dim, "embed_size": self.embed_size,
                "hidden_size": self.hidden_size, "lstm_layers": self.lstm_layers,
                "attention_size": self.attention_size,
                "max_caption_len": self.max_caption_len}

    @classmethod
    def from_dict(cls, d):
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class FeatureBatch:
    """Per-batch feature arrays pulled out of FeatureRecords."""

    global_features: np.ndarray  # B x D_f
    regions: np.ndarray  # B x R x D_a

    @classmethod
    def from_records(cls, records):
        return cls(np.stack([r.global_feature for r in records]),
                   np.stack([r.regions for r in records]))


@dataclass
class StepOutput:
    logprobs: Tensor  # B x V
    state: object
    attention_weights: Tensor | None = None


@dataclass
class SpecimenState:
    lstm: list  # one LstmState per layer


@dataclass
class TopDownContext:
    """Per-batch constants and the once-per-image region projection."""

    regions: Tensor  # B x R x D_a, frozen input
    projected: Tensor  # (B*R) x A, on tape (w_v is trained jointly)
    mean_regions: Tensor  # B x D_a, frozen


@dataclass
class TopDownState:
    att_lstm: LstmState
    att_gru_h: Tensor
    lang_lstm: LstmState
    lang_gru_h: Tensor
    ctx: TopDownContext = field(repr=False, default=None)


class SpecimenModel:
    """Image FC initializes layer-1 h0; token embedding -> LSTM stack -> softmax."""

    arch = ARCH_SPECIMEN

    def __init__(self, config, params):
        self.config = config
        self.embed = params["embed"]
        self.img_fc = params["img_fc"]
        self.lstm = params["lstm"]  # list of LstmParams
        self.cls = params["cls"]

    @classmethod
    def init(cls, config, rng, dtype=np.float32):
        params = {
            "embed": EmbeddingParams.init(rng, config.vocab_size, config.embed_size, dtype),
            "img_fc": LinearParams.init(rng, config.feature_dim, config.hidden_size, dtype),
            "lstm": [LstmParams.init(
                rng, config.embed_size if i == 0 else config.hidden_size,
                config.hidden_size, dtype) for i in range(config.lstm_layers)],
            "cls": LinearParams.init(rng, config.hidden_size, config.vocab_size, dtype),
        }
        return cls(config, params)

    def named_parameters(self):
        out = dict(self.embed.named("embed"))
        out.update(self.img_fc.named("img_fc"))
        for i, p in enumerate(self.lstm):
            out.update(p.named(f"lstm{i + 1}"))
        out.update(self.cls.named("cls"))
        return out

    def init_state(self, features, tape=None):
        cfg = self.config
        b, d = features.global_features.shape
        if d != cfg.feature_dim:
            raise ConfigMismatchError(f"feature dim {d} != config {cfg.feature_dim}")
        h0 = linear(Tensor(features.global_features), self.img_fc, tape)
        states = [LstmState(h0, Tensor(np.zeros_like(h0.data)))]
        for _ in range(cfg.lstm_layers - 1):
            states.append(LstmState.zeros(b, cfg.hidden_size, dtype=h0.dtype))
        return SpecimenState(states)

    def step(self, token_ids, state, tape=None):
        x = embed(self.embed, token_ids, tape)
        new_states = []
        for layer_params, layer_state in zip(self.lstm, state.lstm):
            layer_state = lstm_cell(x, layer_state, layer_params, tape)
            new_states.append(layer_state)
            x = layer_state.h
        logprobs = classify(x, self.cls, tape)
        return StepOutput(logprobs, SpecimenState(new_states))


class TopDownLstmGru:
    """Attention LSTM-GRU block feeding additive attention, then a language
    LSTM-GRU block; the classifier reads both GRU outputs concatenated."""

    arch = ARCH_TOPDOWN

    def __init__(self, config, params):
        self.config = config
        self.embed = params["embed"]
        self.att_lstm = params["att_lstm"]
        self.att_gru = params["att_gru"]
        self.attn = params["attn"]
        self.lang_lstm = params["lang_lstm"]
        self.lang_gru = params["lang_gru"]
        self.cls = params["cls"]

    @classmethod
    def init(cls, config, rng, dtype=np.float32):
        h, e, da = config.hidden_size, config.embed_size, config.region_dim
        params = {
            "embed": EmbeddingParams.init(rng, config.vocab_size, e, dtype),
            # input: [prev language GRU h; embedded token; mean region vector]
            "att_lstm": LstmParams.init(rng, h + e + da, h, dtype),
            "att_gru": GruParams.init(rng, h, h, dtype),
            "attn": AttentionParams.init(rng, da, h, config.attention_size, dtype),
            # input: [attended context; attention GRU output]
            "lang_lstm": LstmParams.init(rng, da + h, h, dtype),
            "lang_gru": GruParams.init(rng, h, h, dtype),
            "cls": LinearParams.init(rng, 2 * h, config.vocab_size, dtype),
        }
        return cls(config, params)

    def named_parameters(self):
        out = dict(self.embed.named("embed"))
        for prefix in ("att_lstm", "att_gru", "attn", "lang_lstm", "lang_gru", "cls"):
            out.update(getattr(self, prefix).named(prefix))
        return out

    def init_state(self, features, tape=None):
        cfg = self.config
        b, r, da = features.regions.shape
        if (r, da) != (cfg.region_count, cfg.region_dim):
            raise ConfigMismatchError(
                f"regions {r}x{da} != config {cfg.region_count}x{cfg.region_dim}")
        dtype = self.embed.weight.dtype
        regions = Tensor(features.regions, dtype=dtype)
        ctx = TopDownContext(
            regions=regions,
            projected=project_regions(regions, self.attn, tape),
            mean_regions=Tensor(features.regions.mean(axis=1), dtype=dtype),
        )
        zeros = lambda: Tensor(np.zeros((b, cfg.hidden_size), dtype=dtype))
        return TopDownState(LstmState.zeros(b, cfg.hidden_size, dtype), zeros(),
                            LstmState.zeros(b, cfg.hidden_size, dtype), zeros(), ctx)

    def step(self, token_ids, state, tape=None):
        ctx = state.ctx
        x = embed(self.embed, token_ids, tape)
        att_in = concat([state.lang_gru_h, x, ctx.mean_regions], axis=1, tape=tape)
        att_lstm = lstm_cell(att_in, state.att_lstm, self.att_lstm, tape)
        att_gru_h = gru_cell(att_lstm.h, state.att_gru_h, self.att_gru, tape)
        weights, context = attend(ctx.regions, ctx.projected, att_gru_h, self.attn, tape)
        lang_in = concat([context, att_gru_h], axis=1, tape=tape)
        lang_lstm = lstm_cell(lang_in, state.lang_lstm, self.lang_lstm, tape)
        lang_gru_h = gru_cell(lang_lstm.h, state.lang_gru_h, self.lang_gru, tape)
        logprobs = classify(concat([att_gru_h, lang_gru_h], axis=1, tape=tape),
                            self.cls, tape)
        new_state = TopDownState(att_lstm, att_gru_h, lang_lstm, lang_gru_h, ctx)
        return StepOutput(logprobs, new_state, attention_weights=weights)


def build_model(config, seed=0, dtype=np.float32):
    """Deterministically initialized model for the given architecture."""
    config.validate()
    rng = np.random.default_rng(seed)
    if config.arch == ARCH_SPECIMEN:
        return SpecimenModel.init(config, rng, dtype)
    return TopDownLstmGru.init(config, rng, dtype)


def frame_captions(captions, max_caption_len, pad_id=PAD_ID, warn=True):
    """Frame token-id sequences as <start> w1..wn <end>, padded to a common length.

    Returns (inputs B x T, targets B x T, mask B x T). Captions longer than
    max_caption_len - 1 are truncated so the <end>-terminated target still
    fits the length budget.
    """
    budget = max_caption_len - 1
    framed = []
    for tokens in captions:
        tokens = list(tokens)
        if len(tokens) > budget:
            if warn:
                print(f"warning: truncating caption of {len(tokens)} tokens to {budget}",
                      file=sys.stderr)
            tokens = tokens[:budget]
        framed.append([START_ID] + tokens + [END_ID])
    t = max(len(f) for f in framed)
    b = len(framed)
    inputs = np.full((b, t - 1), pad_id, dtype=np.int64)
    targets = np.full((b, t - 1), pad_id, dtype=np.int64)
    mask = np.zeros((b, t - 1), dtype=np.float32)
    for i, f in enumerate(framed):
        n = len(f) - 1
        inputs[i, :n] = f[:-1]
        targets[i, :n] = f[1:]
        mask[i, :n] = 1.0
    return inputs, targets, mask


def teacher_forced_loss(model, features, captions, tape):
    """Mean cross-entropy over all non-pad target positions of a batch."""
    if not captions:
        raise ShapeError("teacher_forced_loss: empty batch")
    inputs, targets, mask = frame_captions(captions, model.config.max_caption_len)
    denom = float(mask.sum())
    state = model.init_state(features, tape)
    total = None
    for t in range(inputs.shape[1]):
        out = model.step(inputs[:, t], state, tape)
        state = out.state
        term = cross_entropy(out.logprobs, targets[:, t], mask[:, t], denom, tape)
        total = term if total is None else add(total, term, tape)
    return total
