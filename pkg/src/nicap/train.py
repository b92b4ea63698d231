"""SGD-with-momentum training loop and deterministic checkpoint files."""

import json
import struct
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigMismatchError, FileFormatError, MissingGradError
from .models import FeatureBatch, ModelConfig, build_model, teacher_forced_loss
from .tensor import Tape, backward

CKPT_MAGIC = b"NICKPT\x00\x00"
CKPT_VERSION = 1


@dataclass
class OptimizerConfig:
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def validate(self):
        if self.lr < 0:
            raise ConfigMismatchError("lr must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigMismatchError("momentum must be in [0, 1)")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigMismatchError("batch_size and epochs must be >= 1")

    def to_dict(self):
        return {"lr": self.lr, "momentum": self.momentum,
                "weight_decay": self.weight_decay, "batch_size": self.batch_size,
                "epochs": self.epochs, "seed": self.seed}


def sgd_step(params, velocities, opt):
    """g' = g + wd*w ; v <- momentum*v + g' ; w <- w - lr*v, per parameter."""
    for name, p in params.items():
        if p.grad is None:
            raise MissingGradError(f"parameter {name!r} has no gradient")
        kernels.sgd_update(p.data, p.grad, velocities[name],
                           opt.lr, opt.momentum, opt.weight_decay)


def _write_tensor(fh, name, arr):
    encoded = name.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(path, config, vocab_tokens, params, velocities, epoch, seed,
                    rng_state, optimizer=None):
    """Binary named-tensor dump plus a JSON trailer; byte-stable round trips."""
    tensors = [(name, p.data) for name, p in sorted(params.items())]
    tensors += [(f"velocity/{name}", velocities[name]) for name in sorted(velocities)]
    trailer = json.dumps({
        "config": config.to_dict(),
        "vocab": list(vocab_tokens),
        "epoch": int(epoch),
        "seed": int(seed),
        "rng_state": rng_state,
        "optimizer": optimizer.to_dict() if optimizer else None,
    }, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(tensors)))
        for name, arr in tensors:
            _write_tensor(fh, name, arr)
        fh.write(trailer)
        fh.write(struct.pack("<Q", len(trailer)))


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab_tokens: list
    params: dict  # name -> float32 ndarray
    velocities: dict
    epoch: int
    seed: int
    rng_state: dict
    optimizer: dict | None = None

    def build_model(self):
        model = build_model(self.config, seed=0)
        named = model.named_parameters()
        if set(named) != set(self.params):
            raise ConfigMismatchError("checkpoint parameter names do not match config")
        for name, tensor in named.items():
            if tensor.shape != self.params[name].shape:
                raise ConfigMismatchError(f"checkpoint tensor {name!r} has shape "
                                          f"{self.params[name].shape}, expected {tensor.shape}")
            tensor.data[...] = self.params[name]
        return model


def load_checkpoint(path):
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:8] != CKPT_MAGIC:
        raise FileFormatError(f"{path}: bad checkpoint magic")
    version, count = struct.unpack_from("<II", payload, 8)
    if version != CKPT_VERSION:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    (trailer_len,) = struct.unpack_from("<Q", payload, len(payload) - 8)
    try:
        trailer = json.loads(payload[len(payload) - 8 - trailer_len:len(payload) - 8])
    except (json.JSONDecodeError, ValueError) as exc:
        raise FileFormatError(f"{path}: bad JSON trailer: {exc}") from exc
    tensors = {}
    off = 16
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", payload, off)
            off += 2
            name = payload[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<B", payload, off)
            off += 1
            dims = struct.unpack_from(f"<{rank}Q", payload, off)
            off += 8 * rank
            size = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(payload, dtype="<f4", count=size, offset=off) \
                .reshape(dims).copy()
            off += 4 * size
            tensors[name] = arr
    except (struct.error, ValueError) as exc:
        raise FileFormatError(f"{path}: truncated tensor payload: {exc}") from exc
    params = {k: v for k, v in tensors.items() if not k.startswith("velocity/")}
    velocities = {k[len("velocity/"):]: v for k, v in tensors.items()
                  if k.startswith("velocity/")}
    return Checkpoint(ModelConfig.from_dict(trailer["config"]), trailer["vocab"],
                      params, velocities, trailer["epoch"], trailer["seed"],
                      trailer["rng_state"], trailer.get("optimizer"))


def _batches(order, batch_size):
    for i in range(0, len(order), batch_size):
        yield order[i:i + batch_size]


def train(samples, feature_records, vocab, config, opt, out_dir,
          resume_from=None, checkpoint_every=1, log=sys.stderr):
    """Teacher-forced SGD training; writes per-epoch checkpoints and a loss CSV.

    samples are CaptionSamples; every (image, reference) pair is one training
    example. Shuffling, init and checkpoints are all driven by opt.seed, so a
    repeated run is bitwise identical.
    """
    opt.validate()
    config.validate()
    if not samples:
        raise ValueError("train: empty dataset")
    if config.vocab_size != len(vocab):
        raise ConfigMismatchError(f"config vocab_size {config.vocab_size} != "
                                  f"vocabulary size {len(vocab)}")
    feats_by_id = {r.image_id: r for r in feature_records}
    pairs = []
    for s in samples:
        if s.image_id not in feats_by_id:
            raise ConfigMismatchError(f"no features for image {s.image_id}")
        for ref in s.references:
            pairs.append((feats_by_id[s.image_id], ref))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if resume_from is not None:
        ckpt = load_checkpoint(resume_from)
        model = ckpt.build_model()
        params = model.named_parameters()
        velocities = {name: ckpt.velocities[name].copy() for name in params}
        rng = np.random.default_rng()
        rng.bit_generator.state = ckpt.rng_state
        start_epoch = ckpt.epoch
    else:
        model = build_model(config, seed=opt.seed)
        params = model.named_parameters()
        velocities = {name: np.zeros_like(p.data) for name, p in params.items()}
        rng = np.random.default_rng(opt.seed)
        start_epoch = 0

    loss_path = out_dir / "loss.csv"
    mode = "a" if resume_from is not None else "w"
    last_path = None
    with open(loss_path, mode, encoding="utf-8") as loss_log:
        if mode == "w":
            loss_log.write("epoch,step,loss\n")
        for epoch in range(start_epoch + 1, opt.epochs + 1):
            order = rng.permutation(len(pairs))
            epoch_losses = []
            for step, batch_idx in enumerate(_batches(order, opt.batch_size), 1):
                batch = [pairs[i] for i in batch_idx]
                features = FeatureBatch.from_records([p[0] for p in batch])
                captions = [p[1] for p in batch]
                tape = Tape()
                loss = teacher_forced_loss(model, features, captions, tape)
                backward(loss, tape)
                sgd_step(params, velocities, opt)
                for p in params.values():
                    p.zero_grad()
                value = float(loss.data[0])
                epoch_losses.append(value)
                loss_log.write(f"{epoch},{step},{value!r}\n")
            if log is not None:
                print(f"epoch {epoch}: mean loss {np.mean(epoch_losses):.6f}",
                      file=log)
            if epoch % checkpoint_every == 0 or epoch == opt.epochs:
                last_path = out_dir / f"epoch_{epoch:04d}.nickpt"
                save_checkpoint(last_path, config, vocab.id_to_token, params,
                                velocities, epoch, opt.seed,
                                rng.bit_generator.state, opt)
    return last_path
