"""Tokenization, vocabulary, caption/feature file I/O, synthetic micro-dataset."""

import json
import re
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FileFormatError, ShapeError

PAD, START, END, UNK = "<pad>", "<start>", "<end>", "<unk>"
PAD_ID, START_ID, END_ID, UNK_ID = 0, 1, 2, 3
RESERVED = [PAD, START, END, UNK]

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)

NICF_MAGIC = b"NICF"
NICF_VERSION = 1


def tokenize(text):
    """Lowercase, split punctuation into standalone tokens, split on whitespace."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Bidirectional token<->id map; ids 0..3 are reserved specials."""

    def __init__(self, tokens, min_count=1):
        if list(tokens[:4]) != RESERVED:
            raise FileFormatError("vocabulary must start with the 4 reserved tokens")
        self.id_to_token = list(tokens)
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise FileFormatError("vocabulary contains duplicate tokens")
        self.min_count = min_count

    def __len__(self):
        return len(self.id_to_token)

    def encode(self, tokens):
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def decode(self, ids, skip_special=True):
        out = []
        for i in ids:
            if not 0 <= i < len(self.id_to_token):
                raise ShapeError(f"token id {i} out of range")
            if skip_special and i in (PAD_ID, START_ID, END_ID, UNK_ID):
                continue
            out.append(self.id_to_token[i])
        return out

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"tokens": self.id_to_token, "min_count": self.min_count}, fh)

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
            return cls(obj["tokens"], obj.get("min_count", 1))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FileFormatError(f"bad vocabulary file {path}: {exc}") from exc


def build_vocab(caption_corpus, min_count=1):
    """Frequency-thresholded vocabulary, ids in descending-frequency order
    (ties lexicographic)."""
    if not caption_corpus:
        raise ValueError("build_vocab: empty corpus")
    counts = {}
    for text in caption_corpus:
        for tok in tokenize(text):
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(RESERVED + kept, min_count=min_count)


@dataclass
class CaptionSample:
    image_id: int
    references: list  # list of token-id sequences, no specials


@dataclass
class FeatureRecord:
    image_id: int
    global_feature: np.ndarray  # (D_f,) float32
    regions: np.ndarray  # (R, D_a) float32


def write_captions(path, entries):
    """entries: iterable of (image_id, [caption strings])."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, captions in entries:
            fh.write(json.dumps({"image_id": int(image_id), "captions": list(captions)}))
            fh.write("\n")


def read_captions(path):
    """Returns list of (image_id, [caption strings])."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append((int(obj["image_id"]), list(obj["captions"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FileFormatError(f"{path}:{ln}: bad caption record: {exc}") from exc
    return out


def captions_to_samples(entries, vocab):
    return [CaptionSample(image_id, [vocab.encode(tokenize(c)) for c in captions])
            for image_id, captions in entries]


def write_features(path, records):
    records = list(records)
    if not records:
        raise ValueError("write_features: no records")
    d_f = records[0].global_feature.shape[0]
    r, d_a = records[0].regions.shape
    with open(path, "wb") as fh:
        fh.write(NICF_MAGIC)
        fh.write(struct.pack("<IIIII", NICF_VERSION, len(records), d_f, r, d_a))
        for rec in records:
            if rec.global_feature.shape != (d_f,) or rec.regions.shape != (r, d_a):
                raise ShapeError(f"feature record {rec.image_id} has inconsistent dims")
            fh.write(struct.pack("<Q", rec.image_id))
            fh.write(np.ascontiguousarray(rec.global_feature, dtype="<f4").tobytes())
            fh.write(np.ascontiguousarray(rec.regions, dtype="<f4").tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:4] != NICF_MAGIC:
        raise FileFormatError(f"{path}: bad magic {payload[:4]!r}")
    if len(payload) < 24:
        raise FileFormatError(f"{path}: truncated header")
    version, n, d_f, r, d_a = struct.unpack_from("<IIIII", payload, 4)
    if version != NICF_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    rec_bytes = 8 + 4 * (d_f + r * d_a)
    expected = 24 + n * rec_bytes
    if len(payload) != expected:
        raise FileFormatError(f"{path}: payload is {len(payload)} bytes, "
                              f"header implies {expected}")
    records = []
    off = 24
    for _ in range(n):
        (image_id,) = struct.unpack_from("<Q", payload, off)
        off += 8
        gf = np.frombuffer(payload, dtype="<f4", count=d_f, offset=off).copy()
        off += 4 * d_f
        rg = np.frombuffer(payload, dtype="<f4", count=r * d_a, offset=off) \
            .reshape(r, d_a).copy()
        off += 4 * r * d_a
        if not (np.isfinite(gf).all() and np.isfinite(rg).all()):
            raise FileFormatError(f"{path}: non-finite values in record {image_id}")
        records.append(FeatureRecord(image_id, gf, rg))
    return records


@dataclass
class WorldSpec:
    """Compositional micro-world generating (object, color, verb) images."""

    objects: list = field(default_factory=lambda: ["cat", "dog", "bird", "horse"])
    colors: list = field(default_factory=lambda: ["red", "blue", "green"])
    verbs: list = field(default_factory=lambda: ["walk", "jump", "sleep"])


def synth_dataset(n_images, seed, noise=0.05, spec=None, balanced=False):
    """Deterministic stand-in corpus: one-hot block features + templated captions.

    Returns (feature records, caption entries as (id, [string]), vocabulary).
    The global feature concatenates object/color/verb one-hot blocks plus
    gaussian noise; each of the 4 regions re-weights one block so attention
    has signal to find. balanced=True cycles through all triples in id order
    instead of sampling them, giving equal-size duplicate groups.
    """
    if n_images < 1:
        raise ValueError("synth_dataset: n_images must be >= 1")
    spec = spec or WorldSpec()
    rng = np.random.default_rng(seed)
    sizes = [len(spec.objects), len(spec.colors), len(spec.verbs)]
    d_f = sum(sizes)
    records, entries = [], []
    for image_id in range(n_images):
        if balanced:
            t = image_id % (sizes[0] * sizes[1] * sizes[2])
            oi = t % sizes[0]
            ci = (t // sizes[0]) % sizes[1]
            vi = t // (sizes[0] * sizes[1])
        else:
            oi = int(rng.integers(sizes[0]))
            ci = int(rng.integers(sizes[1]))
            vi = int(rng.integers(sizes[2]))
        base = np.zeros(d_f, dtype=np.float32)
        base[oi] = 1.0
        base[sizes[0] + ci] = 1.0
        base[sizes[0] + sizes[1] + vi] = 1.0
        regions = np.empty((4, d_f), dtype=np.float32)
        regions[0] = base
        offsets = np.cumsum([0] + sizes)
        for k in range(3):
            corrupted = base * 0.25
            corrupted[offsets[k]:offsets[k + 1]] = base[offsets[k]:offsets[k + 1]]
            regions[k + 1] = corrupted
        gf = base
        if noise > 0:
            gf = base + rng.normal(0.0, noise, size=d_f).astype(np.float32)
            regions = regions + rng.normal(0.0, noise, size=regions.shape).astype(np.float32)
        records.append(FeatureRecord(image_id, gf.astype(np.float32),
                                     regions.astype(np.float32)))
        caption = f"a {spec.colors[ci]} {spec.objects[oi]} is {spec.verbs[vi]}ing"
        entries.append((image_id, [caption]))
    corpus = [c for _, caps in entries for c in caps]
    vocab = build_vocab(corpus, min_count=1)
    return records, entries, vocab
