"""Session fixtures: trained overfit harnesses shared across test modules."""

import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from nicap.data import (Vocabulary, WorldSpec, captions_to_samples, synth_dataset,
                        write_captions, write_features)
from nicap.models import ModelConfig
from nicap.train import OptimizerConfig, load_checkpoint, train

BALANCED_WORLD = WorldSpec(objects=["cat", "dog"], colors=["red", "blue"],
                           verbs=["walk", "jump"])


@dataclass
class Harness:
    dir: Path
    feature_path: Path
    caption_path: Path
    vocab_path: Path
    ckpt_path: Path
    records: list
    entries: list
    samples: list
    vocab: Vocabulary
    config: ModelConfig
    opt: OptimizerConfig
    train_seconds: float


def _make_harness(root, arch, epochs, seed=7, train_seed=3, n=32,
                  spec=None, balanced=False, lstm_layers=1):
    records, entries, vocab = synth_dataset(n, seed=seed, spec=spec,
                                            balanced=balanced)
    samples = captions_to_samples(entries, vocab)
    root.mkdir(parents=True, exist_ok=True)
    feature_path = root / "features.nicf"
    caption_path = root / "captions.jsonl"
    vocab_path = root / "vocab.json"
    write_features(feature_path, records)
    write_captions(caption_path, entries)
    vocab.save(vocab_path)
    config = ModelConfig(arch, vocab_size=len(vocab),
                         feature_dim=records[0].global_feature.shape[0],
                         region_count=records[0].regions.shape[0],
                         region_dim=records[0].regions.shape[1],
                         lstm_layers=lstm_layers)
    opt = OptimizerConfig(epochs=epochs, seed=train_seed)
    started = time.monotonic()
    ckpt_path = train(samples, records, vocab, config, opt, root / "ckpt",
                      checkpoint_every=epochs, log=None)
    elapsed = time.monotonic() - started
    return Harness(root, feature_path, caption_path, vocab_path, ckpt_path,
                   records, entries, samples, vocab, config, opt, elapsed)


@pytest.fixture(scope="session")
def specimen_overfit(tmp_path_factory):
    """32 images over 8 balanced triples, specimen 1-layer, paper optimizer."""
    root = tmp_path_factory.mktemp("specimen_overfit")
    return _make_harness(root, "specimen", epochs=300, spec=BALANCED_WORLD,
                         balanced=True)


@pytest.fixture(scope="session")
def topdown_overfit(tmp_path_factory):
    root = tmp_path_factory.mktemp("topdown_overfit")
    return _make_harness(root, "topdown-lstmgru", epochs=250)


@pytest.fixture(scope="session")
def specimen_checkpoint(specimen_overfit):
    return load_checkpoint(specimen_overfit.ckpt_path)


@pytest.fixture(scope="session")
def topdown_checkpoint(topdown_overfit):
    return load_checkpoint(topdown_overfit.ckpt_path)


_ACCEPTANCE_OUTCOMES = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _ACCEPTANCE_OUTCOMES[name] = report.outcome
    elif report.failed:  # setup/teardown failure counts as a failed criterion
        _ACCEPTANCE_OUTCOMES.setdefault(name, "failed")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_ACCEPTANCE_OUTCOMES.items()):
        label = name.removeprefix("test_")
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{label}: {verdict}")
