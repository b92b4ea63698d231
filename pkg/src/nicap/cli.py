"""Command-line entry point: build-vocab, synth, train, caption, eval, nn."""

import argparse
import json
import sys
from pathlib import Path

from . import analysis, data, metrics, train as train_mod
from .decode import beam_decode
from .errors import ConfigMismatchError, FileFormatError
from .models import ARCHS, FeatureBatch, ModelConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_CONFIG = 4
EXIT_RUNTIME = 5


def _echo_config(args):
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    print(f"config: {json.dumps(resolved, sort_keys=True, default=str)}", file=sys.stderr)


def _cmd_build_vocab(args):
    entries = data.read_captions(args.captions)
    corpus = [c for _, caps in entries for c in caps]
    vocab = data.build_vocab(corpus, min_count=args.min_count)
    vocab.save(args.out)
    print(f"wrote vocabulary of {len(vocab)} tokens to {args.out}", file=sys.stderr)


def _cmd_synth(args):
    records, entries, vocab = data.synth_dataset(args.n, args.seed, noise=args.noise)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data.write_features(out / "features.nicf", records)
    data.write_captions(out / "captions.jsonl", entries)
    vocab.save(out / "vocab.json")
    print(f"wrote {len(records)} synthetic images to {out}", file=sys.stderr)


def _cmd_train(args):
    vocab = data.Vocabulary.load(args.vocab)
    records = data.read_features(args.features)
    entries = data.read_captions(args.captions)
    samples = data.captions_to_samples(entries, vocab)
    config = ModelConfig(
        arch=args.arch,
        vocab_size=len(vocab),
        feature_dim=records[0].global_feature.shape[0],
        region_count=records[0].regions.shape[0],
        region_dim=records[0].regions.shape[1],
        lstm_layers=args.lstm_layers,
        attention_size=args.attention_size,
        max_caption_len=args.max_len,
    )
    opt = train_mod.OptimizerConfig(lr=args.lr, momentum=args.momentum,
                                    weight_decay=args.weight_decay,
                                    batch_size=args.batch, epochs=args.epochs,
                                    seed=args.seed)
    final = train_mod.train(samples, records, vocab, config, opt, args.out,
                            checkpoint_every=args.checkpoint_every)
    print(f"final checkpoint: {final}", file=sys.stderr)
    print(final)


def _cmd_caption(args):
    ckpt = train_mod.load_checkpoint(args.ckpt)
    model = ckpt.build_model()
    vocab = data.Vocabulary(ckpt.vocab_tokens)
    records = data.read_features(args.features)
    if args.image_id is not None:
        records = [r for r in records if r.image_id == args.image_id]
        if not records:
            raise ConfigMismatchError(f"image id {args.image_id} not in feature file")
    for rec in records:
        ranked = beam_decode(model, FeatureBatch.from_records([rec]), args.beam,
                             max_len=args.max_len)
        text = " ".join(vocab.decode(ranked[0][0]))
        print(f"{rec.image_id}\t{text}")


def _cmd_eval(args):
    ckpt = train_mod.load_checkpoint(args.ckpt)
    report = metrics.evaluate_run(ckpt, args.features, args.captions, args.beam)
    payload = metrics.report_to_json(report)
    if args.report:
        Path(args.report).write_text(payload + "\n", encoding="utf-8")
    print(payload)


def _cmd_nn(args):
    ckpt = train_mod.load_checkpoint(args.ckpt)
    records = data.read_features(args.features)
    reports, summary = analysis.nn_study(ckpt, records, sample_size=args.samples,
                                         k=args.k, seed=args.seed)
    if args.report:
        analysis.write_reports(args.report, reports)
    print(json.dumps(summary, sort_keys=True))


def build_parser():
    parser = argparse.ArgumentParser(prog="nicap",
                                     description="Desk-scale neural image captioning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build a vocabulary from a caption file")
    p.add_argument("--captions", required=True)
    p.add_argument("--min-count", type=int, default=1, dest="min_count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_vocab)

    p = sub.add_parser("synth", help="generate a synthetic micro-dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train", help="train a captioning model")
    p.add_argument("--arch", choices=ARCHS, required=True)
    p.add_argument("--lstm-layers", type=int, choices=(1, 2), default=1,
                   dest="lstm_layers")
    p.add_argument("--features", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4, dest="weight_decay")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attention-size", type=int, default=64, dest="attention_size")
    p.add_argument("--max-len", type=int, default=30, dest="max_len")
    p.add_argument("--checkpoint-every", type=int, default=1, dest="checkpoint_every")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("caption", help="generate captions for a feature file")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--max-len", type=int, default=30, dest="max_len")
    p.add_argument("--image-id", type=int, default=None, dest="image_id")
    p.set_defaults(func=_cmd_caption)

    p = sub.add_parser("eval", help="decode and score a run (one table row)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--beam", type=int, default=3)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("nn", help="nearest-neighbor generalizability study")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_nn)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "beam", 1) < 1:
        parser.error(f"--beam must be >= 1, got {args.beam}")
    if getattr(args, "n", 1) < 1:
        parser.error("--n must be >= 1")
    _echo_config(args)
    try:
        args.func(args)
    except FileFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ConfigMismatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
