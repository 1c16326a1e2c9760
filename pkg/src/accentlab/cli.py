"""Command-line entry point for the full experiment lifecycle.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
All experiment state lives in files (configs, manifests, checkpoints,
reports), so every subcommand is resumable and re-running with the same
--out overwrites its outputs deterministically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import DataError, NumericError, UsageError

ERROR_PREFIX = "accentlab-error"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _manifest_pair(value: str) -> tuple[str, str]:
    """Parse a --manifest flag: either PATH or LABEL=PATH."""
    if "=" in value:
        label, path = value.split("=", 1)
        if not label or not path:
            raise argparse.ArgumentTypeError(f"bad manifest spec {value!r}")
        return label, path
    return "", value


def build_parser() -> _Parser:
    parser = _Parser(prog="accentlab",
                     description="Accent conversion and synthetic-accent "
                                 "ASR experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("toy-data", help="generate the synthetic toy-accent corpus")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--accents", type=int, default=3)
    p.add_argument("--speakers", type=int, default=4,
                   help="speakers per accent")
    p.add_argument("--utts", type=int, default=8, help="utterances per speaker")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("acm-train", help="train the accent conversion model")
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--manifest", action="append", required=True,
                   type=_manifest_pair, help="training manifest (repeatable)")
    p.add_argument("--annotations", default=None,
                   help="phone annotation file; defaults to phones.txt beside "
                        "the first manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("acm-convert", help="convert one utterance to a target accent")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--text", required=True, help="transcript of the utterance")
    p.add_argument("--target-accent", required=True)
    p.add_argument("--out", required=True, help="output WAV path")

    p = sub.add_parser("corpus-synth", help="convert a whole manifest to a "
                                            "target accent")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", action="append", required=True,
                   type=_manifest_pair)
    p.add_argument("--annotations", default=None)
    p.add_argument("--target-accent", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("asr-train", help="train the transducer recognizer")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", action="append", required=True,
                   type=_manifest_pair,
                   help="real=PATH, synthetic=PATH, val=PATH")
    p.add_argument("--mix", type=float, default=0.8,
                   help="real-data fraction of each training draw")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("asr-eval", help="evaluate WER grouped by accent")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", action="append", required=True,
                   type=_manifest_pair, help="GROUP=PATH (repeatable)")
    p.add_argument("--out", default=None, help="directory for report files")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("repr-export", help="extract accent representations "
                                           "and purity report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", action="append", required=True,
                   type=_manifest_pair)
    p.add_argument("--out", required=True)
    p.add_argument("--knn", type=int, default=5)

    p = sub.add_parser("repr-plot", help="2-D projection plot of exported "
                                         "representations")
    p.add_argument("--embeddings", required=True,
                   help="TSV written by repr-export")
    p.add_argument("--method", choices=("tsne", "pca"), default="tsne")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output PNG path")

    p = sub.add_parser("selfcheck", help="run oracle suites: CTC/transducer "
                                         "enumeration and gradient checks")
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_manifests(pairs, default_label=""):
    from .manifest import load_manifest
    out = []
    for label, path in pairs:
        out.append((label or default_label, path, load_manifest(path)))
    return out


def _annotations_for(path_flag, first_manifest_path, inventory):
    from .phones import load_annotations
    path = path_flag
    if path is None:
        candidate = os.path.join(os.path.dirname(first_manifest_path), "phones.txt")
        path = candidate if os.path.exists(candidate) else None
    if path is None:
        return {}
    return load_annotations(path, inventory)


def _cmd_toy_data(args) -> int:
    from .toydata import make_toy_corpus
    entries = make_toy_corpus(args.accents, args.speakers, args.utts,
                              np.random.default_rng(args.seed), args.out)
    print(f"wrote {len(entries)} utterances to {args.out}")
    return 0


def _cmd_acm_train(args) -> int:
    from .acm_train import train_acm
    from .config import load_acm_experiment
    from .phones import default_inventory

    experiment = load_acm_experiment(args.config)
    manifests = _load_manifests(args.manifest, default_label="train")
    entries = [e for _, _, group in manifests for e in group]
    base_dir = os.path.dirname(manifests[0][1])
    inventory = default_inventory()
    annotations = _annotations_for(args.annotations, manifests[0][1], inventory)
    result = train_acm(entries, base_dir, annotations, experiment.model,
                       experiment.loss_weights, experiment.schedule,
                       args.seed, args.out, inventory=inventory,
                       accent_weights=experiment.accent_weights)
    print(f"final checkpoint: {result.checkpoint_paths[-1]}")
    print(f"training log: {result.log_path}")
    return 0


def _cmd_acm_convert(args) -> int:
    from .acm_train import convert, load_acm
    from .audio import load_clip, write_wav

    models, meta = load_acm(args.checkpoint)
    accent_to_id = meta["accent_to_id"]
    if args.target_accent not in accent_to_id:
        raise DataError(f"accent {args.target_accent!r} unknown "
                        f"(checkpoint has {sorted(accent_to_id)})")
    clip = load_clip(args.wav)
    out = convert(clip, accent_to_id[args.target_accent], models, args.text)
    write_wav(args.out, out)
    print(f"wrote {args.out}")
    return 0


def _cmd_corpus_synth(args) -> int:
    from .acm_train import synthesize_corpus
    from .phones import default_inventory

    manifests = _load_manifests(args.manifest)
    entries = [e for _, _, group in manifests for e in group]
    base_dir = os.path.dirname(manifests[0][1])
    inventory = default_inventory()
    annotations = _annotations_for(args.annotations, manifests[0][1], inventory)
    outputs = synthesize_corpus(entries, base_dir, annotations,
                                args.target_accent, args.checkpoint, args.out,
                                inventory=inventory, log=print)
    print(f"synthesized {len(outputs)} utterances into {args.out}")
    return 0


def _cmd_asr_train(args) -> int:
    from .asr import train_asr
    from .config import load_asr_experiment
    from .manifest import MixPolicy

    experiment = load_asr_experiment(args.config)
    if not 0.0 <= args.mix <= 1.0:
        raise UsageError("--mix must lie in [0, 1]")
    groups = {label: (path, entries)
              for label, path, entries in _load_manifests(args.manifest,
                                                          default_label="real")}
    if "real" not in groups:
        raise UsageError("asr-train requires a real=PATH manifest")
    real_path, real = groups["real"]
    synth_path, synth = groups.get("synthetic", (None, None))
    val_path, val = groups.get("val", (None, None))
    policy = MixPolicy(args.mix, 1.0 - args.mix)
    result = train_asr(real, os.path.dirname(real_path), synth,
                       os.path.dirname(synth_path) if synth_path else None,
                       policy, experiment.asr, args.seed, args.out,
                       val=val, val_dir=os.path.dirname(val_path) if val_path else None)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"training log: {result.log_path}")
    return 0


def _cmd_asr_eval(args) -> int:
    from .asr import evaluate, load_asr

    model, vocab = load_asr(args.checkpoint)
    groups = {}
    for i, (label, path, entries) in enumerate(_load_manifests(args.manifest)):
        groups[label or f"group{i}"] = (entries, os.path.dirname(path))
    report = evaluate(model, vocab, groups, workers=args.workers)
    print(report.to_table())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "wer_report.json"), "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        with open(os.path.join(args.out, "wer_report.txt"), "w") as fh:
            fh.write(report.to_table() + "\n")
        print(f"reports written to {args.out}")
    return 0


def _cmd_repr_export(args) -> int:
    from .acm_train import load_acm
    from .repr_analysis import extract, purity_report, save_embeddings

    models, _ = load_acm(args.checkpoint)
    manifests = _load_manifests(args.manifest)
    entries = [e for _, _, group in manifests for e in group]
    base_dir = os.path.dirname(manifests[0][1])
    emb = extract(models, entries, base_dir, log=print)
    os.makedirs(args.out, exist_ok=True)
    save_embeddings(os.path.join(args.out, "embeddings.tsv"), emb)
    report = purity_report(emb, k=args.knn)
    with open(os.path.join(args.out, "purity.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    print(f"accent purity:  {report['accent_purity']:.3f}")
    print(f"speaker purity: {report['speaker_purity']:.3f}")
    print(f"embeddings written to {args.out}")
    return 0


def _cmd_repr_plot(args) -> int:
    from .repr_analysis import load_embeddings, plot_embeddings, project_2d

    emb, _ = load_embeddings(args.embeddings)
    coords = project_2d(emb, method=args.method, seed=args.seed)
    plot_embeddings(args.out, emb, coords,
                    title=f"accent representations ({args.method})")
    print(f"wrote {args.out}")
    return 0


def _cmd_selfcheck(args) -> int:
    from .oracles import run_selfcheck

    result = run_selfcheck(seed=args.seed, log=print)
    return 0 if result.ok else 3


_COMMANDS = {
    "toy-data": _cmd_toy_data,
    "acm-train": _cmd_acm_train,
    "acm-convert": _cmd_acm_convert,
    "corpus-synth": _cmd_corpus_synth,
    "asr-train": _cmd_asr_train,
    "asr-eval": _cmd_asr_eval,
    "repr-export": _cmd_repr_export,
    "repr-plot": _cmd_repr_plot,
    "selfcheck": _cmd_selfcheck,
}


def run(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{ERROR_PREFIX}:[usage] {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return 0 if exc.code in (0, None) else 1
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"{ERROR_PREFIX}:[usage] {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"{ERROR_PREFIX}:[data] {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"{ERROR_PREFIX}:[numeric] {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
