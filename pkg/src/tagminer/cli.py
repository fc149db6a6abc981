"""Command-line surface: mine, eval, quality, latent, synth.

Exit codes: 0 success, 2 flag/usage errors, 3 input errors, 4 internal
invariant violations. All randomness flows from --seed (default 0).
Every substantive output file is accompanied by a .manifest.json sidecar
recording the resolved configuration, input digests, wall time, and
seed; the substantive outputs themselves are byte-reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .core import MinerConfig, as_fraction, describe_mode
from .evaluate import (
    DEFAULT_MIN_HOLDOUT_SUPPORT,
    ablation_summary,
    generalize,
    subset_ablation,
    write_ablation_csv,
    write_scatter_csv,
)
from .ingest import (
    InputError,
    assemble,
    load_embeddings,
    load_predictions,
    load_tags,
    split_records,
    write_embeddings,
    write_predictions,
    write_tags,
)
from .latent import (
    distance_stats,
    format_distance_table,
    format_neighborhood_table,
    neighborhood_stats,
)
from .miner import (
    audit_report,
    format_report_table,
    mine,
    report_from_jsonable,
    report_to_jsonable,
)
from .quality import quality_to_jsonable, score_modes, write_quality_csv
from .synth import (
    default_specs,
    description_embeddings,
    generate_records,
    image_embeddings,
    vocabulary_of,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INTERNAL = 4


def _fraction_flag(text: str):
    try:
        value = as_fraction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return value


def _fraction_list(text: str):
    return [_fraction_flag(part) for part in text.split(",") if part.strip()]


def _int_list(text: str):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _resolve_threads(value: int | None) -> int:
    if value is None:
        env = os.environ.get("PRIME_THREADS")
        value = int(env) if env else 1
    if value == 0:
        return os.cpu_count() or 1
    if value < 0:
        raise argparse.ArgumentTypeError("--threads must be >= 0")
    return value


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_manifest(out_path, subcommand, config, inputs, seed, started) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "tool_version": __version__,
        "wall_time": time.perf_counter() - started,
        "seed": seed,
    }
    _write_json(str(out_path) + ".manifest.json", manifest)


def _load_dataset(tags_path, preds_path, split, freq_threshold):
    records = load_tags(tags_path)
    parts = split_records(records)
    if split not in parts:
        raise InputError(f"no records with split {split!r}", tags_path)
    predictions = load_predictions(preds_path)
    return assemble(parts[split], predictions, freq_threshold)


def cmd_mine(args) -> int:
    started = time.perf_counter()
    config = MinerConfig(
        s=args.s,
        a=args.a,
        b_schedule=tuple(args.b),
        l=args.max_tags,
        freq_threshold=args.freq_threshold,
        strategy=args.strategy,
        greedy_beam_width=args.beam,
        seed=args.seed,
    )
    threads = _resolve_threads(args.threads)
    dataset = _load_dataset(args.tags, args.preds, args.split, config.freq_threshold)
    report = mine(dataset, config, threads=threads)
    violations = audit_report(report, dataset)
    if violations:
        for line in violations:
            print(f"audit violation: {line}", file=sys.stderr)
        return EXIT_INTERNAL
    _write_json(args.out, report_to_jsonable(report))
    _write_manifest(
        args.out,
        "mine",
        {**config.to_jsonable(), "threads": threads, "split": args.split},
        [args.tags, args.preds],
        args.seed,
        started,
    )
    sys.stdout.write(format_report_table(report))
    print(
        f"mined {len(report.modes)} modes in {report.stats.wall_time:.2f}s",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    started = time.perf_counter()
    with open(args.modes, "r", encoding="utf-8") as handle:
        report = report_from_jsonable(json.load(handle))
    freq = args.freq_threshold or report.config.freq_threshold
    holdout = _load_dataset(args.tags, args.preds, args.split, freq)
    records, summary = generalize(
        report,
        holdout,
        min_holdout_support=args.min_holdout_support,
        drop_thresholds=[float(t) for t in args.drop_thresholds],
    )
    summary["ablation"] = ablation_summary(
        report.modes, holdout, tag_count=args.ablation_tags
    )
    _write_json(args.out_summary, summary)
    inputs = [args.modes, args.tags, args.preds]
    resolved = {
        "min_holdout_support": args.min_holdout_support,
        "drop_thresholds": [str(t) for t in args.drop_thresholds],
        "ablation_tags": args.ablation_tags,
        "freq_threshold": freq,
        "split": args.split,
    }
    _write_manifest(args.out_summary, "eval", resolved, inputs, args.seed, started)
    if args.out_scatter:
        write_scatter_csv(records, args.out_scatter)
        _write_manifest(args.out_scatter, "eval", resolved, inputs, args.seed, started)
    if args.out_ablation:
        tables = [
            subset_ablation(m, holdout)
            for m in report.modes
            if len(m.tags) >= 2 and m.class_label in holdout.classes
        ]
        write_ablation_csv(tables, args.out_ablation)
        _write_manifest(args.out_ablation, "eval", resolved, inputs, args.seed, started)
    evaluated = summary["n_evaluated"]
    print(
        f"evaluated {evaluated}/{summary['n_modes']} modes on holdout",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_quality(args) -> int:
    started = time.perf_counter()
    with open(args.modes, "r", encoding="utf-8") as handle:
        report = report_from_jsonable(json.load(handle))
    freq = args.freq_threshold or report.config.freq_threshold
    dataset = _load_dataset(args.tags, args.preds, args.split, freq)
    images = load_embeddings(args.image_embeddings, fmt=args.emb_format)
    descriptions = load_embeddings(args.desc_embeddings, fmt=args.emb_format)
    quality = score_modes(
        report,
        images,
        descriptions,
        dataset,
        n_outside_per_mode=args.n_outside,
        seed=args.seed,
    )
    _write_json(args.out, quality_to_jsonable(quality))
    resolved = {
        "n_outside": args.n_outside,
        "freq_threshold": freq,
        "split": args.split,
        "emb_format": args.emb_format,
    }
    inputs = [args.modes, args.tags, args.preds, args.image_embeddings, args.desc_embeddings]
    _write_manifest(args.out, "quality", resolved, inputs, args.seed, started)
    if args.out_csv:
        write_quality_csv(quality, args.out_csv)
        _write_manifest(args.out_csv, "quality", resolved, inputs, args.seed, started)
    return EXIT_OK


def cmd_latent(args) -> int:
    started = time.perf_counter()
    records = load_tags(args.tags)
    embeddings = load_embeddings(args.embeddings, fmt=args.emb_format)
    distances = distance_stats(
        embeddings, records, args.d_list, n_pairs=args.n_pairs, seed=args.seed
    )
    neighborhoods = neighborhood_stats(
        embeddings,
        records,
        args.n_list,
        [float(a) for a in args.alpha_list],
        n_anchors=args.n_anchors,
        seed=args.seed,
    )
    payload = {
        "distance": {
            "n_pairs_requested": distances.n_pairs_requested,
            "seed": distances.seed,
            "rows": [
                {
                    "d": row.d,
                    "n_pairs": row.n_pairs,
                    "mean_distance": row.mean_distance,
                    "std_distance": row.std_distance,
                    "prob_exceeds_random": row.prob_exceeds_random,
                    "flag": row.flag,
                }
                for row in distances.rows
            ],
        },
        "neighborhood": {
            "n_anchors": neighborhoods.n_anchors,
            "n_skipped_empty": neighborhoods.n_skipped_empty,
            "seed": neighborhoods.seed,
            "rows": [
                {
                    "N": row.n_neighbors,
                    "alpha": row.alpha,
                    "mean_shared_tags_repr": row.mean_shared_tags_repr,
                }
                for row in neighborhoods.rows
            ],
            "semantic_rows": [
                {
                    "N": row.n_neighbors,
                    "mean_max_shared_tags": row.mean_max_shared_tags,
                    "mean_individually_shared": row.mean_individually_shared,
                }
                for row in neighborhoods.semantic_rows
            ],
        },
    }
    _write_json(args.out, payload)
    resolved = {
        "d_list": args.d_list,
        "n_pairs": args.n_pairs,
        "n_list": args.n_list,
        "alpha_list": [str(a) for a in args.alpha_list],
        "n_anchors": args.n_anchors,
        "emb_format": args.emb_format,
    }
    _write_manifest(
        args.out, "latent", resolved, [args.tags, args.embeddings], args.seed, started
    )
    sys.stdout.write(format_distance_table(distances))
    sys.stdout.write(format_neighborhood_table(neighborhoods))
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    specs = default_specs(
        n_classes=args.classes,
        plant_sizes=args.plant_sizes,
        n_images=args.images,
        n_tags=args.tags_per_class,
        seed=args.seed,
        n_holdout=args.holdout,
        p_base=args.p_base,
        p_fail=args.p_fail,
        planted_marginal=args.planted_marginal,
        noise_marginal=args.noise_marginal,
    )
    records, manifest = generate_records(specs, seed=args.seed)
    tags_path = out_dir / "tags.jsonl"
    preds_path = out_dir / "predictions.jsonl"
    truth_path = out_dir / "truth.json"
    write_tags(records, tags_path)
    write_predictions({rec.id: rec.correct for rec in records}, preds_path)
    _write_json(truth_path, manifest)
    outputs = [tags_path, preds_path, truth_path]
    if args.embed_dim:
        vectors = image_embeddings(records, args.embed_dim, args.embed_sigma, args.seed)
        img_path = out_dir / "image_embeddings.jsonl"
        write_embeddings(vectors, img_path, fmt="jsonl")
        vocab = vocabulary_of(records)
        tag_sets = {
            describe_mode(spec.class_label, sorted(spec.planted_tags)): sorted(
                spec.planted_tags
            )
            for spec in specs
        }
        desc_path = out_dir / "description_embeddings.jsonl"
        write_embeddings(
            description_embeddings(tag_sets, vocab, args.embed_dim),
            desc_path,
            fmt="jsonl",
        )
        outputs += [img_path, desc_path]
    resolved = {
        "classes": args.classes,
        "plant_sizes": args.plant_sizes,
        "images": args.images,
        "holdout": args.holdout,
        "tags_per_class": args.tags_per_class,
        "p_base": args.p_base,
        "p_fail": args.p_fail,
        "planted_marginal": args.planted_marginal,
        "noise_marginal": args.noise_marginal,
        "embed_dim": args.embed_dim,
        "embed_sigma": args.embed_sigma,
        "outputs": [p.name for p in outputs],
    }
    manifest_path = out_dir / "run"
    _write_manifest(manifest_path, "synth", resolved, outputs, args.seed, started)
    print(f"wrote {len(records)} records across {args.classes} classes", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tagminer",
        description="Mine and evaluate interpretable classifier failure modes from image tags.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_mine = sub.add_parser("mine", help="mine failure modes from tags + predictions")
    p_mine.add_argument("--tags", required=True)
    p_mine.add_argument("--preds", required=True)
    p_mine.add_argument("--out", required=True)
    p_mine.add_argument("--split", default="train", choices=["train", "holdout"])
    p_mine.add_argument("--s", type=int, default=30, help="minimum support")
    p_mine.add_argument(
        "--a", type=_fraction_flag, default="0.30",
        help="minimum accuracy drop (fraction like 0.30 or percent like 30%%)",
    )
    p_mine.add_argument(
        "--b", type=_fraction_list, default="0.10,0.05,0.025",
        help="comma list of minimality margins for sizes 2,3,4,...",
    )
    p_mine.add_argument("--max-tags", type=int, default=3, help="largest tag-set size")
    p_mine.add_argument("--freq-threshold", type=int, default=50)
    p_mine.add_argument("--strategy", default="exhaustive", choices=["exhaustive", "greedy"])
    p_mine.add_argument("--beam", type=int, default=5, help="greedy beam width")
    p_mine.add_argument("--seed", type=int, default=0)
    p_mine.add_argument("--threads", type=int, default=None,
                        help="worker processes; 0 = all cores (env PRIME_THREADS)")
    p_mine.set_defaults(func=cmd_mine)

    p_eval = sub.add_parser("eval", help="holdout generalization + subset ablation")
    p_eval.add_argument("--modes", required=True, help="mine report JSON")
    p_eval.add_argument("--tags", required=True, help="holdout tags file")
    p_eval.add_argument("--preds", required=True, help="holdout predictions file")
    p_eval.add_argument("--split", default="holdout", choices=["train", "holdout"])
    p_eval.add_argument("--out-summary", required=True)
    p_eval.add_argument("--out-scatter", default=None)
    p_eval.add_argument("--out-ablation", default=None)
    p_eval.add_argument(
        "--drop-thresholds", type=_fraction_list, default="0.25",
        help="comma list of holdout drop thresholds to summarize",
    )
    p_eval.add_argument(
        "--min-holdout-support", type=int, default=DEFAULT_MIN_HOLDOUT_SUPPORT
    )
    p_eval.add_argument("--ablation-tags", type=int, default=3)
    p_eval.add_argument("--freq-threshold", type=int, default=None,
                        help="holdout vocabulary threshold (default: from the report)")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_eval)

    p_quality = sub.add_parser("quality", help="description-quality metrics")
    p_quality.add_argument("--modes", required=True)
    p_quality.add_argument("--tags", required=True)
    p_quality.add_argument("--preds", required=True)
    p_quality.add_argument("--split", default="train", choices=["train", "holdout"])
    p_quality.add_argument("--image-embeddings", required=True)
    p_quality.add_argument("--desc-embeddings", required=True)
    p_quality.add_argument("--emb-format", default="jsonl", choices=["jsonl", "binary"])
    p_quality.add_argument("--n-outside", type=int, default=None,
                           help="outside sample size per mode (default: match group size)")
    p_quality.add_argument("--freq-threshold", type=int, default=None)
    p_quality.add_argument("--out", required=True)
    p_quality.add_argument("--out-csv", default=None)
    p_quality.add_argument("--seed", type=int, default=0)
    p_quality.set_defaults(func=cmd_quality)

    p_latent = sub.add_parser("latent", help="latent-vs-semantic space diagnostics")
    p_latent.add_argument("--tags", required=True)
    p_latent.add_argument("--embeddings", required=True)
    p_latent.add_argument("--emb-format", default="jsonl", choices=["jsonl", "binary"])
    p_latent.add_argument("--d-list", type=_int_list, default="0,1,3,5,7")
    p_latent.add_argument("--n-pairs", type=int, default=10000)
    p_latent.add_argument("--n-list", type=_int_list, default="50,100")
    p_latent.add_argument("--alpha-list", type=_fraction_list, default="0.6,0.7,0.8")
    p_latent.add_argument("--n-anchors", type=int, default=200)
    p_latent.add_argument("--out", required=True)
    p_latent.add_argument("--seed", type=int, default=0)
    p_latent.set_defaults(func=cmd_latent)

    p_synth = sub.add_parser("synth", help="generate a planted-mode synthetic dataset")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--classes", type=int, default=5)
    p_synth.add_argument("--plant-sizes", type=_int_list, default="1,2,3")
    p_synth.add_argument("--images", type=int, default=2000)
    p_synth.add_argument("--holdout", type=int, default=0)
    p_synth.add_argument("--tags-per-class", type=int, default=20)
    p_synth.add_argument("--p-base", type=float, default=0.95)
    p_synth.add_argument("--p-fail", type=float, default=0.0)
    p_synth.add_argument("--planted-marginal", type=float, default=0.33)
    p_synth.add_argument("--noise-marginal", type=float, default=0.30)
    p_synth.add_argument("--embed-dim", type=int, default=0,
                         help="also write synthetic embeddings of this dimension")
    p_synth.add_argument("--embed-sigma", type=float, default=0.1)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    # argparse stores defaults for list flags as strings; normalize them
    for name in ("b", "drop_thresholds", "alpha_list"):
        if hasattr(args, name) and isinstance(getattr(args, name), str):
            setattr(args, name, _fraction_list(getattr(args, name)))
    for name in ("d_list", "n_list", "plant_sizes"):
        if hasattr(args, name) and isinstance(getattr(args, name), str):
            setattr(args, name, _int_list(getattr(args, name)))
    try:
        return args.func(args)
    except (InputError, FileNotFoundError, KeyError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
