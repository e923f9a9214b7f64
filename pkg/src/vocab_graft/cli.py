"""Command-line interface: one binary, subcommands over all operations.

Exit codes: 0 success, 1 usage error, 2 data error. Errors go to stderr as
single-line JSON; every successful run prints a machine-readable JSON result
block on stdout. All subcommands are deterministic given identical inputs
and seeds.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .embeddings import (
    InitScheme,
    SplitEmbeddings,
    init_new_rows,
    load_embeddings,
    merge,
    save_embeddings,
    split,
)
from .emoji import EmojiSet, load_emoji_set
from .errors import VocabGraftError
from .masking import MaskingConfig, mask_sequence, masking_stats
from .model_store import (
    PieceKind,
    TokenizerModel,
    import_spm,
    load_canonical,
    save_canonical,
)
from .normalizer import NormalizerConfig, normalize
from .pipeline import (
    DEFAULT_CHUNK_LIMIT,
    chunk_records,
    chunks_manifest,
    iter_corpus,
    oov_report,
    save_chunks,
    segmentation_diff,
    split_chunks,
)
from .schedules import ScheduleConfig, default_layer_stack, schedule_rows
from .tokenizer import Tokenizer, decode as decode_ids
from .transfer import THAI_BLOCK, TransferPolicy, transfer

EMOJI_ENV = "VOCAB_GRAFT_EMOJI_DATA"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise UsageError(message)


def _emit(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True, ensure_ascii=False))


def _parse_block(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    if not sep:
        raise UsageError(f"expected a range like 0E00..0E7F, got {text!r}")
    try:
        return int(lo, 16), int(hi, 16)
    except ValueError:
        raise UsageError(f"malformed hex range {text!r}") from None


def _parse_normalizer(text: str | None, base: NormalizerConfig) -> NormalizerConfig:
    if not text:
        return base
    kwargs = {
        "max_char_repeat": base.max_char_repeat,
        "preserve_space": base.preserve_space,
        "lowercase": base.lowercase,
    }
    for item in text.split(","):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in kwargs:
            raise UsageError(f"bad --normalizer entry {item!r}")
        if key == "max_char_repeat":
            try:
                kwargs[key] = int(value)
            except ValueError:
                raise UsageError(f"max_char_repeat must be an integer, got {value!r}") from None
        else:
            kwargs[key] = value.strip().lower() in ("1", "true", "yes")
    return NormalizerConfig(**kwargs)


def _load_model(path: str) -> TokenizerModel:
    return load_canonical(path)


def _emoji_from_args(args) -> EmojiSet | None:
    paths = list(args.emoji or [])
    if not paths:
        env = os.environ.get(EMOJI_ENV)
        if env:
            paths = [env]
    if not paths:
        return None
    sequences: frozenset[str] = frozenset()
    versions = []
    for p in paths:
        es = load_emoji_set(p)
        sequences |= es.sequences
        versions.append(es.source_version)
    return EmojiSet(sequences=sequences, source_version="+".join(versions))


def _corpus_specs(specs: list[str]) -> dict[str, Path]:
    out: dict[str, Path] = {}
    for spec in specs:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).stem, spec
        if name in out:
            raise UsageError(f"duplicate corpus name {name!r}")
        out[name] = Path(path)
    return out


# --- subcommand implementations ---------------------------------------------


def _cmd_import_spm(args) -> dict:
    overrides = {}
    for item in args.special or []:
        key, sep, surface = item.partition("=")
        if not sep:
            raise UsageError(f"bad --special entry {item!r}, expected key=surface")
        overrides[key] = surface
    model = import_spm(args.input, special_surfaces=overrides or None,
                       normalizer=_parse_normalizer(args.normalizer, NormalizerConfig()))
    save_canonical(model, args.out, allow_positive_scores=args.allow_positive_scores)
    return {"result": "ok", "pieces": len(model), "out": str(args.out),
            "sha256": model.checksum()}


def _cmd_transfer(args) -> dict:
    recipient = _load_model(args.recipient)
    donor = _load_model(args.donor)
    emoji = _emoji_from_args(args)
    blocks = tuple(_parse_block(b) for b in args.exclude_block) if args.exclude_block else (THAI_BLOCK,)
    inject = not args.no_emoji
    if inject and emoji is None:
        raise UsageError(f"emoji injection needs --emoji, {EMOJI_ENV}, or --no-emoji")
    policy = TransferPolicy(excluded_blocks=blocks, copy_scores=not args.no_scores,
                            inject_emoji=inject)
    merged, report = transfer(recipient, donor, policy, emoji)
    save_canonical(merged, args.out, allow_positive_scores=args.allow_positive_scores)
    payload = json.loads(report.to_json())
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    return {"result": "ok", "out": str(args.out), "report": payload,
            "sha256": merged.checksum()}


def _cmd_tokenize(args) -> dict:
    model = _load_model(args.model)
    emoji = _emoji_from_args(args)
    cfg = _parse_normalizer(args.normalizer, model.normalizer)
    tok = Tokenizer(model, emoji)
    if args.text is not None:
        records = [args.text]
    else:
        records = list(iter_corpus(args.corpus))
    results = []
    for record in records:
        enc = tok.encode(normalize(record, cfg))
        results.append({
            "ids": [int(i) for i in enc.ids],
            "surfaces": list(enc.surfaces),
            "offsets": [list(o) for o in enc.offsets],
            "unk_count": enc.unk_count,
        })
    return {"result": "ok", "encodings": results}


def _cmd_decode(args) -> dict:
    model = _load_model(args.model)
    ids = [int(x) for x in args.ids.split(",") if x.strip() != ""]
    try:
        text = decode_ids(model, ids)
    except ValueError as exc:
        raise VocabGraftError(str(exc)) from None
    return {"result": "ok", "text": text}


def _cmd_oov(args) -> dict:
    model_a = _load_model(args.model_a)
    model_b = _load_model(args.model_b)
    emoji = _emoji_from_args(args)
    cfg = _parse_normalizer(args.normalizer, model_a.normalizer)
    corpora = {name: iter_corpus(path) for name, path in _corpus_specs(args.corpus).items()}
    report_a, report_b = oov_report(corpora, model_a, model_b, cfg, emoji, threads=args.threads)
    if not args.quiet:
        for name in report_a.per_dataset:
            ea, eb = report_a.per_dataset[name], report_b.per_dataset[name]
            print(
                f"{name}: {ea.unk_count} ({ea.render_percentage()}) -> "
                f"{eb.unk_count} ({eb.render_percentage()})",
                file=sys.stderr,
            )
    return {"result": "ok", "model_a": report_a.to_dict(), "model_b": report_b.to_dict()}


def _cmd_diff(args) -> dict:
    model_a = _load_model(args.model_a)
    model_b = _load_model(args.model_b)
    emoji = _emoji_from_args(args)
    cfg = _parse_normalizer(args.normalizer, model_a.normalizer)
    records = iter_corpus(args.corpus)
    out_fh = open(args.out, "w", encoding="utf-8") if args.out else None
    count = 0
    try:
        for rec in segmentation_diff(records, model_a, model_b, cfg, emoji):
            line = json.dumps(
                {"record_index": rec.record_index, "tokens_a": list(rec.tokens_a),
                 "tokens_b": list(rec.tokens_b)},
                sort_keys=True, ensure_ascii=False,
            )
            if out_fh:
                out_fh.write(line + "\n")
            elif not args.quiet:
                print(line, file=sys.stderr)
            count += 1
    finally:
        if out_fh:
            out_fh.close()
    return {"result": "ok", "differing_records": count}


def _cmd_chunk(args) -> dict:
    model = _load_model(args.model)
    emoji = _emoji_from_args(args)
    cfg = _parse_normalizer(args.normalizer, model.normalizer)
    name, path = next(iter(_corpus_specs([args.corpus]).items()))
    dataset = chunk_records(
        iter_corpus(path), model, cfg=cfg, emoji_set=emoji, limit=args.limit,
        pack=not args.no_pack, threads=args.threads,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    if args.split:
        fractions = tuple(float(x) for x in args.split.split(","))
        if len(fractions) != 3:
            raise UsageError("--split expects three comma-separated numbers")
        parts = split_chunks(dataset, fractions, args.seed)
    else:
        parts = {name: dataset}
    for part_name, part in parts.items():
        stem = name if not args.split else f"{name}.{part_name}"
        chunk_path = out_dir / f"{stem}.chunks"
        save_chunks(part, chunk_path)
        manifest = chunks_manifest(part, model)
        manifest_path = out_dir / f"{stem}.manifest.json"
        manifest_path.write_text(json.dumps(manifest, sort_keys=True) + "\n", encoding="utf-8")
        written[part_name if args.split else name] = {
            "chunks": str(chunk_path), "manifest": str(manifest_path),
            "chunk_count": len(part.chunks),
        }
    return {
        "result": "ok",
        "record_count": dataset.record_count,
        "chunk_count": len(dataset.chunks),
        "total_tokens": dataset.total_tokens,
        "discarded_count": dataset.discarded_count,
        "empty_count": dataset.empty_count,
        "outputs": written,
    }


def _cmd_mask_audit(args) -> dict:
    lo, sep, hi = args.vocab_range.partition(":")
    if not sep:
        raise UsageError("--vocab-range expects lo:hi")
    cfg = MaskingConfig(
        mask_id=args.mask_id,
        unk_id=args.unk_id,
        maskable_vocab_range=(int(lo), int(hi)),
        mask_ratio=args.ratio,
        p_mask=args.p_mask,
        p_random=args.p_random,
        p_keep=args.p_keep,
        seed=args.seed,
    )
    rng_lo, rng_hi = cfg.maskable_vocab_range
    span = rng_hi - rng_lo
    batches = []
    for epoch in range(args.epochs):
        for index in range(args.sequences):
            ids = rng_lo + (np.arange(args.length, dtype=np.int64) + index) % span
            batches.append(mask_sequence(ids, cfg, epoch, index))
    stats = masking_stats(batches, mask_id=cfg.mask_id)
    return {
        "result": "ok",
        "observed_ratio": stats.observed_ratio,
        "observed_p_mask": stats.observed_p_mask,
        "observed_p_random": stats.observed_p_random,
        "observed_p_keep": stats.observed_p_keep,
        "total_positions": stats.total_positions,
        "total_selected": stats.total_selected,
    }


def _schedule_config_from_args(args) -> ScheduleConfig:
    resets = tuple(int(x) for x in args.reset.split(",") if x) if args.reset else ()
    return ScheduleConfig(
        peak_lr=args.peak_lr,
        decay_factor=args.decay_factor,
        warmup_steps=args.warmup_steps,
        max_steps=args.max_steps,
        unfreeze_interval=args.unfreeze_interval,
        resets=resets,
        discriminative_enabled=not args.no_discriminative,
        scheduler_steps_per_update=args.steps_per_update,
    )


def _cmd_schedule_dump(args) -> dict:
    cfg = _schedule_config_from_args(args)
    stack = default_layer_stack()
    rows = schedule_rows(cfg, stack, until=args.until, every=args.every)
    if args.format == "csv":
        out = args.out or "-"
        fh = sys.stdout if out == "-" else open(out, "w", encoding="utf-8", newline="")
        try:
            writer = csv.writer(fh)
            writer.writerow(["step", "layer", "lr", "frozen"])
            count = 0
            for step, layer, lr, frozen in rows:
                writer.writerow([step, layer, repr(lr), int(frozen)])
                count += 1
        finally:
            if fh is not sys.stdout:
                fh.close()
        return {"result": "ok", "rows": count, "out": out}
    payload = [
        {"step": step, "layer": layer, "lr": lr, "frozen": frozen}
        for step, layer, lr, frozen in rows
    ]
    if args.out and args.out != "-":
        Path(args.out).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")
        return {"result": "ok", "rows": len(payload), "out": args.out}
    return {"result": "ok", "rows": payload}


def _cmd_split_embeddings(args) -> dict:
    matrix = load_embeddings(args.input)
    try:
        parts = split(matrix, args.boundary)
    except ValueError as exc:
        raise VocabGraftError(str(exc)) from None
    save_embeddings(parts.old_table, args.out_old)
    save_embeddings(parts.new_table, args.out_new)
    return {"result": "ok", "old_rows": parts.old_table.shape[0],
            "new_rows": parts.new_table.shape[0], "width": parts.width}


def _cmd_merge_embeddings(args) -> dict:
    old = load_embeddings(args.old)
    new = load_embeddings(args.new)
    try:
        merged = merge(SplitEmbeddings(old_table=old, new_table=new, boundary_id=old.shape[0]))
    except ValueError as exc:
        raise VocabGraftError(str(exc)) from None
    save_embeddings(merged, args.out)
    return {"result": "ok", "rows": merged.shape[0], "width": merged.shape[1],
            "out": str(args.out)}


def _cmd_init_embeddings(args) -> dict:
    old = load_embeddings(args.old)
    if args.new:
        new = load_embeddings(args.new)
        if new.shape[1] != old.shape[1]:
            raise VocabGraftError("old/new width mismatch")
        rows = new.shape[0]
    elif args.rows is not None:
        rows = args.rows
    else:
        raise UsageError("init-embeddings needs --new (shape template) or --rows")
    scheme = InitScheme.ZERO if args.scheme == "zero" else InitScheme.NORMAL_FROM_OLD_STATS
    parts = SplitEmbeddings(
        old_table=old,
        new_table=np.zeros((rows, old.shape[1]), dtype=old.dtype),
        boundary_id=old.shape[0],
    )
    initialized = init_new_rows(parts, seed=args.seed, scheme=scheme)
    save_embeddings(initialized.new_table, args.out)
    return {"result": "ok", "rows": rows, "width": old.shape[1],
            "scheme": scheme.value, "seed": args.seed, "out": str(args.out)}


def _cmd_vocab_report(args) -> dict:
    model = _load_model(args.model)
    counts = {kind.value: 0 for kind in PieceKind}
    for piece in model.pieces:
        counts[piece.kind.value] += 1
    return {
        "result": "ok",
        "pieces": len(model),
        "counts": counts,
        "specials": model.specials.as_dict(),
        "normalizer": {
            "max_char_repeat": model.normalizer.max_char_repeat,
            "preserve_space": model.normalizer.preserve_space,
            "lowercase": model.normalizer.lowercase,
        },
        "has_positive_scores": model.has_positive_scores,
        "sha256": model.checksum(),
    }


# --- parser wiring -----------------------------------------------------------


def _add_common(sub, *, emoji=False, normalizer=False):
    if emoji:
        sub.add_argument("--emoji", action="append", metavar="FILE",
                         help=f"emoji data file(s); defaults to ${EMOJI_ENV}")
    if normalizer:
        sub.add_argument("--normalizer", metavar="K=V[,K=V]",
                         help="override normalizer config (max_char_repeat, preserve_space, lowercase)")


def build_parser() -> _Parser:
    parser = _Parser(prog="vocab-graft", description=__doc__)
    parser.add_argument("--version", action="version", version=f"vocab-graft {__version__}")
    parser.add_argument("--seed", type=int, default=0, help="seed for seeded operations")
    parser.add_argument("--threads", type=int, default=1, help="worker threads for corpus operations")
    parser.add_argument("--quiet", action="store_true", help="suppress human-readable stderr output")

    # same globals accepted after the subcommand; SUPPRESS keeps the subparser
    # from clobbering a value already parsed at the top level
    globals_parent = argparse.ArgumentParser(add_help=False)
    globals_parent.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    globals_parent.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    globals_parent.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    subs = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def add_parser(name, **kwargs):
        return subs.add_parser(name, parents=[globals_parent], **kwargs)

    p = add_parser("import-spm", help="import a binary SentencePiece model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--special", action="append", metavar="KEY=SURFACE",
                   help="override a special-token surface (unk/bos/eos/pad/mask/space)")
    p.add_argument("--allow-positive-scores", action="store_true",
                   help="permit saving a model that carries scores > 0")
    _add_common(p, normalizer=True)
    p.set_defaults(fn=_cmd_import_spm)

    p = add_parser("transfer", help="graft donor vocabulary into a recipient model")
    p.add_argument("--recipient", required=True)
    p.add_argument("--donor", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the transfer report JSON here")
    p.add_argument("--exclude-block", action="append", metavar="LO..HI",
                   help="hex scalar range to exclude (default 0E00..0E7F)")
    p.add_argument("--no-emoji", action="store_true", help="disable emoji injection")
    p.add_argument("--no-scores", action="store_true",
                   help="do not copy donor scores; use the recipient's minimum instead")
    p.add_argument("--allow-positive-scores", action="store_true",
                   help="permit saving a model that carries scores > 0")
    _add_common(p, emoji=True)
    p.set_defaults(fn=_cmd_transfer)

    p = add_parser("tokenize", help="encode text or a corpus file")
    p.add_argument("--model", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--text")
    group.add_argument("--corpus")
    _add_common(p, emoji=True, normalizer=True)
    p.set_defaults(fn=_cmd_tokenize)

    p = add_parser("decode", help="decode a comma-separated id list")
    p.add_argument("--model", required=True)
    p.add_argument("--ids", required=True)
    p.set_defaults(fn=_cmd_decode)

    p = add_parser("oov", help="unknown-token report for two models over corpora")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--corpus", action="append", required=True, metavar="NAME=PATH")
    _add_common(p, emoji=True, normalizer=True)
    p.set_defaults(fn=_cmd_oov)

    p = add_parser("diff", help="records segmented differently by two models")
    p.add_argument("--model-a", required=True)
    p.add_argument("--model-b", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", help="write differing records as JSON lines")
    _add_common(p, emoji=True, normalizer=True)
    p.set_defaults(fn=_cmd_diff)

    p = add_parser("chunk", help="pack a corpus into token-budget chunks")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True, metavar="[NAME=]PATH")
    p.add_argument("--limit", type=int, default=DEFAULT_CHUNK_LIMIT)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-pack", action="store_true", help="one record per chunk")
    p.add_argument("--split", metavar="A,B,C", help="seeded train/valid/test split fractions")
    _add_common(p, emoji=True, normalizer=True)
    p.set_defaults(fn=_cmd_chunk)

    p = add_parser("mask-audit", help="empirical masking statistics as JSON")
    p.add_argument("--length", type=int, default=100)
    p.add_argument("--sequences", type=int, default=1000)
    p.add_argument("--epochs", type=int, default=1)
    p.add_argument("--ratio", type=float, default=0.15)
    p.add_argument("--p-mask", type=float, default=0.80)
    p.add_argument("--p-random", type=float, default=0.10)
    p.add_argument("--p-keep", type=float, default=0.10)
    p.add_argument("--mask-id", type=int, default=4)
    p.add_argument("--unk-id", type=int, default=0)
    p.add_argument("--vocab-range", default="6:1000", metavar="LO:HI")
    p.set_defaults(fn=_cmd_mask_audit)

    p = add_parser("schedule-dump", help="emit (step, layer, lr, frozen) rows")
    p.add_argument("--until", type=int, required=True)
    p.add_argument("--every", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="output file; '-' or omitted = stdout")
    p.add_argument("--peak-lr", type=float, default=3e-4)
    p.add_argument("--decay-factor", type=float, default=2.6)
    p.add_argument("--warmup-steps", type=int, default=24_000)
    p.add_argument("--max-steps", type=int, default=500_000)
    p.add_argument("--unfreeze-interval", type=int, default=1_000)
    p.add_argument("--reset", metavar="S1,S2,...", help="scheduler reset steps")
    p.add_argument("--no-discriminative", action="store_true")
    p.add_argument("--steps-per-update", type=int, default=1)
    p.set_defaults(fn=_cmd_schedule_dump)

    p = add_parser("split-embeddings", help="split an embedding matrix at a boundary id")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--boundary", type=int, required=True)
    p.add_argument("--out-old", required=True)
    p.add_argument("--out-new", required=True)
    p.set_defaults(fn=_cmd_split_embeddings)

    p = add_parser("merge-embeddings", help="concatenate old/new tables back into one matrix")
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_merge_embeddings)

    p = add_parser("init-embeddings", help="draw new-table rows deterministically")
    p.add_argument("--old", required=True)
    p.add_argument("--new", help="existing new-table file used as a shape template")
    p.add_argument("--rows", type=int, help="row count when no --new is given")
    p.add_argument("--scheme", choices=("normal", "zero"), default="normal")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_init_embeddings)

    p = add_parser("vocab-report", help="summarize a canonical model file")
    p.add_argument("--model", required=True)
    p.set_defaults(fn=_cmd_vocab_report)

    return parser


def run(argv: list[str] | None = None) -> int:
    """Parse `argv` and execute; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required (see --help)")
        result = args.fn(args)
    except UsageError as exc:
        print(json.dumps({"error": str(exc), "kind": "usage"}), file=sys.stderr)
        return 1
    except (VocabGraftError, OSError, ValueError) as exc:
        payload = {"error": str(exc), "kind": "data"}
        location = getattr(exc, "location", None)
        if location:
            payload["location"] = location
        print(json.dumps(payload), file=sys.stderr)
        return 2
    _emit(result)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
