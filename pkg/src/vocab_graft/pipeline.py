"""Corpus streaming: normalize -> encode -> pack into token-budget chunks,
plus OOV reports and segmentation diffs between two models.

Records are never split: one longer than the chunk limit is discarded and
counted; otherwise it joins the current chunk when it fits, else opens a new
chunk (greedy packing in input order). Chunks serialize to a small binary
format with a JSON manifest sidecar.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

import numpy as np

from . import _kernels
from .emoji import EmojiSet
from .errors import CorpusError, VocabGraftError
from .model_store import TokenizerModel
from .normalizer import NormalizerConfig, normalize
from .tokenizer import _bounded_map, _cached_tokenizer, _guarded, iter_encodings

CHUNKS_MAGIC = b"VGCH"
CHUNKS_VERSION = 1
_CHUNKS_HEADER = struct.Struct("<4sII")

DEFAULT_CHUNK_LIMIT = 416

# Below this percentage the human-readable report prints "~0%"; exact values
# always live in the JSON output.
APPROX_ZERO_THRESHOLD = 0.005e-2


def iter_corpus(path: str | Path) -> Iterator[str]:
    """Yield text records from a UTF-8 file: one per line, or JSON-lines with
    a `text` field when the first byte is `{`."""
    path = Path(path)
    with open(path, "rb") as probe:
        head = probe.read(4)
    if head.startswith(b"\xef\xbb\xbf"):  # tolerate a BOM
        head = head[3:]
    is_jsonl = head.startswith(b"{")
    with open(path, encoding="utf-8-sig", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.endswith("\r"):  # CRLF residue
                line = line[:-1]
            if not is_jsonl:
                yield line
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"bad JSON record: {exc}", location=f"{path}:{lineno}") from None
            if not isinstance(obj, dict) or "text" not in obj:
                raise CorpusError("JSON record lacks a 'text' field", location=f"{path}:{lineno}")
            yield str(obj["text"])


@dataclass
class ChunkedDataset:
    """Token-id chunks with provenance back to input record indices."""

    chunks: list[np.ndarray]
    chunk_limit: int
    discarded_count: int
    empty_count: int
    source_spans: list[tuple[int, ...]]
    record_count: int

    @property
    def total_tokens(self) -> int:
        return sum(len(c) for c in self.chunks)


def chunk_records(
    records: Iterable[str],
    model: TokenizerModel,
    *,
    cfg: NormalizerConfig | None = None,
    emoji_set: EmojiSet | None = None,
    limit: int = DEFAULT_CHUNK_LIMIT,
    pack: bool = True,
    threads: int = 1,
) -> ChunkedDataset:
    """Normalize + encode every record and pack the results into chunks.

    Records whose encoding exceeds `limit` tokens are discarded and counted;
    records that encode to zero tokens are counted separately (they carry
    nothing to pack). With pack=False every surviving record becomes its own
    chunk.
    """
    if limit < 1:
        raise ValueError("chunk limit must be >= 1")
    encoded: list[np.ndarray] = []
    lengths: list[int] = []
    for enc in iter_encodings(model, records, emoji_set=emoji_set, cfg=cfg, threads=threads):
        encoded.append(enc.ids)
        lengths.append(len(enc.ids))

    length_arr = np.asarray(lengths, dtype=np.int64)
    assignment = np.empty(len(length_arr), dtype=np.int64)
    if pack:
        n_chunks, discarded, empty = _kernels.greedy_pack(length_arr, limit, assignment)
    else:
        n_chunks = discarded = empty = 0
        for i, length in enumerate(lengths):
            if length > limit:
                assignment[i] = -1
                discarded += 1
            elif length == 0:
                assignment[i] = -2
                empty += 1
            else:
                assignment[i] = n_chunks
                n_chunks += 1

    parts: list[list[np.ndarray]] = [[] for _ in range(n_chunks)]
    spans: list[list[int]] = [[] for _ in range(n_chunks)]
    for record_index, chunk_id in enumerate(assignment.tolist()):
        if chunk_id < 0:
            continue
        parts[chunk_id].append(encoded[record_index])
        spans[chunk_id].append(record_index)
    chunks = [
        np.concatenate(p).astype(np.uint32) if len(p) > 1 else p[0].astype(np.uint32)
        for p in parts
    ]
    return ChunkedDataset(
        chunks=chunks,
        chunk_limit=limit,
        discarded_count=int(discarded),
        empty_count=int(empty),
        source_spans=[tuple(s) for s in spans],
        record_count=len(lengths),
    )


def save_chunks(dataset: ChunkedDataset, path: str | Path) -> None:
    """Write chunks as `magic, version, u32 count, then per chunk u32 length + u32 ids`."""
    with open(path, "wb") as fh:
        fh.write(_CHUNKS_HEADER.pack(CHUNKS_MAGIC, CHUNKS_VERSION, len(dataset.chunks)))
        for chunk in dataset.chunks:
            fh.write(struct.pack("<I", len(chunk)))
            fh.write(np.ascontiguousarray(chunk, dtype="<u4").tobytes())


def load_chunks(path: str | Path) -> list[np.ndarray]:
    """Read back the token-id chunks written by `save_chunks`."""
    data = Path(path).read_bytes()
    if len(data) < _CHUNKS_HEADER.size:
        raise VocabGraftError("chunks file too short for header", location=str(path))
    magic, version, count = _CHUNKS_HEADER.unpack_from(data)
    if magic != CHUNKS_MAGIC:
        raise VocabGraftError(f"bad magic {magic!r}", location=str(path))
    if version != CHUNKS_VERSION:
        raise VocabGraftError(f"unsupported version {version}", location=str(path))
    chunks = []
    pos = _CHUNKS_HEADER.size
    for i in range(count):
        if pos + 4 > len(data):
            raise VocabGraftError(f"truncated at chunk {i}", location=str(path))
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        end = pos + 4 * length
        if end > len(data):
            raise VocabGraftError(f"truncated at chunk {i}", location=str(path))
        chunks.append(np.frombuffer(data, dtype="<u4", count=length, offset=pos).copy())
        pos = end
    if pos != len(data):
        raise VocabGraftError("trailing bytes after last chunk", location=str(path))
    return chunks


def chunks_manifest(dataset: ChunkedDataset, model: TokenizerModel) -> dict:
    return {
        "format": "vocab-graft-chunks",
        "version": CHUNKS_VERSION,
        "chunk_count": len(dataset.chunks),
        "chunk_limit": dataset.chunk_limit,
        "total_tokens": dataset.total_tokens,
        "discarded_count": dataset.discarded_count,
        "empty_count": dataset.empty_count,
        "record_count": dataset.record_count,
        "model_sha256": model.checksum(),
    }


@dataclass(frozen=True)
class OovEntry:
    unk_count: int
    total_tokens: int

    @property
    def percentage(self) -> float:
        return self.unk_count / self.total_tokens if self.total_tokens else 0.0

    def render_percentage(self) -> str:
        if 0 < self.percentage < APPROX_ZERO_THRESHOLD:
            return "~0%"
        return f"{self.percentage * 100:.2f}%"


@dataclass
class OovReport:
    per_dataset: dict[str, OovEntry] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {
            name: {
                "unk_count": e.unk_count,
                "total_tokens": e.total_tokens,
                "percentage": e.percentage,
            }
            for name, e in self.per_dataset.items()
        }
        if self.errors:
            out["_errors"] = dict(self.errors)
        return out


def _iter_encoding_pairs(
    records: Iterable[str],
    model_a: TokenizerModel,
    model_b: TokenizerModel,
    cfg: NormalizerConfig,
    emoji_set: EmojiSet | None,
    threads: int = 1,
):
    """Single pass over `records`, normalizing once and encoding under both models."""
    tok_a = _cached_tokenizer(model_a, emoji_set)
    tok_b = _cached_tokenizer(model_b, emoji_set)

    def encode_pair(record: str):
        nt = normalize(record, cfg)
        return tok_a.encode(nt), tok_b.encode(nt)

    if threads <= 1:
        for record in _guarded(records):
            yield encode_pair(record)
    else:
        yield from _bounded_map(encode_pair, _guarded(records), threads)


def oov_report(
    corpora: Mapping[str, Iterable[str]],
    model_a: TokenizerModel,
    model_b: TokenizerModel,
    cfg: NormalizerConfig,
    emoji_set: EmojiSet | None = None,
    *,
    threads: int = 1,
) -> tuple[OovReport, OovReport]:
    """Count unknown tokens for both models over identical normalized input.

    Each dataset is read once; a failing stream marks only that dataset as
    errored and the rest are still reported.
    """
    if not corpora:
        raise ValueError("at least one corpus is required")
    report_a = OovReport()
    report_b = OovReport()
    for name, records in corpora.items():
        unk_a = total_a = unk_b = total_b = 0
        try:
            for enc_a, enc_b in _iter_encoding_pairs(records, model_a, model_b, cfg, emoji_set, threads):
                unk_a += enc_a.unk_count
                total_a += len(enc_a.ids)
                unk_b += enc_b.unk_count
                total_b += len(enc_b.ids)
        except VocabGraftError as exc:
            report_a.errors[name] = str(exc)
            report_b.errors[name] = str(exc)
            continue
        report_a.per_dataset[name] = OovEntry(unk_a, total_a)
        report_b.per_dataset[name] = OovEntry(unk_b, total_b)
    return report_a, report_b


@dataclass(frozen=True)
class DiffRecord:
    record_index: int
    tokens_a: tuple[str, ...]
    tokens_b: tuple[str, ...]


def segmentation_diff(
    records: Iterable[str],
    model_a: TokenizerModel,
    model_b: TokenizerModel,
    cfg: NormalizerConfig,
    emoji_set: EmojiSet | None = None,
) -> Iterator[DiffRecord]:
    """Yield only the records whose two segmentations differ (by surface)."""
    pairs = _iter_encoding_pairs(records, model_a, model_b, cfg, emoji_set)
    for index, (enc_a, enc_b) in enumerate(pairs):
        if enc_a.surfaces != enc_b.surfaces:
            yield DiffRecord(record_index=index, tokens_a=enc_a.surfaces, tokens_b=enc_b.surfaces)


def split_chunks(
    dataset: ChunkedDataset, fractions: tuple[float, float, float], seed: int
) -> dict[str, ChunkedDataset]:
    """Assign chunks to train/valid/test by seeded shuffle of chunk indices."""
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) <= 0:
        raise ValueError("fractions must be three non-negative numbers with a positive sum")
    total = sum(fractions)
    n = len(dataset.chunks)
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(n * fractions[0] / total))
    n_valid = int(round(n * fractions[1] / total))
    n_valid = min(n_valid, n - n_train)
    buckets = {
        "train": np.sort(order[:n_train]),
        "valid": np.sort(order[n_train : n_train + n_valid]),
        "test": np.sort(order[n_train + n_valid :]),
    }
    out = {}
    for name, idx in buckets.items():
        out[name] = ChunkedDataset(
            chunks=[dataset.chunks[i] for i in idx],
            chunk_limit=dataset.chunk_limit,
            discarded_count=dataset.discarded_count if name == "train" else 0,
            empty_count=dataset.empty_count if name == "train" else 0,
            source_spans=[dataset.source_spans[i] for i in idx],
            record_count=dataset.record_count if name == "train" else 0,
        )
    return out
