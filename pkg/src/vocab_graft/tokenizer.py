"""Maximum-likelihood segmentation of normalized text into vocabulary pieces.

Pre-tokenization first carves out replaced spaces (as the dedicated space
token) and longest-match emoji sequences (as their own piece ids); the
remaining spans are segmented by Viterbi decoding over the scores of normal
pieces, with uncoverable characters emitted as single-character unknowns.
"""
from __future__ import annotations

from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Iterator

import numpy as np

from . import _kernels
from .emoji import EmojiSet, build_matcher, longest_match
from .errors import CorpusError
from .model_store import PieceKind, TokenizerModel
from .normalizer import NormalizedText, NormalizerConfig, normalize


class Encoding:
    """Result of encoding one text: ids, piece surfaces, byte offsets, unk count.

    `offsets` are (start, end) UTF-8 byte offsets into the normalized text;
    they are non-overlapping, sorted, and jointly cover the input exactly.
    Surfaces and offsets are materialized lazily; ids are an int32 array.
    """

    __slots__ = ("ids", "unk_count", "_model", "_text", "_char_lens", "_surfaces", "_offsets")

    def __init__(self, ids: np.ndarray, unk_count: int, model: TokenizerModel,
                 text: NormalizedText, char_lens: np.ndarray):
        self.ids = ids
        self.unk_count = unk_count
        self._model = model
        self._text = text
        self._char_lens = char_lens
        self._surfaces = None
        self._offsets = None

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def surfaces(self) -> tuple[str, ...]:
        if self._surfaces is None:
            pieces = self._model.pieces
            self._surfaces = tuple(pieces[i].surface for i in self.ids)
        return self._surfaces

    @property
    def offsets(self) -> list[tuple[int, int]]:
        if self._offsets is None:
            char_ends = np.cumsum(self._char_lens)
            byte_starts = self._text.byte_starts
            ends = byte_starts[char_ends]
            starts = np.empty_like(ends)
            if len(ends):
                starts[0] = 0
                starts[1:] = ends[:-1]
            self._offsets = list(zip(starts.tolist(), ends.tolist()))
        return self._offsets


class Tokenizer:
    """Reusable encoder for one (model, emoji set) pair.

    Compiles the normal-piece vocabulary into a flat trie consumed by the
    segmentation kernel; safe to share across threads once built.
    """

    def __init__(self, model: TokenizerModel, emoji_set: EmojiSet | None = None):
        self.model = model
        self.emoji_set = emoji_set
        self._emoji_trie = build_matcher(emoji_set)
        self._space_id = model.specials.space_id
        self._unk_id = model.specials.unk_id
        self._build_trie(model)

    def _build_trie(self, model: TokenizerModel) -> None:
        # nested dicts first, then flattened to arrays for the kernel
        root: dict = {}
        nodes: list[dict] = [root]
        ends: list[tuple[dict, int, float]] = []
        for pid, piece in enumerate(model.pieces):
            if piece.kind is not PieceKind.NORMAL:
                continue
            node = root
            for ch in piece.surface:
                nxt = node.get(ch)
                if nxt is None:
                    nxt = {}
                    node[ch] = nxt
                    nodes.append(nxt)
                node = nxt
            ends.append((node, pid, piece.score))

        node_ids = {id(node): i for i, node in enumerate(nodes)}
        n_nodes = len(nodes)
        node_piece = np.full(n_nodes, -1, dtype=np.int32)
        node_score = np.zeros(n_nodes, dtype=np.float64)
        for node, pid, score in ends:
            idx = node_ids[id(node)]
            node_piece[idx] = pid
            node_score[idx] = score

        node_ptr = np.zeros(n_nodes + 1, dtype=np.int64)
        edge_key: list[int] = []
        for i, node in enumerate(nodes):
            for ch in sorted(node):
                edge_key.append((ord(ch) << 32) | node_ids[id(node[ch])])
            node_ptr[i + 1] = len(edge_key)

        self._edge_key = np.asarray(edge_key, dtype=np.int64)
        self._node_ptr = node_ptr
        self._node_piece = node_piece
        self._node_score = node_score
        # bundled for the kernel call; a single attribute lookup on the hot path
        self._trie = (self._edge_key, node_ptr, node_piece, node_score, self._unk_id)
        self._segment = _kernels.viterbi_segment

    # -- encoding -----------------------------------------------------------

    def encode(self, text: NormalizedText | str) -> Encoding:
        if isinstance(text, str):
            text = normalize(text, self.model.normalizer)
        codes = text.codes
        n = len(codes)
        if n == 0:
            empty = np.empty(0, dtype=np.int32)
            return Encoding(empty, 0, self.model, text, empty)
        if not text.space_positions and not self._emoji_trie:
            return self._encode_span(text, codes)
        return self._encode_general(text, codes)

    def _encode_span(self, text: NormalizedText, codes: np.ndarray) -> Encoding:
        n = codes.shape[0]
        out = np.empty(2 * n, dtype=np.int32)
        count, unk = self._segment(codes, *self._trie, out)
        return Encoding(out[:count], int(unk), self.model, text, out[n : n + count])

    def _encode_general(self, text: NormalizedText, codes: np.ndarray) -> Encoding:
        n = len(codes)
        s = text.text
        space_mask = text.space_mask
        trie = self._emoji_trie
        piece_index = self.model.piece_index
        out_ids: list[int] = []
        out_lens: list[int] = []
        unk_count = 0
        span_start = -1
        buf = np.empty(2 * n, dtype=np.int32)

        def flush(end: int) -> None:
            nonlocal span_start, unk_count
            if span_start < 0:
                return
            width = end - span_start
            count, unk = self._segment(codes[span_start:end], *self._trie, buf)
            for k in range(count):
                out_ids.append(int(buf[k]))
                out_lens.append(int(buf[width + k]))
            unk_count += int(unk)
            span_start = -1

        i = 0
        while i < n:
            if space_mask[i]:
                flush(i)
                out_ids.append(self._space_id)
                out_lens.append(1)
                if self._space_id == self._unk_id:  # degenerate model without a space piece
                    unk_count += 1
                i += 1
                continue
            if trie:
                m = longest_match(trie, s, i)
                if m > 0:
                    pid = piece_index.get(s[i : i + m], -1)
                    if pid >= 0:
                        flush(i)
                        out_ids.append(pid)
                        out_lens.append(m)
                        i += m
                        continue
            if span_start < 0:
                span_start = i
            i += 1
        flush(n)

        ids = np.asarray(out_ids, dtype=np.int32)
        lens = np.asarray(out_lens, dtype=np.int32)
        return Encoding(ids, unk_count, self.model, text, lens)

    # -- decoding -----------------------------------------------------------

    def decode(self, ids: Iterable[int]) -> str:
        pieces = self.model.pieces
        space_id = self._space_id
        parts: list[str] = []
        for token_id in ids:
            token_id = int(token_id)
            if not 0 <= token_id < len(pieces):
                raise ValueError(f"token id {token_id} out of range for {len(pieces)} pieces")
            parts.append(" " if token_id == space_id else pieces[token_id].surface)
        return "".join(parts)


def _cached_tokenizer(model: TokenizerModel, emoji_set: EmojiSet | None) -> Tokenizer:
    cache: dict = model._tokenizer_cache  # attached in TokenizerModel.__post_init__
    tok = cache.get(emoji_set)
    if tok is None:
        tok = Tokenizer(model, emoji_set)
        cache[emoji_set] = tok
    return tok


def encode(model: TokenizerModel, text: NormalizedText | str, emoji_set: EmojiSet | None = None) -> Encoding:
    """Encode one normalized text (raw strings are normalized with the model's config)."""
    return _cached_tokenizer(model, emoji_set).encode(text)


def decode(model: TokenizerModel, ids: Iterable[int]) -> str:
    """Concatenate piece surfaces, rendering the space token as U+0020."""
    return _cached_tokenizer(model, None).decode(ids)


def _guarded(records: Iterable[str]) -> Iterator[str]:
    """Re-raise stream failures as CorpusError tagged with the record index."""
    index = 0
    iterator = iter(records)
    while True:
        try:
            record = next(iterator)
        except StopIteration:
            return
        except CorpusError:
            raise
        except Exception as exc:
            raise CorpusError(f"corpus stream failed: {exc}", location=f"record {index}") from exc
        yield record
        index += 1


def _bounded_map(fn, items: Iterable, threads: int) -> Iterator:
    """Order-preserving thread map with a bounded in-flight window."""
    with ThreadPoolExecutor(max_workers=threads) as pool:
        window: deque = deque()
        limit = threads * 8
        for item in items:
            window.append(pool.submit(fn, item))
            if len(window) >= limit:
                yield window.popleft().result()
        while window:
            yield window.popleft().result()


def iter_encodings(
    model: TokenizerModel,
    records: Iterable[str],
    *,
    emoji_set: EmojiSet | None = None,
    cfg: NormalizerConfig | None = None,
    threads: int = 1,
) -> Iterator[Encoding]:
    """Encode a stream of raw records in order.

    Normalization uses `cfg` when given, else the model's own config. With
    threads > 1 records are encoded by a thread pool (the segmentation
    kernel releases the GIL); output order and content are identical for
    any thread count. Stream failures are reported with the record index.
    """
    tok = _cached_tokenizer(model, emoji_set)
    use_cfg = cfg if cfg is not None else model.normalizer

    def encode_one(record: str) -> Encoding:
        return tok.encode(normalize(record, use_cfg))

    if threads <= 1:
        for record in _guarded(records):
            yield encode_one(record)
    else:
        yield from _bounded_map(encode_one, _guarded(records), threads)


def count_unk(
    model: TokenizerModel,
    records: Iterable[str],
    *,
    emoji_set: EmojiSet | None = None,
    cfg: NormalizerConfig | None = None,
    threads: int = 1,
) -> tuple[int, int]:
    """Sum (unk_count, total_tokens) of encode() over every record."""
    unk = 0
    total = 0
    for enc in iter_encodings(model, records, emoji_set=emoji_set, cfg=cfg, threads=threads):
        unk += enc.unk_count
        total += len(enc.ids)
    return unk, total
