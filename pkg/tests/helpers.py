"""Shared fixtures-in-functions and independent oracles used across the test suite.

The oracles here deliberately avoid the library's algorithms: segmentation
is checked by exhaustive enumeration, packing by a literal simulation,
protobuf import by a hand-written wire-format encoder.
"""
from __future__ import annotations

import struct

import numpy as np

from vocab_graft.model_store import PieceKind, SpecialTokens, TokenizerModel, VocabPiece
from vocab_graft.normalizer import NormalizerConfig

STANDARD_SPECIALS = (
    ("<unk>", PieceKind.UNKNOWN),
    ("<s>", PieceKind.CONTROL),
    ("</s>", PieceKind.CONTROL),
    ("<pad>", PieceKind.CONTROL),
    ("<mask>", PieceKind.CONTROL),
    ("<_>", PieceKind.CONTROL),
)


def build_model(
    normal: dict[str, float],
    *,
    unscored: tuple[str, ...] = (),
    cfg: NormalizerConfig | None = None,
) -> TokenizerModel:
    """Model with the six standard specials followed by normal pieces in dict order."""
    pieces = [VocabPiece(s, 0.0 if k is PieceKind.UNKNOWN else None, k) for s, k in STANDARD_SPECIALS]
    for surface, score in normal.items():
        pieces.append(VocabPiece(surface, score, PieceKind.NORMAL))
    for surface in unscored:
        pieces.append(VocabPiece(surface, None, PieceKind.UNSCORED))
    return TokenizerModel(
        pieces=tuple(pieces),
        specials=SpecialTokens(unk_id=0, bos_id=1, eos_id=2, pad_id=3, mask_id=4, space_id=5),
        normalizer=cfg or NormalizerConfig(),
    )


def dyadic_score(rng: np.random.Generator, lo: int = 1, hi: int = 256) -> float:
    # Multiples of 1/64 keep short sums exact in float64, so score comparisons
    # in tests cannot depend on addition order.
    return -int(rng.integers(lo, hi + 1)) / 64.0


def random_vocab(rng: np.random.Generator, alphabet: str, max_len: int = 4,
                 n_pieces: int = 12) -> dict[str, float]:
    vocab: dict[str, float] = {}
    while len(vocab) < n_pieces:
        length = int(rng.integers(1, max_len + 1))
        surface = "".join(rng.choice(list(alphabet), size=length))
        vocab.setdefault(surface, dyadic_score(rng))
    return vocab


# --- segmentation oracle ------------------------------------------------------


def enumerate_unit_splits(text: str, vocab: dict[str, float]):
    """Every decomposition of `text` into units: in-vocab pieces or 1-char unknowns."""
    n = len(text)
    acc: list[tuple[str, bool]] = []

    def rec(i):
        if i == n:
            yield tuple(acc)
            return
        for j in range(i + 1, n + 1):
            piece = text[i:j]
            if piece in vocab:
                acc.append((piece, False))
                yield from rec(j)
                acc.pop()
        acc.append((text[i], True))
        yield from rec(i + 1)
        acc.pop()

    yield from rec(0)


def segmentation_key(units, vocab: dict[str, float]):
    """Ordering key: fewest unknowns, highest score, fewest tokens, leftmost-longest."""
    unk = sum(1 for _, is_unk in units if is_unk)
    score = sum(vocab[u] for u, is_unk in units if not is_unk)
    lengths = tuple(-len(u) for u, _ in units)
    return (unk, -score, len(units), lengths)


def best_segmentation(text: str, vocab: dict[str, float]):
    """Exhaustive-enumeration optimum, including the tie-breaking order."""
    return min(enumerate_unit_splits(text, vocab), key=lambda u: segmentation_key(u, vocab))


def encoding_units(enc, ntext) -> tuple[tuple[str, bool], ...]:
    """Mirror an Encoding as ((consumed_text, is_unk), ...) via its byte offsets."""
    raw = ntext.text.encode("utf-8")
    unk_id = enc._model.specials.unk_id
    out = []
    for token_id, (start, end) in zip(enc.ids, enc.offsets):
        out.append((raw[start:end].decode("utf-8"), int(token_id) == unk_id))
    return tuple(out)


# --- packing oracle -----------------------------------------------------------


def simulate_pack(lengths, limit):
    """Literal greedy packing: returns (chunks as length lists, discarded, empty)."""
    chunks: list[list[int]] = []
    discarded = empty = 0
    current: list[int] | None = None
    for length in lengths:
        if length > limit:
            discarded += 1
        elif length == 0:
            empty += 1
        elif current is not None and sum(current) + length <= limit:
            current.append(length)
        else:
            current = [length]
            chunks.append(current)
    return chunks, discarded, empty


# --- reference protobuf encoder ------------------------------------------------


def _varint(value: int) -> bytes:
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field_no: int, wire_type: int) -> bytes:
    return _varint((field_no << 3) | wire_type)


def spm_piece_record(surface: str | None, score: float | None, piece_type: int | None,
                     extra: bytes = b"") -> bytes:
    body = b""
    if surface is not None:
        encoded = surface.encode("utf-8")
        body += _tag(1, 2) + _varint(len(encoded)) + encoded
    if score is not None:
        body += _tag(2, 5) + struct.pack("<f", score)
    if piece_type is not None:
        body += _tag(3, 0) + _varint(piece_type)
    body += extra
    return _tag(1, 2) + _varint(len(body)) + body


def spm_bytes(records, outer_extra: bytes = b"") -> bytes:
    """Assemble a SentencePiece-style model file from (surface, score, type) tuples."""
    out = b"".join(spm_piece_record(*rec) for rec in records)
    return out + outer_extra


def outer_field(field_no: int, wire_type: int, payload: bytes) -> bytes:
    return _tag(field_no, wire_type) + payload


# --- transfer oracle ------------------------------------------------------------


def transfer_oracle(recipient: TokenizerModel, donor: TokenizerModel,
                    blocks, emoji_sequences) -> dict:
    """Set-logic reimplementation of the transfer filters for report checking."""
    def blocked(surface):
        return any(lo <= ord(ch) <= hi for ch in surface for lo, hi in blocks)

    vocabulary = {p.surface for p in recipient.pieces}
    copied, dup, script, control = [], 0, 0, 0
    for piece in donor.pieces:
        if piece.kind is not PieceKind.NORMAL:
            control += 1
        elif piece.surface in vocabulary:
            dup += 1
        elif blocked(piece.surface):
            script += 1
        else:
            copied.append(piece.surface)
            vocabulary.add(piece.surface)
    emoji_added = [s for s in sorted(emoji_sequences) if s not in vocabulary]
    return {
        "copied": copied,
        "skipped_duplicate": dup,
        "skipped_script": script,
        "skipped_control": control,
        "emoji_added": emoji_added,
    }
