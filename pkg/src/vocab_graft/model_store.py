"""Tokenizer model types, canonical text format IO, and binary model import.

The canonical on-disk format is line-oriented UTF-8: `#key=value` header
lines for special-token surfaces and normalizer settings, then one record
per line `<id>\\t<surface>\\t<score|∅>\\t<kind>` with `\\t`, `\\n` and `\\\\`
escaped inside surfaces. The binary import reads the SentencePiece model
wire format (piece records only) and is import-only.
"""
from __future__ import annotations

import enum
import hashlib
import io
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import ModelFormatError, SpmFormatError
from .normalizer import NormalizerConfig

logger = logging.getLogger(__name__)

FORMAT_TAG = "vocab-graft/1"
NO_SCORE = "\u2205"  # ∅ sentinel: "no score", distinct from score 0.0

DEFAULT_SPECIAL_SURFACES = {
    "unk": "<unk>",
    "bos": "<s>",
    "eos": "</s>",
    "pad": "<pad>",
    "mask": "<mask>",
    "space": "<_>",
}
_SPECIAL_KEYS = ("unk", "bos", "eos", "pad", "mask", "space")


class PieceKind(enum.Enum):
    NORMAL = "normal"
    UNKNOWN = "unknown"
    CONTROL = "control"
    UNSCORED = "unscored"


_KIND_BY_NAME = {k.value: k for k in PieceKind}


@dataclass(frozen=True)
class VocabPiece:
    """One vocabulary entry: surface string, optional log-probability, kind."""

    surface: str
    score: float | None
    kind: PieceKind

    def __post_init__(self):
        if not self.surface:
            raise ValueError("piece surface must be non-empty")
        if "\x00" in self.surface:
            raise ValueError("piece surface must not contain U+0000")
        if self.score is not None and not math.isfinite(self.score):
            raise ValueError(f"piece {self.surface!r} has non-finite score {self.score!r}")
        if self.kind is PieceKind.NORMAL and self.score is None:
            raise ValueError(f"normal piece {self.surface!r} requires a score")
        if self.kind is PieceKind.UNSCORED and self.score is not None:
            raise ValueError(f"unscored piece {self.surface!r} must not carry a score")


@dataclass(frozen=True)
class SpecialTokens:
    """Ids of the reserved tokens."""

    unk_id: int
    bos_id: int
    eos_id: int
    pad_id: int
    mask_id: int
    space_id: int

    def as_dict(self) -> dict[str, int]:
        return {
            "unk_id": self.unk_id,
            "bos_id": self.bos_id,
            "eos_id": self.eos_id,
            "pad_id": self.pad_id,
            "mask_id": self.mask_id,
            "space_id": self.space_id,
        }


@dataclass(frozen=True)
class TokenizerModel:
    """Immutable tokenizer model: ordered pieces, special ids, normalizer config.

    Ids are dense 0..len(pieces)-1 and `piece_index` is the exact inverse of
    the piece order. Exactly one piece has kind UNKNOWN and `unk_id` points
    at it.
    """

    pieces: tuple[VocabPiece, ...]
    specials: SpecialTokens
    normalizer: NormalizerConfig

    def __post_init__(self):
        index: dict[str, int] = {}
        unknown_ids = []
        for i, piece in enumerate(self.pieces):
            if piece.surface in index:
                raise ValueError(f"duplicate surface {piece.surface!r} at ids {index[piece.surface]} and {i}")
            index[piece.surface] = i
            if piece.kind is PieceKind.UNKNOWN:
                unknown_ids.append(i)
        if len(unknown_ids) != 1:
            raise ValueError(f"model must contain exactly one unknown piece, found {len(unknown_ids)}")
        for name, sid in self.specials.as_dict().items():
            if not 0 <= sid < len(self.pieces):
                raise ValueError(f"special {name}={sid} is out of range for {len(self.pieces)} pieces")
        if self.pieces[self.specials.unk_id].kind is not PieceKind.UNKNOWN:
            raise ValueError(f"piece at unk_id={self.specials.unk_id} is not of kind unknown")
        object.__setattr__(self, "piece_index", index)
        object.__setattr__(self, "_tokenizer_cache", {})

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def has_positive_scores(self) -> bool:
        """True when any piece carries a score > 0 (allowed on import, flagged on save)."""
        return any(p.score is not None and p.score > 0 for p in self.pieces)

    def checksum(self) -> str:
        """SHA-256 of the canonical serialization."""
        return hashlib.sha256(canonical_bytes(self)).hexdigest()


def _escape(surface: str) -> str:
    return surface.replace("\\", "\\\\").replace("\t", "\\t").replace("\n", "\\n")


def _unescape(text: str, location: str) -> str:
    if "\\" not in text:
        return text
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(text):
            raise ModelFormatError("dangling backslash in surface", location=location)
        nxt = text[i + 1]
        if nxt == "t":
            out.append("\t")
        elif nxt == "n":
            out.append("\n")
        elif nxt == "\\":
            out.append("\\")
        else:
            raise ModelFormatError(f"unknown escape sequence \\{nxt}", location=location)
        i += 2
    return "".join(out)


def _format_score(score: float | None) -> str:
    return NO_SCORE if score is None else repr(float(score))


def canonical_bytes(model: TokenizerModel) -> bytes:
    """Serialize `model` in the canonical text format."""
    buf = io.StringIO()
    buf.write(f"#format={FORMAT_TAG}\n")
    ids = model.specials.as_dict()
    for key in _SPECIAL_KEYS:
        buf.write(f"#{key}={_escape(model.pieces[ids[key + '_id']].surface)}\n")
    cfg = model.normalizer
    buf.write(f"#max_char_repeat={cfg.max_char_repeat}\n")
    buf.write(f"#preserve_space={'true' if cfg.preserve_space else 'false'}\n")
    buf.write(f"#lowercase={'true' if cfg.lowercase else 'false'}\n")
    for i, piece in enumerate(model.pieces):
        buf.write(f"{i}\t{_escape(piece.surface)}\t{_format_score(piece.score)}\t{piece.kind.value}\n")
    return buf.getvalue().encode("utf-8")


def save_canonical(model: TokenizerModel, path: str | Path, *, allow_positive_scores: bool = False) -> None:
    """Write `model` to `path`; refuses positive scores unless explicitly allowed."""
    if model.has_positive_scores and not allow_positive_scores:
        raise ModelFormatError(
            "model contains positive scores; pass allow_positive_scores=True to save anyway"
        )
    Path(path).write_bytes(canonical_bytes(model))


def _parse_bool(value: str, location: str) -> bool:
    if value == "true":
        return True
    if value == "false":
        return False
    raise ModelFormatError(f"expected true/false, got {value!r}", location=location)


def load_canonical(path: str | Path) -> TokenizerModel:
    """Parse a canonical model file, validating every model invariant."""
    headers: dict[str, str] = {}
    pieces: list[VocabPiece] = []
    index: dict[str, int] = {}
    in_records = False
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, start=1):
            loc = f"{path}:{lineno}"
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                if in_records:
                    raise ModelFormatError("header line after first record", location=loc)
                key, sep, value = line[1:].partition("=")
                if not sep:
                    raise ModelFormatError(f"malformed header line {line!r}", location=loc)
                if key in headers:
                    raise ModelFormatError(f"duplicate header key {key!r}", location=loc)
                headers[key] = value
                continue
            in_records = True
            cols = line.split("\t")
            if len(cols) != 4:
                raise ModelFormatError(f"expected 4 tab-separated columns, got {len(cols)}", location=loc)
            rec_id, raw_surface, raw_score, raw_kind = cols
            if rec_id != str(len(pieces)):
                raise ModelFormatError(
                    f"non-dense id {rec_id!r}, expected {len(pieces)}", location=loc
                )
            surface = _unescape(raw_surface, loc)
            if raw_score == NO_SCORE:
                score = None
            else:
                try:
                    score = float(raw_score)
                except ValueError:
                    raise ModelFormatError(f"unparseable score {raw_score!r}", location=loc) from None
                if not math.isfinite(score):
                    raise ModelFormatError(f"non-finite score {raw_score!r}", location=loc)
            kind = _KIND_BY_NAME.get(raw_kind)
            if kind is None:
                raise ModelFormatError(f"unknown piece kind {raw_kind!r}", location=loc)
            if surface in index:
                raise ModelFormatError(
                    f"duplicate surface {surface!r} (first at id {index[surface]})", location=loc
                )
            try:
                piece = VocabPiece(surface=surface, score=score, kind=kind)
            except ValueError as exc:
                raise ModelFormatError(str(exc), location=loc) from None
            index[surface] = len(pieces)
            pieces.append(piece)

    loc = str(path)
    if not pieces:
        raise ModelFormatError("model file contains no pieces", location=loc)
    fmt = headers.pop("format", FORMAT_TAG)
    if fmt != FORMAT_TAG:
        raise ModelFormatError(f"unsupported format tag {fmt!r}", location=loc)

    cfg_kwargs = {}
    if "max_char_repeat" in headers:
        try:
            cfg_kwargs["max_char_repeat"] = int(headers.pop("max_char_repeat"))
        except ValueError:
            raise ModelFormatError("max_char_repeat must be an integer", location=loc) from None
    if "preserve_space" in headers:
        cfg_kwargs["preserve_space"] = _parse_bool(headers.pop("preserve_space"), loc)
    if "lowercase" in headers:
        cfg_kwargs["lowercase"] = _parse_bool(headers.pop("lowercase"), loc)
    try:
        normalizer = NormalizerConfig(**cfg_kwargs)
    except ValueError as exc:
        raise ModelFormatError(str(exc), location=loc) from None

    declared = {k: _unescape(headers.pop(k), loc) for k in _SPECIAL_KEYS if k in headers}
    if headers:
        raise ModelFormatError(f"unknown header keys {sorted(headers)}", location=loc)
    specials = _resolve_specials(pieces, index, declared, loc)

    try:
        model = TokenizerModel(pieces=tuple(pieces), specials=specials, normalizer=normalizer)
    except ValueError as exc:
        raise ModelFormatError(str(exc), location=loc) from None
    if model.has_positive_scores:
        logger.warning("model %s contains positive scores; save requires allow_positive_scores", path)
    return model


def _resolve_specials(
    pieces: list[VocabPiece],
    index: Mapping[str, int],
    declared: Mapping[str, str],
    location: str,
) -> SpecialTokens:
    """Resolve special-token surfaces to ids.

    The unknown id always comes from the unique UNKNOWN piece. Explicitly
    declared surfaces must exist (dangling ones are an error); surfaces that
    are merely defaults fall back to the unknown id when absent.
    """
    unknown_ids = [i for i, p in enumerate(pieces) if p.kind is PieceKind.UNKNOWN]
    if len(unknown_ids) != 1:
        raise ModelFormatError(
            f"model must contain exactly one unknown piece, found {len(unknown_ids)}", location=location
        )
    unk_id = unknown_ids[0]
    if "unk" in declared and index.get(declared["unk"]) != unk_id:
        raise ModelFormatError(
            f"declared unk surface {declared['unk']!r} does not match the unknown piece", location=location
        )

    ids: dict[str, int] = {"unk_id": unk_id}
    for key in _SPECIAL_KEYS:
        if key == "unk":
            continue
        if key in declared:
            surface = declared[key]
            if surface not in index:
                raise ModelFormatError(
                    f"dangling special: declared {key}={surface!r} not in vocabulary", location=location
                )
            ids[key + "_id"] = index[surface]
        else:
            surface = DEFAULT_SPECIAL_SURFACES[key]
            if surface in index:
                ids[key + "_id"] = index[surface]
            else:
                logger.debug("special %s (%r) absent; falling back to unk id", key, surface)
                ids[key + "_id"] = unk_id
    return SpecialTokens(**ids)


# --- SentencePiece binary import -------------------------------------------
#
# Wire format subset: outer message with repeated field 1 = SentencePiece
# submessage { piece:string=1, score:float=2, type:enum=3 }. Everything else
# is skipped by wire type. Types: 1=NORMAL, 2=UNKNOWN, others map to CONTROL.

_WT_VARINT, _WT_I64, _WT_LEN, _WT_SGROUP, _WT_EGROUP, _WT_I32 = 0, 1, 2, 3, 4, 5

_SPM_TYPE_NORMAL = 1
_SPM_TYPE_UNKNOWN = 2


def _read_varint(data: bytes, pos: int, location: str) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(data):
            raise SpmFormatError("truncated varint", location=location)
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift > 63:
            raise SpmFormatError("varint exceeds 64 bits", location=location)


def _skip_field(data: bytes, pos: int, wire_type: int, location: str) -> int:
    if wire_type == _WT_VARINT:
        _, pos = _read_varint(data, pos, location)
        return pos
    if wire_type == _WT_I64:
        pos += 8
    elif wire_type == _WT_LEN:
        length, pos = _read_varint(data, pos, location)
        pos += length
    elif wire_type == _WT_I32:
        pos += 4
    else:
        raise SpmFormatError(f"unsupported wire type {wire_type}", location=location)
    if pos > len(data):
        raise SpmFormatError("field extends past end of file", location=location)
    return pos


def _parse_spm_piece(data: bytes, record: int) -> tuple[str, float, int]:
    loc = f"piece record {record}"
    surface: str | None = None
    score = 0.0
    piece_type = _SPM_TYPE_NORMAL
    pos = 0
    while pos < len(data):
        tag, pos = _read_varint(data, pos, loc)
        field_no, wire_type = tag >> 3, tag & 7
        if field_no == 1:
            if wire_type != _WT_LEN:
                raise SpmFormatError(f"piece field has wire type {wire_type}, expected LEN", location=loc)
            length, pos = _read_varint(data, pos, loc)
            if pos + length > len(data):
                raise SpmFormatError("piece string extends past record end", location=loc)
            try:
                surface = data[pos : pos + length].decode("utf-8")
            except UnicodeDecodeError:
                raise SpmFormatError("piece string is not valid UTF-8", location=loc) from None
            pos += length
        elif field_no == 2:
            if wire_type != _WT_I32:
                raise SpmFormatError(f"score field has wire type {wire_type}, expected I32", location=loc)
            if pos + 4 > len(data):
                raise SpmFormatError("truncated score", location=loc)
            score = struct.unpack_from("<f", data, pos)[0]
            pos += 4
        elif field_no == 3:
            if wire_type != _WT_VARINT:
                raise SpmFormatError(f"type field has wire type {wire_type}, expected varint", location=loc)
            piece_type, pos = _read_varint(data, pos, loc)
        else:
            pos = _skip_field(data, pos, wire_type, loc)
    if surface is None:
        raise SpmFormatError("piece record missing surface string", location=loc)
    return surface, score, piece_type


def import_spm(
    path: str | Path,
    *,
    special_surfaces: Mapping[str, str] | None = None,
    normalizer: NormalizerConfig | None = None,
) -> TokenizerModel:
    """Import the piece list of a binary SentencePiece model.

    Piece order, scores and types are preserved exactly (NORMAL -> normal,
    UNKNOWN -> unknown, anything else -> control). Special ids other than
    unk are resolved by surface lookup using `special_surfaces` overrides on
    top of the defaults; absent surfaces fall back to the unk id.
    """
    data = Path(path).read_bytes()
    records: list[tuple[str, float, int]] = []
    pos = 0
    while pos < len(data):
        loc = f"byte {pos}"
        tag, pos = _read_varint(data, pos, loc)
        field_no, wire_type = tag >> 3, tag & 7
        if field_no == 1:
            if wire_type != _WT_LEN:
                raise SpmFormatError(
                    f"piece record has wire type {wire_type}, expected LEN", location=loc
                )
            length, pos = _read_varint(data, pos, loc)
            if pos + length > len(data):
                raise SpmFormatError("piece record extends past end of file", location=loc)
            records.append(_parse_spm_piece(data[pos : pos + length], len(records)))
            pos += length
        else:
            pos = _skip_field(data, pos, wire_type, loc)

    if not records:
        raise SpmFormatError("no piece records found", location=str(path))

    pieces: list[VocabPiece] = []
    for record, (surface, score, piece_type) in enumerate(records):
        if piece_type == _SPM_TYPE_NORMAL:
            kind = PieceKind.NORMAL
        elif piece_type == _SPM_TYPE_UNKNOWN:
            kind = PieceKind.UNKNOWN
        else:
            kind = PieceKind.CONTROL
        try:
            pieces.append(VocabPiece(surface=surface, score=score, kind=kind))
        except ValueError as exc:
            raise SpmFormatError(str(exc), location=f"piece record {record}") from None

    index: dict[str, int] = {}
    for i, piece in enumerate(pieces):
        if piece.surface in index:
            raise SpmFormatError(
                f"duplicate surface {piece.surface!r}", location=f"piece record {i}"
            )
        index[piece.surface] = i

    declared = dict(special_surfaces or {})
    unknown = [k for k in declared if k not in _SPECIAL_KEYS]
    if unknown:
        raise ValueError(f"unknown special keys {sorted(unknown)}; expected subset of {_SPECIAL_KEYS}")
    try:
        specials = _resolve_specials(pieces, index, declared, str(path))
    except ModelFormatError as exc:
        raise SpmFormatError(str(exc)) from None

    model = TokenizerModel(
        pieces=tuple(pieces),
        specials=specials,
        normalizer=normalizer or NormalizerConfig(),
    )
    if model.has_positive_scores:
        logger.warning("imported model %s contains positive scores", path)
    return model
