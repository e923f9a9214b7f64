"""Grafting donor vocabulary into a recipient model.

Donor normal pieces are appended after all recipient pieces in donor id
order with scores copied verbatim; pieces already present, pieces containing
a scalar from an excluded script block, and non-normal donor pieces are
skipped and accounted for. Emoji sequences are appended last as unscored
pieces. The first new id (`boundary_id`) is what the embedding bridge
splits on.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass

from .emoji import EmojiSet
from .errors import TransferError
from .model_store import PieceKind, TokenizerModel, VocabPiece

logger = logging.getLogger(__name__)

# Thai Unicode block, the default exclusion.
THAI_BLOCK = (0x0E00, 0x0E7F)


@dataclass(frozen=True)
class TransferPolicy:
    """What to copy and what to filter during transfer."""

    excluded_blocks: tuple[tuple[int, int], ...] = (THAI_BLOCK,)
    copy_scores: bool = True
    inject_emoji: bool = True

    def __post_init__(self):
        blocks = sorted(self.excluded_blocks)
        for lo, hi in blocks:
            if lo > hi:
                raise ValueError(f"malformed block U+{lo:04X}..U+{hi:04X}")
        for (_, prev_hi), (next_lo, _) in zip(blocks, blocks[1:]):
            if next_lo <= prev_hi:
                raise ValueError("excluded blocks overlap")


@dataclass(frozen=True)
class TransferReport:
    """Accounting of one transfer run; the donor partition sums to donor_size."""

    recipient_size_before: int
    donor_size: int
    copied: int
    skipped_duplicate: int
    skipped_script: int
    skipped_control: int
    emoji_added: int
    recipient_size_after: int
    boundary_id: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def script_filter(surface: str, policy: TransferPolicy) -> bool:
    """True (= exclude) iff any scalar of `surface` falls in an excluded block."""
    for ch in surface:
        cp = ord(ch)
        for lo, hi in policy.excluded_blocks:
            if lo <= cp <= hi:
                return True
    return False


def transfer(
    recipient: TokenizerModel,
    donor: TokenizerModel,
    policy: TransferPolicy | None = None,
    emoji_set: EmojiSet | None = None,
) -> tuple[TokenizerModel, TransferReport]:
    """Append donor vocabulary and emoji to `recipient`, returning the new model and report.

    Recipient pieces keep their ids, specials and normalizer config
    unchanged. Donor pieces are considered in id order: non-normal kinds are
    skipped first, then duplicates against the growing output vocabulary,
    then script-filtered surfaces. Emoji sequences not already present are
    appended last, in code-point order, as unscored pieces.
    """
    if policy is None:
        policy = TransferPolicy()
    if policy.inject_emoji:
        if emoji_set is None or not emoji_set.sequences:
            raise TransferError("inject_emoji is enabled but the emoji set is empty")

    donor_normals = sum(1 for p in donor.pieces if p.kind is PieceKind.NORMAL)
    if donor_normals == 0:
        logger.warning("donor model has no normal pieces; transfer will copy nothing")

    floor_score = None
    if not policy.copy_scores:
        recipient_scores = [p.score for p in recipient.pieces if p.kind is PieceKind.NORMAL]
        floor_score = min(recipient_scores) if recipient_scores else 0.0

    pieces: list[VocabPiece] = list(recipient.pieces)
    seen: set[str] = set(recipient.piece_index)
    copied = skipped_duplicate = skipped_script = skipped_control = 0
    for piece in donor.pieces:
        if piece.kind is not PieceKind.NORMAL:
            skipped_control += 1
        elif piece.surface in seen:
            skipped_duplicate += 1
        elif script_filter(piece.surface, policy):
            skipped_script += 1
        else:
            score = piece.score if policy.copy_scores else floor_score
            pieces.append(VocabPiece(surface=piece.surface, score=score, kind=PieceKind.NORMAL))
            seen.add(piece.surface)
            copied += 1

    emoji_added = 0
    if policy.inject_emoji:
        for seq in sorted(emoji_set.sequences):
            if seq not in seen:
                pieces.append(VocabPiece(surface=seq, score=None, kind=PieceKind.UNSCORED))
                seen.add(seq)
                emoji_added += 1

    merged = TokenizerModel(
        pieces=tuple(pieces),
        specials=recipient.specials,
        normalizer=recipient.normalizer,
    )
    report = TransferReport(
        recipient_size_before=len(recipient.pieces),
        donor_size=len(donor.pieces),
        copied=copied,
        skipped_duplicate=skipped_duplicate,
        skipped_script=skipped_script,
        skipped_control=skipped_control,
        emoji_added=emoji_added,
        recipient_size_after=len(pieces),
        boundary_id=len(recipient.pieces),
    )
    return merged, report
