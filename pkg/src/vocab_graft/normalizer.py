"""Text normalization applied before segmentation.

Rules: optional lowercasing, squashing of character runs longer than
``max_char_repeat`` down to a single character, and space preservation by
swapping every space for a placeholder character whose positions are
recorded so the tokenizer can emit the dedicated space token there.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

# Placeholder written into normalized text at former space positions. The
# placeholder is cosmetic: `space_positions` is what the tokenizer keys on,
# so a literal U+2581 typed by a user is still treated as an ordinary char.
SPACE_PLACEHOLDER = "▁"

# UTF-8 encoded width thresholds, used to derive byte offsets per scalar.
_UTF8_BOUNDS = np.array([0x80, 0x800, 0x10000], dtype=np.int64)


@dataclass(frozen=True)
class NormalizerConfig:
    """Knobs for the normalization pass."""

    max_char_repeat: int = 3
    preserve_space: bool = True
    lowercase: bool = True

    def __post_init__(self):
        if self.max_char_repeat < 1:
            raise ValueError(f"max_char_repeat must be >= 1, got {self.max_char_repeat}")


@dataclass(frozen=True)
class NormalizedText:
    """Normalized text plus the positions where spaces were replaced.

    `text` contains no literal U+0020 when spaces are preserved; every
    surviving space sits at an index listed in `space_positions` with the
    placeholder character in its slot. `text` alone is a lossy view: a
    replaced space and a literal placeholder character are distinguished
    only by `space_positions`.
    """

    text: str
    space_positions: tuple[int, ...] = ()

    @property
    def codes(self) -> np.ndarray:
        """Scalar values of `text` as an int32 array (cached)."""
        arr = getattr(self, "_codes", None)
        if arr is None:
            arr = np.frombuffer(self.text.encode("utf-32-le"), dtype=np.uint32).view(np.int32)
            object.__setattr__(self, "_codes", arr)
        return arr

    @property
    def byte_starts(self) -> np.ndarray:
        """UTF-8 byte offset of each character, plus the total length (cached)."""
        arr = getattr(self, "_byte_starts", None)
        if arr is None:
            widths = 1 + np.searchsorted(_UTF8_BOUNDS, self.codes, side="right")
            arr = np.zeros(len(self.text) + 1, dtype=np.int64)
            np.cumsum(widths, out=arr[1:])
            object.__setattr__(self, "_byte_starts", arr)
        return arr

    @property
    def space_mask(self) -> np.ndarray:
        """Boolean mask over characters, True at replaced-space positions (cached)."""
        arr = getattr(self, "_space_mask", None)
        if arr is None:
            arr = np.zeros(len(self.text), dtype=bool)
            if self.space_positions:
                arr[np.asarray(self.space_positions, dtype=np.int64)] = True
            object.__setattr__(self, "_space_mask", arr)
        return arr


def _squash_pattern(max_repeat: int) -> re.Pattern[str]:
    return re.compile(r"(.)\1{%d,}" % max_repeat, re.DOTALL)


def normalize(raw: str, cfg: NormalizerConfig | None = None) -> NormalizedText:
    """Normalize `raw` for segmentation.

    Lowercases (if configured), squashes any run of one scalar longer than
    `max_char_repeat` to a single occurrence, then replaces spaces (tabs and
    newlines count as spaces) with the placeholder, recording positions.
    """
    if cfg is None:
        cfg = NormalizerConfig()
    text = raw.lower() if cfg.lowercase else raw
    if cfg.preserve_space:
        text = text.replace("\t", " ").replace("\n", " ")
    if cfg.max_char_repeat >= 1:
        text = _squash_pattern(cfg.max_char_repeat).sub(r"\1", text)
    if not cfg.preserve_space:
        return NormalizedText(text=text, space_positions=())
    positions = tuple(i for i, c in enumerate(text) if c == " ")
    if positions:
        text = text.replace(" ", SPACE_PLACEHOLDER)
    return NormalizedText(text=text, space_positions=positions)
