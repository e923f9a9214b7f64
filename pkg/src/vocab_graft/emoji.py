"""Emoji sequence data: loading the Unicode data-file format and longest-match lookup."""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

from .errors import EmojiFormatError

_VERSION_RE = re.compile(r"^#\s*Version:\s*(.+?)\s*$")
_HEX_RE = re.compile(r"^[0-9A-Fa-f]{1,6}$")

# Terminal marker key inside the matcher trie; no character is the empty string.
_LEAF = ""


@dataclass(frozen=True)
class EmojiSet:
    """Set of emoji scalar sequences with the data-file version they came from."""

    sequences: frozenset[str]
    source_version: str = "unknown"

    def __post_init__(self):
        if any(not s for s in self.sequences):
            raise ValueError("emoji sequences must be non-empty")

    def __len__(self) -> int:
        return len(self.sequences)


def load_emoji_set(path: str | Path) -> EmojiSet:
    """Parse a Unicode emoji-sequences / emoji-zwj-sequences data file.

    Lines look like `codepoints ; type ; description # comment` where the
    first field is either a range `1F600..1F64F` of single scalars or a
    space-separated scalar sequence. Comments and blank lines are skipped;
    a `# Version:` comment is recorded.
    """
    sequences: set[str] = set()
    version = "unknown"
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            loc = f"{path}:{lineno}"
            m = _VERSION_RE.match(line)
            if m:
                version = m.group(1)
                continue
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            fields = [f.strip() for f in body.split(";")]
            spec = fields[0]
            if ".." in spec:
                lo_hex, _, hi_hex = spec.partition("..")
                lo_hex, hi_hex = lo_hex.strip(), hi_hex.strip()
                if not (_HEX_RE.match(lo_hex) and _HEX_RE.match(hi_hex)):
                    raise EmojiFormatError(f"malformed codepoint range {spec!r}", location=loc)
                lo, hi = int(lo_hex, 16), int(hi_hex, 16)
                if lo > hi or hi > 0x10FFFF:
                    raise EmojiFormatError(f"invalid codepoint range {spec!r}", location=loc)
                sequences.update(chr(cp) for cp in range(lo, hi + 1))
            else:
                parts = spec.split()
                if not parts or not all(_HEX_RE.match(p) for p in parts):
                    raise EmojiFormatError(f"malformed codepoint sequence {spec!r}", location=loc)
                cps = [int(p, 16) for p in parts]
                if any(cp > 0x10FFFF for cp in cps):
                    raise EmojiFormatError(f"codepoint out of range in {spec!r}", location=loc)
                sequences.add("".join(chr(cp) for cp in cps))
    return EmojiSet(sequences=frozenset(sequences), source_version=version)


def build_matcher(emoji_set: EmojiSet | None) -> dict:
    """Build a character trie for longest-match scanning. Empty dict when no set."""
    trie: dict = {}
    if emoji_set is None:
        return trie
    for seq in emoji_set.sequences:
        node = trie
        for ch in seq:
            node = node.setdefault(ch, {})
        node[_LEAF] = True
    return trie


def longest_match(trie: dict, text: str, start: int) -> int:
    """Length of the longest emoji sequence in `trie` starting at `start`, or 0."""
    node = trie
    best = 0
    i = start
    n = len(text)
    while i < n:
        node = node.get(text[i])
        if node is None:
            break
        i += 1
        if _LEAF in node:
            best = i - start
    return best
