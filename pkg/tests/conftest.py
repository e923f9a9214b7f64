from __future__ import annotations

import pytest

from vocab_graft.emoji import EmojiSet

from helpers import build_model


@pytest.fixture
def ab_model():
    return build_model({"a": -1.0, "b": -1.0, "ab": -1.5})


@pytest.fixture
def emoji_smileys():
    # one single-scalar emoji, one ZWJ family sequence, one flag pair
    return EmojiSet(
        sequences=frozenset(
            [
                "\U0001F600",
                "\U0001F468‍\U0001F469‍\U0001F466",
                "\U0001F1F9\U0001F1ED",
            ]
        ),
        source_version="test",
    )


@pytest.fixture
def corpus_file(tmp_path):
    def write(lines, name="corpus.txt"):
        path = tmp_path / name
        path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
        return path

    return write
