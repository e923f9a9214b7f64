"""Exception types shared across the package."""
from __future__ import annotations


class VocabGraftError(Exception):
    """Base class for data and format errors raised by this package.

    `location` carries a human-readable position (line number, record index
    or byte offset) when the error originates from parsing an input file.
    """

    def __init__(self, message: str, *, location: str | None = None):
        self.location = location
        if location is not None:
            message = f"{message} ({location})"
        super().__init__(message)


class ModelFormatError(VocabGraftError):
    """Canonical tokenizer-model file is malformed or violates an invariant."""


class SpmFormatError(VocabGraftError):
    """Binary SentencePiece model file is malformed."""


class EmojiFormatError(VocabGraftError):
    """Emoji sequence data file is malformed."""


class EmbeddingFormatError(VocabGraftError):
    """Embedding table file is malformed."""


class CorpusError(VocabGraftError):
    """Corpus stream failed mid-read."""


class TransferError(VocabGraftError):
    """Vocabulary transfer could not be performed with the given inputs."""
