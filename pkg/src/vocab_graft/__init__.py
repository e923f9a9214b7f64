"""vocab-graft: vocabulary transfer toolkit for unigram subword tokenizers."""
from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import active_backend
from .embeddings import InitScheme, SplitEmbeddings, init_new_rows, lookup, merge, split
from .emoji import EmojiSet, load_emoji_set
from .errors import (
    CorpusError,
    EmbeddingFormatError,
    EmojiFormatError,
    ModelFormatError,
    SpmFormatError,
    TransferError,
    VocabGraftError,
)
from .masking import MaskedBatch, MaskingConfig, MaskingStats, mask_sequence, masking_stats
from .model_store import (
    PieceKind,
    SpecialTokens,
    TokenizerModel,
    VocabPiece,
    import_spm,
    load_canonical,
    save_canonical,
)
from .normalizer import NormalizedText, NormalizerConfig, normalize
from .pipeline import (
    ChunkedDataset,
    OovReport,
    chunk_records,
    iter_corpus,
    load_chunks,
    oov_report,
    save_chunks,
    segmentation_diff,
)
from .schedules import (
    LayerStack,
    ScheduleConfig,
    default_layer_stack,
    frozen_mask,
    layer_lr,
    lr_at,
)
from .tokenizer import Encoding, Tokenizer, count_unk, decode, encode, iter_encodings
from .transfer import THAI_BLOCK, TransferPolicy, TransferReport, script_filter, transfer

__all__ = [
    "ChunkedDataset",
    "CorpusError",
    "EmbeddingFormatError",
    "EmojiFormatError",
    "EmojiSet",
    "Encoding",
    "InitScheme",
    "LayerStack",
    "MaskedBatch",
    "MaskingConfig",
    "MaskingStats",
    "ModelFormatError",
    "NormalizedText",
    "NormalizerConfig",
    "OovReport",
    "PieceKind",
    "ScheduleConfig",
    "SpecialTokens",
    "SplitEmbeddings",
    "SpmFormatError",
    "THAI_BLOCK",
    "Tokenizer",
    "TokenizerModel",
    "TransferError",
    "TransferPolicy",
    "TransferReport",
    "VocabGraftError",
    "VocabPiece",
    "active_backend",
    "chunk_records",
    "count_unk",
    "decode",
    "default_layer_stack",
    "encode",
    "frozen_mask",
    "import_spm",
    "init_new_rows",
    "iter_corpus",
    "iter_encodings",
    "layer_lr",
    "load_canonical",
    "load_chunks",
    "load_emoji_set",
    "lookup",
    "lr_at",
    "mask_sequence",
    "masking_stats",
    "merge",
    "normalize",
    "oov_report",
    "save_canonical",
    "save_chunks",
    "script_filter",
    "segmentation_diff",
    "split",
    "transfer",
]
