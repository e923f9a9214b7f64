"""Dynamic masked-language-modeling sampler.

Per sequence, exactly max(1, round(ratio * selectable)) positions are drawn
without replacement; each selected position becomes the mask token 80% of
the time, a random vocabulary token 10%, and stays unchanged 10% (defaults).
The RNG is counter-based, keyed by (seed, epoch, sequence_index), so epochs
differ, reruns reproduce, and parallel workers agree with sequential runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

LABEL_IGNORE = -100


def _round_half_away(x: float) -> int:
    # round() would round halves to even; counts must round 0.5 up
    return int(x + 0.5)


@dataclass(frozen=True)
class MaskingConfig:
    """Masking ratios, branch probabilities and id ranges."""

    mask_id: int
    unk_id: int
    maskable_vocab_range: tuple[int, int]  # half-open [lo, hi) for random replacement
    mask_ratio: float = 0.15
    p_mask: float = 0.80
    p_random: float = 0.10
    p_keep: float = 0.10
    special_ids: frozenset[int] = frozenset()
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.mask_ratio <= 1:
            raise ValueError(f"mask_ratio must be in (0, 1], got {self.mask_ratio}")
        total = (
            Fraction(str(self.p_mask)) + Fraction(str(self.p_random)) + Fraction(str(self.p_keep))
        )
        if total != 1:
            raise ValueError(f"p_mask + p_random + p_keep must equal 1 exactly, got {total}")
        if any(p < 0 for p in (self.p_mask, self.p_random, self.p_keep)):
            raise ValueError("branch probabilities must be non-negative")
        lo, hi = self.maskable_vocab_range
        size = hi - lo
        if lo <= self.unk_id < hi:
            size -= 1
        if self.p_random > 0 and size < 1:
            raise ValueError("maskable_vocab_range leaves no id to draw random replacements from")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class MaskedBatch:
    """One corrupted sequence: inputs, labels (sentinel off-selection), selection mask."""

    input_ids: np.ndarray
    labels: np.ndarray
    selected: np.ndarray


def _rng_for(cfg: MaskingConfig, epoch: int, sequence_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence([cfg.seed, epoch, sequence_index])
    return np.random.Generator(np.random.Philox(seed=ss))


def selection_count(mask_ratio: float, selectable: int) -> int:
    """Number of positions to select: max(1, round-half-away(ratio * selectable))."""
    return max(1, _round_half_away(mask_ratio * selectable))


def mask_sequence(ids, cfg: MaskingConfig, epoch: int, sequence_index: int) -> MaskedBatch:
    """Corrupt one sequence of token ids for MLM training.

    Special positions (ids in cfg.special_ids) are never selectable. The
    random-replacement branch draws uniformly from the maskable range,
    excluding the unk id. Raises ValueError when no position is selectable.
    """
    if epoch < 0 or sequence_index < 0:
        raise ValueError("epoch and sequence_index must be non-negative")
    original = np.asarray(ids, dtype=np.int64)
    if original.ndim != 1 or len(original) == 0:
        raise ValueError("ids must be a non-empty 1-D sequence")
    if cfg.special_ids:
        selectable = ~np.isin(original, np.fromiter(cfg.special_ids, dtype=np.int64))
    else:
        selectable = np.ones(len(original), dtype=bool)
    positions = np.flatnonzero(selectable)
    if len(positions) == 0:
        raise ValueError("sequence has no selectable positions (all special tokens)")

    k = selection_count(cfg.mask_ratio, len(positions))
    k = min(k, len(positions))
    rng = _rng_for(cfg, epoch, sequence_index)
    chosen = np.sort(rng.choice(positions, size=k, replace=False))

    u = rng.random(k)
    to_mask = u < cfg.p_mask
    to_random = (~to_mask) & (u < cfg.p_mask + cfg.p_random)

    input_ids = original.copy()
    input_ids[chosen[to_mask]] = cfg.mask_id
    n_random = int(to_random.sum())
    if n_random:
        lo, hi = cfg.maskable_vocab_range
        exclude_unk = lo <= cfg.unk_id < hi
        size = hi - lo - (1 if exclude_unk else 0)
        draws = rng.integers(0, size, size=n_random)
        if exclude_unk:
            draws[draws >= cfg.unk_id - lo] += 1
        input_ids[chosen[to_random]] = lo + draws

    labels = np.full(len(original), LABEL_IGNORE, dtype=np.int64)
    labels[chosen] = original[chosen]
    selected = np.zeros(len(original), dtype=bool)
    selected[chosen] = True
    return MaskedBatch(input_ids=input_ids, labels=labels, selected=selected)


@dataclass(frozen=True)
class MaskingStats:
    """Empirical frequencies over a stream of masked batches."""

    observed_ratio: float
    observed_p_mask: float
    observed_p_random: float
    observed_p_keep: float
    total_positions: int
    total_selected: int


def masking_stats(batches: Iterable[MaskedBatch], mask_id: int) -> MaskingStats:
    """Exact empirical branch frequencies over `batches`.

    Branches are inferred from the data: selected positions equal to the
    mask id took the mask branch, positions equal to their label took the
    keep branch, everything else the random branch. A random draw that hits
    the original id is indistinguishable from keep and is counted as such.
    """
    total = selected = masked = kept = randomized = 0
    for batch in batches:
        total += len(batch.input_ids)
        sel = batch.selected
        n_sel = int(sel.sum())
        selected += n_sel
        if n_sel == 0:
            continue
        inputs = batch.input_ids[sel]
        originals = batch.labels[sel]
        is_mask = inputs == mask_id
        is_keep = (~is_mask) & (inputs == originals)
        masked += int(is_mask.sum())
        kept += int(is_keep.sum())
        randomized += int((~is_mask & ~is_keep).sum())
    if total == 0:
        raise ValueError("masking_stats requires a non-empty stream")
    return MaskingStats(
        observed_ratio=selected / total,
        observed_p_mask=masked / selected if selected else 0.0,
        observed_p_random=randomized / selected if selected else 0.0,
        observed_p_keep=kept / selected if selected else 0.0,
        total_positions=total,
        total_selected=selected,
    )
