"""Training-control signals as pure functions of the step counter.

Covers the linear warmup/decay ramp with explicit reset points, per-layer
discriminative learning rates (each layer 2.6x smaller than the one after
it in the forward pass), and gradual unfreezing every fixed step interval
starting from the layer nearest the output.
"""
from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass
from typing import Iterator

ADDED_EMBEDDINGS = "added_embeddings"
EXISTING_EMBEDDINGS = "existing_embeddings"
LM_HEAD = "lm_head"


@dataclass(frozen=True)
class LayerStack:
    """The 15 parameter groups in forward-pass order; layers[0] gets the peak rate."""

    layers: tuple[str, ...]

    def __post_init__(self):
        if len(self.layers) != 15:
            raise ValueError(f"expected exactly 15 layers, got {len(self.layers)}")
        if len(set(self.layers)) != len(self.layers):
            raise ValueError("layer names must be unique")

    def unfreeze_order(self) -> tuple[str, ...]:
        """Layers after the always-unfrozen first one, nearest the output first."""
        return tuple(reversed(self.layers[1:]))


def default_layer_stack() -> LayerStack:
    blocks = tuple(f"block_{i}" for i in range(1, 13))
    return LayerStack(layers=(ADDED_EMBEDDINGS, EXISTING_EMBEDDINGS) + blocks + (LM_HEAD,))


@dataclass(frozen=True)
class ScheduleConfig:
    peak_lr: float = 3e-4
    decay_factor: float = 2.6
    warmup_steps: int = 24_000
    max_steps: int = 500_000
    unfreeze_interval: int = 1_000
    resets: tuple[int, ...] = ()
    discriminative_enabled: bool = True
    scheduler_steps_per_update: int = 1

    def __post_init__(self):
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be positive")
        if self.decay_factor <= 1:
            raise ValueError(f"decay_factor must be > 1, got {self.decay_factor}")
        if not 0 < self.warmup_steps < self.max_steps:
            raise ValueError("need 0 < warmup_steps < max_steps")
        if self.unfreeze_interval < 1:
            raise ValueError("unfreeze_interval must be >= 1")
        if self.scheduler_steps_per_update < 1:
            raise ValueError("scheduler_steps_per_update must be >= 1")
        if any(b <= a for a, b in zip(self.resets, self.resets[1:])):
            raise ValueError("resets must be strictly increasing")
        if any(r < 0 for r in self.resets):
            raise ValueError("resets must be non-negative")


def lr_at(cfg: ScheduleConfig, step: int) -> float:
    """Linear warmup then linear decay, restarting from 0 at each reset point."""
    if step < 0:
        raise ValueError("step must be non-negative")
    step *= cfg.scheduler_steps_per_update
    i = bisect_right(cfg.resets, step)
    base = cfg.resets[i - 1] if i else 0
    s = step - base
    if s < cfg.warmup_steps:
        return cfg.peak_lr * s / cfg.warmup_steps
    return cfg.peak_lr * max(0.0, (cfg.max_steps - s) / (cfg.max_steps - cfg.warmup_steps))


def layer_lr(cfg: ScheduleConfig, stack: LayerStack, layer: str, step: int) -> float:
    """Learning rate of one layer at `step`.

    With discriminative fine-tuning enabled, layers[0] runs at the ramp value
    and every following layer (walking backwards from the output) is
    decay_factor times smaller than its successor; disabled, all layers share
    the ramp value.
    """
    if layer not in stack.layers:
        raise ValueError(f"unknown layer {layer!r}")
    base = lr_at(cfg, step)
    if not cfg.discriminative_enabled or layer == stack.layers[0]:
        return base
    distance = stack.unfreeze_order().index(layer) + 1
    return base / cfg.decay_factor**distance


def frozen_mask(cfg: ScheduleConfig, stack: LayerStack, step: int) -> dict[str, bool]:
    """Map layer -> frozen? at `step`; True means the layer is still frozen.

    layers[0] is always unfrozen; every `unfreeze_interval` steps one more
    layer thaws, nearest the output first, effective for the update at that
    step. Resets never refreeze anything.
    """
    if step < 0:
        raise ValueError("step must be non-negative")
    thawed = min(step // cfg.unfreeze_interval, len(stack.layers) - 1)
    unfrozen = {stack.layers[0], *stack.unfreeze_order()[:thawed]}
    return {layer: layer not in unfrozen for layer in stack.layers}


def schedule_rows(
    cfg: ScheduleConfig, stack: LayerStack, until: int, every: int = 1
) -> Iterator[tuple[int, str, float, bool]]:
    """Yield (step, layer, lr, frozen) rows for steps 0, every, ... <= until."""
    if every < 1:
        raise ValueError("every must be >= 1")
    for step in range(0, until + 1, every):
        mask = frozen_mask(cfg, stack, step)
        for layer in stack.layers:
            yield step, layer, layer_lr(cfg, stack, layer, step), mask[layer]
