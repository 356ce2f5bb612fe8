"""Deterministic training loop over augmented pairs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..augment import AugmentConfig, make_pair, uniform_target
from ..core import PianoRoll
from ..errors import ConfigError
from .optim import AdamState, adam_step
from .unet import ScorerModel, UNetConfig, init_model, loss_and_grads

DEFAULT_BATCH_SIZE = 16


@dataclass
class TrainResult:
    model: ScorerModel
    loss_trace: list[float]  # per-epoch mean loss


def train(
    corpus: list[PianoRoll],
    aug_cfg: AugmentConfig,
    net_cfg: UNetConfig,
    epochs: int,
    seed: int = 0,
    learning_rate: float = 0.001,
    batch_size: int = DEFAULT_BATCH_SIZE,
    on_epoch: Callable[[int, float], None] | None = None,
) -> TrainResult:
    """Train a fresh scorer on ``corpus``; bit-reproducible given ``seed``.

    Every epoch regenerates ``pairs_per_target`` corruptions of each
    target from an epoch-specific stream, drops pairs whose input equals
    the target, shuffles the rest, and optimizes the mean uniform-target
    KL loss over minibatches.
    """
    if not corpus:
        raise ConfigError("training corpus is empty")
    for roll in corpus:
        if (roll.time_steps, roll.pitch_count) != (net_cfg.time_steps, net_cfg.pitch_count):
            raise ConfigError(
                f"corpus roll {roll.time_steps}x{roll.pitch_count} does not match "
                f"model dims {net_cfg.time_steps}x{net_cfg.pitch_count}"
            )

    model = init_model(net_cfg, seed=seed)
    state = AdamState(learning_rate=learning_rate)
    trace: list[float] = []

    for epoch in range(epochs):
        pair_rng = np.random.default_rng([seed, epoch, 0])
        drop_rng = np.random.default_rng([seed, epoch, 1])

        inputs: list[np.ndarray] = []
        masses: list[np.ndarray] = []
        for target in corpus:
            for _ in range(aug_cfg.pairs_per_target):
                pair = make_pair(target, aug_cfg, pair_rng)
                if not pair.support:
                    continue
                inputs.append(pair.input.cells.astype(np.float64))
                masses.append(uniform_target(pair))
        if not inputs:
            raise ConfigError("every augmented pair had empty support; nothing to train on")

        order = pair_rng.permutation(len(inputs))
        epoch_losses: list[float] = []
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            batch = np.stack([inputs[i] for i in idx])
            mass = np.stack([masses[i] for i in idx])
            loss, grads = loss_and_grads(model, batch, mass, rng=drop_rng, training=True)
            model, state = adam_step(model, grads, state)
            epoch_losses.append(loss)

        mean_loss = float(np.mean(epoch_losses))
        trace.append(mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)

    return TrainResult(model=model, loss_trace=trace)
