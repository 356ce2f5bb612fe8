"""Training-pair construction by masking notes and injecting wrong ones.

Each (input, target) pair is made from a clean target roll by removing a
random fraction of its notes and switching on a small random fraction of
its empty cells. The training label for the pair is the uniform
distribution over the cells where the two rolls disagree, so every
outstanding correction is an equally likely next edit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Cell, PianoRoll, symmetric_difference
from .errors import ConfigError, EmptySupportError

MAX_EXTRANEOUS_FRACTION = 0.015


@dataclass(frozen=True)
class AugmentConfig:
    """Fraction ranges for masking and extraneous-note injection."""

    mask_fraction_range: tuple[float, float] = (0.0, 1.0)
    extraneous_fraction_range: tuple[float, float] = (0.0, MAX_EXTRANEOUS_FRACTION)
    pairs_per_target: int = 4

    def __post_init__(self):
        lo, hi = self.mask_fraction_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError(f"mask fraction range {self.mask_fraction_range} is not ordered in [0, 1]")
        lo, hi = self.extraneous_fraction_range
        if not 0.0 <= lo <= hi <= MAX_EXTRANEOUS_FRACTION:
            raise ConfigError(
                f"extraneous fraction range {self.extraneous_fraction_range} "
                f"is not ordered in [0, {MAX_EXTRANEOUS_FRACTION}]"
            )
        if self.pairs_per_target < 1:
            raise ConfigError("pairs_per_target must be at least 1")


@dataclass(frozen=True)
class TrainingPair:
    """Corrupted input, clean target, and the cells separating them."""

    input: PianoRoll
    target: PianoRoll
    support: frozenset[Cell]


def _round_nearest(x: float) -> int:
    # ties round up, for determinism independent of banker's rounding
    return int(np.floor(x + 0.5))


def make_pair(target: PianoRoll, cfg: AugmentConfig, rng: np.random.Generator) -> TrainingPair:
    """Draw one corrupted input for ``target``; deterministic given the rng state.

    Mask and extraneous fractions are drawn uniformly from their config
    ranges; counts round to nearest. Extraneous cells are drawn from
    cells empty in the target, so masked and extraneous cells never
    collide and the support is their union.
    """
    f_mask = rng.uniform(*cfg.mask_fraction_range)
    f_extra = rng.uniform(*cfg.extraneous_fraction_range)

    grid = np.array(target.cells, copy=True)
    occupied = np.flatnonzero(grid)
    empty = np.flatnonzero(grid == 0)

    n_mask = min(_round_nearest(f_mask * occupied.size), occupied.size)
    n_extra = min(_round_nearest(f_extra * grid.size), empty.size)

    flat = grid.reshape(-1)
    if n_mask:
        flat[rng.choice(occupied, size=n_mask, replace=False)] = 0
    if n_extra:
        flat[rng.choice(empty, size=n_extra, replace=False)] = 1

    input_roll = PianoRoll(grid, target.pitch_offset)
    support = frozenset(symmetric_difference(input_roll, target))
    return TrainingPair(input_roll, target, support)


def uniform_target(pair: TrainingPair) -> np.ndarray:
    """Uniform probability grid over the pair's support cells.

    Raises :class:`EmptySupportError` when input == target; callers drop
    such pairs.
    """
    if not pair.support:
        raise EmptySupportError("input equals target; no cells to supervise")
    mass = np.zeros((pair.target.time_steps, pair.target.pitch_count), dtype=np.float64)
    weight = 1.0 / len(pair.support)
    for t, p in pair.support:
        mass[t, p] = weight
    return mass


def derive_seed(master_seed: int, worker_index: int) -> int:
    """Per-worker seed split rule for parallel pair generation."""
    return master_seed ^ worker_index
