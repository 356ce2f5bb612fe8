"""Piano rolls, edit events, and the parity algebra connecting them.

A piano roll is a binary time x pitch grid; cell (t, p) = 1 means pitch
row p sounds at step t. An edit event toggles one cell: it adds a note
if the cell is empty and removes it otherwise. A sequence of edit events
realizes a roll through per-cell parity (mod-2 sums), which makes
realization invariant under reordering of the sequence. Everything here
is a value type: operations return new rolls and never mutate inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import BoundsError, ShapeError

Cell = tuple[int, int]


@dataclass(frozen=True, order=True)
class EditEvent:
    """A single (time, pitch) cell toggle."""

    time: int
    pitch: int

    @property
    def cell(self) -> Cell:
        return (self.time, self.pitch)


class PianoRoll:
    """Immutable binary occupancy grid of shape (time_steps, pitch_count).

    Row 0 of the pitch axis corresponds to MIDI pitch ``pitch_offset``.
    """

    __slots__ = ("time_steps", "pitch_count", "pitch_offset", "_cells")

    def __init__(self, cells: np.ndarray, pitch_offset: int = 36):
        arr = np.array(cells, dtype=np.uint8, copy=True)
        if arr.ndim != 2:
            raise ShapeError(f"piano roll must be 2-D, got shape {arr.shape}")
        t, p = arr.shape
        if t < 1 or p < 1:
            raise ShapeError(f"piano roll needs at least one cell, got {t}x{p}")
        if pitch_offset < 0 or pitch_offset + p - 1 > 127:
            raise ShapeError(
                f"pitch rows 0..{p - 1} at offset {pitch_offset} leave the MIDI range"
            )
        if arr.max(initial=0) > 1:
            raise ShapeError("piano roll cells must be 0 or 1")
        arr.setflags(write=False)
        object.__setattr__(self, "time_steps", t)
        object.__setattr__(self, "pitch_count", p)
        object.__setattr__(self, "pitch_offset", pitch_offset)
        object.__setattr__(self, "_cells", arr)

    def __setattr__(self, name, value):  # pragma: no cover - guard only
        raise AttributeError("PianoRoll is immutable")

    @classmethod
    def empty(cls, time_steps: int, pitch_count: int, pitch_offset: int = 36) -> PianoRoll:
        return cls(np.zeros((time_steps, pitch_count), dtype=np.uint8), pitch_offset)

    @classmethod
    def from_notes(
        cls,
        time_steps: int,
        pitch_count: int,
        notes: Iterable[Cell],
        pitch_offset: int = 36,
    ) -> PianoRoll:
        grid = np.zeros((time_steps, pitch_count), dtype=np.uint8)
        for t, p in notes:
            if not (0 <= t < time_steps and 0 <= p < pitch_count):
                raise BoundsError(f"note ({t}, {p}) outside {time_steps}x{pitch_count} roll")
            grid[t, p] = 1
        return cls(grid, pitch_offset)

    @property
    def cells(self) -> np.ndarray:
        """Read-only (time_steps, pitch_count) uint8 view."""
        return self._cells

    @property
    def note_count(self) -> int:
        return int(self._cells.sum())

    def dims_match(self, other: PianoRoll) -> bool:
        return (
            self.time_steps == other.time_steps
            and self.pitch_count == other.pitch_count
            and self.pitch_offset == other.pitch_offset
        )

    def __contains__(self, cell: Cell) -> bool:
        t, p = cell
        return bool(self._cells[t, p])

    def __eq__(self, other) -> bool:
        if not isinstance(other, PianoRoll):
            return NotImplemented
        return self.dims_match(other) and bool(np.array_equal(self._cells, other._cells))

    def __hash__(self) -> int:
        return hash((self.time_steps, self.pitch_count, self.pitch_offset, self._cells.tobytes()))

    def __repr__(self) -> str:
        return (
            f"PianoRoll({self.time_steps}x{self.pitch_count}, "
            f"offset={self.pitch_offset}, notes={self.note_count})"
        )

    def fingerprint(self) -> bytes:
        """Stable byte fingerprint of dimensions plus contents."""
        head = f"{self.time_steps},{self.pitch_count},{self.pitch_offset};".encode()
        return head + self._cells.tobytes()

    def to_json_dict(self) -> dict:
        return {
            "time_steps": self.time_steps,
            "pitch_count": self.pitch_count,
            "pitch_offset": self.pitch_offset,
            "notes": [[int(t), int(p)] for t, p in sorted(note_list(self))],
        }

    def to_json(self) -> str:
        """Canonical JSON form: fixed key order, notes sorted lexicographically."""
        return json.dumps(self.to_json_dict(), separators=(",", ":"))

    @classmethod
    def from_json_dict(cls, obj: dict) -> PianoRoll:
        return cls.from_notes(
            int(obj["time_steps"]),
            int(obj["pitch_count"]),
            [(int(t), int(p)) for t, p in obj["notes"]],
            pitch_offset=int(obj["pitch_offset"]),
        )

    @classmethod
    def from_json(cls, text: str) -> PianoRoll:
        return cls.from_json_dict(json.loads(text))


class EditSequence:
    """Ordered list of edit events; realization depends only on cell parities."""

    __slots__ = ("events",)

    def __init__(self, events: Iterable[EditEvent] = ()):
        self.events: list[EditEvent] = [
            e if isinstance(e, EditEvent) else EditEvent(*e) for e in events
        ]

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[EditEvent]:
        return iter(self.events)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EditSequence):
            return NotImplemented
        return self.events == other.events

    def __repr__(self) -> str:
        return f"EditSequence({self.events!r})"


def _check_bounds(roll: PianoRoll, event: EditEvent) -> None:
    if not (0 <= event.time < roll.time_steps and 0 <= event.pitch < roll.pitch_count):
        raise BoundsError(
            f"event ({event.time}, {event.pitch}) outside "
            f"{roll.time_steps}x{roll.pitch_count} roll"
        )


def apply_event(roll: PianoRoll, event: EditEvent) -> PianoRoll:
    """Toggle one cell, returning a new roll. Self-inverse at a fixed event."""
    _check_bounds(roll, event)
    grid = np.array(roll.cells, copy=True)
    grid[event.time, event.pitch] ^= 1
    return PianoRoll(grid, roll.pitch_offset)


def realize(
    seq: EditSequence | Sequence[EditEvent],
    time_steps: int,
    pitch_count: int,
    pitch_offset: int = 36,
) -> PianoRoll:
    """Map an edit sequence to the roll whose cells have odd toggle parity.

    The empty sequence realizes the empty roll. Invariant under any
    permutation of ``seq``.
    """
    grid = np.zeros((time_steps, pitch_count), dtype=np.uint8)
    for event in seq:
        if not (0 <= event.time < time_steps and 0 <= event.pitch < pitch_count):
            raise BoundsError(
                f"event ({event.time}, {event.pitch}) outside {time_steps}x{pitch_count} roll"
            )
        grid[event.time, event.pitch] ^= 1
    return PianoRoll(grid, pitch_offset)


def symmetric_difference(a: PianoRoll, b: PianoRoll) -> set[Cell]:
    """Cells where the two rolls disagree (per-cell exclusive or)."""
    if not a.dims_match(b):
        raise ShapeError(
            f"roll dimensions differ: {a.time_steps}x{a.pitch_count}@{a.pitch_offset} "
            f"vs {b.time_steps}x{b.pitch_count}@{b.pitch_offset}"
        )
    ts, ps = np.nonzero(a.cells ^ b.cells)
    return {(int(t), int(p)) for t, p in zip(ts, ps)}


def note_list(roll: PianoRoll) -> set[Cell]:
    """Set of all occupied cells."""
    ts, ps = np.nonzero(roll.cells)
    return {(int(t), int(p)) for t, p in zip(ts, ps)}
