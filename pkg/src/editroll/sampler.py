"""Direct ancestral sampling of edit events, with undo/redo sessions.

Each step scores the current roll, samples one cell from the
temperature softmax over the logits, and toggles it. Because removals
are first-class events, the model can revise its own earlier output;
budgets and protected cells keep it from erasing what the user wants
kept. A session records every event, so any step can be undone and
redone note by note.
"""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core import Cell, EditEvent, PianoRoll, apply_event
from .errors import ConfigError, NoLegalEventError, StackEmptyError
from .nn.unet import ScorerModel, forward

# a roll fingerprint seen this many times counts as a stable cycle
DEFAULT_STABILIZE_REVISITS = 3


@dataclass(frozen=True)
class SamplerConfig:
    temperature: float = 1.0
    max_removals: int | None = None
    max_iterations: int = 2000
    protect_input: bool = True
    add_only: bool = False
    seed: int = 0
    stabilize_revisits: int = DEFAULT_STABILIZE_REVISITS

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be at least 1")
        if self.max_removals is not None and self.max_removals < 0:
            raise ConfigError("max_removals cannot be negative")
        if self.stabilize_revisits < 2:
            raise ConfigError("stabilize_revisits must be at least 2")


class StopReason(Enum):
    BUDGET = "budget"
    STABILIZED = "stabilized"


@dataclass(frozen=True)
class HistoryEntry:
    event: EditEvent
    kind: str  # "add" | "remove" | "user"
    logprob: float | None = None


def _fingerprint(roll: PianoRoll) -> int:
    return int.from_bytes(hashlib.blake2b(roll.fingerprint(), digest_size=8).digest(), "little")


@dataclass
class EditSession:
    """Single-owner mutable sampling state built around the parity algebra."""

    initial: PianoRoll
    config: SamplerConfig = field(default_factory=SamplerConfig)
    current: PianoRoll = field(init=False)
    history: list[HistoryEntry] = field(default_factory=list)
    redo_stack: list[HistoryEntry] = field(default_factory=list)
    protected: set[Cell] = field(default_factory=set)
    removals_used: int = 0
    visit_counts: Counter = field(default_factory=Counter)
    transcript: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.current = self.initial
        self.rng = np.random.default_rng(self.config.seed)
        if self.config.protect_input:
            self.protected = {
                (int(t), int(p)) for t, p in zip(*np.nonzero(self.initial.cells))
            }

    def _record(self, kind: str, event: EditEvent, logprob: float | None) -> None:
        self.transcript.append(
            {
                "index": len(self.transcript),
                "kind": kind,
                "t": event.time,
                "p": event.pitch,
                "logprob": logprob,
            }
        )


def temperature_softmax(
    logits: np.ndarray, temperature: float, mask: set[Cell] | None = None
) -> np.ndarray:
    """Distribution over cells proportional to exp(logit / temperature).

    Masked cells get zero mass and the rest renormalize; temperature 1
    reproduces the plain softmax.
    """
    if temperature <= 0.0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    if mask:
        z = z.copy()
        for t, p in mask:
            z[t, p] = -np.inf
    if not np.isfinite(z).any():
        raise NoLegalEventError("every cell is masked")
    peak = z.max()
    expz = np.exp(z - peak)
    return expz / expz.sum()


def _step_mask(session: EditSession, cfg: SamplerConfig) -> set[Cell]:
    occupied = {(int(t), int(p)) for t, p in zip(*np.nonzero(session.current.cells))}
    if cfg.add_only:
        return occupied
    if cfg.max_removals is not None and session.removals_used >= cfg.max_removals:
        return occupied
    if cfg.protect_input:
        return occupied & session.protected
    return set()


def step(
    session: EditSession,
    model: ScorerModel,
    cfg: SamplerConfig | None = None,
    rng: np.random.Generator | None = None,
) -> EditEvent:
    """Sample one edit event, apply it, and record it.

    Removal of protected cells is masked while ``protect_input`` holds;
    all occupied cells are masked in add-only mode or once the removal
    budget is spent. Any forward step clears the redo stack.
    """
    cfg = cfg or session.config
    rng = rng or session.rng
    logits = forward(model, session.current, training=False)
    probs = temperature_softmax(logits, cfg.temperature, _step_mask(session, cfg))
    flat_index = int(rng.choice(probs.size, p=probs.reshape(-1)))
    t, p = divmod(flat_index, session.current.pitch_count)
    event = EditEvent(t, p)
    logprob = float(np.log(probs[t, p]))

    was_occupied = (t, p) in session.current
    session.current = apply_event(session.current, event)
    kind = "remove" if was_occupied else "add"
    if was_occupied:
        session.removals_used += 1
    session.history.append(HistoryEntry(event, kind, logprob))
    session.redo_stack.clear()
    session.visit_counts[_fingerprint(session.current)] += 1
    session._record(kind, event, logprob)
    return event


def run(
    session: EditSession,
    model: ScorerModel,
    cfg: SamplerConfig | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[PianoRoll, StopReason]:
    """Step until the iteration budget or until the roll state recurs.

    Stabilization means some roll fingerprint has been seen
    ``stabilize_revisits`` times: the add/remove oscillation the model
    falls into once it is done correcting.
    """
    cfg = cfg or session.config
    for _ in range(cfg.max_iterations):
        step(session, model, cfg, rng)
        # only the state just entered can have crossed the threshold
        if session.visit_counts[_fingerprint(session.current)] >= cfg.stabilize_revisits:
            return session.current, StopReason.STABILIZED
    return session.current, StopReason.BUDGET


def undo(session: EditSession) -> EditEvent:
    """Revert the last event (toggles are self-inverse); push it for redo."""
    if not session.history:
        raise StackEmptyError("nothing to undo")
    entry = session.history.pop()
    session.current = apply_event(session.current, entry.event)
    if entry.kind == "remove":
        session.removals_used -= 1
    session.redo_stack.append(entry)
    session._record("undo", entry.event, None)
    return entry.event


def redo(session: EditSession) -> EditEvent:
    """Re-apply the most recently undone event."""
    if not session.redo_stack:
        raise StackEmptyError("nothing to redo")
    entry = session.redo_stack.pop()
    session.current = apply_event(session.current, entry.event)
    if entry.kind == "remove":
        session.removals_used += 1
    session.history.append(entry)
    session._record("redo", entry.event, None)
    return entry.event


def user_edit(session: EditSession, event: EditEvent, protect: bool = False) -> None:
    """Apply a manual toggle; it lands in history, so it is undoable."""
    session.current = apply_event(session.current, event)
    session.history.append(HistoryEntry(event, "user", None))
    session.redo_stack.clear()
    if protect:
        session.protected.add(event.cell)
    session.visit_counts[_fingerprint(session.current)] += 1
    session._record("user", event, None)


def transcript_lines(session: EditSession) -> str:
    """Session transcript as JSON-lines, one record per event."""
    import json

    return "\n".join(json.dumps(rec, separators=(",", ":")) for rec in session.transcript)
