"""Standard MIDI file ingestion and export.

Reads format 0/1 files (header ``MThd``, track chunks ``MTrk``,
variable-length deltas, running status), flattens them to timed notes,
snaps notes to a sixteenth-note grid, merges all tracks into one binary
roll, and cuts fixed-length bar windows. Export writes a single-track
format-0 file whose re-import reproduces the roll exactly.

Always assumes 4/4 meter; time-signature meta events that disagree are
ignored with a warning. Velocity is not preserved.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .core import PianoRoll
from .errors import ConfigError, MidiParseError

_NOTE_OFF = 0x80
_NOTE_ON = 0x90
_META = 0xFF
_META_END_OF_TRACK = 0x2F
_META_TEMPO = 0x51
_META_TIME_SIGNATURE = 0x58

# data byte counts for channel messages, by upper status nibble
_CHANNEL_DATA_BYTES = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}

DEFAULT_EXPORT_PPQ = 480


@dataclass(frozen=True)
class TimedNote:
    """One note in absolute ticks, before quantization."""

    onset: int
    duration: int
    pitch: int
    track: int

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError(f"note duration must be positive, got {self.duration}")
        if not 0 <= self.pitch <= 127:
            raise ConfigError(f"pitch must be 0..127, got {self.pitch}")


@dataclass(frozen=True)
class QuantizeConfig:
    """Grid geometry for quantization and sample splitting."""

    steps_per_bar: int = 16
    bars_per_sample: int = 8
    pitch_offset: int = 36
    pitch_count: int = 46

    def __post_init__(self):
        if self.steps_per_bar < 4 or self.steps_per_bar % 4 != 0:
            raise ConfigError("steps_per_bar must be a positive multiple of 4 (4/4 meter)")
        if self.bars_per_sample < 1:
            raise ConfigError("bars_per_sample must be at least 1")
        if self.pitch_count < 1 or self.pitch_offset + self.pitch_count - 1 > 127:
            raise ConfigError("pitch range leaves 0..127")

    @property
    def steps_per_sample(self) -> int:
        return self.steps_per_bar * self.bars_per_sample

    def ticks_per_step(self, ppq: int) -> float:
        # 4 quarters per bar under the 4/4 assumption
        return ppq * 4.0 / self.steps_per_bar


@dataclass
class ParsedMidi:
    """Flattened parse result: notes from every track plus timing context."""

    notes: list[TimedNote]
    ppq: int
    total_ticks: int
    tempos: list[tuple[int, int]] = field(default_factory=list)  # (tick, usec per quarter)
    warnings: list[str] = field(default_factory=list)


@dataclass
class QuantizeResult:
    roll: PianoRoll
    dropped_notes: int


def _read_varlen(data: bytes, pos: int) -> tuple[int, int]:
    """Variable-length quantity at ``pos``; returns (value, next position)."""
    value = 0
    for _ in range(4):
        if pos >= len(data):
            raise MidiParseError("truncated variable-length quantity", pos)
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise MidiParseError("variable-length quantity longer than 4 bytes", pos)


def _write_varlen(value: int) -> bytes:
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def parse_midi(data: bytes) -> ParsedMidi:
    """Parse a format 0/1 MIDI byte stream into timed notes.

    Every note-on with a matching note-off becomes one :class:`TimedNote`
    (note-on velocity 0 counts as note-off). Notes left open at the end
    of a track are closed there and a warning is recorded.
    """
    if len(data) < 14 or data[:4] != b"MThd":
        raise MidiParseError("missing MThd header", 0)
    header_len, fmt, ntrks, division = struct.unpack(">IHHH", data[4:14])
    if header_len != 6:
        raise MidiParseError(f"unexpected MThd length {header_len}", 4)
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported MIDI format {fmt}", 8)
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", 12)
    if division == 0:
        raise MidiParseError("zero ticks-per-quarter division", 12)

    pos = 14
    notes: list[TimedNote] = []
    tempos: list[tuple[int, int]] = []
    warnings: list[str] = []
    total_ticks = 0

    for track_index in range(ntrks):
        if pos + 8 > len(data):
            raise MidiParseError(f"expected track chunk {track_index}", pos)
        if data[pos : pos + 4] != b"MTrk":
            raise MidiParseError(f"expected MTrk chunk, got {data[pos:pos + 4]!r}", pos)
        (track_len,) = struct.unpack(">I", data[pos + 4 : pos + 8])
        track_start = pos + 8
        track_end = track_start + track_len
        if track_end > len(data):
            raise MidiParseError("track chunk runs past end of file", pos + 4)

        p = track_start
        tick = 0
        running_status: int | None = None
        # FIFO of onset ticks per (channel, pitch): overlapping same-pitch notes
        open_notes: dict[tuple[int, int], list[int]] = {}
        saw_end = False

        def close_note(channel: int, pitch: int, off_tick: int) -> None:
            stack = open_notes.get((channel, pitch))
            if not stack:
                return
            onset = stack.pop(0)
            duration = off_tick - onset
            if duration <= 0:
                duration = 1  # zero-length on/off pair still counts as a note
            notes.append(TimedNote(onset, duration, pitch, track_index))

        while p < track_end and not saw_end:
            delta, p = _read_varlen(data, p)
            tick += delta
            if p >= track_end:
                raise MidiParseError("event truncated at end of track", p)
            byte = data[p]
            if byte >= 0x80:
                status = byte
                p += 1
            else:
                if running_status is None:
                    raise MidiParseError("data byte without running status", p)
                status = running_status

            if status == _META:
                if p >= track_end:
                    raise MidiParseError("truncated meta event", p)
                meta_type = data[p]
                p += 1
                length, p = _read_varlen(data, p)
                if p + length > track_end:
                    raise MidiParseError("meta event runs past track end", p)
                payload = data[p : p + length]
                p += length
                if meta_type == _META_END_OF_TRACK:
                    saw_end = True
                elif meta_type == _META_TEMPO and length == 3:
                    tempos.append((tick, int.from_bytes(payload, "big")))
                elif meta_type == _META_TIME_SIGNATURE and length >= 2:
                    num, denom_pow = payload[0], payload[1]
                    if (num, 1 << denom_pow) != (4, 4):
                        warnings.append(
                            f"track {track_index}: ignoring {num}/{1 << denom_pow} "
                            "time signature, assuming 4/4"
                        )
                running_status = None  # meta events cancel running status
            elif status in (0xF0, 0xF7):  # sysex
                length, p = _read_varlen(data, p)
                if p + length > track_end:
                    raise MidiParseError("sysex event runs past track end", p)
                p += length
                running_status = None
            elif status >= 0xF8:
                running_status = None  # realtime, no data
            else:
                kind = status >> 4
                if kind not in _CHANNEL_DATA_BYTES:
                    raise MidiParseError(f"unknown status byte 0x{status:02x}", p - 1)
                n = _CHANNEL_DATA_BYTES[kind]
                if p + n > track_end:
                    raise MidiParseError("channel event truncated", p)
                d1 = data[p]
                d2 = data[p + 1] if n == 2 else 0
                p += n
                running_status = status
                channel = status & 0x0F
                if kind == 0x9 and d2 > 0:
                    open_notes.setdefault((channel, d1), []).append(tick)
                elif kind == 0x8 or (kind == 0x9 and d2 == 0):
                    close_note(channel, d1, tick)

        for (channel, pitch), stack in open_notes.items():
            for _ in range(len(stack)):
                warnings.append(
                    f"track {track_index}: note-on pitch {pitch} without note-off, "
                    "closed at track end"
                )
                close_note(channel, pitch, tick)
        total_ticks = max(total_ticks, tick)
        pos = track_end

    return ParsedMidi(notes=notes, ppq=division, total_ticks=total_ticks, tempos=tempos, warnings=warnings)


def quantize_merge(
    notes: list[TimedNote],
    ppq: int,
    cfg: QuantizeConfig,
    total_ticks: int | None = None,
) -> QuantizeResult:
    """Snap notes to the step grid and merge every track into one roll.

    Each note covers every grid cell its quantized span touches; spans
    shorter than half a step keep one cell. Pitches outside the
    configured range are dropped and counted. ``total_ticks`` (e.g. the
    end-of-track time) extends the roll beyond the last note, which is
    what makes export/import round trips exact.
    """
    if ppq <= 0:
        raise ConfigError(f"ppq must be positive, got {ppq}")
    tps = cfg.ticks_per_step(ppq)

    spans: list[tuple[int, int, int]] = []  # (start step, end step, pitch row)
    dropped = 0
    max_end = 0
    for note in notes:
        row = note.pitch - cfg.pitch_offset
        if not 0 <= row < cfg.pitch_count:
            dropped += 1
            continue
        # nearest grid line, ties rounding up
        start = int(np.floor(note.onset / tps + 0.5))
        end = int(np.floor((note.onset + note.duration) / tps + 0.5))
        if end <= start:
            end = start + 1
        spans.append((start, end, row))
        max_end = max(max_end, end)

    time_steps = max_end
    if total_ticks is not None:
        time_steps = max(time_steps, int(np.floor(total_ticks / tps + 0.5)))
    time_steps = max(time_steps, 1)

    grid = np.zeros((time_steps, cfg.pitch_count), dtype=np.uint8)
    for start, end, row in spans:
        grid[start:end, row] = 1
    return QuantizeResult(PianoRoll(grid, cfg.pitch_offset), dropped)


def split_samples(roll: PianoRoll, cfg: QuantizeConfig) -> list[PianoRoll]:
    """Cut consecutive non-overlapping windows of ``bars_per_sample`` bars.

    The trailing partial window is dropped. Notes held across a boundary
    are truncated at it.
    """
    window = cfg.steps_per_sample
    count = roll.time_steps // window
    return [
        PianoRoll(roll.cells[i * window : (i + 1) * window], roll.pitch_offset)
        for i in range(count)
    ]


def export_midi(roll: PianoRoll, cfg: QuantizeConfig, tempo_bpm: float = 120.0) -> bytes:
    """Write the roll as a single-track format-0 MIDI byte stream.

    Consecutive occupied cells at one pitch become one held note.
    ``quantize_merge(parse_midi(export_midi(r)))`` reproduces ``r``
    bit-exactly for any roll matching ``cfg``'s pitch geometry.
    """
    if roll.pitch_offset != cfg.pitch_offset or roll.pitch_count != cfg.pitch_count:
        raise ConfigError("roll pitch geometry does not match the quantize config")
    ppq = DEFAULT_EXPORT_PPQ
    tps = cfg.ticks_per_step(ppq)
    if tps != int(tps):
        raise ConfigError(f"steps_per_bar {cfg.steps_per_bar} does not divide ppq {ppq} evenly")
    tps = int(tps)

    # (tick, order, status, data1, data2); note-offs sort before note-ons at a tick
    events: list[tuple[int, int, int, int, int]] = []
    grid = roll.cells
    for row in range(roll.pitch_count):
        pitch = cfg.pitch_offset + row
        column = grid[:, row]
        t = 0
        while t < roll.time_steps:
            if column[t]:
                start = t
                while t < roll.time_steps and column[t]:
                    t += 1
                events.append((start * tps, 1, _NOTE_ON, pitch, 64))
                events.append((t * tps, 0, _NOTE_OFF, pitch, 0))
            else:
                t += 1
    events.sort()

    track = bytearray()
    usec_per_quarter = int(round(60_000_000 / tempo_bpm))
    track += _write_varlen(0) + bytes([_META, _META_TEMPO, 3]) + usec_per_quarter.to_bytes(3, "big")
    track += _write_varlen(0) + bytes([_META, _META_TIME_SIGNATURE, 4, 4, 2, 24, 8])
    cursor = 0
    for tick, _, status, d1, d2 in events:
        track += _write_varlen(tick - cursor) + bytes([status, d1, d2])
        cursor = tick
    end_tick = roll.time_steps * tps
    track += _write_varlen(end_tick - cursor) + bytes([_META, _META_END_OF_TRACK, 0])

    out = bytearray()
    out += b"MThd" + struct.pack(">IHHH", 6, 0, 1, ppq)
    out += b"MTrk" + struct.pack(">I", len(track)) + track
    return bytes(out)


def import_midi(data: bytes, cfg: QuantizeConfig) -> QuantizeResult:
    """Convenience: parse then quantize-merge with end-of-track extent."""
    parsed = parse_midi(data)
    return quantize_merge(parsed.notes, parsed.ppq, cfg, total_ticks=parsed.total_ticks)
