"""Note-event lists <-> per-frame 88-way label matrices, and decoding.

A note occupies every frame whose time span it overlaps: the first frame is
``floor(onset * frame_rate)`` and the last is ``ceil(offset * frame_rate) - 1``
(the last frame in which the note still sounds). Onset/offset labels mark
exactly those two frames.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, MalformedNoteError, NoteRangeError

PITCH_MIN = 21
PITCH_MAX = 108
N_KEYS = PITCH_MAX - PITCH_MIN + 1  # 88
DEFAULT_FRAME_RATE = 31.25  # 16 kHz / hop 512
DEFAULT_THRESHOLD = 0.5


@dataclass
class NoteEvent:
    """One note: MIDI pitch plus onset/offset in seconds."""

    pitch: int
    onset: float
    offset: float

    def __post_init__(self):
        _validate_note(self.pitch, self.onset, self.offset)


def _validate_note(pitch, onset, offset):
    if not PITCH_MIN <= int(pitch) <= PITCH_MAX:
        raise NoteRangeError(f"pitch {pitch} outside [{PITCH_MIN}, {PITCH_MAX}]")
    if not (0.0 <= onset < offset):
        raise MalformedNoteError(f"bad note timing: onset={onset}, offset={offset}")


@dataclass
class FrameLabels:
    """Binary T x 88 matrices for pitch presence, onsets, and offsets."""

    y_pitch: np.ndarray
    y_onset: np.ndarray
    y_offset: np.ndarray

    def __post_init__(self):
        for name in ("y_pitch", "y_onset", "y_offset"):
            mat = np.asarray(getattr(self, name), dtype=np.uint8)
            if mat.ndim != 2 or mat.shape[1] != N_KEYS:
                raise InputError(f"{name}: expected T x {N_KEYS}, got {mat.shape}")
            setattr(self, name, mat)
        if not (self.y_pitch.shape == self.y_onset.shape == self.y_offset.shape):
            raise InputError("label matrices disagree on shape")

    @property
    def frames(self) -> int:
        return self.y_pitch.shape[0]


@dataclass
class Prediction:
    """Per-frame probabilities in (0, 1); onset/offset absent for single-task models."""

    p_pitch: np.ndarray
    p_onset: np.ndarray | None = None
    p_offset: np.ndarray | None = None

    def __post_init__(self):
        self.p_pitch = np.asarray(self.p_pitch, dtype=np.float64)
        if self.p_onset is not None:
            self.p_onset = np.asarray(self.p_onset, dtype=np.float64)
        if self.p_offset is not None:
            self.p_offset = np.asarray(self.p_offset, dtype=np.float64)
        if self.p_pitch.ndim != 2 or self.p_pitch.shape[1] != N_KEYS:
            raise InputError(f"p_pitch: expected T x {N_KEYS}, got {self.p_pitch.shape}")

    @property
    def frames(self) -> int:
        return self.p_pitch.shape[0]


def note_frame_span(onset: float, offset: float, frame_rate: float) -> tuple[int, int]:
    """Inclusive (first, last) frame indices a note overlaps."""
    first = math.floor(onset * frame_rate)
    last = math.ceil(offset * frame_rate) - 1
    return first, max(first, last)


def encode_frames(
    notes: Iterable[NoteEvent | Sequence], t_frames: int, frame_rate: float = DEFAULT_FRAME_RATE
) -> FrameLabels:
    """Rasterize a note list into T x 88 pitch/onset/offset label matrices."""
    y_pitch = np.zeros((t_frames, N_KEYS), dtype=np.uint8)
    y_onset = np.zeros((t_frames, N_KEYS), dtype=np.uint8)
    y_offset = np.zeros((t_frames, N_KEYS), dtype=np.uint8)
    for note in notes:
        if isinstance(note, NoteEvent):
            pitch, onset, offset = note.pitch, note.onset, note.offset
        else:
            pitch, onset, offset = note
            _validate_note(pitch, onset, offset)
        first, last = note_frame_span(onset, offset, frame_rate)
        if first >= t_frames:
            raise InputError(
                f"note onset {onset:.6f}s falls at frame {first}, beyond T={t_frames}"
            )
        if last >= t_frames:
            raise InputError(
                f"note offset {offset:.6f}s falls at frame {last}, beyond T={t_frames}"
            )
        k = int(pitch) - PITCH_MIN
        y_pitch[first : last + 1, k] = 1
        y_onset[first, k] = 1
        y_offset[last, k] = 1
    return FrameLabels(y_pitch, y_onset, y_offset)


def decode_notes(
    pred: Prediction,
    threshold: float = DEFAULT_THRESHOLD,
    frame_rate: float = DEFAULT_FRAME_RATE,
) -> list[NoteEvent]:
    """Onset-gated segmentation of thresholded probabilities into notes.

    Per pitch column: a note opens at the first frame with onset probability
    above threshold while no note is open; it closes at the first later frame
    where the pitch probability drops to the threshold or below (note ends
    before that frame) or the offset probability exceeds it (note ends after
    that frame). Open notes close at T. Without an onset head, plain
    pitch-run segmentation is used instead.
    """
    if not 0.0 < threshold < 1.0:
        raise InputError(f"threshold must be in (0, 1), got {threshold}")
    t_frames = pred.frames
    on = pred.p_onset
    off = pred.p_offset
    out: list[NoteEvent] = []
    for k in range(N_KEYS):
        pitch_col = pred.p_pitch[:, k] > threshold
        onset_col = None if on is None else on[:, k] > threshold
        offset_col = None if off is None else off[:, k] > threshold
        open_at = -1
        for t in range(t_frames):
            if open_at >= 0:
                if not pitch_col[t]:
                    out.append(_note(k, open_at, t, frame_rate))
                    open_at = -1
                elif offset_col is not None and offset_col[t]:
                    out.append(_note(k, open_at, t + 1, frame_rate))
                    open_at = -1
                    continue  # the closing frame still belongs to this note
            if open_at < 0:
                trigger = pitch_col[t] if onset_col is None else onset_col[t]
                if trigger:
                    open_at = t
        if open_at >= 0:
            out.append(_note(k, open_at, t_frames, frame_rate))
    out.sort(key=lambda n: (n.onset, n.pitch, n.offset))
    return out


def _note(k: int, first_frame: int, end_frame: int, frame_rate: float) -> NoteEvent:
    return NoteEvent(k + PITCH_MIN, first_frame / frame_rate, end_frame / frame_rate)


def probabilities_from_labels(
    labels: FrameLabels, low: float = 0.1, high: float = 0.9
) -> Prediction:
    """Idealized step-function probabilities: label 0 -> low, label 1 -> high."""
    as_prob = lambda y: np.where(y > 0, high, low)
    return Prediction(
        as_prob(labels.y_pitch), as_prob(labels.y_onset), as_prob(labels.y_offset)
    )


def write_notes_jsonl(path, notes: Iterable[NoteEvent]) -> None:
    """One JSON object per line: {"pitch", "onset", "offset"}, times in seconds."""
    with open(path, "w") as fh:
        for n in notes:
            fh.write(
                json.dumps(
                    {"pitch": n.pitch, "onset": round(n.onset, 6), "offset": round(n.offset, 6)}
                )
                + "\n"
            )


def read_notes_jsonl(path) -> list[NoteEvent]:
    out = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(NoteEvent(int(obj["pitch"]), float(obj["onset"]), float(obj["offset"])))
            except (KeyError, ValueError, TypeError) as exc:
                raise InputError(f"{path}:{line_no}: bad note record: {exc}") from exc
    return out
