"""Dyadic behavioural time-series: channel schema, ingestion, normalization, pooling.

A clip is a fixed-rate multi-channel signal describing what one person's face
(and optionally voice) expressed over a short recording.  Speaker and listener
clips share one schema so they can be compared channel by channel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

AU_CHANNELS = (
    "AU1", "AU2", "AU4", "AU6", "AU7", "AU9", "AU10", "AU12",
    "AU14", "AU15", "AU17", "AU23", "AU24", "AU25", "AU26",
)
AFFECT_CHANNELS = ("valence", "arousal")
EXPRESSION_CHANNELS = (
    "Neutral", "Happy", "Sad", "Surprise", "Fear", "Disgust", "Anger", "Contempt",
)
FACIAL_CHANNELS = AU_CHANNELS + AFFECT_CHANNELS + EXPRESSION_CHANNELS

EXPRESSION_SUM_TOL = 0.02
CONSTANT_STD = 1e-8

ROLES = ("speaker", "listener")
SPLITS = ("train", "val", "test")

MANIFEST_COLUMNS = ("clip_id", "dyad_id", "speaker_path", "listener_path", "fps", "split")


@dataclass(frozen=True)
class ChannelSchema:
    """Ordered channel layout: the 25 facial channels, then optional audio channels."""

    audio_channels: tuple[str, ...] = ()

    def __post_init__(self):
        names = self.channels
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise ValidationError(f"duplicate channel names in schema: {dupes}")

    @property
    def channels(self) -> tuple[str, ...]:
        return FACIAL_CHANNELS + tuple(self.audio_channels)

    @property
    def n_channels(self) -> int:
        return len(FACIAL_CHANNELS) + len(self.audio_channels)

    # Index ranges of the channel groups, in schema order.
    @property
    def au_slice(self) -> slice:
        return slice(0, len(AU_CHANNELS))

    @property
    def affect_slice(self) -> slice:
        n = len(AU_CHANNELS)
        return slice(n, n + len(AFFECT_CHANNELS))

    @property
    def expression_slice(self) -> slice:
        n = len(AU_CHANNELS) + len(AFFECT_CHANNELS)
        return slice(n, n + len(EXPRESSION_CHANNELS))

    @property
    def facial_slice(self) -> slice:
        return slice(0, len(FACIAL_CHANNELS))


@dataclass
class ClipSeries:
    """One clip's multi-channel time-series for one interaction role.

    ``frames`` is a (T, C) float64 array, one row per frame, columns in schema
    order.  Raw (as-ingested) values obey the per-group ranges; normalized or
    pooled series are unconstrained.
    """

    clip_id: str
    dyad_id: str
    role: str
    fps: float
    frames: np.ndarray
    schema: ChannelSchema

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"invalid role {self.role!r} (expected one of {ROLES})")
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValidationError(f"clip {self.clip_id!r}: frames must be 2-D (T, C)")
        if self.frames.shape[0] < 2:
            raise ValidationError(f"clip {self.clip_id!r}: need at least 2 frames, got {self.frames.shape[0]}")
        if self.frames.shape[1] != self.schema.n_channels:
            raise ValidationError(
                f"clip {self.clip_id!r}: {self.frames.shape[1]} channels, schema has {self.schema.n_channels}"
            )

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.frames.shape[1])

    def facial(self) -> np.ndarray:
        """Frames restricted to the 25 facial channels."""
        return self.frames[:, self.schema.facial_slice]


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    dyad_id: str
    speaker_path: str
    listener_path: str
    fps: float
    split: str


@dataclass(frozen=True)
class CorpusManifest:
    """Ordered corpus listing; entry order defines the corpus index 0..M-1.

    ``root`` anchors the entries' relative paths; in-memory corpora may leave
    it unset.
    """

    entries: tuple[ManifestEntry, ...]
    root: Path | None

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def clip_ids(self) -> tuple[str, ...]:
        return tuple(e.clip_id for e in self.entries)


@dataclass
class Corpus:
    """A fully loaded corpus: manifest plus speaker/listener series per entry."""

    manifest: CorpusManifest
    schema: ChannelSchema
    speakers: list[ClipSeries]
    listeners: list[ClipSeries]

    @property
    def size(self) -> int:
        return self.manifest.size

    @property
    def clip_ids(self) -> tuple[str, ...]:
        return self.manifest.clip_ids


def as_frames(x: ClipSeries | np.ndarray) -> np.ndarray:
    """Coerce a ClipSeries or array-like to a (T, C) float64 frame matrix."""
    if isinstance(x, ClipSeries):
        return x.frames
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValidationError(f"expected a (T, C) series, got ndim={a.ndim}")
    return np.ascontiguousarray(a)


def load_manifest(path: str | Path) -> CorpusManifest:
    """Parse and validate a corpus manifest CSV.

    Format: header ``clip_id,dyad_id,speaker_path,listener_path,fps,split``,
    one row per dyad clip pair.  Paths are resolved relative to the manifest's
    directory when loading clips.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"manifest not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ValidationError(f"empty manifest: {path}")
    header = [h.strip() for h in rows[0]]
    for col in MANIFEST_COLUMNS:
        if col not in header:
            raise ValidationError(f"manifest {path}: missing column {col!r}")
    col_idx = {c: header.index(c) for c in MANIFEST_COLUMNS}
    if len(rows) == 1:
        raise ValidationError(f"empty manifest: {path} (header only)")

    entries = []
    seen: set[str] = set()
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) < len(header):
            raise ValidationError(f"manifest {path} row {rownum}: expected {len(header)} fields, got {len(row)}")
        get = lambda c: row[col_idx[c]].strip()
        clip_id = get("clip_id")
        if not clip_id:
            raise ValidationError(f"manifest {path} row {rownum}: empty clip_id")
        if clip_id in seen:
            raise ValidationError(f"manifest {path} row {rownum}: duplicate clip_id {clip_id!r}")
        seen.add(clip_id)
        try:
            fps = float(get("fps"))
        except ValueError:
            raise ValidationError(f"manifest {path} row {rownum}: bad fps {get('fps')!r}") from None
        if not math.isfinite(fps) or fps <= 0:
            raise ValidationError(f"manifest {path} row {rownum}: fps must be positive, got {fps}")
        split = get("split")
        if split not in SPLITS:
            raise ValidationError(f"manifest {path} row {rownum}: split {split!r} not in {SPLITS}")
        for col in ("speaker_path", "listener_path"):
            if not get(col):
                raise ValidationError(f"manifest {path} row {rownum}: empty {col}")
        entries.append(
            ManifestEntry(clip_id, get("dyad_id"), get("speaker_path"), get("listener_path"), fps, split)
        )
    return CorpusManifest(tuple(entries), root=path.parent)


def read_clip_header(path: str | Path) -> list[str]:
    """Return the column names of a clip feature CSV (without loading frames)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"clip file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        header = next(csv.reader(fh), None)
    if not header:
        raise ValidationError(f"clip file {path}: empty file")
    return [h.strip() for h in header]


def _first_out_of_range(block: np.ndarray, lo: float, hi: float) -> tuple[int, int] | None:
    bad = (block < lo) | (block > hi)
    if not bad.any():
        return None
    t, c = np.unravel_index(int(np.argmax(bad)), bad.shape)
    return int(t), int(c)


def _validate_raw_ranges(frames: np.ndarray, schema: ChannelSchema, where: str) -> None:
    hit = _first_out_of_range(frames[:, schema.au_slice], 0.0, 1.0)
    if hit:
        t, c = hit
        raise ValidationError(f"{where}: AU value out of [0, 1] at frame {t}, channel {AU_CHANNELS[c]}")
    hit = _first_out_of_range(frames[:, schema.affect_slice], -1.0, 1.0)
    if hit:
        t, c = hit
        raise ValidationError(f"{where}: affect value out of [-1, 1] at frame {t}, channel {AFFECT_CHANNELS[c]}")
    expr = frames[:, schema.expression_slice]
    hit = _first_out_of_range(expr, 0.0, 1.0)
    if hit:
        t, c = hit
        raise ValidationError(
            f"{where}: expression probability out of [0, 1] at frame {t}, channel {EXPRESSION_CHANNELS[c]}"
        )
    sums = expr.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > EXPRESSION_SUM_TOL)[0]
    if bad.size:
        t = int(bad[0])
        raise ValidationError(
            f"{where}: expression probabilities sum to {sums[t]:.4f} at frame {t} (expected 1 +/- {EXPRESSION_SUM_TOL})"
        )


def load_clip_series(
    path: str | Path,
    schema: ChannelSchema,
    role: str,
    fps: float,
    clip_id: str | None = None,
    dyad_id: str = "",
    validate_ranges: bool = True,
) -> ClipSeries:
    """Load one clip feature CSV into a validated ClipSeries.

    The file must have a ``frame`` column (strictly increasing from 0) and a
    column for every schema channel; extra columns are ignored.  Range checks
    apply to raw ingestion only and can be disabled for already-normalized data.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"clip file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValidationError(f"clip file {path}: empty file")
        header = [h.strip() for h in header]
        if "frame" not in header:
            raise ValidationError(f"clip file {path}: missing 'frame' column")
        missing = [c for c in schema.channels if c not in header]
        if missing:
            raise ValidationError(f"clip file {path}: missing channels {missing}")
        frame_col = header.index("frame")
        cols = [header.index(c) for c in schema.channels]
        names = schema.channels

        rows = []
        frame_vals = []
        for rownum, row in enumerate(reader):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise ValidationError(f"clip file {path} frame row {rownum}: expected {len(header)} fields")
            try:
                fval = float(row[frame_col])
            except ValueError:
                raise ValidationError(f"clip file {path} frame row {rownum}: bad frame value") from None
            frame_vals.append(fval)
            vals = np.empty(len(cols), dtype=np.float64)
            for k, ci in enumerate(cols):
                try:
                    v = float(row[ci])
                except ValueError:
                    raise ValidationError(
                        f"clip file {path}: unparseable value at frame {rownum}, channel {names[k]}"
                    ) from None
                if not math.isfinite(v):
                    raise ValidationError(
                        f"clip file {path}: non-finite value at frame {rownum}, channel {names[k]}"
                    )
                vals[k] = v
            rows.append(vals)

    if len(rows) < 2:
        raise ValidationError(f"clip file {path}: need at least 2 frames, got {len(rows)}")
    fv = np.asarray(frame_vals)
    if fv[0] != 0:
        raise ValidationError(f"clip file {path}: frame column must start at 0, got {fv[0]}")
    if np.any(np.diff(fv) <= 0):
        bad = int(np.where(np.diff(fv) <= 0)[0][0]) + 1
        raise ValidationError(f"clip file {path}: frame column not strictly increasing at row {bad}")

    frames = np.vstack(rows)
    if validate_ranges:
        _validate_raw_ranges(frames, schema, where=f"clip file {path}")
    return ClipSeries(
        clip_id=clip_id if clip_id is not None else path.stem,
        dyad_id=dyad_id,
        role=role,
        fps=fps,
        frames=frames,
        schema=schema,
    )


def write_clip_series(path: str | Path, series: ClipSeries) -> None:
    """Write a ClipSeries back to the clip CSV format (lossless round trip)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = series.schema.channels
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("frame," + ",".join(names) + "\n")
        for t in range(series.n_frames):
            row = ",".join(repr(float(v)) for v in series.frames[t])
            fh.write(f"{t},{row}\n")


def load_corpus(manifest_path: str | Path, include_audio: bool = False) -> Corpus:
    """Load every speaker and listener clip referenced by a manifest.

    With ``include_audio`` the audio channel names are taken from the first
    speaker clip's header (all non-facial columns, in file order) and required
    of every clip; audio descriptors are expected pre-broadcast to one value
    per frame.
    """
    manifest = load_manifest(manifest_path)
    if include_audio:
        first = manifest.root / manifest.entries[0].speaker_path
        header = read_clip_header(first)
        audio = tuple(c for c in header if c != "frame" and c not in FACIAL_CHANNELS)
        schema = ChannelSchema(audio_channels=audio)
    else:
        schema = ChannelSchema()
    speakers = []
    listeners = []
    for entry in manifest.entries:
        speakers.append(
            load_clip_series(
                manifest.root / entry.speaker_path, schema, "speaker", entry.fps,
                clip_id=entry.clip_id, dyad_id=entry.dyad_id,
            )
        )
        listeners.append(
            load_clip_series(
                manifest.root / entry.listener_path, schema, "listener", entry.fps,
                clip_id=entry.clip_id, dyad_id=entry.dyad_id,
            )
        )
    return Corpus(manifest=manifest, schema=schema, speakers=speakers, listeners=listeners)


@dataclass(frozen=True)
class NormalizationParams:
    """Per-channel moments of the reference split, used to z-score all series."""

    mean: np.ndarray
    std: np.ndarray
    channels: tuple[str, ...]

    @property
    def constant_mask(self) -> np.ndarray:
        return self.std < CONSTANT_STD


def fit_normalization(corpus: Sequence[ClipSeries]) -> NormalizationParams:
    """Per-channel mean and population std over all frames of all given clips.

    Clips are concatenated in the given order, so the result is deterministic
    for a fixed corpus ordering.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValidationError("empty corpus: cannot fit normalization")
    channels = corpus[0].schema.channels
    for s in corpus[1:]:
        if s.schema.channels != channels:
            raise ValidationError(f"schema mismatch: clip {s.clip_id!r} does not share the corpus schema")
    stacked = np.concatenate([s.frames for s in corpus], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    return NormalizationParams(mean=mean, std=std, channels=channels)


def apply_normalization(series: ClipSeries, params: NormalizationParams) -> ClipSeries:
    """Z-score each channel; channels flagged constant map to 0."""
    if series.schema.channels != params.channels:
        raise ValidationError(f"schema mismatch: clip {series.clip_id!r} vs normalization params")
    const = params.constant_mask
    safe_std = np.where(const, 1.0, params.std)
    frames = (series.frames - params.mean) / safe_std
    frames[:, const] = 0.0
    return replace(series, frames=frames)


def downsample(series: ClipSeries, factor: int) -> ClipSeries:
    """Mean-pool non-overlapping windows of ``factor`` frames (trailing partial window included)."""
    if int(factor) != factor or factor < 1:
        raise ValidationError(f"downsample factor must be a positive integer, got {factor}")
    factor = int(factor)
    if factor == 1:
        return replace(series, frames=series.frames.copy())
    t = series.n_frames
    starts = np.arange(0, t, factor)
    sums = np.add.reduceat(series.frames, starts, axis=0)
    counts = np.minimum(starts + factor, t) - starts
    frames = sums / counts[:, None]
    return replace(series, fps=series.fps / factor, frames=frames)


def auto_downsample_factor(series: Iterable[ClipSeries], max_frames: int = 128) -> int:
    """Smallest pooling factor that brings every clip to at most ``max_frames`` frames."""
    longest = max(s.n_frames for s in series)
    return max(1, math.ceil(longest / max_frames))


def reference_series(corpus: Corpus, split: str = "train") -> list[ClipSeries]:
    """Speaker and listener clips of the normalization reference split.

    Falls back to the whole corpus when the split is empty so small synthetic
    corpora need no split bookkeeping.
    """
    picked = []
    for entry, spk, lst in zip(corpus.manifest.entries, corpus.speakers, corpus.listeners):
        if entry.split == split:
            picked.extend((spk, lst))
    if not picked:
        for spk, lst in zip(corpus.speakers, corpus.listeners):
            picked.extend((spk, lst))
    return picked
