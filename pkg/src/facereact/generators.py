"""Synthetic corpora with planted similarity structure, plus reference generators.

The synthesizer plants K behaviour clusters: clips of one cluster share a
speaker prototype (plus optional noise) and a listener response template
delayed by a known lag, so the expected appropriateness index (same-cluster
membership) and the expected synchrony are known in advance.  The baselines
exist to exercise the evaluation path, not to model anything.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .corpus import (
    AFFECT_CHANNELS,
    AU_CHANNELS,
    EXPRESSION_CHANNELS,
    FACIAL_CHANNELS,
    ChannelSchema,
    ClipSeries,
    CorpusManifest,
    load_manifest,
    write_clip_series,
)
from .errors import ValidationError
from .labelling import SimilarityMatrix

_WALK_KEEP = 0.95
_WALK_STEP = 0.1


@dataclass(frozen=True)
class SynthConfig:
    """Planted-structure corpus parameters.

    ``noise`` and ``separation`` act in the latent space that is squashed into
    valid channel ranges, so any setting yields loadable clip files.
    """

    clips: int
    frames: int
    channels: int = len(FACIAL_CHANNELS)
    clusters: int = 2
    noise: float = 0.05
    separation: float = 1.0
    lag: int = 2
    seed: int = 0
    fps: float = 25.0

    def __post_init__(self):
        if self.clips < 2:
            raise ValidationError(f"need at least 2 clips, got {self.clips}")
        if self.frames < 2:
            raise ValidationError(f"need at least 2 frames, got {self.frames}")
        if self.channels != len(FACIAL_CHANNELS):
            raise ValidationError(
                f"synthetic corpora use the {len(FACIAL_CHANNELS)}-channel facial schema, got {self.channels}"
            )
        if not (1 <= self.clusters <= self.clips):
            raise ValidationError(f"clusters must be in [1, clips], got {self.clusters}")
        if self.noise < 0:
            raise ValidationError(f"noise must be >= 0, got {self.noise}")
        if self.separation <= 0:
            raise ValidationError(f"separation must be > 0, got {self.separation}")
        if abs(self.lag) >= self.frames:
            raise ValidationError(f"|lag| must be smaller than frames, got {self.lag}")


def _smooth_walk(rng: np.random.Generator, frames: int, channels: int) -> np.ndarray:
    steps = rng.standard_normal((frames, channels))
    walk = np.empty_like(steps)
    walk[0] = steps[0]
    for t in range(1, frames):
        walk[t] = _WALK_KEEP * walk[t - 1] + _WALK_STEP * steps[t]
    return walk


def _squash_latent(latent: np.ndarray) -> np.ndarray:
    """Map latent channels into valid raw ranges (AU, affect, expression blocks)."""
    n_au = len(AU_CHANNELS)
    n_aff = len(AFFECT_CHANNELS)
    out = np.empty_like(latent)
    out[:, :n_au] = 0.5 + 0.35 * np.tanh(latent[:, :n_au])
    out[:, n_au : n_au + n_aff] = 0.7 * np.tanh(latent[:, n_au : n_au + n_aff])
    logits = latent[:, n_au + n_aff :]
    logits = logits - logits.max(axis=1, keepdims=True)
    expw = np.exp(logits)
    out[:, n_au + n_aff :] = expw / expw.sum(axis=1, keepdims=True)
    return out


def _delay_frames(frames: np.ndarray, lag: int) -> np.ndarray:
    """Shift frames later by ``lag`` (edge-hold padding); negative lag shifts earlier."""
    if lag == 0:
        return frames.copy()
    out = np.empty_like(frames)
    if lag > 0:
        out[lag:] = frames[:-lag]
        out[:lag] = frames[0]
    else:
        out[:lag] = frames[-lag:]
        out[lag:] = frames[-1]
    return out


def delayed_copy(series: ClipSeries, lag: int) -> ClipSeries:
    """A copy of a clip delayed by ``lag`` frames with edge-hold padding."""
    if abs(lag) >= series.n_frames:
        raise ValidationError(f"|lag| must be smaller than the clip length {series.n_frames}")
    return replace(series, frames=_delay_frames(series.frames, lag))


def synth_corpus(config: SynthConfig, out_dir: str | Path) -> tuple[CorpusManifest, dict[str, int]]:
    """Write a synthetic corpus (manifest, clip files, planted-truth sidecar).

    Clip m belongs to cluster m mod K.  Speaker clips of one cluster share a
    prototype; with zero noise they are exactly identical, so same-cluster
    behaviour distance is exactly zero.  Listener clips follow a
    cluster-specific response template delayed by ``config.lag``.
    Deterministic: the same config yields byte-identical files.
    """
    out_dir = Path(out_dir)
    clips_dir = out_dir / "clips"
    clips_dir.mkdir(parents=True, exist_ok=True)
    schema = ChannelSchema()
    c = schema.n_channels
    k = config.clusters

    proto_rng = np.random.default_rng([config.seed, 1])
    resp_rng = np.random.default_rng([config.seed, 2])
    offset_rng = np.random.default_rng([config.seed, 3])

    def unit_rows(rows: int) -> np.ndarray:
        v = offset_rng.standard_normal((rows, c))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    speaker_offsets = unit_rows(k) * config.separation
    listener_offsets = unit_rows(k) * config.separation
    speaker_protos = [
        _smooth_walk(proto_rng, config.frames, c) + speaker_offsets[q] for q in range(k)
    ]
    listener_protos = [
        _delay_frames(_smooth_walk(resp_rng, config.frames, c) + listener_offsets[q], config.lag)
        for q in range(k)
    ]

    clusters: dict[str, int] = {}
    manifest_lines = ["clip_id,dyad_id,speaker_path,listener_path,fps,split"]
    for m in range(config.clips):
        q = m % k
        clip_id = f"clip{m:03d}"
        clusters[clip_id] = q
        noise_rng = np.random.default_rng([config.seed, 4, m])
        spk_latent = speaker_protos[q] + config.noise * noise_rng.standard_normal((config.frames, c))
        lst_latent = listener_protos[q] + config.noise * noise_rng.standard_normal((config.frames, c))
        spk = ClipSeries(clip_id, f"dyad{m:03d}", "speaker", config.fps, _squash_latent(spk_latent), schema)
        lst = ClipSeries(clip_id, f"dyad{m:03d}", "listener", config.fps, _squash_latent(lst_latent), schema)
        spk_path = f"clips/{clip_id}.speaker.csv"
        lst_path = f"clips/{clip_id}.listener.csv"
        write_clip_series(out_dir / spk_path, spk)
        write_clip_series(out_dir / lst_path, lst)
        manifest_lines.append(f"{clip_id},dyad{m:03d},{spk_path},{lst_path},{config.fps!r},train")

    (out_dir / "manifest.csv").write_text("\n".join(manifest_lines) + "\n", encoding="utf-8")
    (out_dir / "clusters.csv").write_text(
        "clip_id,cluster\n" + "\n".join(f"{cid},{q}" for cid, q in clusters.items()) + "\n",
        encoding="utf-8",
    )
    return load_manifest(out_dir / "manifest.csv"), clusters


def baseline_mirror(speaker: ClipSeries) -> ClipSeries:
    """The speaker's own signal replayed as the reaction (alpha = 1)."""
    return replace(speaker, role="listener", frames=speaker.frames.copy())


def baseline_gt_jitter(
    gt: ClipSeries, alpha: int, noise: float, seed: int
) -> list[ClipSeries]:
    """``alpha`` independently noise-perturbed copies of the real reaction.

    Perturbed values are clamped back into valid raw ranges and the expression
    probabilities renormalized, so the output passes ingestion validation.
    Zero noise returns exact copies.
    """
    if alpha < 1:
        raise ValidationError(f"alpha must be >= 1, got {alpha}")
    if noise < 0:
        raise ValidationError(f"noise must be >= 0, got {noise}")
    out = []
    schema = gt.schema
    for i in range(alpha):
        if noise == 0.0:
            out.append(replace(gt, frames=gt.frames.copy()))
            continue
        rng = np.random.default_rng([seed, i])
        frames = gt.frames + noise * rng.standard_normal(gt.frames.shape)
        au = schema.au_slice
        aff = schema.affect_slice
        expr = schema.expression_slice
        frames[:, au] = np.clip(frames[:, au], 0.0, 1.0)
        frames[:, aff] = np.clip(frames[:, aff], -1.0, 1.0)
        probs = np.clip(frames[:, expr], 1e-9, 1.0)
        frames[:, expr] = probs / probs.sum(axis=1, keepdims=True)
        out.append(replace(gt, frames=frames))
    return out


def baseline_retrieval(
    m: int, matrix: SimilarityMatrix, reactions: list[ClipSeries], alpha: int
) -> list[ClipSeries]:
    """The real reactions of the ``alpha`` nearest other speaker behaviours.

    Ranked by matrix distance, ties broken by clip order; the clip's own
    reaction is never returned.
    """
    if len(reactions) != matrix.size:
        raise ValidationError("reactions must align with the matrix")
    if not (0 <= m < matrix.size):
        raise ValidationError(f"clip index {m} out of range")
    if alpha > matrix.size - 1:
        raise ValidationError(f"alpha {alpha} exceeds the {matrix.size - 1} other clips")
    order = sorted((j for j in range(matrix.size) if j != m), key=lambda j: (matrix.distances[m, j], j))
    return [replace(reactions[j], frames=reactions[j].frames.copy()) for j in order[:alpha]]


def baseline_random(
    schema: ChannelSchema, n_frames: int, alpha: int, seed: int, fps: float = 25.0, clip_id: str = "random"
) -> list[ClipSeries]:
    """``alpha`` uniform-noise reaction series within valid raw ranges."""
    out = []
    n_au = len(AU_CHANNELS)
    n_aff = len(AFFECT_CHANNELS)
    n_expr = len(EXPRESSION_CHANNELS)
    for i in range(alpha):
        rng = np.random.default_rng([seed, i])
        frames = np.empty((n_frames, schema.n_channels))
        frames[:, :n_au] = rng.uniform(0.0, 1.0, (n_frames, n_au))
        frames[:, n_au : n_au + n_aff] = rng.uniform(-1.0, 1.0, (n_frames, n_aff))
        probs = rng.uniform(0.05, 1.0, (n_frames, n_expr))
        frames[:, n_au + n_aff : n_au + n_aff + n_expr] = probs / probs.sum(axis=1, keepdims=True)
        if schema.audio_channels:
            frames[:, len(FACIAL_CHANNELS) :] = rng.standard_normal(
                (n_frames, len(schema.audio_channels))
            )
        out.append(ClipSeries(clip_id, "", "listener", fps, frames, schema))
    return out
