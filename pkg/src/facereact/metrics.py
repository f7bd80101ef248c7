"""The eight evaluation metrics for generated facial reaction sets.

Appropriateness (FRDist, FRCorr, ACC) scores generations against the
appropriate real reactions of their speaker behaviour; FRVar/FRDiv/FRDvs
measure within-clip, within-set, and across-behaviour diversity; FRRea is the
Frechet distance between generated and appropriate frame distributions; FRSyn
is the absolute peak lag between generation and speaker behaviour.

Distance-based scores (FRDist, ACC) are computed in the same normalized,
downsampled space as the labelling run they reference, so they are comparable
with the corpus max DTW.  The remaining metrics work on raw attribute values
at full frame rate.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import (
    ClipSeries,
    Corpus,
    apply_normalization,
    downsample,
    fit_normalization,
    load_clip_series,
    reference_series,
)
from .dtw import dtw_full
from .errors import ValidationError
from .labelling import AppropriatenessIndex, SimilarityMatrix, check_provenance
from .stats import GAUSSIAN_RIDGE, ccc_multichannel, frechet_distance, gaussian_fit, mse, series_variance, tlcc

METRIC_NAMES = ("FRDist", "FRCorr", "ACC", "FRVar", "FRDiv", "FRDvs", "FRRea", "FRSyn")


@dataclass
class GeneratedSet:
    """Per speaker behaviour, the alpha generated listener reactions under evaluation.

    ``reactions[m]`` holds the generations for corpus index m, in generation
    order (the order matters: FRDvs pairs generations across clips by index).
    """

    clip_ids: tuple[str, ...]
    reactions: tuple[tuple[ClipSeries, ...], ...]

    def __post_init__(self):
        if len(self.clip_ids) != len(self.reactions):
            raise ValidationError("clip_ids and reactions must align")
        if not self.reactions:
            raise ValidationError("empty generated set")
        alphas = {len(r) for r in self.reactions}
        if len(alphas) != 1:
            raise ValidationError(f"generation count must be uniform across clips, got {sorted(alphas)}")
        if min(alphas) < 1:
            raise ValidationError("need at least one generation per clip")

    @property
    def alpha(self) -> int:
        return len(self.reactions[0])

    @property
    def size(self) -> int:
        return len(self.clip_ids)

    def map_series(self, fn) -> "GeneratedSet":
        """Apply a ClipSeries -> ClipSeries transform to every generation."""
        return GeneratedSet(
            clip_ids=self.clip_ids,
            reactions=tuple(tuple(fn(p) for p in gens) for gens in self.reactions),
        )


@dataclass
class MetricReport:
    """The eight scalar metrics plus per-clip breakdowns and the config echo."""

    frdist: float
    frcorr: float
    acc: float
    frvar: float
    frdiv: float
    frdvs: float
    frrea: float
    frsyn: float
    per_clip: dict[str, np.ndarray] = field(default_factory=dict)
    clip_ids: tuple[str, ...] = ()
    config: dict[str, object] = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        return dict(
            zip(
                METRIC_NAMES,
                (self.frdist, self.frcorr, self.acc, self.frvar, self.frdiv, self.frdvs, self.frrea, self.frsyn),
            )
        )

    def kv_lines(self) -> list[str]:
        """Flat machine-readable form: ``metric.NAME=value`` then ``config.key=value``."""
        lines = [f"metric.{name}={value!r}" for name, value in self.as_dict().items()]
        for key in sorted(self.config):
            lines.append(f"config.{key}={self.config[key]!r}")
        return lines

    def table(self) -> str:
        width = max(len(n) for n in METRIC_NAMES)
        rows = [f"{name:<{width}}  {value:.6f}" for name, value in self.as_dict().items()]
        return "\n".join(rows)

    def per_clip_csv_lines(self) -> list[str]:
        cols = sorted(self.per_clip)
        lines = ["clip_id," + ",".join(cols)]
        for k, cid in enumerate(self.clip_ids):
            vals = ",".join(repr(float(self.per_clip[c][k])) for c in cols)
            lines.append(f"{cid},{vals}")
        return lines


def _check_alignment(gen: GeneratedSet, index: AppropriatenessIndex) -> None:
    if gen.clip_ids != index.clip_ids:
        raise ValidationError("generated set clip ordering does not match the index")


def _min_dtw_per_generation(
    gen: GeneratedSet, index: AppropriatenessIndex, reactions: Sequence[ClipSeries]
) -> np.ndarray:
    """(M, alpha) matrix of each generation's DTW distance to its nearest
    appropriate real reaction."""
    _check_alignment(gen, index)
    out = np.empty((gen.size, gen.alpha))
    for m, gens in enumerate(gen.reactions):
        candidates = [reactions[j] for j in index.neighbors[m]]
        if not candidates:
            raise ValidationError(f"empty appropriate set for clip {gen.clip_ids[m]!r}")
        for i, p in enumerate(gens):
            out[m, i] = min(dtw_full(p, f) for f in candidates)
    return out


def fr_dist(gen: GeneratedSet, index: AppropriatenessIndex, reactions: Sequence[ClipSeries]) -> float:
    """Mean over clips of the summed nearest-appropriate-reaction DTW distances.

    ``reactions`` must be in the same space the appropriateness labelling used
    (normalized and downsampled) and aligned with the index's clip order.
    """
    dmin = _min_dtw_per_generation(gen, index, reactions)
    return float(dmin.sum(axis=1).mean())


def fr_corr(gen: GeneratedSet, index: AppropriatenessIndex, reactions: Sequence[ClipSeries]) -> float:
    """Mean over clips of the summed best concordance with an appropriate reaction."""
    _check_alignment(gen, index)
    totals = np.empty(gen.size)
    for m, gens in enumerate(gen.reactions):
        candidates = [reactions[j] for j in index.neighbors[m]]
        totals[m] = sum(max(ccc_multichannel(p, f) for f in candidates) for p in gens)
    return float(totals.mean())


def acc(
    gen: GeneratedSet,
    index: AppropriatenessIndex,
    reactions: Sequence[ClipSeries],
    matrix: SimilarityMatrix,
) -> float:
    """Fraction of generations whose nearest appropriate reaction passes the
    labelling threshold in similarity terms.

    Only members of the clip's appropriate set are consulted, even if a closer
    reaction exists elsewhere in the corpus.  The index must come from the
    same labelling run as the matrix (checked by provenance hash).
    """
    check_provenance(index, matrix)
    dmin = _min_dtw_per_generation(gen, index, reactions)
    sims = 1.0 - dmin / matrix.max_dtw  # may go negative for far-off generations
    hits = np.vectorize(index.passes)(sims)
    return float(np.count_nonzero(hits) / hits.size)


def fr_var(gen: GeneratedSet) -> float:
    """Mean frame variance across all generations."""
    vals = [series_variance(p) for gens in gen.reactions for p in gens]
    return float(np.mean(vals))


def fr_div(gen: GeneratedSet) -> float:
    """Mean over clips of the summed pairwise MSE among the clip's generations."""
    if gen.alpha == 1:
        warnings.warn("FRDiv is 0 by definition with a single generation per clip", stacklevel=2)
        return 0.0
    totals = np.empty(gen.size)
    for m, gens in enumerate(gen.reactions):
        s = 0.0
        for i in range(len(gens)):
            for j in range(i + 1, len(gens)):
                s += mse(gens[i], gens[j])
        totals[m] = s
    return float(totals.mean())


def fr_dvs(gen: GeneratedSet) -> float:
    """Mean MSE between same-index generations of different speaker behaviours."""
    if gen.size < 2:
        raise ValidationError(f"need at least 2 clips, got {gen.size}")
    total = 0.0
    npairs = 0
    for i in range(gen.alpha):
        for m in range(gen.size):
            for a in range(m + 1, gen.size):
                total += mse(gen.reactions[m][i], gen.reactions[a][i])
                npairs += 1
    return float(total / npairs)


def fr_rea(
    gen: GeneratedSet,
    index: AppropriatenessIndex,
    reactions: Sequence[ClipSeries],
    pooled: bool = False,
    eps: float = GAUSSIAN_RIDGE,
) -> float:
    """Frechet distance between generated and appropriate frame distributions.

    Per clip, all frames of the alpha generations are pooled against all
    frames of the appropriate real reactions; the per-clip distances are
    averaged.  With ``pooled`` a single corpus-wide pair of Gaussians is
    compared instead.
    """
    _check_alignment(gen, index)
    if pooled:
        gen_frames = np.concatenate([p.frames for gens in gen.reactions for p in gens], axis=0)
        real_frames = np.concatenate(
            [reactions[j].frames for m in range(gen.size) for j in index.neighbors[m]], axis=0
        )
        return frechet_distance(gaussian_fit(gen_frames, eps), gaussian_fit(real_frames, eps))
    vals = np.empty(gen.size)
    for m, gens in enumerate(gen.reactions):
        gen_frames = np.concatenate([p.frames for p in gens], axis=0)
        real_frames = np.concatenate([reactions[j].frames for j in index.neighbors[m]], axis=0)
        vals[m] = frechet_distance(gaussian_fit(gen_frames, eps), gaussian_fit(real_frames, eps))
    return float(vals.mean())


def fr_syn(gen: GeneratedSet, speakers: Sequence[ClipSeries], max_lag: int) -> float:
    """Mean over clips of the summed absolute peak lags between generations and
    their speaker behaviour (facial channels only; lower = more synchronous)."""
    if len(speakers) != gen.size:
        raise ValidationError("speaker series must align with the generated set")
    totals = np.empty(gen.size)
    for m, gens in enumerate(gen.reactions):
        spk = speakers[m].facial()
        totals[m] = sum(abs(tlcc(p.facial(), spk, max_lag).peak_lag) for p in gens)
    return float(totals.mean())


@dataclass(frozen=True)
class EvalConfig:
    """Metric parameters: synchrony lag window, FID ridge, FID pooling, and
    the manifest split used to fit normalization."""

    max_lag: int = 30
    fid_eps: float = GAUSSIAN_RIDGE
    pooled_fid: bool = False
    reference_split: str = "train"

    def __post_init__(self):
        if self.max_lag < 0:
            raise ValidationError(f"max_lag must be >= 0, got {self.max_lag}")
        if self.fid_eps <= 0:
            raise ValidationError(f"fid_eps must be positive, got {self.fid_eps}")


def evaluate_all(
    gen: GeneratedSet,
    index: AppropriatenessIndex,
    matrix: SimilarityMatrix,
    corpus: Corpus,
    config: EvalConfig = EvalConfig(),
) -> MetricReport:
    """Compute all eight metrics for a generated set against a labelled corpus.

    ``gen`` holds raw-space generations aligned with the corpus; the
    preprocessing recorded in the matrix (normalization split, pooling factor)
    is re-applied here so distance metrics live in the labelling space.
    """
    check_provenance(index, matrix)
    if matrix.clip_ids != corpus.clip_ids:
        raise ValidationError("matrix clip ordering does not match the corpus")
    if gen.clip_ids != corpus.clip_ids:
        raise ValidationError("generated set clip ordering does not match the corpus")

    t_listen = {s.n_frames for s in corpus.listeners}
    t_speak = {s.n_frames for s in corpus.speakers}
    if len(t_listen) != 1 or len(t_speak) != 1:
        raise ValidationError("corpus clips must share one frame length for the metric suite")
    for cid, gens in zip(gen.clip_ids, gen.reactions):
        for i, p in enumerate(gens):
            if p.n_frames != next(iter(t_listen)):
                raise ValidationError(
                    f"generation {i + 1} for clip {cid!r} has {p.n_frames} frames, expected {next(iter(t_listen))}"
                )
    if config.max_lag >= next(iter(t_speak)):
        raise ValidationError(
            f"max_lag {config.max_lag} must be smaller than the clip length {next(iter(t_speak))}"
        )

    params = fit_normalization(reference_series(corpus, config.reference_split))
    factor = matrix.downsample_factor

    def to_labelling_space(s: ClipSeries) -> ClipSeries:
        return downsample(apply_normalization(s, params), factor)

    listeners_proc = [to_labelling_space(s) for s in corpus.listeners]
    gen_proc = gen.map_series(to_labelling_space)

    # Appropriateness: distances in labelling space, shared between FRDist and ACC.
    dmin = _min_dtw_per_generation(gen_proc, index, listeners_proc)
    per_clip_dist = dmin.sum(axis=1)
    sims = 1.0 - dmin / matrix.max_dtw
    hits = np.vectorize(index.passes)(sims)
    per_clip_hits = hits.sum(axis=1)

    per_clip_corr = np.empty(gen.size)
    for m, gens in enumerate(gen.reactions):
        candidates = [corpus.listeners[j] for j in index.neighbors[m]]
        per_clip_corr[m] = sum(max(ccc_multichannel(p, f) for f in candidates) for p in gens)

    per_clip_var = np.array(
        [np.mean([series_variance(p) for p in gens]) for gens in gen.reactions]
    )

    if gen.alpha > 1:
        per_clip_div = np.array(
            [
                sum(mse(gens[i], gens[j]) for i in range(len(gens)) for j in range(i + 1, len(gens)))
                for gens in gen.reactions
            ]
        )
        frdiv = float(per_clip_div.mean())
    else:
        per_clip_div = np.zeros(gen.size)
        frdiv = 0.0

    frdvs = fr_dvs(gen) if gen.size > 1 else 0.0

    per_clip_rea = np.empty(gen.size)
    for m, gens in enumerate(gen.reactions):
        gen_frames = np.concatenate([p.frames for p in gens], axis=0)
        real_frames = np.concatenate([corpus.listeners[j].frames for j in index.neighbors[m]], axis=0)
        per_clip_rea[m] = frechet_distance(
            gaussian_fit(gen_frames, config.fid_eps), gaussian_fit(real_frames, config.fid_eps)
        )
    frrea = (
        fr_rea(gen, index, corpus.listeners, pooled=True, eps=config.fid_eps)
        if config.pooled_fid
        else float(per_clip_rea.mean())
    )

    per_clip_syn = np.empty(gen.size)
    for m, gens in enumerate(gen.reactions):
        spk = corpus.speakers[m].facial()
        per_clip_syn[m] = sum(abs(tlcc(p.facial(), spk, config.max_lag).peak_lag) for p in gens)

    return MetricReport(
        frdist=float(per_clip_dist.mean()),
        frcorr=float(per_clip_corr.mean()),
        acc=float(np.count_nonzero(hits) / hits.size),
        frvar=float(np.mean([series_variance(p) for gens in gen.reactions for p in gens])),
        frdiv=frdiv,
        frdvs=frdvs,
        frrea=frrea,
        frsyn=float(per_clip_syn.mean()),
        per_clip={
            "frdist": per_clip_dist,
            "frcorr": per_clip_corr,
            "acc_hits": per_clip_hits.astype(np.float64),
            "frvar": per_clip_var,
            "frdiv": per_clip_div,
            "frrea": per_clip_rea,
            "frsyn": per_clip_syn,
        },
        clip_ids=gen.clip_ids,
        config={
            "threshold": index.threshold,
            "inclusive": index.inclusive,
            "max_dtw": matrix.max_dtw,
            "alpha": gen.alpha,
            "max_lag": config.max_lag,
            "downsample_factor": factor,
            "fid_eps": config.fid_eps,
            "pooled_fid": config.pooled_fid,
        },
    )


def load_generated_set(gen_dir: str | Path, corpus: Corpus) -> GeneratedSet:
    """Load ``<clip_id>.gen<i>.csv`` files (i = 1..alpha) for every corpus clip.

    Files use the clip feature CSV format; every generation must match its
    ground-truth reaction's frame count.
    """
    gen_dir = Path(gen_dir)
    if not gen_dir.is_dir():
        raise ValidationError(f"generated-set directory not found: {gen_dir}")
    reactions = []
    alpha_seen: int | None = None
    for entry, gt in zip(corpus.manifest.entries, corpus.listeners):
        gens = []
        i = 1
        while True:
            path = gen_dir / f"{entry.clip_id}.gen{i}.csv"
            if not path.exists():
                break
            series = load_clip_series(
                path, corpus.schema, "listener", entry.fps, clip_id=entry.clip_id, dyad_id=entry.dyad_id
            )
            if series.n_frames != gt.n_frames:
                raise ValidationError(
                    f"generated file {path}: {series.n_frames} frames, ground truth has {gt.n_frames}"
                )
            gens.append(series)
            i += 1
        if not gens:
            raise ValidationError(f"no generations found for clip {entry.clip_id!r} (expected {entry.clip_id}.gen1.csv)")
        if alpha_seen is None:
            alpha_seen = len(gens)
        elif len(gens) != alpha_seen:
            raise ValidationError(
                f"clip {entry.clip_id!r} has {len(gens)} generations, expected {alpha_seen}"
            )
        reactions.append(tuple(gens))
    return GeneratedSet(clip_ids=corpus.clip_ids, reactions=tuple(reactions))
