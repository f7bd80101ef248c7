"""Appropriateness labelling: all-pairs behaviour similarity and neighbour indexing.

The pipeline mirrors how listeners are credited with appropriate reactions:
speaker behaviours that are sufficiently similar share their real reactions.
Step 1 computes exact pairwise DTW distances, step 2 thresholds the derived
similarities, step 3 reads each similar-behaviour set as the appropriate
reaction set of the same corpus indices.
"""

from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import ClipSeries, as_frames
from .dtw import DtwConfig, band_half_width, _dtw_dp, _lb_keogh_dp
from .errors import ProvenanceError, ValidationError

MATRIX_MAGIC = b"FRSIMMAT"
MATRIX_VERSION = 1
_HEADER = struct.Struct("<8sIIdiI32s32s")

# Absolute slack used only to decide whether a lower bound may prune a pair;
# borderline pairs fall through to the exact computation.
_PRUNE_MARGIN = 1e-12


@dataclass(frozen=True)
class LabelConfig:
    """Threshold rule (fixed value or percentile of off-diagonal similarities),
    DTW banding, and the preprocessing knobs that shape the distance matrix."""

    threshold: float | None = None
    percentile: float | None = None
    dtw: DtwConfig = field(default_factory=DtwConfig)
    downsample_factor: int = 1
    include_audio: bool = False

    def __post_init__(self):
        if (self.threshold is None) == (self.percentile is None):
            raise ValidationError("exactly one of threshold/percentile must be set")
        if self.threshold is not None and not (0.0 < self.threshold < 1.0):
            raise ValidationError(f"threshold must be in (0, 1), got {self.threshold}")
        if self.percentile is not None and not (0.0 < self.percentile < 100.0):
            raise ValidationError(f"percentile must be in (0, 100), got {self.percentile}")
        if self.downsample_factor < 1:
            raise ValidationError(f"downsample_factor must be >= 1, got {self.downsample_factor}")

    def distance_config_hash(self) -> bytes:
        """Hash of the settings that shape the distances (not the threshold)."""
        band = "none" if self.dtw.band_radius is None else str(self.dtw.band_radius)
        text = f"band={band};downsample={self.downsample_factor};audio={int(self.include_audio)}"
        return hashlib.sha256(text.encode()).digest()


@dataclass
class SimilarityMatrix:
    """Dense pairwise DTW distances plus the corpus maximum."""

    clip_ids: tuple[str, ...]
    distances: np.ndarray
    max_dtw: float
    band_radius: int | None
    downsample_factor: int
    config_hash: bytes

    def __post_init__(self):
        self.distances = np.ascontiguousarray(self.distances, dtype=np.float64)
        m = len(self.clip_ids)
        if self.distances.shape != (m, m):
            raise ValidationError(
                f"matrix shape {self.distances.shape} does not match {m} clip ids"
            )
        if np.any(np.abs(np.diag(self.distances)) > 1e-9):
            raise ValidationError("matrix diagonal must be zero")
        if np.any(np.abs(self.distances - self.distances.T) > 1e-9):
            raise ValidationError("matrix must be symmetric")
        if abs(float(self.distances.max()) - self.max_dtw) > 1e-9:
            raise ValidationError("max_dtw does not equal the matrix maximum")

    @property
    def size(self) -> int:
        return len(self.clip_ids)

    def similarities(self) -> np.ndarray:
        """1 - d / max_dtw for every pair, in [0, 1]."""
        if self.max_dtw <= 0:
            raise ValidationError("degenerate corpus: all behaviours identical")
        return 1.0 - self.distances / self.max_dtw

    def content_hash(self) -> str:
        """Hex digest binding clip order, config, and every distance bit."""
        return _matrix_digest(self).hex()


@dataclass(frozen=True)
class AppropriatenessIndex:
    """Per-clip sorted neighbour sets under the resolved threshold.

    ``inclusive`` records the membership comparison: percentile-resolved
    thresholds use similarity >= threshold (the percentile value itself stays
    a member), fixed thresholds use the strict >.
    """

    clip_ids: tuple[str, ...]
    neighbors: tuple[tuple[int, ...], ...]
    threshold: float
    inclusive: bool
    matrix_hash: str

    @property
    def size(self) -> int:
        return len(self.clip_ids)

    def passes(self, similarity: float) -> bool:
        """Membership test for one similarity value under this index's rule."""
        if self.inclusive:
            return similarity >= self.threshold
        return similarity > self.threshold

    def set_sizes(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbors])


def pairwise_matrix(
    series: list[ClipSeries] | list[np.ndarray],
    config: LabelConfig,
    threads: int = 1,
) -> SimilarityMatrix:
    """Exact DTW distances for every unordered clip pair.

    Each pair is computed once by an independent serial kernel and mirrored,
    so the result is bit-identical regardless of thread count or evaluation
    order.  No early abandoning here: the corpus maximum must be exact.
    """
    arrs = [as_frames(s) for s in series]
    m = len(arrs)
    if m < 2:
        raise ValidationError(f"need at least 2 clips, got {m}")
    c = arrs[0].shape[1]
    for k, a in enumerate(arrs):
        if a.shape[1] != c:
            raise ValidationError(f"schema mismatch: clip {k} has {a.shape[1]} channels, expected {c}")
    clip_ids = tuple(
        s.clip_id if isinstance(s, ClipSeries) else f"clip{k:04d}" for k, s in enumerate(series)
    )
    radius = config.dtw.band_radius

    dist = np.zeros((m, m), dtype=np.float64)
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]

    def run(chunk):
        for i, j in chunk:
            w = band_half_width(radius, arrs[i].shape[0], arrs[j].shape[0])
            d, _ = _dtw_dp(arrs[i], arrs[j], w, np.inf)
            dist[i, j] = d
            dist[j, i] = d

    if threads <= 1 or len(pairs) < 2:
        run(pairs)
    else:
        step = max(1, len(pairs) // (threads * 8))
        chunks = [pairs[k : k + step] for k in range(0, len(pairs), step)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, chunks))

    max_dtw = float(dist.max())
    if max_dtw <= 0.0:
        raise ValidationError("degenerate corpus: all behaviours identical")
    return SimilarityMatrix(
        clip_ids=clip_ids,
        distances=dist,
        max_dtw=max_dtw,
        band_radius=radius,
        downsample_factor=config.downsample_factor,
        config_hash=config.distance_config_hash(),
    )


def resolve_threshold(matrix: SimilarityMatrix, config: LabelConfig) -> tuple[float, bool]:
    """Resolve the similarity threshold; returns (value, inclusive_membership)."""
    if config.threshold is not None:
        return float(config.threshold), False
    sims = matrix.similarities()
    iu = np.triu_indices(matrix.size, k=1)
    value = float(np.percentile(sims[iu], config.percentile))
    return value, True


def build_index(matrix: SimilarityMatrix, config: LabelConfig) -> AppropriatenessIndex:
    """Threshold the similarity matrix into per-clip appropriate-reaction sets."""
    if matrix.max_dtw <= 0:
        raise ValidationError("degenerate corpus: all behaviours identical")
    threshold, inclusive = resolve_threshold(matrix, config)
    sims = matrix.similarities()
    mask = sims >= threshold if inclusive else sims > threshold
    neighbors = tuple(tuple(int(j) for j in np.flatnonzero(mask[i])) for i in range(matrix.size))
    for i, n in enumerate(neighbors):
        if i not in n:
            raise ValidationError(
                f"threshold {threshold} excludes self-similarity for clip {matrix.clip_ids[i]!r}"
            )
    return AppropriatenessIndex(
        clip_ids=matrix.clip_ids,
        neighbors=neighbors,
        threshold=threshold,
        inclusive=inclusive,
        matrix_hash=matrix.content_hash(),
    )


def rethreshold_index(
    series: list[ClipSeries] | list[np.ndarray],
    matrix: SimilarityMatrix,
    config: LabelConfig,
    threads: int = 1,
) -> AppropriatenessIndex:
    """Recompute neighbour sets with lower-bound pruning and early abandoning.

    Requires a known ``max_dtw`` (from an exact matrix pass); pairs whose
    envelope bound already fails the threshold are skipped, the rest may
    abandon once every band cell in a row exceeds the distance cutoff.
    Produces the same sets as ``build_index`` on the exact matrix.
    """
    arrs = [as_frames(s) for s in series]
    m = len(arrs)
    if m != matrix.size:
        raise ValidationError(f"series count {m} does not match matrix size {matrix.size}")
    threshold, inclusive = resolve_threshold(matrix, config)
    max_dtw = matrix.max_dtw
    if max_dtw <= 0:
        raise ValidationError("degenerate corpus: all behaviours identical")
    radius = config.dtw.band_radius
    cutoff = (1.0 - threshold) * max_dtw * (1.0 + 1e-9)

    member = np.zeros((m, m), dtype=bool)
    np.fill_diagonal(member, True)
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m)]

    def accept(d: float) -> bool:
        s = 1.0 - d / max_dtw
        return s >= threshold if inclusive else s > threshold

    def run(chunk):
        for i, j in chunk:
            w = band_half_width(radius, arrs[i].shape[0], arrs[j].shape[0])
            lb = _lb_keogh_dp(arrs[i], arrs[j], w)
            if 1.0 - lb / max_dtw < threshold - _PRUNE_MARGIN:
                continue
            d, exact = _dtw_dp(arrs[i], arrs[j], w, cutoff)
            if not exact:
                continue  # certified d > cutoff, hence below threshold
            if accept(float(d)):
                member[i, j] = True
                member[j, i] = True

    if threads <= 1 or len(pairs) < 2:
        run(pairs)
    else:
        step = max(1, len(pairs) // (threads * 8))
        chunks = [pairs[k : k + step] for k in range(0, len(pairs), step)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, chunks))

    neighbors = tuple(tuple(int(j) for j in np.flatnonzero(member[i])) for i in range(m))
    return AppropriatenessIndex(
        clip_ids=matrix.clip_ids,
        neighbors=neighbors,
        threshold=threshold,
        inclusive=inclusive,
        matrix_hash=matrix.content_hash(),
    )


def _digest_parts(
    m: int,
    max_dtw: float,
    band: int,
    factor: int,
    config_hash: bytes,
    clip_ids: tuple[str, ...],
    payload: bytes,
) -> bytes:
    header = _HEADER.pack(
        MATRIX_MAGIC, MATRIX_VERSION, m, max_dtw, band, factor, config_hash, b"\x00" * 32
    )
    h = hashlib.sha256()
    h.update(header)
    h.update("\n".join(clip_ids).encode("utf-8"))
    h.update(payload)
    return h.digest()


def _matrix_digest(matrix: SimilarityMatrix) -> bytes:
    return _digest_parts(
        matrix.size,
        matrix.max_dtw,
        -1 if matrix.band_radius is None else matrix.band_radius,
        matrix.downsample_factor,
        matrix.config_hash,
        matrix.clip_ids,
        np.ascontiguousarray(matrix.distances, dtype="<f8").tobytes(),
    )


def save_matrix(path: str | Path, matrix: SimilarityMatrix) -> None:
    """Write the matrix as fixed header + little-endian float64 payload.

    Clip ids go to a ``<path>.clips`` sidecar, one per line, in matrix order.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    digest = _matrix_digest(matrix)
    header = _HEADER.pack(
        MATRIX_MAGIC,
        MATRIX_VERSION,
        matrix.size,
        matrix.max_dtw,
        -1 if matrix.band_radius is None else matrix.band_radius,
        matrix.downsample_factor,
        matrix.config_hash,
        digest,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(matrix.distances, dtype="<f8").tobytes())
    with open(Path(str(path) + ".clips"), "w", encoding="utf-8") as fh:
        for cid in matrix.clip_ids:
            fh.write(cid + "\n")


def load_matrix(path: str | Path) -> SimilarityMatrix:
    """Load and verify a matrix file; raises on tampering or truncation."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"matrix file not found: {path}")
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ValidationError(f"matrix file {path}: truncated header")
    magic, version, m, max_dtw, band, factor, config_hash, stored_digest = _HEADER.unpack(
        data[: _HEADER.size]
    )
    if magic != MATRIX_MAGIC:
        raise ValidationError(f"matrix file {path}: bad magic (not a similarity matrix file)")
    if version != MATRIX_VERSION:
        raise ValidationError(f"matrix file {path}: unsupported version {version}")
    expected = _HEADER.size + m * m * 8
    if len(data) != expected:
        raise ValidationError(
            f"matrix file {path}: size {len(data)} does not match header M={m} (expected {expected})"
        )
    clips_path = Path(str(path) + ".clips")
    if not clips_path.exists():
        raise ValidationError(f"matrix sidecar not found: {clips_path}")
    clip_ids = tuple(line.strip() for line in clips_path.read_text(encoding="utf-8").splitlines() if line.strip())
    if len(clip_ids) != m:
        raise ValidationError(f"matrix sidecar {clips_path}: {len(clip_ids)} clip ids, header says {m}")
    payload = data[_HEADER.size :]
    if _digest_parts(m, max_dtw, band, factor, config_hash, clip_ids, payload) != stored_digest:
        raise ProvenanceError(f"matrix file {path}: hash mismatch (stale or tampered)")
    dist = np.frombuffer(payload, dtype="<f8").reshape(m, m).copy()
    return SimilarityMatrix(
        clip_ids=clip_ids,
        distances=dist,
        max_dtw=max_dtw,
        band_radius=None if band < 0 else int(band),
        downsample_factor=int(factor),
        config_hash=config_hash,
    )


def save_index(path: str | Path, index: AppropriatenessIndex) -> None:
    """Write the index as line-oriented text: ``clip_id: id1,id2,...``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        "# facereact appropriateness index v1",
        f"# threshold: {index.threshold!r}",
        f"# inclusive: {'true' if index.inclusive else 'false'}",
        f"# matrix_hash: {index.matrix_hash}",
    ]
    for cid, neigh in zip(index.clip_ids, index.neighbors):
        lines.append(f"{cid}: " + ",".join(index.clip_ids[j] for j in neigh))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_index(path: str | Path) -> AppropriatenessIndex:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"index file not found: {path}")
    meta: dict[str, str] = {}
    clip_ids: list[str] = []
    raw_sets: list[list[str]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if ":" in body:
                key, _, val = body.partition(":")
                meta[key.strip()] = val.strip()
            continue
        if ":" not in line:
            raise ValidationError(f"index file {path} line {lineno}: expected 'clip_id: ids'")
        cid, _, ids = line.partition(":")
        clip_ids.append(cid.strip())
        raw_sets.append([s.strip() for s in ids.split(",") if s.strip()])
    for key in ("threshold", "matrix_hash", "inclusive"):
        if key not in meta:
            raise ValidationError(f"index file {path}: missing header field {key!r}")
    if not clip_ids:
        raise ValidationError(f"index file {path}: no clip lines")
    pos = {cid: k for k, cid in enumerate(clip_ids)}
    neighbors = []
    for cid, ids in zip(clip_ids, raw_sets):
        try:
            neighbors.append(tuple(sorted(pos[i] for i in ids)))
        except KeyError as exc:
            raise ValidationError(f"index file {path}: unknown clip id {exc.args[0]!r} in set of {cid!r}") from None
    return AppropriatenessIndex(
        clip_ids=tuple(clip_ids),
        neighbors=tuple(neighbors),
        threshold=float(meta["threshold"]),
        inclusive=meta["inclusive"] == "true",
        matrix_hash=meta["matrix_hash"],
    )


def check_provenance(index: AppropriatenessIndex, matrix: SimilarityMatrix) -> None:
    """Fail when an index and matrix come from different labelling runs."""
    if index.matrix_hash != matrix.content_hash():
        raise ProvenanceError("stale index: matrix hash does not match the loaded matrix")
    if index.clip_ids != matrix.clip_ids:
        raise ProvenanceError("stale index: clip ordering differs from the matrix")
