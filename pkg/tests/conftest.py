from __future__ import annotations

import numpy as np
import pytest

from facereact import (
    ChannelSchema,
    ClipSeries,
    LabelConfig,
    SynthConfig,
    apply_normalization,
    build_index,
    fit_normalization,
    load_corpus,
    pairwise_matrix,
    synth_corpus,
)
from facereact.corpus import FACIAL_CHANNELS, reference_series

SCHEMA = ChannelSchema()
N_FACIAL = len(FACIAL_CHANNELS)


def facial_series(frames: np.ndarray, clip_id: str = "clip", role: str = "listener") -> ClipSeries:
    """Wrap a (T, 25) array as an in-memory ClipSeries (no range validation)."""
    return ClipSeries(clip_id, "dyad", role, 25.0, np.asarray(frames, dtype=float), SCHEMA)


def broadcast_series(channel: np.ndarray, clip_id: str = "clip", role: str = "listener") -> ClipSeries:
    """A ClipSeries whose 25 channels all carry the same 1-D pattern."""
    channel = np.asarray(channel, dtype=float)
    return facial_series(np.tile(channel[:, None], (1, N_FACIAL)), clip_id, role)


def valid_clip_text(t: int, seed: int = 0) -> str:
    """CSV text for a range-valid clip with t frames (mild seeded variation)."""
    rng = np.random.default_rng(seed)
    lines = ["frame," + ",".join(SCHEMA.channels)]
    for k in range(t):
        au = 0.5 + 0.3 * np.sin(0.1 * k + rng.uniform(0, 0.1, 15))
        affect = 0.5 * np.sin(0.05 * k + rng.uniform(0, 0.1, 2))
        probs = rng.uniform(0.05, 1.0, 8)
        probs = probs / probs.sum()
        row = np.concatenate([au, affect, probs])
        lines.append(f"{k}," + ",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def synth_bundle(tmp_path_factory):
    """A small labelled synthetic corpus shared by the metric and CLI tests."""
    root = tmp_path_factory.mktemp("synth_corpus")
    config = SynthConfig(clips=8, frames=60, clusters=2, noise=0.05, separation=1.5, lag=2, seed=7)
    manifest, clusters = synth_corpus(config, root)
    corpus = load_corpus(root / "manifest.csv")
    params = fit_normalization(reference_series(corpus))
    speakers_proc = [apply_normalization(s, params) for s in corpus.speakers]
    label_config = LabelConfig(percentile=60.0)
    matrix = pairwise_matrix(speakers_proc, label_config)
    index = build_index(matrix, label_config)
    return {
        "root": root,
        "config": config,
        "clusters": clusters,
        "corpus": corpus,
        "params": params,
        "speakers_proc": speakers_proc,
        "label_config": label_config,
        "matrix": matrix,
        "index": index,
    }
