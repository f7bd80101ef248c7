"""Command-line driver wiring ingestion, labelling, evaluation, and synthesis.

Exit codes: 0 success, 2 user/validation error, 1 internal error.  Every
command is deterministic given identical inputs and flags; flags override
config-file entries (flat ``key=value`` lines, ``#`` comments).
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .corpus import (
    apply_normalization,
    auto_downsample_factor,
    downsample,
    fit_normalization,
    load_corpus,
    reference_series,
    write_clip_series,
)
from .dtw import DtwConfig
from .errors import ValidationError
from .generators import (
    SynthConfig,
    baseline_gt_jitter,
    baseline_mirror,
    baseline_retrieval,
    synth_corpus,
)
from .labelling import (
    LabelConfig,
    build_index,
    load_index,
    load_matrix,
    pairwise_matrix,
    save_index,
    save_matrix,
)
from .metrics import EvalConfig, evaluate_all, load_generated_set

BASELINE_KINDS = ("mirror", "gt_jitter", "retrieval")


def _require(ns: argparse.Namespace, *names: str) -> None:
    missing = [n for n in names if getattr(ns, n.replace("-", "_")) is None]
    if missing:
        raise ValidationError("missing required option(s): " + ", ".join("--" + n for n in missing))


def _resolve_downsample(value: str | None, series) -> int:
    if value is None or value == "auto":
        return auto_downsample_factor(series)
    try:
        factor = int(value)
    except ValueError:
        raise ValidationError(f"--downsample must be 'auto' or a positive integer, got {value!r}") from None
    if factor < 1:
        raise ValidationError(f"--downsample must be >= 1, got {factor}")
    return factor


def _label_config(ns: argparse.Namespace, downsample_factor: int = 1) -> LabelConfig:
    threshold = getattr(ns, "threshold", None)
    percentile = getattr(ns, "percentile", None)
    if threshold is not None and percentile is not None:
        raise ValidationError("set either --threshold or --percentile, not both")
    if threshold is None and percentile is None:
        percentile = 90.0
    return LabelConfig(
        threshold=threshold,
        percentile=percentile,
        dtw=DtwConfig(band_radius=getattr(ns, "band", None)),
        downsample_factor=downsample_factor,
        include_audio=bool(getattr(ns, "include_audio", False)),
    )


def cmd_similarity(ns: argparse.Namespace) -> int:
    _require(ns, "manifest", "out")
    started = time.perf_counter()
    corpus = load_corpus(ns.manifest, include_audio=ns.include_audio)
    params = fit_normalization(reference_series(corpus))
    normalized = [apply_normalization(s, params) for s in corpus.speakers]
    factor = _resolve_downsample(ns.downsample, normalized)
    processed = [downsample(s, factor) for s in normalized]
    config = _label_config(ns, downsample_factor=factor)
    matrix = pairwise_matrix(processed, config, threads=ns.threads)
    save_matrix(ns.out, matrix)
    wall = time.perf_counter() - started
    print(f"M={matrix.size} max_dtw={matrix.max_dtw:.6f} downsample={factor} wall={wall:.2f}s")
    print(f"matrix written to {ns.out}")
    return 0


def cmd_label(ns: argparse.Namespace) -> int:
    _require(ns, "matrix", "out")
    matrix = load_matrix(ns.matrix)
    config = _label_config(ns, downsample_factor=matrix.downsample_factor)
    index = build_index(matrix, config)
    save_index(ns.out, index)
    mean_size = float(index.set_sizes().mean())
    rule = ">=" if index.inclusive else ">"
    print(f"threshold={index.threshold:.6f} (similarity {rule} threshold) mean_set_size={mean_size:.2f}")
    print(f"index written to {ns.out}")
    return 0


def cmd_evaluate(ns: argparse.Namespace) -> int:
    _require(ns, "manifest", "matrix", "index", "gen_dir", "out")
    corpus = load_corpus(ns.manifest, include_audio=ns.include_audio)
    matrix = load_matrix(ns.matrix)
    index = load_index(ns.index)
    gen = load_generated_set(ns.gen_dir, corpus)
    config = EvalConfig(max_lag=ns.max_lag, fid_eps=ns.fid_eps, pooled_fid=ns.pooled_fid)
    report = evaluate_all(gen, index, matrix, corpus, config)

    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text(report.table() + "\n", encoding="utf-8")
    (out_dir / "report.kv").write_text("\n".join(report.kv_lines()) + "\n", encoding="utf-8")
    (out_dir / "per_clip.csv").write_text("\n".join(report.per_clip_csv_lines()) + "\n", encoding="utf-8")
    print(report.table())
    print(f"report written to {out_dir}")
    return 0


def cmd_baseline(ns: argparse.Namespace) -> int:
    if ns.kind not in BASELINE_KINDS:
        raise ValidationError(f"unknown baseline kind {ns.kind!r} (expected one of {BASELINE_KINDS})")
    _require(ns, "manifest", "out")
    corpus = load_corpus(ns.manifest, include_audio=ns.include_audio)
    out_dir = Path(ns.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if ns.kind == "mirror":
        sets = [[baseline_mirror(spk)] for spk in corpus.speakers]
    elif ns.kind == "gt_jitter":
        sets = [
            baseline_gt_jitter(gt, ns.alpha, ns.sigma, seed=ns.seed + m)
            for m, gt in enumerate(corpus.listeners)
        ]
    else:
        _require(ns, "matrix")
        matrix = load_matrix(ns.matrix)
        if matrix.clip_ids != corpus.clip_ids:
            raise ValidationError("matrix clip ordering does not match the corpus")
        sets = [
            baseline_retrieval(m, matrix, corpus.listeners, ns.alpha) for m in range(corpus.size)
        ]

    for cid, gens in zip(corpus.clip_ids, sets):
        for i, series in enumerate(gens, start=1):
            write_clip_series(out_dir / f"{cid}.gen{i}.csv", series)
    cfg_lines = [
        f"kind={ns.kind}",
        f"alpha={len(sets[0])}",
        f"sigma={ns.sigma!r}",
        f"seed={ns.seed}",
    ]
    (out_dir / "baseline.cfg").write_text("\n".join(cfg_lines) + "\n", encoding="utf-8")
    print(f"{ns.kind} baseline: {sum(len(g) for g in sets)} files written to {out_dir}")
    return 0


def cmd_synth(ns: argparse.Namespace) -> int:
    _require(ns, "out")
    config = SynthConfig(
        clips=ns.clips,
        frames=ns.frames,
        clusters=ns.clusters,
        noise=ns.noise,
        separation=ns.separation,
        lag=ns.lag,
        seed=ns.seed,
    )
    manifest, clusters = synth_corpus(config, ns.out)
    k = len(set(clusters.values()))
    print(f"synthetic corpus: M={manifest.size} clusters={k} written to {ns.out}")
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file; flags override its entries")
    parser.add_argument("--include-audio", action="store_true", default=False,
                        help="include audio descriptor channels from the clip files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="facereact",
        description="Label appropriate listener facial reactions and score generated reaction sets.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("similarity", help="compute and save the pairwise behaviour similarity matrix")
    p.add_argument("--manifest", help="corpus manifest CSV")
    p.add_argument("--out", help="output matrix file")
    p.add_argument("--band", type=int, default=None, help="Sakoe-Chiba band radius in frames (default: unbounded)")
    p.add_argument("--downsample", default=None, help="pooling factor or 'auto' (default: auto, clips <= 128 frames)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for pair computation")
    _add_common(p)
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("label", help="threshold a similarity matrix into an appropriateness index")
    p.add_argument("--matrix", help="similarity matrix file")
    p.add_argument("--out", help="output index file")
    p.add_argument("--threshold", type=float, default=None, help="fixed similarity threshold in (0, 1)")
    p.add_argument("--percentile", type=float, default=None,
                   help="percentile of off-diagonal similarities (default: 90)")
    _add_common(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("evaluate", help="score a generated reaction set with the eight metrics")
    p.add_argument("--manifest", help="corpus manifest CSV")
    p.add_argument("--matrix", help="similarity matrix file")
    p.add_argument("--index", help="appropriateness index file")
    p.add_argument("--gen-dir", help="directory of <clip_id>.gen<i>.csv files")
    p.add_argument("--out", help="output report directory")
    p.add_argument("--max-lag", type=int, default=30, help="synchrony lag window in frames")
    p.add_argument("--fid-eps", type=float, default=1e-6, help="covariance ridge for the realism metric")
    p.add_argument("--pooled-fid", action="store_true", default=False,
                   help="compare corpus-pooled distributions instead of per-clip")
    p.add_argument("--threads", type=int, default=1, help="(reserved) worker threads")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("baseline", help="materialize a reference generated set")
    p.add_argument("kind", help="one of: " + ", ".join(BASELINE_KINDS))
    p.add_argument("--manifest", help="corpus manifest CSV")
    p.add_argument("--out", help="output generated-set directory")
    p.add_argument("--matrix", help="similarity matrix file (retrieval baseline)")
    p.add_argument("--alpha", type=int, default=1, help="generations per clip")
    p.add_argument("--sigma", type=float, default=0.1, help="noise scale (gt_jitter baseline)")
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("synth", help="write a synthetic corpus with planted cluster structure")
    p.add_argument("--out", help="output corpus directory")
    p.add_argument("--clips", type=int, default=20)
    p.add_argument("--frames", type=int, default=120)
    p.add_argument("--clusters", type=int, default=2)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--lag", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    return parser


def _config_tokens(path: str, parser: argparse.ArgumentParser) -> list[str]:
    """Turn config-file entries into option tokens the given subparser accepts."""
    known = {s for a in parser._actions for s in a.option_strings}
    tokens: list[str] = []
    cfg = Path(path)
    if not cfg.exists():
        raise ValidationError(f"config file not found: {cfg}")
    for lineno, line in enumerate(cfg.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"config file {cfg} line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        opt = "--" + key.strip().replace("_", "-")
        if opt not in known:
            raise ValidationError(f"config file {cfg} line {lineno}: unknown option {key.strip()!r}")
        value = value.strip()
        if opt in ("--include-audio", "--pooled-fid"):
            if value.lower() in ("1", "true", "yes"):
                tokens.append(opt)
        else:
            tokens.extend([opt, value])
    return tokens


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if ns.command is None:
        parser.print_help()
        return 2
    try:
        if getattr(ns, "config", None):
            sub = next(
                a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
            ).choices[ns.command]
            tokens = _config_tokens(ns.config, sub)
            # config tokens first so explicit flags win (the command is argv[0])
            merged = [ns.command] + tokens + argv[1:]
            try:
                ns = parser.parse_args(merged)
            except SystemExit as exc:
                return exc.code if isinstance(exc.code, int) else 2
        return ns.func(ns)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
