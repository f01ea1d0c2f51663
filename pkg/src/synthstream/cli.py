"""Command-line pipeline: ingest -> stats -> filter -> generate -> fidelity -> utility.

Every run is deterministic given its flags and writes one key=value manifest
next to its primary output; re-running the manifest's recorded argv
reproduces the outputs byte for byte. An optional key=value config file can
preset flags; explicit flags win. SYNTHSTREAM_WORKERS sets the default
worker count.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import shlex
import sys
import time
from pathlib import Path

from . import __version__
from .corpus import (
    LengthDistribution,
    StartDistribution,
    empirical_length_distribution,
    empirical_start_distribution,
    horizontal_split,
    load_clickstreams,
    load_vocabulary,
    save_clickstreams,
    save_vocabulary,
    vertical_split,
)
from .fidelity import matrix_fidelity, save_report as save_fidelity_report
from .generator import MbrwConfig, MemoryDistribution, generate_set_with_stats
from .recsys import run_utility_experiment, save_report as save_utility_report
from .seqgraph import COUNT_MODES, build_cvs, build_ds, k_anonymity_filter, load_matrix, save_matrix

PRESETS = {
    # published VideoLectures configuration
    "videolectures": ["--memory", "constant:5", "--length", "geometric:0.1", "--count", "20000"],
}


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _parse_params(rest: str, expected: int, spec: str) -> list[float]:
    parts = rest.split(",") if rest else []
    if len(parts) != expected:
        raise ValueError(f"bad distribution spec {spec!r}: expected {expected} parameter(s)")
    return [float(p) for p in parts]


def parse_length_spec(spec: str, corpus=None) -> LengthDistribution:
    if spec == "empirical":
        if corpus is None:
            raise ValueError("--length empirical requires --corpus")
        return empirical_length_distribution(corpus)
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        return LengthDistribution.constant(int(_parse_params(rest, 1, spec)[0]))
    if kind == "geometric":
        return LengthDistribution.geometric(_parse_params(rest, 1, spec)[0])
    if kind == "poisson":
        return LengthDistribution.poisson(_parse_params(rest, 1, spec)[0])
    if kind == "negbinom":
        r, p = _parse_params(rest, 2, spec)
        return LengthDistribution.negative_binomial(r, p)
    if kind == "gaussian":
        mu, sigma = _parse_params(rest, 2, spec)
        return LengthDistribution.rounded_gaussian(mu, sigma)
    raise ValueError(f"unknown length distribution {spec!r}")


def parse_memory_spec(spec: str) -> MemoryDistribution:
    kind, _, rest = spec.partition(":")
    if kind == "constant":
        return MemoryDistribution.constant(int(_parse_params(rest, 1, spec)[0]))
    if kind == "gaussian":
        mu, sigma = _parse_params(rest, 2, spec)
        return MemoryDistribution.rounded_gaussian(mu, sigma)
    raise ValueError(f"unknown memory distribution {spec!r}")


def parse_start_spec(spec: str, corpus, vocab) -> StartDistribution:
    if spec == "uniform":
        return StartDistribution.uniform()
    if spec == "empirical":
        if corpus is None:
            raise ValueError("--start empirical requires --corpus")
        return empirical_start_distribution(corpus)
    if spec.startswith("fixed:"):
        label = spec[len("fixed:") :]
        if vocab is None:
            raise ValueError("--start fixed:<label> requires a vocabulary")
        return StartDistribution.fixed(vocab.id_of(label), vocab.size)
    raise ValueError(f"unknown start rule {spec!r}")


class _Run:
    """Tracks outputs so a failing run leaves nothing partial behind."""

    def __init__(self, argv: list[str]):
        self.argv = list(argv)
        self.outputs: list[Path] = []
        self.started = time.monotonic()

    def declare(self, path) -> Path:
        path = Path(path)
        self.outputs.append(path)
        return path

    def cleanup(self) -> None:
        for path in self.outputs:
            path.unlink(missing_ok=True)

    def write_manifest(self, path, command: str, values: dict, inputs: dict) -> None:
        path = self.declare(path)
        lines = [
            "# synthstream run manifest",
            f"tool_version={__version__}",
            f"command={command}",
            f"argv={shlex.join(self.argv)}",
        ]
        lines += [f"{key}={value}" for key, value in values.items()]
        lines += [f"input_sha256.{name}={_sha256(p)}" for name, p in inputs.items()]
        lines += [f"output.{i}={p}" for i, p in enumerate(self.outputs[:-1])]
        lines.append(f"duration_seconds={time.monotonic() - self.started:.3f}")
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest_argv(path) -> list[str]:
    """Recorded argv of a previous run, ready to pass back into main()."""
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("argv="):
            return shlex.split(line[len("argv=") :])
    raise ValueError(f"{path}: no argv line")


# --- subcommands -----------------------------------------------------------


def cmd_stats(args, run: _Run) -> None:
    corpus = load_clickstreams(args.corpus)
    ds = build_ds(corpus, args.mode)
    cvs = build_cvs(corpus, args.mode)
    prefix = args.output_prefix
    save_matrix(ds, run.declare(f"{prefix}.ds.tsv"))
    save_matrix(cvs, run.declare(f"{prefix}.cvs.tsv"))
    save_vocabulary(corpus.vocab, run.declare(f"{prefix}.vocab.txt"))
    print(f"DS: n={ds.n} nnz={ds.nnz}  CVS: nnz={cvs.nnz}  mode={args.mode}")
    run.write_manifest(
        f"{prefix}.manifest",
        "stats",
        {"counting_mode": args.mode, "n": ds.n, "streams": len(corpus)},
        {"corpus": args.corpus},
    )


def cmd_filter(args, run: _Run) -> None:
    matrix = load_matrix(args.matrix)
    filtered = k_anonymity_filter(matrix, args.k)
    save_matrix(filtered, run.declare(args.output))
    print(f"kept {filtered.nnz} of {matrix.nnz} entries at k={args.k}")
    run.write_manifest(
        f"{args.output}.manifest",
        "filter",
        {"k": args.k, "kind": matrix.kind, "counting_mode": matrix.mode, "n": matrix.n},
        {"matrix": args.matrix},
    )


def cmd_generate(args, run: _Run) -> None:
    ds = load_matrix(args.ds)
    cvs = load_matrix(args.cvs)
    if ds.kind != "DS" or cvs.kind != "CVS":
        raise ValueError(f"--ds must be a DS file and --cvs a CVS file (got {ds.kind}/{cvs.kind})")
    vocab = load_vocabulary(args.vocab)
    corpus = load_clickstreams(args.corpus, vocab) if args.corpus else None

    if args.count is None:
        raise ValueError("--count is required (or use --preset)")
    length_spec = args.length or ("empirical" if corpus is not None else None)
    if length_spec is None:
        raise ValueError("--length is required (or supply --corpus for the empirical distribution)")
    start_spec = args.start or ("empirical" if corpus is not None else "uniform")

    config = MbrwConfig(
        memory_dist=parse_memory_spec(args.memory),
        length_dist=parse_length_spec(length_spec, corpus),
        epsilon=args.epsilon,
        stream_count=args.count,
        start_dist=parse_start_spec(start_spec, corpus, vocab),
        seed=args.seed,
    )
    synthetic, stats = generate_set_with_stats(ds, cvs, config, vocab, workers=args.workers)
    save_clickstreams(synthetic, run.declare(args.output))
    print(
        f"generated {len(synthetic)} streams "
        f"(dead-end jumps: {stats.dead_end_jumps}, zero-memory walks: {stats.zero_memory_walks})"
    )
    inputs = {"ds": args.ds, "cvs": args.cvs, "vocab": args.vocab}
    if args.corpus:
        inputs["corpus"] = args.corpus
    run.write_manifest(
        f"{args.output}.manifest",
        "generate",
        {
            "seed": config.seed,
            "epsilon": format(config.epsilon, "g"),
            "stream_count": config.stream_count,
            "memory_dist": config.memory_dist.describe(),
            "length_dist": config.length_dist.describe(),
            "start_dist": config.start_dist.describe(),
            "counting_mode": ds.mode,
            "n": ds.n,
            "workers": args.workers,
            "dead_end_jumps": stats.dead_end_jumps,
            "zero_memory_walks": stats.zero_memory_walks,
        },
        inputs,
    )


def cmd_fidelity(args, run: _Run) -> None:
    real = load_matrix(args.real)
    inputs = {"real": args.real}
    if args.syn:
        syn = load_matrix(args.syn)
        inputs["syn"] = args.syn
    else:
        vocab = load_vocabulary(args.vocab)
        corpus = load_clickstreams(args.syn_corpus, vocab)
        syn = build_ds(corpus, real.mode) if real.kind == "DS" else build_cvs(corpus, real.mode)
        inputs["syn_corpus"] = args.syn_corpus
        inputs["vocab"] = args.vocab
    report = matrix_fidelity(real, syn, args.z)
    save_fidelity_report(report, run.declare(args.output))
    print(f"avg={report.avg:.6g} std={report.std:.6g} skipped={report.skipped_count} (z={report.z})")
    run.write_manifest(
        f"{args.output}.manifest",
        "fidelity",
        {"z": args.z, "kind": real.kind, "avg": format(report.avg, ".6g"), "std": format(report.std, ".6g")},
        inputs,
    )


def cmd_utility(args, run: _Run) -> None:
    corpus = load_clickstreams(args.corpus)
    mbrw = MbrwConfig(
        memory_dist=parse_memory_spec(args.memory),
        length_dist=LengthDistribution.constant(1),  # replaced per fold by the training empirical
        epsilon=args.epsilon,
        stream_count=1,  # replaced per fold by |train|
        start_dist=StartDistribution.uniform(),  # replaced per fold by the training empirical
        seed=args.seed,
    )
    report = run_utility_experiment(
        corpus,
        args.folds,
        mbrw,
        knn_k=args.knn_k,
        prefix_fraction=args.prefix_fraction,
        mode=args.mode,
        rec_depth=args.rec_depth,
        workers=args.workers,
    )
    save_utility_report(report, run.declare(args.output))
    for line in report.summary_lines():
        print(line)
    for metric in ("map", "ndcg", "p10"):
        print(f"{metric}: syn>rnd in {report.wins('syn', 'rnd', metric)}/{args.folds} folds")
    run.write_manifest(
        f"{args.output}.manifest",
        "utility",
        dict(report.params) | {"workers": args.workers, "excluded_streams": report.excluded_streams},
        {"corpus": args.corpus},
    )


def cmd_split(args, run: _Run) -> None:
    if args.horizontal is None and args.vertical is None:
        raise ValueError("give --horizontal and/or --vertical")
    corpus = load_clickstreams(args.corpus)
    prefix = args.output_prefix
    values: dict = {"streams": len(corpus)}
    if args.horizontal is not None:
        train, rest = horizontal_split(corpus, args.horizontal, args.seed)
        save_clickstreams(train, run.declare(f"{prefix}.train.txt"))
        values |= {"horizontal": format(args.horizontal, "g"), "seed": args.seed, "train": len(train)}
    else:
        rest = corpus
    if args.vertical is not None:
        query, holdout = vertical_split(rest, args.vertical)
        save_clickstreams(query, run.declare(f"{prefix}.query.txt"))
        save_clickstreams(holdout, run.declare(f"{prefix}.holdout.txt"))
        values |= {"vertical": format(args.vertical, "g")}
    else:
        save_clickstreams(rest, run.declare(f"{prefix}.test.txt"))
    print(f"wrote {len(run.outputs)} split file(s) under {prefix}.*")
    run.write_manifest(f"{prefix}.manifest", "split", values, {"corpus": args.corpus})


# --- argument plumbing -----------------------------------------------------


def _default_workers() -> int:
    return int(os.environ.get("SYNTHSTREAM_WORKERS", "1"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="synthstream", description=__doc__)
    parser.add_argument("--version", action="version", version=f"synthstream {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file presetting flags; explicit flags win")

    p = sub.add_parser("stats", parents=[common], help="build DS and CVS matrices from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=COUNT_MODES, default="per_stream")
    p.add_argument("--output-prefix", required=True)
    p.set_defaults(handler=cmd_stats)

    p = sub.add_parser("filter", parents=[common], help="k-anonymity threshold a matrix file")
    p.add_argument("--matrix", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=cmd_filter)

    p = sub.add_parser("generate", parents=[common], help="generate synthetic clickstreams")
    p.add_argument("--ds", required=True)
    p.add_argument("--cvs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--corpus", help="real corpus for empirical length/start distributions")
    p.add_argument("--count", type=int, help="number of synthetic streams")
    p.add_argument("--epsilon", type=float, default=0.0001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--memory", default="gaussian:3,2", help="constant:M or gaussian:MU,SIGMA")
    p.add_argument("--length", help="constant:L geometric:P poisson:LAM negbinom:R,P gaussian:MU,SIGMA empirical")
    p.add_argument("--start", help="empirical, uniform, or fixed:LABEL")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--workers", type=int, default=_default_workers())
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("fidelity", parents=[common], help="top-z rank correlation of real vs synthetic matrices")
    p.add_argument("--real", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--syn", help="synthetic matrix file")
    group.add_argument("--syn-corpus", help="synthetic corpus; the matching matrix is built on the fly")
    p.add_argument("--vocab", help="vocabulary file (required with --syn-corpus)")
    p.add_argument("--z", type=int, default=100)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=cmd_fidelity)

    p = sub.add_parser("utility", parents=[common], help="fold-wise Real/Syn/Rnd recommender comparison")
    p.add_argument("--corpus", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--knn-k", type=int, default=15)
    p.add_argument("--prefix-fraction", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=0.0001)
    p.add_argument("--memory", default="gaussian:3,2")
    p.add_argument("--mode", choices=COUNT_MODES, default="per_stream")
    p.add_argument("--rec-depth", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--workers", type=int, default=_default_workers())
    p.set_defaults(handler=cmd_utility)

    p = sub.add_parser("split", parents=[common], help="horizontal and/or vertical corpus splits")
    p.add_argument("--corpus", required=True)
    p.add_argument("--horizontal", type=float, help="test fraction for the user-level split")
    p.add_argument("--vertical", type=float, help="prefix fraction for the per-stream split")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output-prefix", required=True)
    p.set_defaults(handler=cmd_split)

    return parser


def _load_config_pairs(path) -> list[str]:
    pairs: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ValueError(f"{path}:{lineno}: expected key=value")
        pairs += [f"--{key.strip().replace('_', '-')}", value.strip()]
    return pairs


def _expand_argv(argv: list[str]) -> list[str]:
    """Insert config-file and preset pairs after the subcommand; explicit flags win."""
    if not argv or argv[0].startswith("-"):
        return argv
    rest = list(argv[1:])
    injected: list[str] = []
    if "--config" in rest:
        injected += _load_config_pairs(rest[rest.index("--config") + 1])
    if "--preset" in rest:
        injected += PRESETS[rest[rest.index("--preset") + 1]]
    return [argv[0]] + injected + rest


def main(argv: list[str] | None = None) -> int:
    raw_argv = list(sys.argv[1:] if argv is None else argv)
    try:
        effective = _expand_argv(raw_argv)
    except (OSError, ValueError, KeyError, IndexError) as exc:
        print(f"synthstream: error: {exc}", file=sys.stderr)
        return 1
    args = build_parser().parse_args(effective)
    run = _Run(raw_argv)
    try:
        args.handler(args, run)
    except (OSError, ValueError) as exc:
        run.cleanup()
        print(f"synthstream: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
