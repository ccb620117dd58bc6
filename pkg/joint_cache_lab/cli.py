"""
Joint Cache Lab command line.

Usage:
    jcl gen --kind coupled --phases 20 --phase-len 50 --seed 1 -o coupled.csv
    jcl label coupled.csv -o coupled.labels.csv
    jcl simulate coupled.csv --policy lru --events-out events.csv
    jcl train coupled.csv --labels coupled.labels.csv --mode joint -o runs/
    jcl eval coupled.csv --checkpoint runs/joint/<digest>-s0/checkpoint.bin -o report.csv
    jcl report runs/*/*/report.csv -o table
    jcl ablate loop.csv coupled.csv --config demos/coupled-ablation/ablation.conf -o ablation/

Exit codes: 0 success, 1 data or computation error, 2 usage error.
"""

import argparse
import io
import logging
import os
import sys
import tempfile
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

from joint_cache_lab import __version__
from joint_cache_lab.config import RunConfig, load_config, parse_overrides
from joint_cache_lab.errors import DataIntegrityError, JclError
from joint_cache_lab.trace import (
    GeneratorKind,
    GeneratorParams,
    Trace,
    gen_synthetic,
    parse_trace,
    read_sidecar,
    write_sidecar,
    write_trace,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

# Config keys that change MIN labels, recorded in label sidecars.
LABEL_CACHE_KEYS = ("num_sets", "associativity", "block_size")


# ==============================================================================
# File helpers
# ==============================================================================


def atomic_write(path: Union[str, Path], data: Union[str, bytes]) -> None:
    """Write through a temp file in the same directory, then rename over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render(writer, *args) -> str:
    buffer = io.StringIO()
    writer(*args, buffer)
    return buffer.getvalue()


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(f"{path}.meta")


def write_with_sidecar(path: Union[str, Path], data: Union[str, bytes], meta: Dict[str, object]) -> None:
    atomic_write(path, data)
    atomic_write(sidecar_path(path), render(write_sidecar, meta))


def read_trace_file(path: Union[str, Path], config: Optional[RunConfig] = None) -> Trace:
    from joint_cache_lab.pipeline import geometry_of

    geometry = geometry_of(config or RunConfig())
    with open(path, encoding="utf-8", newline="") as f:
        return parse_trace(f, geometry, source_name=Path(path).stem)


def check_recorded_settings(
    source: str, meta: Mapping[str, str], config: RunConfig, keys: Sequence[str]
) -> None:
    """
    Raises:
        DataIntegrityError: `meta` lacks one of `keys` or records another value than `config`
    """
    for key in keys:
        recorded, current = meta.get(key), getattr(config, key)
        if recorded is None:
            raise DataIntegrityError(f"{source} records no {key}")
        if str(recorded) != str(current):
            raise DataIntegrityError(f"{source} was computed with {key} = {recorded}, but the config has {current}")


def read_labels_file(path: Union[str, Path], trace: Trace, config: RunConfig):
    """
    Load a labels CSV and check its sidecar against `trace` and the cache
    geometry of `config`.

    Raises:
        DataIntegrityError: Missing sidecar, digest mismatch or other cache geometry
    """
    from joint_cache_lab.oracle import read_labels

    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise DataIntegrityError(f"{path} has no {meta_path.name} sidecar with a trace digest")
    with open(meta_path, encoding="utf-8") as f:
        meta = read_sidecar(f)
    if meta.get("trace_digest") != trace.digest():
        raise DataIntegrityError(
            f"labels {path} were computed for trace digest {meta.get('trace_digest')}, "
            f"not {trace.digest()}"
        )
    check_recorded_settings(f"labels {path}", meta, config, LABEL_CACHE_KEYS)
    with open(path, encoding="utf-8", newline="") as f:
        return read_labels(f)


def effective_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    return config.with_overrides(parse_overrides(args.set))


# ==============================================================================
# Commands
# ==============================================================================


def cmd_gen(args: argparse.Namespace) -> int:
    kind = GeneratorKind(args.kind)
    params = GeneratorParams(
        length=args.length,
        working_set=args.working_set,
        stride=args.stride,
        phases=args.phases,
        phase_len=args.phase_len,
        mix_ratio=args.mix_ratio,
        store_fraction=args.store_fraction,
    )
    trace = gen_synthetic(kind, params, args.seed)
    meta: Dict[str, object] = {"kind": kind.value, "seed": args.seed, "trace_digest": trace.digest()}
    meta.update(params.as_dict())
    write_with_sidecar(args.output, render(write_trace, trace), meta)
    logger.info(f"Wrote {len(trace)} accesses to {args.output}")
    return EXIT_OK


def cmd_label(args: argparse.Namespace) -> int:
    from joint_cache_lab.oracle import InsertionLabel, belady_simulate, write_labels
    from joint_cache_lab.pipeline import cache_config_of

    config = effective_config(args)
    trace = read_trace_file(args.trace, config)
    result = belady_simulate(trace, cache_config_of(config))
    friendly = sum(1 for i in result.insertions if i.label is InsertionLabel.FRIENDLY)
    total = len(result.insertions)
    averse_fraction = (total - friendly) / total if total else 0.0
    print(f"hits: {result.hits}")
    print(f"insertions: {total}")
    print(f"friendly: {result.friendly_fraction():.4f}")
    print(f"averse: {averse_fraction:.4f}")
    if args.output:
        meta = {
            "trace_digest": trace.digest(),
            "num_sets": config.num_sets,
            "associativity": config.associativity,
            "block_size": config.block_size,
            "hits": result.hits,
        }
        write_with_sidecar(args.output, render(write_labels, result.insertions), meta)
        logger.info(f"Wrote {total} labels to {args.output}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    from joint_cache_lab.cachesim import (
        export_events_csv,
        policy_by_name,
        prefetcher_by_name,
        simulate,
        useful_prefetch_ratio,
    )
    from joint_cache_lab.pipeline import cache_config_of, oracle_policy, policy_from_checkpoint

    config = effective_config(args)
    trace = read_trace_file(args.trace, config)
    cache_config = cache_config_of(config)
    if args.policy == "oracle":
        from joint_cache_lab.oracle import belady_simulate

        policy = oracle_policy(belady_simulate(trace, cache_config).insertions)
    elif args.policy == "model":
        if not args.checkpoint:
            raise DataIntegrityError("--policy model needs --checkpoint")
        policy = policy_from_checkpoint(Path(args.checkpoint).read_bytes(), cache_config.geometry)
    else:
        policy = policy_by_name(args.policy)
    result = simulate(
        trace, cache_config, policy, prefetcher_by_name(config.prefetcher), config.prefetch_observe
    )
    print(f"hits: {result.demand_hits}")
    print(f"misses: {result.demand_misses}")
    print(f"hit_rate: {result.hit_rate():.4f}")
    print(f"prefetches: {result.prefetch_issued}")
    print(f"useful_prefetch_ratio: {useful_prefetch_ratio(result):.4f}")
    if args.events_out:
        atomic_write(args.events_out, render(export_events_csv, result.events))
        logger.info(f"Wrote {len(result.events)} events to {args.events_out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    from joint_cache_lab.pipeline import (
        deployment_hit_rates,
        evaluate_accuracy,
        prepare_dataset,
        train_model,
        write_reports,
    )

    config = effective_config(args)
    trace = read_trace_file(args.trace, config)
    labels = read_labels_file(args.labels, trace, config) if args.labels else None
    data = prepare_dataset(trace, config, labels)
    result = train_model(data, args.mode)

    deployment = None
    if config.evaluate_deployment:
        deployment = deployment_hit_rates(
            result.model, data.vocabs, data.trace, data.cache_config,
            config.prefetcher, config.prefetch_observe,
        )
    report = evaluate_accuracy(result.model, data, args.mode, result.seed, deployment=deployment)

    run_dir = Path(args.output) / args.mode / config.run_name(result.seed)
    atomic_write(run_dir / "effective.conf", config.to_text())
    for kind, blob in result.checkpoints(data).items():
        name = "checkpoint.bin" if kind == args.mode else f"checkpoint_{kind.split('_', 1)[1]}.bin"
        atomic_write(run_dir / name, blob)
    atomic_write(run_dir / "metrics.csv", render(result.write_metrics))
    atomic_write(run_dir / "report.csv", render(write_reports, [report]))
    if result.pretrain is not None:
        atomic_write(run_dir / "stage1_loss.csv", render(result.write_pretrain_curve))
    print(f"run: {run_dir}")
    print(f"best_epoch: {result.best_epoch}")
    print(f"accuracy: {report.accuracy:.4f}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    from joint_cache_lab.models import merge_baseline, model_from_checkpoint
    from joint_cache_lab.pipeline import (
        CHECKPOINT_CACHE_KEYS,
        evaluate_accuracy,
        prepare_dataset,
        write_reports,
    )

    config = effective_config(args)
    trace = read_trace_file(args.trace, config)
    loaded = [model_from_checkpoint(Path(p).read_bytes()) for p in args.checkpoint]
    for path, (_, _, meta) in zip(args.checkpoint, loaded):
        if meta.get("trace_digest") != trace.digest():
            raise DataIntegrityError(f"checkpoint {path} was trained on a different trace")
        check_recorded_settings(f"checkpoint {path}", meta, config, CHECKPOINT_CACHE_KEYS)
    model = merge_baseline([m for m, _, _ in loaded])
    vocabs, meta = loaded[0][1], loaded[0][2]
    seed = int(meta.get("seed", config.seed))
    config = config.with_overrides({"seed": seed, "history_length": model.dims.history_length})
    labels = read_labels_file(args.labels, trace, config) if args.labels else None
    data = prepare_dataset(trace, config, labels, vocabs=vocabs)
    if meta.get("label_digest") != data.label_digest:
        raise DataIntegrityError(
            f"checkpoint {args.checkpoint[0]} was trained on labels {meta.get('label_digest')}, "
            f"not {data.label_digest}"
        )
    mode = meta.get("mode", model.kind)
    report = evaluate_accuracy(model, data, mode, seed, split=args.split)
    text = render(write_reports, [report])
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    from joint_cache_lab.pipeline import AblationTable, read_reports

    reports = []
    for path in args.reports:
        with open(path, encoding="utf-8", newline="") as f:
            reports.extend(read_reports(f))
    table = AblationTable.from_reports(reports)
    markdown = table.to_markdown()
    sys.stdout.write(markdown)
    if args.output:
        atomic_write(f"{args.output}.md", markdown)
        atomic_write(f"{args.output}.csv", render(table.write_csv))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    from joint_cache_lab.pipeline import run_ablation, write_reports

    config = effective_config(args)
    traces = [read_trace_file(path, config) for path in args.traces]
    table = run_ablation(traces, config, workers=args.workers)
    out = Path(args.output)
    atomic_write(out / "effective.conf", config.to_text())
    atomic_write(out / "reports.csv", render(write_reports, table.reports))
    atomic_write(out / "ablation.csv", render(table.write_csv))
    atomic_write(out / "ablation.md", table.to_markdown())
    sys.stdout.write(table.to_markdown())
    return EXIT_OK


# ==============================================================================
# Parser
# ==============================================================================


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat key = value config file")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="Override one config key"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jcl",
        description="Trace-driven cache simulation and joint replacement/prefetch learning",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  jcl gen --kind coupled --phases 20 --phase-len 50 --seed 1 -o coupled.csv
  jcl label coupled.csv -o coupled.labels.csv
  jcl train coupled.csv --labels coupled.labels.csv --mode joint -o runs/
  jcl report runs/*/*/report.csv
""",
    )
    parser.add_argument("--version", action="version", version=f"jcl {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen", help="Generate a synthetic trace")
    gen.add_argument("--kind", required=True, choices=[k.value for k in GeneratorKind])
    gen.add_argument("--length", type=int, default=GeneratorParams.length)
    gen.add_argument("--working-set", type=int, default=GeneratorParams.working_set)
    gen.add_argument("--stride", type=int, default=GeneratorParams.stride)
    gen.add_argument("--phases", type=int, default=GeneratorParams.phases)
    gen.add_argument("--phase-len", type=int, default=GeneratorParams.phase_len)
    gen.add_argument("--mix-ratio", type=float, default=GeneratorParams.mix_ratio)
    gen.add_argument("--store-fraction", type=float, default=GeneratorParams.store_fraction)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", required=True, help="Trace CSV to write")
    gen.set_defaults(func=cmd_gen)

    label = commands.add_parser("label", help="Label insertions with Belady's MIN")
    label.add_argument("trace")
    label.add_argument("-o", "--output", help="Labels CSV to write")
    _add_config_flags(label)
    label.set_defaults(func=cmd_label)

    simulate = commands.add_parser("simulate", help="Run a trace through the cache")
    simulate.add_argument("trace")
    simulate.add_argument("--policy", default="lru", choices=["lru", "mru", "oracle", "model"])
    simulate.add_argument("--checkpoint", help="Model checkpoint for --policy model")
    simulate.add_argument("--events-out", help="Event log CSV to write")
    _add_config_flags(simulate)
    simulate.set_defaults(func=cmd_simulate)

    train = commands.add_parser("train", help="Train one regime and evaluate it")
    train.add_argument("trace")
    train.add_argument("--labels", help="Labels CSV from `jcl label` (computed when omitted)")
    train.add_argument("--mode", required=True, choices=["baseline", "joint", "contrastive"])
    train.add_argument("-o", "--output", default="runs", help="Output root directory")
    _add_config_flags(train)
    train.set_defaults(func=cmd_train)

    evaluate = commands.add_parser("eval", help="Evaluate checkpoints on a trace")
    evaluate.add_argument("trace")
    evaluate.add_argument("--checkpoint", required=True, nargs="+")
    evaluate.add_argument("--labels")
    evaluate.add_argument("--split", default="test", choices=["train", "val", "test"])
    evaluate.add_argument("-o", "--output", help="Report CSV to write (stdout when omitted)")
    _add_config_flags(evaluate)
    evaluate.set_defaults(func=cmd_eval)

    report = commands.add_parser("report", help="Tabulate evaluation reports")
    report.add_argument("reports", nargs="+")
    report.add_argument("-o", "--output", help="Path prefix for .md and .csv tables")
    report.set_defaults(func=cmd_report)

    ablate = commands.add_parser("ablate", help="Compare all regimes over traces and seeds")
    ablate.add_argument("traces", nargs="+")
    ablate.add_argument("--workers", type=int, default=None)
    ablate.add_argument("-o", "--output", default="ablation", help="Output directory")
    _add_config_flags(ablate)
    ablate.set_defaults(func=cmd_ablate)

    return parser


def configure_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except (JclError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
