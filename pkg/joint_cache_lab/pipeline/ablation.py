"""
Mode comparison across traces and seeds.

Each (trace, seed) cell prepares its own dataset and trains every mode on
it, so cells share no state and may run in separate processes. The table
reports the median test accuracy over seeds.
"""

import csv
import logging
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from joint_cache_lab.config import RunConfig
from joint_cache_lab.errors import ConfigError, DataIntegrityError
from joint_cache_lab.pipeline.data import prepare_dataset
from joint_cache_lab.pipeline.deployment import deployment_hit_rates
from joint_cache_lab.pipeline.evaluation import EvalReport, evaluate_accuracy
from joint_cache_lab.pipeline.training import MODES, train_model
from joint_cache_lab.trace import Trace

logger = logging.getLogger(__name__)


def run_cell(trace: Trace, config: RunConfig, seed: int, modes: Sequence[str] = MODES) -> List[EvalReport]:
    """Prepare one (trace, seed) dataset and train/evaluate every mode on it."""
    config = config.with_overrides({"seed": seed})
    data = prepare_dataset(trace, config)
    reports = []
    for mode in modes:
        result = train_model(data, mode, seed)
        deployment = None
        if config.evaluate_deployment:
            deployment = deployment_hit_rates(
                result.model, data.vocabs, data.trace, data.cache_config,
                config.prefetcher, config.prefetch_observe,
            )
        reports.append(evaluate_accuracy(result.model, data, mode, seed, deployment=deployment))
    return reports


def _run_cell_args(args: Tuple[Trace, RunConfig, int, Tuple[str, ...]]) -> List[EvalReport]:
    return run_cell(*args)


@dataclass
class AblationTable:
    """Median accuracy per (mode, trace); method rows by trace columns."""

    modes: List[str]
    traces: List[str]
    values: Dict[Tuple[str, str], float]
    reports: List[EvalReport] = field(default_factory=list)

    @classmethod
    def from_reports(cls, reports: Sequence[EvalReport]) -> "AblationTable":
        """
        Raises:
            DataIntegrityError: No reports, or modes covering different trace sets
        """
        if not reports:
            raise DataIntegrityError("no reports to tabulate")
        grouped: "OrderedDict[Tuple[str, str], List[float]]" = OrderedDict()
        coverage: "OrderedDict[str, set]" = OrderedDict()
        traces: List[str] = []
        for r in reports:
            grouped.setdefault((r.mode, r.trace_name), []).append(r.accuracy)
            coverage.setdefault(r.mode, set()).add(r.trace_name)
            if r.trace_name not in traces:
                traces.append(r.trace_name)
        expected = set(traces)
        mismatches = [
            f"{mode} lacks {', '.join(sorted(expected - seen))}"
            for mode, seen in coverage.items() if seen != expected
        ]
        if mismatches:
            raise DataIntegrityError("inconsistent trace sets across reports: " + "; ".join(mismatches))
        values = {key: float(np.median(accs)) for key, accs in grouped.items()}
        return cls(list(coverage), traces, values, list(reports))

    def best(self, trace: str) -> float:
        return max(self.values[(mode, trace)] for mode in self.modes)

    def to_markdown(self) -> str:
        """Accuracy in percent; every cell equal to its column's best is bold."""
        lines = [
            "| Method | " + " | ".join(self.traces) + " |",
            "|---|" + "---|" * len(self.traces),
        ]
        for mode in self.modes:
            cells = []
            for trace in self.traces:
                value = self.values[(mode, trace)]
                text = f"{100.0 * value:.2f}%"
                cells.append(f"**{text}**" if value == self.best(trace) else text)
            lines.append(f"| {mode} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["mode"] + self.traces)
        for mode in self.modes:
            writer.writerow([mode] + [f"{self.values[(mode, t)]:.6f}" for t in self.traces])


def run_ablation(
    traces: Sequence[Trace],
    config: RunConfig,
    seeds: Optional[Sequence[int]] = None,
    modes: Sequence[str] = MODES,
    workers: Optional[int] = None,
) -> AblationTable:
    """
    Train and evaluate every mode on every trace for every seed.

    Args:
        traces: At least one trace
        config: Shared configuration; `seed` is replaced per cell
        seeds: Defaults to config.seeds
        modes: Regimes to compare
        workers: Process count; defaults to config.workers, 1 runs inline
    """
    seeds = list(config.seeds if seeds is None else seeds)
    if not traces or not seeds:
        raise ConfigError("ablation needs at least one trace and one seed")
    workers = config.workers if workers is None else workers
    cells = [(trace, config, seed, tuple(modes)) for trace in traces for seed in seeds]
    logger.info(f"Ablation over {len(traces)} traces x {len(seeds)} seeds x {len(modes)} modes")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, cells))
    else:
        results = [_run_cell_args(cell) for cell in cells]

    reports = [report for cell_reports in results for report in cell_reports]
    return AblationTable.from_reports(reports)
