"""Plot-ready CSV emission for run summaries, archives, and per-layer costs.

Floats are written with repr (shortest round-trip), so files are byte-stable
across identical runs.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .costmodel import compressed_cost, model_cost
from .engine import ParetoArchive, RunState, TraceRow, load_checkpoint
from .errors import ConfigError
from .genotype import decode

SUMMARY_HEADER = ["iteration", "best_fitness", "mean_fitness", "diversity", "p_mutate", "archive_size"]
ARCHIVE_HEADER = ["accuracy", "cost", "delta_c", "genotype"]


def _cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _genotype_cell(genotype) -> str:
    return ";".join(repr(float(v)) for v in genotype)


def write_summary_csv(path: str | Path, trace: list[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for row in trace:
            writer.writerow([
                row.iteration, _cell(row.best_fitness), _cell(row.mean_fitness),
                _cell(row.diversity), _cell(row.p_mutate), row.archive_size,
            ])


def write_archive_csv(path: str | Path, archive: ParetoArchive) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ARCHIVE_HEADER)
        for r in archive.sorted_records():
            writer.writerow([_cell(r.accuracy), r.cost, _cell(r.delta_c), _genotype_cell(r.genotype)])


def write_heatmap_csv(path: str | Path, state: RunState) -> None:
    """Gene x individual matrix of the final population (one row per gene)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        n = state.population.shape[0]
        writer.writerow(["gene"] + [f"ind_{i}" for i in range(n)])
        for gi, gene in enumerate(state.space.genes):
            label = f"{gene.layer_index}:{gene.role}"
            writer.writerow([label] + [_cell(float(v)) for v in state.population[:, gi]])


def write_per_layer_csv(path: str | Path, state: RunState) -> None:
    """Original vs compressed cost per layer for the best individual of the run."""
    if state.best_genotype is None:
        raise ConfigError("run has no best individual to report")
    spec = decode(state.space, state.best_genotype)
    compressed = compressed_cost(state.space.arch, spec, state.config.metric)
    original = model_cost(state.space.arch, state.config.metric)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer_index", "original_cost", "compressed_cost", "pruned_fraction"])
        for i, (orig, comp) in enumerate(zip(original.per_layer, compressed.per_layer)):
            writer.writerow([i, orig, comp, _cell(1.0 - comp / orig)])


def emit_reports(run_dir: str | Path, out_dir: str | Path | None = None) -> dict[str, str]:
    """Emit convergence/heatmap/per-layer/pareto CSVs from a finished run directory."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    state_path = run_dir / "state_final.json"
    if not state_path.exists():
        raise ConfigError(f"{run_dir} has no state_final.json; run `optimize` first")
    state = load_checkpoint(state_path)

    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "convergence": out_dir / "convergence.csv",
        "heatmap": out_dir / "heatmap.csv",
        "per_layer": out_dir / "per_layer_costs.csv",
        "pareto": out_dir / "pareto.csv",
    }
    write_summary_csv(paths["convergence"], state.trace)
    write_heatmap_csv(paths["heatmap"], state)
    write_per_layer_csv(paths["per_layer"], state)
    write_archive_csv(paths["pareto"], state.archive)
    return {k: str(v) for k, v in paths.items()}
