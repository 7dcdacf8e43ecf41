"""Search-loop orchestration: directed init, evaluate/select/pair/crossover,
diversity-guarded adaptive mutation, Pareto archiving, and bit-exact
checkpoint/resume.

All stochastic draws happen on one seeded generator in a fixed order, and
oracle results are consumed in individual-index order, so runs are
reproducible regardless of worker count or completion order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import genetic
from .arch import ModelArch, arch_from_dict, arch_to_dict
from .costmodel import METRICS, PARAMS, compressed_cost
from .errors import ConfigError, OracleError
from .evaluator import AccuracyOracle
from .genotype import (
    PRUNE_NONSTRUCTURED,
    SearchSpace,
    build_search_space,
    decode,
    identity_spec,
)
from .genetic import GAConfig
from .scoring import Evaluation, fitness, pen_acc

CHECKPOINT_VERSION = 1

INIT_DIRECTED = "directed"
INIT_NAIVE = "naive"


@dataclass(frozen=True)
class RunConfig:
    arch: ModelArch
    methods: tuple[str, ...]
    metric: str
    acc_thr: float
    ga: GAConfig
    init: str = INIT_DIRECTED
    bounds_resolution: int | float = bounds_mod.DEFAULT_RESOLUTION
    bounds_path: str | None = None  # load instead of compute when set
    checkpoint_every: int = 10
    out_dir: str | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown cost metric {self.metric!r}")
        if self.init not in (INIT_DIRECTED, INIT_NAIVE):
            raise ConfigError(f"init must be 'directed' or 'naive', got {self.init!r}")
        if PRUNE_NONSTRUCTURED in self.methods and self.metric != PARAMS:
            raise ConfigError("non-structured pruning requires the 'params' metric; "
                              "dense FLOPs are blind to zeroed weights")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")


@dataclass(frozen=True)
class ArchiveRecord:
    genotype: tuple[float, ...]
    accuracy: float
    cost: int
    delta_c: float


def _dominates(a: ArchiveRecord, b: ArchiveRecord) -> bool:
    return (a.accuracy >= b.accuracy and a.cost <= b.cost
            and (a.accuracy > b.accuracy or a.cost < b.cost))


class ParetoArchive:
    """Running set of mutually non-dominated (accuracy, cost) records."""

    def __init__(self, records=()):
        self.records: list[ArchiveRecord] = list(records)

    def offer(self, record: ArchiveRecord) -> bool:
        """Insert iff not dominated; evict newly dominated members. Duplicates are no-ops."""
        for r in self.records:
            if _dominates(r, record) or r == record:
                return False
        self.records = [r for r in self.records if not _dominates(record, r)]
        self.records.append(record)
        return True

    def __len__(self) -> int:
        return len(self.records)

    def sorted_records(self) -> list[ArchiveRecord]:
        return sorted(self.records, key=lambda r: (r.cost, -r.accuracy, r.genotype))


def pareto_offer(archive: ParetoArchive, record: ArchiveRecord) -> bool:
    return archive.offer(record)


@dataclass
class TraceRow:
    iteration: int
    best_fitness: float
    mean_fitness: float
    diversity: float
    p_mutate: float
    archive_size: int


@dataclass
class RunState:
    config: RunConfig
    space: SearchSpace
    next_iteration: int
    population: np.ndarray
    rng: np.random.Generator
    div_thr: float
    archive: ParetoArchive
    trace: list[TraceRow]
    best: Evaluation | None
    best_genotype: np.ndarray | None
    theta: np.ndarray | None
    identity_accuracy: float
    evaluations: list[Evaluation] = field(default_factory=list)


def evaluate_population(
    space: SearchSpace,
    metric: str,
    oracle: AccuracyOracle,
    members: np.ndarray,
    identity_accuracy: float,
    acc_thr: float,
) -> list[Evaluation]:
    """Decode, cost, and score a whole population through one oracle batch."""
    specs = [decode(space, x) for x in members]
    reports = [compressed_cost(space.arch, s, metric) for s in specs]
    accuracies = oracle.evaluate_batch(specs)
    evaluations = []
    for i, (report, acc) in enumerate(zip(reports, accuracies)):
        penalty = pen_acc(identity_accuracy, acc, acc_thr)
        evaluations.append(Evaluation(
            individual_id=i,
            accuracy=acc,
            cost_total=report.total,
            delta_c=report.delta_c,
            penalty=penalty,
            fitness=fitness(report.delta_c, penalty),
        ))
    return evaluations


def _offer_all(state: RunState, evaluations: list[Evaluation]) -> None:
    for x, ev in zip(state.population, evaluations):
        state.archive.offer(ArchiveRecord(
            genotype=tuple(float(v) for v in x),
            accuracy=ev.accuracy,
            cost=ev.cost_total,
            delta_c=ev.delta_c,
        ))
        if state.best is None or ev.fitness > state.best.fitness:
            state.best = ev
            state.best_genotype = np.array(x, copy=True)


def _initial_state(config: RunConfig, oracle: AccuracyOracle) -> RunState:
    space = build_search_space(config.arch, config.methods)
    identity_accuracy = oracle.evaluate_batch([identity_spec(config.arch)])[0]
    if config.acc_thr > identity_accuracy:
        raise ConfigError(
            f"accuracy threshold {config.acc_thr} exceeds the model's measured accuracy {identity_accuracy}"
        )

    rng = np.random.default_rng(config.ga.rng_seed)
    theta = None
    if config.init == INIT_DIRECTED:
        if config.bounds_path is not None:
            theta = bounds_mod.load_bounds(config.bounds_path, space).theta
        else:
            bv, _counts = bounds_mod.characterize_bounds(space, oracle, config.acc_thr,
                                                         config.bounds_resolution)
            theta = bv.theta
        population = bounds_mod.sample_initial(space, bounds_mod.BoundsVector(theta),
                                               config.ga.population_size, rng)
    else:
        population = bounds_mod.sample_naive(space, config.ga.population_size, rng)

    return RunState(
        config=config,
        space=space,
        next_iteration=0,
        population=population,
        rng=rng,
        div_thr=genetic.diversity(population) / 2.0,
        archive=ParetoArchive(),
        trace=[],
        best=None,
        best_genotype=None,
        theta=theta,
        identity_accuracy=identity_accuracy,
    )


def _run_loop(state: RunState, oracle: AccuracyOracle) -> RunState:
    cfg = state.config
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    try:
        for t in range(state.next_iteration, cfg.ga.iterations):
            evaluations = evaluate_population(
                state.space, cfg.metric, oracle, state.population,
                state.identity_accuracy, cfg.acc_thr)
            _offer_all(state, evaluations)
            fitnesses = np.array([ev.fitness for ev in evaluations])

            picked = genetic.select(fitnesses, state.rng)
            selected = state.population[picked]
            selected_fit = fitnesses[picked]

            pairs = genetic.pair_parents(selected, selected_fit, state.space)
            children = []
            for i, j in pairs:
                c1, c2 = genetic.crossover(selected[i], selected[j], cfg.ga, state.rng)
                children.extend((c1, c2))
            crossed = np.array(children)

            div_crossed = genetic.diversity(crossed)
            p_mutate = 0.0
            if div_crossed <= state.div_thr:
                p_mutate = genetic.adapt_mutation_rate(div_crossed, state.div_thr,
                                                       state.space, cfg.ga)
                crossed = np.array([
                    genetic.mutate(x, state.space, p_mutate, cfg.ga, state.rng)
                    for x in crossed
                ])

            state.trace.append(TraceRow(
                iteration=t,
                best_fitness=float(fitnesses.max()),
                mean_fitness=float(fitnesses.mean()),
                diversity=genetic.diversity(state.population),
                p_mutate=p_mutate,
                archive_size=len(state.archive),
            ))
            state.population = crossed
            state.next_iteration = t + 1
            if out_dir and cfg.checkpoint_every and (t + 1) % cfg.checkpoint_every == 0:
                save_checkpoint(out_dir / f"checkpoint_{t + 1:06d}.json", state)
    except OracleError:
        if out_dir:
            save_checkpoint(out_dir / f"checkpoint_abort_{state.next_iteration:06d}.json", state)
        raise

    state.evaluations = evaluate_population(
        state.space, cfg.metric, oracle, state.population,
        state.identity_accuracy, cfg.acc_thr)
    _offer_all(state, state.evaluations)

    if out_dir:
        from .report import write_archive_csv, write_summary_csv

        out_dir.mkdir(parents=True, exist_ok=True)
        write_summary_csv(out_dir / "summary.csv", state.trace)
        write_archive_csv(out_dir / "archive.csv", state.archive)
        save_checkpoint(out_dir / "state_final.json", state, final=True)
        if state.theta is not None:
            bounds_mod.save_bounds(out_dir / "bounds.json", state.space,
                                   bounds_mod.BoundsVector(state.theta))
    return state


def run(config: RunConfig, oracle: AccuracyOracle) -> RunState:
    """Execute a full search; writes summary/archive/checkpoints when out_dir is set."""
    if config.out_dir:
        Path(config.out_dir).mkdir(parents=True, exist_ok=True)
    state = _initial_state(config, oracle)
    return _run_loop(state, oracle)


def resume(checkpoint_path: str | Path, oracle: AccuracyOracle,
           out_dir: str | None = None) -> RunState:
    """Continue a checkpointed run; final outputs are bit-identical to an
    uninterrupted run with the same config."""
    state = load_checkpoint(checkpoint_path)
    if out_dir is not None:
        state = replace_out_dir(state, out_dir)
    if state.config.out_dir:
        Path(state.config.out_dir).mkdir(parents=True, exist_ok=True)
    return _run_loop(state, oracle)


def replace_out_dir(state: RunState, out_dir: str) -> RunState:
    state.config = replace(state.config, out_dir=out_dir)
    return state


# -- checkpoint serialization -------------------------------------------------

def _config_to_dict(config: RunConfig) -> dict:
    return {
        "arch": arch_to_dict(config.arch),
        "methods": list(config.methods),
        "metric": config.metric,
        "acc_thr": config.acc_thr,
        "init": config.init,
        "bounds_resolution": config.bounds_resolution,
        "bounds_path": config.bounds_path,
        "checkpoint_every": config.checkpoint_every,
        "out_dir": config.out_dir,
        "ga": {
            "population_size": config.ga.population_size,
            "iterations": config.ga.iterations,
            "p_cross": config.ga.p_cross,
            "p_swap": config.ga.p_swap,
            "p_tweak": config.ga.p_tweak,
            "sigma_eta_sq": config.ga.sigma_eta_sq,
            "rng_seed": config.ga.rng_seed,
        },
    }


def _config_from_dict(doc: dict) -> RunConfig:
    return RunConfig(
        arch=arch_from_dict(doc["arch"], name=doc["arch"].get("name", "model")),
        methods=tuple(doc["methods"]),
        metric=doc["metric"],
        acc_thr=doc["acc_thr"],
        ga=GAConfig(**doc["ga"]),
        init=doc["init"],
        bounds_resolution=doc["bounds_resolution"],
        bounds_path=doc.get("bounds_path"),
        checkpoint_every=doc["checkpoint_every"],
        out_dir=doc.get("out_dir"),
    )


def _evaluation_to_list(ev: Evaluation) -> list:
    return [ev.individual_id, ev.accuracy, ev.cost_total, ev.delta_c, ev.penalty, ev.fitness]


def save_checkpoint(path: str | Path, state: RunState, final: bool = False) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "kind": "final" if final else "checkpoint",
        "config": _config_to_dict(state.config),
        "next_iteration": state.next_iteration,
        "div_thr": state.div_thr,
        "rng_state": state.rng.bit_generator.state,
        "population": [[float(v) for v in row] for row in state.population],
        "identity_accuracy": state.identity_accuracy,
        "theta": None if state.theta is None else [float(v) for v in state.theta],
        "archive": [
            [list(r.genotype), r.accuracy, r.cost, r.delta_c] for r in state.archive.records
        ],
        "trace": [
            [row.iteration, row.best_fitness, row.mean_fitness, row.diversity,
             row.p_mutate, row.archive_size]
            for row in state.trace
        ],
        "best": None if state.best is None else {
            "evaluation": _evaluation_to_list(state.best),
            "genotype": [float(v) for v in state.best_genotype],
        },
        "evaluations": [_evaluation_to_list(ev) for ev in state.evaluations] if final else [],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc) + "\n")


def load_checkpoint(path: str | Path) -> RunState:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")

    config = _config_from_dict(doc["config"])
    space = build_search_space(config.arch, config.methods)
    rng = np.random.default_rng()
    rng.bit_generator.state = doc["rng_state"]
    archive = ParetoArchive(
        ArchiveRecord(genotype=tuple(g), accuracy=a, cost=c, delta_c=d)
        for g, a, c, d in doc["archive"]
    )
    trace = [TraceRow(*row) for row in doc["trace"]]
    best = None
    best_genotype = None
    if doc["best"] is not None:
        best = Evaluation(*doc["best"]["evaluation"])
        best_genotype = np.array(doc["best"]["genotype"])
    return RunState(
        config=config,
        space=space,
        next_iteration=doc["next_iteration"],
        population=np.array(doc["population"]),
        rng=rng,
        div_thr=doc["div_thr"],
        archive=archive,
        trace=trace,
        best=best,
        best_genotype=best_genotype,
        theta=None if doc["theta"] is None else np.array(doc["theta"]),
        identity_accuracy=doc["identity_accuracy"],
        evaluations=[Evaluation(*row) for row in doc["evaluations"]],
    )
