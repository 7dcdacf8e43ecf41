"""Parallel batch dispatch of accuracy evaluations to external worker processes.

Workers are spawned subprocesses speaking the line-delimited JSON protocol on
stdin/stdout. Jobs come off a shared queue (work stealing), so W equal
workers split a uniform batch roughly W ways. Requests are idempotent and
retried elsewhere on timeout, worker death, or malformed replies; a worker
that violates the protocol is quarantined. Results are re-sorted to input
order before they reach the engine, so completion order never leaks into
downstream randomness.
"""

from __future__ import annotations

import logging
import os
import queue
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Sequence

from .arch import ModelArch
from .errors import ConfigError, OracleError, ProtocolError
from .evaluator import AccuracyOracle
from .genotype import CompressedModelSpec
from .protocol import decode_response, encode_request

log = logging.getLogger(__name__)

WORKER_COUNT_ENV = "EVOCOMP_WORKERS"


@dataclass(frozen=True)
class WorkerSpec:
    command: tuple[str, ...]
    env: dict[str, str] | None = None


@dataclass(frozen=True)
class WorkerPoolConfig:
    workers: tuple[WorkerSpec, ...]
    in_flight: int = 1
    timeout_s: float = 300.0
    retries: int = 2

    def __post_init__(self):
        if not self.workers:
            raise ConfigError("worker pool needs at least one worker")
        if self.in_flight < 1:
            raise ConfigError(f"in_flight must be >= 1, got {self.in_flight}")
        if self.timeout_s <= 0:
            raise ConfigError(f"timeout_s must be positive, got {self.timeout_s}")
        if self.retries < 0:
            raise ConfigError(f"retries must be >= 0, got {self.retries}")


def apply_worker_count_override(cfg: WorkerPoolConfig, count: int | None = None) -> WorkerPoolConfig:
    """Resize the worker list (cycling the configured commands) per flag or env var."""
    if count is None:
        raw = os.environ.get(WORKER_COUNT_ENV)
        if raw is None:
            return cfg
        try:
            count = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{WORKER_COUNT_ENV}={raw!r} is not an integer") from exc
    if count < 1:
        raise ConfigError(f"worker count override must be >= 1, got {count}")
    workers = tuple(cfg.workers[i % len(cfg.workers)] for i in range(count))
    return WorkerPoolConfig(workers=workers, in_flight=cfg.in_flight,
                            timeout_s=cfg.timeout_s, retries=cfg.retries)


class _Worker:
    def __init__(self, index: int, spec: WorkerSpec):
        self.index = index
        self.spec = spec
        self.proc: subprocess.Popen | None = None
        self.replies: queue.Queue = queue.Queue()
        self.dead = False
        self._reader: threading.Thread | None = None

    def start(self) -> None:
        env = None
        if self.spec.env:
            env = dict(os.environ)
            env.update(self.spec.env)
        try:
            self.proc = subprocess.Popen(
                list(self.spec.command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                text=True,
                env=env,
            )
        except OSError as exc:
            raise OracleError(f"cannot spawn worker {self.index} ({self.spec.command}): {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def _read_loop(self) -> None:
        assert self.proc is not None and self.proc.stdout is not None
        for line in self.proc.stdout:
            self.replies.put(line)
        self.replies.put(None)  # EOF sentinel

    def send(self, line: str) -> bool:
        if self.proc is None or self.proc.stdin is None:
            return False
        try:
            self.proc.stdin.write(line)
            self.proc.stdin.flush()
            return True
        except (BrokenPipeError, OSError, ValueError):
            return False

    def kill(self) -> None:
        self.dead = True
        if self.proc is not None and self.proc.poll() is None:
            self.proc.kill()

    def close(self) -> None:
        self.dead = True
        if self.proc is None:
            return
        try:
            if self.proc.stdin is not None:
                self.proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


@dataclass
class _Batch:
    arch_name: str
    specs: Sequence[CompressedModelSpec]
    results: list[float | None] = field(init=False)
    attempts: list[int] = field(init=False)
    jobs: queue.Queue = field(init=False)
    lock: threading.Lock = field(init=False)
    outstanding: int = field(init=False)
    failure: str | None = None

    def __post_init__(self):
        self.results = [None] * len(self.specs)
        self.attempts = [0] * len(self.specs)
        self.jobs = queue.Queue()
        self.lock = threading.Lock()
        self.outstanding = len(self.specs)
        for i in range(len(self.specs)):
            self.jobs.put(i)

    def complete(self, job: int, accuracy: float) -> None:
        with self.lock:
            if self.results[job] is None:
                self.results[job] = accuracy
                self.outstanding -= 1

    def requeue(self, job: int, max_attempts: int, reason: str) -> None:
        with self.lock:
            if self.results[job] is not None:
                return
            self.attempts[job] += 1
            if self.attempts[job] > max_attempts:
                self.failure = f"request {job} exhausted retries: {reason}"
                self.outstanding = -1  # poison: abort the batch
                return
        log.warning("retrying request %d (%s)", job, reason)
        self.jobs.put(job)

    @property
    def done(self) -> bool:
        with self.lock:
            return self.outstanding <= 0


class WorkerPool(AccuracyOracle):
    """Synchronous-batch oracle backed by concurrent worker subprocesses."""

    def __init__(self, config: WorkerPoolConfig, arch: ModelArch):
        self.config = config
        self.arch = arch
        self._workers: list[_Worker] = []
        self._started = False

    def start(self) -> None:
        if self._started:
            return
        for i, spec in enumerate(self.config.workers):
            worker = _Worker(i, spec)
            worker.start()
            self._workers.append(worker)
        self._started = True

    def close(self) -> None:
        for w in self._workers:
            w.close()
        self._workers = []
        self._started = False

    def __enter__(self) -> "WorkerPool":
        self.start()
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def evaluate_batch(self, specs: Sequence[CompressedModelSpec]) -> list[float]:
        return self.dispatch(specs)

    def dispatch(self, specs: Sequence[CompressedModelSpec]) -> list[float]:
        """Evaluate all specs, re-ordered to input order; raises OracleError on failure."""
        if not specs:
            return []
        self.start()
        batch = _Batch(arch_name=self.arch.name, specs=specs)
        threads = []
        for worker in self._workers:
            if worker.dead:
                continue
            t = threading.Thread(target=self._serve, args=(worker, batch), daemon=True)
            t.start()
            threads.append(t)
        if not threads:
            raise OracleError("all workers are dead")
        for t in threads:
            t.join()
        if batch.failure is not None:
            raise OracleError(self._partial_report(batch, batch.failure))
        if not batch.done:
            raise OracleError(self._partial_report(batch, "all workers died"))
        return [float(r) for r in batch.results]  # type: ignore[arg-type]

    @staticmethod
    def _partial_report(batch: _Batch, reason: str) -> str:
        completed = sum(1 for r in batch.results if r is not None)
        missing = [i for i, r in enumerate(batch.results) if r is None][:16]
        return (f"batch failed ({reason}): {completed}/{len(batch.results)} evaluations "
                f"completed; missing ids {missing}")

    def _serve(self, worker: _Worker, batch: _Batch) -> None:
        pending: dict[int, float] = {}
        while not batch.done:
            # Top up this worker's pipeline from the shared queue. An idle
            # worker polls with a short timeout: jobs held by another worker
            # may yet be requeued here on failure.
            while len(pending) < self.config.in_flight:
                try:
                    job = batch.jobs.get(timeout=0.05) if not pending else batch.jobs.get_nowait()
                except queue.Empty:
                    break
                line = encode_request(job, batch.arch_name, batch.specs[job])
                if not worker.send(line):
                    self._quarantine(worker, batch, pending, "stdin closed")
                    batch.requeue(job, self.config.retries, "worker unwritable")
                    return
                pending[job] = 0.0
            if not pending:
                continue
            try:
                line = worker.replies.get(timeout=self.config.timeout_s)
            except queue.Empty:
                self._quarantine(worker, batch, pending, f"timeout after {self.config.timeout_s}s")
                return
            if line is None:
                self._quarantine(worker, batch, pending, "worker exited")
                return
            try:
                rid, accuracy, error = decode_response(line)
            except ProtocolError as exc:
                self._quarantine(worker, batch, pending, f"malformed reply: {exc}")
                return
            if rid is None or rid not in pending:
                self._quarantine(worker, batch, pending, f"reply for unexpected id {rid!r}")
                return
            del pending[rid]
            if error is not None:
                batch.requeue(rid, self.config.retries, f"worker error: {error}")
            else:
                batch.complete(rid, accuracy)

    def _quarantine(self, worker: _Worker, batch: _Batch, pending: dict, reason: str) -> None:
        log.warning("quarantining worker %d: %s", worker.index, reason)
        worker.kill()
        for job in pending:
            batch.requeue(job, self.config.retries, f"worker {worker.index} quarantined: {reason}")
        pending.clear()
