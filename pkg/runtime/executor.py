"""
Executor — cuts the physical plan into fragments at its exchanges and
runs one task per partition of every fragment at the same time.  Tasks
are connected by bounded exchange queues, so a producer blocks once its
consumer falls ``queue_frames`` frames behind.
"""

from __future__ import annotations

import logging
import multiprocessing
import time
from concurrent.futures import FIRST_EXCEPTION, Executor, ProcessPoolExecutor, ThreadPoolExecutor, wait
from dataclasses import dataclass, field

from compiler.physical import PhysKind, PhysicalOperator, PhysicalPlan
from errors import EXIT_RUNTIME, ExecutionError, XQFlowError
from runtime.exchange import ExchangeCancelled, ExchangeSender, ExchangeWiring, Inlet, Outlet, QueueFactory
from runtime.frames import Row, RuntimeStats
from runtime.functions import EvalContext, evaluate
from runtime.operators import CollectSink, TaskContext, build_pipeline
from settings import RunConfig
from xdm import XDMSequence
from xml_ingest import Catalog

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class _TaskSpec:
    fragment: PhysicalOperator
    partition: int
    catalog: Catalog
    frame_size: int
    memory_budget: int
    scratch_dir: str
    inlets: dict[int, Inlet] = field(default_factory=dict)
    outlet: Outlet | None = None


def run_fragment(task: _TaskSpec) -> tuple[list[Row], RuntimeStats]:
    """One partition of one fragment; module level so process workers can unpickle it."""
    ctx = TaskContext(
        EvalContext(task.catalog),
        task.partition,
        task.frame_size,
        task.memory_budget,
        task.scratch_dir,
        inlets=task.inlets,
    )
    ctx.stats.partitions_run = 1
    if task.outlet is None:
        sink = CollectSink()
    else:
        sink = ExchangeSender(task.outlet, task.partition, task.frame_size, ctx.eval, ctx.stats)
    for drive in build_pipeline(task.fragment, sink, ctx):
        drive()
    return (sink.rows if task.outlet is None else []), ctx.stats


def _exchange_leaves(op: PhysicalOperator) -> list[PhysicalOperator]:
    if op.kind is PhysKind.EXCHANGE:
        return [op]
    out = []
    for i in op.inputs:
        out.extend(_exchange_leaves(i))
    return out


def _leaves(root: PhysicalOperator) -> list[PhysicalOperator]:
    """Exchanges a fragment rooted at ``root`` reads from."""
    if root.kind is PhysKind.EXCHANGE:
        return [root]
    return [leaf for i in root.inputs for leaf in _exchange_leaves(i)]


def _fragments(root: PhysicalOperator, above: PhysicalOperator | None = None):
    """(fragment root, exchange it feeds or None), producers before their consumers."""
    for ex in _leaves(root):
        yield from _fragments(ex.input, ex)
    yield root, above


def plan_tasks(plan: PhysicalPlan, catalog: Catalog, config: RunConfig, wiring: ExchangeWiring) -> list[_TaskSpec]:
    """Every task of the run, producers first; connects the exchange queues as it goes."""
    tasks = []
    for root, above in _fragments(plan.root):
        if above is not None:
            wiring.connect(above)
        for p in range(root.degree):
            tasks.append(_TaskSpec(
                root, p, catalog, config.frame_size, config.memory_budget, config.scratch_dir,
                inlets={ex.op_id: wiring.inlet(ex, p) for ex in _leaves(root)},
                outlet=wiring.outlet(above) if above is not None else None,
            ))
    return tasks


def _wrap(exc: BaseException, task: _TaskSpec) -> ExecutionError:
    """ExecutionError for a failed task, with the original error as ``__cause__``."""
    if isinstance(exc, ExecutionError):
        return exc
    if isinstance(exc, XQFlowError):
        error = ExecutionError(str(exc), task.partition, exc.exit_code)
    else:
        error = ExecutionError(f"{type(exc).__name__}: {exc}", task.partition, EXIT_RUNTIME)
    error.__cause__ = exc
    return error


class _Run:
    def __init__(self, tasks: list[_TaskSpec], factory: QueueFactory,
                 pool: Executor | None, stats: RuntimeStats) -> None:
        self.tasks = tasks
        self.factory = factory
        self.pool = pool
        self.stats = stats

    def inline(self) -> list[Row]:
        rows: list[Row] = []
        for task in self.tasks:
            try:
                out, stats = run_fragment(task)
            except (XQFlowError, OSError, RecursionError, MemoryError) as exc:
                raise _wrap(exc, task)
            self.stats.merge(stats)
            if task.outlet is None:
                rows = out
        return rows

    def concurrent(self) -> list[Row]:
        futures = {self.pool.submit(run_fragment, task): task for task in self.tasks}
        done, _ = wait(futures, return_when=FIRST_EXCEPTION)
        if any(f.exception() is not None for f in done):
            self.factory.abort.set()
            wait(futures)
        failures = [
            (task, f.exception()) for f, task in futures.items()
            if f.exception() is not None and not isinstance(f.exception(), ExchangeCancelled)
        ]
        if failures:
            task, exc = failures[0]
            raise _wrap(exc, task)
        rows: list[Row] = []
        for future, task in futures.items():
            out, stats = future.result()
            self.stats.merge(stats)
            if task.outlet is None:
                rows = out
        return rows


def _pool(config: RunConfig, partitions: int, tasks: int) -> tuple[Executor | None, QueueFactory, object]:
    """Pool sized so every task runs at once; bounded queues would deadlock otherwise."""
    if config.workers == "inline" or partitions == 1 or tasks == 1:
        return None, QueueFactory(0), None
    if config.workers == "thread":
        return ThreadPoolExecutor(max_workers=tasks), QueueFactory(config.queue_frames), None
    manager = multiprocessing.Manager()
    return ProcessPoolExecutor(max_workers=tasks), QueueFactory(config.queue_frames, manager), manager


def execute(
    plan: PhysicalPlan,
    catalog: Catalog,
    config: RunConfig,
    stats: RuntimeStats | None = None,
) -> XDMSequence:
    """
    Run ``plan`` and return the result sequence.  Worker failures come
    back as ExecutionError carrying the partition and the original error
    as ``__cause__``.
    """
    stats = stats if stats is not None else RuntimeStats()
    root = plan.root
    if root.kind is not PhysKind.RESULT_SINK:
        raise ExecutionError("physical plan has no result sink")
    started = time.perf_counter()
    task_count = sum(r.degree for r, _ in _fragments(root))
    pool, factory, manager = _pool(config, plan.partitions, task_count)
    try:
        tasks = plan_tasks(plan, catalog, config, ExchangeWiring(factory))
        run = _Run(tasks, factory, pool, stats)
        rows = run.inline() if pool is None else run.concurrent()
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
        if manager is not None:
            manager.shutdown()
    var = root.expressions[0]
    result = tuple(item for row in rows for item in evaluate(var, row, EvalContext(catalog)))
    log.info("executed %d task(s) on %d partition(s) in %.1f ms: %d item(s), %d tuples, %d spill file(s)",
             len(tasks), plan.partitions, (time.perf_counter() - started) * 1000, len(result),
             stats.tuples_out, stats.spill_files)
    return result
