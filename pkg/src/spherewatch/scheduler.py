"""Phased task supervision: launch -> setup -> (run_once + scheduled), the
skip/limit parallel batcher, per-run log files, and the injected clock.

Clock contract
--------------
Tasks never read wall time directly; they use the plan's clock. SystemClock
is wall time. VirtualClock makes end-to-end runs finish in seconds: time
only moves when advance_to() is called (by the launcher loop, or by tests),
and an advance completes only when every worker thread is either finished or
blocked in a clock sleep ("quiescence"). That makes overlap decisions and
tick ordering deterministic: when the launcher looks at a task, the world is
settled.

Worker accounting: the supervisor counts a worker busy from the moment it is
spawned until it finishes, minus any stretches it spends inside clock
sleeps. parallel_run registers its batch threads the same way, and the
waiting caller is parked "passively" so a mini-batch blocked on a rate-limit
window cannot deadlock the clock.
"""

from __future__ import annotations

import threading
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from functools import reduce as _functools_reduce
from pathlib import Path
from typing import Any, Callable, Iterable, Optional

from .domain import TaskPhase, TaskSpec, iso


class ClockClosed(Exception):
    """The clock was shut down while a sleeper waited (normal shutdown)."""


class ClockBackwards(ValueError):
    """advance_to() target precedes current virtual time."""


class TaskKilled(Exception):
    """Cooperative cancellation requested for the running task."""


class SetupFailed(RuntimeError):
    """A setup task failed; run_once and scheduled phases never started."""


class Overlapping(RuntimeError):
    """A start request hit the no-overlap rule."""


class BatchFailed(RuntimeError):
    """First failing batch of a parallel_run, reported with its skip."""

    def __init__(self, skip: int, cause: BaseException):
        self.skip = skip
        self.cause = cause
        super().__init__(f"batch at skip={skip} failed: {cause!r}")


class SystemClock:
    """Wall-clock implementation of the clock contract."""

    is_virtual = False

    def __init__(self):
        self._cond = threading.Condition()
        self._closed = False

    def now(self) -> datetime:
        return datetime.now(timezone.utc)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def interrupt(self) -> None:
        with self._cond:
            self._cond.notify_all()

    def sleep(self, seconds: float,
              wake_event: Optional[threading.Event] = None) -> None:
        self.sleep_until(self.now() + timedelta(seconds=seconds), wake_event)

    def sleep_until(self, deadline: datetime,
                    wake_event: Optional[threading.Event] = None) -> None:
        with self._cond:
            while not self._closed:
                if wake_event is not None and wake_event.is_set():
                    return
                remaining = (deadline - self.now()).total_seconds()
                if remaining <= 0:
                    return
                self._cond.wait(timeout=min(remaining, 0.2))
            raise ClockClosed()

    # Worker accounting is a virtual-time concern; wall time ignores it.
    def register_spawned(self) -> None:
        pass

    def mark_worker_thread(self) -> None:
        pass

    def worker_finished(self) -> None:
        pass

    def passive(self):
        return _NullContext()

    def quiesce(self) -> None:
        pass

    def pending_deadlines(self) -> list[datetime]:
        return []

    def advance_to(self, deadline: datetime) -> None:
        self.sleep_until(deadline)


class _NullContext:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


class VirtualClock:
    """Deterministic clock: time moves only via advance_to()."""

    is_virtual = True

    def __init__(self, start: datetime):
        self._now = start
        self._cond = threading.Condition()
        self._closed = False
        self._busy = 0
        self._waiting: dict[int, datetime] = {}
        self._next_token = 0
        self._local = threading.local()
        self._listeners: list[Callable[[datetime], None]] = []

    def now(self) -> datetime:
        with self._cond:
            return self._now

    def add_listener(self, listener: Callable[[datetime], None]) -> None:
        """listener(new_time) runs on every advance, outside the lock (it
        may perform I/O such as pushing the time to a simulator)."""
        self._listeners.append(listener)

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def interrupt(self) -> None:
        with self._cond:
            self._cond.notify_all()

    def _is_worker(self) -> bool:
        return getattr(self._local, "worker", False)

    def register_spawned(self) -> None:
        with self._cond:
            self._busy += 1

    def mark_worker_thread(self) -> None:
        self._local.worker = True

    def worker_finished(self) -> None:
        with self._cond:
            self._busy -= 1
            self._cond.notify_all()

    def passive(self):
        """Park the current worker while it waits on other workers."""
        clock = self

        class _Passive:
            def __enter__(self):
                if clock._is_worker():
                    with clock._cond:
                        clock._busy -= 1
                        clock._cond.notify_all()
                return self

            def __exit__(self, *exc):
                if clock._is_worker():
                    with clock._cond:
                        clock._busy += 1
                return False

        return _Passive()

    def sleep(self, seconds: float,
              wake_event: Optional[threading.Event] = None) -> None:
        with self._cond:
            deadline = self._now + timedelta(seconds=seconds)
        self.sleep_until(deadline, wake_event)

    def sleep_until(self, deadline: datetime,
                    wake_event: Optional[threading.Event] = None) -> None:
        with self._cond:
            is_worker = self._is_worker()
            if is_worker:
                self._busy -= 1
            token = self._next_token
            self._next_token += 1
            self._waiting[token] = deadline
            self._cond.notify_all()
            try:
                while (not self._closed and self._now < deadline
                       and not (wake_event is not None
                                and wake_event.is_set())):
                    self._cond.wait()
            finally:
                del self._waiting[token]
                if is_worker:
                    self._busy += 1
                self._cond.notify_all()
            if self._closed:
                raise ClockClosed()

    def pending_deadlines(self) -> list[datetime]:
        with self._cond:
            return sorted(self._waiting.values())

    def quiesce(self) -> None:
        """Block until all workers are finished or asleep past now."""
        with self._cond:
            while not self._closed and (
                    self._busy > 0
                    or any(d <= self._now for d in self._waiting.values())):
                self._cond.wait()

    def advance_to(self, deadline: datetime) -> None:
        """Move time forward and wait for the world to settle.

        Settles at the current time first so work already launched completes
        under its own timestamp, then steps through each pending sleeper
        deadline on the way (no sleeper is skipped over), settling after
        every step."""
        while True:
            self.quiesce()
            with self._cond:
                if self._closed:
                    raise ClockClosed()
                if deadline < self._now:
                    raise ClockBackwards(
                        f"cannot rewind {self._now} -> {deadline}")
                if self._now == deadline:
                    return
                pending = [d for d in self._waiting.values()
                           if self._now < d < deadline]
                step = min(pending) if pending else deadline
                self._now = step
                listeners = list(self._listeners)
            for listener in listeners:
                listener(step)
            with self._cond:
                self._cond.notify_all()

    def advance(self, seconds: float) -> None:
        self.advance_to(self.now() + timedelta(seconds=seconds))


RUNNING = "running"
FINISHED = "finished"
FAILED = "failed"
SKIPPED_OVERLAP = "skipped_overlap"


@dataclass
class TaskRun:
    """One execution (or overlap skip) of a task."""

    task_name: str
    start: datetime
    status: str = RUNNING
    error: Optional[str] = None
    log_path: Optional[Path] = None
    finished_at: Optional[datetime] = None
    cancel_event: threading.Event = field(default_factory=threading.Event)

    @property
    def stamp(self) -> str:
        return iso(self.start)

    def view(self) -> dict:
        return {
            "start": self.stamp,
            "status": self.status,
            "error": self.error,
            "log_path": str(self.log_path) if self.log_path else None,
            "finished_at": iso(self.finished_at) if self.finished_at
            else None,
        }


@dataclass
class NamedTask:
    spec: TaskSpec
    body: Callable[["TaskContext"], Any]


@dataclass
class RunPlan:
    """Tasks per phase plus the clock, log root, and the environment object
    handed to every task body (store, client, config...)."""

    setup: list[NamedTask] = field(default_factory=list)
    run_once: list[NamedTask] = field(default_factory=list)
    scheduled: list[NamedTask] = field(default_factory=list)
    clock: Any = None
    log_root: str = "out"
    env: Any = None


class TaskContext:
    """What a task body sees: the clock, its log, cancellation, and env."""

    def __init__(self, run: TaskRun, clock, env, supervisor: "Supervisor"):
        self.run = run
        self.clock = clock
        self.env = env
        self.supervisor = supervisor

    def log(self, level: str, message: str) -> None:
        line = f"{iso(self.clock.now())} {level} {message}\n"
        with open(self.run.log_path, "a", encoding="utf-8") as handle:
            handle.write(line)

    def check_cancelled(self) -> None:
        if self.run.cancel_event.is_set():
            raise TaskKilled(self.run.task_name)

    def sleep(self, seconds: float) -> None:
        self.clock.sleep(seconds, wake_event=self.run.cancel_event)
        self.check_cancelled()

    def sleep_until(self, deadline: datetime) -> None:
        self.clock.sleep_until(deadline, wake_event=self.run.cancel_event)
        self.check_cancelled()

    def parallel_run(self, fn, total, batch_size, max_threads):
        try:
            return parallel_run(fn, total, batch_size, max_threads,
                                clock=self.clock,
                                cancel_event=self.run.cancel_event)
        except BatchFailed as exc:
            if isinstance(exc.cause, TaskKilled):
                raise exc.cause
            raise


class Supervisor:
    """Owns the phase lifecycle and the per-task run history."""

    def __init__(self, plan: RunPlan, until: Optional[datetime] = None):
        self.plan = plan
        self.clock = plan.clock or SystemClock()
        self.until = until
        self.log_root = Path(plan.log_root)
        self._lock = threading.RLock()
        self._runs: dict[str, list[TaskRun]] = {
            task.spec.name: [] for task in
            plan.setup + plan.run_once + plan.scheduled}
        self._bodies = {task.spec.name: task for task in
                        plan.setup + plan.run_once + plan.scheduled}
        self._threads: list[threading.Thread] = []
        self.launch_time: Optional[datetime] = None
        self.failure: Optional[BaseException] = None
        self._stopped = threading.Event()
        self._thread = threading.Thread(target=self._main, daemon=True,
                                        name="supervisor")

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "Supervisor":
        self._thread.start()
        return self

    def join(self, timeout: Optional[float] = None) -> None:
        self._thread.join(timeout)
        if self.failure is not None:
            raise self.failure

    def stop(self) -> None:
        """Graceful shutdown: stop launching, wake sleepers, join workers."""
        self._stopped.set()
        self.clock.close()
        self._thread.join(timeout=30)

    def _main(self) -> None:
        self.launch_time = self.clock.now()
        try:
            self._run_setup_phase()
        except SetupFailed as exc:
            self.failure = exc
            return
        for task in self.plan.run_once:
            self._launch(task, self.clock.now())
        self._scheduled_loop()
        self._drain(set(self._runs) - {t.spec.name
                                       for t in self.plan.run_once})
        self.clock.close()
        for thread in list(self._threads):
            thread.join(timeout=10)

    def _run_setup_phase(self) -> None:
        runs = [self._launch(task, self.clock.now())
                for task in self.plan.setup]
        self._drain({task.spec.name for task in self.plan.setup})
        failed = [run for run in runs if run.status == FAILED]
        if failed:
            raise SetupFailed(
                "; ".join(f"{r.task_name}: {r.error}" for r in failed))

    def _scheduled_loop(self) -> None:
        if not self.plan.scheduled or self.until is None:
            if self.until is not None:
                self.clock.advance_to(self.until)
            return
        next_due = {task.spec.name: self.launch_time + task.spec.offset
                    for task in self.plan.scheduled}
        specs = {task.spec.name: task for task in self.plan.scheduled}
        while not self._stopped.is_set():
            upcoming = [(due, specs[name].spec.offset, name)
                        for name, due in next_due.items() if due < self.until]
            if not upcoming:
                break
            upcoming.sort()
            due, _, name = upcoming[0]
            try:
                self.clock.advance_to(due)
            except ClockClosed:
                break
            if self._stopped.is_set():
                break
            task = specs[name]
            with self._lock:
                running = self._current_run(name)
                if running is not None:
                    self._record_skip(task, due)
                else:
                    self._launch(task, due)
            next_due[name] = due + task.spec.cadence.period
        if not self._stopped.is_set():
            try:
                self.clock.advance_to(self.until)
            except ClockClosed:
                pass

    def _drain(self, names: set) -> None:
        """Wait for the named tasks' active runs to finish, advancing the
        virtual clock to pending sleeper deadlines when necessary."""
        while True:
            if self.clock.is_virtual:
                try:
                    self.clock.quiesce()
                except ClockClosed:
                    return
            with self._lock:
                active = [run for name in names
                          for run in self._runs.get(name, ())
                          if run.status == RUNNING]
            if not active:
                return
            if self.clock.is_virtual:
                deadlines = self.clock.pending_deadlines()
                if not deadlines:
                    return
                try:
                    self.clock.advance_to(deadlines[0])
                except (ClockClosed, ClockBackwards):
                    return
            else:
                active[0].cancel_event.wait(timeout=0.05)

    # -- launching ---------------------------------------------------------

    def _current_run(self, name: str) -> Optional[TaskRun]:
        for run in reversed(self._runs.get(name, ())):
            if run.status == RUNNING:
                return run
        return None

    def _log_path(self, name: str, start: datetime) -> Path:
        directory = self.log_root / name
        directory.mkdir(parents=True, exist_ok=True)
        return directory / f"{iso(start)}.log"

    def _record_skip(self, task: NamedTask, due: datetime) -> TaskRun:
        run = TaskRun(task_name=task.spec.name, start=due,
                      status=SKIPPED_OVERLAP, finished_at=due)
        run.log_path = self._log_path(task.spec.name, due)
        with open(run.log_path, "a", encoding="utf-8") as handle:
            handle.write(f"{iso(due)} WARNING "
                         "tick skipped: previous run still active\n")
        self._runs[task.spec.name].append(run)
        return run

    def _launch(self, task: NamedTask, start: datetime) -> TaskRun:
        with self._lock:
            run = TaskRun(task_name=task.spec.name, start=start)
            run.log_path = self._log_path(task.spec.name, start)
            self._runs[task.spec.name].append(run)
            self.clock.register_spawned()
            thread = threading.Thread(
                target=self._run_body, args=(task, run), daemon=True,
                name=f"task:{task.spec.name}")
            self._threads.append(thread)
            thread.start()
            return run

    def _run_body(self, task: NamedTask, run: TaskRun) -> None:
        self.clock.mark_worker_thread()
        ctx = TaskContext(run, self.clock, self.plan.env, self)
        try:
            ctx.log("INFO", "task started")
            task.body(ctx)
            status, error = FINISHED, None
            ctx.log("INFO", "task finished")
        except TaskKilled:
            status, error = FAILED, "killed"
            ctx.log("ERROR", "task killed")
        except ClockClosed:
            status, error = FINISHED, None
            ctx.log("INFO", "task stopped at shutdown")
        except BaseException as exc:  # noqa: BLE001 - recorded, not hidden
            status, error = FAILED, repr(exc)
            ctx.log("ERROR", f"task failed: {exc!r}")
            for line in traceback.format_exc().splitlines():
                ctx.log("ERROR", line)
        with self._lock:
            run.status = status
            run.error = error
            run.finished_at = self.clock.now()
        self.clock.worker_finished()
        self.clock.interrupt()

    # -- control surface (service endpoints) -------------------------------

    def task_names(self) -> list[str]:
        return list(self._runs)

    def task_view(self, name: str) -> dict:
        task = self._bodies[name]
        with self._lock:
            current = self._current_run(name)
            runs = [run.view() for run in self._runs[name]]
        view = {
            "name": name,
            "phase": task.spec.phase.value,
            "running": current is not None,
            "running_since": current.stamp if current else None,
            "runs": runs,
        }
        if task.spec.cadence is not None:
            view["cadence"] = task.spec.cadence.value
        return view

    def runs(self, name: str) -> list[TaskRun]:
        with self._lock:
            return list(self._runs[name])

    def start_now(self, name: str) -> TaskRun:
        """Out-of-schedule launch; raises Overlapping per the no-overlap
        rule and KeyError for unknown tasks."""
        task = self._bodies[name]
        with self._lock:
            if self._current_run(name) is not None:
                raise Overlapping(name)
            return self._launch(task, self.clock.now())

    def kill(self, name: str) -> bool:
        """Cooperative cancellation; returns False when nothing ran
        (idempotent: a second kill is a no-op)."""
        with self._lock:
            current = self._current_run(name)
            if current is None:
                return False
            current.cancel_event.set()
        self.clock.interrupt()
        return True


def run_plan(plan: RunPlan, until: Optional[datetime] = None) -> Supervisor:
    """Start supervising a plan; returns the live Supervisor handle.

    With a virtual clock, `until` bounds the scheduled phase: ticks strictly
    before `until` fire, then the clock advances to `until` and shuts down.
    """
    return Supervisor(plan, until=until).start()


def parallel_run(fn: Callable[[int, int], Any], total: int, batch_size: int,
                 max_threads: int, clock=None,
                 cancel_event: Optional[threading.Event] = None) -> list:
    """Run fn(skip, limit) over [0, total) in batches.

    Batches cover the range exactly once, at most max_threads run
    concurrently, and outputs come back ordered by skip. The first failing
    batch (lowest skip) cancels batches that have not started and is
    re-raised as BatchFailed with its skip.
    """
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if max_threads <= 0:
        raise ValueError("max_threads must be positive")
    if total < 0:
        raise ValueError("total must be non-negative")
    batches = [(skip, min(batch_size, total - skip))
               for skip in range(0, total, batch_size)]
    if not batches:
        return []

    def _wrapped(skip: int, limit: int):
        # each batch settles its own busy mark on the way out; a batch
        # queued behind a full pool still pins virtual time until it runs
        if clock is not None:
            clock.mark_worker_thread()
        try:
            if cancel_event is not None and cancel_event.is_set():
                raise TaskKilled(f"batch at skip={skip}")
            return fn(skip, limit)
        finally:
            if clock is not None:
                clock.worker_finished()

    results: list = [None] * len(batches)
    passive = clock.passive() if clock is not None else _NullContext()
    with ThreadPoolExecutor(max_workers=max_threads) as pool:
        futures = []
        for skip, limit in batches:
            if clock is not None:
                clock.register_spawned()
            futures.append(pool.submit(_wrapped, skip, limit))
        error: Optional[BatchFailed] = None
        # the consumer parks passively so batches sleeping on a rate
        # window can still advance virtual time past their deadlines
        with passive:
            for idx, future in enumerate(futures):
                try:
                    results[idx] = future.result()
                except Exception as exc:  # noqa: BLE001
                    error = BatchFailed(batches[idx][0], exc)
                    for later in futures[idx + 1:]:
                        later.cancel()
                    for later in futures[idx + 1:]:
                        if not later.cancelled():
                            try:
                                later.result()
                            except Exception:  # noqa: BLE001
                                pass
                    break
    if clock is not None:
        # cancelled batches never entered _wrapped; settle them here
        for future in futures:
            if future.cancelled():
                clock.worker_finished()
    if error is not None:
        raise error
    return results


def reduce(outputs: Iterable, merge: Callable[[Any, Any], Any],
           identity: Any) -> Any:
    """Merge per-batch outputs in skip order; empty input yields identity."""
    return _functools_reduce(merge, outputs, identity)
