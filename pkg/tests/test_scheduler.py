"""Scheduler behavior: virtual clock, phase lifecycle, overlap rule,
parallel batcher."""

import threading
import time
from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherewatch.domain import parse_task_name
from spherewatch.scheduler import (
    ClockBackwards,
    ClockClosed,
    BatchFailed,
    NamedTask,
    Overlapping,
    RunPlan,
    SetupFailed,
    SystemClock,
    TaskKilled,
    VirtualClock,
    parallel_run,
    reduce,
    run_plan,
)

T0 = datetime(2019, 8, 1, tzinfo=timezone.utc)


def wait_for(predicate, timeout=10.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.01)
    return False


def task(name, body):
    return NamedTask(spec=parse_task_name(name), body=body)


class TestVirtualClock:
    def test_now_starts_at_origin(self):
        clock = VirtualClock(T0)
        assert clock.now() == T0

    def test_advance_moves_time(self):
        clock = VirtualClock(T0)
        clock.advance_to(T0 + timedelta(hours=2))
        assert clock.now() == T0 + timedelta(hours=2)

    def test_advance_backwards_rejected(self):
        clock = VirtualClock(T0)
        clock.advance_to(T0 + timedelta(minutes=1))
        with pytest.raises(ClockBackwards):
            clock.advance_to(T0)

    def test_sleeper_wakes_at_deadline(self):
        clock = VirtualClock(T0)
        woke = []

        def sleeper():
            clock.sleep(3600)
            woke.append(clock.now())

        thread = threading.Thread(target=sleeper, daemon=True)
        thread.start()
        assert wait_for(lambda: clock.pending_deadlines())
        clock.advance_to(T0 + timedelta(minutes=30))
        assert woke == []
        clock.advance_to(T0 + timedelta(hours=1))
        thread.join(timeout=5)
        assert woke == [T0 + timedelta(hours=1)]

    def test_close_raises_in_sleepers(self):
        clock = VirtualClock(T0)
        outcome = []

        def sleeper():
            try:
                clock.sleep(3600)
            except ClockClosed:
                outcome.append("closed")

        thread = threading.Thread(target=sleeper, daemon=True)
        thread.start()
        assert wait_for(lambda: clock.pending_deadlines())
        clock.close()
        thread.join(timeout=5)
        assert outcome == ["closed"]

    def test_listener_sees_each_advance(self):
        clock = VirtualClock(T0)
        seen = []
        clock.add_listener(seen.append)
        clock.advance_to(T0 + timedelta(minutes=1))
        clock.advance_to(T0 + timedelta(minutes=2))
        assert seen == [T0 + timedelta(minutes=1),
                        T0 + timedelta(minutes=2)]

    def test_wake_event_interrupts_sleep(self):
        clock = VirtualClock(T0)
        event = threading.Event()
        woke = []

        def sleeper():
            clock.sleep(3600, wake_event=event)
            woke.append(clock.now())

        thread = threading.Thread(target=sleeper, daemon=True)
        thread.start()
        assert wait_for(lambda: clock.pending_deadlines())
        event.set()
        clock.interrupt()
        thread.join(timeout=5)
        assert woke == [T0]


class TestPhases:
    def test_daily_tasks_fire_once_in_offset_order(self, tmp_path):
        launched = []

        def record(ctx):
            launched.append((ctx.run.task_name, ctx.clock.now()))

        clock = VirtualClock(T0)
        plan = RunPlan(
            scheduled=[task("daily/00_02_second", record),
                       task("daily/00_01_first", record)],
            clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=24))
        sup.join(timeout=30)
        assert launched == [
            ("daily/00_01_first", T0 + timedelta(minutes=1)),
            ("daily/00_02_second", T0 + timedelta(minutes=2)),
        ]
        for name in ("daily/00_01_first", "daily/00_02_second"):
            runs = sup.runs(name)
            assert [r.status for r in runs] == ["finished"]
            assert runs[0].log_path.exists()

    def test_second_tick_fires_after_period(self, tmp_path):
        launched = []

        def record(ctx):
            launched.append(ctx.clock.now())

        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("hourly/00_15_beat", record)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=2))
        sup.join(timeout=30)
        assert launched == [T0 + timedelta(minutes=15),
                            T0 + timedelta(minutes=75)]

    def test_overlap_skipped_and_recorded(self, tmp_path):
        # 90 virtual minutes of work against an hourly cadence: the second
        # tick must be skipped, the third launches again.
        def slow(ctx):
            ctx.sleep(90 * 60)

        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("hourly/00_15_slow", slow)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=3))
        sup.join(timeout=30)
        runs = sup.runs("hourly/00_15_slow")
        assert [r.status for r in runs] == [
            "finished", "skipped_overlap", "finished"]
        skip = runs[1]
        assert skip.start == T0 + timedelta(minutes=75)
        text = skip.log_path.read_text(encoding="utf-8")
        assert "skipped" in text and "WARNING" in text

    def test_setup_failure_blocks_run_once(self, tmp_path):
        hits = []

        def boom(ctx):
            raise RuntimeError("no database")

        def loop(ctx):
            hits.append(1)
            while True:
                ctx.sleep(10)

        clock = VirtualClock(T0)
        plan = RunPlan(setup=[task("setup/migrations", boom)],
                       run_once=[task("run_once/db_stats_loop", loop)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=1))
        with pytest.raises(SetupFailed, match="no database"):
            sup.join(timeout=30)
        assert hits == []
        assert sup.runs("run_once/db_stats_loop") == []
        assert [r.status for r in sup.runs("setup/migrations")] == ["failed"]

    def test_setup_runs_before_schedule(self, tmp_path):
        order = []

        def prepare(ctx):
            order.append("setup")

        def beat(ctx):
            order.append("tick")

        clock = VirtualClock(T0)
        plan = RunPlan(setup=[task("setup/insert_seeds", prepare)],
                       scheduled=[task("hourly/00_00_beat", beat)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(minutes=61))
        sup.join(timeout=30)
        assert order == ["setup", "tick", "tick"]

    def test_run_once_loop_ticks_until_shutdown(self, tmp_path):
        stamps = []

        def loop(ctx):
            while True:
                stamps.append(ctx.clock.now())
                ctx.sleep(600)

        clock = VirtualClock(T0)
        plan = RunPlan(run_once=[task("run_once/db_stats_loop", loop)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=1))
        sup.join(timeout=30)
        assert stamps == [T0 + timedelta(minutes=m)
                          for m in range(0, 61, 10)]
        runs = sup.runs("run_once/db_stats_loop")
        assert [r.status for r in runs] == ["finished"]

    def test_task_log_line_shape(self, tmp_path):
        def noop(ctx):
            ctx.log("INFO", "did 3 things")

        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("daily/00_00_noop", noop)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(minutes=1))
        sup.join(timeout=30)
        run = sup.runs("daily/00_00_noop")[0]
        assert run.log_path == (tmp_path / "daily" / "00_00_noop"
                                / "2019-08-01T00:00:00+00:00.log")
        lines = run.log_path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "2019-08-01T00:00:00+00:00 INFO task started"
        assert "2019-08-01T00:00:00+00:00 INFO did 3 things" in lines
        assert lines[-1] == "2019-08-01T00:00:00+00:00 INFO task finished"

    def test_failed_run_records_error(self, tmp_path):
        def bad(ctx):
            raise ValueError("bad page")

        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("daily/00_00_bad", bad)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(minutes=1))
        sup.join(timeout=30)
        run = sup.runs("daily/00_00_bad")[0]
        assert run.status == "failed"
        assert "bad page" in run.error
        assert "ValueError" in run.log_path.read_text(encoding="utf-8")


class TestControlSurface:
    def test_kill_marks_failed_killed(self, tmp_path):
        def sleepy(ctx):
            ctx.sleep(10 * 3600)

        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("daily/00_00_sleepy", sleepy)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=1))
        assert wait_for(lambda: any(r.status == "running"
                                    for r in sup.runs("daily/00_00_sleepy")))
        assert sup.kill("daily/00_00_sleepy") is True
        sup.join(timeout=30)
        run = sup.runs("daily/00_00_sleepy")[0]
        assert run.status == "failed"
        assert run.error == "killed"
        assert "task killed" in run.log_path.read_text(encoding="utf-8")

    def test_kill_idle_task_is_noop(self, tmp_path):
        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("daily/00_00_idle", lambda ctx: None)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(minutes=1))
        sup.join(timeout=30)
        assert sup.kill("daily/00_00_idle") is False

    def test_start_now_rejects_overlap(self, tmp_path):
        release = threading.Event()

        def gated(ctx):
            ctx.clock.sleep(7200, wake_event=release)

        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("daily/00_00_gated", gated)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=1))
        assert wait_for(lambda: any(r.status == "running"
                                    for r in sup.runs("daily/00_00_gated")))
        with pytest.raises(Overlapping):
            sup.start_now("daily/00_00_gated")
        with pytest.raises(KeyError):
            sup.start_now("daily/00_00_unknown")
        release.set()
        clock.interrupt()
        sup.join(timeout=30)

    def test_task_view_shape(self, tmp_path):
        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("hourly/00_05_beat",
                                       lambda ctx: None)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(minutes=10))
        sup.join(timeout=30)
        view = sup.task_view("hourly/00_05_beat")
        assert view["name"] == "hourly/00_05_beat"
        assert view["phase"] == "scheduled"
        assert view["cadence"] == "hourly"
        assert view["running"] is False
        assert [r["status"] for r in view["runs"]] == ["finished"]


class TestParallelRun:
    def test_batches_cover_range_in_skip_order(self):
        calls = []

        def fn(skip, limit):
            calls.append((skip, limit))
            return list(range(skip, skip + limit))

        out = parallel_run(fn, total=10, batch_size=4, max_threads=2)
        assert sorted(calls) == [(0, 4), (4, 4), (8, 2)]
        assert out == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]

    def test_reduce_merges_in_skip_order(self):
        out = parallel_run(lambda s, l: list(range(s, s + l)),
                           total=7, batch_size=3, max_threads=3)
        merged = reduce(out, lambda a, b: a + b, [])
        assert merged == list(range(7))

    def test_empty_total(self):
        assert parallel_run(lambda s, l: 1, 0, 5, 2) == []
        assert reduce([], lambda a, b: a + b, 0) == 0

    def test_first_error_reported_with_skip(self):
        started = []

        def fn(skip, limit):
            started.append(skip)
            if skip == 4:
                raise RuntimeError("page lost")
            return skip

        with pytest.raises(BatchFailed) as info:
            parallel_run(fn, total=12, batch_size=4, max_threads=1)
        assert info.value.skip == 4
        assert isinstance(info.value.cause, RuntimeError)

    def test_thread_cap_respected(self):
        active = []
        peak = []
        lock = threading.Lock()

        def fn(skip, limit):
            with lock:
                active.append(skip)
                peak.append(len(active))
            time.sleep(0.02)
            with lock:
                active.remove(skip)
            return limit

        parallel_run(fn, total=40, batch_size=5, max_threads=3)
        assert max(peak) <= 3

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            parallel_run(lambda s, l: 1, 10, 0, 2)
        with pytest.raises(ValueError):
            parallel_run(lambda s, l: 1, 10, 2, 0)
        with pytest.raises(ValueError):
            parallel_run(lambda s, l: 1, -1, 2, 2)

    @settings(max_examples=60, deadline=None)
    @given(total=st.integers(0, 200), batch_size=st.integers(1, 50),
           max_threads=st.integers(1, 8))
    def test_matches_sequential_coverage(self, total, batch_size,
                                         max_threads):
        out = parallel_run(lambda s, l: list(range(s, s + l)),
                           total, batch_size, max_threads)
        assert reduce(out, lambda a, b: a + b, []) == list(range(total))
        sizes = [len(chunk) for chunk in out]
        assert all(size == batch_size for size in sizes[:-1])
        if sizes:
            assert 1 <= sizes[-1] <= batch_size

    def test_inside_task_sees_virtual_time(self, tmp_path):
        # A batch blocked in a clock sleep must not wedge the launcher.
        seen = []

        def body(ctx):
            def fn(skip, limit):
                ctx.clock.sleep(900)
                seen.append((skip, ctx.clock.now()))
                return limit

            ctx.parallel_run(fn, total=4, batch_size=2, max_threads=2)

        clock = VirtualClock(T0)
        plan = RunPlan(scheduled=[task("daily/00_00_paged", body)],
                       clock=clock, log_root=str(tmp_path))
        sup = run_plan(plan, until=T0 + timedelta(hours=1))
        sup.join(timeout=30)
        assert sorted(skip for skip, _ in seen) == [0, 2]
        assert all(at == T0 + timedelta(minutes=15) for _, at in seen)
        assert [r.status for r in sup.runs("daily/00_00_paged")] \
            == ["finished"]


class TestSystemClock:
    def test_sleep_respects_wake_event(self):
        clock = SystemClock()
        event = threading.Event()
        event.set()
        start = time.monotonic()
        clock.sleep(30, wake_event=event)
        assert time.monotonic() - start < 5

    def test_close_raises(self):
        clock = SystemClock()
        clock.close()
        with pytest.raises(ClockClosed):
            clock.sleep(30)

    def test_wall_plan_runs(self, tmp_path):
        done = []
        plan = RunPlan(setup=[task("setup/insert_seeds",
                                   lambda ctx: done.append(1))],
                       clock=SystemClock(), log_root=str(tmp_path))
        sup = run_plan(plan)
        sup.join(timeout=30)
        assert done == [1]
