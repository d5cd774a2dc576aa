"""One-call wiring of the collection system against the simulated platform.

Everything shares one virtual clock: the scheduler advances it, the
simulator observes it through a listener, and the client's budget windows
line up with the server's because both read the same hands.
"""

from dataclasses import dataclass
from datetime import timedelta
from typing import Optional

from .collector import build_plan
from .domain import CollectionConfig
from .netclient import PlatformClient
from .scheduler import Supervisor, VirtualClock, run_plan
from .simserver import SimService
from .simworld import World, WorldParams, generate_world
from .store import DocumentStore


@dataclass
class SimRun:
    world: World
    service: SimService
    clock: VirtualClock
    store: DocumentStore
    client: PlatformClient
    config: CollectionConfig
    supervisor: Optional[Supervisor] = None

    def close(self) -> None:
        self.service.stop()
        self.store.close()


def simulation_config(world: World, work_dir: str,
                      overrides: Optional[dict] = None) -> CollectionConfig:
    fields = dict(
        seed_usernames=tuple(world.accounts[s].screen_name
                             for s in world.seed_ids),
        max_watched_users=100_000,
        max_daily_increase=500,
        max_daily_increase_ratio=1.0,
        min_appearances_before_watched=3,
        ignore_tweet_media=True,
        oldest_tweet=world.t0,
        newest_tweet=world.t1 + timedelta(days=365),
        search_languages=("pt", "und"),
        max_threads=8,
        min_tweets_before_restricting_by_language=10,
        store_address="sim://local",
        database_name="spherewatch",
        snapshot_enabled=False,
        notifier_webhook=None,
        database_stats_file=f"{work_dir}/db_stats.csv",
        seconds_between_db_stats_log=3600,
        api_keys_file="",
    )
    if overrides:
        fields.update(overrides)
    return CollectionConfig(**fields)


def build_sim_run(seed: int = 42, params: Optional[WorldParams] = None,
                  work_dir: str = "out",
                  overrides: Optional[dict] = None) -> SimRun:
    world = generate_world(seed, params)
    service = SimService(world)
    service.start()
    clock = VirtualClock(start=world.launch)
    clock.add_listener(service.clock_listener())
    service.set_clock(world.launch)
    config = simulation_config(world, work_dir, overrides)
    store = DocumentStore(stats_path=config.database_stats_file)
    client = PlatformClient(service.base_url, ["sim-credential"], clock,
                            store=store)
    return SimRun(world=world, service=service, clock=clock, store=store,
                  client=client, config=config)


def run_simulated_collection(seed: int = 42,
                             params: Optional[WorldParams] = None,
                             cycles: int = 3, work_dir: str = "out",
                             overrides: Optional[dict] = None) -> SimRun:
    """Run the full plan for `cycles` virtual days and return the wiring
    with the supervisor joined."""
    run = build_sim_run(seed=seed, params=params, work_dir=work_dir,
                        overrides=overrides)
    try:
        plan = build_plan(run.config, run.store, run.client,
                          clock=run.clock, log_root=f"{work_dir}/logs")
        until = run.world.launch + timedelta(days=cycles)
        run.supervisor = run_plan(plan, until=until)
        run.supervisor.join()
    except BaseException:
        run.close()
        raise
    return run
