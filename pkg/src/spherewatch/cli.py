"""Command line front door: run collections, serve the simulator and the
monitoring API, and drive the analysis pipelines over store snapshots.

Snapshots (accounts.jsonl + tweets.jsonl + manifest.json, as written by
`collect --snapshot-dir` or the backup task) are the interchange format
between collection and analysis.
"""

import csv
import json
import time
from datetime import timedelta
from pathlib import Path

import click
import requests

from . import activity as activity_mod
from . import clustering, embeddings, labeling, pooling, topics
from .collector import build_plan
from .domain import (InvalidConfig, MalformedConfig, iso, parse_config,
                     parse_timestamp)
from .netclient import PlatformClient
from .scheduler import SystemClock, VirtualClock, run_plan
from .service import create_app, serve
from .simserver import SimService
from .simworld import BadParams, WorldParams, generate_world
from .store import DocumentStore

DATE = click.DateTime(formats=["%Y-%m-%d"])


@click.group()
def main() -> None:
    """Social collection daemon, platform simulator, and analysis tools."""


# -- shared wiring ----------------------------------------------------------


def _load_config(path: str):
    try:
        return parse_config(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise click.ClickException(f"cannot read config: {exc}")
    except (InvalidConfig, MalformedConfig) as exc:
        raise click.ClickException(f"bad config: {exc}")


def _read_credentials(path: str) -> list:
    if path:
        keys_file = Path(path)
        if keys_file.exists():
            lines = [line.strip() for line in
                     keys_file.read_text(encoding="utf-8").splitlines()
                     if line.strip()]
            if lines:
                return lines
    return ["anonymous"]


def _sim_url(base_url: str, suffix: str) -> str:
    return base_url.rstrip("/") + suffix


def _push_clock(base_url: str, at) -> None:
    reply = requests.post(_sim_url(base_url, "/__sim/clock"),
                          json={"now": iso(at)}, timeout=30)
    reply.raise_for_status()


def _sim_launch(base_url: str):
    reply = requests.get(_sim_url(base_url, "/__sim/ground_truth"),
                         timeout=30)
    reply.raise_for_status()
    return parse_timestamp(reply.json()["launch"])


def _wire_collection(config_path: str, base_url: str, log_root: str,
                     virtual_days, wall_days):
    """Store + plan + stop time. virtual_days drives the target's
    simulated clock over HTTP; otherwise wall time rules."""
    config = _load_config(config_path)
    store = DocumentStore(stats_path=config.database_stats_file)
    credentials = _read_credentials(config.api_keys_file)
    if virtual_days is not None:
        try:
            launch = _sim_launch(base_url)
            _push_clock(base_url, launch)
        except (requests.RequestException, ValueError, KeyError) as exc:
            raise click.ClickException(
                f"--virtual-days needs a simulator at {base_url}: {exc}")
        clock = VirtualClock(start=launch)
        clock.add_listener(lambda at: _push_clock(base_url, at))
        until = launch + timedelta(days=virtual_days)
    else:
        clock = SystemClock()
        until = clock.now() + timedelta(days=wall_days if wall_days
                                        is not None else 36500.0)
    client = PlatformClient(base_url, credentials, clock, store=store)
    plan = build_plan(config, store, client, clock=clock, log_root=log_root)
    return store, plan, until


# -- collection -------------------------------------------------------------


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Collection config JSON.")
@click.option("--base-url", required=True,
              help="Platform API root (real or simulated).")
@click.option("--log-root", default="out/logs", show_default=True)
@click.option("--virtual-days", type=float, default=None,
              help="Run this many simulated days on a virtual clock, "
                   "pushing time to the target simulator.")
@click.option("--wall-days", type=float, default=None,
              help="Stop the schedule after this many wall-clock days.")
@click.option("--snapshot-dir", type=click.Path(file_okay=False),
              default=None, help="Write a store snapshot when done.")
def collect(config_path, base_url, log_root, virtual_days, wall_days,
            snapshot_dir):
    """Run the collection plan against a platform API until done."""
    store, plan, until = _wire_collection(config_path, base_url, log_root,
                                          virtual_days, wall_days)
    supervisor = run_plan(plan, until=until)
    try:
        supervisor.join()
    except BaseException as exc:
        raise click.ClickException(f"collection failed: {exc}")
    accounts = store.count("accounts")
    tweets = store.count("tweets")
    if snapshot_dir:
        manifest = store.snapshot(snapshot_dir)
        click.echo(f"snapshot -> {snapshot_dir} "
                   f"({manifest.counts.get('accounts', 0)} accounts, "
                   f"{manifest.counts.get('tweets', 0)} tweets)")
    store.close()
    click.echo(f"collected {accounts} accounts, {tweets} tweets")


@main.command("serve-api")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--base-url", required=True)
@click.option("--log-root", default="out/logs", show_default=True)
@click.option("--wall-days", type=float, default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8800, show_default=True)
@click.option("--control-token", default=None,
              envvar="SPHEREWATCH_CONTROL_TOKEN",
              help="Enables the control endpoints when set.")
@click.option("--ui-origin", "ui_origins", multiple=True, default=("*",),
              show_default=True)
def serve_api(config_path, base_url, log_root, wall_days, host, port,
              control_token, ui_origins):
    """Run a collection and the monitoring/control API in one process."""
    store, plan, until = _wire_collection(config_path, base_url, log_root,
                                          None, wall_days)
    supervisor = run_plan(plan, until=until)
    app = create_app(supervisor, store, config_host=plan.env,
                     control_token=control_token, ui_origins=ui_origins)
    click.echo(f"monitoring API at http://{host}:{port}")
    try:
        serve(app, host=host, port=port)
    finally:
        supervisor.stop()
        store.close()


@main.command()
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=0,
              help="0 picks a free port.")
@click.option("--accounts", type=int, default=None,
              help="World size override.")
@click.option("--seed-accounts", type=int, default=None)
@click.option("--days", type=int, default=None)
@click.option("--post-days", type=int, default=None,
              help="History depth; must stay at least 2 below --days.")
@click.option("--export-truth", type=click.Path(dir_okay=False),
              default=None, help="Write the ground-truth JSON here.")
@click.option("--duration", type=float, default=None,
              help="Serve for this many seconds (default: until ^C).")
def simulate(seed, host, port, accounts, seed_accounts, days, post_days,
             export_truth, duration):
    """Generate a deterministic world and serve its platform API.

    The simulated clock starts frozen at world launch; POST /__sim/clock
    (or `collect --virtual-days`) moves it.
    """
    if days is not None and post_days is None:
        post_days = max(1, days - 3)
    overrides = {name: value for name, value in
                 (("n_accounts", accounts), ("n_seeds", seed_accounts),
                  ("days", days), ("post_days", post_days))
                 if value is not None}
    params = WorldParams(**overrides) if overrides else None
    try:
        world = generate_world(seed, params)
    except BadParams as exc:
        raise click.ClickException(str(exc))
    service = SimService(world, host=host, port=port).start()
    service.set_clock(world.launch)
    if export_truth:
        Path(export_truth).write_text(
            json.dumps(world.ground_truth(), indent=2), encoding="utf-8")
        click.echo(f"ground truth -> {export_truth}")
    click.echo(f"platform API at {service.base_url}")
    click.echo(f"world launch {iso(world.launch)}")
    try:
        if duration is None:
            while True:
                time.sleep(3600)
        else:
            time.sleep(duration)
    except KeyboardInterrupt:
        pass
    finally:
        service.stop()


# -- analysis ---------------------------------------------------------------


def _open_snapshot(path: str) -> DocumentStore:
    store = DocumentStore()
    try:
        store.restore(path)
    except Exception as exc:
        raise click.ClickException(f"cannot open snapshot {path}: {exc}")
    return store


def _pool_flat(tweets, first, last):
    """pool_period flattened to one chronological document list."""
    by_day = pooling.pool_period(tweets, first, last)
    return [doc for day in sorted(by_day) for doc in by_day[day]]


def _day_window(tweets, start, end):
    if start is not None and end is not None:
        return start.date(), end.date()
    days = [parse_timestamp(doc["created_at"]).date() for doc in tweets]
    if not days:
        raise click.ClickException("snapshot has no tweets")
    return (start.date() if start else min(days),
            end.date() if end else max(days))


def snapshot_option(fn):
    return click.option("--snapshot", required=True,
                        type=click.Path(exists=True, file_okay=False),
                        help="Store snapshot directory.")(fn)


@main.group()
def analyze() -> None:
    """Exploration pipelines over a collection snapshot."""


@analyze.command("pool")
@snapshot_option
@click.option("--out", default="corpus.txt", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--start", type=DATE, default=None)
@click.option("--end", type=DATE, default=None)
def analyze_pool(snapshot, out, start, end):
    """Pool tweets into per-day conversation/hashtag documents."""
    store = _open_snapshot(snapshot)
    tweets = store.iter_docs("tweets")
    first, last = _day_window(tweets, start, end)
    docs = _pool_flat(tweets, first, last)
    count = pooling.export_corpus(docs, out)
    click.echo(f"{count} pooled documents over {first}..{last} -> {out}")


@analyze.command("lda")
@snapshot_option
@click.option("--out", default="topic_model.npz", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--report", default=None, type=click.Path(dir_okay=False),
              help="Also write a top-words TSV here.")
@click.option("--topics", "n_topics", type=int, default=64,
              show_default=True)
@click.option("--batch-size", type=int, default=256, show_default=True)
@click.option("--min-freq", type=int, default=topics.MIN_TOKEN_FREQ,
              show_default=True)
@click.option("--passes", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--start", type=DATE, default=None)
@click.option("--end", type=DATE, default=None)
def analyze_lda(snapshot, out, report, n_topics, batch_size, min_freq,
                passes, seed, start, end):
    """Train the online topic model on pooled documents."""
    store = _open_snapshot(snapshot)
    tweets = store.iter_docs("tweets")
    first, last = _day_window(tweets, start, end)
    docs = _pool_flat(tweets, first, last)
    try:
        model = topics.fit_online(docs, n_topics=n_topics,
                                  batch_size=batch_size, min_freq=min_freq,
                                  passes=passes, seed=seed)
    except topics.EmptyCorpus as exc:
        raise click.ClickException(f"corpus too small: {exc}")
    topics.save_model(model, out)
    score = topics.perplexity(model, docs)
    click.echo(f"{model.n_topics} topics over {len(model.vocabulary)} "
               f"tokens, perplexity {score:.1f} -> {out}")
    if report:
        topics.export_topic_report(model, report)
        click.echo(f"topic report -> {report}")


@analyze.command("embed")
@snapshot_option
@click.option("--mode", type=click.Choice(embeddings.MODES),
              default="hashtags", show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Vector file (default <mode>_vectors.txt).")
@click.option("--dimension", type=int, default=None,
              help="Default: the mode's published setting.")
@click.option("--alpha", type=float, default=None)
@click.option("--negative", type=int, default=None)
@click.option("--min-count", type=int, default=None)
@click.option("--epochs", type=int, default=embeddings.DEFAULT_EPOCHS,
              show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def analyze_embed(snapshot, mode, out, dimension, alpha, negative,
                  min_count, epochs, seed):
    """Train co-occurrence embeddings (hashtags or mentions)."""
    store = _open_snapshot(snapshot)
    defaults = embeddings.HASHTAG_PARAMS if mode == "hashtags" \
        else embeddings.MENTION_PARAMS
    out = out or f"{mode}_vectors.txt"
    docs = embeddings.build_docs(store.iter_docs("tweets"), mode)
    try:
        model = embeddings.train(
            docs,
            dimension=dimension or defaults["dimension"],
            alpha=alpha or defaults["alpha"],
            negative=negative or defaults["negative"],
            min_count=min_count or defaults["min_count"],
            epochs=epochs, seed=seed)
    except embeddings.EmptyVocabulary as exc:
        raise click.ClickException(
            f"not enough {mode} co-occurrence data: {exc}")
    embeddings.save_vectors(model, out)
    click.echo(f"{model.vocab_size} {mode} vectors "
               f"(dim {model.dimension}) -> {out}")


@analyze.command("cluster")
@click.option("--vectors", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Vector file from `analyze embed`.")
@click.option("--k", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--restarts", type=int, default=clustering.FINAL_RESTARTS,
              show_default=True)
@click.option("--out", default="clusters.csv", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--elbow-ks", default=None,
              help="Comma-separated ks for an inertia curve.")
@click.option("--elbow-out", default="elbow.csv", show_default=True,
              type=click.Path(dir_okay=False))
def analyze_cluster(vectors, k, seed, restarts, out, elbow_ks, elbow_out):
    """Cluster embedded tokens with restarted k-means++."""
    model = embeddings.load_vectors(vectors)
    points = {token: model.syn0[i]
              for i, token in enumerate(model.tokens)}
    try:
        fitted = clustering.fit(points, k, seed=seed, restarts=restarts)
    except clustering.DegenerateInput as exc:
        raise click.ClickException(f"cannot cluster: {exc}")
    with open(out, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "cluster"])
        for token in sorted(fitted.assignments):
            writer.writerow([token, fitted.assignments[token]])
    click.echo(f"k={k} inertia {fitted.inertia:.4f} -> {out}")
    if elbow_ks:
        ks = sorted(int(part) for part in elbow_ks.split(","))
        curve = clustering.elbow(points, ks, seed=seed)
        clustering.export_elbow(curve, elbow_out)
        click.echo(f"elbow curve for ks {ks} -> {elbow_out}")


@analyze.command("label")
@snapshot_option
@click.option("--out", default="labels.json", show_default=True,
              type=click.Path(dir_okay=False))
@click.option("--peers", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Peer-published account list (ids or @names).")
@click.option("--lda-review", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Reviewed topic-model sheet (see analyze lda).")
def analyze_label(snapshot, out, peers, lda_review):
    """Derive labeled account sets and resolve their overlaps."""
    store = _open_snapshot(snapshot)
    accounts = store.iter_docs("accounts")
    tweets = store.iter_docs("tweets")
    domains = (labeling.load_seed_domains()
               + labeling.load_discovered_domains())
    index = labeling.mine_shares(tweets, domains)
    raw = {
        "suspended": labeling.suspended_ids(accounts),
        "peer": frozenset(),
        "lda_found": frozenset(),
        "fakenews": frozenset(index.account_counts),
    }
    unresolved = ()
    if peers:
        try:
            imported = labeling.import_peer_list(peers, accounts)
        except labeling.FileUnreadable as exc:
            raise click.ClickException(str(exc))
        raw["peer"] = imported.ids
        unresolved = imported.unresolved
    if lda_review:
        raw["lda_found"] = labeling.read_lda_review(lda_review)
    resolved = labeling.resolve_overlaps(raw)
    payload = {
        "labels": {name: sorted(ids)
                   for name, ids in resolved.by_type().items()},
        "removals": [{"account_id": move.account_id,
                      "removed_from": move.removed_from,
                      "kept_in": move.kept_in}
                     for move in resolved.removals],
        "unresolved_peers": list(unresolved),
        "shared_domain_totals": dict(index.domain_counts),
    }
    Path(out).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    sizes = ", ".join(f"{name}={len(ids)}"
                      for name, ids in resolved.by_type().items())
    click.echo(f"labels ({sizes}) -> {out}")


@analyze.command("activity")
@snapshot_option
@click.option("--out-dir", default="activity", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--start", type=DATE, default=None)
@click.option("--end", type=DATE, default=None)
@click.option("--alpha", type=float, default=activity_mod.ALPHA,
              show_default=True)
def analyze_activity(snapshot, out_dir, start, end, alpha):
    """Daily activity series, weekday statistics, and Welch contrasts."""
    store = _open_snapshot(snapshot)
    tweets = store.iter_docs("tweets")
    first, last = _day_window(tweets, start, end)
    series = activity_mod.daily_series(tweets, first, last)
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)
    activity_mod.export_daily_series(series, target / "daily.csv")
    try:
        stats = activity_mod.weekday_stats(series)
    except activity_mod.RangeTooShort as exc:
        raise click.ClickException(str(exc))
    activity_mod.export_weekday_stats(stats, target / "weekday.csv")
    matrix = activity_mod.welch_matrix(activity_mod.weekday_groups(series))
    activity_mod.export_welch_mask(matrix, target / "welch_mask.csv",
                                   alpha=alpha)
    click.echo(f"{len(series)} days over {first}..{last} -> {target}/"
               "{daily,weekday,welch_mask}.csv")


@main.command()
@snapshot_option
@click.option("--out-dir", default="report", show_default=True,
              type=click.Path(file_okay=False))
@click.option("--topics", "n_topics", type=int, default=16,
              show_default=True)
@click.option("--k", type=int, default=8, show_default=True,
              help="Cluster count for the mention-space delta tables.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--peers", default=None,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--lda-review", default=None,
              type=click.Path(exists=True, dir_okay=False))
def report(snapshot, out_dir, n_topics, k, seed, peers, lda_review):
    """Emit every export the pipelines can produce from one snapshot."""
    ctx = click.get_current_context()
    target = Path(out_dir)
    target.mkdir(parents=True, exist_ok=True)

    def step(name, command, **kwargs):
        try:
            ctx.invoke(command, snapshot=snapshot, **kwargs)
        except click.ClickException as exc:
            click.echo(f"skipped {name}: {exc.message}")
        except Exception as exc:  # noqa: BLE001 - report is best-effort
            click.echo(f"skipped {name}: {exc}")

    step("pooling", analyze_pool, out=str(target / "corpus.txt"))
    step("topics", analyze_lda, out=str(target / "topic_model.npz"),
         report=str(target / "topics.tsv"), n_topics=n_topics, seed=seed)
    for mode in embeddings.MODES:
        step(f"{mode} embeddings", analyze_embed, mode=mode,
             out=str(target / f"{mode}_vectors.txt"), seed=seed)
    step("labels", analyze_label, out=str(target / "labels.json"),
         peers=peers, lda_review=lda_review)
    step("activity", analyze_activity, out_dir=str(target / "activity"))

    mention_vectors = target / "mentions_vectors.txt"
    if mention_vectors.exists():
        try:
            ctx.invoke(analyze_cluster, vectors=str(mention_vectors), k=k,
                       seed=seed, out=str(target / "clusters.csv"),
                       elbow_ks=",".join(str(2 ** p) for p in
                                         range(1, max(2, k).bit_length())),
                       elbow_out=str(target / "elbow.csv"))
            _delta_tables(target, k)
        except Exception as exc:  # noqa: BLE001 - report is best-effort
            click.echo(f"skipped clustering: {exc}")
    else:
        click.echo("skipped clustering: no mention vectors")
    click.echo(f"report -> {target}")


def _delta_tables(target: Path, k: int) -> None:
    """Concentration tables per label type from the report's artifacts."""
    labels_file = target / "labels.json"
    clusters_file = target / "clusters.csv"
    if not labels_file.exists() or not clusters_file.exists():
        click.echo("skipped delta tables: missing labels or clusters")
        return
    payload = json.loads(labels_file.read_text(encoding="utf-8"))
    assignments = {}
    with open(clusters_file, encoding="utf-8", newline="") as handle:
        for row in csv.DictReader(handle):
            assignments[row["id"]] = int(row["cluster"])
    model = clustering.ClusterModel(
        k=k, centroids=None, assignments=assignments, inertia=0.0,
        seed=0)
    label_sets = {name: {str(account) for account in ids}
                  for name, ids in payload["labels"].items() if ids}
    if not label_sets:
        click.echo("skipped delta tables: no labeled accounts")
        return
    table = clustering.delta_table(model, label_sets)
    count = clustering.export_delta_table(table, target / "delta.tsv")
    click.echo(f"{count} delta rows -> {target / 'delta.tsv'}")
