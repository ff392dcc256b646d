"""Operator entry points for the situation-report service.

Subcommands: ``serve`` runs the HTTP server, ``client`` drives a scripted
desktop editing session against it, ``simulate`` runs a scenario over a
faulty in-memory channel, ``replay`` rebuilds a stored document from its
command log and audits it against the snapshot, and ``templates`` lists the
bundled report skeletons.

Exit codes are a stable contract: 0 for success (server stopped cleanly,
scenario converged, replay matched), 1 for domain failures (bind failure,
non-convergence, divergence, unreachable server), 2 for usage and parse
errors (unknown flags, malformed scenario files).
"""

from __future__ import annotations

import hashlib
import json
import sys
import time
from pathlib import Path

import click

from .client import DEFAULT_SYNC_INTERVAL_MS, DesktopClient
from .core import Hub
from .diffsync import decode_payload, encode_payload
from .locks import lock_to_json
from .sim import (
    FaultProfile,
    ScenarioParseError,
    apply_edit_args,
    load_scenario,
    run_scenario,
)
from .store import TEMPLATES, DocumentStore, StoreError

_MAX_TRANSPORT_FAILURES = 20


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _fail(message: str) -> None:
    click.echo(message, err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """Collaborative situation-report editing: server and operator tools."""


# ---------------------------------------------------------------------------
# serve


def _parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep or not host:
        raise click.BadParameter("expected HOST:PORT", param_hint="--bind")
    try:
        return host, int(port)
    except ValueError:
        raise click.BadParameter(f"bad port {port!r}", param_hint="--bind")


@main.command()
@click.option("--bind", default="127.0.0.1:8080", show_default=True,
              help="Address to listen on, as HOST:PORT.")
@click.option("--store", "store_path", default="./data", show_default=True,
              help="Directory for document snapshots and command logs.")
def serve(bind: str, store_path: str) -> None:
    """Run the synchronization server until interrupted.

    Every accepted command is logged and snapshotted before the response
    goes out, so stopping the process at any point loses nothing; a restart
    on the same store directory resumes from the persisted state.
    """
    import uvicorn

    from .webapp import create_app

    host, port = _parse_bind(bind)
    try:
        store = DocumentStore(store_path)
    except StoreError as exc:
        _fail(f"store unavailable: {exc}")
    app = create_app(Hub(store))
    config = uvicorn.Config(app, host=host, port=port, log_level="warning")
    server = uvicorn.Server(config)
    try:
        server.run()
    except OSError as exc:
        _fail(f"bind failed for {bind}: {exc}")
    except SystemExit:
        pass  # normalize uvicorn's startup-failure code to the exit contract
    if not server.started:
        _fail(f"bind failed for {bind}")


# ---------------------------------------------------------------------------
# client


def _load_script(path: str) -> list[dict]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"unreadable script {path!r}: {exc}")
    if isinstance(data, dict):
        data = data.get("steps", [])
    if not isinstance(data, list) or not all(
        isinstance(step, dict) for step in data
    ):
        raise click.UsageError("script must be a JSON list of step objects")
    return sorted(data, key=lambda step: int(step.get("at_ms", 0)))


@main.command()
@click.option("--bind", default="127.0.0.1:8080", show_default=True,
              help="Server address to connect to, as HOST:PORT.")
@click.option("--doc", "doc_id", required=True, help="Document id to edit.")
@click.option("--user", default="desk", show_default=True,
              help="Session id for this client.")
@click.option("--cadence-ms", default=DEFAULT_SYNC_INTERVAL_MS,
              show_default=True, help="Delay between sync cycles.")
@click.option("--scenario", "script_path", default=None,
              help="JSON list of timed edit steps; apply them, sync until "
                   "acknowledged, print the final text, and exit.")
@click.option("--json", "as_json", is_flag=True,
              help="Emit a JSON summary instead of plain text.")
def client(bind: str, doc_id: str, user: str, cadence_ms: int,
           script_path: str | None, as_json: bool) -> None:
    """Drive a desktop editing session over HTTP.

    Each step in the script is ``{"at_ms": N, ...}`` plus one edit form:
    ``"set"`` (replace everything), ``"insert"`` (text at a position), or
    ``"delete"`` (remove a span) — the same vocabulary scenario files use
    for desktop EDIT steps.  Without a script the client keeps syncing at
    the configured cadence, echoing the text whenever it changes, until
    interrupted.
    """
    import httpx

    base = f"http://{bind}"
    steps = _load_script(script_path) if script_path else None
    http = httpx.Client(timeout=10.0)

    def send(payload):
        response = http.post(f"{base}/docs/{doc_id}/sync",
                             json=encode_payload(payload))
        response.raise_for_status()
        return decode_payload(response.json())

    desk = DesktopClient(user, send)
    started = time.monotonic()
    cycles = 0
    failures = 0
    last_echoed: str | None = None
    try:
        while True:
            elapsed_ms = (time.monotonic() - started) * 1000
            while steps and int(steps[0].get("at_ms", 0)) <= elapsed_ms:
                step = dict(steps.pop(0))
                step.pop("at_ms", None)
                try:
                    desk.edit(apply_edit_args(desk.text, step))
                except ScenarioParseError as exc:
                    raise click.UsageError(str(exc))
            try:
                status = desk.sync()
            except httpx.HTTPError as exc:
                failures += 1
                if failures >= _MAX_TRANSPORT_FAILURES:
                    _fail(f"server unreachable after {failures} "
                          f"attempts: {exc}")
            except ValueError as exc:
                _fail(f"malformed response from server: {exc}")
            else:
                cycles += 1
                failures = 0
                if (steps is not None and not steps
                        and not desk.session.outbound
                        and status is not None):
                    break
                if steps is None and not as_json and desk.text != last_echoed:
                    last_echoed = desk.text
                    click.echo(desk.text)
            time.sleep(cadence_ms / 1000)
    except KeyboardInterrupt:
        pass
    finally:
        http.close()
    if as_json:
        click.echo(json.dumps({
            "doc_id": doc_id,
            "user": user,
            "cycles": cycles,
            "resets": desk.resets,
            "text": desk.text,
            "sha256": _sha256(desk.text),
        }, ensure_ascii=False))
    elif steps is not None:
        click.echo(desk.text)


# ---------------------------------------------------------------------------
# simulate


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Scenario file to run.")
@click.option("--seed", default=0, show_default=True,
              help="Fault-schedule seed.")
@click.option("--loss", default=0.0, show_default=True,
              help="Frame loss probability.")
@click.option("--dup", default=0.0, show_default=True,
              help="Frame duplication probability.")
@click.option("--reorder", default=0.0, show_default=True,
              help="Frame reordering probability.")
@click.option("--latency-min", default=10, show_default=True,
              help="Minimum frame latency in virtual ms.")
@click.option("--latency-max", default=50, show_default=True,
              help="Maximum frame latency in virtual ms.")
@click.option("--cadence-ms", default=None, type=int,
              help="Override the scenario's desktop sync cadence.")
@click.option("--json", "as_json", is_flag=True,
              help="Print the full transcript as JSON.")
def simulate(scenario_path: str, seed: int, loss: float, dup: float,
             reorder: float, latency_min: int, latency_max: int,
             cadence_ms: int | None, as_json: bool) -> None:
    """Run a scripted scenario over a faulty in-memory channel.

    Exits 0 when every actor converged to the server text and the network
    went quiet, 1 otherwise.
    """
    try:
        scenario = load_scenario(scenario_path)
    except ScenarioParseError as exc:
        click.echo(f"scenario error: {exc}", err=True)
        sys.exit(2)
    if cadence_ms is not None:
        scenario.cadence_ms = cadence_ms
    try:
        profile = FaultProfile(
            loss_prob=loss, dup_prob=dup, reorder_prob=reorder,
            latency_ms=(latency_min, latency_max), seed=seed,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))
    transcript = run_scenario(scenario, profile)
    if as_json:
        click.echo(json.dumps(transcript.to_json(), ensure_ascii=False))
    else:
        click.echo(f"scenario: {scenario_path}")
        click.echo("result: " + ("converged" if transcript.converged
                                 else "DID NOT CONVERGE"))
        if transcript.convergence_ms is not None:
            click.echo(f"convergence: {transcript.convergence_ms} virtual ms")
        click.echo(f"server text: {len(transcript.server_text)} chars, "
                   f"sha256 {_sha256(transcript.server_text)[:12]}")
        for actor, text in sorted(transcript.final_texts.items()):
            verdict = "match" if text == transcript.server_text else "DIFFERS"
            click.echo(f"  {actor}: {verdict}")
        for key, value in sorted(transcript.metrics.items()):
            click.echo(f"metric {key}: {value}")
    sys.exit(0 if transcript.converged and not transcript.non_quiescent else 1)


# ---------------------------------------------------------------------------
# replay


@main.command()
@click.option("--store", "store_path", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Store directory to audit.")
@click.option("--doc", "doc_id", required=True,
              help="Document id to replay.")
@click.option("--json", "as_json", is_flag=True,
              help="Emit the rebuilt state as JSON.")
def replay(store_path: str, doc_id: str, as_json: bool) -> None:
    """Rebuild a document from its command log and audit the snapshot.

    Replays every logged command from the creation baseline and compares
    the result against the stored snapshot; prints DIVERGED and exits 1
    when they disagree.
    """
    try:
        store = DocumentStore(store_path)
        rebuilt = store.replay(doc_id)
        snapshot = store.load(doc_id)
    except StoreError as exc:
        _fail(f"{type(exc).__name__}: {exc}")
    rebuilt_locks = [lock_to_json(lock) for lock in rebuilt.locks]
    matches = (rebuilt.text == snapshot.text
               and rebuilt_locks == [lock_to_json(k) for k in snapshot.locks])
    if as_json:
        click.echo(json.dumps({
            "doc_id": doc_id,
            "diverged": not matches,
            "revision": rebuilt.revision,
            "text": rebuilt.text,
            "sha256": _sha256(rebuilt.text),
            "locks": rebuilt_locks,
        }, ensure_ascii=False))
    else:
        click.echo(rebuilt.text)
        if rebuilt_locks:
            click.echo("-- locks --")
            for entry in rebuilt_locks:
                click.echo(f"{entry['id']}  [{entry['start']},{entry['end']})"
                           f"  {entry['state']}  owner={entry['owner']}"
                           f"  {entry['description']}")
        if not matches:
            click.echo("DIVERGED")
    if not matches:
        sys.exit(1)


# ---------------------------------------------------------------------------
# templates


@main.command()
@click.option("--json", "as_json", is_flag=True,
              help="Emit the template list as JSON.")
def templates(as_json: bool) -> None:
    """List the bundled report templates and their section headings."""
    if as_json:
        click.echo(json.dumps([
            {
                "template_id": template.template_id,
                "title": template.title,
                "sections": [heading for heading, _ in template.sections],
            }
            for template in TEMPLATES.values()
        ], ensure_ascii=False))
    else:
        for template in TEMPLATES.values():
            click.echo(f"{template.template_id}: {template.title} "
                       f"({len(template.sections)} sections)")
            for heading, _ in template.sections:
                click.echo(f"  - {heading}")


if __name__ == "__main__":
    main()
