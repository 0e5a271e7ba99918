"""Command-line entry point.

One binary covers the service and the lab bench:

    itenet gateway serve|user-add|whitelist-add
    itenet node spawn|reset
    itenet sim run
    itenet bench pnp|response
    itenet fit-gev

Exit codes: 0 success, 1 usage error, 2 runtime error.  Every flag can also
be set through an ``ITENET_*`` environment variable or a ``--config`` JSON
overlay (flags take precedence over the file, the file over built-ins).
Benchmark output under ``--json`` is deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Any, Optional

import click

from . import bench as bench_mod
from . import netsim as netsim_mod
from .gateway import ADMISSION_MODES, DEFAULT_PORT, GatewayConfig, GatewayCore, IteRepository
from .httpd import GatewayHttpServer, loopback_node_client
from .ite import NodeIdentifier, NvmImage, decode_nvm, factory_reset, fresh_nvm, render_node_id
from .node import NodeRuntime, NodeState, REALTIME_TIMING
from .transducers import fixture_ite_dir

CONTEXT_SETTINGS = {"auto_envvar_prefix": "ITENET", "help_option_names": ["-h", "--help"]}


def _emit(obj: dict, as_json: bool, human: str) -> None:
    if as_json:
        click.echo(bench_mod.report_json(obj), nl=False)
    else:
        click.echo(human)


def resolve_scenario(
    name: str, loss: Optional[float] = None, load: Optional[float] = None
) -> netsim_mod.ScenarioConfig:
    """A scenario flag accepts a bundled label (A–D), an AP preset name
    (linksys-like, smc-like), the literal ``zero``, or a JSON file path."""
    path = Path(name)
    if path.is_file():
        scenario = netsim_mod.load_scenario(path)
    elif name == "zero":
        scenario = netsim_mod.ZERO_DELAY_SCENARIO
    else:
        try:
            scenario = netsim_mod.load_scenario_preset(name)
        except netsim_mod.SimError:
            try:
                scenario = netsim_mod.scenario_for_ap(name)
            except netsim_mod.SimError:
                raise click.UsageError(
                    f"unknown scenario {name!r}: not a bundled label, AP preset, or file"
                )
    return scenario.with_overrides(loss_probability=loss, load=load)


@click.group(context_settings=CONTEXT_SETTINGS)
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="JSON file with per-subcommand flag defaults.",
)
@click.pass_context
def cli(ctx: click.Context, config: Optional[Path]) -> None:
    """Plug-and-play transducer network: gateway, nodes, simulator, benchmarks."""
    if config is not None:
        try:
            ctx.default_map = json.loads(config.read_text("utf-8"))
        except ValueError as err:
            raise click.UsageError(f"--config {config}: invalid JSON ({err})")


# -- gateway ---------------------------------------------------------------------


@cli.group()
def gateway() -> None:
    """Run and administer the home-automation gateway."""


def _store_core(store: Path, mode: Optional[str] = None) -> GatewayCore:
    config = GatewayConfig(mode=mode)
    return GatewayCore(
        config,
        IteRepository(local_dir=fixture_ite_dir()),
        clock=lambda: time.time() * 1000.0,
        store_path=store,
    )


@gateway.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=DEFAULT_PORT, show_default=True, type=int)
@click.option("--store", type=click.Path(path_type=Path), default=Path("itenet_store.json"),
              show_default=True, help="Registry/policy persistence file.")
@click.option("--sample-log", type=click.Path(path_type=Path),
              default=Path("itenet_samples.jsonl"), show_default=True)
@click.option("--ite-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="ITE repository directory (default: bundled fixtures).")
@click.option("--remote-ites", default=None, help="Remote ITE repository base URL.")
@click.option("--mode", type=click.Choice(ADMISSION_MODES), default=None,
              help="Admission mode (default: stored policy, else automatic).")
@click.option("--ssid", default="home-net", show_default=True)
@click.option("--password", default="home-pass", show_default=True)
@click.option("--gateway-ip", default="127.0.0.1", show_default=True)
@click.option("--ui-root", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Static control-panel assets served under /ui.")
@click.option("--run-for-s", default=0.0, show_default=True,
              help="Stop after this many seconds (0 = serve until interrupted).")
def serve(
    host: str,
    port: int,
    store: Path,
    sample_log: Path,
    ite_dir: Optional[Path],
    remote_ites: Optional[str],
    mode: Optional[str],
    ssid: str,
    password: str,
    gateway_ip: str,
    ui_root: Optional[Path],
    run_for_s: float,
) -> None:
    """Serve the REST API and node-facing endpoints."""
    config = GatewayConfig(ssid=ssid, password=password, gateway_ip=gateway_ip, mode=mode)
    repository = IteRepository(
        local_dir=ite_dir if ite_dir is not None else fixture_ite_dir(),
        remote_base=remote_ites,
    )
    core = GatewayCore(
        config,
        repository,
        clock=lambda: time.time() * 1000.0,
        store_path=store,
        sample_log_path=sample_log,
        node_client=loopback_node_client,
    )
    server = GatewayHttpServer(core, host=host, port=port, ui_root=ui_root).start()
    click.echo(
        f"gateway serving on {server.host}:{server.port} "
        f"(mode={core.mode}, store={store})"
    )
    try:
        if run_for_s > 0:
            time.sleep(run_for_s)
        else:
            while True:
                time.sleep(3600.0)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()


@gateway.command("user-add")
@click.option("--store", type=click.Path(path_type=Path), default=Path("itenet_store.json"),
              show_default=True)
@click.option("--password", prompt=True, hide_input=True, confirmation_prompt=False,
              help="Password for the new API user (prompted if omitted).")
@click.argument("name")
def user_add(store: Path, password: str, name: str) -> None:
    """Create or replace an API user for HTTP Basic authentication."""
    core = _store_core(store)
    core.add_user(name, password)
    click.echo(f"user {name!r} saved to {store}")


@gateway.command("whitelist-add")
@click.option("--store", type=click.Path(path_type=Path), default=Path("itenet_store.json"),
              show_default=True)
@click.argument("node_id")
def whitelist_add(store: Path, node_id: str) -> None:
    """Pre-approve a dotted node identifier (whitelist admission)."""
    core = _store_core(store)
    core.add_to_whitelist(node_id)
    click.echo(f"identifier {node_id} whitelisted in {store}")


# -- node -------------------------------------------------------------------------


@cli.group()
def node() -> None:
    """Spawn and reset emulated transducer nodes."""


@node.command()
@click.option("--type", "node_type", type=int, default=None, help="ITE type number.")
@click.option("--version", type=int, default=None)
@click.option("--serial", type=int, default=None)
@click.option("--nvm", type=click.Path(path_type=Path), default=None,
              help="NVM image file (created if missing).")
@click.option("--fresh", is_flag=True, help="Start from a factory-fresh image.")
@click.option("--gateway-host", default="127.0.0.1", show_default=True)
@click.option("--gateway-port", default=DEFAULT_PORT, show_default=True, type=int)
@click.option("--wait-s", default=30.0, show_default=True,
              help="Give up if Listen is not reached in this time (0 = don't wait).")
@click.option("--run-for-s", default=0.0, show_default=True,
              help="Keep serving this long after the wait (0 = exit immediately).")
@click.option("--json", "as_json", is_flag=True)
def spawn(
    node_type: Optional[int],
    version: Optional[int],
    serial: Optional[int],
    nvm: Optional[Path],
    fresh: bool,
    gateway_host: str,
    gateway_port: int,
    wait_s: float,
    run_for_s: float,
    as_json: bool,
) -> None:
    """Boot one node against a live gateway over loopback."""
    image: Optional[NvmImage] = None
    if nvm is not None and nvm.exists() and not fresh:
        image = NvmImage.from_bytes(nvm.read_bytes())
        identifier, _, _ = decode_nvm(image)
    else:
        if node_type is None or version is None or serial is None:
            raise click.UsageError("--type/--version/--serial are required without an existing --nvm")
        identifier = NodeIdentifier(node_type, serial, version)
        image = fresh_nvm(identifier)
        if nvm is not None:
            nvm.write_bytes(image.to_bytes())
    from .transducers import load_fixture_ite

    try:
        ite = load_fixture_ite(identifier.node_type, identifier.version)
    except FileNotFoundError:
        raise click.UsageError(
            f"no bundled ITE for type {identifier.node_type} version {identifier.version}"
        )
    clock = netsim_mod.RealTimeClock()
    runtime = NodeRuntime(
        image, ite, clock=clock.now, timing=REALTIME_TIMING,
        run_id=f"node-{render_node_id(identifier)}",
    )
    driver = netsim_mod.RealtimeNodeDriver(runtime, gateway_host, gateway_port, nvm_path=nvm)
    driver.start()
    try:
        reached = True
        if wait_s > 0:
            reached = driver.wait_for_state(NodeState.LISTEN, wait_s)
        doc = {
            "node_id": render_node_id(identifier),
            "state": runtime.state.value if runtime.state else None,
            "listen_port": runtime.listen_port,
            "retries": runtime.retry_count,
        }
        _emit(doc, as_json,
              f"node {doc['node_id']} state={doc['state']} port={doc['listen_port']}")
        if wait_s > 0 and not reached:
            raise RuntimeError(f"node never reached Listen within {wait_s}s")
        if run_for_s > 0:
            time.sleep(run_for_s)
    finally:
        driver.stop()


@node.command()
@click.option("--nvm", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              required=True)
def reset(nvm: Path) -> None:
    """Factory-reset an NVM image: status flag and network config zeroed."""
    image = NvmImage.from_bytes(nvm.read_bytes())
    nvm.write_bytes(factory_reset(image).to_bytes())
    click.echo(f"{nvm}: status flag and configuration region cleared")


# -- simulator -----------------------------------------------------------------------


@cli.group()
def sim() -> None:
    """Deterministic virtual-network simulations."""


@sim.command("run")
@click.option("--scenario", default="A", show_default=True)
@click.option("--nodes", default=1, show_default=True, type=int)
@click.option("--types", "types_csv", default="6", show_default=True,
              help="Comma-separated ITE type numbers, assigned to nodes round-robin.")
@click.option("--seed", default=0, show_default=True)
@click.option("--loss", type=float, default=None, help="Override scenario loss probability.")
@click.option("--load", type=float, default=None, help="Override AP load factor.")
@click.option("--cap-ms", default=120000.0, show_default=True)
@click.option("--extra-ms", default=0.0, show_default=True,
              help="Keep simulating this long after all nodes listen.")
@click.option("--poll/--no-poll", default=False, show_default=True,
              help="Run the gateway sample poller during the simulation.")
@click.option("--trace-out", type=click.Path(path_type=Path), default=None,
              help="Write the event trace as line-delimited JSON.")
@click.option("--json", "as_json", is_flag=True)
def sim_run(
    scenario: str,
    nodes: int,
    types_csv: str,
    seed: str,
    loss: Optional[float],
    load: Optional[float],
    cap_ms: float,
    extra_ms: float,
    poll: bool,
    trace_out: Optional[Path],
    as_json: bool,
) -> None:
    """Boot N fresh nodes through onboarding and report the outcome."""
    cfg = resolve_scenario(scenario, loss, load)
    try:
        node_types = [int(part) for part in types_csv.split(",") if part.strip()]
    except ValueError:
        raise click.UsageError(f"--types must be comma-separated integers, got {types_csv!r}")
    if not node_types:
        raise click.UsageError("--types must name at least one ITE type")
    result = netsim_mod.run_scenario(
        cfg, node_count=nodes, node_types=node_types, seed=seed, cap_ms=cap_ms,
        trace_enabled=trace_out is not None, enable_polling=poll, extra_run_ms=extra_ms,
    )
    if trace_out is not None:
        trace_out.write_text(result.trace.to_jsonl(), encoding="utf-8")
    doc = {
        "version": bench_mod.REPORT_VERSION,
        "kind": "sim_run",
        "scenario": cfg.label,
        "nodes": nodes,
        "seed": str(seed),
        "all_listening": result.all_listening,
        "node_totals_ms": result.node_totals_ms,
        "registered": result.registered_count,
        "bytes_sent": result.bytes_sent,
        "sends": result.sends,
        "delivers": result.delivers,
        "drops": result.drops,
        "samples_collected": result.samples_collected,
    }
    _emit(
        doc, as_json,
        f"scenario {cfg.label}: {result.registered_count}/{nodes} registered, "
        f"all_listening={result.all_listening}, "
        f"totals_ms={[round(t, 1) for t in result.node_totals_ms]}",
    )


# -- benchmarks -------------------------------------------------------------------------


@cli.group("bench")
def bench_group() -> None:
    """Timing and reliability benchmarks (virtual time)."""


def _write_report(
    obj: dict, tsv: str, report_dir: Optional[Path], stem: str, figures: str
) -> list[Path]:
    if report_dir is None:
        return []
    from . import report as report_mod

    report_dir.mkdir(parents=True, exist_ok=True)
    written = [report_dir / f"{stem}.json", report_dir / f"{stem}.tsv"]
    written[0].write_text(bench_mod.report_json(obj), encoding="utf-8")
    written[1].write_text(tsv, encoding="utf-8")
    if figures == "pnp":
        written += report_mod.render_pnp_figures(obj, report_dir, stem)
    else:
        written += report_mod.render_response_figures(obj, report_dir, stem)
    return written


@bench_group.command("pnp")
@click.option("--scenario", default="A", show_default=True)
@click.option("--runs", default=20, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--loss", type=float, default=None)
@click.option("--load", type=float, default=None)
@click.option("--cap-ms", default=60000.0, show_default=True)
@click.option("--report-dir", type=click.Path(path_type=Path), default=None,
              help="Write JSON + TSV + figures here.")
@click.option("--json", "as_json", is_flag=True)
def bench_pnp(
    scenario: str,
    runs: int,
    seed: str,
    loss: Optional[float],
    load: Optional[float],
    cap_ms: float,
    report_dir: Optional[Path],
    as_json: bool,
) -> None:
    """Plug-and-play onboarding timing study."""
    cfg = resolve_scenario(scenario, loss, load)
    summary = bench_mod.run_pnp_benchmark(cfg, runs=runs, seed=seed, cap_ms=cap_ms)
    obj = summary.to_obj()
    files = _write_report(obj, summary.to_tsv(), report_dir, f"pnp_{cfg.label}", "pnp")
    human = (
        f"scenario {cfg.label}: {summary.runs} runs ({summary.failed_runs} failed), "
        f"total mean {summary.total_mean_ms:.1f} ms "
        f"(min {summary.total_min_ms:.1f}, max {summary.total_max_ms:.1f}), "
        f"protocol-only mean {summary.protocol_mean_ms:.1f} ms"
    )
    if files:
        human += "\nwrote: " + ", ".join(str(f) for f in files)
    _emit(obj, as_json, human)


@bench_group.command("response")
@click.option("--scenario", default="A", show_default=True)
@click.option("--requests", default=1000, show_default=True, type=int)
@click.option("--gap-ms", default=25.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--timeout-ms", default=2000.0, show_default=True)
@click.option("--loss", type=float, default=None)
@click.option("--load", type=float, default=None)
@click.option("--no-fit", is_flag=True, help="Skip the GEV fit.")
@click.option("--report-dir", type=click.Path(path_type=Path), default=None)
@click.option("--json", "as_json", is_flag=True)
def bench_response(
    scenario: str,
    requests: int,
    gap_ms: float,
    seed: str,
    timeout_ms: float,
    loss: Optional[float],
    load: Optional[float],
    no_fit: bool,
    report_dir: Optional[Path],
    as_json: bool,
) -> None:
    """Paced GET /id response-time study against one node in Listen."""
    cfg = resolve_scenario(scenario, loss, load)
    report = bench_mod.run_response_benchmark(
        cfg, requests=requests, gap_ms=gap_ms, seed=seed,
        timeout_ms=timeout_ms, fit=not no_fit,
    )
    obj = report.to_obj()
    files = _write_report(obj, report.to_tsv(), report_dir, f"response_{cfg.label}", "response")
    mean = "n/a" if report.mean_ms is None else f"{report.mean_ms:.2f} ms"
    human = (
        f"scenario {cfg.label}: {report.success_count} ok / {report.failure_count} failed "
        f"(ratio {report.failure_ratio:.6f}), mean rtt {mean}"
    )
    if report.gev is not None:
        human += (
            f", GEV fit mu={report.gev.mu_ms:.2f} sigma={report.gev.sigma_ms:.2f} "
            f"k={report.gev.k:.3f}"
        )
    if files:
        human += "\nwrote: " + ", ".join(str(f) for f in files)
    _emit(obj, as_json, human)


@cli.command("fit-gev")
@click.option("--input", "input_path",
              type=click.Path(exists=True, dir_okay=False, path_type=Path), required=True,
              help="Text file with one sample (ms) per line.")
@click.option("--json", "as_json", is_flag=True)
def fit_gev_cmd(input_path: Path, as_json: bool) -> None:
    """Fit a GEV distribution to samples from a file."""
    samples = bench_mod.load_samples_file(input_path)
    params = bench_mod.fit_gev(samples)
    obj = {"version": bench_mod.REPORT_VERSION, "kind": "gev_fit", "n": len(samples),
           **params.to_obj()}
    _emit(obj, as_json,
          f"GEV fit over {len(samples)} samples: mu={params.mu_ms:.4f} ms, "
          f"sigma={params.sigma_ms:.4f} ms, k={params.k:.4f}")


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as err:
        return int(err.exit_code)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.UsageError as err:
        err.show()
        return 1
    except click.ClickException as err:
        err.show()
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as err:  # runtime failure
        click.echo(f"error: {err}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
