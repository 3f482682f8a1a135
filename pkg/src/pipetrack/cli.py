"""Command-line entry point: simulate, fit, eval, replay, serve.

Every flag can also be supplied through the environment with the
PIPETRACK_ prefix (scoped per subcommand, e.g. PIPETRACK_SIMULATE_SEED).
"""

from __future__ import annotations

import json
import socket
import sys
from pathlib import Path

import click

from pipetrack import channel
from pipetrack.diversity import TECHNIQUES
from pipetrack.evaluate import PipelineConfig, evaluate, write_report
from pipetrack.ingest import ReplayError, SampleLog, replay as replay_samples
from pipetrack.sim import (
    EvaluationError,
    ScenarioError,
    load_scenario,
    read_truth,
    run,
    write_samples,
    write_truth,
)


@click.group(context_settings={"auto_envvar_prefix": "PIPETRACK"})
def main():
    """RSS tracking toolkit: simulate a workshop, fit channel models,
    score pipelines, replay logs, and run the live tracking service."""


@main.command()
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Scenario JSON file.")
@click.option("--duration", type=float, required=True, help="Simulated seconds.")
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", "out_dir", required=True,
              type=click.Path(file_okay=False, path_type=Path),
              help="Output directory for samples.jsonl and truth.jsonl.")
@click.option("--epoch-ms", type=int, default=None, help="Override the epoch length.")
@click.option("--ranging-csv", is_flag=True,
              help="Also write ranging.csv (true reader distance vs rss), "
                   "ready for the fit command.")
def simulate(scenario_path: Path, duration: float, seed, out_dir: Path, epoch_ms,
             ranging_csv: bool):
    """Generate sample and ground-truth streams for a scenario."""
    scenario = load_scenario(scenario_path)
    if seed is not None:
        scenario.seed = seed
    if epoch_ms is not None:
        scenario.epoch_ms = epoch_ms
    try:
        result = run(scenario, int(duration * 1000))
    except ScenarioError as exc:
        for problem in exc.problems:
            click.echo(f"scenario error: {problem}", err=True)
        raise SystemExit(1)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_samples = write_samples(result.samples, out_dir / "samples.jsonl")
    n_truth = write_truth(result.truth, out_dir / "truth.jsonl")
    if ranging_csv:
        import math

        from pipetrack.channel import RangingSample, save_ranging_csv

        centroids = {}
        for arr in scenario.floor_map.arrays:
            cx, cy = arr.centroid()
            cz = sum(a[2] for a in arr.antennas) / arr.antenna_count
            centroids[arr.reader_id] = (cx, cy, cz)
        truth_at = {(t.tag_id, t.t): (t.x, t.y) for t in result.truth}
        rows = []
        for s in result.samples:
            cx, cy, cz = centroids[s.reader_id]
            x, y = truth_at[(s.tag_id, s.t)]
            d = math.sqrt((x - cx) ** 2 + (y - cy) ** 2 + cz * cz)
            rows.append(RangingSample(d, s.rss))
        save_ranging_csv(rows, out_dir / "ranging.csv")
        click.echo(f"ranging:      {len(rows)} rows")
    click.echo(f"scenario:     {scenario.name}")
    click.echo(f"tags:         {len(scenario.tags)}")
    click.echo(f"epochs:       {result.epochs}")
    click.echo(f"samples:      {n_samples}")
    click.echo(f"truth:        {n_truth}")
    click.echo(f"dropout rate: {result.dropout_rate:.3f}")


@main.command()
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="CSV of distance_m,rss_dbm pairs.")
@click.option("--d0", type=float, default=1.0, show_default=True,
              help="Reference distance in meters.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path),
              default=None, help="Where to write the fitted model JSON.")
def fit(samples_path: Path, d0: float, out_path):
    """Fit the path-loss model to ranging samples."""
    samples = channel.load_ranging_csv(samples_path)
    try:
        model = channel.fit_model(samples, d0=d0)
    except channel.InsufficientDataError as exc:
        click.echo(f"fit error: {exc}", err=True)
        raise SystemExit(1)
    mse = channel.residual_mse(model, samples)
    click.echo(f"n:        {model.n:.4f}")
    click.echo(f"rss_d0:   {model.rss_d0:.4f} dBm")
    click.echo(f"sigma:    {model.sigma:.4f} dB")
    click.echo(f"mse:      {mse:.4f} dB^2")
    if out_path is not None:
        channel.save_model(model, out_path)
        click.echo(f"model written to {out_path}")


@main.command("eval")
@click.option("--scenario", "scenario_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Scenario JSON (defines geometry and per-class models).")
@click.option("--samples", "samples_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--truth", "truth_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--model", "model_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Use this fitted model for ranging instead of the scenario's.")
@click.option("--technique", "techniques", multiple=True,
              type=click.Choice(TECHNIQUES), help="Repeatable; default all.")
@click.option("--antennas", default=None,
              help="Comma-separated antenna counts, e.g. 2,4.")
@click.option("--filtered", type=click.Choice(["both", "on", "off"]),
              default="both", show_default=True)
@click.option("--max-distance", type=float, default=None,
              help="Score only epochs with true distance under this bound.")
@click.option("--out", "out_path", default=None,
              type=click.Path(dir_okay=False, path_type=Path),
              help="Write the CSV error table here.")
def eval_cmd(scenario_path, samples_path, truth_path, model_path, techniques,
             antennas, filtered, max_distance, out_path):
    """Score pipeline configurations against simulator ground truth."""
    scenario = load_scenario(scenario_path)
    sample_log = SampleLog(samples_path)
    samples = list(sample_log.scan())
    truth = read_truth(truth_path)
    model = channel.load_model(model_path) if model_path else None

    max_ant = max((a.antenna_count for a in scenario.floor_map.arrays), default=1)
    techs = list(techniques) or list(TECHNIQUES)
    if antennas:
        try:
            counts = [int(x) for x in antennas.split(",")]
        except ValueError:
            raise click.UsageError(f"bad --antennas value: {antennas!r}")
    else:
        counts = [k for k in (2, 3, 4) if k <= max_ant] or [max_ant]
    flags = {"both": (False, True), "on": (True,), "off": (False,)}[filtered]
    matrix = [
        PipelineConfig(technique=t, antennas=k, filtered=f)
        for t in techs for k in counts for f in flags
    ]

    try:
        rows = evaluate(samples, truth, scenario, pipelines=matrix,
                        model_override=model, max_true_distance=max_distance)
    except EvaluationError as exc:
        click.echo(f"eval error: {exc}", err=True)
        raise SystemExit(1)

    click.echo(f"{'technique':<10}{'antennas':>9}{'filtered':>9}{'mean_err_m':>12}"
               f"{'pos_err_m':>11}{'n':>8}")
    for r in rows:
        click.echo(
            f"{r.technique:<10}{r.antennas:>9}{'yes' if r.filtered else 'no':>9}"
            f"{r.mean_distance_error_m:>12.4f}{r.mean_position_error_m:>11.4f}"
            f"{r.distance_samples:>8}"
        )
    if out_path is not None:
        write_report(rows, out_path)
        click.echo(f"table written to {out_path}")


@main.command()
@click.option("--log", "log_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Sample log to replay.")
@click.option("--speed", type=float, default=1.0, show_default=True,
              help="Pace multiplier; 'inf' streams as fast as possible.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=9100, show_default=True,
              help="TCP sample-feed port of a running service.")
def replay(log_path: Path, speed: float, host: str, port: int):
    """Stream a recorded log into a running service's TCP feed."""
    sample_log = SampleLog(log_path)
    try:
        stream = replay_samples(sample_log, speed=speed)
        with socket.create_connection((host, port), timeout=10) as sock:
            sent = 0
            for sample in stream:
                sock.sendall((sample.to_line() + "\n").encode("utf-8"))
                sent += 1
    except ReplayError as exc:
        click.echo(f"replay error: {exc}", err=True)
        raise SystemExit(1)
    except OSError as exc:
        click.echo(f"replay error: cannot reach {host}:{port}: {exc}", err=True)
        raise SystemExit(1)
    click.echo(f"replayed {sent} samples to {host}:{port}")


@main.command()
@click.option("--log", "log_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Sample log to compact in place.")
@click.option("--keep-since", type=int, required=True,
              help="Drop records with timestamps before this (ms).")
def compact(log_path: Path, keep_since: int):
    """Rewrite a sample log keeping only records from --keep-since on.

    Malformed lines are dropped as part of the rewrite."""
    log = SampleLog(log_path)
    kept = [s for s in log.scan() if s.t >= keep_since]
    tmp = log_path.with_suffix(log_path.suffix + ".compact")
    with tmp.open("w", encoding="utf-8") as fh:
        for s in kept:
            fh.write(s.to_line() + "\n")
    tmp.replace(log_path)
    click.echo(f"kept {len(kept)} records (dropped {log.skipped} malformed)")


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Service configuration JSON.")
@click.option("--port", type=int, default=None, help="Override the HTTP port.")
@click.option("--technique", type=click.Choice(TECHNIQUES), default=None)
@click.option("--epoch-ms", type=int, default=None)
@click.option("--model", "model_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--ui", "ui_dir", default=None,
              type=click.Path(file_okay=False, path_type=Path),
              help="Static dashboard directory to mount at /ui.")
def serve(config_path: Path, port, technique, epoch_ms, model_path, ui_dir):
    """Run the tracking service until interrupted."""
    import uvicorn

    from pipetrack.service.app import create_app
    from pipetrack.service.config import ConfigError, load_config

    try:
        cfg = load_config(
            config_path,
            port=port,
            technique=technique,
            epoch_ms=epoch_ms,
            model=channel.load_model(model_path) if model_path else None,
        )
        app = create_app(cfg, static_dir=ui_dir or _default_ui_dir())
    except (ConfigError, ValueError) as exc:
        click.echo(f"startup error: {exc}", err=True)
        raise SystemExit(1)
    click.echo(f"pipetrack service on http://0.0.0.0:{cfg.port} "
               f"(sample feed tcp:{cfg.tcp_port or 'disabled'})")
    try:
        uvicorn.run(app, host="0.0.0.0", port=cfg.port, log_level="warning")
    except (OSError, SystemExit) as exc:
        click.echo(f"startup error: {exc}", err=True)
        raise SystemExit(1)


def _default_ui_dir():
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


if __name__ == "__main__":
    main()
