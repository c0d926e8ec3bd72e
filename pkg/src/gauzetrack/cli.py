"""Command-line entry point: simulate, replay, serve, bench.

Exit status contract:

  0  success (replay: reconciliation passed; bench: FPS target met)
  1  check failed (reconciliation failed, bench below target)
  2  bad command-line usage (argparse)
  3  input problem: missing file, malformed scenario/record/config
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
from pathlib import Path

from .bench import run_bench
from .config import ConfigInvalid, EngineConfig, load_engine_config
from .ledger import replay_events
from .protocol import Camera, InvalidField, MalformedRecord, read_stream, write_stream
from .replay import replay_frames
from .scenario import MalformedScenario, ground_truth, load_scenario
from .simulator import NoiseModel, load_noise_model, simulate

STREAM_FILES = {Camera.IN: "in.ndjson", Camera.OUT: "out.ndjson"}
TRUTH_FILE = "ground_truth.ndjson"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 3


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_INPUT_ERROR


def cmd_simulate(args) -> int:
    try:
        script = load_scenario(args.script)
        noise = load_noise_model(args.noise) if args.noise else NoiseModel.zero()
        result = simulate(script, noise, args.seed)
    except FileNotFoundError as e:
        return _fail(str(e))
    except (MalformedScenario, ConfigInvalid) as e:
        return _fail(str(e))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cam, name in STREAM_FILES.items():
        write_stream(out_dir / name, result.frames[cam], header=result.header[cam])
    with open(out_dir / TRUTH_FILE, "w", encoding="utf-8") as f:
        header = {"format": "gauze-truth", "version": 1, "seed": args.seed}
        f.write(json.dumps({"header": header}, sort_keys=True, separators=(",", ":")) + "\n")
        for row in result.truth.rows:
            f.write(
                json.dumps(
                    {
                        "at_ms": row.at_ms,
                        "total_in": row.total_in,
                        "total_out": row.total_out,
                        "onscreen_in": row.onscreen_in,
                        "onscreen_out": row.onscreen_out,
                        "in_play": row.in_play,
                    },
                    separators=(",", ":"),
                )
                + "\n"
            )
    final = result.truth.final
    print(
        f"simulated {len(result.frames[Camera.IN])} frames/camera at {script.fps} fps "
        f"(seed {args.seed}) -> {out_dir}"
    )
    print(
        f"expected: total_in={final.total_in} total_out={final.total_out} "
        f"in_play={final.in_play}"
    )
    return EXIT_OK


def cmd_replay(args) -> int:
    in_dir = Path(args.in_dir)
    try:
        cfg = load_engine_config(args.config) if args.config else EngineConfig()
        _, frames_in = read_stream(in_dir / STREAM_FILES[Camera.IN])
        _, frames_out = read_stream(in_dir / STREAM_FILES[Camera.OUT])
    except FileNotFoundError as e:
        return _fail(str(e))
    except (ConfigInvalid, MalformedRecord, InvalidField) as e:
        return _fail(str(e))

    outcome = replay_frames(frames_in, frames_out, cfg, speed=args.speed)
    ledger = outcome.engine.ledger
    report = outcome.report

    print(f"replayed {outcome.frames_processed} frames")
    print(
        f"final ledger: total_in={ledger.total_in} total_out={ledger.total_out} "
        f"in_play={ledger.in_play} onscreen_in={ledger.onscreen_in} "
        f"onscreen_out={ledger.onscreen_out}"
    )
    print(f"reconciliation: {'PASSED' if report.passed else 'FAILED'}")
    for finding in report.discrepancies:
        print(f"  discrepancy: {finding}")
    for note in report.notes:
        print(f"  note: {note}")

    with open(in_dir / "events.log", "w", encoding="utf-8") as f:
        for event in ledger.events:
            f.write(event.to_line() + "\n")
    with open(in_dir / "replay_result.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "frames_processed": outcome.frames_processed,
                "events": len(ledger.events),
                "reconciliation": report.to_dict(),
            },
            f,
            indent=2,
        )
    from .report import render_ledger_timeline

    render_ledger_timeline(ledger.events, in_dir / "ledger_timeline.png")
    print(f"wrote events.log, replay_result.json, ledger_timeline.png -> {in_dir}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_serve(args) -> int:
    from .service import SessionServer, SessionService

    try:
        cfg = load_engine_config(args.config) if args.config else None
    except (FileNotFoundError, ConfigInvalid) as e:
        return _fail(str(e))
    service = SessionService(args.data_dir, default_config=cfg)
    server = SessionServer(args.host, args.port, service)
    print(f"session service listening on {args.host}:{server.port}, data dir {args.data_dir}")

    def stop(signum, frame):
        server.shutdown()

    signal.signal(signal.SIGTERM, stop)
    signal.signal(signal.SIGINT, stop)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        service.close()
    return EXIT_OK


def cmd_bench(args) -> int:
    report = run_bench(
        duration_s=args.duration_s, streams=args.streams, fps_target=args.fps_target
    )
    for cam, stats in report.streams.items():
        print(
            f"{cam.value}: {stats.frames} frames in {stats.elapsed_s:.1f}s = "
            f"{stats.fps:.0f} FPS, latency p50 {stats.percentile_ms(50):.4f} ms, "
            f"p99 {stats.percentile_ms(99):.4f} ms"
        )
    print(f"target {args.fps_target} FPS per stream: {'PASSED' if report.passed else 'FAILED'}")
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "bench_report.json", "w", encoding="utf-8") as f:
            json.dump(report.to_dict(), f, indent=2)
        from .report import render_bench_latency

        render_bench_latency(report, out_dir / "bench_latency.png")
        print(f"wrote bench_report.json, bench_latency.png -> {out_dir}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gauzetrack",
        description="Surgical gauze count tracking: simulate, replay, serve, bench.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="compile a scenario into detection streams + ground truth")
    p.add_argument("--script", required=True, help="scenario file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise", help="noise model file (key = value); default: zero noise")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="run recorded streams through a local engine")
    p.add_argument("--in-dir", required=True, help="directory with in.ndjson / out.ndjson")
    p.add_argument("--speed", choices=["real", "max"], default="max")
    p.add_argument("--config", help="engine config file (key = value)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the session service until signaled")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--config", help="engine config file (key = value)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("bench", help="measure sustained per-stream throughput")
    p.add_argument("--streams", type=int, default=2)
    p.add_argument("--duration-s", type=float, default=10.0)
    p.add_argument("--fps-target", type=float, default=15.0)
    p.add_argument("--out-dir", help="write bench_report.json and latency figure here")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
