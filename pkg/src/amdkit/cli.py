"""Command-line front end: classify, eval, bench, prep, serve."""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys

from . import bench as bench_mod
from . import evaluate as eval_mod
from .audio_io import read_wav, write_wav
from .engine import DetectionEngine
from .errors import AmdError
from .frontend import PcmChunk, normalize_chunk
from .gateway import GatewayServer
from .session import CACHED, STATEFUL, FrameResult, SessionParams, Verdict
from .silence import SilenceConfig

CHUNK_MS = 100


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="amdkit",
                                     description="Streaming human/machine call classification.")
    sub = parser.add_subparsers(dest="command", required=True)

    classify = sub.add_parser("classify", help="classify one audio file")
    classify.add_argument("--input", required=True, help="WAV file (8 or 16 kHz mono)")
    classify.add_argument("--weights", required=True, help="weight bundle (.amdw)")
    classify.add_argument("--timeout-ms", type=int, default=SessionParams().timeout_ms)
    classify.add_argument("--confidence", type=float,
                          default=SessionParams().confidence_threshold)
    classify.add_argument("--min-detection-ms", type=int,
                          default=SessionParams().min_detection_time_ms)
    classify.add_argument("--silence-db", type=float,
                          default=SilenceConfig().threshold_dbfs,
                          help="frames quieter than this are skipped")

    ev = sub.add_parser("eval", help="per-frame evaluation over a labelled dataset")
    ev.add_argument("--dataset", required=True, help="directory holding the audio files")
    ev.add_argument("--manifest", required=True, help="CSV of path,label (HUMAN|MACHINE)")
    ev.add_argument("--weights", required=True)
    ev.add_argument("--silence", action="store_true",
                    help="exclude silent frames from the matrix")
    ev.add_argument("--silence-db", type=float, default=SilenceConfig().threshold_dbfs)

    bench = sub.add_parser("bench", help="per-component latency benchmark")
    bench.add_argument("--weights", required=True)
    bench.add_argument("--frames", type=int, default=200)
    bench.add_argument("--out", required=True, help="CSV output path")

    prep = sub.add_parser("prep", help="pad or trim WAV files to a fixed duration")
    prep.add_argument("--in", dest="in_dir", required=True)
    prep.add_argument("--out", dest="out_dir", required=True)
    prep.add_argument("--target-ms", type=int, default=eval_mod.DEFAULT_TARGET_MS)

    serve = sub.add_parser("serve", help="run the multi-session gateway")
    serve.add_argument("--listen", default="127.0.0.1:7350", help="host:port")
    serve.add_argument("--weights", required=True)
    serve.add_argument("--mode", choices=[STATEFUL, CACHED], default=CACHED)
    return parser


def _frame_line(result: FrameResult) -> str:
    return json.dumps({
        "type": "frame",
        "frame_index": result.frame_index,
        "end_ms": result.end_ms,
        "probability": result.probability,
        "confidence": result.confidence,
        "label": result.label,
        "silent": result.silent,
    })


def _verdict_line(verdict: Verdict) -> str:
    return json.dumps({
        "type": "verdict",
        "label": verdict.label,
        "confidence": verdict.confidence,
        "elapsed_ms": verdict.elapsed_ms,
        "reason": verdict.reason,
        "frames_processed": verdict.frames_processed,
        "frames_skipped_silent": verdict.frames_skipped_silent,
    })


def _cmd_classify(args: argparse.Namespace) -> int:
    engine = DetectionEngine.from_bundle(args.weights)
    params = SessionParams(
        timeout_ms=args.timeout_ms,
        confidence_threshold=args.confidence,
        min_detection_time_ms=args.min_detection_ms,
        silence=SilenceConfig(threshold_dbfs=args.silence_db),
    )
    session = engine.new_session(params)
    chunk = read_wav(args.input)
    stride = chunk.sample_rate_hz * CHUNK_MS // 1000

    verdict = None
    for start in range(0, chunk.samples.shape[0], stride):
        piece = PcmChunk(samples=chunk.samples[start:start + stride],
                         sample_rate_hz=chunk.sample_rate_hz)
        results, verdict = session.push_audio(piece)
        for result in results:
            print(_frame_line(result))
        if verdict is not None:
            break
    if verdict is None:
        results, verdict = session.end_stream()
        for result in results:
            print(_frame_line(result))
    print(_verdict_line(verdict))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    engine = DetectionEngine.from_bundle(args.weights)
    entries = eval_mod.load_manifest(args.manifest)
    report = eval_mod.evaluate(
        engine, entries, base_dir=args.dataset,
        silence_enabled=args.silence,
        silence=SilenceConfig(threshold_dbfs=args.silence_db))
    matrix = report.matrix
    print(json.dumps({
        "files": report.files,
        "frames_scored": report.frames_scored,
        "frames_silent": report.frames_silent,
        "matrix": {"tp": matrix.tp, "fp": matrix.fp, "fn": matrix.fn, "tn": matrix.tn,
                   "total": matrix.total},
        "metrics_percent": eval_mod.metrics_percent(matrix),
    }, indent=2))
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    engine = DetectionEngine.from_bundle(args.weights)
    samples = bench_mod.bench(engine, args.frames)
    bench_mod.write_csv(samples, args.out)
    for component, mean_us in sorted(bench_mod.summarize(samples).items()):
        print(f"{component}: trimmed mean {mean_us / 1000:.3f} ms "
              f"over {args.frames} frames")
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_prep(args: argparse.Namespace) -> int:
    os.makedirs(args.out_dir, exist_ok=True)
    converted = 0
    for name in sorted(os.listdir(args.in_dir)):
        if not name.lower().endswith(".wav"):
            continue
        chunk = read_wav(os.path.join(args.in_dir, name))
        samples = eval_mod.pad_or_trim(normalize_chunk(chunk), args.target_ms)
        write_wav(os.path.join(args.out_dir, name), samples)
        converted += 1
    print(f"wrote {converted} files to {args.out_dir}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    host, _, port_text = args.listen.rpartition(":")
    if not host or not port_text.isdigit():
        raise AmdError(f"--listen must look like host:port, got {args.listen!r}")
    engine = DetectionEngine.from_bundle(args.weights)

    async def run() -> None:
        server = GatewayServer(engine, host=host, port=int(port_text),
                               default_mode=args.mode)
        await server.start()
        print(f"listening on {host}:{server.bound_port} (mode={args.mode})",
              file=sys.stderr)
        await server.serve_forever()

    try:
        asyncio.run(run())
    except KeyboardInterrupt:
        pass
    return 0


_COMMANDS = {
    "classify": _cmd_classify,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "prep": _cmd_prep,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except AmdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
