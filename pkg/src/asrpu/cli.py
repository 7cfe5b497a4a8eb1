"""Command-line entry points.

``asrpu`` decodes one utterance from a WAV file against a model, lexicon
and language model, simulating the accelerator and writing transcripts and
performance reports.  ``asrpu-gen`` writes ready-to-run asset bundles (the
reference workload or the planted-signal correctness workload).

Exit codes: 0 success, 2 bad input, 3 bad configuration, 4 simulation
failure.
"""

import argparse
import sys

from . import assets
from .errors import AsrpuError
from .runner import RunManifest, emit_report, run


def _build_parser():
    p = argparse.ArgumentParser(
        prog="asrpu",
        description="Simulate the ASR accelerator on one utterance.",
    )
    p.add_argument("--config", required=True, help="key = value configuration file")
    p.add_argument("--model", required=True, help="binary model file (or text descriptor)")
    p.add_argument("--lexicon", required=True, help="word -> token spelling file")
    p.add_argument("--lm", required=True, help="back-off n-gram LM file")
    p.add_argument("--tokens", required=True, help="token symbol table")
    p.add_argument("--audio", required=True, help="16-bit mono PCM WAV file")
    p.add_argument("--chunk-ms", type=int, default=80,
                   help="audio per decoding step in streaming mode (default 80)")
    p.add_argument("--mode", choices=("streaming", "offline"), default="streaming")
    p.add_argument("--report", help="write the JSON run report here")
    p.add_argument("--timeline", help="write per-thread schedule records here")
    p.add_argument("--seed", type=int, default=0,
                   help="weight seed when --model is a text descriptor")
    p.add_argument("--beam", type=float, help="override the configured beam width")
    p.add_argument("--lm-weight", type=float, help="override the configured LM weight")
    p.add_argument("--word-penalty", type=float, help="override the word penalty")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    manifest = RunManifest(
        config=args.config, model=args.model, lexicon=args.lexicon, lm=args.lm,
        tokens=args.tokens, audio=args.audio, chunk_ms=args.chunk_ms,
        mode=args.mode, report=args.report, timeline=args.timeline,
        seed=args.seed, beam_width=args.beam, lm_weight=args.lm_weight,
        word_penalty=args.word_penalty,
    )
    try:
        report = run(manifest)
        if manifest.report:
            emit_report(report, manifest.report)
    except AsrpuError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    totals = report.totals()
    print(" ".join(report.transcript))
    print(
        f"# {totals['steps']} steps, {totals['audio_seconds']:.3f} s audio, "
        f"{totals['simulated_seconds'] * 1e3:.2f} ms simulated, "
        f"{totals['real_time_factor']:.2f}x real time",
        file=sys.stderr,
    )
    return 0


def _build_gen_parser():
    p = argparse.ArgumentParser(
        prog="asrpu-gen",
        description="Generate runnable workload bundles.",
    )
    sub = p.add_subparsers(dest="what", required=True)
    ref = sub.add_parser("reference", help="reference model, demo lexicon/LM, synth audio")
    ref.add_argument("--out", required=True)
    ref.add_argument("--seed", type=int, default=0)
    ref.add_argument("--seconds", type=float, default=2.0)
    ref.add_argument("--tokens", type=int, default=9000)
    planted = sub.add_parser("planted", help="planted-signal correctness workload")
    planted.add_argument("--out", required=True)
    planted.add_argument("--seed", type=int, default=0)
    return p


def gen_main(argv=None):
    args = _build_gen_parser().parse_args(argv)
    try:
        if args.what == "reference":
            paths = assets.write_reference_assets(
                args.out, seed=args.seed, seconds=args.seconds, n_tokens=args.tokens
            )
        else:
            paths, sentence = assets.write_planted_assets(args.out, seed=args.seed)
            print("expected transcript:", " ".join(sentence), file=sys.stderr)
    except AsrpuError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    for name, path in sorted(paths.items()):
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
