"""Host-side driver: loads all inputs, feeds audio chunks to the
accelerator to mimic microphone streaming (or one offline step), and
assembles the machine-readable run report.

Report schema (JSON, sorted keys):

* ``schema``: format tag, currently ``asrpu-report-1``
* ``transcript``: final best word sequence
* ``totals``: audio_seconds, simulated_seconds, real_time_factor,
  steps, early_stopped_steps, shared memory peak, cache totals
* ``per_kernel``: one row per configured kernel with aggregate busy
  cycles/time and its plot group (``conv_hyp`` for convolutions,
  layernorm and hypothesis expansion, ``fc_frontend`` for fully-connected
  layers and feature extraction)
* ``steps``: the per-step reports (see StepReport.to_dict)
"""

import json
import math
import os
import wave
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig, load_config
from .decoder import CtcExpandKernel, DecoderRuntime
from .engine import Accelerator
from .errors import InputError
from .hypothesis import BacklinkArena
from .layers import build_program
from .lexicon import LexiconTrie, TokenTable
from .lm import LmStateTable, NGramLM, UNK
from .model import load_model, materialize_weights, parse_descriptor_text
from .schedule import export_timeline

REPORT_SCHEMA = "asrpu-report-1"

_GROUPS = {
    "conv1d": "conv_hyp",
    "layernorm": "conv_hyp",
    "hyp_expansion": "conv_hyp",
    "fc": "fc_frontend",
    "frontend": "fc_frontend",
}


@dataclass
class RunManifest:
    """Paths and knobs for one simulated utterance."""

    config: str
    model: str
    lexicon: str
    lm: str
    tokens: str
    audio: str
    chunk_ms: int = 80
    mode: str = "streaming"  # or "offline"
    report: str = None
    timeline: str = None
    seed: int = 0
    beam_width: float = None
    lm_weight: float = None
    word_penalty: float = None

    def validate(self):
        if self.chunk_ms <= 0:
            raise InputError("chunk_ms must be positive")
        if self.mode not in ("streaming", "offline"):
            raise InputError(f"unknown mode {self.mode!r}")
        for name in ("config", "model", "lexicon", "lm", "tokens", "audio"):
            path = getattr(self, name)
            if not path or not os.path.exists(path):
                raise InputError(f"{name} file not found: {path!r}")
        return self


def load_wav(path, expected_rate=None):
    """PCM 16-bit mono WAV as float64 samples in [-1, 1)."""

    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            width = fh.getsampwidth()
            rate = fh.getframerate()
            n = fh.getnframes()
            raw = fh.readframes(n)
    except (wave.Error, OSError, EOFError) as e:
        raise InputError(f"cannot read WAV file {path}: {e}") from e
    if channels != 1:
        raise InputError(f"{path}: expected mono audio, found {channels} channels")
    if width != 2:
        raise InputError(f"{path}: expected 16-bit PCM, found {8 * width}-bit")
    if expected_rate is not None and rate != expected_rate:
        raise InputError(
            f"{path}: sample rate {rate} does not match the configured {expected_rate}"
        )
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def load_acoustic_model(path, seed=0):
    """Binary model file, or a structured-text descriptor (weights seeded)."""

    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"APUM":
        return load_model(path)
    with open(path, "r", encoding="utf-8") as fh:
        descriptor = parse_descriptor_text(fh.read())
    return materialize_weights(descriptor, seed=seed)


@dataclass
class RunReport:
    manifest: RunManifest
    config: SystemConfig
    steps: list = field(default_factory=list)
    transcript: list = field(default_factory=list)

    @property
    def audio_seconds(self):
        return self._audio_seconds

    def totals(self):
        sim = sum(s.step_time_seconds for s in self.steps)
        rtf = self._audio_seconds / sim if sim > 0 else math.inf
        return {
            "steps": len(self.steps),
            "early_stopped_steps": sum(1 for s in self.steps if s.early_stop),
            "audio_seconds": self._audio_seconds,
            "simulated_seconds": sim,
            "real_time_factor": rtf,
            "acoustic_vectors": sum(s.acoustic_vectors_emitted for s in self.steps),
            "shared_peak_bytes": max((s.shared_peak_bytes for s in self.steps), default=0),
            "cache_hits": self.steps[-1].cache_hits if self.steps else 0,
            "cache_misses": self.steps[-1].cache_misses if self.steps else 0,
        }

    def per_kernel(self):
        rows = {}
        for s in self.steps:
            for k in s.timeline.kernels:
                row = rows.setdefault(
                    k.name,
                    {
                        "name": k.name,
                        "kind": k.kind,
                        "group": _GROUPS.get(k.kind, "other"),
                        "busy_cycles": 0,
                        "setup_cycles": 0,
                        "threads": 0,
                        "dma_wait_cycles": 0,
                    },
                )
                row["busy_cycles"] += k.busy_cycles
                row["setup_cycles"] += k.setup_cycles
                row["threads"] += k.n_threads
                row["dma_wait_cycles"] += k.dma_wait_cycles
        freq = self.config.accelerator.frequency_hz
        out = list(rows.values())
        for row in out:
            row["busy_seconds"] = row["busy_cycles"] / freq
        return out

    def to_dict(self):
        return {
            "schema": REPORT_SCHEMA,
            "mode": self.manifest.mode,
            "chunk_ms": self.manifest.chunk_ms,
            "transcript": list(self.transcript),
            "totals": self.totals(),
            "per_kernel": self.per_kernel(),
            "steps": [s.to_dict() for s in self.steps],
        }


def build_accelerator(cfg, model, trie, lm, keep_timeline_records=False):
    """Wire a configured accelerator for the given workload."""

    kernels = build_program(model, cfg.accelerator, cfg.frontend)
    runtime = DecoderRuntime(trie, lm, cfg.decode, LmStateTable(), BacklinkArena())
    expansion = CtcExpandKernel(
        runtime, apply_log_softmax=model.layers[-1].log_softmax
    )
    acc = Accelerator(cfg, keep_timeline_records=keep_timeline_records)
    for i, k in enumerate(kernels):
        acc.configure_acoustic_scoring(i, k.setup, k.run)
    acc.configure_hyp_expansion(expansion)
    acc.configure_beam_width(cfg.decode.beam_width)
    return acc, kernels, expansion


def run(manifest: RunManifest):
    """Decode one utterance per the manifest; returns a RunReport."""

    manifest.validate()
    cfg = load_config(manifest.config)
    if manifest.beam_width is not None:
        cfg.decode.beam_width = manifest.beam_width
    if manifest.lm_weight is not None:
        cfg.decode.lm_weight = manifest.lm_weight
    if manifest.word_penalty is not None:
        cfg.decode.word_penalty = manifest.word_penalty
    cfg.validate()
    cfg.decode.validate()

    model = load_acoustic_model(manifest.model, seed=manifest.seed)
    tokens = TokenTable.load(manifest.tokens)
    if len(tokens) != model.n_tokens:
        raise InputError(
            f"token table has {len(tokens)} symbols, model emits {model.n_tokens}"
        )
    trie = LexiconTrie.load(manifest.lexicon, tokens)
    lm = NGramLM.load(manifest.lm)
    for w in trie.words:
        if not lm.has_word(w) and not lm.has_word(UNK):
            raise InputError(f"lexicon word {w!r} missing from the LM (no {UNK!r})")

    samples, _ = load_wav(manifest.audio, cfg.frontend.sample_rate)
    acc, _, expansion = build_accelerator(
        cfg, model, trie, lm, keep_timeline_records=manifest.timeline is not None
    )
    acc.clean_decoding()

    report = RunReport(manifest, cfg)
    report._audio_seconds = len(samples) / cfg.frontend.sample_rate

    timeline_fh = open(manifest.timeline, "w", encoding="utf-8") if manifest.timeline else None
    try:
        if manifest.mode == "offline":
            chunks = [samples]
        else:
            step_samples = cfg.frontend.sample_rate * manifest.chunk_ms // 1000
            chunks = [samples[i : i + step_samples] for i in range(0, len(samples), step_samples)]
        for i, chunk in enumerate(chunks):
            step = acc.decoding_step(chunk)
            report.steps.append(step)
            if timeline_fh is not None:
                timeline_fh.write(f"# step {i}\n")
                export_timeline(step.timeline, timeline_fh)
                step.timeline.records = None  # keep memory flat on long runs
    finally:
        if timeline_fh is not None:
            timeline_fh.close()
    if report.steps:
        report.transcript = report.steps[-1].best_partial_transcript
    acc.clean_decoding()
    return report


def emit_report(report, path):
    """Write the JSON run report; byte-stable for identical runs."""

    text = json.dumps(report.to_dict(), sort_keys=True, indent=2)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    except OSError as e:
        raise InputError(f"cannot write report to {path}: {e}") from e
    return text
