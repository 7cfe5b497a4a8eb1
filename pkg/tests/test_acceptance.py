"""Acceptance suite: one test per release criterion, each printing a
PASS line with the measured numbers (run with ``pytest -s`` to see them).

The heavyweight criteria drive the full reference workload (80-layer
trunk, 9000-token output, 1 MB model memory forcing FC partitioning)
through the public runner; the reference assets are generated once into a
session tmp dir.
"""

import time

import numpy as np
import pytest

from asrpu.assets import write_planted_assets, write_reference_assets
from asrpu.config import SystemConfig, load_config
from asrpu.costs import loop_cost
from asrpu.decoder import beam_decode
from asrpu.frontend import MfccConstants, mfcc_frames_batch
from asrpu.layers import fc_forward, fc_thread_cost, mac_iters
from asrpu.lexicon import LexiconTrie, TokenTable
from asrpu.lm import NGramLM
from asrpu.hypothesis import HypothesisStore, Hypothesis
from asrpu.model import partition_fc
from asrpu.runner import RunManifest, build_accelerator, load_acoustic_model, load_wav, run
from asrpu.schedule import KIND_KERNEL, KIND_SETUP, KernelSpec, PoolScheduler
from tests.conftest import exhaustive_ctc_best, naive_mfcc_frame, random_ctc_instance

CHECK = "ACCEPTANCE"


@pytest.fixture(scope="module")
def reference_assets(tmp_path_factory):
    out = tmp_path_factory.mktemp("reference")
    return write_reference_assets(str(out), seed=0, seconds=2.0)


@pytest.fixture(scope="module")
def reference_manifest(reference_assets):
    p = reference_assets
    return RunManifest(config=p["config"], model=p["model"], lexicon=p["lexicon"],
                       lm=p["lm"], tokens=p["tokens"], audio=p["audio"])


@pytest.fixture(scope="module")
def reference_run(reference_manifest):
    t0 = time.monotonic()
    report = run(reference_manifest)
    wall = time.monotonic() - t0
    return report, wall


def test_01_real_time_decoding(reference_run):
    """Steady 80 ms steps simulate in under 80 ms (target 40 ms +-100%)."""

    report, wall = reference_run
    steady = [s.step_time_seconds for s in report.steps if not s.early_stop][1:]
    assert steady, "reference run produced no steady steps"
    worst_ms = max(steady) * 1e3
    mean_ms = sum(steady) / len(steady) * 1e3
    assert worst_ms < 80.0
    assert 0.0 < mean_ms < 80.0  # 40 ms +- 100%
    assert wall < 60.0
    rtf = report.totals()["real_time_factor"]
    print(f"{CHECK} 1 PASS: worst step {worst_ms:.1f} ms, mean {mean_ms:.1f} ms "
          f"(< 80 ms real-time, {rtf:.2f}x), desk runtime {wall:.1f} s")


def test_02_fc_partitioning(reference_assets):
    """The 1200x1200 int8 FC splits into exactly 2 x 600 neurons x 720 kB,
    and partition outputs concatenate bit-identically."""

    model = load_acoustic_model(reference_assets["model"])
    layer = next(l for l in model.layers
                 if l.kind == "fc" and l.d_in == 1200 and l.d_out == 1200)
    ranges = partition_fc(layer, 1024 * 1024)
    assert ranges == [(0, 600), (600, 1200)]
    assert all((hi - lo) * layer.d_in == 720_000 for lo, hi in ranges)
    rng = np.random.default_rng(0)
    x = rng.integers(-127, 128, size=(5, 1200)).astype(np.int8)
    whole = fc_forward(x, layer, 0, 1200)
    split = np.concatenate([fc_forward(x, layer, lo, hi) for lo, hi in ranges], axis=1)
    assert np.array_equal(whole, split)
    print(f"{CHECK} 2 PASS: ranges {ranges}, 720000 weight bytes each, "
          f"outputs bit-identical")


def test_03_subsampling(small_system):
    """Six feature frames through a stride-2 model emit three acoustic
    vectors and run hypothesis expansion exactly three times."""

    from tests.conftest import build_small_accelerator

    cfg, desc, tokens, trie, lm = small_system
    acc, _, _ = build_small_accelerator(cfg, desc, trie, lm)
    acc.clean_decoding()
    audio = np.random.default_rng(1).standard_normal(1200) * 0.05  # 6 frames
    rep = acc.decoding_step(audio)
    assert rep.acoustic_vectors_emitted == 3
    assert rep.hyp_expansion_repeats == 3
    print(f"{CHECK} 3 PASS: 6 frames -> {rep.acoustic_vectors_emitted} vectors, "
          f"{rep.hyp_expansion_repeats} expansion rounds")


def _setup_overlap_ok(records, n_kernels):
    """Setup k may overlap kernel k-1 but nothing earlier, chains after
    setup k-1, and always completes before kernel k's threads start."""

    setup_end = {}
    for k in range(n_kernels):
        setup_rows = records[(records[:, 0] == k) & (records[:, 2] == KIND_SETUP)]
        mine = records[(records[:, 0] == k) & (records[:, 2] == KIND_KERNEL)]
        if len(setup_rows) == 0:
            continue
        setup = setup_rows[0]
        setup_end[k] = setup[5]
        if k - 1 in setup_end and setup[4] < setup_end[k - 1]:
            return False  # dispatched before the previous setup finished
        older = records[(records[:, 0] < k - 1) & (records[:, 2] == KIND_KERNEL)]
        if len(older) and setup[4] < older[:, 5].max():
            return False  # overlaps a kernel older than its predecessor
        if len(mine) and setup[5] > mine[:, 4].min():
            return False  # kernel threads ran before their setup finished
    return True


def _work_conserving(records, num_pes):
    kernel_rows = records[records[:, 2] == KIND_KERNEL]
    for k in set(kernel_rows[:, 0].tolist()):
        mine = kernel_rows[kernel_rows[:, 0] == k]
        window_lo, window_hi = mine[:, 4].min(), mine[:, 4].max()
        if window_lo == window_hi:
            continue
        for pe in range(num_pes):
            rows = records[records[:, 3] == pe]
            rows = rows[np.argsort(rows[:, 4])]
            covered = window_lo
            for start, end in rows[:, 4:6]:
                if end <= covered:
                    continue
                if start > covered:
                    return False  # idle gap while threads were waiting
                covered = end
                if covered >= window_hi:
                    break
            if covered < window_hi:
                return False
    return True


def test_04_scheduler_invariants():
    """1000 randomized kernel/thread-cost configurations keep every
    scheduling invariant; uniform costs hit S + ceil(T/P)*C exactly."""

    rng = np.random.default_rng(2024)
    for trial in range(1000):
        num_pes = int(rng.integers(1, 9))
        specs = []
        for k in range(int(rng.integers(1, 5))):
            n = int(rng.integers(1, 33))
            specs.append(KernelSpec(
                k, f"k{k}", "custom", int(rng.integers(0, 16)),
                rng.integers(1, 50, size=n).astype(np.int64),
            ))
        tl = PoolScheduler(num_pes, keep_records=True).run(specs)
        tl.validate()  # PE exclusivity + phase ordering
        assert _setup_overlap_ok(tl.records, len(specs)), trial
        assert _work_conserving(tl.records, num_pes), trial
        # uniform-cost closed form on a fresh single-kernel step
        t_count = int(rng.integers(1, 200))
        cost = int(rng.integers(1, 40))
        setup = int(rng.integers(0, 25))
        tl2 = PoolScheduler(num_pes).run(
            [KernelSpec(0, "u", "custom", setup,
                        np.full(t_count, cost, dtype=np.int64))]
        )
        assert tl2.step_cycles == setup + -(-t_count // num_pes) * cost
    print(f"{CHECK} 4 PASS: 1000 random configs hold disjointness, ordering, "
          f"work conservation, setup overlap; uniform makespan exact")


def test_05_mfcc_oracle():
    """100 random frames match the naive-DFT/mel/cosine oracle within 1e-4;
    chunked extraction is bit-identical to whole-signal extraction."""

    cfg = SystemConfig()
    consts = MfccConstants(cfg.frontend)
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        frame = rng.standard_normal(400) * rng.uniform(0.01, 0.9)
        got = mfcc_frames_batch((0, frame), [0], consts)[0].astype(np.float64)
        oracle = naive_mfcc_frame(frame, consts)
        worst = max(worst, float(np.abs(got - oracle).max()))
    assert worst < 1e-4

    from tests.test_frontend import TestStreaming

    streaming = TestStreaming()
    sig = rng.standard_normal(24000) * 0.2
    whole = streaming.run_chunked(sig, len(sig))
    for chunk in (1280, 977):
        assert np.array_equal(streaming.run_chunked(sig, chunk), whole)
    print(f"{CHECK} 5 PASS: 100-frame worst-case oracle error {worst:.2e} < 1e-4; "
          f"streaming extraction bit-identical")


def test_06_ctc_optimality_at_desk_scale():
    """>= 50 random tiny instances decode to the exhaustive-enumeration
    optimum under an infinite beam."""

    rng = np.random.default_rng(60)
    checked = 0
    while checked < 50:
        rows, trie, lm, params = random_ctc_instance(rng)
        score, words, store, rt = beam_decode(rows, trie, lm, params)
        oracle_score, oracle_words = exhaustive_ctc_best(rows, trie, lm, params)
        assert score == pytest.approx(oracle_score, abs=1e-6), checked
        assert tuple(words) in oracle_words, checked
        checked += 1
    print(f"{CHECK} 6 PASS: {checked} instances match exhaustive enumeration "
          f"within 1e-6")


def test_07_beam_invariant():
    """After every finalize, min active score >= best - beam; the canonical
    {-1,-5,-12} @ beam 10 case keeps exactly {-1,-5}."""

    store = HypothesisStore(1024)
    for h, s in ((1, -1.0), (2, -5.0), (3, -12.0)):
        store.submit(Hypothesis(h, s, 0, 0, -1, 0, h))
    store.finalize_step(10.0)
    assert sorted(x.score for x in store.active) == [-5.0, -1.0]

    rng = np.random.default_rng(70)
    rounds = 0
    for _ in range(12):
        rows, trie, lm, params = random_ctc_instance(rng)
        beam = float(rng.uniform(0.5, 6.0))
        params.beam_width = beam
        from asrpu.decoder import CtcExpandKernel, DecoderRuntime
        from asrpu.hypothesis import BacklinkArena
        from asrpu.lm import LmStateTable

        rt = DecoderRuntime(trie, lm, params, LmStateTable(), BacklinkArena())
        st = HypothesisStore(1 << 20)
        st.reset()
        kernel = CtcExpandKernel(rt)
        for row in rows:
            kernel.run_round(st, row)
            st.finalize_step(beam)
            best = max(h.score for h in st.active)
            assert all(h.score >= best - beam - 1e-12 for h in st.active)
            rounds += 1
    print(f"{CHECK} 7 PASS: beam invariant held after {rounds} finalizes; "
          f"canonical case keeps {{-1,-5}}")


def test_08_planted_signal_end_to_end(tmp_path):
    """The contrived near-one-hot workload decodes to the planted sentence
    in streaming and offline modes, byte-for-byte equal."""

    paths, sentence = write_planted_assets(str(tmp_path / "planted"), seed=3)
    outs = {}
    for mode in ("streaming", "offline"):
        report = run(RunManifest(
            config=paths["config"], model=paths["model"], lexicon=paths["lexicon"],
            lm=paths["lm"], tokens=paths["tokens"], audio=paths["audio"], mode=mode,
        ))
        outs[mode] = " ".join(report.transcript).encode()
    assert outs["streaming"] == outs["offline"] == " ".join(sentence).encode()
    print(f"{CHECK} 8 PASS: planted transcript {sentence!r} recovered in both "
          f"modes, byte-identical")


def test_09_cost_rule_conformance(reference_run):
    """loop_cost(10,5)=81; the FC thread count matches its hand-expanded
    closed form; step time is exactly step_cycles / 500 MHz."""

    assert loop_cost(10, 5) == 81
    # hand count for a 1200-input neuron with ReLU and int8 output:
    #   13 fixed  (8 parameter loads, 4 address adds, 1 accumulator init)
    # + 1 + 150*(3+3)  MAC loop: ceil(1200/8)=150 iterations, 2 loads + 1 MAC
    # + 4  scale and bias (load+mul, load+add)
    # + 2  ReLU compare+select
    # + 6  quantized store (load+mul+add, 2 compares, store)
    hand = 13 + (1 + 150 * 6) + 4 + 2 + 6
    assert mac_iters(1200, 8) == 150
    assert fc_thread_cost(1200, 8, relu=True, residual=False, quant_out=True) == hand
    report, _ = reference_run
    freq = report.config.accelerator.frequency_hz
    assert freq == 500_000_000
    for s in report.steps:
        assert s.step_time_seconds == s.timeline.step_cycles / freq
    print(f"{CHECK} 9 PASS: loop rule 81, FC neuron {hand} instructions, "
          f"step time == cycles / 500 MHz on {len(report.steps)} steps")


def test_10_pe_scaling(reference_assets):
    """Functional outputs are identical for 1, 2 and 8 PEs; going from 8 to
    16 PEs speeds the acoustic-scoring phase by at least 1.8x."""

    p = reference_assets
    model = load_acoustic_model(p["model"])
    tokens = TokenTable.load(p["tokens"])
    trie = LexiconTrie.load(p["lexicon"], tokens)
    lm = NGramLM.load(p["lm"])
    samples, _ = load_wav(p["audio"], 16000)
    samples = samples[:16000]

    def run_with(num_pes):
        cfg = load_config(p["config"])
        cfg.accelerator.num_pes = num_pes
        acc, _, _ = build_accelerator(cfg, model, trie, lm)
        acc.score_tap = []
        acc.clean_decoding()
        spans, transcripts = [], []
        for lo in range(0, len(samples), 1280):
            rep = acc.decoding_step(samples[lo : lo + 1280])
            spans.append(rep.timeline.acoustic_span_cycles())
            transcripts.append(tuple(rep.best_partial_transcript))
        return spans, transcripts, [v.tobytes() for v in acc.score_tap]

    results = {pes: run_with(pes) for pes in (1, 2, 8, 16)}
    for pes in (1, 2):
        assert results[pes][1] == results[8][1], f"transcripts differ at {pes} PEs"
        assert results[pes][2] == results[8][2], f"scores differ at {pes} PEs"
    ratio = sum(results[8][0]) / sum(results[16][0])
    assert ratio >= 1.8
    print(f"{CHECK} 10 PASS: functional outputs identical across 1/2/8 PEs; "
          f"8->16 PEs speeds acoustic scoring {ratio:.2f}x (>= 1.8x)")
