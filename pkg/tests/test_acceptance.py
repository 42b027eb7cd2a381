"""Acceptance suite: one PASS/FAIL line per criterion.

Run on its own with ``python tests/test_acceptance.py`` or
``pytest tests/test_acceptance.py -s``.  Lines are also repeated in the
pytest terminal summary.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from aflstm import autograd as ag
from aflstm.autograd import Parameter, Tensor
from aflstm.data import PAD
from aflstm.holo import (FusionOperator, circ_conv_fft, circ_conv_naive, circ_corr_fft,
                         circ_corr_naive, fuse_backward, norm_clip)
from aflstm.hrr import CleanupMemory, capacity_experiment, decode, encode, random_unit_vectors
from aflstm.model import (AttentionParams, ClassifierParams, LstmParams, Model, ModelConfig,
                          ProjectionParams, aspect_embed, attend, classify, fuse, lstm_forward,
                          param_count, project)
from aflstm.training import check_model_gradients, loss

from conftest import ACCEPTANCE_LINES

TESTS = Path(__file__).resolve().parent


def report(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} -- {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line, flush=True)
    assert ok, line


def test_1_operator_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    dims = sorted({1, 2, 3, 4, 7, 8, 16, 100, 256, 1024, *rng.integers(1, 1025, size=30).tolist()})
    worst = 0.0
    for d in dims:
        h, s = rng.standard_normal(d), rng.standard_normal(d)
        worst = max(worst, np.max(np.abs(circ_conv_fft(h, s) - circ_conv_naive(h, s))),
                    np.max(np.abs(circ_corr_fft(h, s) - circ_corr_naive(h, s))))
    dt = time.perf_counter() - t0
    report(1, "FFT vs naive circular conv/corr", worst < 1e-10 and dt < 5,
           f"{len(dims)} lengths in [1, 1024], max abs diff {worst:.2e} (< 1e-10), {dt:.2f}s (< 5s)")


def _layer_checks():
    rng = np.random.default_rng(7)
    d = k = 8
    B, L = 2, 5
    u = lambda *shape: rng.uniform(-1, 1, shape)
    mask = np.ones((B, L), bool)
    mask[1, 3:] = False
    checks = {}

    table = Parameter(u(10, k), frozen_rows=(PAD,))
    table.data[PAD] = 0
    ids = np.array([[2, 3, 4, 0, 0], [5, 5, 1, 9, 0]])
    c_emb = Tensor(u(B, L, k))
    checks["embedding"] = (lambda: ag.sum(ag.mul(ag.take_rows(table, ids, PAD), c_emb)), [table])
    c_asp = Tensor(u(B, k))
    checks["aspect_embed"] = (lambda: ag.sum(ag.mul(aspect_embed([[2, 3], [4, 0]], table), c_asp)), [table])

    X = Parameter(u(B, L, k))
    lp = LstmParams(Parameter(u(4 * d, k)), Parameter(u(4 * d, d)), Parameter(u(4 * d)))
    c_h = Tensor(u(B, L, d))
    checks["lstm"] = (lambda: ag.sum(ag.mul(lstm_forward(X, mask, lp), c_h)), [X, lp.W_ih, lp.W_hh, lp.b])

    H, s = Parameter(u(B, L, d)), Parameter(u(B, d) * 2)
    for op in FusionOperator:
        for norm in (False, True):
            checks[f"fuse-{op}{'-norm' if norm else ''}"] = (
                lambda op=op, norm=norm: ag.sum(ag.mul(fuse(H, s, op, norm), c_h)), [H, s])

    M = Parameter(u(B, L, d))
    ap = AttentionParams(Parameter(u(d, d)), Parameter(u(d)))
    c_r = Tensor(u(B, d))
    checks["attend"] = (lambda: ag.sum(ag.mul(attend(M, H, mask, ap)[0], c_r)), [M, H, ap.W_y, ap.w])

    r, hl = Parameter(u(B, d)), Parameter(u(B, d))
    pp = ProjectionParams(Parameter(u(d, d)), Parameter(u(d, d)))
    checks["project"] = (lambda: ag.sum(ag.mul(project(r, hl, pp), c_r)), [r, hl, pp.W_p, pp.W_x])

    cp = ClassifierParams(Parameter(u(3, d)), Parameter(u(3)))
    labels = np.array([0, 2])
    checks["classify+loss"] = (lambda: loss(classify(r, cp), labels, [cp.W_f], 0.1), [r, cp.W_f, cp.b_f])
    v = Parameter(u(B, d) * 3)
    checks["norm_clip"] = (lambda: ag.sum(ag.mul(norm_clip(v), c_r)), [v])
    return checks


FULL_VARIANTS = [
    dict(variant="majority"), dict(variant="nbow"), dict(variant="lstm"),
    dict(variant="at-lstm"), dict(variant="at-lstm", use_projection=True),
    dict(variant="atae-lstm"), dict(variant="atae-lstm", use_projection=True),
    *[dict(variant="af-lstm", fusion=op, use_projection=p, use_normalization=n)
      for op in ("conv", "corr", "mul") for p in (False, True) for n in (False, True)],
]


def test_2_gradient_suite():
    t0 = time.perf_counter()
    errors = {}
    for name, (fn, params) in _layer_checks().items():
        errors[f"layer:{name}"] = ag.grad_check(fn, params, eps=1e-3, order=4)
    for kw in FULL_VARIANTS:
        cfg = ModelConfig(vocab_size=10, embed_dim=8, hidden_dim=8, max_len=5, **kw)
        if cfg.variant.value == "majority":
            continue        # no trainable parameters
        tag = "-".join(str(v) if not isinstance(v, bool) else k for k, v in kw.items() if v)
        errors[f"model:{tag}"] = check_model_gradients(cfg)
    rng = np.random.default_rng(3)
    h, s, g = (rng.standard_normal(64) for _ in range(3))
    duality = float(np.max(np.abs(fuse_backward(FusionOperator.CONV, g, h, s)[1] - circ_corr_fft(h, g))))
    dt = time.perf_counter() - t0
    worst_name = max(errors, key=errors.get)
    ok = max(errors.values()) < 1e-5 and duality < 1e-12 and dt < 60
    report(2, "gradient suite", ok,
           f"{len(errors)} checks, worst {errors[worst_name]:.2e} ({worst_name}) (< 1e-5); "
           f"conv grad_s vs corr(h, g) {duality:.1e} (< 1e-12); {dt:.1f}s (< 60s)")


def test_3_parameter_accounting():
    base = dict(vocab_size=50, embed_dim=300, hidden_dim=300, num_classes=3)
    count = lambda **kw: param_count(Model(ModelConfig(**base, **kw)))
    lstm = count(variant="lstm")
    af = {op: count(variant="af-lstm", fusion=op) for op in ("mul", "corr", "conv")}
    at, atae = count(variant="at-lstm"), count(variant="atae-lstm")
    ok = (719_000 <= lstm <= 723_000 and 808_000 <= af["conv"] <= 814_000
          and af["conv"] < at < atae and len(set(af.values())) == 1)
    report(3, "parameter accounting at k=d=300, K=3", ok,
           f"LSTM {lstm:,}, AF-LSTM {af['conv']:,} (mul/corr/conv equal: {len(set(af.values())) == 1}), "
           f"AT-LSTM {at:,}, ATAE-LSTM {atae:,}")


def test_4_hrr_retrieval():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(1000):
        items = random_unit_vectors(rng, 10, 512)
        key = random_unit_vectors(rng, 1, 512)[0]
        mem = CleanupMemory(512)
        for i, v in enumerate(items):
            mem.add(i, v)
        hits += mem.cleanup(decode(key, encode(key, items[3]))) == 3
    dims = (32, 64, 128, 256, 512, 1024)
    trend = [capacity_experiment(d, 20, 20, seed=1) for d in dims]
    monotone = all(a <= b for a, b in zip(trend, trend[1:]))
    dt = time.perf_counter() - t0
    ok = hits / 1000 >= 0.95 and monotone and dt < 30
    report(4, "HRR retrieval", ok,
           f"cleanup {hits / 10:.1f}% at d=512 (>= 95%); 20 pairs over d={dims}: "
           f"{', '.join(f'{a:.3f}' for a in trend)} (non-decreasing: {monotone}); {dt:.1f}s (< 30s)")


def test_5_synthetic_aspect_conditioning(synth_runs):
    runs, elapsed = synth_runs
    conv, mul, lstm = (runs[n, 0].test_accuracy for n in ("conv", "mul", "lstm"))
    dt = sum(elapsed[n, 0] for n in ("conv", "mul", "lstm"))
    ok = conv >= 0.95 and lstm <= 0.60 and mul >= 0.90 and dt < 600
    report(5, "synthetic aspect conditioning", ok,
           f"test acc AF-LSTM conv {conv:.4f} (>= 0.95), mul {mul:.4f} (>= 0.90), "
           f"LSTM {lstm:.4f} (<= 0.60); {dt:.0f}s (< 600s)")


def test_6_attention_switching(synth_runs):
    runs, _ = synth_runs
    sw = runs["conv", 0].switching
    ok = sw.evaluated > 0 and sw.rate >= 0.80
    report(6, "attention switching (AF-LSTM conv)", ok,
           f"{sw.both}/{sw.evaluated} correct test examples = {sw.rate:.3f} (>= 0.80) with >= 0.6 mass "
           f"in the aspect's clause ({sw.mass_ok}) and argmax switching clause on aspect swap ({sw.switched})")


def test_7_determinism(synth_runs):
    runs, _ = synth_runs
    same_acc = all(runs[n, 0].test_accuracy == runs[n, 1].test_accuracy for n in ("conv", "mul", "lstm"))
    same_hist = all([m.record() for m in runs[n, 0].result.history]
                    == [m.record() for m in runs[n, 1].result.history] for n in ("conv", "mul", "lstm"))
    same_ckpt = all(runs[n, 0].checkpoint == runs[n, 1].checkpoint for n in ("conv", "mul", "lstm"))
    report(7, "determinism of the synthetic runs", same_acc and same_hist and same_ckpt,
           f"accuracies bit-exact: {same_acc}; histories equal: {same_hist}; "
           f"checkpoints byte-identical: {same_ckpt}")


PROPERTY_SUITES = [
    "test_autograd.py::TestMaskedSoftmax",
    "test_fft_holo.py::TestProperties",
    "test_fft_holo.py::TestNormClip",
    "test_data.py::TestLoadCorpus::test_round_trip",
]


def test_8_property_suites_standalone():
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(TESTS / s) for s in PROPERTY_SUITES]],
                          capture_output=True, text=True, cwd=TESTS)
    dt = time.perf_counter() - t0
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    report(8, "property suites standalone", proc.returncode == 0 and dt < 10,
           f"{summary}; {dt:.1f}s (< 10s)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q"]))
