"""Acceptance criteria AC1-AC8, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""

import time
from pathlib import Path

import numpy as np

from conftest import ACCEPTANCE_LINES
from riskseq import layers as L
from riskseq.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from riskseq.cli import main
from riskseq.config import RunConfig
from riskseq.datapipe import (
    SplitSpec,
    WindowSample,
    chrono_split,
    fit_normalizer,
    gen_separable,
    gen_synthetic,
    load_csv,
    make_windows,
    prepare,
    window_count,
    write_csv,
)
from riskseq.evaluation import ConfusionCounts, confusion, metrics
from riskseq.gradcheck import check_gradients, small_network
from riskseq.network import ConvBlock, HybridConfig, init_params, predict_proba
from riskseq.tensor import make_rng
from riskseq.training import TrainConfig, evaluate_loss, train


BENCHMARK_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "benchmark.json"


def record(tag, title, ok, detail):
    line = f"{tag} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_ac1_gradient_oracle():
    start = time.perf_counter()
    x, label, params = small_network(0, T=8, F=4, hidden=6, channels=3, blocks=2)
    results = check_gradients(x, label, params, h=1e-5)
    elapsed = time.perf_counter() - start
    worst = max(r.worst for r in results)
    ok = worst <= 1e-4 and elapsed < 10 and len(results) == len(params.tensors())
    record("AC1", "gradient oracle", ok,
           f"{len(results)} tensors, worst rel err {worst:.2e} (tol 1e-4), {elapsed:.1f}s (< 10s)")


def test_ac2_overfit():
    start = time.perf_counter()
    X, y = gen_separable(0, n=32, T=16, F=4)
    model = init_params(HybridConfig(conv_blocks=(ConvBlock(4), ConvBlock(4)), hidden=6), 4, make_rng(1))
    cfg = TrainConfig(epochs=500, batch_size=32, learning_rate=1e-2, patience=500, seed=0)
    best, _ = train(model, (X, y), (X, y), cfg)
    loss, acc = evaluate_loss(best, X, y)
    elapsed = time.perf_counter() - start
    ok = acc == 1.0 and loss < 0.05 and elapsed < 30
    record("AC2", "overfit separable set", ok,
           f"train acc {acc:.3f} (= 1.0), mean BCE {loss:.4f} (< 0.05), {elapsed:.1f}s (< 30s)")


def test_ac3_pinned_benchmark(benchmark_run):
    _, runs, elapsed = benchmark_run
    f1 = {k: r.report.f1 for k, r in runs.items()}
    rival = max(f1["cnn_only"], f1["bilstm_only"])
    ok = f1["hybrid"] >= 0.80 and f1["hybrid"] >= rival - 0.02 and elapsed < 60
    record("AC3", "pinned benchmark", ok,
           f"hybrid F1 {f1['hybrid']:.3f} (>= 0.80), cnn_only {f1['cnn_only']:.3f}, "
           f"bilstm_only {f1['bilstm_only']:.3f} (hybrid >= max - 0.02), {elapsed:.1f}s (< 60s)")


def test_ac4_loss_curve_shape(benchmark_run):
    history = benchmark_run[1]["hybrid"].history
    first = history.records[0].val_loss
    best = history.best
    ok = best.val_loss <= 0.7 * first and best.train_loss <= best.val_loss
    ok = ok and history.records[-1].val_loss < first
    record("AC4", "loss curve shape", ok,
           f"first val {first:.4f}, best val {best.val_loss:.4f} at epoch {best.epoch} "
           f"(<= {0.7 * first:.4f}), train at best {best.train_loss:.4f} (<= val)")


def _random_lstm(rng, in_size, hidden):
    return L.LSTMParams(
        rng.standard_normal((4 * hidden, in_size)),
        rng.standard_normal((4 * hidden, hidden)),
        rng.standard_normal(4 * hidden),
    )


def test_ac5_layer_properties():
    rng = make_rng(50)
    failures = []
    for k in range(100):
        T = int(rng.integers(1, 10))
        a, b = _random_lstm(rng, 3, 4), _random_lstm(rng, 3, 4)
        x = 3 * rng.standard_normal((T, 3))
        out, _ = L.bilstm_forward(x, L.BiLSTMParams(a, b))
        swapped, _ = L.bilstm_forward(x[::-1], L.BiLSTMParams(b, a))
        if not np.allclose(swapped, out[::-1], rtol=0, atol=1e-12):
            failures.append(f"symmetry#{k}")
        if not np.all(np.abs(out) < 2.0):
            failures.append(f"bilstm-bound#{k}")
        h, _, _ = L.lstm_cell_step(x[0], rng.uniform(-1, 1, 4), 5 * rng.standard_normal(4), a)
        if not np.all(np.abs(h) < 1.0):
            failures.append(f"cell-bound#{k}")

        _, w, _ = L.attention_pool(10 * rng.standard_normal((T, 4)), L.AttentionParams(10 * rng.standard_normal(4)))
        if not (np.all(w >= 0) and abs(w.sum() - 1.0) <= 1e-12):
            failures.append(f"attention#{k}")

        width = int(rng.integers(1, 5))
        xp = rng.standard_normal((int(rng.integers(1, 15)), 3))
        pooled, cache = L.maxpool1d_forward(xp, width)
        upstream = rng.standard_normal(pooled.shape)
        dx = L.maxpool1d_backward(upstream, cache)
        if abs(dx.sum() - upstream.sum()) > 1e-12 or np.count_nonzero(dx) > upstream.size:
            failures.append(f"pool-mass#{k}")
    record("AC5", "layer properties", not failures,
           "100 instances each of BiLSTM symmetry, hidden bounds, attention simplex, pool gradient mass"
           + (f"; failed: {failures[:5]}" if failures else ""))


def _tally(preds, labels, threshold):
    counts = [0, 0, 0, 0]
    for p, y in zip(preds, labels):
        positive = p >= threshold
        counts[(0 if y else 1) if positive else (3 if y else 2)] += 1
    return tuple(counts)


def test_ac6_metrics_oracle():
    rng = make_rng(60)
    mismatches = 0
    for _ in range(1000):
        n = int(rng.integers(1, 50))
        preds, labels = rng.uniform(0, 1, n), rng.integers(0, 2, n)
        thr = float(rng.uniform(0.01, 0.99))
        c = confusion(preds, labels, thr)
        tp, fp, tn, fn = _tally(preds, labels, thr)
        r = metrics(c, thr)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        expected = ((tp + tn) / n, rec, prec, f1)
        if (c.tp, c.fp, c.tn, c.fn) != (tp, fp, tn, fn) or not np.allclose(
            (r.accuracy, r.recall, r.precision, r.f1), expected, rtol=0, atol=1e-15
        ):
            mismatches += 1
    degenerate = metrics(ConfusionCounts(0, 0, 4, 0))
    conventions = (degenerate.precision, degenerate.recall, degenerate.f1) == (0.0, 0.0, 0.0)
    record("AC6", "metrics oracle", mismatches == 0 and conventions,
           f"{mismatches} mismatches over 1000 triples, zero-denominator conventions "
           f"{'hold' if conventions else 'broken'}")


def test_ac7_pipeline_invariants(tmp_path):
    failures = []
    frame = gen_synthetic(7, 400, 3, 16)
    data = prepare(frame, 16, 1, SplitSpec())
    refit = fit_normalizer(frame.rows(data.train[-1].end_row + 1))
    if not (np.array_equal(refit.mean, data.normalizer.mean) and np.array_equal(refit.std, data.normalizer.std)):
        failures.append("leakage")

    if not (data.train[-1].end_timestamp < data.val[0].end_timestamp
            and data.val[-1].end_timestamp < data.test[0].end_timestamp):
        failures.append("split-order")
    samples = [WindowSample(np.zeros((1, 1)), 0, t, t) for t in range(23)]
    parts = chrono_split(samples, SplitSpec())
    if sum(parts, []) != samples:
        failures.append("split-partition")

    for n in range(1, 30):
        for T in range(1, n + 1):
            for stride in range(1, 6):
                brute = len(range(0, n - T + 1, stride))
                if window_count(n, T, stride) != brute:
                    failures.append(f"count({n},{T},{stride})")
    windows = make_windows(frame, 16, 3)
    if len(windows) != window_count(400, 16, 3):
        failures.append("make_windows")

    csv_path = tmp_path / "f.csv"
    write_csv(frame, csv_path)
    back = load_csv(csv_path)
    if not (np.array_equal(back.values, frame.values) and np.array_equal(back.labels, frame.labels)):
        failures.append("csv-round-trip")

    cfg = RunConfig(model=HybridConfig(conv_blocks=(ConvBlock(3), ConvBlock(3)), hidden=4))
    params = init_params(cfg.model, 3, make_rng(2))
    ck_path = tmp_path / "m.json"
    save_checkpoint(ck_path, Checkpoint(cfg, params, data.normalizer, {}))
    loaded = load_checkpoint(ck_path)
    exact = all(a.tobytes() == b.tobytes() for (_, a), (_, b) in zip(params.tensors(), loaded.params.tensors()))
    X = make_rng(3).standard_normal((100, 16, 3))
    if not exact or not np.array_equal(predict_proba(X, params), predict_proba(X, loaded.params)):
        failures.append("checkpoint-round-trip")
    record("AC7", "pipeline invariants", not failures,
           "leakage, split strictness, window count vs enumeration, CSV and checkpoint round trips"
           + (f"; failed: {failures[:5]}" if failures else ""))


def test_ac8_train_determinism(tmp_path, capsys):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        code = main(["train", "--config", str(BENCHMARK_CONFIG), "--out", str(d / "m.json"), "-q"])
        capsys.readouterr()
        outputs.append((code, (d / "m.json").read_bytes(), (d / "m.history.csv").read_bytes()))
    (c1, ck1, h1), (c2, ck2, h2) = outputs
    ok = c1 == c2 == 0 and ck1 == ck2 and h1 == h2
    epochs = len(h1.splitlines()) - 1
    record("AC8", "train determinism", ok,
           f"checkpoints {'identical' if ck1 == ck2 else 'differ'} ({len(ck1)} bytes), "
           f"history {'identical' if h1 == h2 else 'differs'} ({epochs} epochs)")
