"""``riskseq`` command line: train, eval, predict, gradcheck, synth, compare."""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import gradcheck
from .checkpoint import Checkpoint, atomic_write, history_summary, load_checkpoint, save_checkpoint
from .config import RunConfig, SyntheticConfig, load_config
from .datapipe import FeatureFrame, apply_normalizer, gen_synthetic, load_csv, prepare, window_matrices, write_csv
from .errors import DataError, RiskSeqError
from .evaluation import comparison_json, comparison_text, compare_models, evaluate, train_and_evaluate
from .network import predict_proba
from .training import TrainHistory

log = logging.getLogger("riskseq")

GRADCHECK_TOL = 1e-4


class CommandFailed(RiskSeqError):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _setup_logging(verbose: bool) -> None:
    root = logging.getLogger("riskseq")
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    root.addHandler(handler)
    root.setLevel(logging.INFO if verbose else logging.WARNING)
    root.propagate = False


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_seed(args.seed)


def _synthetic(cfg: RunConfig, syn: SyntheticConfig | None = None) -> FeatureFrame:
    syn = syn or cfg.data.synthetic
    return gen_synthetic(
        cfg.seed,
        syn.n_rows,
        syn.n_features,
        cfg.window.length,
        regime_strength=syn.regime_strength,
        noise_std=syn.noise_std,
        ar_coef=syn.ar_coef,
        episode_len=syn.episode_len,
    )


def _frame(cfg: RunConfig, data_path: str | None) -> FeatureFrame:
    path = data_path or cfg.data.path
    if path:
        return load_csv(path)
    return _synthetic(cfg)


def history_csv(history: TrainHistory) -> str:
    lines = ["epoch,train_loss,val_loss,val_acc"]
    for r in history.records:
        lines.append(f"{r.epoch},{r.train_loss!r},{r.val_loss!r},{r.val_acc!r}")
    return "\n".join(lines) + "\n"


def _print_json(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2) + "\n")


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if not args.out:
        raise CommandFailed("usage", "train needs --out for the checkpoint")
    frame = _frame(cfg, args.data)
    data = prepare(frame, cfg.window.length, cfg.window.stride, cfg.split)
    run = train_and_evaluate(data, cfg.model, cfg.train, cfg.seed, cfg.threshold)
    history_path = args.history or str(Path(args.out).with_suffix("")) + ".history.csv"
    summary = history_summary(run.history)
    ckpt = Checkpoint(cfg, run.params, data.normalizer, summary)
    save_checkpoint(args.out, ckpt)
    atomic_write(history_path, history_csv(run.history))
    _print_json({**summary, "test": run.report.to_dict()})
    return 0


def _check_features(ckpt: Checkpoint, frame: FeatureFrame) -> None:
    if frame.n_features != ckpt.params.n_features:
        raise DataError(
            f"checkpoint expects {ckpt.params.n_features} features, data has {frame.n_features}"
        )


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.config.with_seed(args.seed)
    frame = _frame(cfg, args.data)
    _check_features(ckpt, frame)
    if frame.labels is None:
        raise DataError("evaluation data must have a label column")
    data = prepare(frame, cfg.window.length, cfg.window.stride, cfg.split, ckpt.normalizer)
    if args.split == "all":
        X = np.concatenate([data.arrays(s)[0] for s in ("train", "val", "test")])
        y = np.concatenate([data.arrays(s)[1] for s in ("train", "val", "test")])
    else:
        X, y = data.arrays(args.split)
    _print_json(evaluate(ckpt.params, X, y, cfg.threshold).to_dict())
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if not args.out:
        raise CommandFailed("usage", "predict needs --out for the predictions CSV")
    cfg = ckpt.config
    frame = _frame(cfg.with_seed(args.seed), args.data)
    _check_features(ckpt, frame)
    T = cfg.window.length
    if len(frame) < T:
        raise DataError(f"data has {len(frame)} rows, the model needs at least {T}")
    X, ends = window_matrices(apply_normalizer(frame, ckpt.normalizer), T, 1)
    probs = predict_proba(X, ckpt.params)
    out = io.StringIO()
    out.write("end_timestamp,probability,predicted_label\n")
    for e, p in zip(ends, probs):
        out.write(f"{int(frame.timestamps[e])},{float(p)!r},{int(p >= cfg.threshold)}\n")
    atomic_write(args.out, out.getvalue())
    return 0


def cmd_gradcheck(args) -> int:
    x, label, params = gradcheck.small_network(
        args.seed if args.seed is not None else 0,
        T=args.T, F=args.F, hidden=args.hidden, channels=args.channels, blocks=args.blocks,
        head=args.head,
    )
    results = gradcheck.check_gradients(
        x, label, params, h=args.step, gradient_fn=gradcheck.analytic_gradient
    )
    bad = []
    for r in results:
        status = "ok" if r.worst <= GRADCHECK_TOL else "FAIL"
        sys.stdout.write(f"{r.name:<22} n={r.size:<5} worst_rel_err={r.worst:.3e} {status}\n")
        if status != "ok":
            bad.append(r.name)
    if bad:
        raise CommandFailed("gradcheck", f"tensors exceed {GRADCHECK_TOL:g}: {', '.join(bad)}")
    return 0


def cmd_synth(args) -> int:
    cfg = _run_config(args)
    if not args.out:
        raise CommandFailed("usage", "synth needs --out")
    syn = cfg.data.synthetic
    overrides = {}
    if args.rows is not None:
        overrides["n_rows"] = args.rows
    if args.features is not None:
        overrides["n_features"] = args.features
    if overrides:
        syn = SyntheticConfig(**{**syn.__dict__, **overrides})
    frame = _synthetic(cfg, syn)
    buf = io.StringIO()
    write_csv(frame, buf)
    try:
        atomic_write(args.out, buf.getvalue())
    except OSError as exc:
        raise CommandFailed("io", f"cannot write {args.out}: {exc.strerror}") from None
    return 0


def cmd_compare(args) -> int:
    cfg = _run_config(args)
    if not args.out:
        raise CommandFailed("usage", "compare needs --out for the JSON table")
    frame = _frame(cfg, args.data)
    data = prepare(frame, cfg.window.length, cfg.window.stride, cfg.split)
    rows = compare_models(data, cfg.model, cfg.train, seed=cfg.seed, threshold=cfg.threshold)
    atomic_write(args.out, json.dumps(comparison_json(rows), indent=2) + "\n")
    sys.stdout.write(comparison_text(rows) + "\n")
    failed = [r.kind for r in rows if not r.ok]
    if failed:
        raise CommandFailed("training", f"models failed: {', '.join(failed)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration JSON")
    common.add_argument("--data", help="feature CSV (default: config data source)")
    common.add_argument("--out", help="output path")
    common.add_argument("--seed", type=_u64, help="overrides the config seed")
    common.add_argument("-q", "--quiet", action="store_true", help="suppress progress lines")

    parser = argparse.ArgumentParser(prog="riskseq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="train and write a checkpoint")
    p.add_argument("--history", help="per-epoch history CSV (default: <out>.history.csv)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="print metrics for a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", parents=[common], help="score every window of a CSV")
    p.add_argument("checkpoint")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of backprop")
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--F", type=int, default=4)
    p.add_argument("--hidden", type=int, default=6)
    p.add_argument("--channels", type=int, default=3)
    p.add_argument("--blocks", type=int, default=2)
    p.add_argument("--head", choices=("attention", "last_step"), default="attention")
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic labelled CSV")
    p.add_argument("--rows", type=int)
    p.add_argument("--features", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("compare", parents=[common], help="hybrid vs cnn_only vs bilstm_only")
    p.set_defaults(func=cmd_compare)
    return parser


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer: {text}")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(not args.quiet)
    try:
        return args.func(args)
    except RiskSeqError as exc:
        sys.stderr.write(f"error: {exc.category}: {exc}\n")
        return 1
    except (ValueError, OSError) as exc:
        category = "io" if isinstance(exc, OSError) else "invalid"
        sys.stderr.write(f"error: {category}: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
