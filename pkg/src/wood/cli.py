"""Command-line front end: data generation, training, evaluation, scoring.

Exit codes: 0 success, 1 usage error, 2 data/format/config error, 3 numeric
failure. Configuration precedence is flags > config file > defaults; the
config file (plain ``key=value`` lines) is echoed verbatim into the output
directory for provenance. Every command is deterministic given its flags
and seed.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import time
from pathlib import Path

import numpy as np

from .data import (
    Dataset,
    Role,
    SyntheticKind,
    SyntheticSpec,
    load_dataset_csv,
    save_dataset_csv,
    synth,
)
from .detect import (
    Detector,
    calibrate,
    evaluate,
    evaluate_with_detector,
    histogram_csv_lines,
    report_text,
)
from .errors import ConfigError, FormatError, InputError, NumericError, WoodError
from .geometry import EvalPath, ScoreConfig, score_argmin_class, wood_score
from .model import forward
from .trainer import (
    TrainConfig,
    fit,
    load_checkpoint,
    metrics_csv_lines,
    model_from_checkpoint,
    save_checkpoint,
)
from .transport import CostKind, SinkhornConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad flags; the CLI contract wants 1.
    def error(self, message):
        raise _UsageError(message)


def _tnr_value(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"--tnr must be in (0, 1), got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {value}")
    return value


def worker_cap() -> int:
    """Parallelism cap from WOOD_THREADS (0 = auto). Validated, currently
    informational: all library math is single-threaded."""
    raw = os.environ.get("WOOD_THREADS", "0")
    try:
        value = int(raw)
    except ValueError as exc:
        raise ConfigError(f"WOOD_THREADS must be an integer, got {raw!r}") from exc
    if value < 0:
        raise ConfigError(f"WOOD_THREADS must be >= 0, got {value}")
    return value


def _read_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
    return values


_CONFIG_KEYS = {
    "beta": float,
    "b_ind": int,
    "b_ood": int,
    "matrix": str,
    "eval_path": str,
    "lam": float,
    "epochs": int,
    "lr": float,
    "momentum": float,
    "seed": int,
    "hidden": str,
    "tnr": float,
}


def _merge_config(args: argparse.Namespace, file_values: dict[str, str]) -> None:
    # flags > config file > defaults: parser defaults are None sentinels for
    # the keys a config file may provide.
    unknown = set(file_values) - set(_CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, caster in _CONFIG_KEYS.items():
        if getattr(args, key, None) is None and key in file_values:
            try:
                setattr(args, key, caster(file_values[key]))
            except ValueError as exc:
                raise ConfigError(f"config key {key}: {exc}") from exc


def _score_config(matrix: str, eval_path: str, lam: float) -> ScoreConfig:
    try:
        kind = CostKind(matrix)
        path = EvalPath(eval_path)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    return ScoreConfig(
        matrix_kind=kind,
        evaluation=path,
        sinkhorn=SinkhornConfig(lam=lam),
    )


def _echo_run_config(out_dir: Path, pairs: dict) -> None:
    lines = [f"{key}={value}" for key, value in pairs.items()]
    (out_dir / "run_config.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _prepare_out(args) -> Path:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if getattr(args, "config", None):
        shutil.copyfile(args.config, out_dir / "config.txt")
    return out_dir


def _load_features_csv(path: str) -> Dataset:
    return load_dataset_csv(path, role=Role.OOD)


def _dataset_from_args(path: str, role: Role, n_classes: int | None = None) -> Dataset:
    if path.endswith(".csv"):
        return load_dataset_csv(path, role=role, n_classes=n_classes)
    raise ConfigError(f"expected a .csv dataset, got {path}")


def _scores_for(model, score_cfg: ScoreConfig, features: np.ndarray) -> np.ndarray:
    probs = forward(model, features).probs
    return np.array([wood_score(p, score_cfg) for p in probs])


def _cmd_gen_data(args) -> int:
    out_dir = _prepare_out(args)
    kind = SyntheticKind(args.kind)
    spec = SyntheticSpec(
        kind=kind,
        k=args.k,
        n_per_class=args.n,
        dim=args.dim,
        separation=args.sep,
        noise=args.noise,
        seed=args.seed,
    )
    ds = synth(spec)
    name = "ind.csv" if ds.role is Role.IND else "ood.csv"
    save_dataset_csv(ds, out_dir / name)
    _echo_run_config(
        out_dir,
        {
            "command": "gen-data",
            "kind": args.kind,
            "k": args.k,
            "n": args.n,
            "dim": args.dim,
            "sep": args.sep,
            "noise": args.noise,
            "seed": args.seed,
        },
    )
    print(f"wrote {out_dir / name}: {ds.n} rows, dim={ds.dim}, role={ds.role.value}")
    return EXIT_OK


def _cmd_train(args) -> int:
    out_dir = _prepare_out(args)
    if args.config:
        _merge_config(args, _read_config_file(args.config))
    defaults = {
        "beta": 0.1,
        "b_ind": 50,
        "b_ood": 10,
        "matrix": "dynamic",
        "eval_path": "closed",
        "lam": 50.0,
        "epochs": 50,
        "lr": 0.01,
        "momentum": 0.9,
        "seed": 0,
        "hidden": "128,64",
    }
    for key, fallback in defaults.items():
        if getattr(args, key) is None:
            setattr(args, key, fallback)

    score_cfg = _score_config(args.matrix, args.eval_path, args.lam)
    cfg = TrainConfig(
        epochs=args.epochs,
        beta=args.beta,
        b_ind=args.b_ind,
        b_ood=args.b_ood,
        lr=args.lr,
        momentum=args.momentum,
        seed=args.seed,
        score=score_cfg,
    )
    hidden = tuple(int(h) for h in str(args.hidden).split(",") if h)

    ind_set = _dataset_from_args(args.ind, Role.IND)
    ood_set = _dataset_from_args(args.ood, Role.OOD) if args.ood else None

    ckpt, metrics = fit(ind_set, ood_set, cfg, hidden=hidden)
    save_checkpoint(ckpt, out_dir / "checkpoint.json")
    (out_dir / "metrics.csv").write_text(
        "\n".join(metrics_csv_lines(metrics)) + "\n", encoding="ascii"
    )
    _echo_run_config(
        out_dir,
        {
            "command": "train",
            "ind": args.ind,
            "ood": args.ood,
            "beta": args.beta,
            "b_ind": args.b_ind,
            "b_ood": args.b_ood,
            "matrix": args.matrix,
            "eval_path": args.eval_path,
            "lam": args.lam,
            "epochs": args.epochs,
            "lr": args.lr,
            "momentum": args.momentum,
            "seed": args.seed,
            "hidden": args.hidden,
        },
    )
    last = metrics[-1]
    print(
        f"trained {ckpt.layer_dims} for {cfg.epochs} epochs:"
        f" total={last.total:.6f} ce={last.ce_term:.6f} ood={last.ood_term:.6f}"
    )
    print(f"wrote {out_dir / 'checkpoint.json'} and {out_dir / 'metrics.csv'}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    out_dir = _prepare_out(args)
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    score_cfg = _score_config(args.matrix, args.eval_path, args.lam)

    ind_set = _dataset_from_args(args.ind, Role.IND, n_classes=ckpt.n_classes)
    ood_set = _dataset_from_args(args.ood, Role.OOD)
    for ds, name in ((ind_set, "ind"), (ood_set, "ood")):
        if ds.dim != model.input_dim:
            raise ConfigError(
                f"{name} feature dim {ds.dim} does not match checkpoint input dim"
                f" {model.input_dim}"
            )
    if ind_set.n_classes != ckpt.n_classes:
        raise ConfigError(
            f"ind labels imply {ind_set.n_classes} classes, checkpoint has {ckpt.n_classes}"
        )

    ind_scores = _scores_for(model, score_cfg, ind_set.features)
    ood_scores = _scores_for(model, score_cfg, ood_set.features)

    if args.calib_on_eval:
        report = evaluate(ind_scores, ood_scores, args.tnr)
        n_calib = ind_scores.size
    else:
        # Hold out a calibration slice of the InD test scores so the
        # threshold is never fitted on the evaluated samples.
        n_calib = max(1, int(round(args.calib_frac * ind_scores.size)))
        rng = np.random.default_rng(args.seed if args.seed is not None else 0)
        perm = rng.permutation(ind_scores.size)
        calib_scores = ind_scores[perm[:n_calib]]
        eval_scores = ind_scores[perm[n_calib:]]
        if eval_scores.size == 0:
            raise ConfigError("calibration fraction leaves no evaluation samples")
        det = calibrate(calib_scores, args.tnr, score_cfg)
        report = evaluate_with_detector(det, eval_scores, ood_scores)

    probs = forward(model, ind_set.features).probs
    accuracy = float(np.mean(np.argmax(probs, axis=1) == ind_set.labels))

    text = report_text(report)
    text += f"n_calibration: {n_calib}\n"
    text += f"ind_accuracy: {accuracy!r}\n"
    (out_dir / "report.txt").write_text(text, encoding="ascii")
    (out_dir / "hist_ind.csv").write_text(
        "\n".join(histogram_csv_lines(report, "ind")) + "\n", encoding="ascii"
    )
    (out_dir / "hist_ood.csv").write_text(
        "\n".join(histogram_csv_lines(report, "ood")) + "\n", encoding="ascii"
    )
    _echo_run_config(
        out_dir,
        {
            "command": "evaluate",
            "checkpoint": args.checkpoint,
            "ind": args.ind,
            "ood": args.ood,
            "tnr": args.tnr,
            "matrix": args.matrix,
            "eval_path": args.eval_path,
            "lam": args.lam,
            "calib_frac": args.calib_frac,
            "calib_on_eval": args.calib_on_eval,
            "seed": args.seed,
        },
    )
    print(text, end="")
    print(f"wrote {out_dir / 'report.txt'}")
    return EXIT_OK


def _cmd_score(args) -> int:
    out_dir = _prepare_out(args)
    ckpt = load_checkpoint(args.checkpoint)
    model = model_from_checkpoint(ckpt)
    score_cfg = _score_config(args.matrix, args.eval_path, args.lam)
    ds = _load_features_csv(args.features)
    if ds.dim != model.input_dim:
        raise ConfigError(
            f"feature dim {ds.dim} does not match checkpoint input dim {model.input_dim}"
        )
    probs = forward(model, ds.features).probs
    det = Detector(args.epsilon, score_cfg, args.tnr) if args.epsilon is not None else None

    lines = ["index,argmin_class,score" + (",decision" if det else "")]
    for i, p in enumerate(probs):
        score = wood_score(p, score_cfg)
        k_star = score_argmin_class(p, score_cfg)
        row = f"{i},{k_star},{score!r}"
        if det:
            row += f",{int(score > det.epsilon)}"
        lines.append(row)
    (out_dir / "scores.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"wrote {out_dir / 'scores.csv'} ({ds.n} rows)")
    return EXIT_OK


def _cmd_bench_score(args) -> int:
    if args.eval_path == "closed":
        raise _UsageError(
            "bench-score only measures the sinkhorn path; both matrix kinds"
            " are O(K) in closed form"
        )
    out_dir = _prepare_out(args)
    ks = [int(k) for k in args.k.split(",") if k]
    if not ks or any(k < 2 for k in ks):
        raise _UsageError(f"--k must list integers >= 2, got {args.k!r}")
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    lines = ["K,binary_ms,dynamic_ms,ratio"]
    summary = []
    for k in ks:
        f = rng.dirichlet(np.ones(k))
        binary_cfg = _score_config("binary", "sinkhorn", args.lam)
        dynamic_cfg = _score_config("dynamic", "sinkhorn", args.lam)
        wood_score(f, binary_cfg)  # warmup
        wood_score(f, dynamic_cfg)
        started = time.perf_counter()
        for _ in range(args.repeats):
            wood_score(f, binary_cfg)
        binary_ms = (time.perf_counter() - started) * 1000.0 / args.repeats
        started = time.perf_counter()
        for _ in range(args.repeats):
            wood_score(f, dynamic_cfg)
        dynamic_ms = (time.perf_counter() - started) * 1000.0 / args.repeats
        ratio = binary_ms / dynamic_ms if dynamic_ms > 0 else float("inf")
        lines.append(f"{k},{binary_ms!r},{dynamic_ms!r},{ratio!r}")
        summary.append((k, binary_ms, dynamic_ms, ratio))
    (out_dir / "bench.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    for k, bms, dms, ratio in summary:
        print(f"K={k:4d} binary={bms:10.4f}ms dynamic={dms:10.4f}ms ratio={ratio:8.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wood", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write synthetic datasets as CSV")
    gen.add_argument("--kind", required=True, choices=[k.value for k in SyntheticKind])
    gen.add_argument("--k", type=int, default=3)
    gen.add_argument("--n", type=int, default=200)
    gen.add_argument("--dim", type=int, default=2)
    gen.add_argument("--sep", type=_positive_float, default=4.0)
    gen.add_argument("--noise", type=_positive_float, default=0.5)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_data)

    train = sub.add_parser("train", help="train a classifier with the mixed-batch loss")
    train.add_argument("--ind", required=True, help="labeled InD training CSV")
    train.add_argument("--ood", default=None, help="unlabeled OOD training CSV")
    train.add_argument("--out", required=True)
    train.add_argument("--config", default=None, help="key=value config file")
    train.add_argument("--beta", type=float, default=None)
    train.add_argument("--b-ind", dest="b_ind", type=int, default=None)
    train.add_argument("--b-ood", dest="b_ood", type=int, default=None)
    train.add_argument("--matrix", choices=["binary", "dynamic"], default=None)
    train.add_argument("--eval-path", dest="eval_path", choices=["closed", "sinkhorn"], default=None)
    train.add_argument("--lambda", dest="lam", type=_positive_float, default=None)
    train.add_argument("--epochs", type=int, default=None)
    train.add_argument("--lr", type=_positive_float, default=None)
    train.add_argument("--momentum", type=float, default=None)
    train.add_argument("--seed", type=int, default=None)
    train.add_argument("--hidden", default=None, help="comma-separated hidden widths")
    train.set_defaults(func=_cmd_train)

    ev = sub.add_parser("evaluate", help="calibrate and report FNR/AUROC")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--ind", required=True, help="labeled InD test CSV")
    ev.add_argument("--ood", required=True, help="unlabeled OOD test CSV")
    ev.add_argument("--tnr", type=_tnr_value, default=0.95)
    ev.add_argument("--matrix", choices=["binary", "dynamic"], default="dynamic")
    ev.add_argument("--eval-path", dest="eval_path", choices=["closed", "sinkhorn"], default="closed")
    ev.add_argument("--lambda", dest="lam", type=_positive_float, default=50.0)
    ev.add_argument("--calib-frac", dest="calib_frac", type=float, default=0.2)
    ev.add_argument(
        "--calib-on-eval",
        dest="calib_on_eval",
        action="store_true",
        help="calibrate on the full evaluated InD set (no held-out slice)",
    )
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=_cmd_evaluate)

    sc = sub.add_parser("score", help="per-sample scores for a feature CSV")
    sc.add_argument("--checkpoint", required=True)
    sc.add_argument("--features", required=True)
    sc.add_argument("--matrix", choices=["binary", "dynamic"], default="dynamic")
    sc.add_argument("--eval-path", dest="eval_path", choices=["closed", "sinkhorn"], default="closed")
    sc.add_argument("--lambda", dest="lam", type=_positive_float, default=50.0)
    sc.add_argument("--epsilon", type=float, default=None)
    sc.add_argument("--tnr", type=_tnr_value, default=0.95)
    sc.add_argument("--out", required=True)
    sc.set_defaults(func=_cmd_score)

    bench = sub.add_parser("bench-score", help="time binary vs dynamic sinkhorn scoring")
    bench.add_argument("--k", default="10,50,100", help="comma-separated class counts")
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--eval-path", dest="eval_path", choices=["closed", "sinkhorn"], default="sinkhorn")
    bench.add_argument("--lambda", dest="lam", type=_positive_float, default=50.0)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", required=True)
    bench.set_defaults(func=_cmd_bench_score)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        worker_cap()
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, ConfigError, InputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError,) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except WoodError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
