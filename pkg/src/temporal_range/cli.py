"""Command-line interface: train, analyze, oracle, axioms, ablate, gen-data.

Every command is a pure function of its flags, input files, and seed; the
data artifacts it writes (JSON/CSV, and SVG up to a metadata comment) are
byte-identical across reruns.  A run manifest with provenance (command
line, config fingerprint, tool version, timestamp) is written alongside
every output; set ``SOURCE_DATE_EPOCH`` to pin the manifest timestamp.

Exit codes: 0 success, 1 a verification command found residuals over
tolerance, 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .ablation import (ablation_sweep, curve_csv, deployment_check)
from .errors import TemporalRangeError
from .gradients import JacobianMode, LossKind
from .linalg import NormKind, Rng
from .metric import (Aggregation, TRConfig, analyze, config_fingerprint,
                     profile_csv, report_from_json, report_json)
from .models import CellKind, CellSpec, init_model, load_model, save_model
from .oracles import axiom_suite, pipeline_cross_checks
from .svgplot import bar_chart, line_chart
from .tasks import (CopyTaskSpec, ObsKind, ObsVariant, gen_copyk,
                    gen_imitation, gen_repeatfirst, load_dataset,
                    save_dataset)
from .training import Metric, OptConfig, train

RESIDUAL_TOL = 1e-9

_NORMS = {"frobenius": NormKind.FROBENIUS, "spectral": NormKind.SPECTRAL}
_AGGS = {"mean": Aggregation.MEAN, "max": Aggregation.MAX}
_MODES = {"multi": JacobianMode.MULTI_OUTPUT, "final": JacobianMode.FINAL_OUTPUT}
_CELLS = {"linear": CellKind.LINEAR_REC, "gru": CellKind.GRU,
          "lstm": CellKind.LSTM, "lem": CellKind.LEM}
_VARIANTS = {"full": ObsKind.FULL, "stateless": ObsKind.STATELESS,
             "noisy": ObsKind.NOISY_STATELESS}


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return datetime.fromtimestamp(t, tz=timezone.utc).isoformat()


def _out(prefix: Path, ext: str) -> Path:
    """Append an extension to a prefix without clobbering dots in it."""
    return prefix.parent / (prefix.name + ext)


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_manifest(prefix: Path, command: str, config: dict, seed,
                    inputs: list[str], outputs: list[str]) -> None:
    doc = {
        "command": command,
        "argv": sys.argv[1:],
        "config": config,
        "config_fingerprint": config_fingerprint(config),
        "seed": seed,
        "inputs": sorted(inputs),
        "outputs": sorted(outputs),
        "tool_version": __version__,
        "timestamp": _timestamp(),
    }
    _write(_out(prefix, ".manifest.json"),
           json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _add_task_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=["copy", "repeatfirst", "cartpole"],
                   help="generate sequences from this task")
    p.add_argument("--k", type=int, default=3, help="copy offset")
    p.add_argument("--T", type=int, default=32, help="sequence length")
    p.add_argument("--V", type=int, default=4, help="symbol vocabulary size")
    p.add_argument("--variant", choices=sorted(_VARIANTS), default="stateless",
                   help="cartpole observation variant")
    p.add_argument("--sigma", type=float, default=0.1,
                   help="observation noise std for the noisy variant")


def _gen_task_sequences(args, n: int, seed: int):
    rng = Rng(seed)
    if args.task == "copy":
        spec = CopyTaskSpec(k=args.k, T=args.T, V=args.V)
        return gen_copyk(spec, n, rng), {"task": "copy", "k": args.k,
                                         "T": args.T, "V": args.V}
    if args.task == "repeatfirst":
        return (gen_repeatfirst(args.T, args.V, n, rng),
                {"task": "repeatfirst", "T": args.T, "V": args.V})
    if args.task == "cartpole":
        variant = ObsVariant(kind=_VARIANTS[args.variant], sigma=args.sigma)
        return (gen_imitation(variant, n, args.T, rng),
                {"task": "cartpole", "variant": args.variant,
                 "sigma": args.sigma, "T": args.T})
    raise TemporalRangeError(f"unknown task {args.task!r}")


def _load_sequences(args, n: int, seed: int):
    """Sequences from --data if given, else generated from --task flags."""
    if getattr(args, "data", None):
        sequences, header = load_dataset(args.data)
        return sequences, {"source": args.data, **{k: header[k] for k in ("task", "spec")}}
    if not getattr(args, "task", None):
        raise TemporalRangeError("either --data or --task is required")
    sequences, desc = _gen_task_sequences(args, n, seed)
    return sequences, desc


def _cmd_gen_data(args) -> int:
    sequences, desc = _gen_task_sequences(args, args.n, args.seed)
    save_dataset(sequences, args.out, task=desc.pop("task"), spec=desc,
                 seed=args.seed)
    print(f"wrote {len(sequences)} sequences to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cell_kind = _CELLS[args.model]
    sequences, desc = _load_sequences(args, args.n, args.data_seed)
    d = sequences[0].x.shape[1]
    n_classes = int(max(int(s.targets.max()) for s in sequences)) + 1
    spec = CellSpec(kind=cell_kind, input_dim=d, hidden_dim=args.hidden,
                    lem_dt=args.lem_dt)
    encoder_dim = args.encoder_dim if args.encoder_dim > 0 else None
    model = init_model(spec, n_classes, Rng(args.seed), encoder_dim=encoder_dim)
    cfg = OptConfig(lr=args.lr, batch_size=args.batch, steps=args.steps,
                    seed=args.seed, grad_clip=args.clip)
    trained, log = train(model, sequences, cfg, loss=LossKind.CROSS_ENTROPY,
                         metric=Metric.ACCURACY)
    prefix = Path(args.out_prefix)
    ckpt = _out(prefix, ".model.json")
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_model(trained, ckpt)
    _write(_out(prefix, ".loss.csv"), log.to_csv())
    metrics = {
        "final_train_accuracy": log.final_train_metric,
        "final_val_accuracy": log.final_val_metric,
        "steps": len(log.losses),
        "final_loss": log.losses[-1] if log.losses else None,
    }
    _write(_out(prefix, ".metrics.json"),
           json.dumps(metrics, sort_keys=True, indent=2) + "\n")
    config = {"data": desc, "model": args.model, "hidden": args.hidden,
              "encoder_dim": args.encoder_dim, "lr": args.lr,
              "batch": args.batch, "steps": args.steps, "clip": args.clip,
              "seed": args.seed, "data_seed": args.data_seed}
    _write_manifest(prefix, "train", config, args.seed,
                    inputs=[args.data] if args.data else [],
                    outputs=[str(ckpt), str(_out(prefix, ".loss.csv")),
                             str(_out(prefix, ".metrics.json"))])
    print(f"train accuracy {log.final_train_metric:.4f}  "
          f"val accuracy {log.final_val_metric:.4f}  "
          f"wall time {log.wall_time_s:.1f}s")
    print(f"checkpoint: {ckpt}")
    return 0


def _cmd_analyze(args) -> int:
    model = load_model(args.model)
    cfg = TRConfig(norm=_NORMS[args.norm], aggregation=_AGGS[args.agg],
                   mode=_MODES[args.mode], T=args.T)
    sequences, desc = _load_sequences(args, args.n_rollouts, args.seed)
    rollouts = [seq.x for seq in sequences[:args.n_rollouts]]
    report = analyze(model, rollouts, cfg)
    prefix = Path(args.out_prefix)
    _write(_out(prefix, ".report.json"), report_json(report))
    _write(_out(prefix, ".profile.csv"), profile_csv(report))
    lags = list(range(report.config.T))
    weights_by_lag = [float(report.weights_mean[report.config.T - 1 - lag])
                      for lag in lags]
    svg = bar_chart(lags, weights_by_lag, marker_x=report.rho_hat,
                    title="Temporal influence profile",
                    xlabel="lag (steps back)", ylabel="mean weight",
                    comment=f"generated {_timestamp()}")
    _write(_out(prefix, ".profile.svg"), svg)
    config = {"tr": cfg.as_dict(), "model": args.model, "rollouts": desc,
              "n_rollouts": len(rollouts), "seed": args.seed}
    _write_manifest(prefix, "analyze", config, args.seed,
                    inputs=[args.model] + ([args.data] if args.data else []),
                    outputs=[str(_out(prefix, s))
                             for s in (".report.json", ".profile.csv", ".profile.svg")])
    if report.degenerate:
        print("degenerate influence profile: all weights are zero on every "
              "rollout; normalized range undefined")
    else:
        print(f"rho_hat {report.rho_hat:.6g}  (std {report.rho_hat_std:.3g}, "
              f"pooled {report.pooled_rho_hat:.6g})  rho {report.rho:.6g}")
    print(f"report: {_out(prefix, '.report.json')}")
    return 0


def _cmd_oracle(args) -> int:
    residuals = pipeline_cross_checks(Rng(args.seed), trials=args.trials,
                                      norm=_NORMS[args.norm],
                                      inject_fault=args.inject_fault)
    worst = max(residuals.values())
    doc = {"residuals": residuals, "max_residual": worst,
           "tolerance": RESIDUAL_TOL, "trials": args.trials,
           "seed": args.seed, "norm": args.norm,
           "passed": bool(worst < RESIDUAL_TOL)}
    text = json.dumps(doc, sort_keys=True, indent=2) + "\n"
    if args.out:
        _write(Path(args.out), text)
    print(text, end="")
    if worst >= RESIDUAL_TOL:
        worst_name = max(residuals, key=residuals.get)
        print(f"FAIL: worst residual {worst:.3e} ({worst_name})",
              file=sys.stderr)
        return 1
    return 0


def _cmd_axioms(args) -> int:
    report = axiom_suite(Rng(args.seed), trials=args.trials,
                         norm=_NORMS[args.norm])
    text = report.to_json()
    if args.out:
        _write(Path(args.out), text)
    print(text, end="")
    if not report.passed(RESIDUAL_TOL):
        worst = max(report.residuals, key=report.residuals.get)
        print(f"FAIL: worst residual {report.max_residual():.3e} ({worst})",
              file=sys.stderr)
        return 1
    return 0


def _cmd_ablate(args) -> int:
    if args.deploy and not args.report:
        raise TemporalRangeError("--deploy requires --report")
    model = load_model(args.model)
    sequences, desc = _load_sequences(args, args.n, args.seed)
    windows = [int(w) for w in args.windows.split(",")]
    metric = Metric.ACCURACY if args.metric == "accuracy" else Metric.MSE
    curve = ablation_sweep(model, sequences, windows, metric)
    prefix = Path(args.out_prefix)
    _write(_out(prefix, ".curve.csv"), curve_csv(curve))
    report = None
    if args.report:
        report = report_from_json(Path(args.report).read_text(encoding="utf-8"))
    svg = line_chart(curve.windows, curve.normalized,
                     marker_x=None if report is None else report.rho_hat,
                     title="Window ablation",
                     xlabel="window m", ylabel="normalized performance",
                     comment=f"generated {_timestamp()}")
    _write(_out(prefix, ".curve.svg"), svg)
    outputs = [str(_out(prefix, ".curve.csv")),
               str(_out(prefix, ".curve.svg"))]
    if args.deploy:
        check = deployment_check(model, sequences, report, metric)
        doc = {
            "tr_value": check.tr_value, "window": check.window,
            "half_window": check.half_window, "baseline": check.baseline,
            "perf_window": check.perf_window, "perf_half": check.perf_half,
            "retention_window": check.retention_window,
            "retention_half": check.retention_half,
            "metric": check.metric.value,
        }
        _write(_out(prefix, ".deployment.json"),
               json.dumps(doc, sort_keys=True, indent=2) + "\n")
        outputs.append(str(_out(prefix, ".deployment.json")))
        print(f"deployment: window {check.window} retention "
              f"{check.retention_window:.3f}, half window {check.half_window} "
              f"retention {check.retention_half:.3f}")
    config = {"model": args.model, "data": desc, "windows": windows,
              "metric": args.metric, "seed": args.seed,
              "report": args.report, "deploy": bool(args.deploy)}
    _write_manifest(prefix, "ablate", config, args.seed,
                    inputs=[p for p in (args.model, args.data, args.report) if p],
                    outputs=outputs)
    for m, norm in zip(curve.windows, curve.normalized):
        print(f"m={m:>3}  normalized {norm:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="temporal-range",
        description="Temporal range analysis of sequence models: how far "
                    "back does a trained model actually look?")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a dataset container")
    _add_task_flags(p)
    p.add_argument("--n", type=int, default=512, help="number of sequences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset path")
    p.set_defaults(func=_cmd_gen_data, task_required=True)

    p = sub.add_parser("train", help="train a model on a task or dataset")
    _add_task_flags(p)
    p.add_argument("--data", help="train on this dataset file instead of --task")
    p.add_argument("--n", type=int, default=2000,
                   help="sequences to generate when using --task")
    p.add_argument("--model", choices=sorted(_CELLS), default="gru")
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--encoder-dim", type=int, default=0,
                   help="tanh encoder width; 0 means identity encoder")
    p.add_argument("--lem-dt", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--clip", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("analyze", help="measure the temporal range of a checkpoint")
    _add_task_flags(p)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", help="rollouts from this dataset file")
    p.add_argument("--n-rollouts", type=int, default=16)
    p.add_argument("--norm", choices=sorted(_NORMS), default="frobenius")
    p.add_argument("--agg", choices=sorted(_AGGS), default="mean")
    p.add_argument("--mode", choices=sorted(_MODES), default="multi")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("oracle", help="closed-form cross-checks of the pipeline")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--norm", choices=sorted(_NORMS), default="frobenius")
    p.add_argument("--out", help="write the residual report here")
    p.add_argument("--inject-fault", action="store_true",
                   help="negative control: corrupt one closed-form weight")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("axioms", help="randomized axiom suite for the range forms")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--norm", choices=sorted(_NORMS), default="frobenius")
    p.add_argument("--out", help="write the residual report here")
    p.set_defaults(func=_cmd_axioms)

    p = sub.add_parser("ablate", help="window ablation of a trained checkpoint")
    _add_task_flags(p)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--data", help="evaluate on this dataset file")
    p.add_argument("--n", type=int, default=256,
                   help="sequences to generate when using --task")
    p.add_argument("--windows", default="1,2,4,8,16,32")
    p.add_argument("--metric", choices=["accuracy", "mse"], default="accuracy")
    p.add_argument("--report", help="range report JSON for the rho-hat marker")
    p.add_argument("--deploy", action="store_true",
                   help="also run the deployment window check (needs --report)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TemporalRangeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
