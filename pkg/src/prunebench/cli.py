"""Command line interface.

Every command that writes an output directory also drops a run_manifest.json
recording the command, arguments, seeds and artifact list; rerunning with
the same manifest reproduces data outputs bit-identically (timings excluded).
Exit codes: 0 success, 2 argument or validation error, 1 runtime failure.
The PRUNEBENCH_SEED environment variable overrides the default seed 42.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    BenchmarkReport,
    benchmark,
    compare_sparse_dense,
    profile_fractions,
    reports_csv,
)
from .inference import forward_profiled
from .model import ModelSpec, build_model, load_model, model_memory_mb, save_model
from .pruning import prune_structured, prune_unstructured
from .reparam import derive_config, resolve_config, standard_configs
from .tensorops import DTYPE
from .training import (
    SynthDataset,
    TrainConfig,
    evaluate,
    experiment_lr_sweep,
    experiment_prune_vs_direct,
    loss_history_csv,
    train,
)

PROFILE_ORDER = ("recurrent", "conv_deconv", "other")


def _default_seed() -> int:
    return int(os.environ.get("PRUNEBENCH_SEED", "42"))


@dataclass
class RunManifest:
    """Reproducibility record written to every output directory."""

    command: str
    argv: list
    seeds: dict
    artifacts: list
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(
            {"command": self.command, "argv": self.argv, "seeds": self.seeds,
             "artifacts": self.artifacts, "version": self.version},
            indent=2) + "\n"


def _write_manifest(out: Path, args, seeds: dict, artifacts: list) -> None:
    out.mkdir(parents=True, exist_ok=True)
    doc = RunManifest(args.command, list(args.argv), seeds, sorted(artifacts))
    (out / "run_manifest.json").write_text(doc.to_json())


def _config_label(params) -> str:
    for name, p in standard_configs().items():
        if p == params:
            return name
    return str(params)


def _parse_floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ValueError(f"expected a comma-separated number list, got {text!r}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _cmd_derive_config(args) -> int:
    if args.all:
        table = standard_configs()
        if args.json:
            print(json.dumps({k: list(v.as_tuple()) for k, v in table.items()},
                             indent=2))
        else:
            for name, p in table.items():
                print(f"{name} {p}")
        return 0
    if args.base is None or args.fraction is None:
        raise ValueError("derive-config needs --base and --fraction (or --all)")
    base = resolve_config(args.base)
    result = derive_config(base, args.fraction)
    if args.json:
        print(json.dumps({"base": list(base.as_tuple()),
                          "fraction": args.fraction,
                          "config": list(result.as_tuple())}))
    else:
        print(result)
    return 0


def _cmd_init(args) -> int:
    params = resolve_config(args.config)
    w = build_model(ModelSpec(params, args.freq_bins), seed=args.seed)
    out = Path(args.out)
    save_model(w, out)
    _write_manifest(out, args, {"seed": args.seed},
                    ["manifest.json", "weights.bin"])
    print(f"initialized {_config_label(params)} ({w.param_count} params, "
          f"{model_memory_mb(w):.3f} MB) in {out}")
    return 0


def _train_like(args, arm: str) -> int:
    w = load_model(args.model)
    dataset = SynthDataset.generate(args.data_seed, args.sequences,
                                    args.frames, w.spec.freq_bins, args.snr_db)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                      batch_size=args.batch_size, seed=args.seed)
    trained, history = train(w, dataset, cfg)
    out = Path(args.out)
    save_model(trained, out)
    (out / "loss_history.csv").write_text(loss_history_csv({arm: history}))
    _write_manifest(out, args,
                    {"seed": args.seed, "data_seed": args.data_seed},
                    ["manifest.json", "weights.bin", "loss_history.csv"])
    print(f"{arm}: {args.epochs} epochs, loss {history[0]:.6g} -> "
          f"{history[-1]:.6g}, saved to {out}")
    return 0


def _cmd_train(args) -> int:
    return _train_like(args, "train")


def _cmd_finetune(args) -> int:
    return _train_like(args, "finetune")


def _cmd_prune(args) -> int:
    if args.target is None and args.unstructured is None:
        raise ValueError("prune needs --target and/or --unstructured")
    w = load_model(args.model)
    if args.target is not None:
        w = prune_structured(w, resolve_config(args.target))
    if args.unstructured is not None:
        w = prune_unstructured(w, args.unstructured)
    out = Path(args.out)
    save_model(w, out)
    _write_manifest(out, args, {}, ["manifest.json", "weights.bin"])
    print(f"pruned model -> {_config_label(w.spec.params)} "
          f"({w.param_count} params, {model_memory_mb(w):.3f} MB) in {out}")
    return 0


def _cmd_eval(args) -> int:
    w = load_model(args.model)
    dataset = SynthDataset.generate(args.data_seed, args.sequences,
                                    args.frames, w.spec.freq_bins, args.snr_db)
    value = evaluate(w, dataset)
    if args.json:
        print(json.dumps({"eval_loss": value, "data_seed": args.data_seed,
                          "sequences": args.sequences, "frames": args.frames}))
    else:
        print(f"eval_loss {value:.8g}")
    return 0


def _cmd_benchmark(args) -> int:
    reports = []
    for model_dir in args.models:
        w = load_model(model_dir)
        reports.append(benchmark(
            w, frames_per_sample=args.frames, samples=args.samples,
            warmup=args.warmup, seed=args.seed,
            config_name=_config_label(w.spec.params)))
    csv_text = reports_csv(reports, args.baseline)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        artifacts = ["benchmark.csv"]
        (out / "benchmark.csv").write_text(csv_text)
        for r in reports:
            name = f"benchmark_{r.config_name.replace(',', '_')}.json"
            (out / name).write_text(r.to_json())
            artifacts.append(name)
        _write_manifest(out, args, {"seed": args.seed}, artifacts)
    print(csv_text, end="")
    return 0


def _cmd_profile(args) -> int:
    w = load_model(args.model)
    rng = np.random.default_rng(args.seed)
    frames = rng.random((args.frames, w.spec.freq_bins)).astype(DTYPE)
    _, times = forward_profiled(w, frames)
    fractions = profile_fractions(times)
    label = _config_label(w.spec.params)
    print(f"profile of {label} over {args.frames} frames "
          f"(freq_bins {w.spec.freq_bins}):")
    for key in PROFILE_ORDER:
        print(f"  {key:<12} {100 * fractions[key]:6.2f}%  {times[key]:.4f}s")
    if args.json:
        print(json.dumps({"config": label, "frames": args.frames,
                          "seconds": times, "fractions": fractions}))
    return 0


def _cmd_compare(args) -> int:
    if not args.sparse:
        raise ValueError("compare currently supports only --sparse")
    w = load_model(args.model)
    fracs = _parse_floats(args.fracs)
    reports = compare_sparse_dense(
        w, fracs, frames_per_sample=args.frames, samples=args.samples,
        warmup=args.warmup, seed=args.seed)
    csv_text = reports_csv(reports, "sparse_0")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sparse_compare.csv").write_text(csv_text)
        artifacts = ["sparse_compare.csv"]
        for r in reports:
            name = f"benchmark_{r.config_name}.json"
            (out / name).write_text(r.to_json())
            artifacts.append(name)
        _write_manifest(out, args, {"seed": args.seed}, artifacts)
    print(csv_text, end="")
    return 0


def _cmd_ablate(args) -> int:
    w = load_model(args.model)
    target = resolve_config(args.target)
    dataset = SynthDataset.generate(args.data_seed, args.sequences,
                                    args.frames, w.spec.freq_bins, args.snr_db)
    eval_set = SynthDataset.generate(args.eval_seed, max(2, args.sequences // 3),
                                     args.frames, w.spec.freq_bins, args.snr_db)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs,
                      batch_size=args.batch_size, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = {"seed": args.seed, "data_seed": args.data_seed,
             "eval_seed": args.eval_seed}

    if args.mode == "prune-vs-direct":
        result = experiment_prune_vs_direct(
            w, target, cfg, dataset, eval_set,
            pretrain_epochs=args.pretrain_epochs)
        csv_text = loss_history_csv({"finetune": result.pruned_history,
                                     "direct": result.direct_history})
        summary = {
            "target": list(target.as_tuple()),
            "pruned_pre_loss": result.pruned_pre_loss,
            "pruned_final_loss": result.pruned_final_loss,
            "direct_final_loss": result.direct_final_loss,
        }
        (out / "losses.csv").write_text(csv_text)
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        _write_manifest(out, args, seeds, ["losses.csv", "summary.json"])
        print(csv_text, end="")
        print(f"pruned_pre {result.pruned_pre_loss:.6g}  "
              f"finetuned {result.pruned_final_loss:.6g}  "
              f"direct {result.direct_final_loss:.6g}")
    else:
        lrs = _parse_floats(args.lrs)
        rows = experiment_lr_sweep(w, target, lrs, cfg, dataset, eval_set)
        csv_text = loss_history_csv(
            {f"lr_{row.learning_rate:g}": row.history for row in rows})
        summary = {f"{row.learning_rate:g}": row.final_loss for row in rows}
        (out / "losses.csv").write_text(csv_text)
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        _write_manifest(out, args, seeds, ["losses.csv", "summary.json"])
        print(csv_text, end="")
        for row in rows:
            print(f"lr {row.learning_rate:g}  final_loss {row.final_loss:.6g}")
    return 0


def _cmd_report(args) -> int:
    reports = []
    for path in args.reports:
        try:
            reports.append(BenchmarkReport.from_dict(
                json.loads(Path(path).read_text())))
        except (json.JSONDecodeError, ValueError) as e:
            raise ValueError(f"bad benchmark report {path}: {e}")
    csv_text = reports_csv(reports, args.baseline)
    if args.out:
        Path(args.out).write_text(csv_text)
    print(csv_text, end="")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_dataset_args(p, sequences: int, eval_defaults: bool = False):
    seed = _default_seed()
    p.add_argument("--sequences", type=int, default=sequences,
                   help="number of sequences in the generated dataset")
    p.add_argument("--frames", type=int, default=48,
                   help="frames per sequence")
    p.add_argument("--snr-db", type=float, default=6.0,
                   help="mixing SNR of the synthetic noisy input")
    p.add_argument("--data-seed", type=int,
                   default=seed + 1000 if eval_defaults else seed + 100,
                   help="dataset generation seed")


def _add_train_args(p):
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)


def _add_bench_args(p):
    p.add_argument("--frames", type=int, default=100,
                   help="frames per timed sample")
    p.add_argument("--samples", type=int, default=100,
                   help="measured samples")
    p.add_argument("--warmup", type=int, default=10,
                   help="unmeasured warmup samples")


def build_parser() -> argparse.ArgumentParser:
    seed = _default_seed()
    parser = argparse.ArgumentParser(
        prog="prunebench",
        description="Structured pruning toolkit and streaming inference "
                    "benchmark for small convolutional-recurrent denoisers.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("derive-config",
                       help="shrink a channel vector by a prune fraction")
    p.add_argument("--base", help="base config name or c1,c2,c3,c4")
    p.add_argument("--fraction", type=float,
                   help="fraction of c4 channels to remove, in [0, 1)")
    p.add_argument("--all", action="store_true",
                   help="print the full standard config table")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_derive_config)

    p = sub.add_parser("init", help="create a seeded random model directory")
    p.add_argument("--config", required=True,
                   help="config name (CRUSE32, P.500, ...) or c1,c2,c3,c4")
    p.add_argument("--out", required=True)
    p.add_argument("--freq-bins", type=int, default=16)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=_cmd_init)

    for name, func in (("train", _cmd_train), ("finetune", _cmd_finetune)):
        p = sub.add_parser(name, help=f"{name} a model on the synthetic task")
        p.add_argument("--model", required=True, help="input model directory")
        p.add_argument("--out", required=True, help="output model directory")
        _add_train_args(p)
        _add_dataset_args(p, sequences=24)
        p.add_argument("--seed", type=int, default=seed,
                       help="training loop seed")
        p.set_defaults(func=func)

    p = sub.add_parser("prune", help="structured and/or unstructured pruning")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", help="target config name or c1,c2,c3,c4")
    p.add_argument("--unstructured", type=float, metavar="FRAC",
                   help="zero this fraction of each GRU matrix")
    p.set_defaults(func=_cmd_prune)

    p = sub.add_parser("eval", help="proxy loss on a held-out seeded dataset")
    p.add_argument("--model", required=True)
    _add_dataset_args(p, sequences=8, eval_defaults=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("benchmark", help="latency benchmark of model dirs")
    p.add_argument("models", nargs="+", help="model directories")
    p.add_argument("--out", help="directory for JSON/CSV reports")
    _add_bench_args(p)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--baseline", help="config name for the speedup column "
                                      "(default: first model)")
    p.set_defaults(func=_cmd_benchmark)

    p = sub.add_parser("profile",
                       help="per-category forward time attribution")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", type=int, default=200)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_profile)

    p = sub.add_parser("compare",
                       help="benchmark sparse variants on the dense engine")
    p.add_argument("--sparse", action="store_true",
                   help="compare unstructured sparsity levels")
    p.add_argument("--model", required=True)
    p.add_argument("--fracs", default="0,0.25,0.5,0.75",
                   help="comma-separated sparsity fractions")
    p.add_argument("--out")
    _add_bench_args(p)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("ablate", help="training experiments")
    p.add_argument("mode", choices=("prune-vs-direct", "lr-sweep"))
    p.add_argument("--model", required=True, help="trained base model dir")
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lrs", default="1e-3,1e-4,1e-5,1e-6",
                   help="lr-sweep learning rates")
    p.add_argument("--pretrain-epochs", type=int, default=0,
                   help="epochs already spent on the base model (added to "
                        "the direct arm's budget)")
    _add_train_args(p)
    _add_dataset_args(p, sequences=24)
    p.add_argument("--eval-seed", type=int, default=seed + 2000)
    p.add_argument("--seed", type=int, default=seed)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("report", help="derived tables from saved reports")
    p.add_argument("kind", choices=("speedup",))
    p.add_argument("reports", nargs="+", help="benchmark report JSON files")
    p.add_argument("--baseline", help="baseline config name (default: first)")
    p.add_argument("--out", help="write CSV here as well as stdout")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    args.argv = list(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 1


if __name__ == "__main__":
    sys.exit(main())
