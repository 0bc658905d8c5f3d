"""Command-line front end: synthetic data, training, ablations, diagnostics.

Commands write plain files (CSV, JSON, npz checkpoints) under ``--out``.  All
outputs are byte-deterministic for fixed flags and seed; wall-clock durations
are isolated under a separate ``"timing"`` key so the rest of each JSON file
can be compared verbatim across runs.

``FAN_THREADS`` (optional) caps the BLAS/FFT thread pools; it must be applied
before numpy loads, which is why the heavy imports happen inside ``main``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

__all__ = ["main", "CliError"]

_ERROR_EXIT_CODE = 2


class CliError(Exception):
    """User-facing failure with a machine-parsable category."""

    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _apply_thread_cap() -> None:
    cap = os.environ.get("FAN_THREADS")
    if not cap:
        return
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(var, cap)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def _version() -> str:
    from . import __version__

    return __version__


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fankit",
        description="Frequency-adaptive reversible normalization for forecasting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic benchmark CSV")
    p_synth.add_argument("--out", required=True, help="output CSV path")
    p_synth.add_argument("--preset", help="syn5 | syn6 | syn7 | syn8 | syn9")
    p_synth.add_argument("--spec", help="JSON file describing the signals")
    p_synth.add_argument("--seed", type=int, default=1)
    p_synth.add_argument("--length", type=int, default=10000, help="number of rows")
    p_synth.add_argument("--noise-std", type=float, default=0.0)
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="train one pipeline and report test metrics")
    _add_train_flags(p_train)
    p_train.add_argument("--seed", type=int, default=1)
    p_train.set_defaults(func=cmd_train)

    p_ablate = sub.add_parser("ablate", help="train pipeline variants under shared seeds")
    _add_train_flags(p_ablate)
    p_ablate.add_argument(
        "--variants",
        default="full,no-predict,pure-backbone,no-backbone",
        help="comma list of: full, no-predict, pure-backbone, no-backbone",
    )
    p_ablate.add_argument("--seeds", default="1,2,3,4,5", help="comma list of seeds")
    p_ablate.set_defaults(func=cmd_ablate)

    p_diag = sub.add_parser("diagnose", help="stationarity and selection diagnostics")
    p_diag.add_argument("--data", required=True)
    p_diag.add_argument("--k", default="auto")
    p_diag.add_argument("--lookback", type=int, default=96)
    p_diag.add_argument("--out", help="output directory (prints to stdout when omitted)")
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", required=True, help="input CSV path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--normalizer", default="fan", help="fan | fan-fixed | revin | none")
    parser.add_argument("--backbone", default="dlinear", help="dlinear | naive")
    parser.add_argument("--horizon", type=int, default=96)
    parser.add_argument("--lookback", type=int, default=96)
    parser.add_argument("--k", default="auto", help="positive integer or 'auto'")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lr", type=float, default=3e-4)
    parser.add_argument("--max-epochs", type=int, default=100)
    parser.add_argument("--patience", type=int, default=5)
    parser.add_argument("--kernel", type=int, default=25, help="moving-average window")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _parse_k(raw) -> "int | str":
    if raw == "auto":
        return "auto"
    try:
        k = int(raw)
    except (TypeError, ValueError):
        raise CliError("invalid-parameter", f"--k must be a positive integer or 'auto', got {raw!r}")
    if k < 1:
        raise CliError("invalid-parameter", f"--k must be >= 1, got {k}")
    return k


def _load_frame(path):
    from .data import load_csv

    if not os.path.exists(path):
        raise CliError("io", f"data file not found: {path}")
    return load_csv(path)


def _config_from_args(args, seed: int):
    from .training import TrainConfig

    if args.normalizer not in ("fan", "fan-fixed", "revin", "none"):
        raise CliError(
            "invalid-parameter",
            f"unknown normalizer {args.normalizer!r}; choose fan, fan-fixed, revin, or none",
        )
    if args.backbone not in ("dlinear", "naive"):
        raise CliError(
            "invalid-parameter", f"unknown backbone {args.backbone!r}; choose dlinear or naive"
        )
    return TrainConfig(
        lookback=args.lookback,
        horizon=args.horizon,
        k=_parse_k(args.k),
        batch_size=args.batch_size,
        learning_rate=args.lr,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=seed,
        normalizer=args.normalizer,
        backbone=args.backbone,
        ma_kernel=args.kernel,
    )


def _check_sizing(frame, config) -> None:
    need = config.lookback + config.horizon + 10
    if frame.n < need:
        raise CliError(
            "sizing",
            f"series has N={frame.n} rows; lookback L={config.lookback} plus horizon "
            f"H={config.horizon} needs at least N={need}",
        )


def _run_one(frame, config):
    """Train one seed; returns (pipeline, history, per-seed metrics entry)."""
    from .training import evaluate, train

    pipeline, history = train(config, frame)
    _, _, test_set = pipeline.make_window_sets(frame)
    metrics = evaluate(pipeline, test_set)
    entry = {"seed": config.seed, "mae": metrics.mae, "mse": metrics.mse}
    return pipeline, history, entry


def _mean_std(per_seed: list) -> tuple:
    import statistics

    mean = {}
    std = {}
    for key in ("mae", "mse"):
        vals = [entry[key] for entry in per_seed]
        mean[key] = statistics.fmean(vals) if vals else 0.0
        std[key] = statistics.stdev(vals) if len(vals) > 1 else 0.0
    return mean, std


def _manifest(config_dict: dict, data_path, frame, k_resolved: int, seeds: list) -> dict:
    return {
        "config": config_dict,
        "dataset": {
            "path": str(data_path),
            "sha256": _sha256(data_path),
            "rows": frame.n,
            "channels": frame.d,
        },
        "k_resolved": k_resolved,
        "seeds": seeds,
        "version": _version(),
    }


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    from .data import (
        PRESET_NAMES,
        SignalSpec,
        SyntheticSpec,
        generate_synthetic,
        synthetic_preset,
        write_csv,
    )

    if bool(args.preset) == bool(args.spec):
        raise CliError("invalid-parameter", "provide exactly one of --preset or --spec")
    if args.preset:
        if args.preset not in PRESET_NAMES:
            raise CliError(
                "invalid-parameter",
                f"unknown preset {args.preset!r}; valid presets: {', '.join(PRESET_NAMES)}",
            )
        spec = synthetic_preset(args.preset, length=args.length, noise_std=args.noise_std)
        described = {"preset": args.preset}
    else:
        if not os.path.exists(args.spec):
            raise CliError("io", f"spec file not found: {args.spec}")
        with open(args.spec, encoding="utf-8") as fh:
            raw = json.load(fh)
        try:
            spec = SyntheticSpec(
                signals=tuple(
                    SignalSpec(s["periodicity"], tuple(s["amplitude_anchors"]))
                    for s in raw["signals"]
                ),
                dims=raw.get("dims", len(raw["signals"])),
                length=raw.get("length", args.length),
                noise_std=raw.get("noise_std", args.noise_std),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CliError("parse", f"invalid synthetic spec {args.spec}: {exc}")
        described = {"spec_file": str(args.spec)}

    frame = generate_synthetic(spec, seed=args.seed)
    try:
        write_csv(args.out, frame)
    except OSError as exc:
        raise CliError("io", f"cannot write {args.out}: {exc}")
    manifest = {
        "command": "synth",
        **described,
        "seed": args.seed,
        "length": spec.length,
        "dims": spec.dims,
        "noise_std": spec.noise_std,
        "sha256": _sha256(args.out),
        "version": _version(),
    }
    _write_json(str(args.out) + ".manifest.json", manifest)
    print(f"wrote {args.out} ({spec.length} rows, {spec.dims} channels)")
    return 0


def cmd_train(args) -> int:
    frame = _load_frame(args.data)
    config = _config_from_args(args, seed=args.seed)
    _check_sizing(frame, config)

    from .models import save_checkpoint

    started = time.perf_counter()
    pipeline, history, entry = _run_one(frame, config)
    wall = time.perf_counter() - started

    os.makedirs(args.out, exist_ok=True)
    mean, std = _mean_std([entry])
    report = {
        "config": config.to_dict(),
        "k_resolved": pipeline.k,
        "seeds": [args.seed],
        "per_seed": [entry],
        "mean": mean,
        "std": std,
        "epochs_ran": [len(history)],
        "timing": {"wall_time_seconds": wall},
    }
    _write_json(os.path.join(args.out, "metrics.json"), report)
    _write_json(
        os.path.join(args.out, "history.json"),
        {"config": config.to_dict(), "history": history},
    )
    _write_json(
        os.path.join(args.out, "manifest.json"),
        _manifest(config.to_dict(), args.data, frame, pipeline.k, [args.seed]),
    )
    save_checkpoint(
        os.path.join(args.out, "checkpoint.npz"),
        pipeline.state_dict(),
        meta={"config": config.to_dict(), "k_resolved": pipeline.k},
    )
    print(f"test mae={entry['mae']:.6f} mse={entry['mse']:.6f} (k={pipeline.k})")
    return 0


_VARIANTS = ("full", "no-predict", "pure-backbone", "no-backbone")


def _variant_config(base, variant: str):
    from dataclasses import replace

    if variant == "full":
        return replace(base, normalizer="fan", predict_components=True)
    if variant == "no-predict":
        return replace(base, normalizer="fan", predict_components=False)
    if variant == "pure-backbone":
        return replace(base, normalizer="none")
    if variant == "no-backbone":
        return replace(base, normalizer="fan", predict_components=True, backbone="zero")
    raise CliError(
        "invalid-parameter", f"unknown variant {variant!r}; valid: {', '.join(_VARIANTS)}"
    )


def cmd_ablate(args) -> int:
    from dataclasses import replace

    frame = _load_frame(args.data)
    base = _config_from_args(args, seed=1)
    _check_sizing(frame, base)

    variants = []
    for name in (v.strip() for v in args.variants.split(",") if v.strip()):
        if name in variants:
            print(f"warning: duplicate variant {name!r} ignored", file=sys.stderr)
            continue
        if name not in _VARIANTS:
            raise CliError(
                "invalid-parameter", f"unknown variant {name!r}; valid: {', '.join(_VARIANTS)}"
            )
        variants.append(name)
    if not variants:
        raise CliError("invalid-parameter", "no variants requested")
    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise CliError("invalid-parameter", f"--seeds must be a comma list of integers: {args.seeds!r}")
    if not seeds:
        raise CliError("invalid-parameter", "no seeds requested")

    started = time.perf_counter()
    sections = {}
    k_resolved = None
    for variant in variants:
        per_seed = []
        epochs = []
        for seed in seeds:
            config = replace(_variant_config(base, variant), seed=seed)
            pipeline, history, entry = _run_one(frame, config)
            per_seed.append(entry)
            epochs.append(len(history))
            if k_resolved is None:
                k_resolved = pipeline.k
        mean, std = _mean_std(per_seed)
        sections[variant] = {
            "seeds": seeds,
            "per_seed": per_seed,
            "mean": mean,
            "std": std,
            "epochs_ran": epochs,
        }
    wall = time.perf_counter() - started

    os.makedirs(args.out, exist_ok=True)
    report = {
        "config": base.to_dict(),
        "k_resolved": k_resolved,
        "variants": sections,
        "timing": {"wall_time_seconds": wall},
    }
    _write_json(os.path.join(args.out, "ablation.json"), report)
    _write_json(
        os.path.join(args.out, "manifest.json"),
        _manifest(base.to_dict(), args.data, frame, k_resolved, seeds),
    )
    for variant in variants:
        mean = sections[variant]["mean"]
        print(f"{variant}: mean mse={mean['mse']:.6f} mae={mean['mae']:.6f}")
    return 0


def cmd_diagnose(args) -> int:
    from .data import dataset_stats
    from .normalizers import fan_normalize
    from .spectral import (
        frequency_selection_density,
        select_k_by_amplitude_rule,
        spectral_variance,
    )
    from .training import make_windows

    from .training import split_bounds

    frame = _load_frame(args.data)
    lookback = args.lookback
    train_end, val_end = split_bounds(frame.n)
    smallest = min(train_end, val_end - train_end, frame.n - val_end)
    if smallest < lookback + 1:
        raise CliError(
            "sizing",
            f"series has N={frame.n} rows; every split needs at least {lookback + 1} "
            f"rows for lookback L={lookback} (smallest split has {smallest})",
        )
    train_set, _, _ = make_windows(frame.values, lookback, 1)
    windows = train_set.x_stack()
    k_arg = _parse_k(args.k)
    k = select_k_by_amplitude_rule(windows) if k_arg == "auto" else k_arg
    residuals, _ = fan_normalize(windows, k)
    stats = dataset_stats(frame, lookback=lookback)
    payload = {
        "data": str(args.data),
        "lookback": lookback,
        "k_resolved": int(k),
        "spectral_variance": {
            "before": spectral_variance(windows),
            "after": spectral_variance(residuals),
        },
        "selection_density": frequency_selection_density(windows, k).tolist(),
        "dataset_stats": {
            "trend_variation": list(stats.trend_variation),
            "seasonality_variation": stats.seasonality_variation,
        },
        "version": _version(),
    }
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _write_json(os.path.join(args.out, "diagnostics.json"), payload)
        print(f"wrote {os.path.join(args.out, 'diagnostics.json')}")
    else:
        json.dump(payload, sys.stdout, indent=2)
        print()
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv=None) -> int:
    _apply_thread_cap()  # must precede the first numpy import in this process
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error:{exc.category}: {exc}", file=sys.stderr)
        return _ERROR_EXIT_CODE
    except FileNotFoundError as exc:
        print(f"error:io: {exc}", file=sys.stderr)
        return _ERROR_EXIT_CODE
    except (ValueError, IndexError) as exc:
        print(f"error:invalid-input: {exc}", file=sys.stderr)
        return _ERROR_EXIT_CODE
    except (RuntimeError, FloatingPointError) as exc:
        print(f"error:runtime: {exc}", file=sys.stderr)
        return _ERROR_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
