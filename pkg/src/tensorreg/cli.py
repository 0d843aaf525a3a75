"""Command-line front end: experiment runs, oracle checks, checkpoints.

Exit codes are a stable contract: 0 on success, 2 on usage or configuration
errors, 3 on numerical failures (divergence, failed checks).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .decomp import KruskalTensor
from .errors import ConfigError, DivergedError
from .io import save_model, write_curve_csv
from .layer import cp_dropout_penalty
from .training import SyntheticSpec, TrainConfig, run_experiment
from .verify import run_checks

__all__ = ["main"]

PRESETS = {
    "desk": {
        "spec": {
            "weight_shape": [10, 10, 10],
            "output_dim": 1,
            "true_rank": 5,
            "n_train": 2000,
            "n_test": 500,
            "seed": 0,
        },
        "train": {
            "epochs": 150,
            "batch_size": 100,
            "lr_initial": 1e-3,
            "lr_decay_factor": 0.1,
            "lr_decay_epochs": [100],
            "scheme": "bernoulli",
            "seed": 0,
        },
        "thetas": [1.0, 0.7, 0.4, 0.1],
        "objective": "both",
    },
    "paper": {
        "spec": {
            "weight_shape": [25, 25, 25],
            "output_dim": 1,
            "true_rank": 15,
            "n_train": 10000,
            "n_test": 1000,
            "seed": 0,
        },
        "train": {
            "epochs": 500,
            "batch_size": 200,
            "lr_initial": 1e-4,
            "lr_decay_factor": 0.1,
            "lr_decay_epochs": [200, 400],
            "scheme": "bernoulli",
            "seed": 0,
        },
        "thetas": [1.0, 0.7, 0.4, 0.1],
        "objective": "both",
    },
}

_SPEC_KEYS = {f.name for f in dataclasses.fields(SyntheticSpec)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}
_TOP_KEYS = {"spec", "train", "thetas", "objective"}


def _merge_config(base, overlay, path="config"):
    for key, value in overlay.items():
        allowed = {
            "config": _TOP_KEYS,
            "config.spec": _SPEC_KEYS,
            "config.train": _TRAIN_KEYS,
        }[path]
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key}")
        if isinstance(value, dict):
            _merge_config(base.setdefault(key, {}), value, f"{path}.{key}")
        else:
            base[key] = value
    return base


def _resolve_config(args):
    config = json.loads(json.dumps(PRESETS[args.preset]))  # deep copy
    if args.config is not None:
        try:
            with open(args.config) as f:
                user = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge_config(config, user)
    if args.seed is not None:
        config["spec"]["seed"] = args.seed
        config["train"]["seed"] = args.seed
    if args.theta is not None:
        config["thetas"] = [args.theta]
    if args.objective is not None:
        config["objective"] = args.objective
    if config["objective"] not in ("stochastic", "deterministic", "both"):
        raise ConfigError(f"unknown objective {config['objective']!r}")
    thetas = config["thetas"]
    if not isinstance(thetas, list) or not thetas:
        raise ConfigError("thetas must be a non-empty list")
    return config


def _run_tag(theta, objective):
    return f"theta{theta:g}_{objective}"


def cmd_synth(args):
    try:
        config = _resolve_config(args)
        spec = SyntheticSpec(**config["spec"])
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config_resolved.json", "w") as f:
        json.dump(config, f, indent=2, sort_keys=True)
        f.write("\n")

    objectives = (
        ["stochastic", "deterministic"]
        if config["objective"] == "both"
        else [config["objective"]]
    )
    manifest = {
        "seed": config["train"]["seed"],
        "config": config,
        "runs": [],
    }
    for theta in config["thetas"]:
        for objective in objectives:
            try:
                train_cfg = TrainConfig(
                    **{**config["train"], "rate": theta, "objective": objective}
                )
            except (ConfigError, TypeError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return 2
            tag = _run_tag(theta, objective)
            try:
                curve, model = run_experiment(spec, train_cfg, return_model=True)
            except DivergedError as exc:
                print(f"error: run {tag}: {exc}", file=sys.stderr)
                return 3
            csv_name = f"curve_{tag}.csv"
            ckpt_name = f"model_{tag}.txt"
            with open(out / csv_name, "w", newline="\n") as f:
                write_curve_csv(f, curve)
            save_model(out / ckpt_name, model)
            manifest["runs"].append(
                {
                    "theta": theta,
                    "objective": objective,
                    "csv": csv_name,
                    "checkpoint": ckpt_name,
                    "final_objective": curve.objective[-1],
                    "final_train_loss": curve.train_loss[-1],
                    "final_test_mse": curve.test_mse[-1],
                }
            )
            print(
                f"{tag}: objective {curve.objective[-1]:.6g}, "
                f"test mse {curve.test_mse[-1]:.6g}"
            )
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


def cmd_verify(args):
    results = run_checks(args.filter)
    if not results:
        print(f"error: no check matches filter {args.filter!r}", file=sys.stderr)
        return 2
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.ok else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        failures += not r.ok
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 3


def cmd_inspect(args):
    from .io import load_model

    try:
        model = load_model(args.checkpoint)
    except (OSError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    weight = model.weight
    kind = "kruskal" if isinstance(weight, KruskalTensor) else "tucker"
    ranks = (
        weight.rank if isinstance(weight, KruskalTensor) else list(weight.ranks)
    )
    print(f"decomposition: {kind}")
    print(f"weight shape:  {weight.shape}")
    print(f"ranks:         {ranks}")
    print(
        f"sketch:        scheme={model.sketch.scheme} rate={model.sketch.rate:g} "
        f"scale={model.scale_mode}"
    )
    print(f"bias norm:     {float(np.linalg.norm(model.bias)):.6g}")
    for k, f in enumerate(weight.factors):
        norms = " ".join(f"{v:.6g}" for v in np.linalg.norm(f, axis=0))
        print(f"factor {k} ({f.shape[0]}x{f.shape[1]}) column norms: {norms}")
    if isinstance(weight, KruskalTensor):
        penalty = cp_dropout_penalty(weight, model.sketch.rate)
        print(f"dropout penalty at rate {model.sketch.rate:g}: {penalty:.17g}")
    else:
        print("dropout penalty: n/a (tucker weight)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tensorreg",
        description="Low-rank tensor regression experiments and checks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="run synthetic-data experiments")
    synth.add_argument("--config", help="JSON config file (strict schema)")
    synth.add_argument("--out", default="runs", help="output directory")
    synth.add_argument("--seed", type=int, help="override data and training seeds")
    synth.add_argument("--theta", type=float, help="run a single keep rate")
    synth.add_argument(
        "--objective", choices=["stochastic", "deterministic", "both"]
    )
    synth.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    synth.set_defaults(fn=cmd_synth)

    verify = sub.add_parser("verify", help="run the oracle check suite")
    verify.add_argument("--filter", help="substring filter on check names")
    verify.set_defaults(fn=cmd_verify)

    inspect = sub.add_parser("inspect", help="describe a model checkpoint")
    inspect.add_argument("checkpoint")
    inspect.set_defaults(fn=cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
