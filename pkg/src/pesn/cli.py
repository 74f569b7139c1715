"""Command-line entry point for the experiment harness.

Every subcommand is deterministic given ``--seed`` and the config file;
outputs are CSV files with JSON metadata sidecars. Exit codes: 0 on
success, 2 on configuration errors, 3 on numeric failures.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from pesn._backend import BACKEND
from pesn.errors import ConfigError, NumericError
from pesn.experiments import (
    ExperimentConfig,
    bench_backends,
    ffnn_propagate,
    parse_config_file,
    run_entropy_experiment,
    run_make_data,
    run_model_learning,
    run_moments_grid,
    run_timing_bench,
    run_washout_experiment,
    write_csv,
)

_SCHEMAS = {
    "moments-grid": (
        "moments_grid.csv: activation,engine,mu,var,abs_mean_err,abs_var_err,"
        "bound_eps_mu,bound_eps_sigma,abs_skew_err,abs_kurt_err,low_variance"
    ),
    "bench-time": "timing.csv: method,d,median_seconds,repeats",
    "washout": (
        "washout.csv: washout,dim,p_mean,p_min,p_max,mc_mean,mc_min,mc_max"
    ),
    "entropy": (
        "entropy.csv: washout,p_mean,p_min,p_max,mc_mean,mc_min,mc_max"
    ),
    "ffnn": (
        "ffnn_<net>.csv: network,layer,eps_mu_spline,eps_mu_analytic,"
        "eps_sigma_spline,eps_sigma_analytic; ffnn_<net>_cdf.csv: "
        "network,quantile,mc_output"
    ),
    "model-learning": (
        "model_learning.csv: mode,step,dim,truth,pesn_mean,pesn_2sigma,"
        "mc_mean,mc_2sigma"
    ),
    "make-data": "cartpole.csv: z0..z4,y0..y1 plus .meta.json sidecar",
    "train": "weights.json: reservoir matrices, params, seed",
    "predict": "predictions.csv: step,<dim>_mean,<dim>_variance per output",
    "bench-backend": "backend_bench.csv: backend,d,median_seconds,repeats",
}


def _add_common(parser):
    parser.add_argument("--config", type=Path,
                        help="key = value config file (see ExperimentConfig)")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--engine", choices=("analytic", "spline", "mc"),
                        help="moment engine for belief propagation")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pesn",
        description="Uncertainty propagation benchmarks and probabilistic "
                    f"echo state networks (kernel backend: {BACKEND})",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("moments-grid", "engine moment errors vs a Monte-Carlo oracle"),
        ("bench-time", "per-call timing of the three moment engines"),
        ("washout", "rollout error vs washout length, PESN vs ensemble"),
        ("entropy", "washout hidden-value entropy, PESN vs ensemble"),
        ("ffnn", "moment propagation through random feed-forward nets"),
        ("model-learning", "single/multi-step cart-pole prediction bands"),
        ("make-data", "generate a cart-pole regression dataset"),
        ("train", "train a readout on a dataset CSV"),
        ("predict", "run belief prediction with trained weights"),
        ("bench-backend", "compare compiled and pure-Python kernels"),
    ):
        p = sub.add_parser(name, help=help_text,
                           epilog=f"output schema - {_SCHEMAS[name]}")
        _add_common(p)
        if name == "ffnn":
            p.add_argument("--network", choices=("shallow", "deep", "both"),
                           default="both")
        if name == "train":
            p.add_argument("--data", type=Path, required=True,
                           help="dataset CSV (with .meta.json sidecar)")
        if name == "predict":
            p.add_argument("--data", type=Path, required=True)
            p.add_argument("--weights", type=Path, required=True)
            p.add_argument("--mode", choices=("single", "multi"),
                           default="single")
            p.add_argument("--washout-len", type=int, default=0)
            p.add_argument("--horizon", type=int, default=None)
    return parser


def load_config(args) -> ExperimentConfig:
    mapping = {}
    if args.config is not None:
        mapping.update(parse_config_file(args.config))
    if args.seed is not None:
        mapping["seed"] = args.seed
    if args.out is not None:
        mapping["out_dir"] = str(args.out)
    if getattr(args, "engine", None) is not None:
        mapping["engine"] = args.engine
    return ExperimentConfig.from_mapping(mapping)


def _cmd_train(cfg, args):
    from pesn.experiments import train_shared_weights
    from pesn.reservoir import load_dataset, save_weights

    data = load_dataset(args.data)
    weights, pcfg = train_shared_weights(cfg, data)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "weights.json"
    save_weights(path, weights, pcfg.esn)
    print(path)
    return 0


def _cmd_predict(cfg, args):
    from pesn.probabilistic import PesnConfig, pesn_predict
    from pesn.reservoir import load_dataset, load_weights

    data = load_dataset(args.data)
    weights, params = load_weights(args.weights)
    if params is None:
        params = cfg.esn_params()
    pcfg = PesnConfig(esn=params, engine=cfg.engine,
                      spline_a=cfg.spline_a, spline_b=cfg.spline_b,
                      spline_points=cfg.spline_points,
                      init_mu=np.zeros(weights.n_reservoir), init_var=0.0)
    beliefs, _, _ = pesn_predict(
        weights, pcfg, data, mode=args.mode,
        washout_len=args.washout_len, horizon=args.horizon)
    n_out = weights.n_outputs
    header = ["step"]
    for d in range(n_out):
        header += [f"y{d}_mean", f"y{d}_variance"]
    rows = []
    for i, b in enumerate(beliefs):
        row = [i]
        for d in range(n_out):
            row += [b.mean[d], b.variance[d]]
        rows.append(row)
    out = Path(cfg.out_dir)
    path = write_csv(out / "predictions.csv", header, rows)
    print(path)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "moments-grid":
            path, _ = run_moments_grid(cfg)
        elif args.command == "bench-time":
            path, _ = run_timing_bench(cfg)
        elif args.command == "washout":
            path, _ = run_washout_experiment(cfg)
        elif args.command == "entropy":
            path, _ = run_entropy_experiment(cfg)
        elif args.command == "ffnn":
            nets = ("shallow", "deep") if args.network == "both" else (args.network,)
            for net in nets:
                path, _ = ffnn_propagate(cfg, network=net)
                print(path)
            return 0
        elif args.command == "model-learning":
            path, _ = run_model_learning(cfg)
        elif args.command == "make-data":
            path, _ = run_make_data(cfg)
        elif args.command == "bench-backend":
            path, _ = bench_backends(cfg)
        elif args.command == "train":
            return _cmd_train(cfg, args)
        elif args.command == "predict":
            return _cmd_predict(cfg, args)
        else:  # pragma: no cover - argparse enforces choices
            raise ConfigError(f"unknown command {args.command}")
        print(path)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
