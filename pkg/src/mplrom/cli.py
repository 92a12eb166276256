"""Command-line orchestration of the full pipeline.

Every subcommand resolves a flat key=value config (defaults, optional config
file, explicit flags, MPLROM_SEED environment override), logs it, and embeds
its hash in emitted artifacts. Exit codes: 0 success, 2 configuration or
usage error, 3 solver non-convergence, 4 training divergence, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys

from . import ann, dataset, decompose, fom, gp, surrogates
from .config import ConfigError, config_hash, resolve_config

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_TRAINING = 4


def _build_fom(cfg) -> fom.FomModel:
    return fom.build_fom_model(
        grid=fom.SpatialGrid(length=cfg["length"], n_points=cfg["ns"]),
        time=fom.TimeGrid(t_final=cfg["t_final"], n_points=cfg["nt"]),
        newton_max_iter=cfg["newton_max_iter"],
        newton_tol=cfg["newton_tol"],
    )


def _train_settings(cfg) -> surrogates.TrainSettings:
    return surrogates.TrainSettings(
        seed=cfg["seed"],
        gp_restarts=cfg["gp_restarts"],
        gp_max_train=cfg["gp_max_train"] or None,
        gp_distance=cfg["gp_distance"],
        ann_hidden_layers=cfg["ann_hidden_layers"] or None,
        ann_hidden_width=cfg["ann_hidden_width"],
        ann_epochs=cfg["ann_epochs"],
        ann_learning_rate=cfg["ann_learning_rate"],
        ann_batch_size=cfg["ann_batch_size"] or None,
    )


def _log_config(cfg):
    print(f"# config_hash={config_hash(cfg)}", file=sys.stderr)
    for key in sorted(cfg):
        print(f"# {key} = {cfg[key]}", file=sys.stderr)


def _write_rows(path, header, rows, cfg, extra_meta=()):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash(cfg)}\n")
        for key, value in extra_meta:
            fh.write(f"# {key}={value}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def cmd_fom_solve(args, cfg):
    model = _build_fom(cfg)
    traj = fom.solve(model, cfg["mu"])
    fom.save_trajectory(args.out, traj, model.time,
                        metadata={"config_hash": config_hash(cfg)})
    print(f"wrote trajectory for mu={cfg['mu']} to {args.out}")
    return EXIT_OK


def cmd_dataset_gen(args, cfg):
    model = _build_fom(cfg)
    meta = {"config_hash": config_hash(cfg), "seed": cfg["seed"], "preset": cfg["preset"]}
    if args.kind == "error":
        grid = dataset.error_grid_full() if cfg["preset"] == "full" else dataset.error_grid_ci()
        records, info = dataset.generate_error_dataset(grid, model, jobs=cfg["jobs"])
        meta.update(
            grid_mu_p=len(grid.mu_p_values), grid_mu=len(grid.mu_values),
            grid_k=len(grid.k_values), fom_solves=info.fom_solves_basis + info.fom_solves_truth,
            truth_evaluations=info.truth_evaluations,
        )
        dataset.write_error_csv(args.out, records, metadata=meta)
    else:
        if cfg["preset"] == "full":
            mu_ps, k_values = dataset.dimension_grid_full(), dataset.DEFAULT_K_VALUES
        else:
            mu_ps, k_values = dataset.dimension_grid_ci(), dataset.CI_K_VALUES
        records, spectra, info = dataset.generate_dimension_dataset(
            mu_ps, k_values, model, jobs=cfg["jobs"]
        )
        meta.update(grid_mu_p=len(mu_ps), fom_solves=info.fom_solves_basis)
        dataset.write_dimension_csv(args.out, records, metadata=meta)
        if args.spectra_out:
            dataset.write_spectra_csv(args.spectra_out, spectra, metadata=meta)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _load_records(args, kind):
    if kind == "mplrom-dim":
        records, _ = dataset.read_dimension_csv(args.corpus)
    else:
        records, _ = dataset.read_error_csv(args.corpus)
    if kind in ("romes", "mfc"):
        groups = surrogates.subset_records(records)
        key = (args.mu_p, args.k)
        if key not in groups:
            raise ConfigError(
                f"corpus has no ({args.mu_p}, {args.k}) subset; "
                f"available mu_p values: {sorted({m for m, _ in groups})[:10]}..."
            )
        records = groups[key]
    return records


def _write_metrics(path, report, cfg):
    rows = [
        (fold, f"{e:.17g}", f"{v:.17g}")
        for fold, (e, v) in enumerate(zip(report.e_folds, report.var_folds))
    ]
    rows.append(("aggregate", f"{report.e:.17g}", f"{report.var:.17g}"))
    _write_rows(path, "fold,e_fold,var_fold", rows, cfg)


def cmd_train(args, cfg):
    records = _load_records(args, args.model)
    settings = _train_settings(cfg)
    train_records, test_records = dataset.split(
        records, train_frac=cfg["train_frac"], seed=cfg["seed"]
    )
    trainer = surrogates._TRAINERS[args.model]
    model = trainer(args.method, train_records, settings)
    surrogates.save_surrogate(
        args.out, args.model, model, metadata={"config_hash": config_hash(cfg)}
    )
    if args.metrics:
        y_true = surrogates._model_truth(args.model, test_records)
        y_pred = surrogates._model_predictions(args.model, model, test_records)
        _write_metrics(args.metrics, surrogates.evaluate(y_pred, y_true), cfg)
    print(f"trained {args.model} ({args.method}) on {len(train_records)} records -> {args.out}")
    return EXIT_OK


def cmd_crossval(args, cfg):
    records = _load_records(args, args.model)
    settings = _train_settings(cfg)
    result = surrogates.crossval(
        args.model, args.method, records, k=args.k, seed=cfg["seed"],
        settings=settings, jobs=cfg["jobs"],
    )
    _write_metrics(args.out, result.report, cfg)
    print(f"crossval {args.model} ({args.method}): E={result.report.e:.6g} VAR={result.report.var:.6g}")
    return EXIT_OK


def cmd_feasible_interval(args, cfg):
    _, model = surrogates.load_surrogate(args.model_file)
    predictor = decompose.SurrogatePredictor(model)
    bounds = (cfg["mu_min"], cfg["mu_max"])
    interval = decompose.find_feasible_interval(
        predictor, args.mu_p, args.k, args.eps,
        step=cfg["feasible_step"], bounds=bounds,
    )
    rows = [("model", f"{interval.d_l:.17g}", f"{interval.d_r:.17g}")]
    print(f"model interval: [{interval.d_l:.4f}, {interval.d_r:.4f}]")
    if args.oracle:
        oracle = decompose.DirectErrorOracle(_build_fom(cfg), k_max=args.k)
        truth = decompose.find_feasible_interval(
            oracle, args.mu_p, args.k, args.eps,
            step=cfg["oracle_step"], bounds=bounds,
        )
        rows.append(("oracle", f"{truth.d_l:.17g}", f"{truth.d_r:.17g}"))
        print(f"oracle interval: [{truth.d_l:.4f}, {truth.d_r:.4f}]")
    if args.out:
        _write_rows(args.out, "source,d_l,d_r", rows, cfg,
                    extra_meta=[("mu_p", args.mu_p), ("k_pod", args.k), ("eps_bar", args.eps)])
    return EXIT_OK


def cmd_decompose(args, cfg):
    _, model = surrogates.load_surrogate(args.model_file)
    predictor = decompose.SurrogatePredictor(model)
    dconf = decompose.DecompositionConfig(
        a=cfg["decomp_a"], b=cfg["decomp_b"], eps0=cfg["decomp_eps0"],
        delta_r=cfg["decomp_delta_r"], r0=cfg["decomp_r0"],
        k_pod=cfg["decomp_k_pod"], beta1=cfg["decomp_beta1"],
        beta2=cfg["decomp_beta2"], beta3=cfg["decomp_beta3"],
        mu_p0=cfg["decomp_mu_p0"],
    )
    result = decompose.decompose_domain(predictor, dconf)
    decompose.save_decomposition(
        args.out, result, metadata={"config_hash": config_hash(cfg)}
    )
    if args.plot_out:
        rows = [(f"{mu:.17g}", f"{eps:.17g}") for mu, eps in
                decompose.decomposition_plot_rows(result)]
        _write_rows(args.plot_out, "mu,eps_bar", rows, cfg)
    print(f"decomposed [{dconf.a}, {dconf.b}] into {len(result.intervals)} intervals")
    return EXIT_OK


def cmd_report(args, cfg):
    if args.figure == "param-contour":
        records, _ = dataset.read_error_csv(args.corpus)
        rows = [
            (f"{r.mu:.17g}", r.k_pod, f"{r.log_err:.17g}")
            for r in records
            if abs(r.mu_p - args.mu_p) < 1e-12
        ]
        if not rows:
            raise ConfigError(f"corpus holds no rows with mu_p={args.mu_p}")
        _write_rows(args.out, "mu,k_pod,log_err", rows, cfg,
                    extra_meta=[("mu_p", args.mu_p)])
    elif args.figure == "expm2-numMus":
        decomp = decompose.load_decomposition(args.decomposition)
        rows = [(f"{mu:.17g}", f"{eps:.17g}") for mu, eps in
                decompose.decomposition_plot_rows(decomp)]
        _write_rows(args.out, "mu,eps_bar", rows, cfg)
    elif args.figure == "expm2-range":
        return cmd_feasible_interval(args, cfg)
    elif args.figure == "error-mulromes":
        records, _ = dataset.read_error_csv(args.corpus)
        groups = surrogates.subset_records(records)
        key = (args.mu_p, args.k)
        if key not in groups:
            raise ConfigError(f"corpus has no ({args.mu_p}, {args.k}) subset")
        subset = groups[key]
        settings = _train_settings(cfg)
        sub_train, sub_test = dataset.split(subset, cfg["train_frac"], cfg["seed"])
        mfc = surrogates.train_mfc_model(args.method, sub_train, settings)
        romes = surrogates.train_romes_model(args.method, sub_train, settings)
        full_train, _ = dataset.split(records, cfg["train_frac"], cfg["seed"])
        mplrom = surrogates.train_error_model(args.method, full_train, settings)
        rows = []
        for r in sub_test:
            rows.append((
                f"{r.mu:.17g}", f"{r.log_residual:.17g}", f"{r.log_err:.17g}",
                f"{mfc.predict_log_error([r.mu])[0]:.17g}",
                f"{romes.predict_log_error([r.log_residual])[0]:.17g}",
                f"{mplrom.predict_log_error(r.mu, r.mu_p, r.k_pod)[0]:.17g}",
            ))
        _write_rows(args.out, "mu,log_residual,log_err,pred_mfc,pred_romes,pred_mplrom",
                    rows, cfg, extra_meta=[("mu_p", args.mu_p), ("k_pod", args.k)])
    print(f"wrote figure data '{args.figure}' to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mplrom",
        description="Local POD reduced-order models of 1D viscous Burgers with "
                    "regression surrogates for error and basis dimension.",
    )
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="override the seed")
    parser.add_argument("--jobs", type=int, help="worker parallelism bound")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fom-solve", help="solve the full model for one viscosity")
    p.add_argument("--mu", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fom_solve)

    p = sub.add_parser("dataset-gen", help="generate a training corpus")
    p.add_argument("--kind", choices=("error", "dimension"), required=True)
    p.add_argument("--preset", choices=("full", "ci"))
    p.add_argument("--out", required=True)
    p.add_argument("--spectra-out", help="singular-value table (dimension corpora)")
    p.set_defaults(func=cmd_dataset_gen)

    p = sub.add_parser("train", help="train a surrogate on a corpus")
    p.add_argument("--model", choices=tuple(surrogates._TRAINERS), required=True)
    p.add_argument("--method", choices=surrogates.METHODS, required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics", help="held-out metrics CSV")
    p.add_argument("--mu-p", type=float, default=1.0, help="baseline subset center")
    p.add_argument("--k", type=int, default=10, help="baseline subset dimension")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="k-fold cross-validation of a surrogate")
    p.add_argument("--model", choices=tuple(surrogates._TRAINERS), required=True)
    p.add_argument("--method", choices=surrogates.METHODS, required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--out", required=True)
    p.add_argument("--mu-p", type=float, default=1.0)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("feasible-interval", help="interval where predicted error meets a threshold")
    p.add_argument("--model-file", required=True)
    p.add_argument("--mu-p", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--oracle", action="store_true",
                   help="also compute the brute-force truth interval")
    p.add_argument("--out")
    p.set_defaults(func=cmd_feasible_interval)

    p = sub.add_parser("decompose", help="greedy decomposition of the viscosity domain")
    p.add_argument("--model-file", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--plot-out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("report", help="emit plot-data CSV for a study figure")
    p.add_argument("--figure", required=True,
                   choices=("param-contour", "expm2-range", "expm2-numMus", "error-mulromes"))
    p.add_argument("--corpus")
    p.add_argument("--decomposition")
    p.add_argument("--model-file")
    p.add_argument("--method", choices=surrogates.METHODS, default="gp")
    p.add_argument("--mu-p", type=float, default=0.8)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--eps", type=float, default=1e-2)
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    for key in ("seed", "jobs", "mu"):
        if getattr(args, key, None) is not None:
            overrides[key] = getattr(args, key)
    if getattr(args, "preset", None) is not None:
        overrides["preset"] = args.preset
    try:
        cfg = resolve_config(args.config, overrides)
        _log_config(cfg)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except fom.NewtonNonConvergence as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ann.TrainingDivergence as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except (gp.GpFitError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
