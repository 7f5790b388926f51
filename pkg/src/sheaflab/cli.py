"""``sheaflab`` command line: audit, train, diffuse, figure, import-geom-gcn.

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import heterophily as het
from .datasets import DataError, import_geom_gcn, load_dataset, resolve_manifest
from .diffusion import DivergedError, UnstableStepError, integrate_diffusion, estimate_lambda_max
from .experiment import TrainConfig, emit_figure_data, emit_hypothesis, packaged_config, run_experiment
from .graph import Graph, connected_components
from .sheaf import assemble_sheaf_laplacian, diagonal_sheaf, identity_sheaf

logger = logging.getLogger("sheaflab")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4

# hyperparameter field -> argparse type; booleans get --flag / --no-flag
HPARAM_FLAGS = {
    "add_hp": bool, "add_lp": bool, "d": int, "deg_normalised": bool, "dropout": float,
    "early_stopping": int, "epochs": int, "hidden_channels": int, "input_dropout": float,
    "layers": int, "lr": float, "normalised": bool, "second_linear": bool, "weight_decay": float,
}


class ConfigError(ValueError):
    pass


def _add_hparam_flags(p: argparse.ArgumentParser) -> None:
    for name, typ in HPARAM_FLAGS.items():
        flag = "--" + name.replace("_", "-")
        if typ is bool:
            p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None)
        else:
            p.add_argument(flag, dest=name, type=typ, default=None)
    p.add_argument("--model", choices=["isn", "diag-snn"], default="isn")
    p.add_argument("--activation", choices=["elu", "relu", "identity"], default=None)
    p.add_argument("--config", type=Path, help="JSON file with hyperparameter fields")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=None, help="train only the first k folds")
    p.add_argument("--workers", type=int, default=1)


def build_train_config(args, model: str | None = None) -> TrainConfig:
    """Packaged reference config for the dataset, then ``--config``, then flags."""
    flat: dict = {}
    name = Path(args.dataset).name
    try:
        name = json.loads(resolve_manifest(args.dataset).read_text()).get("name", name)
    except (DataError, OSError, json.JSONDecodeError):
        pass
    try:
        flat.update(packaged_config(name))
    except KeyError:
        logger.info("no packaged config for %s; using defaults", name)
    if args.config:
        try:
            flat.update(json.loads(args.config.read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for key in HPARAM_FLAGS:
        val = getattr(args, key, None)
        if val is not None:
            flat[key] = val
    if args.activation:
        flat["activation"] = args.activation
    flat.update(dataset=args.dataset, seed=args.seed, folds=args.folds, workers=args.workers,
                model=model or args.model)
    try:
        return TrainConfig.from_flat(flat)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _write_json(obj, out: Path | None) -> None:
    text = json.dumps(obj, indent=2)
    if out:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
    print(text)


def cmd_audit(args) -> int:
    data = load_dataset(args.dataset, seed=args.seed)
    verdict = het.audit(data.graph, data.labels, args.sigma, args.counting)
    payload = verdict.to_dict(data.name, decimals=args.decimals)
    payload["counting"] = args.counting
    payload["edge_homophily"] = het.edge_homophily(data.graph, data.labels)
    _write_json(payload, args.out)
    return EXIT_OK


def _train_one(args, model: str):
    config = build_train_config(args, model)
    data = load_dataset(config.dataset, seed=config.seed)
    if args.dump_laplacian:
        from .sheaf import augment_fixed_channels
        sheaf = augment_fixed_channels(identity_sheaf(data.graph, config.model.d),
                                       config.model.add_lp, config.model.add_hp)
        assemble_sheaf_laplacian(sheaf, config.model.laplacian_mode).dump_csv(args.dump_laplacian)
    return run_experiment(config, data)


def cmd_train(args) -> int:
    report = _train_one(args, args.model)
    out = args.out or Path(f"{report.dataset}_{report.model_kind}_report.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    report.to_json(out)
    summary = {"dataset": report.dataset, "model": report.model_kind, "mean": report.mean,
               "std": report.std, "folds": len(report.folds), "partial": report.partial,
               "report": str(out)}
    print(json.dumps(summary, indent=2))
    return EXIT_DIVERGED if report.partial else EXIT_OK


def cmd_figure(args) -> int:
    from .experiment import ExperimentReport

    if args.snn_report and args.isn_report:
        snn = ExperimentReport.from_json(args.snn_report)
        isn = ExperimentReport.from_json(args.isn_report)
    elif args.dataset:
        isn = _train_one(args, "isn")
        snn = _train_one(args, "diag-snn")
    else:
        raise ConfigError("figure needs --dataset or both --snn-report and --isn-report")
    out = args.out or Path("figure")
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    for rep in (isn, snn):
        path = out / f"{rep.dataset}_{rep.model_kind}_trajectory.csv"
        emit_figure_data(rep, path)
        rep.to_json(out / f"{rep.dataset}_{rep.model_kind}_report.json")
        written[rep.model_kind] = str(path)
    verdict_path = out / f"{isn.dataset}_hypothesis.json"
    verdict = emit_hypothesis(snn, isn, verdict_path)
    print(json.dumps({"trajectories": written, "verdict": str(verdict_path),
                      "all_clauses_consistent": verdict.all_consistent}, indent=2))
    return EXIT_DIVERGED if (isn.partial or snn.partial) else EXIT_OK


def cmd_diffuse(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.dataset:
        graph = load_dataset(args.dataset, seed=args.seed).graph
    else:
        n = args.nodes
        upper = np.triu(rng.random((n, n)) < args.edge_prob, k=1)
        graph = Graph.from_edges(n, np.argwhere(upper))
    if args.sheaf == "identity":
        sheaf = identity_sheaf(graph, args.d)
    else:
        sheaf = diagonal_sheaf(graph, rng.uniform(0.5, 1.5, (graph.m, args.d)),
                               rng.uniform(0.5, 1.5, (graph.m, args.d)))
    op = assemble_sheaf_laplacian(sheaf, args.mode)
    if args.dump_laplacian:
        op.dump_csv(args.dump_laplacian)
    step = args.step
    if step is None:
        lam = estimate_lambda_max(op)
        step = 1.0 / lam if lam > 0 else 1.0
    x0 = rng.standard_normal((graph.n * args.d, args.channels))
    traj = integrate_diffusion(op, x0, step, args.steps, stop_on_convergence=args.stop_on_convergence)
    out = args.out or Path("diffusion.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    traj.to_csv(out)
    summary = {"nodes": graph.n, "edges": graph.m, "d": args.d, "sheaf": args.sheaf, "mode": args.mode,
               "step": step, "steps_taken": traj.steps_taken, "converged_at": traj.converged_at,
               "final_energy": traj.energies[-1], "final_kernel_residual": traj.residuals[-1],
               "trajectory": str(out)}
    if args.sheaf == "identity":
        comp = connected_components(graph)
        xs = traj.final.reshape(graph.n, -1)
        summary["max_component_std"] = float(max(xs[comp == k].std(axis=0).max() for k in np.unique(comp)))
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_import(args) -> int:
    path = import_geom_gcn(args.raw_dir, args.name, args.out)
    print(str(path))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sheaflab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="heterophily gain audit of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sigma", type=float, default=het.DEFAULT_SIGMA)
    p.add_argument("--counting", choices=het.COUNTINGS, default="edges")
    p.add_argument("--decimals", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("train", help="train ISN or diagonal SNN over folds")
    p.add_argument("--dataset", required=True)
    _add_hparam_flags(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--dump-laplacian", type=Path, help="write the identity-sheaf Laplacian as dense CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("figure", help="Rayleigh trajectory CSVs and hypothesis verdict for an SNN/ISN pair")
    p.add_argument("--dataset")
    p.add_argument("--snn-report", type=Path)
    p.add_argument("--isn-report", type=Path)
    _add_hparam_flags(p)
    p.add_argument("--out", type=Path)
    p.add_argument("--dump-laplacian", type=Path)
    p.set_defaults(func=cmd_figure)

    p = sub.add_parser("diffuse", help="Euler sheaf diffusion demo")
    p.add_argument("--dataset")
    p.add_argument("--nodes", type=int, default=30)
    p.add_argument("--edge-prob", type=float, default=0.1)
    p.add_argument("--sheaf", choices=["identity", "diagonal"], default="identity")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--mode", choices=["combinatorial", "degree-normalized"], default="combinatorial")
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--step", type=float)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--stop-on-convergence", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.add_argument("--dump-laplacian", type=Path)
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("import-geom-gcn", help="convert raw geom-gcn files to a dataset manifest")
    p.add_argument("--raw-dir", required=True, type=Path)
    p.add_argument("--name", required=True)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_import)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    except (ConfigError, UnstableStepError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except DivergedError as exc:
        logger.error("%s", exc)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
