"""Command-line front end: gen, estimate, fit, search, eval, report.

Exit codes: 0 success, 2 latency target infeasible, 3 invalid input,
4 I/O failure. Every JSON output is canonical (sorted keys, 12 significant
digits) and carries the master seed, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import RankReport, insights, rank_predictor
from .errors import CapExceededError, InfeasibleError, UndefinedCorrelationError
from .estimator import BilinearEstimator, ablate, build
from .oracle import LatencyModel, SyntheticSupernet, gen_latency
from .predictors import (
    FAMILIES,
    QuadraticPredictor,
    RegressionDataset,
    collect_dataset,
    component_scores,
    cross_terms,
    fit_closed_form,
)
from .search_space import SearchSpaceSpec
from .solvers.compare import _cell_rng, best_of, run_solver
from .solvers.evolution import EvolutionParams

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_IO = 0, 2, 3, 4

PRESETS = {
    "tiny": lambda: SearchSpaceSpec.uniform(1, (1, 2), 2),
    "small": lambda: SearchSpaceSpec.uniform(3, (1, 2, 3), 3),
    "paper": SearchSpaceSpec.paper,
}
DEFAULT_TARGETS = (40.0, 45.0)
SOLVER_NAMES = {"bcfw": "bcfw", "evo": "evolution", "exact": "exact"}
ABLATION_CONTEXT = (
    "Reference Kendall tau on a trained one-shot ImageNet supernet: 0.84 full, "
    "0.66 with Q_ab=0, 0.29 with q_b=0. Context only; these are not targets."
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


class _IOFailure(Exception):
    pass


def _need_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise _IOFailure(f"no such file: {p}")
    return p


def _need_out(path, directory=False) -> Path:
    p = Path(path)
    parent = p if directory else p.parent
    if directory:
        try:
            p.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise _IOFailure(f"cannot create {p}: {exc}") from exc
    elif not parent.is_dir():
        raise _IOFailure(f"output directory does not exist: {parent}")
    return p


def _space(args) -> SearchSpaceSpec:
    if getattr(args, "space", None):
        return SearchSpaceSpec.load(_need_file(args.space))
    return PRESETS[getattr(args, "preset", None) or "paper"]()


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# -- commands --------------------------------------------------------------------


def cmd_gen(args) -> int:
    out = _need_out(args.out, directory=True)
    spec = _space(args)
    rng = np.random.default_rng(args.seed)
    oracle = SyntheticSupernet.generate(
        spec, rng,
        base=args.base, depth_scale=args.depth_scale, config_scale=args.config_scale,
        epsilon=args.epsilon, noise_std=args.noise_std,
    )
    lat = gen_latency(spec, rng, (args.lat_min, args.lat_max), args.overhead)
    io.write_json(out / "space.json", {**spec.to_dict(), "seed": args.seed})
    io.write_json(out / "oracle.json", {**oracle.to_dict(), "master_seed": args.seed})
    LatencyModel(spec, lat.block_latency, lat.fixed_overhead, {"seed": args.seed}).save(out / "latency.csv")
    print(f"N={spec.size} architectures={spec.count_architectures()} stages={spec.num_stages} configs={spec.num_configs}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    spec = _space(args)
    oracle = SyntheticSupernet.load(spec, _need_file(args.oracle))
    out = _need_out(args.out)
    n = None if args.n_per_probe == "exact" else int(args.n_per_probe)
    est = build(oracle, spec, n, args.n_repeats, args.seed, net_of_depth=not args.literal, workers=args.workers)
    m = est.meta
    _log(f"{m['n_probes']} probes ({m['n_depth_probes']} depth, {m['n_config_probes']} config) "
         f"x {args.n_repeats} repeats x {args.n_per_probe} samples")
    io.write_json(out, est.to_dict())
    return EXIT_OK


def _parse_grid(text: str) -> list[int]:
    try:
        grid = [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ValueError(f"bad k grid {text!r}") from exc
    if not grid:
        raise ValueError("empty k grid")
    return grid


def cmd_fit(args) -> int:
    spec = _space(args)
    out = _need_out(args.out)
    rng = np.random.default_rng(args.seed)
    if args.dataset:
        data = RegressionDataset.load(spec, _need_file(args.dataset))
    elif args.oracle:
        oracle = SyntheticSupernet.load(spec, _need_file(args.oracle))
        data = collect_dataset(oracle, spec, args.n, rng, n_test=args.n_test)
    else:
        raise ValueError("fit needs --dataset or --oracle")
    if args.dataset_out:
        data.save(_need_out(args.dataset_out))
    if args.k_grid:
        grid = _parse_grid(args.k_grid)
    else:
        n_feat = spec.size + len(cross_terms(spec, args.family)[0])
        grid = sorted({max(1, int(round(n_feat * f / 10))) for f in range(1, 11)})
    scores = component_scores(data, args.family, grid)
    if not scores:
        raise ValueError("no k in the grid is within the usable rank")
    best = max(scores.values())
    k = min(k for k, v in scores.items() if v == best)
    pred = fit_closed_form(data, args.family, k)
    doc = pred.to_dict()
    doc["seed"] = args.seed
    doc["k_scores"] = [{"k": kk, "val_kendall_tau": v} for kk, v in sorted(scores.items())]
    if len(data.test) >= 2:
        from .analysis import rank_report

        doc["test_report"] = rank_report(
            pred.predict_batch(data.depth_idx[data.test], data.config_idx[data.test]), data.targets[data.test]
        ).to_dict()
    io.write_json(out, doc)
    return EXIT_OK


def cmd_search(args) -> int:
    spec = _space(args)
    est = BilinearEstimator.load(spec, _need_file(args.estimator))
    lat = LatencyModel.load(spec, _need_file(args.latency))
    out = _need_out(args.out)
    targets = args.target or list(DEFAULT_TARGETS)
    names = list(SOLVER_NAMES.values()) if args.solver == "all" else [SOLVER_NAMES[args.solver]]
    params = EvolutionParams(population=args.population, generations=args.generations)
    runs, best_rows = [], []
    infeasible = False
    for ti, target in enumerate(targets):
        found = []
        for name in names:
            result, error = None, None
            try:
                result = run_solver(
                    name, est, lat, target, _cell_rng(args.seed, ti, name),
                    seed=args.seed, iterations=args.iterations, evo_params=params, cap=args.cap,
                )
            except InfeasibleError as exc:
                infeasible = True
                error = f"infeasible: {exc}"
            except CapExceededError as exc:
                if len(names) == 1:
                    raise
                error = f"cap exceeded: {exc}"
            found.append(result)
            runs.append({
                "target_ms": target,
                "solver": name,
                "result": None if result is None else result.to_dict(spec),
                "error": error,
            })
        if len(names) > 1:
            winner = best_of(found)
            best_rows.append({
                "target_ms": target,
                "solver": None if winner is None else winner.solver,
                "predicted_acc": None if winner is None else winner.predicted_acc,
                "latency_ms": None if winner is None else winner.latency,
                "arch": None if winner is None else winner.record(spec).to_dict(),
            })
    doc = {"seed": args.seed, "solver": args.solver, "runs": runs}
    if best_rows:
        doc["best"] = best_rows
    io.write_json(out, doc)
    for r in runs:
        res = r["result"]
        status = r["error"] or f"acc={res['predicted_acc']:.4f} lat={res['latency_ms']:.4f} ms"
        print(f"T={r['target_ms']:g} {r['solver']}: {status}")
    return EXIT_INFEASIBLE if infeasible else EXIT_OK


def _load_model(spec, args):
    if args.estimator:
        return "estimator", BilinearEstimator.load(spec, _need_file(args.estimator))
    if args.predictor:
        return "predictor", QuadraticPredictor.load(spec, _need_file(args.predictor))
    raise ValueError("eval needs --estimator or --predictor")


def cmd_eval(args) -> int:
    spec = _space(args)
    oracle = SyntheticSupernet.load(spec, _need_file(args.oracle))
    kind, model = _load_model(spec, args)
    out = _need_out(args.out)
    report = rank_predictor(model, oracle, spec, args.n, np.random.default_rng(args.seed), noisy=args.noisy)
    io.write_json(out, {**report.to_dict(), "model": kind, "noisy_targets": args.noisy, "seed": args.seed})
    print(f"kendall_tau={report.kendall_tau:.4f} spearman_rho={report.spearman_rho:.4f} mse={report.mse:.6g} n={report.n}")
    return EXIT_OK


def _ablation_rows(est, oracle, spec, n, seed, noisy) -> list[dict]:
    rows = []
    for label, model in (
        ("full", est),
        ("Q_ab=0", ablate(est, "config_deltas")),
        ("q_b=0", ablate(est, "depth_deltas")),
    ):
        try:
            rep: RankReport | None = rank_predictor(model, oracle, spec, n, np.random.default_rng(seed), noisy=noisy)
        except UndefinedCorrelationError:
            rep = None
        rows.append({"terms": label, **(rep.to_dict() if rep else {"kendall_tau": None, "spearman_rho": None, "mse": None, "n": n})})
    return rows


def cmd_report(args) -> int:
    spec = _space(args)
    est = BilinearEstimator.load(spec, _need_file(args.estimator))
    lat = LatencyModel.load(spec, _need_file(args.latency))
    out = _need_out(args.out)
    oracle = None
    if args.ablate:
        if not args.oracle:
            raise ValueError("--ablate needs --oracle")
        oracle = SyntheticSupernet.load(spec, _need_file(args.oracle))
    csv_out = _need_out(args.csv) if args.csv else None
    rep = insights(est, lat)
    doc = {**rep.to_dict(), "seed": args.seed}
    if oracle is not None:
        doc["ablation"] = {
            "rows": _ablation_rows(est, oracle, spec, args.n, args.seed, args.noisy),
            "footnote": ABLATION_CONTEXT,
        }
    io.write_json(out, doc)
    if csv_out:
        rep.write_csv(csv_out, fmt=lambda v: io._format_float(float(v)))
    return EXIT_OK


# -- parser --------------------------------------------------------------------------


def _space_flags(p):
    p.add_argument("--space", help="search space JSON (overrides --preset)")
    p.add_argument("--preset", choices=sorted(PRESETS), default="paper", help="built-in search space")
    p.add_argument("--seed", type=int, default=0, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bilinear-nas", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="generate a synthetic oracle and latency table")
    _space_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--base", type=float, default=75.0)
    p.add_argument("--depth-scale", type=float, default=0.5)
    p.add_argument("--config-scale", type=float, default=0.15)
    p.add_argument("--epsilon", type=float, default=0.001, help="interaction strength")
    p.add_argument("--noise-std", type=float, default=0.1, help="per-query noise (accuracy points)")
    p.add_argument("--lat-min", type=float, default=0.8)
    p.add_argument("--lat-max", type=float, default=3.0)
    p.add_argument("--overhead", type=float, default=8.0, help="fixed latency in ms")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("estimate", help="build the bilinear estimator by probing the oracle")
    _space_flags(p)
    p.add_argument("--oracle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-probe", default="1000", help="samples per probe, or 'exact'")
    p.add_argument("--n-repeats", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--literal", action="store_true", help="keep raw config gaps (depth gap counted twice)")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("fit", help="fit a learned quadratic predictor in closed form")
    _space_flags(p)
    p.add_argument("--oracle")
    p.add_argument("--dataset", help="dataset CSV written by --dataset-out")
    p.add_argument("--dataset-out")
    p.add_argument("--family", choices=FAMILIES, default="bilinear")
    p.add_argument("--k-grid", help="comma separated component counts")
    p.add_argument("--n", type=int, default=2000, help="train+validation samples")
    p.add_argument("--n-test", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("search", help="latency-constrained search")
    _space_flags(p)
    p.add_argument("--estimator", required=True)
    p.add_argument("--latency", required=True)
    p.add_argument("--target", type=float, action="append", help="latency target in ms (repeatable; default 40 and 45)")
    p.add_argument("--solver", choices=["bcfw", "evo", "exact", "all"], default="all")
    p.add_argument("--iterations", type=int, default=2000, help="BCFW iterations")
    p.add_argument("--generations", type=int, default=500)
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--cap", type=int, default=10**6, help="largest space the exact solver will take")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="rank an estimator or predictor against the oracle")
    _space_flags(p)
    p.add_argument("--oracle", required=True)
    p.add_argument("--estimator")
    p.add_argument("--predictor")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--noisy", action="store_true", help="score against noisy oracle draws")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="interpretability report and term ablation")
    _space_flags(p)
    p.add_argument("--estimator", required=True)
    p.add_argument("--latency", required=True)
    p.add_argument("--oracle")
    p.add_argument("--ablate", action="store_true")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--noisy", action="store_true")
    p.add_argument("--csv", help="also write the long-format CSV here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (_IOFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        # StructuralError, CapExceededError and UndefinedCorrelationError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
