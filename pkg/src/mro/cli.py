"""Command line entry point: ``python -m mro <subcommand> ...``.

Every subcommand either generates a seeded experiment instance
(``--experiment``) or reads files (``--data``, ``--problem``, ``--clustering``).
JSON goes to ``--out`` or standard output.  The exit status is 0 only when
every solve reached an optimal status.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from mro.clustering import ClusteredSet, kmeans
from mro.conic import available_backends
from mro.cutting_plane import CuttingPlaneConfig, cutting_plane_solve, max_oracle
from mro.data import Dataset
from mro.experiments import (
    EXPERIMENTS,
    ExperimentConfig,
    make_setup,
    records_to_csv,
    run_sweep,
    solve_cell,
)
from mro.guarantees import cross_validate_epsilon, sandwich_check
from mro.reformulate import problem_from_dict, solve_problem

log = logging.getLogger("mro")


def _floats(text: str) -> list[float]:
    return [math.inf if t.strip().lower() == "inf" else float(t) for t in text.split(",") if t]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def _p(text: str):
    return math.inf if text.lower() == "inf" else int(text)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _emit_json(obj, out) -> None:
    _emit(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", out)


def _config(args) -> ExperimentConfig:
    """Experiment config from ``--config`` with command-line overrides."""
    d = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.experiment:
        d["experiment"] = args.experiment
    if "experiment" not in d:
        raise SystemExit("an experiment is required (--experiment or --config)")
    for key, attr in (("seed", "seed"), ("backend", "backend"), ("method", "method"),
                      ("strategy", "strategy"), ("R", "R")):
        val = getattr(args, attr, None)
        if val is not None:
            d[key] = val
    if getattr(args, "p", None) is not None:
        d["p"] = args.p
    if getattr(args, "K", None):
        d["K_list"] = args.K
    if getattr(args, "eps", None):
        d["eps_grid"] = args.eps
    return ExperimentConfig.from_dict(d)


def _first(values, name):
    if len(values) != 1:
        raise SystemExit(f"{name} takes a single value for this subcommand")
    return values[0]


def _problem(args):
    """Build ``(setup or None, problem)`` from either an experiment or files."""
    if args.problem:
        pdict = json.loads(Path(args.problem).read_text())
        if args.clustering:
            cs = ClusteredSet.from_json(Path(args.clustering).read_text())
        elif args.data:
            K = _first(args.K or [1], "--K")
            cs = kmeans(Dataset.load(args.data), K, seed=args.seed or 0)
        else:
            raise SystemExit("--problem needs --clustering or --data")
        eps = _first(args.eps, "--eps") if args.eps else None
        return None, problem_from_dict(pdict, cs, p=args.p, epsilon=eps), None
    cfg = _config(args)
    setup = make_setup(cfg)
    K = _first(cfg.K_list, "--K")
    eps = _first(cfg.eps_grid, "--eps")
    cs = kmeans(setup.data, K, seed=cfg.seed)
    return setup, setup.build(cs, setup.spec(eps)), cfg


def _solve(prob, setup, args):
    method = args.method or (setup.method() if setup else "auto")
    strategy = args.strategy or "exhaustive"
    backend = args.backend or "clarabel"
    if method == "cutting-plane":
        res = cutting_plane_solve(prob, CuttingPlaneConfig(), backend, strategy=strategy)
        return res.solution, res
    return solve_problem(prob, method=method, backend=backend, strategy=strategy), None


# -- subcommands ---------------------------------------------------------------

def cmd_cluster(args) -> int:
    if args.data:
        data = Dataset.load(args.data)
        seed = args.seed or 0
    else:
        cfg = _config(args)
        data = make_setup(cfg).data
        seed = cfg.seed
    K = _first(args.K or [1], "--K")
    _emit(kmeans(data, K, seed=seed).to_json(indent=2) + "\n", args.out)
    return 0


def cmd_solve(args) -> int:
    setup, prob, _ = _problem(args)
    sol, cp = _solve(prob, setup, args)
    out = sol.to_dict()
    out["x"] = None if sol.x is None else prob.x_of(sol)
    if prob.epigraph and sol.x is not None:
        out["tau"] = prob.tau_of(sol)
    out["info"] = {k: v for k, v in sol.info.items() if k != "raw_status"}
    if cp is not None:
        out["history"] = cp.history
    _emit_json(out, args.out)
    if cp is not None and args.history:
        Path(args.history).write_text(cp.history_csv())
    return 0 if sol.ok else 1


def cmd_oracle(args) -> int:
    setup, prob, _ = _problem(args)
    if args.x:
        x = np.array(_floats(args.x))
    else:
        sol, _ = _solve(prob, setup, args)
        if not sol.ok:
            _emit_json({"status": sol.status}, args.out)
            return 1
        x = prob.x_of(sol)
    results = []
    for fam in prob.families:
        res = max_oracle(fam, x, prob.clustered, prob.spec)
        results.append({"family": fam.tag, "value": res.value, "status": res.status,
                        "iterations": res.iterations, "points": res.points})
    _emit_json({"x": x, "results": results}, args.out)
    return 0 if all(r["status"] == "optimal" for r in results) else 1


def cmd_check_sandwich(args) -> int:
    setup, prob, cfg = _problem(args)
    sol, _ = _solve(prob, setup, args)
    if not sol.ok:
        _emit_json({"status": sol.status}, args.out)
        return 1
    x = prob.x_of(sol)
    data = setup.data if setup else Dataset.load(args.data)
    reports = []
    for fam in prob.families:
        rep = sandwich_check(fam, x, data, prob.clustered, prob.spec, args.backend)
        reports.append({"family": fam.tag, **rep.to_dict()})
    _emit_json({"x": x, "objective": sol.objective, "K": prob.clustered.K,
                "reports": reports}, args.out)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.out:
        cfg.out = args.out
    records = run_sweep(cfg)
    if not cfg.out:
        sys.stdout.write(records_to_csv(records))
    return 0 if all(r.status == "optimal" for r in records) else 1


def cmd_validate(args) -> int:
    cfg = _config(args)
    if cfg.R < 1:
        cfg.R = 20
    setup = make_setup(cfg)
    K = _first(cfg.K_list, "--K")

    def make_template(eps):
        def template(train):
            return setup.build(kmeans(train, min(K, train.N), seed=cfg.seed), setup.spec(eps))
        return template

    cv = cross_validate_epsilon(make_template, lambda prob: solve_cell(setup, prob),
                                setup.sampler, cfg.eps_grid, args.target_beta, cfg.R,
                                cfg.sizes["N"], cfg.N_eval, cfg.seed, cfg.criterion)
    lines = ["eps,beta_hat,objective,failures"]
    lines += [f"{r['eps']!r},{r['beta_hat']!r},{r['objective']!r},{r['failures']}"
              for r in cv.table]
    lines.append(f"# eps_star={cv.eps_star!r} qualified={cv.qualified}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0 if all(r["failures"] == 0 for r in cv.table) else 1


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mro", description="Mean robust optimization")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, solver=True):
        p.add_argument("--experiment", choices=EXPERIMENTS)
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--K", type=_ints, help="cluster count(s), comma separated")
        p.add_argument("--eps", type=_floats, help="radius value(s), comma separated")
        p.add_argument("--p", type=_p, help="1, 2, ... or inf")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path (default: stdout)")
        # accepted everywhere so one flag set drives every subcommand
        p.add_argument("--backend", choices=available_backends())
        p.add_argument("--method", choices=("auto", "dual", "compact", "cutting-plane"))
        if solver:
            p.add_argument("--strategy", choices=("exhaustive", "branch-and-bound"))
            p.add_argument("--problem", help="problem JSON file")
            p.add_argument("--clustering", help="clustering JSON file")
            p.add_argument("--data", help="dataset CSV or JSON")

    p = sub.add_parser("cluster", help="k-means clustering to JSON")
    common(p, solver=False)
    p.add_argument("--data", help="dataset CSV or JSON")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("solve", help="solve one (K, eps) instance to JSON")
    common(p)
    p.add_argument("--history", help="cutting-plane history CSV path")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("oracle", help="worst-case scenarios at a given or solved x")
    common(p)
    p.add_argument("--x", help="decision vector, comma separated")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("check-sandwich", help="clustered vs unclustered worst cases")
    common(p)
    p.set_defaults(func=cmd_check_sandwich)

    p = sub.add_parser("sweep", help="(K, eps) grid to CSV")
    common(p)
    p.add_argument("--R", type=int, help="repetitions for the beta column (0 = skip)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate", help="out-of-sample beta per eps to CSV")
    common(p)
    p.add_argument("--R", type=int, help="repetitions per eps (default 20)")
    p.add_argument("--target-beta", type=float, default=0.1)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
