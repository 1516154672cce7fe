"""``fovstats`` command line: split libraries, the missed-detection demo, FoV count pmfs and placement."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from fovstats.cardinality import CardinalityPmf, NumericalError, fov_pmf
from fovstats.models import MethodMismatch, MonteCarlo, MultiBernoulli, phd
from fovstats.negative_info import DensityGrid, run_negative_information
from fovstats.partition import ContradictionError
from fovstats.planner import PlacementQuery, grid_search
from fovstats.scenario import ScenarioError, load_scenario, mixture_to_dict, split_to_dict
from fovstats.splitlib import (DEFAULT_LAMBDAS, DEFAULT_R, R_RANGE, LibraryError, build_library,
                               default_library, load_library, save_library)

EXIT_OK, EXIT_INVALID, EXIT_CONTRADICTION = 0, 2, 3


class UsageError(ValueError):
    pass


def write_csv(path: Path, header: list[str], columns) -> None:
    """Columns written with 17 significant digits so re-reading is exact."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def read_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


def _out_dir(args) -> Path:
    if args.out is None:
        raise UsageError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _library(args):
    return load_library(args.library) if args.library else default_library()


def _check_method(args, model) -> None:
    if args.method is not None and not isinstance(model, MultiBernoulli):
        raise UsageError(f"--method applies to multi-Bernoulli models only, "
                         f"not {type(model).__name__}")


def _pmf_rows(pmf: CardinalityPmf):
    return np.arange(pmf.probs.size), pmf.probs


def _pmf_json(pmf: CardinalityPmf) -> dict:
    return {"method": pmf.method, "mean": pmf.mean, "variance": pmf.variance,
            "void_probability": float(pmf.probs[0]), "pmf": pmf.probs.tolist(),
            "meta": {k: v for k, v in pmf.meta.items()}}


def _grid_columns(grid: DensityGrid, *values):
    xy = grid.coordinates()
    return [xy[:, i] for i in range(xy.shape[1])] + list(values)


def _axis_names(dim: int) -> list[str]:
    return ["x", "y", "z"][:dim] if dim <= 3 else [f"x{i}" for i in range(dim)]


# --- commands ---------------------------------------------------------------

def cmd_gen_library(args) -> int:
    Rs = args.R or list(DEFAULT_R)
    lams = args.lambdas or list(DEFAULT_LAMBDAS)
    bad = [R for R in Rs if not R_RANGE[0] <= R <= R_RANGE[1]]
    if bad:
        raise UsageError(f"R must lie in [{R_RANGE[0]}, {R_RANGE[1]}], got {bad}")
    if any(not lam > 0 for lam in lams):
        raise UsageError("lambda values must be positive")
    if args.out is None:
        raise UsageError("--out is required")
    lib = build_library(Rs, lams)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_library(lib, args.out)
    print(f"wrote {len(lib)} entries to {args.out}")
    return EXIT_OK


def cmd_partition_demo(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    if sc.demo is None or sc.fov is None:
        raise UsageError("partition-demo needs 'demo' and 'fov' blocks")
    out = _out_dir(args)
    demo = sc.demo
    run = run_negative_information(demo.initial, sc.fov, demo.dynamics, demo.steps, sc.split,
                                   _library(args), demo.reduction,
                                   MonteCarlo(demo.mc_samples, sc.seed))
    steps = run.steps
    write_csv(out / "steps.csv",
              ["step", "refined_components", "posterior_components", "retained_mass",
               "prior_mass_inside", "posterior_mass_inside", "normalization_error"],
              [[s.step for s in steps], [s.refined_components for s in steps],
               [s.posterior.n_components for s in steps], [s.retained_mass for s in steps],
               [s.prior_mass_inside for s in steps], [s.posterior_mass_inside for s in steps],
               [s.normalization_error for s in steps]])
    for s, free in zip(steps, run.baseline):
        write_json(out / f"step{s.step}.json",
                   {"step": s.step, "prior": mixture_to_dict(s.prior),
                    "posterior": mixture_to_dict(s.posterior),
                    "propagate_only": mixture_to_dict(free)})
        if demo.grid is not None:
            names = _axis_names(len(demo.grid.points))
            write_csv(out / f"density_step{s.step}.csv",
                      names + ["prior", "posterior", "propagate_only"],
                      _grid_columns(demo.grid, demo.grid.evaluate(s.prior),
                                    demo.grid.evaluate(s.posterior), demo.grid.evaluate(free)))
    write_json(out / "summary.json", {"fov": sc.fov.to_dict(), "split": split_to_dict(sc.split),
                                      "steps": len(steps)})
    for s in steps:
        print(f"step {s.step}: inside before {s.prior_mass_inside:.4f}, "
              f"after {s.posterior_mass_inside:.4f}, components {s.posterior.n_components}")
    return EXIT_OK


def cmd_cardinality(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    if sc.model is None or sc.fov is None:
        raise UsageError("cardinality needs 'model' and 'fov' blocks")
    _check_method(args, sc.model)
    samples = args.samples if args.samples is not None else 10**5
    pmf = fov_pmf(sc.model, sc.fov, sc.mass_method, args.method or "dp",
                  n_samples=samples, seed=sc.seed, p_d=sc.p_d)
    print("n,probability")
    for n, p in zip(*_pmf_rows(pmf)):
        print(f"{n},{p:.17g}")
    if args.out is not None:
        out = _out_dir(args)
        write_csv(out / "pmf.csv", ["n", "probability"], _pmf_rows(pmf))
        write_json(out / "pmf.json", _pmf_json(pmf))
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    if sc.model is None or sc.plan is None:
        raise UsageError("plan needs 'model' and 'plan' blocks")
    _check_method(args, sc.model)
    if sc.plan.roi.dim != 2:
        raise UsageError("plan exports 2-D maps; the region of interest must be 2-D")
    out = _out_dir(args)
    plan = sc.plan
    query = PlacementQuery(plan.fov_template, plan.roi, plan.grid_resolution, sc.model,
                           args.method or "dp", sc.mass_method,
                           args.samples if args.samples is not None else 10**5, sc.seed)
    res = grid_search(query, workers=args.workers)
    write_csv(out / "variance_map.csv", ["cx", "cy", "variance"],
              [res.centers[:, 0], res.centers[:, 1], res.variances])
    write_csv(out / "best_pmf.csv", ["n", "probability"], _pmf_rows(res.best_pmf))
    write_json(out / "best.json", {"best_center": res.best_center.tolist(),
                                   "best_variance": res.best_variance,
                                   "best_fov": plan.fov_template.translated(res.best_center).to_dict(),
                                   "pmf": _pmf_json(res.best_pmf)})
    grid = plan.phd_grid or DensityGrid(tuple(plan.roi.lo), tuple(plan.roi.hi), (101, 101))
    write_csv(out / "phd_grid.csv", ["x", "y", "phd"],
              _grid_columns(grid, grid.evaluate(phd(sc.model))))
    print(f"best center {res.best_center.tolist()} variance {res.best_variance:.6g}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fovstats", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-library", help="optimise split parameters and write a library file")
    g.add_argument("--R", type=int, nargs="+", help="component counts (default 2 3 4 5)")
    g.add_argument("--lambdas", type=float, nargs="+", help="variance penalties (default 1e-4 1e-3 1e-2)")
    g.add_argument("--out", help="output JSON path")
    g.set_defaults(func=cmd_gen_library)

    def common(p, method=False):
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--library", help="split library JSON (default: bundled)")
        if method:
            p.add_argument("--method", choices=("dp", "mc", "exact"),
                           help="multi-Bernoulli pmf algorithm (default dp)")
            p.add_argument("--samples", type=int, help="Monte Carlo trials for --method mc")

    common(sub.add_parser("partition-demo", help="repeated missed-detection updates"))
    sub.choices["partition-demo"].set_defaults(func=cmd_partition_demo)
    c = sub.add_parser("cardinality", help="pmf of the number of objects inside the FoV")
    common(c, method=True)
    c.set_defaults(func=cmd_cardinality)
    p = sub.add_parser("plan", help="grid search for the FoV centre with largest count variance")
    common(p, method=True)
    p.add_argument("--workers", type=int, default=1, help="parallel candidate evaluations")
    p.set_defaults(func=cmd_plan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        parser.error("--seed must be nonnegative")
    if getattr(args, "samples", None) is not None and args.samples < 1:
        parser.error("--samples must be positive")
    try:
        return args.func(args)
    except ContradictionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRADICTION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRADICTION
    except (UsageError, ScenarioError, LibraryError, MethodMismatch, ValueError, TypeError,
            KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
