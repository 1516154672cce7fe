"""Versioned JSON scenario files with strict key checking.

Every object is a JSON dict; keys outside the documented set are rejected
with an error naming them, so a misspelt option never silently falls back
to a default. Format reference: ``docs/scenario.md``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from fovstats.fov import Box, FieldOfView, fov_from_dict
from fovstats.gmix import GaussianMixture
from fovstats.models import (Bernoulli, CovSpec, ExactBoxDiagonal, GlmbComponent,
                             GlmbDistribution, IidcRfs, MonteCarlo, MultiBernoulli,
                             PartitionWeights, PoissonRfs, sample_mb_scenario)
from fovstats.negative_info import ConstantVelocity, DensityGrid, Reduction
from fovstats.partition import SplitConfig

SCENARIO_VERSION = 1


class ScenarioError(ValueError):
    """Malformed scenario document."""


def _keys(d, where: str, required=(), optional=()) -> dict:
    if not isinstance(d, dict):
        raise ScenarioError(f"{where}: expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(required) - set(optional))
    if unknown:
        raise ScenarioError(f"{where}: unknown key(s) {', '.join(map(repr, unknown))}")
    missing = [k for k in required if k not in d]
    if missing:
        raise ScenarioError(f"{where}: missing key(s) {', '.join(map(repr, missing))}")
    return d


def _wrap(where: str, fn, *args):
    try:
        return fn(*args)
    except ScenarioError:
        raise
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


# --- mixtures, FoVs, configs ------------------------------------------------

def mixture_to_dict(gm: GaussianMixture) -> dict:
    return {"weights": gm.weights.tolist(), "means": gm.means.tolist(),
            "covs": gm.covs.tolist(), "position_dim": gm.position_dim}


def mixture_from_dict(d, where="mixture") -> GaussianMixture:
    _keys(d, where, ("weights", "means", "covs", "position_dim"))
    return _wrap(where, lambda: GaussianMixture(
        np.asarray(d["weights"], dtype=float).reshape(-1),
        np.asarray(d["means"], dtype=float), np.asarray(d["covs"], dtype=float),
        int(d["position_dim"])))


def fov_to_dict(fov: FieldOfView) -> dict:
    return fov.to_dict()


def parse_fov(d, where="fov") -> FieldOfView:
    _keys(d, where, ("type",), ("lo", "hi", "A", "b", "center", "radius"))
    return _wrap(where, fov_from_dict, d)


def parse_box(d, where) -> Box:
    fov = parse_fov(d, where)
    if not isinstance(fov, Box):
        raise ScenarioError(f"{where}: must be a box")
    return fov


def _dataclass_from(cls, d, where):
    names = [f.name for f in fields(cls)]
    _keys(d, where, (), names)
    return _wrap(where, lambda: cls(**d))


def split_to_dict(cfg: SplitConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def parse_split(d, where="split") -> SplitConfig:
    return _dataclass_from(SplitConfig, d, where)


def parse_mass_method(d, where="mass_method", seed: int = 0):
    kind = _keys(d, where, ("type",), ("samples", "seed", "split"))["type"]
    if kind == "monte_carlo":
        _keys(d, where, ("type",), ("samples", "seed"))
        return _wrap(where, lambda: MonteCarlo(int(d.get("samples", 10_000)), int(d.get("seed", seed))))
    if kind == "partition":
        _keys(d, where, ("type",), ("split",))
        return PartitionWeights(parse_split(d["split"], f"{where}.split")) if "split" in d \
            else PartitionWeights()
    if kind == "exact_box":
        _keys(d, where, ("type",))
        return ExactBoxDiagonal()
    raise ScenarioError(f"{where}: unknown mass method {kind!r}")


def mass_method_to_dict(m) -> dict:
    if isinstance(m, MonteCarlo):
        return {"type": "monte_carlo", "samples": m.samples, "seed": m.seed}
    if isinstance(m, PartitionWeights):
        return {"type": "partition", "split": split_to_dict(m.config)}
    if isinstance(m, ExactBoxDiagonal):
        return {"type": "exact_box"}
    raise TypeError(f"unknown mass method {m!r}")


# --- models -----------------------------------------------------------------

def model_to_dict(model) -> dict:
    if isinstance(model, PoissonRfs):
        return {"type": "poisson", "intensity": mixture_to_dict(model.intensity)}
    if isinstance(model, IidcRfs):
        return {"type": "iidc", "cardinality": model.cardinality.tolist(),
                "spatial": mixture_to_dict(model.spatial)}
    if isinstance(model, MultiBernoulli):
        return {"type": "multi_bernoulli",
                "components": [{"r": c.r, "density": mixture_to_dict(c.density)}
                               for c in model.components]}
    if isinstance(model, GlmbDistribution):
        return {"type": "glmb", "components": [
            {"weight": c.weight,
             "tracks": [{"label": lab, "density": mixture_to_dict(c.densities[lab])}
                        for lab in c.labels]}
            for c in model.components]}
    raise TypeError(f"unsupported model type {type(model).__name__}")


def parse_model(d, where="model", seed: int = 0):
    kind = _keys(d, where, ("type",), ("intensity", "cardinality", "spatial", "components",
                                       "M", "roi", "r_range", "std_range", "seed"))["type"]
    if kind == "poisson":
        _keys(d, where, ("type", "intensity"))
        return PoissonRfs(mixture_from_dict(d["intensity"], f"{where}.intensity"))
    if kind == "iidc":
        _keys(d, where, ("type", "cardinality", "spatial"))
        spatial = mixture_from_dict(d["spatial"], f"{where}.spatial")
        return _wrap(where, IidcRfs, np.asarray(d["cardinality"], dtype=float), spatial)
    if kind == "multi_bernoulli":
        _keys(d, where, ("type", "components"))
        comps = []
        for i, c in enumerate(d["components"]):
            w = f"{where}.components[{i}]"
            _keys(c, w, ("r", "density"))
            comps.append(_wrap(w, Bernoulli, float(c["r"]), mixture_from_dict(c["density"], f"{w}.density")))
        return MultiBernoulli(tuple(comps))
    if kind == "glmb":
        _keys(d, where, ("type", "components"))
        comps = []
        for i, c in enumerate(d["components"]):
            w = f"{where}.components[{i}]"
            _keys(c, w, ("weight", "tracks"))
            labels, dens = [], {}
            for j, t in enumerate(c["tracks"]):
                wt = f"{w}.tracks[{j}]"
                _keys(t, wt, ("label", "density"))
                labels.append(t["label"])
                dens[t["label"]] = mixture_from_dict(t["density"], f"{wt}.density")
            comps.append(_wrap(w, GlmbComponent, float(c["weight"]), tuple(labels), dens))
        return _wrap(where, GlmbDistribution, tuple(comps))
    if kind == "random_multi_bernoulli":
        _keys(d, where, ("type", "M", "roi"), ("r_range", "std_range", "seed"))
        roi = parse_box(d["roi"], f"{where}.roi")
        return _wrap(where, lambda: sample_mb_scenario(
            int(d["M"]), roi, tuple(d.get("r_range", (0.35, 1.0))),
            CovSpec(tuple(d.get("std_range", (0.1, 0.5)))), int(d.get("seed", seed))))
    raise ScenarioError(f"{where}: unknown model type {kind!r}")


# --- whole documents --------------------------------------------------------

@dataclass(frozen=True)
class DemoBlock:
    initial: GaussianMixture
    dynamics: ConstantVelocity
    steps: int = 3
    reduction: Reduction = Reduction()
    grid: DensityGrid | None = None
    mc_samples: int = 100_000


@dataclass(frozen=True)
class PlanBlock:
    roi: Box
    fov_template: FieldOfView
    grid_resolution: int
    phd_grid: DensityGrid | None = None


@dataclass(frozen=True)
class Scenario:
    seed: int = 0
    model: object = None
    fov: FieldOfView | None = None
    split: SplitConfig = SplitConfig()
    mass_method: object = None
    p_d: float = 1.0
    demo: DemoBlock | None = None
    plan: PlanBlock | None = None


def _parse_grid(d, where) -> DensityGrid:
    _keys(d, where, ("lo", "hi", "points"))
    lo, hi, pts = (tuple(d[k]) for k in ("lo", "hi", "points"))
    if not len(lo) == len(hi) == len(pts) or any(n < 2 for n in pts):
        raise ScenarioError(f"{where}: lo, hi, points must have equal length and points >= 2")
    return DensityGrid(tuple(map(float, lo)), tuple(map(float, hi)), tuple(map(int, pts)))


def _grid_to_dict(g: DensityGrid) -> dict:
    return {"lo": list(g.lo), "hi": list(g.hi), "points": list(g.points)}


def _parse_demo(d, where="demo") -> DemoBlock:
    _keys(d, where, ("initial", "dynamics"), ("steps", "reduction", "grid", "mc_samples"))
    dyn = _keys(d["dynamics"], f"{where}.dynamics", ("type",), ("dt", "noise"))
    if dyn["type"] != "constant_velocity":
        raise ScenarioError(f"{where}.dynamics: unknown dynamics type {dyn['type']!r}")
    dynamics = _wrap(f"{where}.dynamics", lambda: ConstantVelocity(
        float(dyn.get("dt", 1.0)), float(dyn.get("noise", 0.0))))
    red = _dataclass_from(Reduction, d.get("reduction", {}), f"{where}.reduction")
    grid = _parse_grid(d["grid"], f"{where}.grid") if "grid" in d else None
    steps = int(d.get("steps", 3))
    if steps < 1:
        raise ScenarioError(f"{where}.steps: must be at least 1")
    return DemoBlock(mixture_from_dict(d["initial"], f"{where}.initial"), dynamics, steps, red,
                     grid, int(d.get("mc_samples", 100_000)))


def _parse_plan(d, where="plan") -> PlanBlock:
    _keys(d, where, ("roi", "fov_template", "grid_resolution"), ("phd_grid",))
    grid = _parse_grid(d["phd_grid"], f"{where}.phd_grid") if "phd_grid" in d else None
    res = int(d["grid_resolution"])
    if res < 2:
        raise ScenarioError(f"{where}.grid_resolution: must be at least 2")
    return PlanBlock(parse_box(d["roi"], f"{where}.roi"),
                     parse_fov(d["fov_template"], f"{where}.fov_template"), res, grid)


TOP_KEYS = ("version", "seed", "model", "fov", "split", "mass_method", "p_d", "demo", "plan",
            "description")


def parse_scenario(d, seed_override: int | None = None) -> Scenario:
    _keys(d, "scenario", ("version",), TOP_KEYS)
    if d["version"] != SCENARIO_VERSION:
        raise ScenarioError(f"scenario: unsupported version {d['version']!r}")
    seed = int(d.get("seed", 0)) if seed_override is None else int(seed_override)
    if seed < 0:
        raise ScenarioError("scenario: seed must be nonnegative")
    model = None
    if "model" in d:
        md = dict(d["model"])
        if seed_override is not None and md.get("type") == "random_multi_bernoulli":
            md["seed"] = seed
        model = parse_model(md, "model", seed)
    mass = parse_mass_method(d["mass_method"], seed=seed) if "mass_method" in d else MonteCarlo(10_000, seed)
    if seed_override is not None and isinstance(mass, MonteCarlo):
        mass = MonteCarlo(mass.samples, seed)
    p_d = float(d.get("p_d", 1.0))
    if not 0 <= p_d <= 1:
        raise ScenarioError("scenario: p_d must lie in [0, 1]")
    return Scenario(
        seed, model,
        parse_fov(d["fov"]) if "fov" in d else None,
        parse_split(d["split"]) if "split" in d else SplitConfig(),
        mass, p_d,
        _parse_demo(d["demo"]) if "demo" in d else None,
        _parse_plan(d["plan"]) if "plan" in d else None)


def scenario_to_dict(s: Scenario) -> dict:
    out = {"version": SCENARIO_VERSION, "seed": s.seed, "split": split_to_dict(s.split),
           "p_d": s.p_d}
    if s.model is not None:
        out["model"] = model_to_dict(s.model)
    if s.fov is not None:
        out["fov"] = fov_to_dict(s.fov)
    if s.mass_method is not None:
        out["mass_method"] = mass_method_to_dict(s.mass_method)
    if s.demo is not None:
        demo = {"initial": mixture_to_dict(s.demo.initial),
                "dynamics": {"type": "constant_velocity", "dt": s.demo.dynamics.dt,
                             "noise": s.demo.dynamics.noise},
                "steps": s.demo.steps,
                "reduction": {"prune_threshold": s.demo.reduction.prune_threshold,
                              "merge_threshold": s.demo.reduction.merge_threshold},
                "mc_samples": s.demo.mc_samples}
        if s.demo.grid is not None:
            demo["grid"] = _grid_to_dict(s.demo.grid)
        out["demo"] = demo
    if s.plan is not None:
        plan = {"roi": fov_to_dict(s.plan.roi), "fov_template": fov_to_dict(s.plan.fov_template),
                "grid_resolution": s.plan.grid_resolution}
        if s.plan.phd_grid is not None:
            plan["phd_grid"] = _grid_to_dict(s.plan.phd_grid)
        out["plan"] = plan
    return out


def load_scenario(path, seed_override: int | None = None) -> Scenario:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"cannot parse {path}: {exc}") from None
    return parse_scenario(d, seed_override)


def dump_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=2) + "\n")
