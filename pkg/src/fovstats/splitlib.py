"""Optimal splits of the univariate standard normal into R narrower Gaussians.

Each entry approximates N(0, 1) by ``sum_j w_j N(m_j, sigma^2)`` with
weights and means mirrored about zero, chosen to minimise

    J = L2(N(0,1), mixture) + lambda * sigma^2.
"""

from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from fovstats.gmix import l2_to_standard_normal_1d

LIBRARY_VERSION = 1
R_RANGE = (2, 9)
DEFAULT_R = (2, 3, 4, 5)
DEFAULT_LAMBDAS = (1e-4, 1e-3, 1e-2)


class LibraryError(ValueError):
    """A split library file is malformed or violates an entry invariant."""


@dataclass(frozen=True)
class SplitParameters:
    R: int
    lam: float
    weights: tuple[float, ...]
    means: tuple[float, ...]
    sigma: float
    achieved_cost: float
    converged: bool = True

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        validate_entry(self)

    @property
    def l2(self) -> float:
        return l2_to_standard_normal_1d(self.weights, self.means, self.sigma)

    @property
    def variance(self) -> float:
        """Variance of the split mixture (the original has variance 1)."""
        w, m = np.array(self.weights), np.array(self.means)
        return float(self.sigma**2 + np.sum(w * m**2))

    def to_dict(self) -> dict:
        return {"R": self.R, "lambda": self.lam, "weights": list(self.weights),
                "means": list(self.means), "sigma": self.sigma,
                "achieved_cost": self.achieved_cost, "converged": self.converged}

    @classmethod
    def from_dict(cls, d: dict) -> SplitParameters:
        try:
            return cls(int(d["R"]), float(d["lambda"]), d["weights"], d["means"],
                       float(d["sigma"]), float(d["achieved_cost"]), bool(d.get("converged", True)))
        except KeyError as exc:
            raise LibraryError(f"library entry missing field {exc}") from None


def validate_entry(p: SplitParameters) -> None:
    w, m = p.weights, p.means
    if len(w) != p.R or len(m) != p.R:
        raise LibraryError(f"R={p.R} entry has {len(w)} weights and {len(m)} means")
    if p.R < 2:
        raise LibraryError("split needs at least two components")
    if any(x < 0 for x in w) or abs(math.fsum(w) - 1.0) > 1e-12:
        raise LibraryError(f"weights must be nonnegative and sum to 1, sum={math.fsum(w)!r}")
    for j in range(p.R):
        if m[j] != -m[p.R - 1 - j] or w[j] != w[p.R - 1 - j]:
            raise LibraryError("split parameters are not symmetric about zero")
    if any(b <= a for a, b in zip(m, m[1:])):
        raise LibraryError("split means must be strictly increasing")
    if not 0 < p.sigma < 1:
        raise LibraryError(f"sigma must lie in (0, 1), got {p.sigma}")
    if not p.lam >= 0:
        raise LibraryError("lambda must be nonnegative")


def evaluate_cost(params: SplitParameters, lam: float) -> float:
    return params.l2 + lam * params.sigma**2


@dataclass(frozen=True)
class OptimizerSettings:
    starts: int = 12
    seed: int = 20200101
    maxiter: int = 4000
    gtol: float = 1e-12
    nest: bool = True

    def to_dict(self) -> dict:
        return {"method": "BFGS", "starts": self.starts, "seed": self.seed,
                "maxiter": self.maxiter, "gtol": self.gtol, "nest": self.nest}


def _unpack(theta: np.ndarray, R: int):
    """Map unconstrained parameters to a symmetric (weights, means, sigma)."""
    h, odd = R // 2, R % 2
    logits = theta[: h + odd]
    incs = theta[h + odd: 2 * h + odd]
    e = np.exp(logits - logits.max())
    z = 2.0 * e[odd:].sum() + (e[0] if odd else 0.0)
    pair_w = e[odd:] / z
    pos = np.cumsum(np.exp(incs))
    weights = np.concatenate([pair_w[::-1], [e[0] / z] if odd else [], pair_w])
    means = np.concatenate([-pos[::-1], [0.0] if odd else [], pos])
    sigma = 1.0 / (1.0 + np.exp(-theta[-1]))
    return weights, means, sigma


def _pack(weights, means, sigma, R: int) -> np.ndarray:
    h, odd = R // 2, R % 2
    w = np.asarray(weights)[h:]
    pos = np.asarray(means)[h + odd:]
    logits = np.log(np.maximum(w, 1e-300))
    incs = np.log(np.diff(np.concatenate([[0.0], pos])))
    sigma = min(max(sigma, 1e-9), 1 - 1e-9)
    return np.concatenate([logits, incs, [np.log(sigma / (1 - sigma))]])


def _embed(lower: SplitParameters) -> np.ndarray:
    """Start point for R+1 components that reproduces ``lower`` almost exactly."""
    R = lower.R + 1
    w, m = np.array(lower.weights), np.array(lower.means)
    h = lower.R // 2
    if lower.R % 2:
        # split the central component into a narrow pair
        wc = w[h]
        w2 = np.concatenate([w[:h], [wc / 2, wc / 2], w[h + 1:]])
        eps = 1e-3 * (m[h + 1] if lower.R > 1 else 1.0)
        m2 = np.concatenate([m[:h], [-eps, eps], m[h + 1:]])
    else:
        w2 = np.concatenate([w[:h] * (1 - 1e-6), [1e-6], w[h:] * (1 - 1e-6)])
        m2 = np.concatenate([m[:h], [0.0], m[h:]])
    return _pack(w2, m2, lower.sigma, R)


def generate_split(R: int, lam: float, opts: OptimizerSettings | None = None) -> SplitParameters:
    """Multi-start local minimisation of the split cost for one (R, lambda).

    Deterministic for fixed ``opts``. With ``opts.nest`` the optimum for
    R - 1 is embedded as an extra start so the cost never increases with R.
    """
    if not R_RANGE[0] <= R <= R_RANGE[1]:
        raise ValueError(f"R must lie in [{R_RANGE[0]}, {R_RANGE[1]}], got {R}")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    return _generate(int(R), float(lam), opts or OptimizerSettings())


@functools.lru_cache(maxsize=None)
def _generate(R: int, lam: float, opts: OptimizerSettings) -> SplitParameters:
    def cost(theta):
        w, m, s = _unpack(theta, R)
        return l2_to_standard_normal_1d(w, m, s) + lam * s * s

    h, odd = R // 2, R % 2
    rng = np.random.default_rng([opts.seed, R, int(round(-math.log10(lam) * 1000)) + 10**6])
    starts = []
    for _ in range(opts.starts):
        sigma = rng.uniform(0.2, 0.8)
        spread = rng.uniform(0.5, 2.0)
        pos = np.sort(rng.uniform(0.1, 1.0, h)) * spread
        pos = np.maximum.accumulate(pos + 1e-3 * np.arange(1, h + 1))
        w = rng.dirichlet(np.ones(h + odd))
        half = w[odd:] / (2 * w[odd:].sum() + (w[0] if odd else 0))
        wc = [w[0] / (2 * w[odd:].sum() + w[0])] if odd else []
        weights = np.concatenate([half[::-1], wc, half])
        means = np.concatenate([-pos[::-1], [0.0] if odd else [], pos])
        starts.append(_pack(weights, means, sigma, R))
    if opts.nest and R > R_RANGE[0]:
        starts.append(_embed(_generate(R - 1, lam, opts)))

    best = None
    for x0 in starts:
        res = minimize(cost, x0, method="BFGS",
                       options={"maxiter": opts.maxiter, "gtol": opts.gtol})
        if best is None or res.fun < best.fun:
            best = res
    w, m, s = _unpack(best.x, R)
    # exact symmetry and unit mass after floating-point unpacking
    half_w = w[h + odd:]
    center = [1.0 - 2.0 * math.fsum(half_w)] if odd else []
    if not odd:
        half_w = half_w / (2.0 * math.fsum(half_w))
    weights = np.concatenate([half_w[::-1], center, half_w])
    means = np.concatenate([-m[h + odd:][::-1], [0.0] if odd else [], m[h + odd:]])
    converged = bool(best.success) or best.status == 2  # status 2: precision loss at optimum
    params = SplitParameters(R, lam, weights, means, float(s), 0.0, converged)
    return SplitParameters(R, lam, params.weights, params.means, params.sigma,
                           evaluate_cost(params, lam), converged)


@dataclass
class SplitLibrary:
    entries: dict[tuple[int, float], SplitParameters] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def add(self, p: SplitParameters) -> None:
        self.entries[(p.R, p.lam)] = p

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key) -> bool:
        return key in self.entries

    def get(self, R: int, lam: float) -> SplitParameters:
        """Entry for (R, lam); falls back to the nearest lambda (log scale) for that R."""
        key = (R, lam)
        if key in self.entries:
            return self.entries[key]
        candidates = [k for k in self.entries if k[0] == R]
        if not candidates:
            raise KeyError(f"split library has no entries for R={R}")
        near = min(candidates, key=lambda k: (abs(math.log(k[1]) - math.log(lam)), k[1]))
        warnings.warn(f"split library has no entry for (R={R}, lambda={lam}); "
                      f"using lambda={near[1]}", stacklevel=2)
        return self.entries[near]

    def to_dict(self) -> dict:
        keys = sorted(self.entries)
        return {"version": LIBRARY_VERSION,
                "entries": [self.entries[k].to_dict() for k in keys],
                "provenance": self.provenance}

    @classmethod
    def from_dict(cls, d: dict) -> SplitLibrary:
        if d.get("version") != LIBRARY_VERSION:
            raise LibraryError(f"unsupported split library version {d.get('version')!r}")
        lib = cls(provenance=dict(d.get("provenance", {})))
        for e in d.get("entries", []):
            lib.add(SplitParameters.from_dict(e))
        return lib


def build_library(Rs=DEFAULT_R, lambdas=DEFAULT_LAMBDAS,
                  opts: OptimizerSettings | None = None) -> SplitLibrary:
    opts = opts or OptimizerSettings()
    lib = SplitLibrary(provenance={"generator": "fovstats.splitlib.build_library",
                                   "cost": "L2(q, q_split) + lambda * sigma^2",
                                   "optimizer": opts.to_dict()})
    for R in Rs:
        for lam in lambdas:
            lib.add(generate_split(int(R), float(lam), opts))
    return lib


def dumps_library(lib: SplitLibrary) -> str:
    return json.dumps(lib.to_dict(), indent=2) + "\n"


def save_library(lib: SplitLibrary, path) -> None:
    Path(path).write_text(dumps_library(lib))


def load_library(path) -> SplitLibrary:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LibraryError(f"cannot parse split library {path}: {exc}") from None
    return SplitLibrary.from_dict(d)


def default_library() -> SplitLibrary:
    """The library shipped with the package."""
    text = resources.files("fovstats").joinpath("data/split_library.json").read_text()
    return SplitLibrary.from_dict(json.loads(text))
