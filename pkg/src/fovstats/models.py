"""Multi-object models (Poisson, IIDC, multi-Bernoulli, GLMB) and FoV mass evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from fovstats.fov import Box, FieldOfView
from fovstats.gmix import GaussianMixture, marginalize_position
from fovstats.partition import SplitConfig, refine_and_partition
from fovstats.splitlib import SplitLibrary, default_library

R_MAX = 1.0 - 1e-9


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based (Philox) generator; each ``stream`` is an independent sequence."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


# --- FoV mass methods -------------------------------------------------------

# Finer than the demo settings; max mass error about 0.014 on random diagonal box cases.
MASS_SPLIT_CONFIG = SplitConfig(w_min=0.0005, R=5, lam=1e-3)


@dataclass(frozen=True)
class PartitionWeights:
    config: SplitConfig = MASS_SPLIT_CONFIG
    library: SplitLibrary | None = field(default=None, compare=False)


@dataclass(frozen=True)
class MonteCarlo:
    samples: int = 10_000
    seed: int = 0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("Monte Carlo mass needs at least one sample")

    def position_samples(self, p: GaussianMixture, stream: int) -> np.ndarray:
        # draws depend only on (seed, stream, p), so caching does not change results
        key = (id(p), stream)
        hit = self._cache.get(key)
        if hit is None or hit[0] is not p:
            x = marginalize_position(p).sample(self.samples, make_rng(self.seed, stream))
            hit = (p, x)
            self._cache[key] = hit
        return hit[1]

    def stacked_samples(self, ps, first_stream: int) -> np.ndarray:
        """Samples of every density in ``ps``, shape ``(len(ps), samples, n_p)``."""
        key = (tuple(id(p) for p in ps), first_stream)
        hit = self._cache.get(key)
        if hit is None or any(a is not b for a, b in zip(hit[0], ps)):
            x = np.stack([self.position_samples(p, first_stream + i) for i, p in enumerate(ps)])
            hit = (tuple(ps), x)
            self._cache[key] = hit
        return hit[1]

    def sorted_samples(self, ps, first_stream: int) -> np.ndarray:
        """:meth:`stacked_samples` with each density's draws ordered by the first coordinate."""
        key = ("sorted", tuple(id(p) for p in ps), first_stream)
        hit = self._cache.get(key)
        if hit is None or any(a is not b for a, b in zip(hit[0], ps)):
            x = self.stacked_samples(ps, first_stream)
            order = np.argsort(x[:, :, 0], axis=1, kind="stable")
            hit = (tuple(ps), np.take_along_axis(x, order[:, :, None], axis=1))
            self._cache[key] = hit
        return hit[1]


def _box_counts(xs: np.ndarray, box: Box) -> np.ndarray:
    """Per-density count of samples inside ``box``; rows of ``xs`` sorted by coordinate 0."""
    counts = np.empty(xs.shape[0], dtype=np.int64)
    for i, x in enumerate(xs):
        a = np.searchsorted(x[:, 0], box.lo[0], side="left")
        b = np.searchsorted(x[:, 0], box.hi[0], side="right")
        rest = x[a:b, 1:]
        counts[i] = np.count_nonzero(np.all((rest >= box.lo[1:]) & (rest <= box.hi[1:]), axis=1))
    return counts


@dataclass(frozen=True)
class ExactBoxDiagonal:
    pass


FovMassMethod = PartitionWeights | MonteCarlo | ExactBoxDiagonal


class MethodMismatch(ValueError):
    """The chosen mass method cannot handle this FoV or mixture."""


def _exact_box(p: GaussianMixture, fov: FieldOfView) -> float:
    if not isinstance(fov, Box):
        raise MethodMismatch("ExactBoxDiagonal requires an axis-aligned box FoV")
    k = p.position_dim
    covs = p.covs[:, :k, :k]
    diag = np.diagonal(covs, axis1=1, axis2=2)
    off = covs - diag[:, :, None] * np.eye(k)
    if np.any(np.abs(off) > 1e-12 * np.max(diag, axis=1)[:, None, None]):
        raise MethodMismatch("ExactBoxDiagonal requires diagonal position covariances")
    s = np.sqrt(diag)
    m = p.means[:, :k]
    per = np.prod(ndtr((fov.hi - m) / s) - ndtr((fov.lo - m) / s), axis=1)
    return float(p.weights @ per)


def fov_mass(p: GaussianMixture, fov: FieldOfView, method: FovMassMethod | None = None,
             stream: int = 0) -> float:
    """Estimate <1_S, p>, the weight of ``p`` lying inside ``fov``.

    The result is scaled by the mixture's total weight, so an unnormalized
    intensity gives the expected count inside the FoV. ``stream`` selects an
    independent random stream for Monte Carlo.
    """
    method = method or PartitionWeights()
    if fov.dim != p.position_dim:
        raise ValueError("FoV and mixture position dimensions differ")
    if p.n_components == 0:
        return 0.0
    if isinstance(method, ExactBoxDiagonal):
        return _exact_box(p, fov)
    if isinstance(method, MonteCarlo):
        x = method.position_samples(p, stream)
        return p.total_weight * float(np.count_nonzero(fov.contains_points(x))) / method.samples
    if isinstance(method, PartitionWeights):
        lib = method.library or default_library()
        return refine_and_partition(p, fov, method.config, lib).mass_inside
    raise TypeError(f"unknown FoV mass method {method!r}")


def fov_masses(ps, fov: FieldOfView, method: FovMassMethod | None = None,
               first_stream: int = 0) -> np.ndarray:
    """:func:`fov_mass` of each density in ``ps``; density ``i`` uses stream ``first_stream + i``."""
    ps = list(ps)
    if isinstance(method, MonteCarlo) and ps and len({p.position_dim for p in ps}) == 1:
        if fov.dim != ps[0].position_dim:
            raise ValueError("FoV and mixture position dimensions differ")
        weights = np.array([p.total_weight for p in ps])
        if isinstance(fov, Box):
            return weights * _box_counts(method.sorted_samples(ps, first_stream), fov) / method.samples
        x = method.stacked_samples(ps, first_stream)
        inside = np.count_nonzero(fov.contains_points(x), axis=1)
        return weights * inside / method.samples
    return np.array([fov_mass(p, fov, method, stream=first_stream + i) for i, p in enumerate(ps)])


# --- multi-object models ----------------------------------------------------

def _check_normalized(p: GaussianMixture, what: str) -> None:
    if not p.is_normalized():
        raise ValueError(f"{what} density must have unit total weight, got {p.total_weight}")


@dataclass(frozen=True)
class PoissonRfs:
    intensity: GaussianMixture

    @property
    def mean_cardinality(self) -> float:
        return self.intensity.total_weight


@dataclass(frozen=True)
class IidcRfs:
    cardinality: np.ndarray
    spatial: GaussianMixture

    def __post_init__(self):
        rho = np.asarray(self.cardinality, dtype=float).reshape(-1)
        if np.any(rho < 0) or abs(rho.sum() - 1.0) > 1e-12:
            raise ValueError("IIDC cardinality pmf must be nonnegative and sum to 1")
        _check_normalized(self.spatial, "IIDC spatial")
        object.__setattr__(self, "cardinality", rho)


@dataclass(frozen=True)
class Bernoulli:
    r: float
    density: GaussianMixture

    def __post_init__(self):
        if not 0 <= self.r < 1:
            raise ValueError(f"existence probability must lie in [0, 1), got {self.r}; "
                             f"use 1 - 1e-9 for a certainly existing object")
        _check_normalized(self.density, "Bernoulli")


@dataclass(frozen=True)
class MultiBernoulli:
    components: tuple[Bernoulli, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def M(self) -> int:
        return len(self.components)

    @property
    def existence(self) -> np.ndarray:
        return np.array([c.r for c in self.components])


@dataclass(frozen=True)
class GlmbComponent:
    weight: float
    labels: tuple
    densities: dict

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"GLMB labels must be distinct, got {labels}")
        if not self.weight >= 0:
            raise ValueError("GLMB component weight must be nonnegative")
        if set(self.densities) != set(labels):
            raise ValueError("GLMB component needs exactly one density per label")
        for lab in labels:
            _check_normalized(self.densities[lab], f"GLMB label {lab!r}")
        object.__setattr__(self, "labels", labels)


@dataclass(frozen=True)
class GlmbDistribution:
    components: tuple[GlmbComponent, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"GLMB weights must sum to 1, got {total}")
        object.__setattr__(self, "components", comps)


RfsModel = PoissonRfs | IidcRfs | MultiBernoulli | GlmbDistribution


def phd_of_mb(mb: MultiBernoulli) -> GaussianMixture:
    """Intensity sum_i r_i p_i of a multi-Bernoulli process."""
    if mb.M == 0:
        raise ValueError("empty multi-Bernoulli has no state space")
    out = mb.components[0].density.scaled(mb.components[0].r)
    for c in mb.components[1:]:
        out = out.concat(c.density.scaled(c.r))
    return out


def phd(model) -> GaussianMixture:
    """Intensity (first-moment density) of any supported model."""
    if isinstance(model, PoissonRfs):
        return model.intensity
    if isinstance(model, IidcRfs):
        mean_n = float(np.arange(model.cardinality.size) @ model.cardinality)
        return model.spatial.scaled(mean_n)
    if isinstance(model, MultiBernoulli):
        return phd_of_mb(model)
    if isinstance(model, GlmbDistribution):
        parts = [c.densities[lab].scaled(c.weight) for c in model.components for lab in c.labels]
        if not parts:
            raise ValueError("GLMB with no tracks has no state space")
        out = parts[0]
        for q in parts[1:]:
            out = out.concat(q)
        return out
    raise TypeError(f"unsupported model type {type(model).__name__}")


@dataclass(frozen=True)
class CovSpec:
    """Random covariances: per-axis std drawn uniformly, then randomly rotated."""

    std_range: tuple[float, float] = (0.1, 0.5)


def _random_rotation(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def sample_mb_scenario(M: int, roi: Box, r_range=(0.35, 1.0), cov_spec: CovSpec = CovSpec(),
                       seed: int = 0) -> MultiBernoulli:
    """Random single-Gaussian multi-Bernoulli over a box region of interest."""
    if M < 1:
        raise ValueError("scenario needs at least one component")
    rng = make_rng(seed)
    n = roi.dim
    comps = []
    for _ in range(M):
        mean = rng.uniform(roi.lo, roi.hi)
        r = min(float(rng.uniform(*r_range)), R_MAX)
        std = rng.uniform(*cov_spec.std_range, size=n)
        rot = _random_rotation(rng, n)
        cov = (rot * std**2) @ rot.T
        cov = 0.5 * (cov + cov.T)
        comps.append(Bernoulli(r, GaussianMixture.single(mean, cov)))
    return MultiBernoulli(tuple(comps))
