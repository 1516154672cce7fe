"""Sensor placement by exhaustive search for the FoV centre maximising count variance."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from fovstats.cardinality import CardinalityPmf, fov_pmf, pmf_moments
from fovstats.fov import Box, FieldOfView
from fovstats.models import FovMassMethod, MonteCarlo


@dataclass(frozen=True)
class PlacementQuery:
    """Candidate FoVs are ``fov_template`` translated to each centre of a grid over ``roi``.

    The template should be centred on the origin.
    """

    fov_template: FieldOfView
    roi: Box
    grid_resolution: int
    model: object
    pmf_method: str = "dp"
    mass_method: FovMassMethod = field(default_factory=lambda: MonteCarlo(10_000, 0))
    mc_samples: int = 10**5
    mc_seed: int = 0

    def __post_init__(self):
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be at least 2")
        if self.fov_template.dim != self.roi.dim:
            raise ValueError("FoV template and ROI dimensions differ")
        if not np.all(np.isfinite(self.roi.lo) & np.isfinite(self.roi.hi)):
            raise ValueError("region of interest must be bounded")
        if self.pmf_method not in ("dp", "exact", "mc"):
            raise ValueError(f"unknown pmf method {self.pmf_method!r}")

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, self.grid_resolution) for lo, hi in zip(self.roi.lo, self.roi.hi)]

    def centers(self) -> np.ndarray:
        """Candidate centres in lexicographic order."""
        return np.array(list(product(*self.axes())), dtype=float)


@dataclass(frozen=True)
class PlacementResult:
    centers: np.ndarray
    variances: np.ndarray
    shape: tuple[int, ...]
    best_center: np.ndarray
    best_variance: float
    best_pmf: CardinalityPmf

    def variance_grid(self) -> np.ndarray:
        return self.variances.reshape(self.shape)


def evaluate_candidate(center, query: PlacementQuery) -> tuple[CardinalityPmf, float]:
    fov = query.fov_template.translated(np.asarray(center, dtype=float))
    pmf = fov_pmf(query.model, fov, query.mass_method, query.pmf_method,
                  n_samples=query.mc_samples, seed=query.mc_seed)
    return pmf, pmf_moments(pmf)[1]


def grid_search(query: PlacementQuery, workers: int = 1) -> PlacementResult:
    """Evaluate every grid centre; ties go to the lexicographically smallest centre.

    With ``workers > 1`` candidates are evaluated on a thread pool. Results
    are collected in grid order, so the outcome does not depend on ``workers``.
    """
    centers = query.centers()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(lambda c: evaluate_candidate(c, query), centers))
    else:
        results = [evaluate_candidate(c, query) for c in centers]
    variances = np.array([var for _, var in results])
    best = 0
    for i in range(1, len(centers)):
        if variances[i] > variances[best]:
            best = i
    best_pmf = results[best][0]
    shape = (query.grid_resolution,) * query.roi.dim
    return PlacementResult(centers, variances, shape, centers[best].copy(),
                           float(variances[best]), best_pmf)
