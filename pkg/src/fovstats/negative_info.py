"""Repeated missed-detection updates of a moving object's density.

The object moves with constant velocity; at every step its propagated
density is refined along the FoV boundary, the part assigned to the FoV is
removed (detection probability inside the FoV is one) and the remainder is
renormalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fovstats.fov import Box, FieldOfView
from fovstats.gmix import GaussianMixture, marginalize_position, merge_and_prune
from fovstats.models import MonteCarlo, fov_mass
from fovstats.partition import SplitConfig, update_nondetection
from fovstats.splitlib import SplitLibrary, default_library


@dataclass(frozen=True)
class ConstantVelocity:
    """Position-first state ``[p, v]`` with ``p' = p + dt v`` and white-acceleration noise."""

    dt: float = 1.0
    noise: float = 0.0

    def __post_init__(self):
        if not self.dt > 0 or self.noise < 0:
            raise ValueError("need dt > 0 and noise >= 0")

    def matrices(self, position_dim: int) -> tuple[np.ndarray, np.ndarray]:
        eye = np.eye(position_dim)
        dt = self.dt
        F = np.block([[eye, dt * eye], [np.zeros_like(eye), eye]])
        Q = self.noise * np.block([[dt**3 / 3 * eye, dt**2 / 2 * eye],
                                   [dt**2 / 2 * eye, dt * eye]])
        return F, Q

    def propagate(self, gm: GaussianMixture) -> GaussianMixture:
        n_p = gm.position_dim
        if gm.state_dim != 2 * n_p:
            raise ValueError("constant-velocity state must be [position, velocity]")
        F, Q = self.matrices(n_p)
        means = gm.means @ F.T
        covs = F @ gm.covs @ F.T + Q
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        return GaussianMixture(gm.weights, means, covs, n_p, validate=False)


@dataclass(frozen=True)
class Reduction:
    prune_threshold: float = 0.0
    merge_threshold: float = 0.0


@dataclass(frozen=True)
class DensityGrid:
    """Rectangular lattice over position space for exporting density values."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    points: tuple[int, ...]

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, n) for a, b, n in zip(self.lo, self.hi, self.points)]

    def coordinates(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def evaluate(self, gm: GaussianMixture) -> np.ndarray:
        return marginalize_position(gm).pdf(self.coordinates())


@dataclass(frozen=True)
class StepRecord:
    step: int
    prior: GaussianMixture
    refined_components: int
    posterior: GaussianMixture
    retained_mass: float
    prior_mass_inside: float
    posterior_mass_inside: float

    @property
    def normalization_error(self) -> float:
        return abs(self.posterior.total_weight - 1.0)


@dataclass(frozen=True)
class DemoRun:
    steps: list[StepRecord]
    baseline: list[GaussianMixture] = field(default_factory=list)


def run_negative_information(initial: GaussianMixture, fov: FieldOfView,
                             dynamics: ConstantVelocity, steps: int = 3,
                             cfg: SplitConfig = SplitConfig(), lib: SplitLibrary | None = None,
                             reduction: Reduction = Reduction(),
                             mass_method: MonteCarlo = MonteCarlo(100_000, 0)) -> DemoRun:
    """Alternate propagation and missed-detection updates for ``steps`` sensor reports.

    The first report applies to ``initial`` directly. Interior masses are
    Monte Carlo estimates on the mixtures themselves, not on the refined
    partition. ``baseline`` holds the propagate-only densities for comparison.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    lib = lib or default_library()
    records, baseline = [], []
    current, free = initial, initial
    for k in range(steps):
        if k:
            current = dynamics.propagate(current)
            free = dynamics.propagate(free)
        baseline.append(free)
        upd = update_nondetection(current, fov, 1.0, cfg, lib)
        post = upd.mixture
        if reduction.prune_threshold > 0 or reduction.merge_threshold > 0:
            post = merge_and_prune(post, reduction.prune_threshold,
                                   reduction.merge_threshold).normalized()
        records.append(StepRecord(
            k + 1, current, upd.partition.refined.n_components, post, upd.retained_mass,
            fov_mass(current, fov, mass_method, stream=2 * k),
            fov_mass(post, fov, mass_method, stream=2 * k + 1)))
        current = post
    return DemoRun(records, baseline)


def default_demo() -> tuple[GaussianMixture, Box, ConstantVelocity, DensityGrid]:
    """Illustrative scenario: a three-component density starting under a square FoV and drifting right out of it."""
    pos_cov = np.diag([0.6, 0.4])
    vel_cov = np.diag([0.05, 0.02])
    cov = np.block([[pos_cov, np.zeros((2, 2))], [np.zeros((2, 2)), vel_cov]])
    means = np.array([[-3.5, 0.3, 1.5, 0.0],
                      [-3.0, -0.4, 1.5, 0.1],
                      [-4.0, 0.0, 1.4, -0.1]])
    gm = GaussianMixture([0.5, 0.25, 0.25], means, np.stack([cov] * 3), 2)
    fov = Box([-4.0, -1.0], [-2.0, 1.0])
    grid = DensityGrid((-7.0, -4.0), (5.0, 4.0), (121, 81))
    return gm, fov, ConstantVelocity(1.0, 0.01), grid
