"""Refine a Gaussian mixture along FoV boundaries and partition it by component means.

The refinement repeatedly splits components whose whitened collocation grid
straddles the FoV boundary, so that assigning each component wholly to the
inside or outside of the FoV (by its mean) becomes accurate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fovstats.fov import CollocationGrid, FieldOfView, GridClassification, classify_grid
from fovstats.gmix import EigenBasis, GaussianComponent, GaussianMixture, eigendecompose
from fovstats.splitlib import SplitLibrary, SplitParameters

TIE_ATOL = 1e-12


class ContradictionError(ValueError):
    """An update left no probability mass (the evidence contradicts the prior)."""


@dataclass(frozen=True)
class SplitConfig:
    w_min: float = 0.01
    R: int = 3
    lam: float = 1e-3
    zeta: float = 3.0
    points_per_dim: int = 7
    max_depth: int = 10

    def __post_init__(self):
        if not 0 < self.w_min < 1:
            raise ValueError("w_min must lie in (0, 1)")
        if self.max_depth < 1:
            raise ValueError("max_depth must be at least 1")
        CollocationGrid(self.zeta, self.points_per_dim, 1)

    def grid(self, dim: int) -> CollocationGrid:
        return CollocationGrid(self.zeta, self.points_per_dim, dim)


@dataclass(frozen=True)
class Refinement:
    mixture: GaussianMixture
    splits_performed: int
    depth_reached: int
    depth_capped: bool


@dataclass(frozen=True)
class PartitionResult:
    inside: GaussianMixture
    outside: GaussianMixture
    refined: GaussianMixture
    inside_mask: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def mass_inside(self) -> float:
        return self.inside.total_weight

    @property
    def mass_outside(self) -> float:
        return self.outside.total_weight


@dataclass(frozen=True)
class UpdateResult:
    """Normalized posterior plus the mass the evidence retained before normalization."""

    mixture: GaussianMixture
    retained_mass: float
    partition: PartitionResult


def choose_position_direction(classification: GridClassification, eigenvalues=None) -> int:
    """Index of the whitened axis orthogonal to the most uniformly classified planes.

    Ties go to the larger position-marginal eigenvalue, then the smaller index.
    Indices are 0-based.
    """
    if classification.all_same:
        raise ValueError("grid is uniformly classified; there is nothing to split")
    counts = np.asarray(classification.plane_counts)
    if eigenvalues is None:
        eigenvalues = classification.eigenvalues
    tied = np.flatnonzero(counts == counts.max())
    if eigenvalues is None or tied.size == 1:
        return int(tied[0])
    ev = np.asarray(eigenvalues)[tied]
    return int(tied[np.flatnonzero(ev == ev.max())[0]])


def choose_fullstate_direction(j_star: int, basis_full: EigenBasis, basis_pos: EigenBasis) -> int:
    """Full-state eigenvector best aligned with position eigenvector ``j_star``.

    Ties (within 1e-12) go to the larger eigenvalue, then the smaller index.
    """
    n_p = basis_pos.dim
    scores = np.abs(basis_pos.eigenvectors[:, j_star] @ basis_full.eigenvectors[:n_p, :])
    tied = np.flatnonzero(scores >= scores.max() - TIE_ATOL)
    ev = basis_full.eigenvalues[tied]
    return int(tied[np.flatnonzero(ev == ev.max())[0]])


def _split_arrays(weight, mean, cov, basis: EigenBasis, k: int, params: SplitParameters):
    lam_k = basis.eigenvalues[k]
    v = basis.eigenvectors[:, k]
    w = weight * np.asarray(params.weights)
    m = mean + np.sqrt(lam_k) * np.outer(params.means, v)
    p = cov - (1.0 - params.sigma**2) * lam_k * np.outer(v, v)
    return w, m, np.broadcast_to(p, (params.R,) + cov.shape)


def split_component(c: GaussianComponent, k: int, params: SplitParameters,
                    basis: EigenBasis | None = None) -> list[GaussianComponent]:
    """Replace ``c`` by ``params.R`` components spread along eigenvector ``k``."""
    basis = basis or eigendecompose(c.cov)
    if not 0 <= k < basis.dim:
        raise ValueError(f"eigen index {k} out of range for dimension {basis.dim}")
    w, m, p = _split_arrays(c.weight, c.mean, c.cov, basis, k, params)
    return [GaussianComponent(wi, mi, pi) for wi, mi, pi in zip(w, m, p)]


def _needs_split(mean, cov, n_p, fov, grid, w, w_min):
    if w < w_min:
        return None
    basis_p = eigendecompose(cov[:n_p, :n_p])
    cls = classify_grid(fov, grid, basis_p, mean[:n_p])
    if cls.all_same:
        return None
    return basis_p, cls


def refine_for_fov(gm: GaussianMixture, fov: FieldOfView, cfg: SplitConfig,
                   lib: SplitLibrary) -> Refinement:
    """Recursive FoV-driven splitting with diagnostics.

    Each component is either passed through (weight below ``w_min`` or a
    uniformly classified grid) or split once along the chosen direction, and
    the resulting pieces are examined again, up to ``max_depth`` levels.
    Output order is stable: by parent position, then split index.
    """
    n_p = gm.position_dim
    if fov.dim != n_p:
        raise ValueError(f"FoV dimension {fov.dim} does not match position dimension {n_p}")
    if gm.n_components == 0:
        return Refinement(gm, 0, 0, False)
    params = lib.get(cfg.R, cfg.lam)
    grid = cfg.grid(n_p)
    out_w, out_m, out_p = [], [], []
    stats = {"splits": 0, "depth": 0, "capped": False}

    def visit(w, m, p, depth):
        stats["depth"] = max(stats["depth"], depth)
        sel = _needs_split(m, p, n_p, fov, grid, w, cfg.w_min)
        if sel is None:
            out_w.append(w), out_m.append(m), out_p.append(p)
            return
        if depth > cfg.max_depth:
            stats["capped"] = True
            out_w.append(w), out_m.append(m), out_p.append(p)
            return
        basis_p, cls = sel
        j_star = choose_position_direction(cls, basis_p.eigenvalues)
        basis_full = basis_p if n_p == m.size else eigendecompose(p)
        k_star = choose_fullstate_direction(j_star, basis_full, basis_p)
        cw, cm, cp = _split_arrays(w, m, p, basis_full, k_star, params)
        stats["splits"] += 1
        for child in zip(cw, cm, cp):
            visit(*child, depth + 1)

    for w, m, p in zip(gm.weights, gm.means, gm.covs):
        visit(w, m, p, 1)
    refined = GaussianMixture(np.array(out_w), np.array(out_m), np.array(out_p),
                              n_p, validate=False)
    return Refinement(refined, stats["splits"], stats["depth"], stats["capped"])


def split_for_fov(gm: GaussianMixture, fov: FieldOfView, cfg: SplitConfig,
                  lib: SplitLibrary) -> GaussianMixture:
    return refine_for_fov(gm, fov, cfg, lib).mixture


def mean_partition(gm: GaussianMixture, fov: FieldOfView, diagnostics: dict | None = None
                   ) -> PartitionResult:
    """Assign each component to the inside or outside of ``fov`` by its mean."""
    inside = fov.contains_points(gm.means[:, :gm.position_dim]) if gm.n_components else \
        np.zeros(0, dtype=bool)
    diag = dict(diagnostics or {})
    result = PartitionResult(gm.subset(np.flatnonzero(inside)), gm.subset(np.flatnonzero(~inside)),
                             gm, inside, diag)
    diag.setdefault("mass_inside", result.mass_inside)
    diag.setdefault("mass_outside", result.mass_outside)
    return result


def refine_and_partition(gm: GaussianMixture, fov: FieldOfView, cfg: SplitConfig,
                         lib: SplitLibrary) -> PartitionResult:
    ref = refine_for_fov(gm, fov, cfg, lib)
    return mean_partition(ref.mixture, fov, {"splits_performed": ref.splits_performed,
                                             "depth_reached": ref.depth_reached,
                                             "depth_capped": ref.depth_capped})


def _finish(mixture: GaussianMixture, part: PartitionResult, what: str) -> UpdateResult:
    mass = mixture.total_weight
    if not mass > 0:
        raise ContradictionError(f"{what} leaves zero probability mass")
    return UpdateResult(mixture.normalized(), mass, part)


def update_presence(gm, fov, cfg, lib) -> UpdateResult:
    """Condition on the object being inside the FoV."""
    part = refine_and_partition(gm, fov, cfg, lib)
    return _finish(part.inside, part, "presence update")


def update_absence(gm, fov, cfg, lib) -> UpdateResult:
    """Condition on the object being outside the FoV."""
    part = refine_and_partition(gm, fov, cfg, lib)
    return _finish(part.outside, part, "absence update")


def update_nondetection(gm, fov, p_d: float, cfg, lib) -> UpdateResult:
    """Bayes update for a missed detection with constant in-FoV detection probability."""
    if not 0 <= p_d <= 1:
        raise ValueError("p_d must lie in [0, 1]")
    if p_d == 0:
        part = mean_partition(gm, fov)
        return _finish(gm, part, "non-detection update")
    part = refine_and_partition(gm, fov, cfg, lib)
    refined = part.refined
    scale = np.where(part.inside_mask, 1.0 - p_d, 1.0)
    keep = np.flatnonzero(~part.inside_mask) if p_d == 1 else np.arange(refined.n_components)
    mixture = GaussianMixture(refined.weights[keep] * scale[keep], refined.means[keep],
                              refined.covs[keep], refined.position_dim, validate=False)
    return _finish(mixture, part, "non-detection update")
