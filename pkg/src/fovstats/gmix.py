"""Gaussian mixtures over a state whose leading coordinates are position.

Mixtures are stored as stacked arrays (weights ``(L,)``, means ``(L, n)``,
covariances ``(L, n, n)``) and are treated as immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

SPD_RTOL = 1e-12
SYM_RTOL = 1e-12


class NonPositiveDefinite(ValueError):
    """A covariance matrix is not symmetric positive-definite."""


def _check_spd(covs: np.ndarray) -> None:
    if covs.shape[0] == 0:
        return
    scale = np.max(np.abs(covs), axis=(1, 2))
    asym = np.max(np.abs(covs - np.swapaxes(covs, 1, 2)), axis=(1, 2))
    if np.any(asym > SYM_RTOL * scale):
        raise NonPositiveDefinite("covariance is not symmetric")
    eigs = np.linalg.eigvalsh(covs)
    if np.any(eigs[:, 0] <= SPD_RTOL * eigs[:, -1]) or np.any(eigs[:, -1] <= 0):
        raise NonPositiveDefinite("covariance is not positive-definite")


@dataclass(frozen=True)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float).reshape(mean.size, mean.size)
        if not self.weight >= 0:
            raise ValueError(f"component weight must be nonnegative, got {self.weight}")
        _check_spd(cov[None])
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


class GaussianMixture:
    """Weighted sum of Gaussians with the first ``position_dim`` states as position.

    Parameters
    ----------
    weights : array_like, shape (L,)
    means : array_like, shape (L, n)
    covs : array_like, shape (L, n, n)
    position_dim : int, optional
        Number of leading state elements forming the position subspace.
        Defaults to the full state.
    validate : bool
        Check nonnegative weights and SPD covariances. Internal callers that
        derive components from already validated ones may skip this.
    """

    __slots__ = ("weights", "means", "covs", "position_dim")

    def __init__(self, weights, means, covs, position_dim: int | None = None,
                 validate: bool = True):
        weights = np.array(weights, dtype=float).reshape(-1)
        means = np.array(means, dtype=float)
        covs = np.array(covs, dtype=float)
        if means.ndim == 1:
            means = means.reshape(weights.size, -1)
        n = means.shape[1]
        covs = covs.reshape(weights.size, n, n)
        if means.shape[0] != weights.size:
            raise ValueError("weights and means disagree on component count")
        if n < 1:
            raise ValueError("state dimension must be positive")
        if position_dim is None:
            position_dim = n
        if not 1 <= position_dim <= n:
            raise ValueError(f"position_dim must lie in [1, {n}], got {position_dim}")
        if validate:
            if np.any(~(weights >= 0)) or not np.all(np.isfinite(weights)):
                raise ValueError("weights must be finite and nonnegative")
            _check_spd(covs)
        for arr in (weights, means, covs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "covs", covs)
        object.__setattr__(self, "position_dim", int(position_dim))

    def __setattr__(self, name, value):
        raise AttributeError("GaussianMixture is immutable")

    @classmethod
    def empty(cls, state_dim: int, position_dim: int | None = None) -> GaussianMixture:
        return cls(np.zeros(0), np.zeros((0, state_dim)), np.zeros((0, state_dim, state_dim)),
                   position_dim, validate=False)

    @classmethod
    def from_components(cls, components, position_dim: int | None = None) -> GaussianMixture:
        components = list(components)
        if not components:
            raise ValueError("use GaussianMixture.empty for an empty mixture")
        return cls([c.weight for c in components], [c.mean for c in components],
                   [c.cov for c in components], position_dim)

    @classmethod
    def single(cls, mean, cov, weight: float = 1.0,
               position_dim: int | None = None) -> GaussianMixture:
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        return cls([weight], mean[None], np.asarray(cov, dtype=float).reshape(1, mean.size, mean.size),
                   position_dim)

    @property
    def state_dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.size

    def __len__(self) -> int:
        return self.weights.size

    @property
    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    @property
    def components(self) -> list[GaussianComponent]:
        return list(iter(self))

    def __iter__(self) -> Iterator[GaussianComponent]:
        for w, m, p in zip(self.weights, self.means, self.covs):
            yield GaussianComponent(w, m, p)

    def __repr__(self) -> str:
        return (f"GaussianMixture(L={self.n_components}, n={self.state_dim}, "
                f"n_p={self.position_dim}, total_weight={self.total_weight:.6g})")

    def is_normalized(self, atol: float = 1e-9) -> bool:
        return abs(self.total_weight - 1.0) <= atol

    def with_weights(self, weights) -> GaussianMixture:
        return GaussianMixture(weights, self.means, self.covs, self.position_dim)

    def scaled(self, factor: float) -> GaussianMixture:
        return GaussianMixture(self.weights * factor, self.means, self.covs,
                               self.position_dim, validate=False)

    def normalized(self) -> GaussianMixture:
        total = self.total_weight
        if total <= 0:
            raise ValueError("cannot normalize a mixture with zero total weight")
        return self.scaled(1.0 / total)

    def subset(self, index) -> GaussianMixture:
        index = np.asarray(index)
        return GaussianMixture(self.weights[index], self.means[index], self.covs[index],
                               self.position_dim, validate=False)

    def concat(self, other: GaussianMixture) -> GaussianMixture:
        if other.state_dim != self.state_dim or other.position_dim != self.position_dim:
            raise ValueError("cannot concatenate mixtures over different spaces")
        return GaussianMixture(np.concatenate([self.weights, other.weights]),
                               np.concatenate([self.means, other.means]),
                               np.concatenate([self.covs, other.covs]),
                               self.position_dim, validate=False)

    def pdf(self, x) -> np.ndarray:
        """Evaluate the (weighted) density at points ``x`` of shape ``(k, n)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for w, m, p in zip(self.weights, self.means, self.covs):
            out += w * gaussian_pdf(x, m, p)
        return out

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` states from the normalized mixture."""
        if self.n_components == 0 or self.total_weight <= 0:
            raise ValueError("cannot sample from an empty mixture")
        probs = self.weights / self.total_weight
        counts = rng.multinomial(size, probs)
        chol = np.linalg.cholesky(self.covs)
        draws = []
        for k, c in enumerate(counts):
            if c:
                z = rng.standard_normal((c, self.state_dim))
                draws.append(self.means[k] + z @ chol[k].T)
        return np.concatenate(draws)


def gaussian_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    chol = np.linalg.cholesky(cov)
    sol = np.linalg.solve(chol, (x - mean).T)
    maha = np.sum(sol**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return np.exp(-0.5 * (maha + logdet + mean.size * np.log(2 * np.pi)))


@dataclass(frozen=True)
class EigenBasis:
    """Eigenvalues (descending) and orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T

    def whiten(self, x, mean) -> np.ndarray:
        """Map points to the frame where the Gaussian is standard normal."""
        return ((np.asarray(x) - mean) @ self.eigenvectors) / np.sqrt(self.eigenvalues)

    def unwhiten(self, z, mean) -> np.ndarray:
        return (np.asarray(z) * np.sqrt(self.eigenvalues)) @ self.eigenvectors.T + mean


def eigendecompose(m) -> EigenBasis:
    """Eigendecomposition of a symmetric positive-definite matrix.

    Eigenvalues are returned in descending order and each eigenvector is
    flipped so that its first nonzero entry is positive.

    Raises
    ------
    NonPositiveDefinite
        If ``m`` is not symmetric or has an eigenvalue <= 1e-12 times the largest.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    scale = np.max(np.abs(m))
    if np.max(np.abs(m - m.T)) > SYM_RTOL * scale:
        raise NonPositiveDefinite("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    # stable, so equal eigenvalues keep eigh's order (identity -> V = I)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    if vals[0] <= 0 or vals[-1] <= SPD_RTOL * vals[0]:
        raise NonPositiveDefinite(f"eigenvalues {vals} are not all positive")
    for k in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, k]) > 1e-12)
        if vecs[nz[0], k] < 0:
            vecs[:, k] = -vecs[:, k]
    vals.setflags(write=False)
    vecs.setflags(write=False)
    return EigenBasis(vals, vecs)


def marginalize_position(gm: GaussianMixture) -> GaussianMixture:
    """Position-marginal mixture: leading mean entries and covariance blocks."""
    k = gm.position_dim
    return GaussianMixture(gm.weights, gm.means[:, :k], gm.covs[:, :k, :k], k, validate=False)


def gaussian_products(means_a, covs_a, means_b, covs_b) -> np.ndarray:
    """Matrix of <N(.; a_i), N(.; b_j)> = N(a_i; b_j, P_i + P_j)."""
    n = means_a.shape[1]
    diff = means_a[:, None, :] - means_b[None, :, :]
    s = covs_a[:, None] + covs_b[None, :]
    chol = np.linalg.cholesky(s)
    sol = np.linalg.solve(chol, diff[..., None])[..., 0]
    maha = np.sum(sol**2, axis=-1)
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return np.exp(-0.5 * (maha + logdet + n * np.log(2 * np.pi)))


def inner_product(a: GaussianMixture, b: GaussianMixture) -> float:
    if a.n_components == 0 or b.n_components == 0:
        return 0.0
    return float(a.weights @ gaussian_products(a.means, a.covs, b.means, b.covs) @ b.weights)


def l2_distance(a: GaussianMixture, b: GaussianMixture) -> float:
    """Squared L2 distance between two mixtures, in closed form."""
    if a.state_dim != b.state_dim:
        raise ValueError(f"dimension mismatch: {a.state_dim} vs {b.state_dim}")
    d = inner_product(a, a) - 2.0 * inner_product(a, b) + inner_product(b, b)
    return max(d, 0.0)


def l2_to_standard_normal_1d(weights, means, sigma: float) -> float:
    """L2 distance between N(0, 1) and sum_j w_j N(m_j, sigma^2).

    Same closed form as :func:`l2_distance`, specialised to the shared-sigma
    univariate family so the split optimiser avoids per-call validation.
    """
    weights = np.asarray(weights, dtype=float)
    means = np.asarray(means, dtype=float)
    s2 = sigma * sigma
    qq = 1.0 / (2.0 * np.sqrt(np.pi))
    v = 1.0 + s2
    qt = np.sum(weights * np.exp(-0.5 * means**2 / v)) / np.sqrt(2 * np.pi * v)
    d = means[:, None] - means[None, :]
    tt = weights @ (np.exp(-0.25 * d**2 / s2) / np.sqrt(4 * np.pi * s2)) @ weights
    return max(float(qq - 2.0 * qt + tt), 0.0)


def mixture_moments(gm: GaussianMixture) -> tuple[np.ndarray, np.ndarray]:
    """Mean and total covariance of the normalized mixture."""
    total = gm.total_weight
    if not total > 0:
        raise ValueError("mixture has zero total weight")
    w = gm.weights / total
    mean = w @ gm.means
    d = gm.means - mean
    cov = np.einsum("l,lij->ij", w, gm.covs) + (d.T * w) @ d
    return mean, cov


def merge_and_prune(gm: GaussianMixture, prune_threshold: float = 0.0,
                    merge_threshold: float = 0.0) -> GaussianMixture:
    """Drop light components, then greedily merge nearby ones.

    The heaviest remaining component absorbs every component whose mean lies
    within Mahalanobis distance ``merge_threshold`` of it (measured with the
    heaviest component's covariance); the group is replaced by its
    moment-matched Gaussian. Repeats until no components remain.
    """
    if prune_threshold < 0 or merge_threshold < 0:
        raise ValueError("thresholds must be nonnegative")
    keep = np.flatnonzero(gm.weights >= prune_threshold)
    if merge_threshold == 0:
        return gm if keep.size == gm.n_components else gm.subset(keep)

    remaining = list(keep)
    weights, means, covs = [], [], []
    while remaining:
        idx = np.array(remaining)
        head = idx[np.argmax(gm.weights[idx])]
        diff = gm.means[idx] - gm.means[head]
        chol = np.linalg.cholesky(gm.covs[head])
        maha = np.sqrt(np.sum(np.linalg.solve(chol, diff.T) ** 2, axis=0))
        group = idx[maha < merge_threshold]
        if head not in group:
            group = np.append(group, head)
        w = gm.weights[group]
        wsum = w.sum()
        if wsum > 0:
            mean = w @ gm.means[group] / wsum
            d = gm.means[group] - mean
            cov = (np.einsum("l,lij->ij", w, gm.covs[group]) + (d.T * w) @ d) / wsum
        else:
            mean, cov = gm.means[head], gm.covs[head]
        weights.append(wsum)
        means.append(mean)
        covs.append(0.5 * (cov + cov.T))
        grouped = set(group.tolist())
        remaining = [i for i in remaining if i not in grouped]
    if not weights:
        return GaussianMixture.empty(gm.state_dim, gm.position_dim)
    return GaussianMixture(weights, means, covs, gm.position_dim)
