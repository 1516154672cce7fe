"""Field-of-view regions in position space and collocation-grid classification."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product

import numpy as np

from fovstats.gmix import EigenBasis


class FieldOfView:
    """Closed region of position space; boundary points count as inside."""

    dim: int

    def contains_points(self, x: np.ndarray) -> np.ndarray:
        """Membership of each row of ``x`` (shape ``(k, dim)``)."""
        raise NotImplementedError

    def translated(self, offset) -> FieldOfView:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point dimension {x.shape[-1]} does not match FoV dimension {self.dim}")
        return x


@dataclass(frozen=True, eq=False)
class Box(FieldOfView):
    """Axis-aligned box ``lo <= x <= hi``. Infinite bounds give half-spaces."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValueError(f"box requires lo < hi componentwise, got {lo}, {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains_points(self, x):
        x = self._check(x)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def translated(self, offset):
        return Box(self.lo + offset, self.hi + offset)

    def to_dict(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class ConvexPolytope(FieldOfView):
    """Intersection of half-spaces ``A x <= b``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.size:
            raise ValueError("polytope needs one offset per half-space")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    def contains_points(self, x):
        x = self._check(x)
        return np.all(x @ self.A.T <= self.b, axis=-1)

    def translated(self, offset):
        return ConvexPolytope(self.A, self.b + self.A @ np.asarray(offset, dtype=float))

    def to_dict(self):
        return {"type": "polytope", "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class Ball(FieldOfView):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def contains_points(self, x):
        x = self._check(x)
        return np.sum((x - self.center) ** 2, axis=-1) <= self.radius**2

    def translated(self, offset):
        return Ball(self.center + offset, self.radius)

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


def fov_from_dict(d: dict) -> FieldOfView:
    kind = d.get("type")
    fields = {"box": ({"lo", "hi"}, Box), "polytope": ({"A", "b"}, ConvexPolytope),
              "ball": ({"center", "radius"}, Ball)}
    if kind not in fields:
        raise ValueError(f"unknown FoV type {kind!r}")
    keys, cls = fields[kind]
    extra = set(d) - keys - {"type"}
    if extra:
        raise ValueError(f"unknown FoV field(s): {sorted(extra)}")
    missing = keys - set(d)
    if missing:
        raise ValueError(f"missing FoV field(s): {sorted(missing)}")
    return cls(**{k: d[k] for k in keys})


def contains(fov: FieldOfView, x_p) -> bool:
    x_p = np.asarray(x_p, dtype=float)
    if x_p.ndim != 1:
        raise ValueError("contains expects a single position vector")
    return bool(fov.contains_points(x_p[None])[0])


def contains_transformed(fov: FieldOfView, z, basis: EigenBasis, mean_p) -> bool:
    """Membership of whitened point ``z`` in the whitened image of ``fov``."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != basis.dim:
        raise ValueError("z dimension does not match the eigenbasis")
    return contains(fov, basis.unwhiten(z, mean_p))


@dataclass(frozen=True)
class CollocationGrid:
    """Uniform grid on [-zeta, zeta]^dim with ``points_per_dim`` points per axis."""

    zeta: float = 3.0
    points_per_dim: int = 7
    dim: int = 2

    def __post_init__(self):
        if not self.zeta > 0:
            raise ValueError("zeta must be positive")
        if self.points_per_dim < 2:
            raise ValueError("points_per_dim must be at least 2")
        if self.dim < 1:
            raise ValueError("grid dimension must be positive")

    def axis(self) -> np.ndarray:
        i = np.arange(1, self.points_per_dim + 1)
        return -self.zeta + 2.0 * self.zeta * ((i - 1) / (self.points_per_dim - 1))

    @cached_property
    def points(self) -> np.ndarray:
        """All N^dim grid points, shape ``(N**dim, dim)``, C order over indices."""
        ax = self.axis()
        return np.array(list(product(ax, repeat=self.dim)), dtype=float).reshape(-1, self.dim)

    def with_dim(self, dim: int) -> CollocationGrid:
        return self if dim == self.dim else CollocationGrid(self.zeta, self.points_per_dim, dim)


@dataclass(frozen=True)
class GridClassification:
    """Inclusion flags of the grid in the whitened FoV.

    ``flags`` has shape ``(N,) * dim``; ``plane_counts[j]`` is the number of
    constant-``z_j`` planes whose flags are all equal.
    """

    flags: np.ndarray
    all_same: bool
    plane_counts: np.ndarray
    eigenvalues: np.ndarray | None = None


def classify_flags(flags: np.ndarray, eigenvalues=None) -> GridClassification:
    flags = np.asarray(flags, dtype=bool)
    all_same = bool(np.all(flags == flags.flat[0]))
    counts = []
    for j in range(flags.ndim):
        planes = np.moveaxis(flags, j, 0).reshape(flags.shape[j], -1)
        counts.append(int(np.sum(np.all(planes == planes[:, :1], axis=1))))
    return GridClassification(flags, all_same, np.array(counts),
                              None if eigenvalues is None else np.asarray(eigenvalues))


def classify_grid(fov: FieldOfView, grid: CollocationGrid, basis: EigenBasis,
                  mean_p) -> GridClassification:
    """Test every grid point for inclusion in the component-whitened FoV."""
    if grid.dim != fov.dim or basis.dim != fov.dim:
        raise ValueError("grid, eigenbasis and FoV dimensions must agree")
    x = basis.unwhiten(grid.points, np.asarray(mean_p, dtype=float))
    flags = fov.contains_points(x).reshape((grid.points_per_dim,) * grid.dim)
    return classify_flags(flags, basis.eigenvalues)
