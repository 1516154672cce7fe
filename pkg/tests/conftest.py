import itertools

import numpy as np
import pytest
from hypothesis import settings

from fovstats.gmix import GaussianMixture
from fovstats.models import Bernoulli, MultiBernoulli, R_MAX
from fovstats.splitlib import default_library

settings.register_profile("fovstats", deadline=None, max_examples=60)
settings.load_profile("fovstats")


@pytest.fixture(scope="session")
def lib():
    return default_library()


def random_spd(rng, n, lo=0.1, hi=2.0):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    cov = (q * rng.uniform(lo, hi, n)) @ q.T
    return 0.5 * (cov + cov.T)


def random_mixture(rng, n_components, state_dim, position_dim=None, spread=2.0,
                   normalized=True):
    w = rng.uniform(0.1, 1.0, n_components)
    if normalized:
        w = w / w.sum()
    means = rng.uniform(-spread, spread, (n_components, state_dim))
    covs = np.stack([random_spd(rng, state_dim, 0.05, 1.0) for _ in range(n_components)])
    return GaussianMixture(w, means, covs, position_dim or state_dim)


def glmb_subset_oracle(weights, inside_masses):
    """Count pmf by listing every subset of tracks inside the FoV for each hypothesis."""
    n_max = max((len(q) for q in inside_masses), default=0)
    pmf = np.zeros(n_max + 1)
    for w, q in zip(weights, inside_masses):
        labels = range(len(q))
        for n in range(len(q) + 1):
            for inside in itertools.combinations(labels, n):
                term = 1.0
                for i in labels:
                    term *= q[i] if i in inside else 1.0 - q[i]
                pmf[n] += w * term
    return pmf


def two_cluster_mb(offset=(0.0, 0.0)):
    """3 x 3 tight clusters; the first certainly present, the second with existence 0.5."""
    comps = []
    off = np.asarray(offset, dtype=float)
    for center, r in (((-2.0, -2.0), R_MAX), ((2.0, 1.0), 0.5)):
        for dx, dy in itertools.product((-0.25, 0.0, 0.25), repeat=2):
            mean = np.array([center[0] + dx, center[1] + dy]) + off
            comps.append(Bernoulli(r, GaussianMixture.single(mean, np.diag([0.0025, 0.0025]))))
    return MultiBernoulli(tuple(comps))
