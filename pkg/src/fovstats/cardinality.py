"""Distribution of the number of objects inside a bounded field of view.

Each family reduces to per-object inclusion masses ``q = <1_S, p>`` computed
by :func:`fovstats.models.fov_mass`; the ``*_from_*`` helpers take those
masses directly, and the model-level functions compute them first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy
from scipy.stats import poisson

from fovstats.fov import FieldOfView
from fovstats.models import (FovMassMethod, GlmbDistribution, IidcRfs, MultiBernoulli,
                             PoissonRfs, fov_mass, fov_masses, make_rng)

POISSON_TAIL = 1e-12
POISSON_COLLAPSE_ATOL = 1e-10
MB_EXACT_MAX = 14
MC_CHUNK = 1 << 16


class NumericalError(RuntimeError):
    """Two evaluation routes for the same quantity disagree."""


@dataclass(frozen=True)
class CardinalityPmf:
    probs: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("pmf must be a nonempty vector")
        if np.any(probs < 0):
            raise ValueError("pmf entries must be nonnegative")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, n: int) -> float:
        return float(self.probs[n]) if 0 <= n < self.probs.size else 0.0

    @property
    def n_max(self) -> int:
        return self.probs.size - 1

    @property
    def mean(self) -> float:
        return pmf_moments(self)[0]

    @property
    def variance(self) -> float:
        return pmf_moments(self)[1]


def pmf_moments(pmf: CardinalityPmf) -> tuple[float, float]:
    n = np.arange(pmf.probs.size)
    mean = float(n @ pmf.probs)
    var = float(((n - mean) ** 2) @ pmf.probs)
    return mean, var


def void_probability(pmf: CardinalityPmf) -> float:
    """Probability that the FoV holds no objects."""
    return float(pmf.probs[0])


# --- Poisson ----------------------------------------------------------------

def poisson_n_max(mu: float) -> int:
    return int(math.ceil(mu + 10.0 * math.sqrt(mu) + 20.0))


def poisson_truncated_sum(mu: float, n_total: float, n_max: int) -> tuple[np.ndarray, int]:
    """Double-sum form over total count m, truncated where the Poisson(n_total) tail < 1e-12.

    Returns the pmf on 0..n_max and the truncation point m_max.
    """
    nu = max(n_total - mu, 0.0)
    m_max = max(int(poisson.isf(POISSON_TAIL, n_total)) + 1, n_max) if n_total > 0 else n_max
    n = np.arange(n_max + 1)[:, None]
    k = np.arange(m_max + 1)[None, :]
    log_terms = -n_total + xlogy(n, mu) - gammaln(n + 1) + xlogy(k, nu) - gammaln(k + 1)
    valid = (n + k) <= m_max
    terms = np.where(valid, np.exp(log_terms), 0.0)
    return terms.sum(axis=1), m_max


def poisson_pmf_from_mass(mu: float, n_total: float) -> CardinalityPmf:
    """FoV count pmf of a Poisson process with ``mu`` expected objects inside."""
    if mu < 0 or n_total < mu - 1e-12:
        raise ValueError("need 0 <= mu <= total expected count")
    n_max = poisson_n_max(mu)
    collapsed = poisson.pmf(np.arange(n_max + 1), mu) if mu > 0 else np.eye(1, n_max + 1)[0]
    truncated, m_max = poisson_truncated_sum(mu, n_total, n_max)
    dev = float(np.max(np.abs(truncated - collapsed)))
    if dev > POISSON_COLLAPSE_ATOL:
        raise NumericalError(f"truncated double sum deviates from Poisson({mu}) by {dev:.3g}")
    return CardinalityPmf(collapsed, "poisson",
                          {"rate": mu, "m_max": m_max, "collapse_deviation": dev})


def poisson_fov_pmf(m: PoissonRfs, fov: FieldOfView, mass_method: FovMassMethod | None = None,
                    p_d: float = 1.0) -> CardinalityPmf:
    mu = p_d * fov_mass(m.intensity, fov, mass_method)
    return poisson_pmf_from_mass(mu, m.mean_cardinality)


# --- IIDC -------------------------------------------------------------------

def binomial_mixture(rho, q: float) -> np.ndarray:
    """sum_m rho(m) Binomial(n; m, q), evaluated in log space."""
    rho = np.asarray(rho, dtype=float)
    m = np.arange(rho.size)[None, :]
    n = np.arange(rho.size)[:, None]
    k = np.clip(m - n, 0, None)
    logc = gammaln(m + 1) - gammaln(n + 1) - gammaln(k + 1)
    with np.errstate(invalid="ignore"):
        logp = logc + xlogy(n, q) + xlog1py(k, -q)
    terms = np.where(n <= m, np.exp(logp), 0.0)
    return terms @ rho


def iidc_fov_pmf(m: IidcRfs, fov: FieldOfView, mass_method: FovMassMethod | None = None,
                 p_d: float = 1.0) -> CardinalityPmf:
    q = min(p_d * fov_mass(m.spatial, fov, mass_method), 1.0)
    return CardinalityPmf(binomial_mixture(m.cardinality, q), "iidc", {"q": q})


# --- multi-Bernoulli --------------------------------------------------------

def poisson_binomial(probs) -> np.ndarray:
    """Count distribution of independent Bernoulli trials (convolution recurrence)."""
    probs = np.asarray(probs, dtype=float)
    pmf = np.zeros(probs.size + 1)
    pmf[0] = 1.0
    for i, p in enumerate(probs):
        pmf[1:i + 2] = pmf[1:i + 2] * (1.0 - p) + pmf[0:i + 1] * p
        pmf[0] *= 1.0 - p
    return pmf


def mb_exact_from(r, q) -> np.ndarray:
    """Sum over every assignment of objects to inside / outside / non-existent.

    Exponential in the number of components (3**M terms); used as the
    reference for the recurrence in :func:`poisson_binomial`.
    """
    r = np.asarray(r, dtype=float)
    q = np.asarray(q, dtype=float)
    M = r.size
    if M > MB_EXACT_MAX:
        raise ValueError(f"exhaustive enumeration limited to M <= {MB_EXACT_MAX} "
                         f"(got {M}); use the 'dp' method")
    inside = r * q / (1.0 - r)
    outside = r * (1.0 - q) / (1.0 - r)
    factors = np.stack([inside, outside, np.ones(M)], axis=1)  # codes 0, 1, 2
    pmf = np.zeros(M + 1)
    total = 3**M
    powers = 3 ** np.arange(M)
    for start in range(0, total, MC_CHUNK):
        idx = np.arange(start, min(start + MC_CHUNK, total))
        codes = (idx[:, None] // powers) % 3
        terms = np.prod(factors[np.arange(M), codes], axis=1)
        np.add.at(pmf, np.count_nonzero(codes == 0, axis=1), terms)
    return np.prod(1.0 - r) * pmf


def mb_mc_from(r_s, n_samples: int, seed: int) -> np.ndarray:
    """Monte Carlo count pmf: each trial draws u ~ U[0,1) per object, counts r_s >= u."""
    r_s = np.asarray(r_s, dtype=float)
    if n_samples < 1:
        raise ValueError("need at least one Monte Carlo trial")
    rng = make_rng(seed)
    tally = np.zeros(r_s.size + 1, dtype=np.int64)
    for start in range(0, n_samples, MC_CHUNK):
        size = min(MC_CHUNK, n_samples - start)
        u = rng.random((size, r_s.size))
        counts = np.count_nonzero(r_s >= u, axis=1)
        tally += np.bincount(counts, minlength=r_s.size + 1)
    return tally / n_samples


def mb_inside_probs(m: MultiBernoulli, fov: FieldOfView, mass_method=None,
                    p_d: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Existence probabilities and (detection-scaled) inclusion masses per component."""
    r = m.existence
    q = p_d * fov_masses([c.density for c in m.components], fov, mass_method)
    return r, np.clip(q, 0.0, 1.0)


def mb_fov_pmf_exact(m: MultiBernoulli, fov, mass_method=None, p_d: float = 1.0) -> CardinalityPmf:
    r, q = mb_inside_probs(m, fov, mass_method, p_d)
    return CardinalityPmf(mb_exact_from(r, q), "mb-exact")


def mb_fov_pmf_dp(m: MultiBernoulli, fov, mass_method=None, p_d: float = 1.0) -> CardinalityPmf:
    r, q = mb_inside_probs(m, fov, mass_method, p_d)
    return CardinalityPmf(poisson_binomial(r * q), "mb-dp")


def mb_fov_pmf_mc(m: MultiBernoulli, fov, mass_method=None, n_samples: int = 10**5,
                  seed: int = 0, p_d: float = 1.0) -> CardinalityPmf:
    r, q = mb_inside_probs(m, fov, mass_method, p_d)
    return CardinalityPmf(mb_mc_from(r * q, n_samples, seed), "mb-mc",
                          {"samples": n_samples, "seed": seed})


# --- GLMB -------------------------------------------------------------------

def glmb_from(weights, inside_masses) -> np.ndarray:
    """Mix per-hypothesis Poisson-binomial pmfs by hypothesis weight."""
    n_max = max((len(q) for q in inside_masses), default=0)
    pmf = np.zeros(n_max + 1)
    for w, q in zip(weights, inside_masses):
        part = poisson_binomial(q)
        pmf[:part.size] += w * part
    return pmf


def glmb_fov_pmf(m: GlmbDistribution, fov: FieldOfView, mass_method=None,
                 p_d: float = 1.0) -> CardinalityPmf:
    masses = []
    stream = 0
    for comp in m.components:
        qs = []
        for lab in comp.labels:
            qs.append(min(p_d * fov_mass(comp.densities[lab], fov, mass_method, stream=stream), 1.0))
            stream += 1
        masses.append(np.array(qs))
    return CardinalityPmf(glmb_from([c.weight for c in m.components], masses), "glmb")


# --- dispatch ---------------------------------------------------------------

def fov_pmf(model, fov: FieldOfView, mass_method=None, method: str = "dp",
            n_samples: int = 10**5, seed: int = 0, p_d: float = 1.0) -> CardinalityPmf:
    """FoV count pmf for any supported model; ``method`` selects the MB algorithm."""
    if not 0 <= p_d <= 1:
        raise ValueError("p_d must lie in [0, 1]")
    if isinstance(model, PoissonRfs):
        return poisson_fov_pmf(model, fov, mass_method, p_d)
    if isinstance(model, IidcRfs):
        return iidc_fov_pmf(model, fov, mass_method, p_d)
    if isinstance(model, GlmbDistribution):
        return glmb_fov_pmf(model, fov, mass_method, p_d)
    if isinstance(model, MultiBernoulli):
        if method == "dp":
            return mb_fov_pmf_dp(model, fov, mass_method, p_d)
        if method == "exact":
            return mb_fov_pmf_exact(model, fov, mass_method, p_d)
        if method == "mc":
            return mb_fov_pmf_mc(model, fov, mass_method, n_samples, seed, p_d)
        raise ValueError(f"unknown multi-Bernoulli method {method!r}")
    raise TypeError(f"unsupported model type {type(model).__name__}")


def detection_count_pmf(model, fov: FieldOfView, p_d: float, mass_method=None,
                        method: str = "dp", **kwargs) -> CardinalityPmf:
    """Pmf of object-originated detections for constant in-FoV detection probability."""
    return fov_pmf(model, fov, mass_method, method, p_d=p_d, **kwargs)
