import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from fovstats import splitlib
from fovstats.splitlib import (DEFAULT_LAMBDAS, DEFAULT_R, LibraryError, OptimizerSettings,
                               SplitLibrary, SplitParameters, build_library, dumps_library,
                               evaluate_cost, generate_split, load_library, save_library)


def quadrature_l2(p: SplitParameters) -> float:
    def sq(x):
        split = sum(w * norm.pdf(x, m, p.sigma) for w, m in zip(p.weights, p.means))
        return (norm.pdf(x) - split) ** 2
    return quad(sq, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)[0]


class TestShippedLibrary:
    def test_grid(self, lib):
        assert sorted(lib.entries) == sorted((R, lam) for R in DEFAULT_R for lam in DEFAULT_LAMBDAS)

    def test_entry_invariants(self, lib):
        for p in lib.entries.values():
            assert abs(math.fsum(p.weights) - 1.0) <= 1e-12
            assert p.means == tuple(-m for m in reversed(p.means))
            assert p.weights == tuple(reversed(p.weights))
            assert 0 < p.sigma < 1
            assert p.achieved_cost <= p.lam
            assert p.converged

    def test_mean_preserved_and_variance_band(self, lib):
        for p in lib.entries.values():
            assert math.fsum(w * m for w, m in zip(p.weights, p.means)) == pytest.approx(0, abs=1e-15)
            assert p.sigma**2 < p.variance <= 1.05

    def test_cost_matches_quadrature(self, lib):
        for p in lib.entries.values():
            assert p.l2 == pytest.approx(quadrature_l2(p), abs=1e-8)
            assert evaluate_cost(p, p.lam) == pytest.approx(p.achieved_cost, rel=1e-12)

    def test_cost_nonincreasing_in_R(self, lib):
        for lam in DEFAULT_LAMBDAS:
            costs = [lib.get(R, lam).achieved_cost for R in DEFAULT_R]
            assert all(b <= a + 1e-15 for a, b in zip(costs, costs[1:]))

    def test_sigma_shrinks_as_lambda_grows(self, lib):
        for R in DEFAULT_R:
            sig = [lib.get(R, lam).sigma for lam in sorted(DEFAULT_LAMBDAS)]
            assert all(a >= b for a, b in zip(sig, sig[1:]))

    def test_operating_point_beats_unsplit(self, lib):
        p = lib.get(3, 1e-3)
        # the unsplit standard normal has L2 = 0 and sigma = 1, so J = lambda
        assert p.achieved_cost <= 1e-3
        assert p.weights[0] == p.weights[2]


class TestGenerate:
    def test_R2_is_symmetric_pair(self):
        p = generate_split(2, 1e-2)
        assert p.weights == (0.5, 0.5)
        assert p.means[0] == -p.means[1] < 0

    def test_deterministic(self):
        opts = OptimizerSettings(starts=3, seed=5)
        a = generate_split(3, 1e-3, opts)
        splitlib._generate.cache_clear()
        b = generate_split(3, 1e-3, opts)
        assert a == b

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_split(1, 1e-3)
        with pytest.raises(ValueError):
            generate_split(10, 1e-3)
        with pytest.raises(ValueError):
            generate_split(3, 0.0)

    def test_sigma_sweep_monotone(self):
        sig = [generate_split(3, lam).sigma for lam in (1e-4, 1e-3, 1e-2, 1e-1)]
        assert all(a >= b for a, b in zip(sig, sig[1:]))

    def test_large_lambda_drives_sigma_down(self):
        assert generate_split(3, 1.0).sigma < generate_split(3, 1e-3).sigma


class TestCost:
    def test_lambda_zero_is_l2(self, lib):
        p = lib.get(4, 1e-3)
        assert evaluate_cost(p, 0.0) == p.l2

    def test_near_baseline_cost(self):
        # sigma -> 1 with all mass at 0 recovers the unsplit density
        p = SplitParameters(2, 1e-3, [0.5, 0.5], [-1e-9, 1e-9], 1.0 - 1e-12, 0.0)
        assert evaluate_cost(p, 1e-3) == pytest.approx(1e-3, abs=1e-12)

    @given(st.floats(0.05, 0.95), st.floats(0.05, 2.0), st.floats(0.05, 0.45))
    def test_l2_matches_quadrature(self, sigma, m, w):
        p = SplitParameters(3, 1e-3, [w, 1.0 - (w + w), w],
                            [-m, 0.0, m], sigma, 0.0)
        assert p.l2 == pytest.approx(quadrature_l2(p), abs=1e-8)


class TestValidation:
    def test_weight_sum(self):
        with pytest.raises(LibraryError):
            SplitParameters(2, 1e-3, [0.45, 0.45], [-1.0, 1.0], 0.5, 0.0)

    def test_asymmetric(self):
        with pytest.raises(LibraryError):
            SplitParameters(2, 1e-3, [0.5, 0.5], [-1.0, 1.1], 0.5, 0.0)

    def test_sigma_range(self):
        with pytest.raises(LibraryError):
            SplitParameters(2, 1e-3, [0.5, 0.5], [-1.0, 1.0], 1.0, 0.0)

    def test_bad_file(self, tmp_path, lib):
        d = lib.to_dict()
        d["entries"][0]["weights"] = [0.45, 0.45]
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(d))
        with pytest.raises(LibraryError):
            load_library(path)

    def test_unparseable_file(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{not json")
        with pytest.raises(LibraryError):
            load_library(path)

    def test_wrong_version(self, lib):
        d = lib.to_dict()
        d["version"] = 99
        with pytest.raises(LibraryError):
            SplitLibrary.from_dict(d)


class TestLibraryIO:
    def test_round_trip_exact(self, tmp_path, lib):
        path = tmp_path / "lib.json"
        save_library(lib, path)
        again = load_library(path)
        assert again.entries == lib.entries
        assert dumps_library(again) == dumps_library(lib)

    def test_nearest_lambda_fallback(self, lib):
        with pytest.warns(UserWarning, match="lambda=0.001"):
            p = lib.get(3, 2e-3)
        assert p is lib.get(3, 1e-3)

    def test_exact_key_no_warning(self, lib):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            lib.get(3, 1e-3)

    def test_missing_R(self, lib):
        with pytest.raises(KeyError):
            lib.get(7, 1e-3)

    def test_small_build(self):
        small = build_library((2, 3), (1e-2,))
        assert len(small) == 2
        assert small.provenance["optimizer"]["method"] == "BFGS"
