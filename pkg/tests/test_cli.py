import json
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

from fovstats import splitlib
from fovstats.cli import EXIT_CONTRADICTION, EXIT_INVALID, EXIT_OK, main, read_csv, write_csv

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"
MB_TWO = SCENARIOS / "mb_two_objects.json"
DEMO = SCENARIOS / "negative_info_demo.json"
TWO_CLUSTERS = SCENARIOS / "plan_two_clusters.json"


def interval_mass(mean, std, lo, hi):
    return norm.cdf(hi, mean, std) - norm.cdf(lo, mean, std)


def mb_two_oracle():
    # per-axis normal cdfs for the two diagonal objects in mb_two_objects.json
    q1 = interval_mass(0.0, 0.5, -0.5, 1.0) ** 2
    q2 = interval_mass(1.0, 0.3, -0.5, 1.0) * interval_mass(0.5, 0.4, -0.5, 1.0)
    s1, s2 = 0.6 * q1, 0.9 * q2
    return np.array([(1 - s1) * (1 - s2), s1 * (1 - s2) + s2 * (1 - s1), s1 * s2])


def edited(tmp_path, source, name="edited.json", **changes):
    d = json.loads(Path(source).read_text())
    for key, value in changes.items():
        target = d
        *parents, leaf = key.split("__")
        for p in parents:
            target = target[p]
        target[leaf] = value
    path = tmp_path / name
    path.write_text(json.dumps(d))
    return path


def stdout_rows(capsys):
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "n,probability"
    return np.array([[float(v) for v in line.split(",")] for line in lines[1:]])


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        cols = [rng.standard_normal(50) * 10.0 ** rng.integers(-300, 300, 50), rng.random(50)]
        write_csv(tmp_path / "x.csv", ["a", "b"], cols)
        back = read_csv(tmp_path / "x.csv")
        np.testing.assert_array_equal(back, np.column_stack(cols))


class TestGenLibrary:
    def test_regeneration_byte_identical(self, tmp_path):
        args = ["gen-library", "--R", "2", "3", "--lambdas", "1e-2"]
        assert main(args + ["--out", str(tmp_path / "a.json")]) == EXIT_OK
        splitlib._generate.cache_clear()
        assert main(args + ["--out", str(tmp_path / "b.json")]) == EXIT_OK
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert len(json.loads((tmp_path / "a.json").read_text())["entries"]) == 2

    def test_invalid_R(self, tmp_path):
        assert main(["gen-library", "--R", "1", "--out", str(tmp_path / "x.json")]) == EXIT_INVALID

    def test_requires_out(self):
        assert main(["gen-library", "--R", "2"]) == EXIT_INVALID


class TestCardinality:
    def test_hand_pmf(self, capsys):
        assert main(["cardinality", "--scenario", str(MB_TWO)]) == EXIT_OK
        rows = stdout_rows(capsys)
        np.testing.assert_array_equal(rows[:, 0], [0, 1, 2])
        np.testing.assert_allclose(rows[:, 1], mb_two_oracle(), atol=1e-14)

    def test_methods_and_files(self, tmp_path, capsys):
        for method in ("dp", "exact"):
            out = tmp_path / method
            assert main(["cardinality", "--scenario", str(MB_TWO), "--method", method,
                         "--out", str(out)]) == EXIT_OK
            pmf = read_csv(out / "pmf.csv")[:, 1]
            np.testing.assert_allclose(pmf, mb_two_oracle(), atol=1e-14)
            meta = json.loads((out / "pmf.json").read_text())
            assert meta["void_probability"] == pmf[0]
        capsys.readouterr()

    def test_mc_reproducible(self, capsys):
        args = ["cardinality", "--scenario", str(MB_TWO), "--method", "mc", "--samples", "20000"]
        assert main(args) == EXIT_OK
        first = capsys.readouterr().out
        assert main(args) == EXIT_OK
        assert capsys.readouterr().out == first
        assert main(args + ["--seed", "5"]) == EXIT_OK
        assert capsys.readouterr().out != first

    def test_method_on_poisson_is_usage_error(self, tmp_path, capsys):
        unit = {"weights": [1.0], "means": [[0.0, 0.0]], "covs": [[[1.0, 0.0], [0.0, 1.0]]],
                "position_dim": 2}
        path = edited(tmp_path, MB_TWO, model={"type": "poisson", "intensity": unit})
        assert main(["cardinality", "--scenario", str(path)]) == EXIT_OK
        assert main(["cardinality", "--scenario", str(path), "--method", "mc"]) == EXIT_INVALID
        assert "multi-Bernoulli" in capsys.readouterr().err

    def test_unknown_key(self, tmp_path, capsys):
        path = edited(tmp_path, MB_TWO, fov__radius=1.0)
        assert main(["cardinality", "--scenario", str(path)]) == EXIT_INVALID
        assert "radius" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["cardinality", "--scenario", str(tmp_path / "none.json")]) == EXIT_INVALID


class TestPartitionDemo:
    def test_outputs(self, tmp_path, capsys):
        assert main(["partition-demo", "--scenario", str(DEMO), "--out", str(tmp_path)]) == EXIT_OK
        steps = read_csv(tmp_path / "steps.csv")
        assert steps.shape[0] == 3
        assert np.all(steps[:, 6] <= 1e-9)
        assert np.all(steps[:, 5] < steps[:, 4])
        step1 = json.loads((tmp_path / "step1.json").read_text())
        assert set(step1) == {"step", "prior", "posterior", "propagate_only"}
        dens = read_csv(tmp_path / "density_step2.csv")
        assert dens.shape == (121 * 81, 5)
        capsys.readouterr()

    def test_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert main(["partition-demo", "--scenario", str(DEMO), "--out",
                         str(tmp_path / name)]) == EXIT_OK
        for f in ("steps.csv", "step3.json", "density_step3.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        capsys.readouterr()

    def test_disjoint_fov_matches_propagation(self, tmp_path, capsys):
        path = edited(tmp_path, DEMO, fov={"type": "box", "lo": [50.0, 50.0], "hi": [51.0, 51.0]})
        assert main(["partition-demo", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 0
        for k in (1, 2, 3):
            d = read_csv(tmp_path / "o" / f"density_step{k}.csv")
            np.testing.assert_allclose(d[:, 3], d[:, 4], rtol=1e-14, atol=0)
        capsys.readouterr()

    def test_covering_fov_is_contradiction(self, tmp_path, capsys):
        path = edited(tmp_path, DEMO, fov={"type": "box", "lo": [-99.0, -99.0], "hi": [99.0, 99.0]})
        assert main(["partition-demo", "--scenario", str(path), "--out",
                     str(tmp_path / "o")]) == EXIT_CONTRADICTION
        capsys.readouterr()

    def test_needs_demo_block(self, tmp_path):
        assert main(["partition-demo", "--scenario", str(MB_TWO), "--out", str(tmp_path)]) == 2


class TestPlan:
    def test_two_clusters(self, tmp_path, capsys):
        assert main(["plan", "--scenario", str(TWO_CLUSTERS), "--out", str(tmp_path)]) == EXIT_OK
        best = json.loads((tmp_path / "best.json").read_text())
        assert best["best_center"] == [2.0, 1.0]
        vmap = read_csv(tmp_path / "variance_map.csv")
        assert vmap.shape == (33 * 33, 3)
        assert vmap[:, 2].max() == best["best_variance"]
        phd_grid = read_csv(tmp_path / "phd_grid.csv")
        assert phd_grid.shape == (101 * 101, 3)
        assert np.all(phd_grid[:, 2] >= 0)
        capsys.readouterr()

    def test_resolution_two(self, tmp_path, capsys):
        path = edited(tmp_path, TWO_CLUSTERS, plan__grid_resolution=2)
        assert main(["plan", "--scenario", str(path), "--out", str(tmp_path / "o")]) == EXIT_OK
        vmap = read_csv(tmp_path / "o" / "variance_map.csv")
        assert vmap.shape == (4, 3)
        best = json.loads((tmp_path / "o" / "best.json").read_text())
        assert best["best_variance"] == vmap[:, 2].max()
        capsys.readouterr()

    def test_bad_resolution(self, tmp_path):
        path = edited(tmp_path, TWO_CLUSTERS, plan__grid_resolution=1)
        assert main(["plan", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2

    def test_negative_seed_rejected(self):
        with pytest.raises(SystemExit) as exc:
            main(["plan", "--scenario", str(TWO_CLUSTERS), "--seed", "-1"])
        assert exc.value.code == 2

    def test_method_on_glmb_is_usage_error(self, tmp_path, capsys):
        unit = {"weights": [1.0], "means": [[0.0, 0.0]], "covs": [[[1.0, 0.0], [0.0, 1.0]]],
                "position_dim": 2}
        glmb = {"type": "glmb", "components": [{"weight": 1.0, "tracks": [{"label": "a",
                                                                            "density": unit}]}]}
        path = edited(tmp_path, TWO_CLUSTERS, model=glmb)
        out = str(tmp_path / "o")
        assert main(["plan", "--scenario", str(path), "--out", out, "--method", "mc"]) == 2
        assert "multi-Bernoulli" in capsys.readouterr().err
