import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from faripa.errors import ConfigurationError, PreconditionError
from faripa.harness import (ExperimentConfig, boxplot_stats, generate_sources, random_orthogonal,
                            run_experiment, sweep)

from oracles import naive_boxplot


def small(**kw):
    base = dict(dataset="smiley", dims=[2, 2], T=600, runs=2, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


class TestRandomOrthogonal:
    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 10), st.integers(0, 2 ** 32 - 1))
    def test_orthogonal(self, D, seed):
        A = random_orthogonal(D, np.random.default_rng(seed)).A
        np.testing.assert_allclose(A.T @ A, np.eye(D), atol=1e-10)
        assert abs(abs(np.linalg.det(A)) - 1) < 1e-8

    def test_haar_angles_uniform(self):
        angles = []
        for seed in range(10_000):
            A = random_orthogonal(2, np.random.default_rng(seed)).A
            angles.append(np.arctan2(A[1, 0], A[0, 0]) % (2 * np.pi))
        assert stats.kstest(angles, "uniform", args=(0, 2 * np.pi)).pvalue > 0.01


class TestBoxplot:
    def test_one_to_nine(self):
        b = boxplot_stats(range(1, 10))
        assert (b.q1, b.q2, b.q3) == (3, 5, 7)
        assert b.outliers == [] and (b.whisker_low, b.whisker_high) == (1, 9)

    def test_constant(self):
        b = boxplot_stats([2.5] * 7)
        assert b.q1 == b.q2 == b.q3 == b.whisker_low == b.whisker_high == 2.5
        assert b.outliers == []

    def test_outlier(self):
        b = boxplot_stats([1, 2, 3, 100])
        assert b.outliers == [100] and b.whisker_high == 3

    def test_empty(self):
        with pytest.raises(PreconditionError):
            boxplot_stats([])

    def test_against_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(60):
            v = rng.standard_cauchy(int(rng.integers(1, 40))).tolist()
            b = boxplot_stats(v)
            q1, q2, q3, lo, hi, out = naive_boxplot(v)
            np.testing.assert_allclose([b.q1, b.q2, b.q3, b.whisker_low, b.whisker_high],
                                       [q1, q2, q3, lo, hi], rtol=0, atol=1e-12)
            assert b.outliers == out

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=50))
    def test_invariants(self, v):
        b = boxplot_stats(v)
        assert b.q1 <= b.q2 <= b.q3
        fence_lo, fence_hi = b.q1 - 1.5 * (b.q3 - b.q1), b.q3 + 1.5 * (b.q3 - b.q1)
        assert fence_lo <= b.whisker_low <= b.whisker_high <= fence_hi
        assert all(x < fence_lo or x > fence_hi for x in b.outliers)
        assert len(b.outliers) + sum(fence_lo <= x <= fence_hi for x in v) == len(v)


class TestConfig:
    def test_defaults(self):
        assert ExperimentConfig(dataset="ikeda").dims == [2, 2]
        assert ExperimentConfig(dataset="ikeda").cluster_method() == "ncut"
        assert ExperimentConfig(dataset="smiley").cluster_method() == "greedy"
        assert ExperimentConfig(dataset="d-geom", dims=[3, 2]).dims == [2, 3]

    def test_kernel_exponent(self):
        k = ExperimentConfig(dataset="smiley", dims=[2, 2], p=2, beta_c=0.5).kernel()
        assert k.beta == pytest.approx(0.5 / 8) and k.d_reg == 8

    @pytest.mark.parametrize("bad", [dict(dataset="mnist"), dict(dataset="smiley", beta_c=1.0),
                                     dict(dataset="smiley", runs=0), dict(dataset="smiley", dims=[3]),
                                     dict(dataset="ikeda", dims=[1, 3]),
                                     dict(dataset="smiley", estimator="pca")])
    def test_invalid(self, bad):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**bad)

    def test_json_roundtrip(self, tmp_path):
        cfg = small(beta_c=0.125)
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert ExperimentConfig.from_json(path) == cfg
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict({"dataset": "smiley", "colour": "red"})


class TestSources:
    def test_zero_dynamics_sources_are_drivers(self):
        cfg = small(dynamics="zero", T=400)
        s, dyn = generate_sources(cfg, np.random.default_rng(0))
        assert s.shape == (400, 4) and dyn.F is None
        # centered face densities
        assert np.all(np.abs(s.mean(axis=0)) < 0.05)

    def test_ikeda_rows(self):
        s, dyn = generate_sources(ExperimentConfig(dataset="ikeda", T=5), np.random.default_rng(0))
        assert dyn is None
        np.testing.assert_array_equal(s[0], [20.0, 20.0, -100.0, 30.0])


class TestRuns:
    def test_identity_wiring(self):
        rep = run_experiment(small(runs=1, dynamics="zero", debug_identity=True))
        assert rep.records[0]["amari"] < 1e-6 and rep.records[0]["block_permutation"]

    def test_deterministic(self):
        a = run_experiment(small())
        b = run_experiment(small())
        assert a.fingerprint() == b.fingerprint()
        assert len(a.records) == 2 and a.n_failed == 0

    def test_worker_parity(self):
        assert run_experiment(small(), workers=2).fingerprint() == \
            run_experiment(small(), workers=1).fingerprint()

    def test_failed_runs_recorded(self):
        # a VAR(1) in 4 dims needs more than 5 samples
        rep = run_experiment(small(estimator="ar-ipa", T=5, runs=3))
        assert rep.n_failed == 3 and rep.stats is None and np.isnan(rep.median)
        assert all(r["status"] == "failed" and "PreconditionError" in r["error"] for r in rep.records)

    def test_records_and_outputs(self, tmp_path):
        rep = run_experiment(small(dataset="d-geom", dims=[1, 2], clustering="ncut", runs=1))
        rec = rep.records[0]
        assert rec["status"] == "ok" and 0 <= rec["amari"] <= 1
        assert len(rec["G"]) == 3 and len(rec["A"]) == 3 and "F" in rec
        rep.write_json(tmp_path / "r.json")
        rep.write_summary_csv(tmp_path / "s.csv")
        assert json.loads((tmp_path / "r.json").read_text())["records"][0]["seed"] == 3
        assert (tmp_path / "s.csv").read_text().count("\n") == 2

    def test_sweep_grid(self):
        cells = sweep(small(runs=1, T=300), T_values=[300, 400], beta_c_values=[0.25, 0.5])
        assert [(T, bc) for T, bc, _ in cells] == [(300, 0.25), (300, 0.5), (400, 0.25), (400, 0.5)]
