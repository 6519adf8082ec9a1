import numpy as np
import pytest

from ispca.errors import UsageError
from ispca.simulation import (PROFILES, SimConfig, block_rng, greedy_match, population_truth,
                              run_replicate, run_simulation, sample_block_gaussian)

from oracles import compound_symmetric, jacobi_eigh


class TestPopulationTruth:
    @pytest.mark.parametrize("p_i, omega", [(1, 0.2), (2, 0.1), (5, 0.3), (12, 0.45), (7, 0.0)])
    def test_matches_jacobi(self, p_i, omega):
        ev, v = population_truth(p_i, omega)
        ref, vecs = jacobi_eigh(compound_symmetric(p_i, omega))
        order = np.argsort(ref)[::-1]
        assert np.allclose(ev, np.asarray(ref)[order], atol=1e-12)
        if omega > 0:
            lead = np.asarray(vecs)[:, order[0]]
            assert abs(lead @ v) == pytest.approx(1.0, abs=1e-12)

    def test_hand_values(self):
        ev, v = population_truth(4, 0.25)
        assert ev.tolist() == [2.75, 0.75, 0.75, 0.75]
        assert np.allclose(v, 0.5)

    def test_rejects_empty_block(self):
        with pytest.raises(UsageError):
            population_truth(0, 0.1)


class TestSampling:
    def test_empirical_covariance(self):
        cfg = SimConfig(n=20000, p=10, b=2, omega_range=(0.3, 0.3), replicates=1,
                        approaches=("OracleIsPca",))
        X, truths = sample_block_gaussian(cfg, 0)
        S = X.values.T @ X.values / X.n
        target = np.zeros((10, 10))
        target[:5, :5] = compound_symmetric(5, 0.3)
        target[5:, 5:] = compound_symmetric(5, 0.3)
        assert np.abs(S - target).max() < 0.05
        assert [t.omega for t in truths] == [0.3, 0.3]

    def test_streams_are_keyed(self):
        a = block_rng(1, 2, 3).standard_normal(4)
        assert np.array_equal(a, block_rng(1, 2, 3).standard_normal(4))
        assert not np.array_equal(a, block_rng(1, 2, 4).standard_normal(4))
        assert not np.array_equal(a, block_rng(1, 3, 3).standard_normal(4))

    def test_block_data_independent_of_other_blocks(self):
        small = SimConfig(n=10, p=6, b=2, replicates=1, approaches=("CDM",))
        big = SimConfig(n=10, p=9, b=3, replicates=1, approaches=("CDM",))
        Xs, _ = sample_block_gaussian(small, 0)
        Xb, _ = sample_block_gaussian(big, 0)
        assert np.array_equal(Xs.values[:, :3], Xb.values[:, :3])

    def test_fixed_omegas(self):
        cfg = SimConfig(n=8, p=6, b=3, replicates=1, approaches=("CDM",))
        _, truths = sample_block_gaussian(cfg, 0, omegas=[0.1, 0.2, 0.4])
        assert [t.omega for t in truths] == [0.1, 0.2, 0.4]


def test_greedy_match():
    V = np.array([[0.1, 1.0], [1.0, 0.0], [0.0, 0.2]])
    T = np.eye(3)
    assert sorted(greedy_match(V, T)) == [(0, 1), (1, 0)]


class TestRun:
    def test_deterministic_and_thread_independent(self):
        cfg = SimConfig(n=20, p=40, b=4, replicates=4, seed=7)
        a = run_simulation(cfg, threads=1)
        b = run_simulation(cfg, threads=1)
        c = run_simulation(cfg, threads=4)
        assert a.rows == b.rows == c.rows
        assert a.summary() == c.summary()

    def test_row_schema(self):
        cfg = SimConfig(n=20, p=40, b=4, replicates=1)
        rows, failures = run_replicate(cfg, 0)
        assert failures == []
        for approach in cfg.approaches:
            sel = [r for r in rows if r["approach"] == approach]
            if approach != "PmdIsPca":  # its count depends on the detected blocks
                assert len(sel) == (1 if approach == "Pmd" else 4)
            for r in sel:
                assert 0 <= r["cosine"] <= 1
                assert r["ratio"] > 0

    def test_oracle_cosine_improves_with_n(self):
        means = []
        for n in (25, 50, 100):
            cfg = SimConfig(n=n, p=120, b=4, replicates=20, approaches=("OracleIsPca",))
            means.append(run_simulation(cfg).mean("OracleIsPca", "cosine"))
        assert means[0] < means[1] < means[2]

    def test_consistency_at_large_n(self):
        cfg = SimConfig(n=4000, p=20, b=2, replicates=2, approaches=("OracleIsPca",))
        res = run_simulation(cfg)
        assert res.mean("OracleIsPca", "cosine") > 0.995
        assert res.mean("OracleIsPca", "ratio") == pytest.approx(1.0, abs=0.1)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        dict(p=50, b=3),
        dict(omega_range=(0.3, 0.1)),
        dict(omega_range=(0.1, 0.5)),
        dict(replicates=0),
        dict(n=3),
        dict(approaches=("Nope",)),
        dict(p=30, b=3),  # odd b with the false-negative arm
        dict(seed=-1),
    ])
    def test_invalid(self, kw):
        with pytest.raises(UsageError):
            SimConfig(**kw)

    def test_profiles(self):
        cfg = SimConfig.from_profile("desk")
        assert (cfg.n, cfg.p, cfg.b, cfg.replicates) == (50, 500, 10, 20)
        assert SimConfig.from_profile("paper").p == PROFILES["paper"]["p"]
        assert SimConfig.from_profile("desk", replicates=3).replicates == 3
        with pytest.raises(UsageError):
            SimConfig.from_profile("huge")

    def test_to_dict_round_trip(self):
        cfg = SimConfig(n=10, p=20, b=2, replicates=1)
        again = SimConfig(**cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()
