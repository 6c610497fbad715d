import math
import warnings

import numpy as np
import pytest

from dhlab.simulate import (ExplosionError, Path, SimulationConfig,
                            derive_seed, simulate, simulate_ensemble)
from conftest import make_model


def _quiet_simulate(cfg, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return simulate(cfg, **kw)


class TestSimulate:
    def test_deterministic_free_motion(self, free_model):
        cfg = SimulationConfig(model=free_model, T=1.0, dt=0.5, burn_in=0.0,
                               init=(1.0, 2.0), seed=0)
        path = _quiet_simulate(cfg)
        assert np.allclose(path.x, [1.0, 2.0, 3.0])
        assert np.allclose(path.y, [2.0, 2.0, 2.0])

    def test_retained_length_and_centered_velocity(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=200.0, dt=1e-3,
                               burn_in=50.0, seed=31415)
        path = simulate(cfg)
        assert path.n == 200001
        assert path.span == pytest.approx(200.0)
        # batch-means standard error for the time average of y
        batches = path.y[:-1].reshape(20, -1).mean(axis=1)
        se = batches.std(ddof=1) / math.sqrt(len(batches))
        assert abs(path.y.mean()) < 5 * se

    def test_same_seed_identical_paths(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=2.0, dt=1e-3, burn_in=1.0,
                               seed=7)
        p1, p2 = simulate(cfg), simulate(cfg)
        assert np.array_equal(p1.x, p2.x)
        assert np.array_equal(p1.y, p2.y)
        assert np.array_equal(p1.db, p2.db)

    def test_engines_agree(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=2.0, dt=1e-3, burn_in=0.5,
                               seed=7)
        p_jit = simulate(cfg, engine="numba")
        p_py = simulate(cfg, engine="python")
        assert np.array_equal(p_jit.x, p_py.x)
        assert np.array_equal(p_jit.y, p_py.y)

    def test_update_rule_reconstructs_velocity(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=1.0, dt=1e-2, burn_in=0.0,
                               init=(0.3, -0.2), seed=11)
        p = simulate(cfg, engine="python")
        y = p.y[0]
        x = p.x[0]
        for i in range(p.n - 1):
            dy = -(paper_sim.beta(x, y) * y
                   + paper_sim.potential.derivative(x))
            x_next = x + y * p.dt
            y = y + dy * p.dt + paper_sim.a(x, y) * p.db[i]
            x = x_next
            assert x == p.x[i + 1]
            assert y == p.y[i + 1]

    def test_increment_variance_matches_step(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=200.0, dt=1e-3,
                               burn_in=0.0, init=(0.0, 0.0), seed=5)
        p = simulate(cfg)
        n = len(p.db)
        sample_var = p.db.var(ddof=1)
        se = p.dt * math.sqrt(2.0 / (n - 1))
        assert abs(sample_var - p.dt) < 5 * se

    def test_explosion_guard(self):
        runaway = make_model(a=0.0, beta=-5.0)
        cfg = SimulationConfig(model=runaway, T=20.0, dt=1e-3, burn_in=0.0,
                               init=(0.0, 10.0), seed=0)
        with pytest.raises(ExplosionError) as err:
            _quiet_simulate(cfg)
        assert err.value.step > 0

    def test_hreg_violation_warns_but_runs(self, free_model):
        cfg = SimulationConfig(model=free_model, T=0.5, dt=0.1, burn_in=0.0,
                               seed=0)
        with pytest.warns(RuntimeWarning, match="coefficient check"):
            simulate(cfg)

    def test_stationary_draw_init(self, gaussian_eta_model):
        cfg = SimulationConfig(model=gaussian_eta_model, T=0.5, dt=1e-2,
                               burn_in=0.0, init=gaussian_eta_model.stationary,
                               seed=3)
        p1 = simulate(cfg)
        p2 = simulate(cfg)
        assert p1.x[0] == p2.x[0] and p1.y[0] == p2.y[0]
        assert p1.x[0] != 0.0

    def test_config_validation(self, paper_sim):
        with pytest.raises(ValueError):
            SimulationConfig(model=paper_sim, T=-1.0)
        with pytest.raises(ValueError):
            SimulationConfig(model=paper_sim, T=1.0, dt=2.0)
        with pytest.raises(ValueError):
            SimulationConfig(model=paper_sim, T=1.0, burn_in=-0.1)


class TestEnsemble:
    def test_count(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=0.05, dt=1e-3, burn_in=0.0,
                               seed=0)
        paths = simulate_ensemble(cfg, n_rep=500, seed_base=17)
        assert len(paths) == 500

    def test_singleton_matches_simulate(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=1.0, dt=1e-2, burn_in=0.2,
                               seed=999)
        single = simulate_ensemble(cfg, n_rep=1, seed_base=42)[0]
        direct = simulate(SimulationConfig(model=paper_sim, T=1.0, dt=1e-2,
                                           burn_in=0.2,
                                           seed=derive_seed(42, 0)))
        assert np.array_equal(single.x, direct.x)
        assert np.array_equal(single.db, direct.db)

    def test_rerun_reproduces_pair(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=0.5, dt=1e-2, burn_in=0.0,
                               seed=0)
        a = simulate_ensemble(cfg, n_rep=2, seed_base=5)
        b = simulate_ensemble(cfg, n_rep=2, seed_base=5)
        for p, q in zip(a, b):
            assert np.array_equal(p.x, q.x)

    def test_seed_derivation_is_xor(self):
        assert derive_seed(42, 0) == 42
        assert derive_seed(42, 3) == 42 ^ 3
        assert derive_seed(0, 7) == 7

    def test_explosion_carries_replication_index(self):
        runaway = make_model(a=1.0, beta=-4.0)
        cfg = SimulationConfig(model=runaway, T=20.0, dt=1e-2, burn_in=0.0,
                               seed=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(ExplosionError) as err:
                simulate_ensemble(cfg, n_rep=3, seed_base=1)
        assert err.value.replication == 0
        assert "replication 0" in str(err.value)

    def test_replications_differ(self, paper_sim):
        cfg = SimulationConfig(model=paper_sim, T=0.5, dt=1e-2, burn_in=0.0,
                               seed=0)
        a, b = simulate_ensemble(cfg, n_rep=2, seed_base=5)
        assert not np.array_equal(a.db, b.db)

    def test_weak_stationarity_of_moments(self, gaussian_eta_model):
        # stationary start: second moments at t=0 and t=T agree within noise
        model = gaussian_eta_model
        cfg = SimulationConfig(model=model, T=2.0, dt=1e-3, burn_in=0.0,
                               init=model.stationary, seed=0)
        paths = simulate_ensemble(cfg, n_rep=200, seed_base=123)
        x0 = np.array([p.x[0] for p in paths])
        xT = np.array([p.x[-1] for p in paths])
        y0 = np.array([p.y[0] for p in paths])
        yT = np.array([p.y[-1] for p in paths])
        for a, b in ((x0, xT), (y0, yT)):
            diff = (a ** 2 - b ** 2)
            se = diff.std(ddof=1) / math.sqrt(len(diff))
            assert abs(diff.mean()) < 5 * se


class TestBurnIn:
    def test_burn_in_invariance_of_point_estimates(self, paper_sim):
        from dhlab.kernels import Bandwidths, build_kernel, estimate_point
        kernel = build_kernel(1)
        bw = Bandwidths(h1=0.3, h2=0.3)
        means = []
        ses = []
        for burn in (50.0, 100.0):
            vals = []
            for i in range(60):
                cfg = SimulationConfig(model=paper_sim, T=10.0, dt=1e-3,
                                       burn_in=burn, seed=derive_seed(808, i))
                vals.append(estimate_point(simulate(cfg), 0.0, 1.0, bw,
                                           kernel).value)
            vals = np.array(vals)
            means.append(vals.mean())
            ses.append(vals.std(ddof=1) / math.sqrt(len(vals)))
        tol = 5 * math.hypot(*ses)
        assert abs(means[0] - means[1]) < tol


class TestPathIO:
    def test_csv_header_and_columns(self, paper_sim, tmp_path):
        cfg = SimulationConfig(model=paper_sim, T=0.01, dt=1e-3, burn_in=0.0,
                               seed=4)
        p = simulate(cfg)
        out = tmp_path / "path.csv"
        p.to_csv(str(out))
        lines = out.read_text().splitlines()
        assert lines[0].startswith("# dt=0.001 seed=4 model=paper-sim")
        assert lines[1] == "t,x,y,db"
        assert len(lines) == 2 + p.n

    def test_npz_round_trip(self, paper_sim, tmp_path):
        cfg = SimulationConfig(model=paper_sim, T=0.05, dt=1e-3, burn_in=0.0,
                               seed=4)
        p = simulate(cfg)
        out = tmp_path / "path.npz"
        p.to_npz(str(out))
        q = Path.from_npz(str(out))
        assert np.array_equal(p.x, q.x)
        assert np.array_equal(p.db, q.db)
        assert q.seed == 4 and q.model_name == "paper-sim"

    def test_invariant_lengths(self):
        with pytest.raises(ValueError):
            Path(t0=0.0, dt=0.1, x=np.zeros(3), y=np.zeros(3),
                 db=np.zeros(3), seed=0)
