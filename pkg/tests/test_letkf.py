import dataclasses

import numpy as np
import pytest

from meshda.letkf import (
    AnalysisConfig,
    AnalysisStats,
    EnsembleState,
    etkf_weights,
    forecast_stats,
    local_analysis,
    localization_radii,
)
from meshda.mesh1d import Mesh1D
from meshda.metric import scalar_field
from meshda.observations import ObservationSet, uniform_interior_locations


def make_obs(locs, values, r_var, kind="pointwise", **kw):
    obs = ObservationSet(
        kind=kind, base_locations=(np.asarray(locs, float),), r_var=r_var, **kw
    )
    return dataclasses.replace(obs, values=np.asarray(values, float))


class TestForecastStats:
    def test_identical_members_zero_perturbations(self):
        mesh = Mesh1D.uniform(0, 1, 4)
        members = np.tile(np.arange(5.0), (3, 1, 1))
        mean, X = forecast_stats(EnsembleState(mesh, members))
        assert np.allclose(mean, np.arange(5.0))
        assert np.abs(X).max() == 0.0

    def test_two_member_hand_case(self):
        # members {0, 2}: mean 1, X X^T = sample variance 2
        mesh = Mesh1D.uniform(0, 1, 1)
        members = np.array([[[0.0, 0.0]], [[2.0, 2.0]]])
        mean, X = forecast_stats(EnsembleState(mesh, members))
        assert np.allclose(mean, 1.0)
        p = X[0] @ X[0].T
        assert np.allclose(np.diag(p), 2.0)

    def test_columns_centered(self, rng):
        mesh = Mesh1D.uniform(0, 1, 9)
        ens = EnsembleState(mesh, rng.standard_normal((6, 2, 10)))
        _, X = forecast_stats(ens)
        sums = (X * np.sqrt(6 - 1)).sum(axis=-1)
        assert np.abs(sums).max() < 1e-12

    def test_single_member_rejected(self):
        mesh = Mesh1D.uniform(0, 1, 3)
        with pytest.raises(ValueError):
            forecast_stats(EnsembleState(mesh, np.zeros((1, 1, 4))))


class TestEtkfWeights:
    def test_zero_innovation(self, rng):
        Y = rng.standard_normal((7, 4))
        w = etkf_weights(Y, np.full(7, 0.3), np.zeros(7))
        assert np.abs(w).max() < 1e-14

    def test_insensitive_observations(self, rng):
        w = etkf_weights(np.zeros((5, 3)), np.full(5, 0.2), rng.standard_normal(5))
        assert np.abs(w).max() == 0.0

    def test_smw_equivalence(self, rng):
        # both factored forms of the weight equation agree
        for _ in range(100):
            n_ens = rng.integers(2, 11)
            n_obs = rng.integers(1, 51)
            Y = rng.standard_normal((n_obs, n_ens))
            r = np.exp(rng.uniform(-2, 2, n_obs))
            d = rng.standard_normal(n_obs)
            w = etkf_weights(Y, r, d)
            direct = Y.T @ np.linalg.solve(Y @ Y.T + np.diag(r), d)
            scale = max(np.abs(direct).max(), 1e-30)
            assert np.abs(w - direct).max() <= 1e-10 * max(scale, 1.0)


class TestLocalizationRadii:
    def test_constant_metric_gives_r0(self):
        mesh = Mesh1D.uniform(0, 1, 10)
        M = scalar_field(mesh, np.full(11, 3.7))
        assert np.allclose(localization_radii(M, 0.8), 0.8)

    def test_capped_node_value(self):
        # dets {1, 3}: c = 2; a capped node gets r0 * exp(-1/2)
        mesh = Mesh1D.uniform(0, 1, 2)
        M = scalar_field(mesh, np.array([1.0, 3.0, 1.0]))
        r = localization_radii(M, 1.0)
        assert r[0] == pytest.approx(1.0)
        assert r[1] == pytest.approx(np.exp(-0.5))

    def test_bracket(self, rng):
        mesh = Mesh1D.uniform(0, 1, 50)
        dets = np.exp(rng.uniform(0, 4, 51))
        r0 = 0.6
        r = localization_radii(scalar_field(mesh, dets), r0)
        d_min = dets.min()
        cap = 0.5 * (dets.max() + d_min)
        lo = r0 * np.exp(-(cap - d_min) / (2 * d_min))
        assert np.all(r <= r0 + 1e-15)
        assert np.all(r >= lo - 1e-15)

    def test_nonpositive_dets_rejected(self):
        mesh = Mesh1D.uniform(0, 1, 2)
        M = scalar_field(mesh, np.array([1.0, 1.0, 1.0]))
        object.__setattr__(M, "values", np.array([[[1.0]], [[-1.0]], [[1.0]]]))
        with pytest.raises(ValueError):
            localization_radii(M, 1.0)


def _ensemble(rng, mesh, n_ens, n_comp=1, base=None, spread=1.0):
    n = mesh.n_nodes
    if base is None:
        base = np.zeros((n_comp, n))
    members = base[None] + spread * rng.standard_normal((n_ens, n_comp, n))
    return EnsembleState(mesh, members)


class TestLocalAnalysis:
    def test_huge_r_matches_forecast(self, rng):
        mesh = Mesh1D.uniform(0, 1, 30)
        ens = _ensemble(rng, mesh, 8)
        locs = uniform_interior_locations(12)
        obs = make_obs(locs, rng.standard_normal(12), r_var=1e12)
        radii = np.full(mesh.n_nodes, 10.0)
        out = local_analysis(ens, obs, radii, AnalysisConfig(rho=1.0))
        rel = np.abs(out.members - ens.members).max() / np.abs(ens.members).max()
        assert rel < 1e-6

    def test_scalar_kalman_oracle(self, rng):
        # a two-node mesh observed exactly at one node: the update at that
        # node is the scalar Kalman formula per member
        mesh = Mesh1D.uniform(0, 1, 1)
        n_ens = 6
        members = rng.standard_normal((n_ens, 1, 2))
        members[:, 0, 1] = members[:, 0, 0]  # duplicate column, scalar problem
        ens = EnsembleState(mesh, members)
        y = 0.7
        r_var = 0.05
        obs = make_obs([0.0], [y], r_var)
        radii = np.full(2, 0.1)
        out = local_analysis(ens, obs, radii, AnalysisConfig(rho=1.0))
        u = members[:, 0, 0]
        p = np.var(u, ddof=1)
        expect = u + p / (p + r_var) * (y - u)
        assert np.abs(out.members[:, 0, 0] - expect).max() < 1e-10

    def test_global_radius_matches_direct_etkf(self, rng):
        # with every node selecting all observations, the local update
        # equals a single global transform
        mesh = Mesh1D.uniform(0, 1, 25)
        n_ens = 7
        ens = _ensemble(rng, mesh, n_ens, base=np.sin(np.pi * mesh.nodes)[None])
        locs = uniform_interior_locations(9)
        truth_vals = np.interp(locs, mesh.nodes, np.sin(np.pi * mesh.nodes))
        obs = make_obs(locs, truth_vals + 0.1 * rng.standard_normal(9), r_var=0.01)
        radii = np.full(mesh.n_nodes, 1e9)
        cfg = AnalysisConfig(rho=1.3)
        out = local_analysis(ens, obs, radii, cfg)

        mean, X = forecast_stats(ens)
        X = np.sqrt(cfg.rho) * X[0]  # (n, n_ens)
        hx = np.stack(
            [np.interp(locs, mesh.nodes, ens.members[i, 0]) for i in range(n_ens)],
            axis=1,
        )
        Y = np.sqrt(cfg.rho) * (hx - hx.mean(axis=1, keepdims=True)) / np.sqrt(n_ens - 1)
        D = obs.values[:, None] - hx
        W = etkf_weights(Y, np.full(9, 0.01), D)
        expect = ens.members[:, 0, :] + (X @ W).T
        assert np.abs(out.members[:, 0, :] - expect).max() < 1e-8

    def test_linearity_in_innovation(self, rng):
        # the update is affine in the observation vector with a fixed linear
        # map: increments respond linearly to observation shifts
        mesh = Mesh1D.uniform(0, 1, 20)
        ens = _ensemble(rng, mesh, 5)
        locs = uniform_interior_locations(8)
        y0 = rng.standard_normal(8)
        shift = rng.standard_normal(8)
        radii = np.full(mesh.n_nodes, 0.3)
        cfg = AnalysisConfig(rho=1.0)
        inc = {}
        for s, lab in ((0.0, "a"), (1.0, "b"), (2.0, "c")):
            out = local_analysis(ens, make_obs(locs, y0 + s * shift, 0.1), radii, cfg)
            inc[lab] = out.members - ens.members
        assert np.allclose(inc["c"] - inc["a"], 2.0 * (inc["b"] - inc["a"]),
                           atol=1e-11)

    def test_locality(self, rng):
        # perturbing one observation beyond every node's reach leaves every
        # analysis value untouched
        mesh = Mesh1D.uniform(0, 1, 40)
        n_obs = 10
        for _ in range(10):
            ens = _ensemble(rng, mesh, 6)
            locs = np.sort(rng.uniform(0.05, 0.95, n_obs))
            vals = rng.standard_normal(n_obs)
            radii = np.full(mesh.n_nodes, 0.04)
            far_idx = int(np.argmax(np.abs(locs - 0.5)))
            # nodes within reach of the perturbed obs
            touched = np.abs(mesh.nodes - locs[far_idx]) <= radii
            vals2 = vals.copy()
            vals2[far_idx] += 13.0
            cfg = AnalysisConfig(rho=1.1)
            out1 = local_analysis(ens, make_obs(locs, vals, 0.05), radii, cfg)
            out2 = local_analysis(ens, make_obs(locs, vals2, 0.05), radii, cfg)
            diff = np.abs(out1.members - out2.members).max(axis=(0, 1))
            assert np.abs(diff[~touched]).max() <= 1e-12

    def test_zero_innovation_keeps_forecast(self, rng):
        mesh = Mesh1D.uniform(0, 1, 15)
        ens = _ensemble(rng, mesh, 4)
        locs = uniform_interior_locations(6)
        # observe the per-member state exactly: innovation can't be zero for
        # every member unless members agree; use identical members instead
        members = np.tile(np.sin(np.pi * mesh.nodes), (4, 1, 1))
        members += 0.0
        ens = EnsembleState(mesh, members)
        vals = np.interp(locs, mesh.nodes, members[0, 0])
        out = local_analysis(
            ens, make_obs(locs, vals, 0.1), np.full(mesh.n_nodes, 0.5),
            AnalysisConfig(rho=1.0)
        )
        assert np.abs(out.members - ens.members).max() < 1e-12

    def test_member_permutation_equivariance(self, rng):
        mesh = Mesh1D.uniform(0, 1, 12)
        ens = _ensemble(rng, mesh, 5)
        locs = uniform_interior_locations(7)
        obs = make_obs(locs, rng.standard_normal(7), 0.2)
        radii = np.full(mesh.n_nodes, 0.4)
        cfg = AnalysisConfig()
        out = local_analysis(ens, obs, radii, cfg)
        perm = np.array([3, 0, 4, 1, 2])
        ens_p = EnsembleState(mesh, ens.members[perm])
        out_p = local_analysis(ens_p, obs, radii, cfg)
        assert np.allclose(out_p.members, out.members[perm], atol=1e-12)

    def test_starved_nodes_counted_and_unchanged(self, rng):
        mesh = Mesh1D.uniform(0, 1, 20)
        ens = _ensemble(rng, mesh, 4)
        obs = make_obs([0.05], [0.3], 0.1)
        radii = np.full(mesh.n_nodes, 0.08)
        stats = AnalysisStats()
        out = local_analysis(ens, obs, radii, AnalysisConfig(), stats=stats)
        far = np.abs(mesh.nodes - 0.05) > 0.08
        assert stats.n_starved == far.sum()
        assert np.array_equal(out.members[:, :, far], ens.members[:, :, far])

    def test_coupled_equals_uncoupled_without_cross_covariance(self, rng):
        # member-space perturbation directions of the two components are
        # orthogonal, so the sample cross-covariance vanishes identically
        mesh = Mesh1D.uniform(0, 1, 18)
        n = mesh.n_nodes
        a = np.array([1.0, -1.0, 1.0, -1.0])
        b = np.array([1.0, 1.0, -1.0, -1.0])
        g = np.sin(np.pi * mesh.nodes)
        q = np.cos(np.pi * mesh.nodes)
        base = np.stack((0.3 * np.ones(n), -0.2 * np.ones(n)))
        members = np.empty((4, 2, n))
        for i in range(4):
            members[i, 0] = base[0] + a[i] * g
            members[i, 1] = base[1] + b[i] * q
        ens = EnsembleState(mesh, members)
        locs = uniform_interior_locations(9)
        obs = ObservationSet(
            kind="pointwise",
            base_locations=(locs, locs),
            r_var=0.05,
        )
        vals = rng.standard_normal(18)
        obs = dataclasses.replace(obs, values=vals)
        radii = np.full(n, 0.3)
        out_c = local_analysis(ens, obs, radii, AnalysisConfig(coupling="coupled"))
        out_u = local_analysis(ens, obs, radii, AnalysisConfig(coupling="uncoupled"))
        assert np.abs(out_c.members - out_u.members).max() < 1e-11

    def test_perturbed_obs_requires_rng_and_is_deterministic(self, rng):
        mesh = Mesh1D.uniform(0, 1, 10)
        ens = _ensemble(rng, mesh, 4)
        obs = make_obs(uniform_interior_locations(5), np.zeros(5), 0.1)
        radii = np.full(mesh.n_nodes, 0.5)
        cfg = AnalysisConfig(perturbed_obs=True)
        with pytest.raises(ValueError):
            local_analysis(ens, obs, radii, cfg)
        a = local_analysis(ens, obs, radii, cfg, rng=np.random.default_rng(5))
        b = local_analysis(ens, obs, radii, cfg, rng=np.random.default_rng(5))
        assert np.array_equal(a.members, b.members)
