import itertools
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st
from scipy.sparse.csgraph import shortest_path

from duopoly.abm import (AbmConfig, AgentState, Network, _probabilities_vectorized,
                         build_watts_strogatz, effective_delta, ensemble, local_shares, run,
                         state_probabilities, step)
from duopoly.errors import InvalidConfigError, IsolatedAgentError
from duopoly.fitting import fit_single_brand

B1, B2, NA = AgentState.BRAND1, AgentState.BRAND2, AgentState.NON_ADOPTER
NEG_INF = float("-inf")


def star(center_states):
    """Agent 0 linked to one neighbour per entry of ``center_states``."""
    adj = [list(range(1, len(center_states) + 1))] + [[0] for _ in center_states]
    states = np.array([NA] + list(center_states), dtype=np.int8)
    return Network.from_adjacency(adj), states


class TestNetwork:
    def test_ring_lattice(self):
        net = build_watts_strogatz(50, 8, 0.0, np.random.default_rng(0))
        assert np.all(net.degrees == 8)
        assert set(net.neighbors(0).tolist()) == {1, 2, 3, 4, 46, 47, 48, 49}

    @given(st.integers(10, 200), st.sampled_from([2, 4, 6, 8]), st.floats(0, 1), st.integers(0, 2**32))
    def test_simple_undirected_and_edge_count(self, n, k, p, seed):
        if k >= n - 1:
            return
        net = build_watts_strogatz(n, k, p, np.random.default_rng(seed))
        assert net.n_edges == n * k // 2
        A = net.to_sparse()
        assert (A != A.T).nnz == 0
        assert A.diagonal().sum() == 0
        assert A.max() == 1  # duplicates would sum to 2

    def test_small_world_shortens_paths(self):
        def mean_path(p, seed):
            net = build_watts_strogatz(1000, 8, p, np.random.default_rng(seed))
            d = shortest_path(net.to_sparse(), unweighted=True, directed=False)
            return d[np.triu_indices(1000, 1)].mean()
        lattice = np.mean([mean_path(0.0, s) for s in range(10)])
        rewired = np.mean([mean_path(0.1, s) for s in range(10)])
        assert rewired < lattice

    @pytest.mark.parametrize("n,k", [(10, 3), (10, 9), (10, 10), (10, 0)])
    def test_invalid(self, n, k):
        with pytest.raises(InvalidConfigError):
            build_watts_strogatz(n, k, 0.0, np.random.default_rng(0))


class TestDecisionRule:
    def test_local_shares(self):
        net, states = star([NA] * 8)
        assert local_shares(0, net, states) == (0, 0, 1)
        net, states = star([B1] * 4 + [NA] * 4)
        assert local_shares(0, net, states) == (0.5, 0, 0.5)
        net, states = star([B1] * 4 + [B2] * 2 + [NA] * 2)
        assert local_shares(0, net, states) == (0.5, 0.25, 0.25)

    def test_isolated_agent(self):
        net = Network.from_adjacency([[], [2], [1]])
        with pytest.raises(IsolatedAgentError):
            local_shares(0, net, np.array([NA, NA, NA], dtype=np.int8))

    def test_worked_examples(self):
        u = (0.0, 0.0, 0.0)
        case_i, case_ii = (0.5, 0.0, 0.5), (0.5, 0.25, 0.25)
        assert (effective_delta(1, 2, case_i, u), effective_delta(1, 3, case_i, u)) == (0.5, 0.0)
        assert (effective_delta(1, 2, case_ii, u), effective_delta(1, 3, case_ii, u)) == (0.25, 0.25)
        assert state_probabilities(case_i, u)[0] == 0.5
        assert state_probabilities(case_ii, u)[0] == 1.0

    def test_all_tied(self):
        assert state_probabilities((1 / 3, 1 / 3, 1 / 3), (0, 0, 0)) == (1 / 3, 1 / 3, 1 / 3)

    def test_diagonal_zero(self):
        for s in (1, 2, 3):
            assert effective_delta(s, s, (0.2, 0.3, 0.5), (0.1, 0.4, 0.0)) == 0

    @staticmethod
    def _neighbourhoods(max_degree=8):
        for deg in range(1, max_degree + 1):
            for c1 in range(deg + 1):
                for c2 in range(deg + 1 - c1):
                    yield deg, c1, c2, deg - c1 - c2

    UTILS = [(0, 0, 0), (0.6, 0.6, 0), (0.5, 0.25, 0), (0, 0.25, 0.5), (0.125, 0, 0.375),
             (0.6, NEG_INF, 0.0)]

    def test_exhaustive_against_rational_oracle(self):
        """Exact-arithmetic brute force over every neighbourhood of degree <= 8."""
        for u in self.UTILS:
            uf = [Fraction(str(x)) if np.isfinite(x) else None for x in u]
            for deg, c1, c2, c3 in self._neighbourhoods():
                nu = (c1 / deg, c2 / deg, c3 / deg)
                got = state_probabilities(nu, u)
                assert sum(got) == pytest.approx(1.0, abs=1e-15)
                exact_nu = [Fraction(c, deg) for c in (c1, c2, c3)]
                score = [None if uf[i] is None else exact_nu[i] + uf[i] for i in range(3)]
                best = max(s for s in score if s is not None)
                winners = [i for i in range(3) if score[i] == best]
                want = [1 / len(winners) if i in winners else 0.0 for i in range(3)]
                assert list(got) == pytest.approx(want, abs=0), (u, deg, c1, c2, c3)

    def test_antisymmetry_and_additivity(self):
        for u in self.UTILS[:5]:
            for deg, c1, c2, c3 in self._neighbourhoods():
                nu = (c1 / deg, c2 / deg, c3 / deg)
                for k, j, l in itertools.product((1, 2, 3), repeat=3):
                    d_kj = effective_delta(k, j, nu, u)
                    assert d_kj == pytest.approx(-effective_delta(j, k, nu, u), abs=1e-15)
                    assert d_kj + effective_delta(j, l, nu, u) == pytest.approx(
                        effective_delta(k, l, nu, u), abs=1e-14)

    def test_vectorized_matches_scalar(self):
        for u in self.UTILS:
            rows = [(c1 / d, c2 / d, c3 / d) for d, c1, c2, c3 in self._neighbourhoods()]
            vec = _probabilities_vectorized(np.array(rows), np.array(u))
            for row, got in zip(rows, vec):
                assert tuple(got) == state_probabilities(row, u)


def two_state_reference(n, k, gamma, du, ticks, seed):
    """Independent adopt / do-not-adopt simulator on the same ring lattice and seed policy."""
    rng = np.random.default_rng(seed)
    adopted = np.zeros(n, dtype=bool)
    offsets = [d for d in range(-k // 2, k // 2 + 1) if d != 0]
    nbrs = (np.arange(n)[:, None] + np.array(offsets)[None, :]) % n
    shares = [0.0]
    for _ in range(ticks):
        snapshot = adopted.copy()
        pool = np.flatnonzero(~adopted)
        if len(pool) >= gamma:
            adopted[rng.choice(pool, size=gamma, replace=False)] = True
        else:
            adopted[rng.permutation(pool)] = True
        undecided = np.flatnonzero(~adopted)
        if len(undecided):
            frac = snapshot[nbrs[undecided]].mean(axis=1)
            delta = frac - (1 - frac) + du
            p = np.where(np.abs(delta) <= 1e-12, 0.5, (delta > 0).astype(float))
            adopted[undecided[rng.random(len(undecided)) < p]] = True
        shares.append(adopted.mean())
        if adopted.all():
            break
    return np.array(shares)


class TestDynamics:
    def test_dominated_brands_never_adopted(self):
        cfg = AbmConfig(n_agents=200, gamma1=0, gamma2=0, u=(0.0, 0.0, 1.0), max_ticks=20)
        tr = run(cfg)
        assert np.all(tr.n1 == 0) and np.all(tr.n2 == 0)

    def test_seeding_counts(self):
        cfg = AbmConfig(n_agents=1000, gamma1=7, gamma2=3, u=(0.0, 0.0, 5.0))
        net = build_watts_strogatz(1000, 8, 0.0, np.random.default_rng(0))
        states = np.full(1000, NA, dtype=np.int8)
        states = step(net, states, cfg, np.random.default_rng(1))
        assert np.sum(states == B1) == 7 and np.sum(states == B2) == 3

    def test_seeding_overflow_split(self):
        cfg = AbmConfig(n_agents=20, k=4, gamma1=30, gamma2=10, u=(0.0, 0.0, 5.0))
        net = build_watts_strogatz(20, 4, 0.0, np.random.default_rng(0))
        states = np.full(20, NA, dtype=np.int8)
        states[:8] = B1
        out = step(net, states, cfg, np.random.default_rng(3))
        assert np.all(out != NA)
        assert np.sum(out[8:] == B1) == 9 and np.sum(out[8:] == B2) == 3

    @given(st.integers(0, 10_000))
    def test_adoption_is_absorbing(self, seed):
        cfg = AbmConfig(n_agents=300, k=4, p_rewire=0.2, gamma1=3, gamma2=2, max_ticks=30, rng_seed=seed)
        rng = np.random.default_rng(seed)
        net = build_watts_strogatz(300, 4, 0.2, rng)
        states = np.full(300, NA, dtype=np.int8)
        for tick in range(30):
            new = step(net, states, cfg, rng, tick)
            adopted = states != NA
            assert np.array_equal(new[adopted], states[adopted])
            states = new

    def test_full_seeding(self):
        tr = run(AbmConfig(n_agents=100, gamma1=100, gamma2=0))
        assert tr.n1[1] == 1.0 and len(tr) == 2

    def test_determinism(self):
        cfg = AbmConfig(n_agents=2000, p_rewire=0.05, gamma1=20, gamma2=40, rng_seed=11)
        assert run(cfg).to_csv() == run(cfg).to_csv()

    def test_shares_monotone_and_bounded(self):
        tr = run(AbmConfig(n_agents=3000, p_rewire=0.1, gamma1=20, gamma2=50, rng_seed=2))
        assert np.all(np.diff(tr.n1) >= 0) and np.all(np.diff(tr.n2) >= 0)
        assert np.all(tr.n1 + tr.n2 <= 1)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_monopoly_reduces_to_two_state_model(self, seed):
        cfg = AbmConfig(n_agents=2000, k=8, gamma1=22, gamma2=0, u=(0.6, NEG_INF, 0.0),
                        max_ticks=100, rng_seed=seed)
        assert np.array_equal(run(cfg).n1, two_state_reference(2000, 8, 22, 0.6, 100, seed))

    def test_monopoly_curve_is_bass_like(self):
        cfg = AbmConfig(gamma1=109, gamma2=0, u=(0.6, NEG_INF, 0.0))
        tr = ensemble(cfg, 5)
        fit = fit_single_brand(tr.t, tr.n1)
        assert fit.r2 > 0.99
        # loose: same order as the published single-brand fit
        assert 0.0109 / 3 < fit.params.p < 0.0109 * 3
        assert 0.3536 / 3 < fit.params.q < 0.3536 * 3


class TestEnsemble:
    def test_single_replicate_is_run(self):
        cfg = AbmConfig(n_agents=1000, gamma1=10, gamma2=20, rng_seed=4)
        a, b = run(cfg), ensemble(cfg, 1)
        assert np.array_equal(a.n1, b.n1) and np.array_equal(a.n2, b.n2)

    def test_full_seeding_mean(self):
        cfg = AbmConfig(n_agents=100, gamma1=100, gamma2=0)
        assert np.array_equal(ensemble(cfg, 4).n1, run(cfg).n1)

    def test_csv_has_sd_columns(self):
        text = ensemble(AbmConfig(n_agents=500, gamma1=5, gamma2=5), 3).to_csv()
        assert text.splitlines()[0] == "t,n1,n2,n1_sd,n2_sd"

    def test_variance_shrinks_with_replicates(self):
        base = AbmConfig(n_agents=600, k=4, gamma1=3, gamma2=6, max_ticks=300)
        finals = np.array([run(AbmConfig(**{**base.__dict__, "rng_seed": s})).n1[-1] for s in range(50)])
        single_var = finals.var(ddof=1)
        means = [ensemble(AbmConfig(**{**base.__dict__, "rng_seed": 1000 + 5 * g}), 5).n1[-1]
                 for g in range(10)]
        ratio = np.var(means, ddof=1) / (single_var / 5)
        assert 0.2 < ratio < 5

    def test_invalid_config(self):
        with pytest.raises(InvalidConfigError):
            AbmConfig(n_agents=8, k=8)
        with pytest.raises(InvalidConfigError):
            AbmConfig(gamma1=-1)
        with pytest.raises(InvalidConfigError):
            AbmConfig(u=(NEG_INF, NEG_INF, 0))
        with pytest.raises(InvalidConfigError):
            AbmConfig(seeding_dispersion="clustered")
        with pytest.raises(InvalidConfigError):
            ensemble(AbmConfig(), 0)

    def test_fraction_parameterization(self):
        cfg = AbmConfig.from_fractions(0.0109, 0.0239)
        assert (cfg.gamma1, cfg.gamma2) == (109, 239)
        assert cfg.gamma_fractions == (0.0109, 0.0239)
