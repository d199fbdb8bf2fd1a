"""Gradual-greedy baseline tests."""

from itertools import combinations

import numpy as np
import pytest

from drtarget.greedy import solve_gradual_greedy, solve_greedy, solve_greedy_mu
from drtarget.skp_solver import SelectionProblem, solve_exact, solve_heuristic


def problem(mu, sigma, n_max, target):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    return SelectionProblem(mu=mu, var=sigma**2, n_max=n_max, target=target)


def residual_floor_satisfiable(prob):
    """Replay the gradual picks checking the per-step floor is always satisfiable."""
    mu = prob.mu
    sigma = np.sqrt(prob.var)
    unchosen = np.ones(prob.size, dtype=bool)
    t_rem = prob.target
    for step in range(prob.n_max):
        floor = t_rem / (prob.n_max - step)
        ok = unchosen & (mu >= floor)
        if not ok.any():
            return False
        idx = np.flatnonzero(ok & (sigma == 0.0))
        if idx.size:
            k = int(idx[np.argmax(mu[idx])])
        else:
            idx = np.flatnonzero(ok)
            k = int(idx[np.argmax(mu[idx] / sigma[idx])])
        unchosen[k] = False
        t_rem -= float(mu[k])
    return True


class TestGradualGreedy:
    def test_floor_overrides_ratio(self):
        # best ratio is the small customer, but only the big one keeps T reachable
        p = problem([5.0, 1.0], [1.0, 0.01], n_max=1, target=4.0)
        sel = solve_gradual_greedy(p)
        assert sel.chosen == (0,)

    def test_zero_target_is_pure_ratio_ranking(self):
        p = problem([5.0, 1.0], [1.0, 0.01], n_max=1, target=0.0)
        sel = solve_gradual_greedy(p)
        assert sel.chosen == (1,)  # ratio 100 beats ratio 5

    def test_zero_sigma_ranks_first_by_mean(self):
        p = problem([1.0, 3.0, 2.0], [0.5, 0.0, 0.0], n_max=2, target=0.0)
        sel = solve_gradual_greedy(p)
        assert sel.chosen == (1, 2)

    def test_fallback_picks_largest_mean(self):
        # nothing satisfies the first floor (T/2 = 10), fall back to max mu
        p = problem([3.0, 2.0, 1.0], [1.0, 1.0, 1.0], n_max=2, target=20.0)
        sel = solve_gradual_greedy(p)
        assert 0 in sel.chosen

    def test_selects_exactly_budget(self):
        rng = np.random.default_rng(4)
        p = problem(rng.uniform(0.5, 2, 9), rng.uniform(0.1, 1, 9), n_max=4, target=3.0)
        assert len(solve_gradual_greedy(p).chosen) == 4

    @pytest.mark.parametrize("seed", range(25))
    def test_reaches_target_when_floor_always_satisfiable(self, seed):
        rng = np.random.default_rng(700 + seed)
        k = int(rng.integers(8, 14))
        n = int(rng.integers(3, 6))
        mu = rng.uniform(0.2, 3.0, k)
        sigma = rng.uniform(0.05, 1.0, k)
        t = 0.6 * float(np.sort(mu)[-n:].sum())
        p = SelectionProblem(mu=mu, var=sigma**2, n_max=n, target=t)
        if residual_floor_satisfiable(p):
            sel = solve_gradual_greedy(p)
            assert sel.total_mu >= t - 1e-12
            assert sel.reliability >= 0.5


class TestGreedyMu:
    def test_top_means(self):
        p = problem([3.0, 1.0, 2.0], [1.0, 1.0, 1.0], n_max=2, target=1.0)
        assert solve_greedy_mu(p).chosen == (0, 2)

    def test_tie_break_by_index(self):
        p = problem([1.0, 1.0, 1.0], [1.0, 1.0, 1.0], n_max=2, target=1.0)
        assert solve_greedy_mu(p).chosen == (0, 1)

    @pytest.mark.parametrize("seed", range(5))
    def test_maximizes_mean_over_subsets(self, seed):
        rng = np.random.default_rng(800 + seed)
        k, n = 9, 3
        mu = rng.uniform(0.1, 2.0, k)
        p = SelectionProblem(mu=mu, var=np.ones(k), n_max=n, target=1.0)
        best = max(
            sum(mu[list(s)]) for s in combinations(range(k), n)
        )
        assert solve_greedy_mu(p).total_mu == pytest.approx(best, rel=1e-12)


class TestRegimeCombination:
    def test_uses_top_mean_when_gradual_falls_short(self):
        # floors unreachable, so the combined run must not be worse than top-mean
        p = problem([3.0, 2.0, 1.0], [0.5, 0.5, 0.5], n_max=2, target=20.0)
        combined = solve_greedy(p)
        assert combined.reliability >= solve_greedy_mu(p).reliability

    @pytest.mark.parametrize("seed", range(15))
    def test_never_beats_heuristic(self, seed):
        rng = np.random.default_rng(900 + seed)
        k = int(rng.integers(8, 15))
        n = int(rng.integers(2, 6))
        mu = rng.uniform(0.2, 3.0, k)
        sigma = rng.uniform(0.05, 1.0, k)
        for tight in (0.5, 0.9, 1.3):
            t = tight * float(np.sort(mu)[-n:].sum())
            p = SelectionProblem(mu=mu, var=sigma**2, n_max=n, target=t)
            g = solve_greedy(p)
            h = solve_heuristic(p, 10).selection
            assert h.reliability >= g.reliability

    @pytest.mark.parametrize("seed", range(10))
    def test_never_beats_oracle(self, seed):
        rng = np.random.default_rng(950 + seed)
        k, n = 10, 3
        mu = rng.uniform(0.2, 3.0, k)
        sigma = rng.uniform(0.05, 1.0, k)
        t = 0.7 * float(np.sort(mu)[-n:].sum())
        p = SelectionProblem(mu=mu, var=sigma**2, n_max=n, target=t)
        assert solve_exact(p).reliability >= solve_greedy(p).reliability - 1e-15
