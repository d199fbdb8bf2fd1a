"""Gradual greedy baseline for the selection problem.

Plain mu/sigma sorting fails when the target exceeds what the top-ratio
customers can add up to, so each pick is restricted to candidates whose mean
still keeps the residual target reachable within the remaining slots:
mu_k >= T_residual / slots_left. If every step satisfies that floor, the
chosen means sum to at least T, so the portfolio lands at rho <= 0 and
reliability of at least 50%.
"""

from __future__ import annotations

import numpy as np

from .skp_solver import Selection, SelectionProblem, evaluate_selection


def solve_gradual_greedy(problem: SelectionProblem) -> Selection:
    """Pick n_max customers one at a time by best mu/sigma ratio under the residual floor.

    Zero-sigma candidates count as infinite ratio and rank first among the
    floor-satisfiers, ordered by descending mu. If no candidate meets the
    floor at some step, fall back to the largest remaining mu (keeps the
    residual shrinking fastest) and continue. Ties break by ascending index.
    """
    mu = problem.mu
    sigma = np.sqrt(problem.var)
    unchosen = np.ones(problem.size, dtype=bool)
    chosen: list[int] = []
    t_rem = problem.target
    for step in range(problem.n_max):
        slots = problem.n_max - step
        floor = t_rem / slots
        satisfies = unchosen & (mu >= floor)
        if satisfies.any():
            zero_sigma = satisfies & (sigma == 0.0)
            if zero_sigma.any():
                idx = np.flatnonzero(zero_sigma)
                k = int(idx[np.argmax(mu[idx])])
            else:
                idx = np.flatnonzero(satisfies)
                k = int(idx[np.argmax(mu[idx] / sigma[idx])])
        else:
            idx = np.flatnonzero(unchosen)
            k = int(idx[np.argmax(mu[idx])])
        chosen.append(k)
        unchosen[k] = False
        t_rem -= float(mu[k])
    return evaluate_selection(problem, chosen)


def solve_greedy_mu(problem: SelectionProblem) -> Selection:
    """Top n_max candidates by mean, ties by ascending index."""
    order = np.argsort(-problem.mu, kind="stable")
    return evaluate_selection(problem, order[: problem.n_max])


def solve_greedy(problem: SelectionProblem) -> Selection:
    """Regime-combined greedy.

    The floor rule assumes the optimum can reach the target; when the gradual
    pass still falls short of T, the pure top-mean pick is also tried and the
    higher-reliability result wins (gradual on ties).
    """
    gradual = solve_gradual_greedy(problem)
    if gradual.total_mu < problem.target:
        by_mu = solve_greedy_mu(problem)
        if by_mu.reliability > gradual.reliability:
            return by_mu
    return gradual
