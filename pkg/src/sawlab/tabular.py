"""Exact tabular dynamic programming on the grid maze.

Independent oracles for the test suite: value iteration over (state, action)
pairs and over (state, next-state) pairs, policy evaluation by linear solve,
and finite-horizon success probabilities. None of this shares code with the
learned agents.
"""

import numpy as np


class MazeMdp:
    """Tabular view of a GridMaze: indexed cells, slip dynamics, goal terminal."""

    def __init__(self, maze):
        self.maze = maze
        self.cells = maze.free_cells()
        self.index = {cell: i for i, cell in enumerate(self.cells)}
        self.goal = maze.goal
        self.n_states = len(self.cells)
        self.n_actions = 4

    def outcomes(self, cell, move):
        """List of (next_cell, probability) under the slip model."""
        p = self.maze.p_slip
        outs = {}
        for m in range(4):
            prob = (1.0 - p) if m == move else p / 3.0
            if prob == 0.0:
                continue
            nxt = self.maze.next_cell(cell, m)
            outs[nxt] = outs.get(nxt, 0.0) + prob
        return list(outs.items())

    def reachable(self, cell):
        """Deduplicated one-step-reachable cells (wall bumps map to cell itself)."""
        seen = []
        for m in range(4):
            nxt = self.maze.next_cell(cell, m)
            if nxt not in seen:
                seen.append(nxt)
        return seen


def value_iteration_qsa(mdp, gamma, tol=1e-13, max_iters=100_000):
    """Optimal state values from the (state, action) Bellman optimality update.

    Reward 1 on entering the goal, which is terminal (no bootstrap).
    """
    v = np.zeros(mdp.n_states)
    for _ in range(max_iters):
        v_new = np.zeros_like(v)
        for i, cell in enumerate(mdp.cells):
            if cell == mdp.goal:
                continue
            best = -np.inf
            for move in range(mdp.n_actions):
                total = 0.0
                for nxt, prob in mdp.outcomes(cell, move):
                    r = 1.0 if nxt == mdp.goal else 0.0
                    cont = 0.0 if nxt == mdp.goal else v[mdp.index[nxt]]
                    total += prob * (r + gamma * cont)
                best = max(best, total)
            v_new[i] = best
        if np.max(np.abs(v_new - v)) < tol:
            return v_new
        v = v_new
    return v


def value_iteration_qss(mdp, gamma, tol=1e-13, max_iters=100_000):
    """Optimal state values from the (state, next-state) Bellman update.

    Only valid as an optimality target for deterministic dynamics (p_slip 0):
    the maximization runs over one-step-reachable next states.
    """
    if mdp.maze.p_slip != 0.0:
        raise ValueError("state-pair value iteration assumes deterministic moves")
    q = {}
    for cell in mdp.cells:
        if cell == mdp.goal:
            continue
        for nxt in mdp.reachable(cell):
            q[(cell, nxt)] = 0.0
    for _ in range(max_iters):
        delta = 0.0
        q_new = {}
        for (cell, nxt) in q:
            r = 1.0 if nxt == mdp.goal else 0.0
            if nxt == mdp.goal:
                cont = 0.0
            else:
                cont = max(q[(nxt, nn)] for nn in mdp.reachable(nxt))
            q_new[(cell, nxt)] = r + gamma * cont
            delta = max(delta, abs(q_new[(cell, nxt)] - q[(cell, nxt)]))
        q = q_new
        if delta < tol:
            break
    v = np.zeros(mdp.n_states)
    for i, cell in enumerate(mdp.cells):
        if cell == mdp.goal:
            continue
        v[i] = max(q[(cell, nxt)] for nxt in mdp.reachable(cell))
    return v


def evaluation_solve(mdp, policy_probs, gamma):
    """Exact policy evaluation by linear solve.

    ``policy_probs[i]`` is the action distribution at cell i. Returns state
    values under reward 1 on entering the terminal goal.
    """
    n = mdp.n_states
    a_mat = np.eye(n)
    b = np.zeros(n)
    for i, cell in enumerate(mdp.cells):
        if cell == mdp.goal:
            continue
        for move in range(mdp.n_actions):
            pa = policy_probs[i][move]
            if pa == 0.0:
                continue
            for nxt, prob in mdp.outcomes(cell, move):
                if nxt == mdp.goal:
                    b[i] += pa * prob
                else:
                    a_mat[i, mdp.index[nxt]] -= pa * prob * gamma
    return np.linalg.solve(a_mat, b)


def success_probability(mdp, horizon, policy=None):
    """Probability of reaching the goal within ``horizon`` steps.

    With ``policy`` (a cell -> move map) the policy is evaluated exactly;
    without it the optimal finite-horizon success probability is computed.
    Returns a dict cell -> probability.
    """
    prob = {cell: 0.0 for cell in mdp.cells}
    prob[mdp.goal] = 1.0
    for _ in range(horizon):
        nxt_prob = {mdp.goal: 1.0}
        for cell in mdp.cells:
            if cell == mdp.goal:
                continue
            if policy is not None:
                moves = [policy[cell]]
            else:
                moves = range(mdp.n_actions)
            best = 0.0
            for move in moves:
                total = 0.0
                for nxt, p in mdp.outcomes(cell, move):
                    total += p * (1.0 if nxt == mdp.goal else prob[nxt])
                best = max(best, total)
            nxt_prob[cell] = best
        prob = nxt_prob
    return prob
