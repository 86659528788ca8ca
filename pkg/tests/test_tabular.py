import numpy as np
import pytest

from sawlab.envs import GridMaze
from sawlab.tabular import (MazeMdp, evaluation_solve, success_probability,
                            value_iteration_qsa, value_iteration_qss)


@pytest.fixture(scope="module")
def mdp0():
    return MazeMdp(GridMaze(p_slip=0.0))


class TestValueIteration:
    def test_state_action_and_state_pair_agree_when_deterministic(self, mdp0):
        v_qsa = value_iteration_qsa(mdp0, gamma=0.95)
        v_qss = value_iteration_qss(mdp0, gamma=0.95)
        assert np.max(np.abs(v_qsa - v_qss)) < 1e-10

    def test_optimal_value_matches_shortest_path(self, mdp0):
        # deterministic sparse reward: V*(s) = gamma^(d-1) for d = BFS distance
        gamma = 0.9
        v = value_iteration_qsa(mdp0, gamma=gamma)
        maze = mdp0.maze
        for cell, i in mdp0.index.items():
            if cell == maze.goal:
                continue
            d = maze._dist[cell]
            assert v[i] == pytest.approx(gamma ** (d - 1), abs=1e-9)

    def test_state_pair_iteration_rejects_stochastic_maze(self):
        mdp = MazeMdp(GridMaze(p_slip=0.1))
        with pytest.raises(ValueError):
            value_iteration_qss(mdp, gamma=0.9)


class TestEvaluationSolve:
    def test_uniform_policy_matches_value_iteration_on_trivial_case(self, mdp0):
        # single-action policy pointing along the expert path equals V*
        gamma = 0.9
        maze = mdp0.maze
        policy = np.zeros((mdp0.n_states, 4))
        for cell, i in mdp0.index.items():
            policy[i, maze.expert_move(cell)] = 1.0
        v_eval = evaluation_solve(mdp0, policy, gamma)
        v_star = value_iteration_qsa(mdp0, gamma=gamma)
        assert np.max(np.abs(v_eval - v_star)) < 1e-9

    def test_uniform_policy_satisfies_bellman_identity(self, mdp0):
        gamma = 0.8
        policy = np.full((mdp0.n_states, 4), 0.25)
        v = evaluation_solve(mdp0, policy, gamma)
        for cell, i in mdp0.index.items():
            if cell == mdp0.goal:
                continue
            total = 0.0
            for move in range(4):
                for nxt, p in mdp0.outcomes(cell, move):
                    r = 1.0 if nxt == mdp0.goal else 0.0
                    cont = 0.0 if nxt == mdp0.goal else v[mdp0.index[nxt]]
                    total += 0.25 * p * (r + gamma * cont)
            assert v[i] == pytest.approx(total, abs=1e-12)


class TestSuccessProbability:
    def test_slip_free_expert_is_certain(self, mdp0):
        maze = mdp0.maze
        policy = {cell: maze.expert_move(cell) for cell in mdp0.cells}
        prob = success_probability(mdp0, maze.spec.horizon, policy)
        assert prob[maze.start] == pytest.approx(1.0)

    def test_horizon_shorter_than_path_fails(self, mdp0):
        maze = mdp0.maze
        d = maze._dist[maze.start]
        prob = success_probability(mdp0, d - 1)
        assert prob[maze.start] == 0.0
        prob = success_probability(mdp0, d)
        assert prob[maze.start] == pytest.approx(1.0)

    def test_optimal_dominates_any_policy(self):
        mdp = MazeMdp(GridMaze(p_slip=0.2))
        maze = mdp.maze
        policy = {cell: maze.expert_move(cell) for cell in mdp.cells}
        p_opt = success_probability(mdp, 30)
        p_pol = success_probability(mdp, 30, policy)
        for cell in mdp.cells:
            assert p_opt[cell] >= p_pol[cell] - 1e-12

    def test_outcome_probabilities_sum_to_one(self):
        mdp = MazeMdp(GridMaze(p_slip=0.3))
        for cell in mdp.cells:
            for move in range(4):
                total = sum(p for _, p in mdp.outcomes(cell, move))
                assert total == pytest.approx(1.0, abs=1e-12)
