"""Small simulated MDPs with known optima and scripted data-collection policies.

Two tasks: a deterministic continuous point mass and a stochastic sparse-reward
grid maze driven through a shared continuous-action interface. Scripted
behavior policies generate the five dataset flavors (random, medium,
medium-replay, medium-expert, expert), and reference scores anchor the
normalized-score metric.
"""

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import OfflineDataset

ASSET_DIR = Path(__file__).parent / "assets"

DATASET_KINDS = ("random", "medium", "expert", "medium_replay", "medium_expert")

# Grid moves in (row, col) deltas and their unit-vector action encodings.
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
MOVE_ACTIONS = (np.array([-1.0, 0.0]), np.array([1.0, 0.0]),
                np.array([0.0, -1.0]), np.array([0.0, 1.0]))


@dataclass
class EnvSpec:
    name: str
    obs_dim: int
    act_dim: int
    action_bound: float
    horizon: int
    deterministic: bool
    j_random: float | None = None
    j_expert: float | None = None


@dataclass
class EnvState:
    obs: np.ndarray
    step_index: int
    rng: np.random.Generator
    done: bool = False
    cell: tuple | None = field(default=None)


class PointMass2D:
    """Deterministic 2-d point mass steered toward a fixed goal.

    Dynamics s' = s + 0.1 a with actions clamped to the unit box; reward is
    the negative Euclidean distance of s' to the goal; episodes end at the
    horizon or once within 0.05 of the goal. Starts are uniform on [-1, 1]^2.
    """

    GOAL = np.array([1.0, 1.0])
    STEP_SCALE = 0.1
    GOAL_RADIUS = 0.05

    def __init__(self, horizon=100):
        self.spec = EnvSpec(name="pointmass2d", obs_dim=2, act_dim=2,
                            action_bound=1.0, horizon=int(horizon),
                            deterministic=True)
        _load_reference_file(self.spec)

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        pos = rng.uniform(-1.0, 1.0, size=2)
        return EnvState(obs=pos, step_index=0, rng=rng)

    def step(self, state, action):
        if state.done:
            raise RuntimeError("cannot step a finished episode")
        a = np.clip(np.asarray(action, dtype=np.float64),
                    -self.spec.action_bound, self.spec.action_bound)
        if a.shape != (self.spec.act_dim,):
            raise ValueError(f"action must have shape ({self.spec.act_dim},)")
        pos = state.obs + self.STEP_SCALE * a
        dist = float(np.linalg.norm(pos - self.GOAL))
        reward = -dist
        step_index = state.step_index + 1
        done = dist <= self.GOAL_RADIUS or step_index >= self.spec.horizon
        return EnvState(obs=pos, step_index=step_index, rng=state.rng,
                        done=done), reward, done

    def expert_action(self, obs):
        return np.clip((self.GOAL - obs) / self.STEP_SCALE,
                       -self.spec.action_bound, self.spec.action_bound)

    def medium_action(self, obs, rng):
        noisy = self.expert_action(obs) + rng.normal(0.0, 0.5, size=2)
        return np.clip(noisy, -self.spec.action_bound, self.spec.action_bound)


class GridMaze:
    """Stochastic sparse-reward 8x8 maze with a continuous action interface.

    The layout ships as an ASCII grid ('#' wall, '.' free, 'S' start,
    'G' goal). A 2-d action is snapped to the nearest cardinal move; the
    intended move is taken with probability 1 - p_slip, otherwise one of the
    other three moves is chosen uniformly. Blocked moves leave the agent in
    place. Reward is 1 on reaching the goal, else 0; episodes end at the goal
    or the horizon. Observations are (row, col) / (size - 1).
    """

    def __init__(self, p_slip=0.1, horizon=50, maze_path=None):
        if not 0.0 <= p_slip < 1.0:
            raise ValueError(f"p_slip must be in [0, 1), got {p_slip}")
        path = Path(maze_path) if maze_path else ASSET_DIR / "gridmaze8x8.txt"
        self.grid, self.start, self.goal = _parse_maze(path.read_text())
        self.size = len(self.grid)
        self.p_slip = float(p_slip)
        self.spec = EnvSpec(name="gridmaze8x8", obs_dim=2, act_dim=2,
                            action_bound=1.0, horizon=int(horizon),
                            deterministic=(p_slip == 0.0))
        if p_slip == 0.1 and horizon == 50 and maze_path is None:
            _load_reference_file(self.spec)
        self._dist = self._bfs_distances()

    def free_cells(self):
        return [(r, c) for r in range(self.size) for c in range(self.size)
                if self.grid[r][c] != "#"]

    def cell_obs(self, cell):
        return np.array(cell, dtype=np.float64) / (self.size - 1)

    def obs_to_cell(self, obs):
        return tuple(int(v) for v in np.rint(np.asarray(obs) * (self.size - 1)))

    def next_cell(self, cell, move):
        r, c = cell[0] + MOVES[move][0], cell[1] + MOVES[move][1]
        if 0 <= r < self.size and 0 <= c < self.size and self.grid[r][c] != "#":
            return (r, c)
        return cell

    @staticmethod
    def snap_action(action):
        """Index of the cardinal move nearest to a continuous 2-d action."""
        a = np.asarray(action, dtype=np.float64)
        if abs(a[0]) >= abs(a[1]):
            return 1 if a[0] > 0 else 0
        return 3 if a[1] > 0 else 2

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        return EnvState(obs=self.cell_obs(self.start), step_index=0, rng=rng,
                        cell=self.start)

    def step(self, state, action):
        if state.done:
            raise RuntimeError("cannot step a finished episode")
        a = np.clip(np.asarray(action, dtype=np.float64),
                    -self.spec.action_bound, self.spec.action_bound)
        if a.shape != (self.spec.act_dim,):
            raise ValueError(f"action must have shape ({self.spec.act_dim},)")
        move = self.snap_action(a)
        if self.p_slip > 0.0 and state.rng.random() < self.p_slip:
            others = [m for m in range(4) if m != move]
            move = others[state.rng.integers(3)]
        cell = self.next_cell(state.cell, move)
        reward = 1.0 if cell == self.goal else 0.0
        step_index = state.step_index + 1
        done = cell == self.goal or step_index >= self.spec.horizon
        return EnvState(obs=self.cell_obs(cell), step_index=step_index,
                        rng=state.rng, done=done, cell=cell), reward, done

    def expert_move(self, cell):
        """First move of a shortest path to the goal (breadth-first search)."""
        if cell == self.goal:
            return 0
        best, best_dist = 0, self._dist.get(cell, np.inf)
        for move in range(4):
            nxt = self.next_cell(cell, move)
            if self._dist.get(nxt, np.inf) < best_dist:
                best, best_dist = move, self._dist[nxt]
        return best

    def expert_action(self, obs):
        return MOVE_ACTIONS[self.expert_move(self.obs_to_cell(obs))].copy()

    def medium_action(self, obs, rng):
        if rng.random() < 0.3:
            return MOVE_ACTIONS[rng.integers(4)].copy()
        return self.expert_action(obs)

    def _bfs_distances(self):
        dist = {self.goal: 0}
        queue = deque([self.goal])
        while queue:
            cell = queue.popleft()
            for move in range(4):
                nxt = self.next_cell(cell, move)
                if nxt not in dist:
                    dist[nxt] = dist[cell] + 1
                    queue.append(nxt)
        return dist


def _parse_maze(text):
    rows = [line for line in text.splitlines() if line.strip()]
    size = len(rows)
    if any(len(row) != size for row in rows):
        raise ValueError("maze grid must be square")
    start = goal = None
    grid = []
    for r, row in enumerate(rows):
        cells = []
        for c, ch in enumerate(row):
            if ch == "S":
                start = (r, c)
                ch = "."
            elif ch == "G":
                goal = (r, c)
                ch = "."
            elif ch not in "#.":
                raise ValueError(f"unknown maze character {ch!r}")
            cells.append(ch)
        grid.append(cells)
    if start is None or goal is None:
        raise ValueError("maze must mark one S and one G cell")
    return grid, start, goal


def make_env(name, **kwargs):
    if name == "pointmass2d":
        return PointMass2D(**kwargs)
    if name == "gridmaze8x8":
        return GridMaze(**kwargs)
    raise ValueError(f"unknown environment {name!r}")


def expert_policy(env, state):
    """Scripted near-optimal action for the current state."""
    return env.expert_action(state.obs)


def _behavior_action(env, kind, state, rng):
    if kind == "random":
        return rng.uniform(-env.spec.action_bound, env.spec.action_bound,
                           size=env.spec.act_dim)
    if kind == "expert":
        return env.expert_action(state.obs)
    if kind == "medium":
        return env.medium_action(state.obs, rng)
    raise ValueError(f"no scripted policy for kind {kind!r}")


def _rollout_transitions(env, kind, n, rng):
    """Collect exactly n transitions under one scripted policy."""
    s_list, a_list, r_list, s2_list, d_list = [], [], [], [], []
    state = None
    while len(s_list) < n:
        if state is None or state.done:
            state = env.reset(int(rng.integers(2 ** 62)))
        action = _behavior_action(env, kind, state, rng)
        nxt, reward, done = env.step(state, action)
        s_list.append(state.obs)
        a_list.append(np.asarray(action, dtype=np.float64))
        r_list.append(reward)
        s2_list.append(nxt.obs)
        d_list.append(done)
        state = nxt
    return (np.array(s_list), np.array(a_list), np.array(r_list),
            np.array(s2_list), np.array(d_list))


def generate_dataset(env, kind, n_transitions, seed):
    """Build one of the five dataset flavors, deterministic in seed.

    medium_expert is the first half medium then the second half expert;
    medium_replay is the first half random then the second half medium.
    """
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; choose from {DATASET_KINDS}")
    n = int(n_transitions)
    if n < 1:
        raise ValueError("n_transitions must be at least 1")
    if kind == "medium_expert":
        parts = ("medium", "expert")
    elif kind == "medium_replay":
        parts = ("random", "medium")
    else:
        parts = (kind,)
    counts = [n] if len(parts) == 1 else [n // 2, n - n // 2]
    chunks = []
    for i, (part, count) in enumerate(zip(parts, counts)):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), i]))
        chunks.append(_rollout_transitions(env, part, count, rng))
    stacked = [np.concatenate(arrs) for arrs in zip(*chunks)]
    return OfflineDataset(env.spec.name, env.spec.obs_dim, env.spec.act_dim,
                          *stacked, seed=seed, kind=kind)


def _mean_return(env, policy, n_episodes, rng):
    total = 0.0
    for _ in range(n_episodes):
        state = env.reset(int(rng.integers(2 ** 62)))
        while not state.done:
            action = policy(state)
            state, reward, _ = env.step(state, action)
            total += reward
    return total / n_episodes


def reference_scores(env, n_episodes=1000, seed=0):
    """Monte-Carlo reference returns: (random policy, expert policy).

    Cached on the EnvSpec after the first call.
    """
    rng_r = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    rng_e = np.random.default_rng(np.random.SeedSequence([int(seed), 2]))
    j_r = _mean_return(
        env, lambda st: rng_r.uniform(-env.spec.action_bound,
                                      env.spec.action_bound,
                                      size=env.spec.act_dim),
        n_episodes, rng_r)
    j_e = _mean_return(env, lambda st: env.expert_action(st.obs),
                       n_episodes, rng_e)
    env.spec.j_random = j_r
    env.spec.j_expert = j_e
    return j_r, j_e


def ensure_reference_scores(env):
    """Return (J_r, J_e), computing and caching them if not already known."""
    if env.spec.j_random is None or env.spec.j_expert is None:
        reference_scores(env)
    return env.spec.j_random, env.spec.j_expert


def _load_reference_file(spec):
    path = ASSET_DIR / f"refscores_{spec.name}.json"
    if path.exists():
        blob = json.loads(path.read_text())
        spec.j_random = blob["J_r"]
        spec.j_expert = blob["J_e"]


def write_reference_file(env, path=None, n_episodes=1000, seed=0):
    """Freeze the Monte-Carlo reference scores for an environment to JSON."""
    j_r, j_e = reference_scores(env, n_episodes=n_episodes, seed=seed)
    path = Path(path) if path else ASSET_DIR / f"refscores_{env.spec.name}.json"
    blob = {"env_name": env.spec.name, "J_r": j_r, "J_e": j_e,
            "n_episodes": n_episodes, "seed": seed}
    path.write_text(json.dumps(blob, indent=2) + "\n")
    return blob
