"""Small deterministic environments emitting feature-vector observations."""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import ConfigError, InputError, StateError

# gridworld moves as (d_row, d_col): up, right, down, left
MOVES = ((-1, 0), (0, 1), (1, 0), (0, -1))

DEFAULT_NOISE = 0.001


def _reset_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


class Environment:
    """Common episode bookkeeping: ``reset`` then ``step`` until ``done``."""

    num_actions: int
    obs_dim: int
    max_steps: int

    def __init__(self):
        self.t = 0
        self.done = True

    def reset(self, seed: int = 0) -> np.ndarray:
        self.t = 0
        self.done = False
        return self._reset(seed)

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        if self.done:
            raise StateError("step() called on a finished episode; call reset() first")
        if not 0 <= action < self.num_actions:
            raise InputError(f"action {action} outside [0, {self.num_actions})")
        self.t += 1
        obs, reward, done = self._step(int(action))
        if self.t >= self.max_steps:
            done = True
        self.done = done
        return obs, reward, done

    def _reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def _step(self, action: int) -> tuple[np.ndarray, float, bool]:
        raise NotImplementedError


class GridWorld(Environment):
    """N x N grid, one-hot position observation, reward on reaching the goal.

    With ``noise > 0`` every observation gets fresh ``U(-noise, noise)`` noise
    on each cell, drawn from a generator seeded by ``reset``. The draws for a
    whole episode are made at reset, in observation order.
    """

    num_actions = 4

    def __init__(self, side: int = 5, start=(0, 0), goal=None, step_reward: float = 0.0,
                 goal_reward: float = 10.0, max_steps: int = 50, noise: float = 0.0):
        super().__init__()
        if side < 2:
            raise ConfigError(f"grid side must be >= 2, got {side}", key="grid-side")
        goal = (side - 1, side - 1) if goal is None else tuple(goal)
        start = tuple(start)
        for name, cell in (("start", start), ("goal", goal)):
            if not all(0 <= c < side for c in cell):
                raise ConfigError(f"{name} {cell} outside a {side}x{side} grid", key=name)
        if start == goal:
            raise ConfigError("start and goal must differ", key="goal")
        if max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {max_steps}", key="max-steps")
        if noise < 0:
            raise ConfigError(f"noise amplitude must be >= 0, got {noise}", key="noise")
        self.side = side
        self.start = start
        self.goal = goal
        self.step_reward = float(step_reward)
        self.goal_reward = float(goal_reward)
        self.max_steps = max_steps
        self.noise = float(noise)
        self.obs_dim = side * side
        self.pos = start
        self._noise = None

    def _obs(self) -> np.ndarray:
        if self._noise is None:
            obs = np.zeros(self.obs_dim)
        else:
            obs = self._noise[self.t].copy()
        obs[self.pos[0] * self.side + self.pos[1]] += 1.0
        return obs

    def _reset(self, seed: int) -> np.ndarray:
        self.pos = self.start
        if self.noise > 0:
            rng = _reset_rng(seed)
            self._noise = rng.uniform(-self.noise, self.noise, (self.max_steps + 1, self.obs_dim))
        return self._obs()

    def _step(self, action: int):
        dr, dc = MOVES[action]
        r = min(max(self.pos[0] + dr, 0), self.side - 1)
        c = min(max(self.pos[1] + dc, 0), self.side - 1)
        self.pos = (r, c)
        if self.pos == self.goal:
            return self._obs(), self.goal_reward, True
        return self._obs(), self.step_reward, False

    def shortest_path_length(self) -> int | None:
        """Breadth-first distance from start to goal, in steps."""
        dist = {self.start: 0}
        frontier = deque([self.start])
        while frontier:
            cell = frontier.popleft()
            if cell == self.goal:
                return dist[cell]
            for dr, dc in MOVES:
                nxt = (min(max(cell[0] + dr, 0), self.side - 1), min(max(cell[1] + dc, 0), self.side - 1))
                if nxt not in dist:
                    dist[nxt] = dist[cell] + 1
                    frontier.append(nxt)
        return None

    def optimal_score(self) -> float:
        """Best achievable undiscounted episode score (0 if the goal is out of reach)."""
        d = self.shortest_path_length()
        if d is None or d > self.max_steps:
            return self.step_reward * self.max_steps
        return self.goal_reward + self.step_reward * (d - 1)


class NoisyGridWorld(GridWorld):
    def __init__(self, noise: float = DEFAULT_NOISE, **kwargs):
        super().__init__(noise=noise, **kwargs)


class Scroller(Environment):
    """Vertically scrolling corridor with obstacles; every row survived pays +1.

    Actions move one lane left, stay, or right (clipped at the walls); then
    the view advances one row. Entering an obstacle ends the episode with
    reward 0. The observation is the lane one-hot, the obstacle mask of the
    next row, and the row index divided by ``length`` as the last channel.
    """

    num_actions = 3

    def __init__(self, width: int = 5, length: int = 40, density: float = 0.2, layout_seed: int = 0):
        super().__init__()
        if width < 1 or length < 1:
            raise ConfigError("scroller width and length must be >= 1", key="scroller-length")
        if not 0.0 <= density < 1.0:
            raise ConfigError(f"obstacle density must be in [0, 1), got {density}", key="density")
        self.width = width
        self.length = length
        self.density = density
        self.max_steps = length
        self.obs_dim = 2 * width + 1
        self.start_lane = width // 2
        self.obstacles = self._layout(_reset_rng(layout_seed))
        if self.safe_actions() is None:
            raise ConfigError("generated scroller layout is not solvable", key="layout-seed")
        self.row = 0
        self.lane = self.start_lane

    def _layout(self, rng: np.random.Generator) -> np.ndarray:
        grid = rng.random((self.length + 1, self.width)) < self.density
        grid[0] = False
        lane = self.start_lane
        for row in range(1, self.length + 1):
            lane = min(max(lane + int(rng.integers(-1, 2)), 0), self.width - 1)
            grid[row, lane] = False
        return grid

    def safe_actions(self) -> list[int] | None:
        """Action sequence surviving the whole corridor, found by backward search."""
        alive = np.ones(self.width, dtype=bool)  # survivable from row `length`
        choice = np.zeros((self.length, self.width), dtype=np.int64)
        for row in range(self.length - 1, -1, -1):
            prev = np.zeros(self.width, dtype=bool)
            for lane in range(self.width):
                for action in range(3):
                    nl = min(max(lane + action - 1, 0), self.width - 1)
                    if not self.obstacles[row + 1, nl] and alive[nl]:
                        prev[lane] = True
                        choice[row, lane] = action
                        break
            alive = prev
        if not alive[self.start_lane]:
            return None
        actions, lane = [], self.start_lane
        for row in range(self.length):
            a = int(choice[row, lane])
            actions.append(a)
            lane = min(max(lane + a - 1, 0), self.width - 1)
        return actions

    def _obs(self) -> np.ndarray:
        obs = np.zeros(self.obs_dim)
        obs[self.lane] = 1.0
        if self.row < self.length:
            obs[self.width:2 * self.width] = self.obstacles[self.row + 1]
        obs[-1] = self.row / self.length
        return obs

    def _reset(self, seed: int) -> np.ndarray:
        self.row = 0
        self.lane = self.start_lane
        return self._obs()

    def _step(self, action: int):
        self.lane = min(max(self.lane + action - 1, 0), self.width - 1)
        self.row += 1
        if self.obstacles[self.row, self.lane]:
            return self._obs(), 0.0, True
        return self._obs(), 1.0, self.row >= self.length


ENVIRONMENTS = {
    "gridworld": GridWorld,
    "noisy-gridworld": NoisyGridWorld,
    "scroller": Scroller,
}


def make_env(name: str, **params) -> Environment:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}",
                          key="env") from None
    return cls(**params)
