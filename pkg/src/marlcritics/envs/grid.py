"""Generative grid worlds (too large to tabulate exactly).

All environments take the RNG explicitly in ``reset``/``step`` so an episode
is a pure function of ``(seed, action sequence)``. ``last_info`` keeps
per-step diagnostics (slips, blurred observations).
"""
import numpy as np

from ..core import GenerativeEnv
from ..validation import ConfigurationError
from .tiles import load_tiles, parse_tiles

UP, DOWN, LEFT, RIGHT, STAY = range(5)
MOVES = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1), STAY: (0, 0)}


def _add(p, d):
    return (p[0] + d[0], p[1] + d[1])


def resolve_moves(current, proposed, solid_agents=False):
    """Apply simultaneous moves.

    Agents proposing the same cell all stay put. With ``solid_agents`` an
    agent may also not enter a cell that another agent ends up occupying.
    """
    final = list(proposed)
    while True:
        bad = []
        for i in range(len(final)):
            if final[i] == current[i]:
                continue
            clash = any(j != i and final[j] == final[i] for j in range(len(final)))
            if solid_agents:
                clash = clash or any(j != i and current[j] == final[i] and final[j] == current[j] for j in range(len(final)))
            if clash:
                bad.append(i)
        if not bad:
            break
        # every mover in a clash is sent back at once, then re-check
        for i in bad:
            final[i] = current[i]
    return final


class GridEnv(GenerativeEnv):
    """Shared machinery for the two-agent 5-action tile worlds.

    Each agent observes the index of its own cell.
    """

    map_name = None
    n_agents = 2

    def __init__(self, tiles=None, horizon=50, gamma=0.95):
        if tiles is None:
            tiles = load_tiles(self.map_name)
        elif isinstance(tiles, str):
            tiles = parse_tiles(tiles) if "\n" in tiles else load_tiles(tiles)
        self.tiles = tiles
        self.height, self.width = tiles.shape
        self.n_cells = self.height * self.width
        self.spawns = tiles.cells("A")
        if len(self.spawns) < self.n_agents:
            raise ConfigurationError(f"map needs {self.n_agents} 'A' spawn tiles")
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.n_actions = (5,) * self.n_agents
        self.n_observations = (self.n_cells,) * self.n_agents
        self.pos = None
        self.done = False
        self.last_info = {}

    def cell_index(self, p):
        return p[0] * self.width + p[1]

    def free(self, p):
        r, c = p
        return 0 <= r < self.height and 0 <= c < self.width and not self.tiles.wall[r, c]

    def observe(self):
        return tuple(self.cell_index(p) for p in self.pos)

    def reset(self, rng):
        self.pos = list(self.spawns[: self.n_agents])
        self.done = False
        self._reset_extra(rng)
        return self.observe()

    def _reset_extra(self, rng):
        pass

    def _propose(self, joint_action):
        out = []
        for p, a in zip(self.pos, joint_action):
            q = _add(p, MOVES[int(a)])
            out.append(q if self.passable(q) else p)
        return out

    def passable(self, p):
        return self.free(p)

    def step(self, joint_action, rng):
        if self.done:
            return self.observe(), 0.0, True
        self.pos = resolve_moves(self.pos, self._propose(joint_action))
        reward, self.done = self._reward()
        return self.observe(), reward, self.done


class GoTogether(GridEnv):
    """Both agents must stand on goal tiles at the same time (+10, episode ends).

    Every step the pair is co-located or farther than ``max_dist`` apart
    (Chebyshev distance) costs ``penalty``.
    """

    map_name = "go_together"
    name = "go_together"

    def __init__(self, tiles=None, horizon=50, gamma=0.95, penalty=-0.1, max_dist=3, goal_reward=10.0):
        super().__init__(tiles, horizon, gamma)
        self.goals = set(self.tiles.cells("G"))
        self.penalty = penalty
        self.max_dist = max_dist
        self.goal_reward = goal_reward

    def _reward(self):
        if all(p in self.goals for p in self.pos):
            return self.goal_reward, True
        (r1, c1), (r2, c2) = self.pos
        d = max(abs(r1 - r2), abs(c1 - c2))
        return (self.penalty if d == 0 or d > self.max_dist else 0.0), False


class FindTreasure(GridEnv):
    """Two rooms joined by a door that is open only while some agent stands
    on a switch. The first agent to reach the treasure earns +100."""

    map_name = "find_treasure"
    name = "find_treasure"

    def __init__(self, tiles=None, horizon=50, gamma=0.95, treasure_reward=100.0):
        super().__init__(tiles, horizon, gamma)
        self.switches = set(self.tiles.cells("S"))
        self.doors = set(self.tiles.cells("D"))
        self.treasure = set(self.tiles.cells("T"))
        self.treasure_reward = treasure_reward
        self._open = False

    def passable(self, p):
        return self.free(p) and (p not in self.doors or self._open)

    def _reset_extra(self, rng):
        self._open = False

    def step(self, joint_action, rng):
        self._open = any(p in self.switches for p in self.pos)
        return super().step(joint_action, rng)

    def _reward(self):
        if any(p in self.treasure for p in self.pos):
            return self.treasure_reward, True
        return 0.0, False


class Cleaner(GridEnv):
    """+1 for every floor cell an agent enters for the first time; the
    episode ends once every cell is clean."""

    map_name = "cleaner"
    name = "cleaner"

    def __init__(self, tiles=None, horizon=50, gamma=0.95):
        super().__init__(tiles, horizon, gamma)
        self.floor = {(r, c) for r in range(self.height) for c in range(self.width) if not self.tiles.wall[r, c]}

    def _reset_extra(self, rng):
        self.clean = set(self.pos)

    def _reward(self):
        new = {p for p in self.pos if p not in self.clean}
        self.clean |= new
        return float(len(new)), self.clean >= self.floor


class MoveBox(GridEnv):
    """A box that moves only when both agents are next to it and push in the
    same direction. Delivering it to ``g`` pays +10, to ``G`` +100.

    Observations are (own cell, box cell) pairs.
    """

    map_name = "move_box"
    name = "move_box"

    def __init__(self, tiles=None, horizon=50, gamma=0.95, near_reward=10.0, far_reward=100.0):
        super().__init__(tiles, horizon, gamma)
        self.box_start = self.tiles.cell("B")
        self.near = set(self.tiles.cells("g"))
        self.far = set(self.tiles.cells("G"))
        self.near_reward = near_reward
        self.far_reward = far_reward
        self.n_observations = (self.n_cells * self.n_cells,) * self.n_agents
        self.box = None

    def observe(self):
        b = self.cell_index(self.box)
        return tuple(self.cell_index(p) * self.n_cells + b for p in self.pos)

    def _reset_extra(self, rng):
        self.box = self.box_start

    def passable(self, p):
        return self.free(p) and p != self.box

    def step(self, joint_action, rng):
        if self.done:
            return self.observe(), 0.0, True
        acts = [int(a) for a in joint_action]
        a0 = acts[0]
        adjacent = all(abs(p[0] - self.box[0]) + abs(p[1] - self.box[1]) == 1 for p in self.pos)
        if a0 != STAY and adjacent and all(a == a0 for a in acts):
            d = MOVES[a0]
            box2 = _add(self.box, d)
            targets = [_add(p, d) for p in self.pos]
            ok = self.free(box2) and all(t == self.box or (self.free(t) and t != box2) for t in targets)
            if ok:
                self.box = box2
                self.pos = targets
                if box2 in self.near:
                    self.done = True
                    return self.observe(), self.near_reward, True
                if box2 in self.far:
                    self.done = True
                    return self.observe(), self.far_reward, True
                return self.observe(), 0.0, False
        self.pos = resolve_moves(self.pos, self._propose(acts))
        return self.observe(), 0.0, False


class CaptureTarget(GenerativeEnv):
    """Two agents on an ``m x m`` torus chase a target that moves one cell
    right per step. Each move slips to a uniformly random neighbouring cell
    with probability ``slip``; each agent's view of the target is replaced
    by a null symbol with probability ``blur``. Both agents on the target
    cell ends the episode with +1.

    Observation of agent i: ``own_cell * (m*m + 1) + target_cell`` with the
    null symbol encoded as ``m*m``.
    """

    name = "capture_target"
    n_agents = 2

    def __init__(self, m=4, slip=0.1, blur=0.3, horizon=60, gamma=0.95):
        if m < 2:
            raise ConfigurationError("capture target needs m >= 2")
        self.m = int(m)
        self.slip = slip
        self.blur = blur
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.n_cells = self.m * self.m
        self.null = self.n_cells
        self.n_actions = (5, 5)
        self.n_observations = (self.n_cells * (self.n_cells + 1),) * 2
        self.pos = None
        self.target = None
        self.done = False
        self.last_info = {}

    def _wrap(self, p):
        return (p[0] % self.m, p[1] % self.m)

    def _cell(self, p):
        return p[0] * self.m + p[1]

    def observe(self, rng):
        blurred = rng.random(self.n_agents) < self.blur
        self.last_info["blurred"] = blurred
        t = self._cell(self.target)
        return tuple(self._cell(p) * (self.n_cells + 1) + (self.null if b else t) for p, b in zip(self.pos, blurred))

    def reset(self, rng):
        cells = rng.choice(self.n_cells, size=3, replace=False)
        self.pos = [divmod(int(c), self.m) for c in cells[:2]]
        self.target = divmod(int(cells[2]), self.m)
        self.done = False
        self.last_info = {"slipped": np.zeros(2, dtype=bool)}
        return self.observe(rng)

    def step(self, joint_action, rng):
        if self.done:
            return self.observe(rng), 0.0, True
        slipped = np.zeros(self.n_agents, dtype=bool)
        new = []
        for i, (p, a) in enumerate(zip(self.pos, joint_action)):
            if rng.random() < self.slip:
                slipped[i] = True
                d = MOVES[int(rng.integers(4))]
            else:
                d = MOVES[int(a)]
            new.append(self._wrap(_add(p, d)))
        self.pos = new
        self.last_info = {"slipped": slipped}
        if all(p == self.target for p in self.pos):
            self.done = True
            return self.observe(rng), 1.0, True
        self.target = self._wrap(_add(self.target, MOVES[RIGHT]))
        return self.observe(rng), 0.0, False


FORWARD, TURN_LEFT, TURN_RIGHT, WAIT = range(4)
HEADINGS = [(-1, 0), (0, 1), (1, 0), (0, -1)]  # up, right, down, left
EMPTY, TEAMMATE, BOX, BOUNDARY = range(4)


class SmallBoxPushing(GenerativeEnv):
    """Agents push small boxes to the goal row (row 0) on an ``m x m`` grid.

    Actions: move forward, turn left, turn right, stay. Each agent only sees
    the status of the cell it faces (empty, teammate, box, boundary). Moving
    forward into a box pushes it one cell if the cell beyond is free. Any box
    reaching row 0 pays +100 and ends the episode. Agents act in index order
    within a step.
    """

    name = "small_box_pushing"

    def __init__(self, m=4, n_agents=2, horizon=100, gamma=0.98, goal_reward=100.0):
        if m < 4:
            raise ConfigurationError("small box pushing needs m >= 4")
        if n_agents not in (2, 3):
            raise ConfigurationError("small box pushing supports 2 or 3 agents")
        self.m = int(m)
        self.n_agents = int(n_agents)
        self.horizon = int(horizon)
        self.gamma = float(gamma)
        self.goal_reward = goal_reward
        self.n_actions = (4,) * self.n_agents
        self.n_observations = (4,) * self.n_agents
        cols = [1, self.m - 2, self.m - 1][: self.n_agents]
        self.start_agents = [(self.m - 1, c) for c in cols]
        self.start_boxes = [(self.m // 2, 1), (self.m // 2, self.m - 2)]
        self.done = False

    def inside(self, p):
        return 0 <= p[0] < self.m and 0 <= p[1] < self.m

    def front(self, i):
        return _add(self.pos[i], HEADINGS[self.heading[i]])

    def status(self, i):
        f = self.front(i)
        if not self.inside(f):
            return BOUNDARY
        if f in self.boxes:
            return BOX
        if any(j != i and p == f for j, p in enumerate(self.pos)):
            return TEAMMATE
        return EMPTY

    def observe(self):
        return tuple(self.status(i) for i in range(self.n_agents))

    def reset(self, rng):
        self.pos = list(self.start_agents)
        self.heading = [0] * self.n_agents
        self.boxes = list(self.start_boxes)
        self.done = False
        return self.observe()

    def step(self, joint_action, rng):
        if self.done:
            return self.observe(), 0.0, True
        for i, a in enumerate(joint_action):
            a = int(a)
            if a == TURN_LEFT:
                self.heading[i] = (self.heading[i] - 1) % 4
            elif a == TURN_RIGHT:
                self.heading[i] = (self.heading[i] + 1) % 4
            elif a == FORWARD:
                f = self.front(i)
                if not self.inside(f) or any(j != i and p == f for j, p in enumerate(self.pos)):
                    continue
                if f in self.boxes:
                    beyond = _add(f, HEADINGS[self.heading[i]])
                    if not self.inside(beyond) or beyond in self.boxes or beyond in self.pos:
                        continue
                    self.boxes[self.boxes.index(f)] = beyond
                    if beyond[0] == 0:
                        self.done = True
                self.pos[i] = f
        if self.done:
            return self.observe(), self.goal_reward, True
        return self.observe(), 0.0, False


GRIDWORLDS = {
    "go_together": GoTogether,
    "find_treasure": FindTreasure,
    "cleaner": Cleaner,
    "move_box": MoveBox,
}


def build_gridworld(name, **params):
    try:
        cls = GRIDWORLDS[name]
    except KeyError:
        raise ConfigurationError(f"unknown grid world {name!r}; choose from {sorted(GRIDWORLDS)}") from None
    return cls(**params)


def build_capture_target(m=4, **params):
    return CaptureTarget(m, **params)


def build_small_box_pushing(m=4, n_agents=2, **params):
    return SmallBoxPushing(m, n_agents, **params)
