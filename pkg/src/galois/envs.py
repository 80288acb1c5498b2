"""Deterministic seeded gridworlds: DoorKey, BoxKey, UnlockPickup, MultiRoom,
plus the two sem-mod variants.

Coordinates are (row, col) with row 0 at the top; north decreases the row.
Movement is absolute four-direction plus Pick/Toggle/Drop/Noop.  Keys and
boxes block movement; open doors and the goal tile are walkable.  Doors stay
open once opened.  Every transition costs -0.01, each first-time sub-task
pays +0.20, and completing the task pays +1.00.

States are immutable; step() returns a fresh state, so many environments can
run concurrently without sharing anything mutable.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import ConfigError, GenerationError, LifecycleError

TASKS = (
    "doorkey",
    "boxkey",
    "unlockpickup",
    "multiroom",
    "boxkey-semmod",
    "unlockpickup-semmod",
)

STEP_PENALTY = -0.01
SUBTASK_REWARD = 0.20
COMPLETION_REWARD = 1.00
GENERATION_RETRIES = 50

# Sub-task reward events, granted once each.
TASK_EVENTS = {
    "doorkey": ("key_picked", "door_opened"),
    "boxkey": ("box_opened", "key_picked", "door_opened"),
    "boxkey-semmod": ("box_opened", "key_picked", "door_opened"),
    "unlockpickup": ("key_picked", "door_opened", "key_dropped"),
    "unlockpickup-semmod": ("key_picked", "door_opened", "key_dropped"),
    "multiroom": ("opened_red", "opened_yellow", "opened_blue"),
}


class EnvAction(Enum):
    MOVE_NORTH = "north"
    MOVE_SOUTH = "south"
    MOVE_EAST = "east"
    MOVE_WEST = "west"
    PICK = "pick"
    TOGGLE = "toggle"
    DROP = "drop"
    NOOP = "noop"


MOVE_DELTAS = {
    EnvAction.MOVE_NORTH: (-1, 0),
    EnvAction.MOVE_SOUTH: (1, 0),
    EnvAction.MOVE_EAST: (0, 1),
    EnvAction.MOVE_WEST: (0, -1),
}

# Fixed scan order for Pick/Toggle/Drop targets and BFS expansion.
NEIGHBOR_ORDER = ((-1, 0), (0, 1), (1, 0), (0, -1))  # N, E, S, W


@dataclass(frozen=True)
class EnvConfig:
    task: str
    size: int
    seed: int
    max_steps: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.size % 2 != 0 or not 6 <= self.size <= 20:
            raise ConfigError(f"size must be even and in [6, 20], got {self.size}")
        if self.task == "multiroom" and self.size < 8:
            raise ConfigError("multiroom needs size >= 8 for its four rooms")

    @property
    def width(self) -> int:
        return self.size

    @property
    def height(self) -> int:
        # UnlockPickup is two size/2-sided rooms side by side (e.g. 12x6).
        if self.task.startswith("unlockpickup"):
            return self.size // 2
        return self.size

    @property
    def step_limit(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        if self.task == "multiroom":
            # Tight linear budget; the room chain makes useful episodes long
            # relative to it, unlike the open single-wall tasks.
            return 5 * self.size
        return 4 * self.width * self.height


@dataclass(frozen=True)
class Door:
    pos: tuple[int, int]
    color: str
    open: bool
    locked: bool


@dataclass(frozen=True)
class Key:
    pos: tuple[int, int]
    color: str


@dataclass(frozen=True)
class Box:
    pos: tuple[int, int]
    color: str
    contains_key: bool
    pickable: bool


@dataclass(frozen=True)
class GridState:
    config: EnvConfig
    walls: frozenset
    doors: tuple[Door, ...]
    keys: tuple[Key, ...]
    boxes: tuple[Box, ...]
    goal: tuple[int, int] | None
    agent: tuple[int, int]
    carrying: str | None = None
    step_count: int = 0
    done: bool = False
    timeout: bool = False
    events: frozenset = field(default_factory=frozenset)
    grid_version: int = 0

    def door_at(self, pos) -> Door | None:
        for d in self.doors:
            if d.pos == pos:
                return d
        return None

    def key_at(self, pos) -> Key | None:
        for k in self.keys:
            if k.pos == pos:
                return k
        return None

    def box_at(self, pos) -> Box | None:
        for b in self.boxes:
            if b.pos == pos:
                return b
        return None

    def in_bounds(self, pos) -> bool:
        r, c = pos
        return 0 <= r < self.config.height and 0 <= c < self.config.width

    def passable(self, pos) -> bool:
        """Whether the agent may stand on this cell."""
        if not self.in_bounds(pos) or pos in self.walls:
            return False
        door = self.door_at(pos)
        if door is not None:
            return door.open
        if self.key_at(pos) is not None or self.box_at(pos) is not None:
            return False
        return True

    def state_hash(self) -> str:
        payload = repr(
            (
                self.agent,
                self.carrying,
                tuple(sorted(self.walls)),
                self.doors,
                self.keys,
                self.boxes,
                self.goal,
                self.done,
                tuple(sorted(self.events)),
            )
        )
        return hashlib.sha1(payload.encode()).hexdigest()[:16]

    def render(self) -> str:
        """ASCII view: '#' wall, '.' floor, 'A' agent, 'k' key, 'b' box,
        'G' goal, doors 'D' locked, 'd' closed, '/' open."""
        rows = []
        for r in range(self.config.height):
            row = []
            for c in range(self.config.width):
                pos = (r, c)
                ch = "."
                if pos in self.walls:
                    ch = "#"
                door = self.door_at(pos)
                if door is not None:
                    ch = "/" if door.open else ("D" if door.locked else "d")
                if self.goal == pos:
                    ch = "G"
                if self.box_at(pos) is not None:
                    ch = "b"
                if self.key_at(pos) is not None:
                    ch = "k"
                if self.agent == pos:
                    ch = "A"
                row.append(ch)
            rows.append("".join(row))
        return "\n".join(rows)


RENDER_LEGEND = (
    "# wall   . floor   A agent   k key   b box   G goal   "
    "D locked door   d closed door   / open door"
)


def _rng_for(config: EnvConfig, attempt: int) -> random.Random:
    mix = (
        config.seed * 1_000_003
        + config.size * 10_007
        + TASKS.index(config.task) * 101
        + attempt * 7_919
    )
    return random.Random(mix)


def _border_walls(width: int, height: int) -> set:
    walls = set()
    for r in range(height):
        walls.add((r, 0))
        walls.add((r, width - 1))
    for c in range(width):
        walls.add((0, c))
        walls.add((height - 1, c))
    return walls


def _sample_cells(rng: random.Random, cells: list, k: int) -> list:
    picked = rng.sample(sorted(cells), k)
    return picked


def _gen_split_room(config: EnvConfig, rng: random.Random):
    """Shared layout for doorkey / boxkey(-semmod): one vertical wall with a
    locked door; agent and key material on the left, goal on the right."""
    w, h = config.width, config.height
    walls = _border_walls(w, h)
    wall_col = rng.randrange(2, w - 2)
    door_row = rng.randrange(1, h - 1)
    for r in range(1, h - 1):
        if r != door_row:
            walls.add((r, wall_col))
    left = [(r, c) for r in range(1, h - 1) for c in range(1, wall_col)]
    right = [(r, c) for r in range(1, h - 1) for c in range(wall_col + 1, w - 1)]
    door = Door((door_row, wall_col), "yellow", open=False, locked=True)
    goal = _sample_cells(rng, right, 1)[0]
    return walls, door, left, goal


def _generate(config: EnvConfig, rng: random.Random) -> GridState:
    task = config.task
    if task == "doorkey":
        walls, door, left, goal = _gen_split_room(config, rng)
        agent, key_pos = _sample_cells(rng, left, 2)
        return GridState(
            config=config,
            walls=frozenset(walls),
            doors=(door,),
            keys=(Key(key_pos, "yellow"),),
            boxes=(),
            goal=goal,
            agent=agent,
        )
    if task == "boxkey":
        walls, door, left, goal = _gen_split_room(config, rng)
        agent, box_pos = _sample_cells(rng, left, 2)
        return GridState(
            config=config,
            walls=frozenset(walls),
            doors=(door,),
            keys=(),
            boxes=(Box(box_pos, "grey", contains_key=True, pickable=False),),
            goal=goal,
            agent=agent,
        )
    if task == "boxkey-semmod":
        walls, door, left, goal = _gen_split_room(config, rng)
        agent, box_pos, key_pos = _sample_cells(rng, left, 3)
        return GridState(
            config=config,
            walls=frozenset(walls),
            doors=(door,),
            keys=(Key(key_pos, "yellow"),),
            boxes=(Box(box_pos, "grey", contains_key=False, pickable=False),),
            goal=goal,
            agent=agent,
        )
    if task.startswith("unlockpickup"):
        w, h = config.width, config.height
        walls = _border_walls(w, h)
        div_col = w // 2
        door_row = rng.randrange(1, h - 1)
        for r in range(1, h - 1):
            if r != door_row:
                walls.add((r, div_col))
        left = [(r, c) for r in range(1, h - 1) for c in range(1, div_col)]
        right = [(r, c) for r in range(1, h - 1) for c in range(div_col + 1, w - 1)]
        semmod = task.endswith("semmod")
        door = Door((door_row, div_col), "yellow", open=semmod, locked=not semmod)
        box_pos = _sample_cells(rng, right, 1)[0]
        if semmod:
            agent = _sample_cells(rng, left, 1)[0]
            keys = ()
        else:
            agent, key_pos = _sample_cells(rng, left, 2)
            keys = (Key(key_pos, "yellow"),)
        return GridState(
            config=config,
            walls=frozenset(walls),
            doors=(door,),
            keys=keys,
            boxes=(Box(box_pos, "green", contains_key=False, pickable=True),),
            goal=None,
            agent=agent,
        )
    if task == "multiroom":
        return _generate_multiroom(config, rng)
    raise ConfigError(f"unknown task {task!r}")  # pragma: no cover


def _generate_multiroom(config: EnvConfig, rng: random.Random) -> GridState:
    """Four quadrant rooms chained by three colored, unlocked doors."""
    n = config.size
    walls = _border_walls(n, n)
    hr = rng.randrange(3, n - 3)
    vc = rng.randrange(3, n - 3)
    for c in range(1, n - 1):
        walls.add((hr, c))
    for r in range(1, n - 1):
        walls.add((r, vc))

    rooms = {
        "TL": [(r, c) for r in range(1, hr) for c in range(1, vc)],
        "TR": [(r, c) for r in range(1, hr) for c in range(vc + 1, n - 1)],
        "BL": [(r, c) for r in range(hr + 1, n - 1) for c in range(1, vc)],
        "BR": [(r, c) for r in range(hr + 1, n - 1) for c in range(vc + 1, n - 1)],
    }
    cycle = ["TL", "TR", "BR", "BL"]
    start = rng.randrange(4)
    direction = rng.choice([1, -1])
    chain = [cycle[(start + direction * i) % 4] for i in range(4)]

    def wall_gap(a: str, b: str) -> tuple[int, int]:
        pair = {a, b}
        if pair == {"TL", "TR"}:
            return (rng.randrange(1, hr), vc)
        if pair == {"BL", "BR"}:
            return (rng.randrange(hr + 1, n - 1), vc)
        if pair == {"TL", "BL"}:
            return (hr, rng.randrange(1, vc))
        if pair == {"TR", "BR"}:
            return (hr, rng.randrange(vc + 1, n - 1))
        raise GenerationError(f"rooms {a}, {b} not adjacent")  # pragma: no cover

    colors = ["red", "yellow", "blue"]
    rng.shuffle(colors)
    doors = tuple(
        Door(wall_gap(chain[i], chain[i + 1]), colors[i], open=False, locked=False)
        for i in range(3)
    )
    for d in doors:
        walls.discard(d.pos)
    agent = _sample_cells(rng, rooms[chain[0]], 1)[0]
    goal = _sample_cells(rng, rooms[chain[3]], 1)[0]
    return GridState(
        config=config,
        walls=frozenset(walls),
        doors=doors,
        keys=(),
        boxes=(),
        goal=goal,
        agent=agent,
    )


def reset(config: EnvConfig) -> GridState:
    """Deterministic solvable layout for (task, size, seed)."""
    for attempt in range(GENERATION_RETRIES):
        state = _generate(config, _rng_for(config, attempt))
        if solvability_check(state):
            return state
    raise GenerationError(
        f"no solvable layout for {config.task} size {config.size} seed {config.seed}"
    )


def _completed(state: GridState, new_agent) -> bool:
    if state.config.task.startswith("unlockpickup"):
        return False  # completion is picking the target box, not a move
    return state.goal is not None and new_agent == state.goal


def step(state: GridState, action: EnvAction) -> tuple[GridState, float, bool]:
    """Apply one action.  Blocked moves and failed interactions still cost the
    step penalty.  Raises LifecycleError once done."""
    if state.done:
        raise LifecycleError("step() called on a finished episode")

    reward = STEP_PENALTY
    agent = state.agent
    carrying = state.carrying
    doors = state.doors
    keys = state.keys
    boxes = state.boxes
    events = set(state.events)
    done = False
    mutated = False

    if action in MOVE_DELTAS:
        dr, dc = MOVE_DELTAS[action]
        target = (agent[0] + dr, agent[1] + dc)
        if state.passable(target):
            agent = target
            if _completed(state, agent):
                reward += COMPLETION_REWARD
                done = True
    elif action == EnvAction.PICK:
        if carrying is None:
            for dr, dc in NEIGHBOR_ORDER:
                pos = (agent[0] + dr, agent[1] + dc)
                key = state.key_at(pos)
                if key is not None:
                    keys = tuple(k for k in keys if k is not key)
                    carrying = "key"
                    mutated = True
                    if "key_picked" not in events and "key_picked" in TASK_EVENTS.get(
                        state.config.task, ()
                    ):
                        events.add("key_picked")
                        reward += SUBTASK_REWARD
                    break
                box = state.box_at(pos)
                if box is not None and box.pickable:
                    boxes = tuple(b for b in boxes if b is not box)
                    reward += COMPLETION_REWARD
                    done = True
                    mutated = True
                    break
    elif action == EnvAction.TOGGLE:
        for dr, dc in NEIGHBOR_ORDER:
            pos = (agent[0] + dr, agent[1] + dc)
            box = state.box_at(pos)
            if box is not None:
                # Opening destroys the box; a contained key appears in place.
                # Toggling the pickable target box also destroys it, which
                # leaves that task unwinnable by design.
                boxes = tuple(b for b in boxes if b is not box)
                if box.contains_key:
                    keys = keys + (Key(box.pos, "yellow"),)
                mutated = True
                if "box_opened" in TASK_EVENTS.get(state.config.task, ()) and (
                    "box_opened" not in events
                ):
                    events.add("box_opened")
                    reward += SUBTASK_REWARD
                break
            door = state.door_at(pos)
            if door is not None and not door.open:
                if door.locked and carrying != "key":
                    continue  # locked and no key: not an applicable target
                doors = tuple(
                    replace(d, open=True) if d is door else d for d in doors
                )
                mutated = True
                if state.config.task == "multiroom":
                    ev = f"opened_{door.color}"
                else:
                    ev = "door_opened"
                if ev in TASK_EVENTS.get(state.config.task, ()) and ev not in events:
                    events.add(ev)
                    reward += SUBTASK_REWARD
                break
    elif action == EnvAction.DROP:
        if carrying is not None:
            spot = drop_target(state)
            if spot is not None:
                keys = keys + (Key(spot, "yellow"),)
                carrying = None
                mutated = True
                # the drop sub-task means parting with the key once the door
                # is open; dropping earlier is a detour, not progress
                if ("key_dropped" in TASK_EVENTS.get(state.config.task, ())
                        and "key_dropped" not in events
                        and all(d.open for d in state.doors)):
                    events.add("key_dropped")
                    reward += SUBTASK_REWARD
    elif action == EnvAction.NOOP:
        pass
    else:  # pragma: no cover
        raise ConfigError(f"unknown action {action}")

    step_count = state.step_count + 1
    timeout = False
    if not done and step_count >= state.config.step_limit:
        done = True
        timeout = True

    new_state = GridState(
        config=state.config,
        walls=state.walls,
        doors=doors,
        keys=keys,
        boxes=boxes,
        goal=state.goal,
        agent=agent,
        carrying=carrying,
        step_count=step_count,
        done=done,
        timeout=timeout,
        events=frozenset(events),
        grid_version=state.grid_version + (1 if mutated else 0),
    )
    return new_state, reward, done


def drop_target(state: GridState) -> tuple[int, int] | None:
    """First free floor cell adjacent to the agent in N,E,S,W order.

    The same rule resolves the drop-key subgoal, so navigation and the
    actual drop always agree on the cell.
    """
    for dr, dc in NEIGHBOR_ORDER:
        pos = (state.agent[0] + dr, state.agent[1] + dc)
        if not state.passable(pos):
            continue
        if state.goal == pos or state.door_at(pos) is not None:
            continue
        return pos
    return None


# ---------------------------------------------------------------------------
# Scripted breadth-first planner: solvability checks and oracle trajectories.
# ---------------------------------------------------------------------------


def bfs_distances(state: GridState, target: tuple[int, int]) -> dict:
    """BFS distance-to-target over passable cells, closed doors as walls.

    The target cell gets distance 0 even when impassable (key, box, closed
    door), so its passable neighbors sit at distance 1; paths never traverse
    any other impassable cell.
    """
    dist = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for pos in frontier:
            if pos != target and not state.passable(pos):
                continue
            for dr, dc in NEIGHBOR_ORDER:
                nb = (pos[0] + dr, pos[1] + dc)
                if nb in dist or not state.in_bounds(nb):
                    continue
                if not state.passable(nb):
                    continue
                dist[nb] = dist[pos] + 1
                nxt.append(nb)
        frontier = nxt
    return dist


_MOVE_OF_DELTA = {
    (-1, 0): EnvAction.MOVE_NORTH,
    (0, 1): EnvAction.MOVE_EAST,
    (1, 0): EnvAction.MOVE_SOUTH,
    (0, -1): EnvAction.MOVE_WEST,
}


def _walk(state: GridState, target, until_adjacent: bool) -> GridState:
    """Follow decreasing BFS distance to `target`.  The grid does not mutate
    while walking, so one distance field serves the whole segment."""
    dist = bfs_distances(state, target)

    def arrived(s):
        if until_adjacent:
            return abs(s.agent[0] - target[0]) + abs(s.agent[1] - target[1]) <= 1
        return s.agent == target

    guard = state.config.width * state.config.height * 4
    while not arrived(state):
        best = None
        for dr, dc in NEIGHBOR_ORDER:
            nb = (state.agent[0] + dr, state.agent[1] + dc)
            if nb in dist and state.passable(nb):
                cand = (dist[nb], nb[0], nb[1], _MOVE_OF_DELTA[(dr, dc)])
                if best is None or cand < best:
                    best = cand
        if best is None:
            raise GenerationError("no path to target")
        state, _, done = step(state, best[3])
        if done:
            return state
        guard -= 1
        if guard <= 0:
            raise GenerationError("planner ran out of steps")
    return state


def _walk_adjacent(state: GridState, target) -> GridState:
    return _walk(state, target, until_adjacent=True)


def _walk_onto(state: GridState, target) -> GridState:
    return _walk(state, target, until_adjacent=False)


def scripted_rollout(state: GridState) -> tuple[GridState, int] | None:
    """Run the task's subgoal chain with BFS navigation.

    Returns (final state, steps taken) on completion, None if the plan fails.
    Used by the generator's solvability check and by reward-identity tests.
    """
    task = state.config.task
    try:
        if task == "doorkey" or task == "boxkey" or task == "boxkey-semmod":
            if task == "boxkey":
                box = state.boxes[0]
                state = _walk_adjacent(state, box.pos)
                state, _, _ = step(state, EnvAction.TOGGLE)
            state = _walk_adjacent(state, state.keys[0].pos)
            state, _, _ = step(state, EnvAction.PICK)
            door = state.doors[0]
            state = _walk_adjacent(state, door.pos)
            state, _, _ = step(state, EnvAction.TOGGLE)
            state = _walk_onto(state, state.goal)
        elif task == "unlockpickup":
            state = _walk_adjacent(state, state.keys[0].pos)
            state, _, _ = step(state, EnvAction.PICK)
            door = state.doors[0]
            state = _walk_adjacent(state, door.pos)
            state, _, _ = step(state, EnvAction.TOGGLE)
            state, _, _ = step(state, EnvAction.DROP)
            state = _walk_adjacent(state, state.boxes[0].pos)
            state, _, _ = step(state, EnvAction.PICK)
        elif task == "unlockpickup-semmod":
            state = _walk_adjacent(state, state.boxes[0].pos)
            state, _, _ = step(state, EnvAction.PICK)
        elif task == "multiroom":
            for _ in range(3):
                reachable = [
                    d
                    for d in state.doors
                    if not d.open and _door_reachable(state, d)
                ]
                if not reachable:
                    return None
                door = reachable[0]
                state = _walk_adjacent(state, door.pos)
                state, _, _ = step(state, EnvAction.TOGGLE)
            state = _walk_onto(state, state.goal)
        else:  # pragma: no cover
            raise ConfigError(task)
    except (GenerationError, LifecycleError):
        return None
    if not state.done or state.timeout:
        return None
    return state, state.step_count


def _door_reachable(state: GridState, door: Door) -> bool:
    return state.agent in bfs_distances(state, door.pos)


def solvability_check(state: GridState) -> bool:
    """True iff the scripted breadth-first plan completes the task."""
    unlimited = replace(
        state,
        config=EnvConfig(
            task=state.config.task,
            size=state.config.size,
            seed=state.config.seed,
            max_steps=10 * state.config.width * state.config.height,
        ),
    )
    return scripted_rollout(unlimited) is not None


def normalized_return(state: GridState) -> float:
    """Size-stable evaluation return: 0 on failure, else scaled by the share
    of the step budget left, matching the usual gridworld convention."""
    if not state.done or state.timeout:
        return 0.0
    return 1.0 - 0.9 * (state.step_count / state.config.step_limit)
