"""Deterministic, seedable 2D grid environments with hazard tiles and pickup objects.

Two layouts: "scatter" (hazard tiles and reward objects strewn over the grid)
and "lavawall" (a lava wall with a single gap separating the agent from the
rewards, used for zero-shot transfer).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Terrain layer cell kinds.
FLOOR = 0
WALL = 1
LAVA = 2
WATER = 3
GRASS = 4

# Object layer cell kinds.
NO_OBJECT = 0
KEY = 1
BALL = 2
BOX = 3

HAZARD_KINDS = {"lava": LAVA, "water": WATER, "grass": GRASS}
OBJECT_KINDS = {"key": KEY, "ball": BALL, "box": BOX}
TERRAIN_NAMES = {v: k for k, v in HAZARD_KINDS.items()}

# Actions.
TURN_LEFT = 0
TURN_RIGHT = 1
FORWARD = 2
PICKUP = 3
N_ACTIONS = 4

# Direction order N, E, S, W; (row, col) deltas.
DIR_VECS = [(-1, 0), (0, 1), (1, 0), (0, -1)]

VIEW_SIZE = 7
OBS_SHAPE = (VIEW_SIZE, VIEW_SIZE, 3)

_TERRAIN_CHARS = {FLOOR: ".", WALL: "#", LAVA: "L", WATER: "W", GRASS: "G"}
_OBJECT_CHARS = {KEY: "k", BALL: "b", BOX: "x"}


class LayoutError(ValueError):
    """Raised when a GridConfig cannot be realized on the grid."""


class EpisodeFinishedError(RuntimeError):
    """Raised when step() is called after the episode has ended."""


@dataclass
class GridConfig:
    width: int = 12
    height: int = 12
    entity_counts: dict = field(
        default_factory=lambda: {"lava": 3, "water": 3, "grass": 3}
    )
    reward_objects: dict = field(
        default_factory=lambda: {"key": 1, "ball": 1, "box": 1}
    )
    horizon: int = 200
    layout_mode: str = "scatter"

    def validate(self) -> None:
        if self.width < 4 or self.height < 4:
            raise LayoutError("grid must be at least 4x4 to have an interior")
        if self.horizon < 1:
            raise LayoutError("horizon must be >= 1")
        if self.layout_mode not in ("scatter", "lavawall"):
            raise LayoutError(f"unknown layout_mode {self.layout_mode!r}")
        for name, count in {**self.entity_counts, **self.reward_objects}.items():
            if count < 0:
                raise LayoutError(f"negative count for {name!r}")
            if name not in HAZARD_KINDS and name not in OBJECT_KINDS:
                raise LayoutError(f"unknown entity kind {name!r}")
        interior = (self.width - 2) * (self.height - 2)
        occupied = sum(self.entity_counts.values()) + sum(
            self.reward_objects.values()
        ) + 1  # agent
        if occupied > interior:
            raise LayoutError(
                f"{occupied} occupied cells do not fit in a "
                f"{self.width}x{self.height} interior of {interior} cells"
            )


@dataclass
class StepResult:
    obs: np.ndarray
    reward: float
    events: list
    terminated: bool
    truncated: bool


class GridEnv:
    """Single-owner grid environment.

    The env itself never terminates an episode: constraint violation is judged
    outside (by the checker or the learned predictor), which calls
    ``mark_terminated()``.  The env only truncates at the horizon.
    """

    def __init__(self, config: GridConfig, seed: int):
        config.validate()
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        self._layout(rng)
        self._initial = (
            self.terrain.copy(),
            self.objects.copy(),
            self.agent_pos,
            self.agent_dir,
        )
        self.step_count = 0
        self.collected: set = set()
        self.done = False

    # -- layout ---------------------------------------------------------

    def _layout(self, rng: np.random.Generator) -> None:
        h, w = self.config.height, self.config.width
        self.terrain = np.full((h, w), FLOOR, dtype=np.int8)
        self.terrain[0, :] = WALL
        self.terrain[-1, :] = WALL
        self.terrain[:, 0] = WALL
        self.terrain[:, -1] = WALL
        self.objects = np.zeros((h, w), dtype=np.int8)
        if self.config.layout_mode == "scatter":
            self._layout_scatter(rng)
        else:
            self._layout_lavawall(rng)

    def _layout_scatter(self, rng: np.random.Generator) -> None:
        h, w = self.config.height, self.config.width
        free = [(r, c) for r in range(1, h - 1) for c in range(1, w - 1)]
        n_needed = (
            sum(self.config.entity_counts.values())
            + sum(self.config.reward_objects.values())
            + 1
        )
        idx = rng.choice(len(free), size=n_needed, replace=False)
        cells = [free[i] for i in idx]
        pos = 0
        for name, count in sorted(self.config.entity_counts.items()):
            for _ in range(count):
                r, c = cells[pos]
                pos += 1
                self.terrain[r, c] = HAZARD_KINDS[name]
        for name, count in sorted(self.config.reward_objects.items()):
            for _ in range(count):
                r, c = cells[pos]
                pos += 1
                self.objects[r, c] = OBJECT_KINDS[name]
        self.agent_pos = cells[pos]
        self.agent_dir = int(rng.integers(4))

    def _layout_lavawall(self, rng: np.random.Generator) -> None:
        h, w = self.config.height, self.config.width
        wall_col = w // 2
        gap_row = int(rng.integers(1, h - 1))
        for r in range(1, h - 1):
            if r != gap_row:
                self.terrain[r, wall_col] = LAVA
        left = [(r, c) for r in range(1, h - 1) for c in range(1, wall_col)]
        right = [(r, c) for r in range(1, h - 1) for c in range(wall_col + 1, w - 1)]
        n_obj = sum(self.config.reward_objects.values())
        if n_obj > len(right):
            raise LayoutError("too many reward objects for the lavawall layout")
        ridx = rng.choice(len(right), size=n_obj, replace=False)
        pos = 0
        for name, count in sorted(self.config.reward_objects.items()):
            for _ in range(count):
                r, c = right[ridx[pos]]
                pos += 1
                self.objects[r, c] = OBJECT_KINDS[name]
        self.agent_pos = left[int(rng.integers(len(left)))]
        self.agent_dir = int(rng.integers(4))

    # -- episode API ----------------------------------------------------

    def reset(self) -> np.ndarray:
        terrain, objects, pos, d = self._initial
        self.terrain = terrain.copy()
        self.objects = objects.copy()
        self.agent_pos = pos
        self.agent_dir = d
        self.step_count = 0
        self.collected = set()
        self.done = False
        return self.observe()

    def mark_terminated(self) -> None:
        """External driver declares the episode over (constraint violated)."""
        self.done = True

    def step(self, action: int) -> StepResult:
        if self.done:
            raise EpisodeFinishedError("step() after the episode has ended")
        if action not in (TURN_LEFT, TURN_RIGHT, FORWARD, PICKUP):
            raise ValueError(f"invalid action {action}")
        reward = 0.0
        events: list = []
        if action == TURN_LEFT:
            self.agent_dir = (self.agent_dir - 1) % 4
        elif action == TURN_RIGHT:
            self.agent_dir = (self.agent_dir + 1) % 4
        elif action == FORWARD:
            dr, dc = DIR_VECS[self.agent_dir]
            r, c = self.agent_pos[0] + dr, self.agent_pos[1] + dc
            if self.terrain[r, c] != WALL:
                self.agent_pos = (r, c)
                kind = int(self.terrain[r, c])
                if kind in TERRAIN_NAMES:
                    events.append(TERRAIN_NAMES[kind])
        elif action == PICKUP:
            r, c = self.agent_pos
            if self.objects[r, c] != NO_OBJECT:
                reward = 1.0
                self.collected.add((r, c, int(self.objects[r, c])))
                self.objects[r, c] = NO_OBJECT
        self.step_count += 1
        truncated = self.step_count >= self.config.horizon
        if truncated:
            self.done = True
        return StepResult(self.observe(), reward, events, False, truncated)

    # -- observation ----------------------------------------------------

    def observe(self) -> np.ndarray:
        """7x7x3 forward patch: agent at the bottom-center cell, facing up.

        Channels: terrain kind, object kind, reserved (zero).  Cells outside
        the grid read as wall.
        """
        h, w = self.terrain.shape
        patch = np.zeros(OBS_SHAPE, dtype=np.int64)
        ar, ac = self.agent_pos
        f_dr, f_dc = DIR_VECS[self.agent_dir]          # patch "up"
        r_dr, r_dc = DIR_VECS[(self.agent_dir + 1) % 4]  # patch "right"
        for i in range(VIEW_SIZE):       # rows, 6 = agent row
            for j in range(VIEW_SIZE):   # cols, 3 = agent col
                fwd = VIEW_SIZE - 1 - i
                side = j - VIEW_SIZE // 2
                r = ar + fwd * f_dr + side * r_dr
                c = ac + fwd * f_dc + side * r_dc
                if 0 <= r < h and 0 <= c < w:
                    patch[i, j, 0] = self.terrain[r, c]
                    patch[i, j, 1] = self.objects[r, c]
                else:
                    patch[i, j, 0] = WALL
        return patch

    # -- debugging ------------------------------------------------------

    def render_ascii(self) -> str:
        rows = []
        for r in range(self.terrain.shape[0]):
            row = []
            for c in range(self.terrain.shape[1]):
                if (r, c) == self.agent_pos:
                    row.append("A")
                elif self.objects[r, c] != NO_OBJECT:
                    row.append(_OBJECT_CHARS[int(self.objects[r, c])])
                else:
                    row.append(_TERRAIN_CHARS[int(self.terrain[r, c])])
            rows.append("".join(row))
        return "\n".join(rows)


def make_env(config: GridConfig, seed: int) -> GridEnv:
    return GridEnv(config, seed)
