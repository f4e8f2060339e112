"""Position-falsification attacks applied to outgoing beacons."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .core import ZERO, AttackerType, Vec3


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle in the x/y plane."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self) -> None:
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError(f"degenerate rectangle {self}")

    def contains(self, p: Vec3) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin


# Simulation area of the original LuST excerpt.
DEFAULT_PLAYGROUND = Rect(2300.0, 5400.0, 6300.0, 6300.0)


@dataclass(frozen=True)
class AttackParams:
    constantPos: Vec3 = Vec3(5560.0, 5820.0, 0.0)
    constantOffset: Vec3 = Vec3(250.0, -150.0, 0.0)
    randomOffsetBound: float = 300.0
    stopProbIncrement: float = 0.025
    playground: Rect = DEFAULT_PLAYGROUND

    def __post_init__(self) -> None:
        if not self.randomOffsetBound > 0:
            raise ValueError("randomOffsetBound must be positive")
        if not 0 < self.stopProbIncrement <= 1:
            raise ValueError("stopProbIncrement must be in (0, 1]")

    def snapshot(self) -> dict:
        return {
            "constantPos": list(self.constantPos),
            "constantOffset": list(self.constantOffset),
            "randomOffsetBound": self.randomOffsetBound,
            "stopProbIncrement": self.stopProbIncrement,
            "playground": [self.playground.xmin, self.playground.ymin,
                           self.playground.xmax, self.playground.ymax],
            # Claimed speed per attack; positions are the only falsified field.
            "transmittedSpeed": {"1": "true", "2": "true", "4": "true", "8": "true",
                                 "16": "true until stopped, then zero"},
        }


@dataclass(frozen=True)
class AttackerState:
    type: AttackerType
    stopProbability: float = 0.0
    frozenPos: Vec3 | None = None
    updates: int = field(default=0, repr=False)

    @property
    def stopped(self) -> bool:
        return self.frozenPos is not None


def assign_attackers(vehicle_ids: Iterable[int], fraction: float, kind: AttackerType,
                     rng: np.random.Generator) -> dict[int, AttackerType]:
    """Independently make each vehicle an attacker with probability ``fraction``.

    One uniform draw per vehicle, in the given order.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"attacker fraction {fraction} outside [0, 1]")
    kind = AttackerType(kind)
    if kind == AttackerType.LEGITIMATE and fraction > 0:
        raise ValueError("an attack run needs a nonzero attacker type")
    out = {}
    for vid in vehicle_ids:
        out[vid] = kind if rng.random() < fraction else AttackerType.LEGITIMATE
    return out


def apply_attack(state: AttackerState, params: AttackParams, true_pos: Vec3, true_spd: Vec3,
                 rng: np.random.Generator) -> tuple[Vec3, Vec3]:
    """Return the ``(position, speed)`` an attacker puts into its next beacon."""
    t = state.type
    if t == AttackerType.CONSTANT:
        return params.constantPos, true_spd
    if t == AttackerType.CONSTANT_OFFSET:
        return true_pos + params.constantOffset, true_spd
    if t == AttackerType.RANDOM:
        pg = params.playground
        x = rng.uniform(pg.xmin, pg.xmax)
        y = rng.uniform(pg.ymin, pg.ymax)
        return Vec3(x, y, true_pos.z), true_spd
    if t == AttackerType.RANDOM_OFFSET:
        b = params.randomOffsetBound
        u = rng.uniform(-b, b)
        v = rng.uniform(-b, b)
        return Vec3(true_pos.x + u, true_pos.y + v, true_pos.z), true_spd
    if t == AttackerType.EVENTUAL_STOP:
        if state.frozenPos is not None:
            return state.frozenPos, ZERO
        return true_pos, true_spd
    raise ValueError(f"apply_attack called for non-attacker type {int(t)}")


def advance_stop_state(state: AttackerState, params: AttackParams, current_true_pos: Vec3,
                       rng: np.random.Generator) -> AttackerState:
    """One 10 Hz position update of an eventual-stop attacker.

    The stop probability grows by ``stopProbIncrement`` per update; a uniform
    draw below it freezes the position. It is computed from the update count
    so that 40 increments of 0.025 land on exactly 1.0.
    """
    if state.type != AttackerType.EVENTUAL_STOP:
        raise ValueError("advance_stop_state only applies to eventual-stop attackers")
    if state.frozenPos is not None:
        return state
    updates = state.updates + 1
    p = min(1.0, updates * params.stopProbIncrement)
    if rng.random() < p or p >= 1.0:
        return replace(state, stopProbability=p, frozenPos=current_true_pos, updates=updates)
    return replace(state, stopProbability=p, updates=updates)
