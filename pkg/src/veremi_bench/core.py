"""Shared value types and geometry helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple


class Vec3(NamedTuple):
    """Position (m) or velocity (m/s) in planar simulator coordinates."""

    x: float
    y: float
    z: float = 0.0

    def __add__(self, other: Vec3) -> Vec3:  # type: ignore[override]
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: Vec3) -> Vec3:
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)


ZERO = Vec3(0.0, 0.0, 0.0)


class AttackerType(IntEnum):
    """Attacker role codes as used in ground-truth files (0 is legitimate)."""

    LEGITIMATE = 0
    CONSTANT = 1
    CONSTANT_OFFSET = 2
    RANDOM = 4
    RANDOM_OFFSET = 8
    EVENTUAL_STOP = 16


ATTACK_TYPES = tuple(t for t in AttackerType if t != AttackerType.LEGITIMATE)


def attacker_type(code: int) -> AttackerType:
    """Validate an integer attacker code, raising ``ValueError`` if unknown."""
    try:
        return AttackerType(int(code))
    except ValueError:
        raise ValueError(
            f"invalid attacker type {code!r}; expected one of {[int(t) for t in AttackerType]}"
        ) from None


@dataclass(frozen=True)
class DensityClass:
    tag: str
    min_vehicles: int
    max_vehicles: int

    def __post_init__(self) -> None:
        if not 0 < self.min_vehicles <= self.max_vehicles:
            raise ValueError(f"bad vehicle band for density {self.tag!r}")

    def contains(self, count: int) -> bool:
        return self.min_vehicles <= count <= self.max_vehicles


# The high band is a desk-scale stand-in; override with DensityClass("high", 491, 519)
# for full-scale runs.
DENSITIES = {
    "low": DensityClass("low", 35, 39),
    "medium": DensityClass("medium", 97, 108),
    "high": DensityClass("high", 180, 220),
}


def density_class(tag: str) -> DensityClass:
    try:
        return DENSITIES[tag]
    except KeyError:
        raise ValueError(f"unknown density {tag!r}; expected one of {sorted(DENSITIES)}") from None


def euclidean_distance(a: Vec3, b: Vec3) -> float:
    """3-D Euclidean distance.

    Written out as sqrt of summed squares (not ``math.dist``) so the result is
    bit-identical to the compiled detector kernel.
    """
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def is_malicious_label(t: AttackerType | int) -> bool:
    return int(t) != 0
