"""Desk-scale trace generator.

Vehicles drive a rectangular road grid with fixed-cycle traffic lights,
beacon at 1 Hz, and receive each other's beacons through a distance-based
probabilistic radio. Attackers falsify the position in their beacons. The
output is a run directory in the layout read by :mod:`veremi_bench.traceio`.

Simulation time is kept in integer microseconds so GPS updates and beacon
receptions never collide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .attacks import (
    DEFAULT_PLAYGROUND,
    AttackerState,
    AttackParams,
    Rect,
    advance_stop_state,
    apply_attack,
    assign_attackers,
)
from .core import ZERO, AttackerType, DensityClass, Vec3, density_class
from .traceio import (
    GROUND_TRUTH_NAME,
    BeaconRecord,
    GpsRecord,
    GroundTruthRecord,
    LogRecord,
    log_path,
    write_ground_truth,
    write_manifest,
    write_reception_log,
)

US = 1_000_000
SPEED_OF_LIGHT_M_PER_US = 299.792458
PROCESSING_DELAY_US = 200
TX_POWER_DBM = 10 * math.log10(20.0)  # 20 mW
PATH_LOSS_1M_DB = 47.86  # free space at 5.9 GHz

# Per-road speed limits (m/s) drawn for each grid line, by density class.
SPEED_LIMITS = {
    "low": (30.0, 30.0, 33.33),
    "medium": (11.11, 13.89, 16.67),
    "high": (11.11, 13.89),
}


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass(frozen=True)
class ScenarioConfig:
    density: DensityClass = field(default_factory=lambda: density_class("low"))
    attackerFraction: float = 0.1
    attackerType: AttackerType = AttackerType.CONSTANT
    durationSeconds: float = 100.0
    beaconRate: float = 1.0
    gpsRate: float = 10.0
    commRange: float = 450.0
    lossExponent: float = 2.0
    seed: int = 0
    playground: Rect = DEFAULT_PLAYGROUND
    noiseSigmaPos: float = 1.0
    noiseSigmaSpd: float = 0.1
    attack: AttackParams = field(default_factory=AttackParams)
    gridX: tuple[float, ...] = (2300.0, 2800.0, 3300.0, 3800.0, 4300.0, 4800.0, 5300.0,
                                5800.0, 6300.0)
    gridY: tuple[float, ...] = (5400.0, 5820.0, 6300.0)
    speedLimits: tuple[float, ...] | None = None
    lightCycle: float = 60.0
    acceleration: float = 2.5
    comfortDeceleration: float = 3.0
    maxDeceleration: float = 7.0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not 0.0 <= self.attackerFraction <= 1.0:
            raise ConfigError("attacker-fraction", f"{self.attackerFraction} is outside [0, 1]")
        try:
            AttackerType(self.attackerType)
        except ValueError:
            raise ConfigError("attacker-type", f"invalid code {self.attackerType!r}") from None
        if self.attackerType == AttackerType.LEGITIMATE and self.attackerFraction > 0:
            raise ConfigError("attacker-type", "0 is not an attack")
        for name, value in (("duration", self.durationSeconds), ("beacon-rate", self.beaconRate),
                            ("gps-rate", self.gpsRate), ("comm-range", self.commRange),
                            ("loss-exponent", self.lossExponent),
                            ("light-cycle", self.lightCycle),
                            ("acceleration", self.acceleration),
                            ("comfort-deceleration", self.comfortDeceleration),
                            ("max-deceleration", self.maxDeceleration)):
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(name, f"must be positive, got {value}")
        for name, value in (("noise-sigma-pos", self.noiseSigmaPos),
                            ("noise-sigma-spd", self.noiseSigmaSpd)):
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(name, f"must be non-negative, got {value}")
        gps_us, beacon_us = US / self.gpsRate, US / self.beaconRate
        if gps_us != round(gps_us) or beacon_us != round(beacon_us):
            raise ConfigError("gps-rate", "rates must give whole-microsecond periods")
        if round(beacon_us) % round(gps_us):
            raise ConfigError("gps-rate", "must be an integer multiple of beacon-rate")
        steps = self.durationSeconds * self.gpsRate
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("duration", "must be a whole number of GPS periods")
        if len(self.gridX) < 2 or len(self.gridY) < 2:
            raise ConfigError("grid", "need at least two grid lines per axis")
        if list(self.gridX) != sorted(set(self.gridX)) or list(self.gridY) != sorted(set(self.gridY)):
            raise ConfigError("grid", "grid lines must be strictly increasing")
        pg = self.playground
        if not (pg.xmin <= self.gridX[0] and self.gridX[-1] <= pg.xmax
                and pg.ymin <= self.gridY[0] and self.gridY[-1] <= pg.ymax):
            raise ConfigError("grid", "roads must lie inside the playground")
        if self.speedLimits is not None and not all(v > 0 for v in self.speedLimits):
            raise ConfigError("speed-limits", "limits must be positive")

    @property
    def gps_period_us(self) -> int:
        return round(US / self.gpsRate)

    @property
    def beacon_period_us(self) -> int:
        return round(US / self.beaconRate)

    @property
    def steps(self) -> int:
        return round(self.durationSeconds * self.gpsRate)

    @property
    def limits(self) -> tuple[float, ...]:
        if self.speedLimits is not None:
            return tuple(self.speedLimits)
        return SPEED_LIMITS.get(self.density.tag, SPEED_LIMITS["medium"])

    def snapshot(self) -> dict:
        pg = self.playground
        return {
            "density": self.density.tag,
            "vehicleBand": [self.density.min_vehicles, self.density.max_vehicles],
            "attackerFraction": self.attackerFraction,
            "attackerType": int(self.attackerType),
            "durationSeconds": self.durationSeconds,
            "beaconRate": self.beaconRate,
            "gpsRate": self.gpsRate,
            "commRange": self.commRange,
            "lossExponent": self.lossExponent,
            "seed": self.seed,
            "playground": [pg.xmin, pg.ymin, pg.xmax, pg.ymax],
            "noiseSigmaPos": self.noiseSigmaPos,
            "noiseSigmaSpd": self.noiseSigmaSpd,
            "gridX": list(self.gridX),
            "gridY": list(self.gridY),
            "speedLimits": list(self.limits),
            "lightCycle": self.lightCycle,
            "acceleration": self.acceleration,
            "comfortDeceleration": self.comfortDeceleration,
            "maxDeceleration": self.maxDeceleration,
        }


# -- road network ----------------------------------------------------------------

class RoadGrid:
    """Grid of two-way roads; node ``(i, j)`` sits at ``(gridX[i], gridY[j])``.

    Every four-way junction has a fixed-cycle light: the
    east-west approach is green for the first half of the cycle, north-south
    for the second half, shifted by a per-node random offset.
    """

    def __init__(self, config: ScenarioConfig, rng: np.random.Generator):
        self.xs = tuple(config.gridX)
        self.ys = tuple(config.gridY)
        self.cycle = config.lightCycle
        self.accel = config.acceleration
        self.comfort_decel = config.comfortDeceleration
        self.max_decel = config.maxDeceleration
        nx, ny = len(self.xs), len(self.ys)
        self.nodes = [(i, j) for i in range(nx) for j in range(ny)]
        self.neighbors: dict[tuple[int, int], list[tuple[int, int]]] = {}
        for i, j in self.nodes:
            nbrs = [(i + di, j + dj) for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
                    if 0 <= i + di < nx and 0 <= j + dj < ny]
            self.neighbors[(i, j)] = nbrs
        limits = config.limits
        self.row_limit = [float(limits[k]) for k in rng.integers(0, len(limits), size=ny)]
        self.col_limit = [float(limits[k]) for k in rng.integers(0, len(limits), size=nx)]
        self.light_offset = {n: float(rng.uniform(0.0, self.cycle)) for n in self.nodes}
        self.signalized = {n: len(self.neighbors[n]) == 4 for n in self.nodes}
        self.edges = [(a, b) for a in self.nodes for b in self.neighbors[a]]
        self.edge_weights = np.array([self.length(a, b) for a, b in self.edges])
        self.edge_weights /= self.edge_weights.sum()

    def point(self, node: tuple[int, int]) -> tuple[float, float]:
        return self.xs[node[0]], self.ys[node[1]]

    def length(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        (ax, ay), (bx, by) = self.point(a), self.point(b)
        return abs(bx - ax) + abs(by - ay)

    def limit(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        return self.row_limit[a[1]] if a[1] == b[1] else self.col_limit[a[0]]

    def max_limit(self) -> float:
        return max(self.row_limit + self.col_limit)

    def is_green(self, node: tuple[int, int], came_from: tuple[int, int], t: float) -> bool:
        if not self.signalized[node]:
            return True
        east_west = came_from[1] == node[1]
        phase = (t + self.light_offset[node]) % self.cycle
        return (phase < self.cycle / 2) == east_west

    def next_hop(self, prev: tuple[int, int], node: tuple[int, int],
                 rng: np.random.Generator) -> tuple[int, int]:
        """Pick the road after ``node``: straight twice as likely as a turn, no U-turns
        unless at a dead end."""
        options = [n for n in self.neighbors[node] if n != prev]
        if not options:
            return prev
        straight = (2 * node[0] - prev[0], 2 * node[1] - prev[1])
        weights = np.array([2.0 if n == straight else 1.0 for n in options])
        return options[int(rng.choice(len(options), p=weights / weights.sum()))]


@dataclass
class VehicleState:
    id: int
    truePos: Vec3
    trueSpd: Vec3
    route: list[tuple[int, int]]
    role: AttackerType = AttackerType.LEGITIMATE
    attackerState: AttackerState | None = None
    fromNode: tuple[int, int] = (0, 0)
    offset: float = 0.0
    beaconPhaseUs: int = 0

    @property
    def speed(self) -> float:
        return self.trueSpd.norm()


def spawn_vehicle(vid: int, grid: RoadGrid, config: ScenarioConfig,
                  rng: np.random.Generator) -> VehicleState:
    a, b = grid.edges[int(rng.choice(len(grid.edges), p=grid.edge_weights))]
    offset = float(rng.uniform(0.0, grid.length(a, b)))
    speed = grid.limit(a, b) * float(rng.uniform(0.5, 1.0))
    # Enough waypoints to outlast the run at the fastest limit on the shortest block.
    shortest = min(min(np.diff(grid.xs)), min(np.diff(grid.ys)))
    hops = int(math.ceil(config.durationSeconds * grid.max_limit() / shortest)) + 2
    route = [b]
    prev, node = a, b
    for _ in range(hops):
        nxt = grid.next_hop(prev, node, rng)
        route.append(nxt)
        prev, node = node, nxt
    state = VehicleState(vid, ZERO, ZERO, route, fromNode=a, offset=offset)
    _place(state, grid, speed)
    return state


def _place(state: VehicleState, grid: RoadGrid, speed: float) -> None:
    a, b = state.fromNode, state.route[0]
    (ax, ay), (bx, by) = grid.point(a), grid.point(b)
    length = grid.length(a, b)
    ux, uy = (bx - ax) / length, (by - ay) / length
    state.truePos = Vec3(ax + ux * state.offset, ay + uy * state.offset, 0.0)
    state.trueSpd = Vec3(ux * speed, uy * speed, 0.0)


def mobility_step(state: VehicleState, dt: float, network: RoadGrid, t: float) -> VehicleState:
    """Advance one vehicle by ``dt`` seconds along its route (in place).

    ``t`` is the simulation time at the start of the step; it decides the
    light phase. The vehicle accelerates toward the road limit, slows for a
    lower limit ahead, and stops at the line of a red light it can still stop
    for.
    """
    g = network
    v = state.speed
    a, b = state.fromNode, state.route[0]
    length = g.length(a, b)
    remaining = length - state.offset
    limit = g.limit(a, b)
    desired = limit
    after = state.route[1] if len(state.route) > 1 else a
    desired = min(desired, math.sqrt(g.limit(b, after) ** 2 + 2 * g.comfort_decel * remaining))
    red = not g.is_green(b, a, t)
    stopping = red and v * v <= 2 * g.max_decel * remaining + 1e-9
    if stopping:
        desired = min(desired, math.sqrt(2 * g.comfort_decel * max(remaining - 0.5, 0.0)))
    new_v = min(desired, v + g.accel * dt)
    new_v = max(new_v, v - g.max_decel * dt, 0.0)
    travel = new_v * dt
    if stopping and travel >= remaining:
        state.offset = length
        new_v = 0.0
        travel = 0.0
    else:
        state.offset += travel
    while state.offset >= length and travel > 0:
        state.offset -= length
        prev = state.route.pop(0)
        if not state.route:
            state.route.append(a)
        state.fromNode = prev
        a, b = prev, state.route[0]
        length = g.length(a, b)
        new_v = min(new_v, g.limit(a, b))
    _place(state, g, new_v)
    return state


# -- radio -----------------------------------------------------------------------

def delivery_probability(d: float | np.ndarray, config: ScenarioConfig):
    ratio = np.asarray(d, dtype=float) / config.commRange
    p = np.clip(1.0 - ratio ** config.lossExponent, 0.0, 1.0)
    p = np.where(ratio > 1.0, 0.0, p)
    return float(p) if np.ndim(p) == 0 else p


def radio_delivers(tx_pos: Vec3, rx_pos: Vec3, config: ScenarioConfig,
                   rng: np.random.Generator) -> bool:
    """Does a beacon sent from ``tx_pos`` (the sender's physical position) reach ``rx_pos``?

    Always consumes exactly one uniform draw, so a loop over receivers uses
    the generator the same way as :func:`deliveries`.
    """
    u = rng.random()
    d = math.sqrt(sum((p - q) ** 2 for p, q in zip(tx_pos, rx_pos)))
    return bool(u < delivery_probability(d, config))


def deliveries(tx_pos: np.ndarray, rx_pos: np.ndarray, config: ScenarioConfig,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`radio_delivers` over receiver rows; returns ``(mask, distances)``."""
    diff = rx_pos - tx_pos
    d = np.sqrt((diff * diff).sum(axis=1))
    u = rng.random(len(d))
    return u < delivery_probability(d, config), d


def rssi_dbm(d: float) -> float:
    """Log-distance received power; populated for completeness, no detector reads it."""
    return TX_POWER_DBM - (PATH_LOSS_1M_DB + 20.0 * math.log10(max(d, 1.0)))


# -- beacons ---------------------------------------------------------------------

def emit_beacon(vehicle: VehicleState, t: float, message_id: int, config: ScenarioConfig,
                rng: np.random.Generator) -> tuple[BeaconRecord, GroundTruthRecord]:
    """Build the transmitted beacon (receiver fields blank) and its ground truth."""
    if vehicle.role != AttackerType.LEGITIMATE:
        tx_pos, tx_spd = apply_attack(vehicle.attackerState, config.attack, vehicle.truePos,
                                      vehicle.trueSpd, rng)
    else:
        tx_pos, tx_spd = vehicle.truePos, vehicle.trueSpd
    template = BeaconRecord(t, t, vehicle.id, message_id, tx_pos, tx_spd, 0.0, ZERO, ZERO)
    truth = GroundTruthRecord(t, vehicle.id, vehicle.role, message_id, vehicle.truePos,
                              vehicle.trueSpd)
    return template, truth


# -- runs ------------------------------------------------------------------------

@dataclass
class RunData:
    config: ScenarioConfig
    roles: dict[int, AttackerType]
    logs: dict[int, list[LogRecord]]
    truth: dict[int, GroundTruthRecord]
    speeds: np.ndarray
    stop_times: dict[int, float] = field(default_factory=dict)

    @property
    def vehicle_count(self) -> int:
        return len(self.roles)

    def manifest(self) -> dict:
        c = self.config
        speeds = self.speeds
        return {
            "toolVersion": __version__,
            "seed": c.seed,
            "density": c.density.tag,
            "attackerType": int(c.attackerType),
            "attackerFraction": c.attackerFraction,
            "scenario": c.snapshot(),
            "attack": c.attack.snapshot(),
            "vehicleCount": self.vehicle_count,
            "attackers": {str(k): int(v) for k, v in self.roles.items() if v},
            "messages": len(self.truth),
            "receptions": sum(1 for log in self.logs.values() for r in log
                              if isinstance(r, BeaconRecord)),
            "speedStats": {
                "mean": float(speeds.mean()) if speeds.size else None,
                "median": float(np.median(speeds)) if speeds.size else None,
                "std": float(speeds.std()) if speeds.size else None,
            },
            "timestamps": {"simStart": 0.0, "simEnd": c.durationSeconds},
            "receiverNoise": "iid Gaussian on x/y of received beacons and GPS fixes",
        }


def _noise(rng: np.random.Generator, sigma: float, n: int) -> np.ndarray:
    out = np.zeros((n, 3))
    if sigma > 0 and n:
        out[:, :2] = rng.normal(0.0, sigma, size=(n, 2))
    return out


def simulate(config: ScenarioConfig) -> RunData:
    """Run one scenario in memory."""
    (rng_mob, rng_roles, rng_attack, rng_radio, rng_noise,
     rng_phase, rng_count) = [np.random.Generator(np.random.PCG64(s))
                              for s in np.random.SeedSequence(config.seed).spawn(7)]
    band = config.density
    count = int(rng_count.integers(band.min_vehicles, band.max_vehicles + 1))
    ids = list(range(1, count + 1))
    grid = RoadGrid(config, rng_mob)
    vehicles = [spawn_vehicle(vid, grid, config, rng_mob) for vid in ids]
    roles = assign_attackers(ids, config.attackerFraction, config.attackerType, rng_roles)

    gps_us = config.gps_period_us
    slots = config.beacon_period_us // gps_us
    lo, hi = max(1, gps_us // 100), max(2, gps_us * 98 // 100)
    for v in vehicles:
        v.role = roles[v.id]
        if v.role:
            v.attackerState = AttackerState(v.role)
        v.beaconPhaseUs = int(rng_phase.integers(0, slots)) * gps_us + int(rng_phase.integers(lo, hi))

    logs: dict[int, list[LogRecord]] = {vid: [] for vid in ids}
    truth: dict[int, GroundTruthRecord] = {}
    stop_times: dict[int, float] = {}
    speeds = np.empty((config.steps, count))
    dt = gps_us / US
    sig_p, sig_s = config.noiseSigmaPos, config.noiseSigmaSpd
    next_id = 1
    order = np.arange(count)
    mk = Vec3._make

    for k in range(config.steps):
        t_us = k * gps_us
        t = t_us / US
        if k:
            for v in vehicles:
                mobility_step(v, dt, grid, (t_us - gps_us) / US)
        for v in vehicles:
            if v.role == AttackerType.EVENTUAL_STOP and not v.attackerState.stopped:
                v.attackerState = advance_stop_state(v.attackerState, config.attack,
                                                     v.truePos, rng_attack)
                if v.attackerState.stopped:
                    stop_times[v.id] = t
        true_pos = np.array([v.truePos for v in vehicles])
        speeds[k] = [v.speed for v in vehicles]

        pn, sn = _noise(rng_noise, sig_p, count), _noise(rng_noise, sig_s, count)
        true_spd = np.array([v.trueSpd for v in vehicles])
        rows = zip((true_pos + pn).tolist(), (true_spd + sn).tolist(), pn.tolist(), sn.tolist())
        for v, (p, s, pnv, snv) in zip(vehicles, rows):
            logs[v.id].append(GpsRecord(t, mk(p), mk(s), mk(pnv), mk(snv)))

        senders = [v for v in vehicles if v.beaconPhaseUs // gps_us == k % slots]
        senders.sort(key=lambda v: (v.beaconPhaseUs, v.id))
        for v in senders:
            send_us = t_us + v.beaconPhaseUs % gps_us
            send = send_us / US
            template, gt = emit_beacon(v, send, next_id, config, rng_attack)
            truth[next_id] = gt
            next_id += 1
            mask, dist = deliveries(true_pos[v.id - 1], true_pos, config, rng_radio)
            mask[v.id - 1] = False
            rx = order[mask]
            pn, sn = _noise(rng_noise, sig_p, len(rx)), _noise(rng_noise, sig_s, len(rx))
            rows = zip(rx.tolist(), dist[rx].tolist(), (np.array(template.pos) + pn).tolist(),
                       (np.array(template.spd) + sn).tolist(), pn.tolist(), sn.tolist())
            for r, d, p, s, pnv, snv in rows:
                rcv = (send_us + PROCESSING_DELAY_US + round(d / SPEED_OF_LIGHT_M_PER_US)) / US
                logs[r + 1].append(BeaconRecord(rcv, send, v.id, template.messageId, mk(p),
                                                mk(s), rssi_dbm(d), mk(pnv), mk(snv)))

    for log in logs.values():
        log.sort(key=lambda r: r.rcvTime)
    return RunData(config, roles, logs, truth, speeds.ravel(), stop_times)


def write_run(run: RunData, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for vid, log in run.logs.items():
        write_reception_log(log_path(out, vid), log)
    write_ground_truth(out / GROUND_TRUTH_NAME, sorted(run.truth.values(), key=lambda r: r.messageId))
    write_manifest(out, run.manifest())
    return out


def generate_run(config: ScenarioConfig, out_dir: str | Path) -> Path:
    return write_run(simulate(config), out_dir)


def run_name(config: ScenarioConfig) -> str:
    return (f"{config.density.tag}-a{int(config.attackerType)}"
            f"-f{config.attackerFraction:g}-s{config.seed}")


def sweep_configs(base: ScenarioConfig, densities: Sequence[DensityClass],
                  fractions: Sequence[float], types: Sequence[AttackerType],
                  seeds: Sequence[int]) -> list[ScenarioConfig]:
    return [replace(base, density=d, attackerFraction=f, attackerType=a, seed=s)
            for d in densities for f in fractions for a in types for s in seeds]
