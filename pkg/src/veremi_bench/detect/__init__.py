"""Plausibility detectors (ART, SAW, SSC, DMV) swept over thresholds.

Two routes compute the same verdicts:

* :func:`run_detectors` streams records through a :class:`ReceiverContext`
  and the scalar checks (``art_check`` ...). It is the readable reference.
* :func:`sweep_receiver` packs a receiver's log into arrays and hands them
  to a kernel: the compiled ``_sweep`` extension when importable, else the
  pure-Python ``_sweep_py``. Set ``VEREMI_BENCH_PURE_PYTHON=1`` to force the
  fallback.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from ..core import Vec3, euclidean_distance
from ..traceio import BeaconRecord, GpsRecord, LogRecord
from . import _sweep_py

try:
    from . import _sweep as _compiled
except ImportError:  # extension not built
    _compiled = None

log = logging.getLogger(__name__)

DETECTORS = ("ART", "SAW", "SSC", "DMV")
BACKENDS = ("cython", "python")


def available_backends() -> list[str]:
    return [b for b in BACKENDS if b == "python" or _compiled is not None]


def default_backend() -> str:
    if _compiled is None or os.environ.get("VEREMI_BENCH_PURE_PYTHON"):
        return "python"
    return "cython"


def _kernel(backend: str | None):
    backend = backend or default_backend()
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernel not built; reinstall with Cython available")
        return _compiled.sweep
    if backend == "python":
        return _sweep_py.sweep
    raise ValueError(f"unknown backend {backend!r}")


class DetectionError(ValueError):
    pass


@dataclass(frozen=True)
class DetectorConfig:
    artThresholds: tuple[float, ...] = (100, 200, 300, 400, 450, 500, 550, 600, 700, 800)
    sawThresholds: tuple[float, ...] = (25, 100, 200)
    sscThresholds: tuple[float, ...] = (2.5, 5, 7.5, 10, 15, 20, 25)
    dmvThresholds: tuple[float, ...] = (1, 5, 10, 15, 20, 25)

    def __post_init__(self) -> None:
        for name in ("artThresholds", "sawThresholds", "sscThresholds", "dmvThresholds"):
            values = tuple(float(v) for v in getattr(self, name))
            if not values:
                raise ValueError(f"{name} must not be empty")
            if not all(v > 0 and np.isfinite(v) for v in values):
                raise ValueError(f"{name} must be positive and finite")
            object.__setattr__(self, name, values)

    def thresholds(self, detector: str) -> tuple[float, ...]:
        return getattr(self, f"{detector.lower()}Thresholds")

    @property
    def columns(self) -> list[tuple[str, float]]:
        """``(detector, threshold)`` pairs in verdict-matrix column order."""
        return [(d, t) for d in DETECTORS for t in self.thresholds(d)]

    def snapshot(self) -> dict:
        return {d: list(self.thresholds(d)) for d in DETECTORS}


@dataclass(frozen=True)
class Verdict:
    receiverId: int
    messageId: int
    detector: str
    threshold: float
    malicious: bool


@dataclass
class ReceiverContext:
    """What one vehicle knows locally: its latest GPS fix and the last beacon per sender."""

    latestGps: GpsRecord | None = None
    perSender: dict[int, BeaconRecord] = field(default_factory=dict)

    def observe(self, rec: LogRecord) -> None:
        if isinstance(rec, GpsRecord):
            self.latestGps = rec
        else:
            self.perSender[rec.senderId] = rec


def _own_pos(ctx: ReceiverContext) -> Vec3:
    if ctx.latestGps is None:
        raise DetectionError("beacon received before any GPS fix")
    return ctx.latestGps.pos


def art_check(ctx: ReceiverContext, b: BeaconRecord, threshold: float) -> bool:
    """Claimed position farther away than the assumed reception range."""
    return euclidean_distance(_own_pos(ctx), b.pos) > threshold


def saw_check(ctx: ReceiverContext, b: BeaconRecord, threshold: float) -> bool:
    """A sender never heard before that claims to be closer than ``threshold``."""
    if b.senderId in ctx.perSender:
        return False
    return euclidean_distance(_own_pos(ctx), b.pos) < threshold


def ssc_check(ctx: ReceiverContext, b: BeaconRecord, threshold: float) -> bool:
    """Claimed speed magnitude vs. speed implied by the last two claimed positions.

    A non-positive send-time difference is implausible timing and flags the
    beacon at every threshold.
    """
    prev = ctx.perSender.get(b.senderId)
    if prev is None:
        return False
    dt = b.sendTime - prev.sendTime
    if dt <= 0.0:
        return True
    implied = euclidean_distance(b.pos, prev.pos) / dt
    return abs(implied - b.spd.norm()) > threshold


def dmv_check(ctx: ReceiverContext, b: BeaconRecord, threshold: float) -> bool:
    """Sender moved less than ``threshold`` since its previous beacon."""
    prev = ctx.perSender.get(b.senderId)
    if prev is None:
        return False
    return euclidean_distance(b.pos, prev.pos) < threshold


CHECKS = {"ART": art_check, "SAW": saw_check, "SSC": ssc_check, "DMV": dmv_check}


def run_detectors(events: Iterable[LogRecord], config: DetectorConfig = DetectorConfig(),
                  receiverId: int = 0) -> Iterator[Verdict]:
    """Stream verdicts for one receiver's time-ordered log.

    Each beacon is judged against the context as it stood before the beacon,
    then remembered as its sender's latest.
    """
    ctx = ReceiverContext()
    columns = config.columns
    for rec in events:
        if isinstance(rec, BeaconRecord):
            if ctx.latestGps is None:
                raise DetectionError(
                    f"receiver {receiverId}: beacon {rec.messageId} before any GPS fix")
            for det, t in columns:
                yield Verdict(receiverId, rec.messageId, det, t, CHECKS[det](ctx, rec, t))
        ctx.observe(rec)


# -- batch route -----------------------------------------------------------------

@dataclass
class ReceiverArrays:
    """One receiver's beacons in log order, plus its own position at each reception."""

    receiverId: int
    messageId: np.ndarray
    sender: np.ndarray
    rx_pos: np.ndarray
    pos: np.ndarray
    spd: np.ndarray  # claimed speed magnitude
    send_time: np.ndarray
    fix_age: np.ndarray

    @classmethod
    def from_records(cls, records: Sequence[LogRecord], receiverId: int) -> ReceiverArrays:
        gps_pos = None
        gps_time = 0.0
        mids, senders, rx, pos, spd, send, age = [], [], [], [], [], [], []
        for rec in records:
            if isinstance(rec, GpsRecord):
                gps_pos, gps_time = rec.pos, rec.rcvTime
                continue
            if gps_pos is None:
                raise DetectionError(
                    f"receiver {receiverId}: beacon {rec.messageId} before any GPS fix")
            mids.append(rec.messageId)
            senders.append(rec.senderId)
            rx.append(gps_pos)
            pos.append(rec.pos)
            spd.append(rec.spd.norm())
            send.append(rec.sendTime)
            age.append(rec.rcvTime - gps_time)
        return cls(
            receiverId,
            np.array(mids, dtype=np.int64),
            np.array(senders, dtype=np.int64),
            np.array(rx, dtype=np.float64).reshape(-1, 3),
            np.array(pos, dtype=np.float64).reshape(-1, 3),
            np.array(spd, dtype=np.float64),
            np.array(send, dtype=np.float64),
            np.array(age, dtype=np.float64),
        )

    def __len__(self) -> int:
        return len(self.messageId)


def sweep_receiver(arrays: ReceiverArrays, config: DetectorConfig = DetectorConfig(),
                   backend: str | None = None) -> np.ndarray:
    """Verdict matrix ``(beacons, len(config.columns))`` of 0/1 for one receiver."""
    kernel = _kernel(backend)
    senders, dense = np.unique(arrays.sender, return_inverse=True)
    out, bad_dt = kernel(
        np.ascontiguousarray(arrays.rx_pos), np.ascontiguousarray(arrays.pos),
        np.ascontiguousarray(arrays.spd), np.ascontiguousarray(arrays.send_time),
        np.ascontiguousarray(dense.astype(np.int64)), len(senders),
        np.array(config.artThresholds), np.array(config.sawThresholds),
        np.array(config.sscThresholds), np.array(config.dmvThresholds),
    )
    if bad_dt:
        log.warning("receiver %s: %d beacons with non-positive sendTime delta flagged by SSC",
                    arrays.receiverId, bad_dt)
    if len(arrays) and log.isEnabledFor(logging.DEBUG):
        log.debug("receiver %s: max GPS fix age at reception %.3f s", arrays.receiverId,
                  float(arrays.fix_age.max()))
    return np.asarray(out)


@dataclass
class VerdictTable:
    """All verdicts of one run, one row per beacon event and one column per threshold."""

    run: str
    columns: list[tuple[str, float]]
    receiver: np.ndarray
    messageId: np.ndarray
    flags: np.ndarray

    def __len__(self) -> int:
        return len(self.receiver)

    def column(self, detector: str, threshold: float) -> np.ndarray:
        return self.flags[:, self.columns.index((detector, float(threshold)))].astype(bool)

    def verdicts(self) -> Iterator[Verdict]:
        for i in range(len(self.receiver)):
            r, m = int(self.receiver[i]), int(self.messageId[i])
            for j, (det, t) in enumerate(self.columns):
                yield Verdict(r, m, det, t, bool(self.flags[i, j]))


def detect_run(logs: Mapping[int, Sequence[LogRecord]], config: DetectorConfig = DetectorConfig(),
               run: str = "", backend: str | None = None) -> VerdictTable:
    """Sweep every receiver of a run; receivers are taken in ascending id order."""
    receivers, mids, blocks = [], [], []
    for rid in sorted(logs):
        arrays = ReceiverArrays.from_records(logs[rid], rid)
        blocks.append(sweep_receiver(arrays, config, backend))
        receivers.append(np.full(len(arrays), rid, dtype=np.int64))
        mids.append(arrays.messageId)
    ncol = len(config.columns)
    return VerdictTable(
        run,
        config.columns,
        np.concatenate(receivers) if receivers else np.empty(0, np.int64),
        np.concatenate(mids) if mids else np.empty(0, np.int64),
        np.concatenate(blocks) if blocks else np.empty((0, ncol), np.uint8),
    )


VERDICT_HEADER = "run,receiver,messageID,detector,threshold,verdict"
VERDICT_FILE = "verdicts.csv"


def write_verdicts(table: VerdictTable, path: str | Path) -> None:
    """Long-format CSV, rows in (receiver, log order, column) order; verdict is 0/1."""
    suffix = [f",{det},{t!r}," for det, t in table.columns]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(VERDICT_HEADER + "\n")
        rows = table.flags.tolist()
        recv, mids = table.receiver.tolist(), table.messageId.tolist()
        chunk = []
        for i, row in enumerate(rows):
            head = f"{table.run},{recv[i]},{mids[i]}"
            chunk.extend(f"{head}{s}{v}\n" for s, v in zip(suffix, row))
            if len(chunk) > 200_000:
                fh.write("".join(chunk))
                chunk.clear()
        fh.write("".join(chunk))


def read_verdicts(path: str | Path) -> VerdictTable:
    """Inverse of :func:`write_verdicts`."""
    import pandas as pd

    df = pd.read_csv(path, dtype={"run": str, "receiver": np.int64, "messageID": np.int64,
                                  "detector": str, "threshold": np.float64,
                                  "verdict": np.uint8}, keep_default_na=False)
    if list(df.columns) != VERDICT_HEADER.split(","):
        raise DetectionError(f"{path}: unexpected header {list(df.columns)}")
    run = str(df["run"].iloc[0]) if len(df) else Path(path).parent.name
    if not len(df):
        return VerdictTable(run, [], np.empty(0, np.int64), np.empty(0, np.int64),
                            np.empty((0, 0), np.uint8))
    det = df["detector"].to_numpy()
    thr = df["threshold"].to_numpy()
    # The first event's rows fix the column order.
    r, m = df["receiver"].to_numpy(), df["messageID"].to_numpy()
    other = (r != r[0]) | (m != m[0])
    ncol = int(other.argmax()) if other.any() else len(df)
    columns = [(str(d), float(t)) for d, t in zip(det[:ncol], thr[:ncol])]
    if len(df) % ncol:
        raise DetectionError(f"{path}: row count is not a multiple of {ncol} columns")
    n = len(df) // ncol
    if not (np.all(det.reshape(n, ncol) == det[:ncol]) and np.all(thr.reshape(n, ncol) == thr[:ncol])):
        raise DetectionError(f"{path}: rows are not grouped per event in a fixed column order")
    recv = df["receiver"].to_numpy().reshape(n, ncol)[:, 0]
    mids = df["messageID"].to_numpy().reshape(n, ncol)[:, 0]
    flags = df["verdict"].to_numpy().reshape(n, ncol)
    return VerdictTable(run, columns, recv.copy(), mids.copy(), flags.copy())
