"""Reading and writing VeReMi-style reception logs and ground truth.

Each line of a log is one JSON object. Reception logs mix GPS self-updates
(``type`` 2) and received beacons (``type`` 3). Field names follow the
published dataset so third-party files parse; unknown fields are ignored.

A run directory holds ``log-<receiverId>.jsonl`` per vehicle, one
``groundtruth.jsonl`` and a ``manifest.json``.
"""

from __future__ import annotations

import io
import json
import math
import re
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence, Union

from .core import AttackerType, Vec3, attacker_type, is_malicious_label

GPS_TYPE = 2
BEACON_TYPE = 3

LOG_PATTERN = re.compile(r"^log-(-?\d+)\.jsonl$")
GROUND_TRUTH_NAME = "groundtruth.jsonl"
MANIFEST_NAME = "manifest.json"


class TraceFormatError(ValueError):
    """A log line could not be turned into a record."""

    def __init__(self, message: str, line: int | None = None, field: str | None = None,
                 path: str | Path | None = None):
        self.message = message
        self.line = line
        self.field = field
        self.path = path
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{': '.join(where)}: {message}" if where else message)

    def with_path(self, path: str | Path) -> TraceFormatError:
        return TraceFormatError(self.message, self.line, self.field, path)


class OutOfOrderWarning(UserWarning):
    """Reception log timestamps were not non-decreasing; records were re-sorted."""


@dataclass(frozen=True, slots=True)
class GpsRecord:
    rcvTime: float
    pos: Vec3
    spd: Vec3
    posNoise: Vec3
    spdNoise: Vec3


@dataclass(frozen=True, slots=True)
class BeaconRecord:
    rcvTime: float
    sendTime: float
    senderId: int
    messageId: int
    pos: Vec3
    spd: Vec3
    rssi: float
    posNoise: Vec3
    spdNoise: Vec3


@dataclass(frozen=True, slots=True)
class GroundTruthRecord:
    sendTime: float
    senderId: int
    attackerType: AttackerType
    messageId: int
    truePos: Vec3
    trueSpd: Vec3


@dataclass(frozen=True, slots=True)
class LabeledEvent:
    receiverId: int
    beacon: BeaconRecord
    label: bool


LogRecord = Union[GpsRecord, BeaconRecord]


# -- parsing -----------------------------------------------------------------

def _lines(stream: IO[bytes] | IO[str] | Iterable[bytes | str]) -> Iterator[str]:
    for raw in stream:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def _num(obj: dict, key: str, lineno: int) -> float:
    try:
        value = obj[key]
    except KeyError:
        raise TraceFormatError("missing field", lineno, key) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TraceFormatError(f"expected a number, got {value!r}", lineno, key)
    value = float(value)
    if not math.isfinite(value):
        raise TraceFormatError("non-finite value", lineno, key)
    return value


def _int(obj: dict, key: str, lineno: int) -> int:
    try:
        value = obj[key]
    except KeyError:
        raise TraceFormatError("missing field", lineno, key) from None
    if isinstance(value, bool):
        raise TraceFormatError(f"expected an integer, got {value!r}", lineno, key)
    if isinstance(value, float) and value.is_integer():
        value = int(value)
    if not isinstance(value, int):
        raise TraceFormatError(f"expected an integer, got {value!r}", lineno, key)
    return value


def _vec(obj: dict, key: str, lineno: int) -> Vec3:
    try:
        value = obj[key]
    except KeyError:
        raise TraceFormatError("missing field", lineno, key) from None
    if not isinstance(value, list) or len(value) not in (2, 3):
        raise TraceFormatError(f"expected a 2- or 3-element array, got {value!r}", lineno, key)
    out = []
    for c in value:
        if isinstance(c, bool) or not isinstance(c, (int, float)):
            raise TraceFormatError(f"expected numbers, got {value!r}", lineno, key)
        c = float(c)
        if not math.isfinite(c):
            raise TraceFormatError("non-finite component", lineno, key)
        out.append(c)
    if len(out) == 2:
        out.append(0.0)
    return Vec3(*out)


def _load(line: str, lineno: int) -> dict | None:
    line = line.strip()
    if not line:
        return None
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError(f"invalid JSON ({exc.msg})", lineno) from None
    if not isinstance(obj, dict):
        raise TraceFormatError("expected a JSON object", lineno)
    return obj


def parse_log_line(obj: dict, lineno: int) -> LogRecord:
    kind = _int(obj, "type", lineno)
    if kind == GPS_TYPE:
        return GpsRecord(
            _num(obj, "rcvTime", lineno),
            _vec(obj, "pos", lineno),
            _vec(obj, "spd", lineno),
            _vec(obj, "pos_noise", lineno),
            _vec(obj, "spd_noise", lineno),
        )
    if kind == BEACON_TYPE:
        rcv = _num(obj, "rcvTime", lineno)
        send = _num(obj, "sendTime", lineno)
        if send > rcv:
            raise TraceFormatError(f"sendTime {send} is after rcvTime {rcv}", lineno, "sendTime")
        return BeaconRecord(
            rcv,
            send,
            _int(obj, "sender", lineno),
            _int(obj, "messageID", lineno),
            _vec(obj, "pos", lineno),
            _vec(obj, "spd", lineno),
            _num(obj, "RSSI", lineno),
            _vec(obj, "pos_noise", lineno),
            _vec(obj, "spd_noise", lineno),
        )
    raise TraceFormatError(f"unknown record type {kind}", lineno, "type")


def parse_reception_log(stream, receiverId: int | None = None) -> list[LogRecord]:
    """Parse one receiver's log.

    Records come back sorted by ``rcvTime``; if the file was not already
    ordered an :class:`OutOfOrderWarning` is issued and a stable sort applied.
    ``receiverId`` is only used in the warning text.
    """
    records: list[LogRecord] = []
    ordered = True
    last = -math.inf
    for lineno, line in enumerate(_lines(stream), start=1):
        obj = _load(line, lineno)
        if obj is None:
            continue
        rec = parse_log_line(obj, lineno)
        if rec.rcvTime < last:
            ordered = False
        last = max(last, rec.rcvTime)
        records.append(rec)
    if not ordered:
        who = f"receiver {receiverId}" if receiverId is not None else "reception log"
        warnings.warn(f"{who}: rcvTime not non-decreasing, re-sorting", OutOfOrderWarning,
                      stacklevel=2)
        records.sort(key=lambda r: r.rcvTime)
    return records


def parse_ground_truth(stream) -> dict[int, GroundTruthRecord]:
    """Parse a ground-truth file into ``messageId -> record``.

    Files from the published dataset carry ``type: 4`` plus an explicit
    ``attackerType``; when that field is present it wins over ``type``.
    """
    truth: dict[int, GroundTruthRecord] = {}
    for lineno, line in enumerate(_lines(stream), start=1):
        obj = _load(line, lineno)
        if obj is None:
            continue
        key = "attackerType" if "attackerType" in obj else "type"
        code = _int(obj, key, lineno)
        try:
            kind = attacker_type(code)
        except ValueError as exc:
            raise TraceFormatError(str(exc), lineno, key) from None
        mid = _int(obj, "messageID", lineno)
        if mid in truth:
            raise TraceFormatError(f"duplicate messageID {mid}", lineno, "messageID")
        truth[mid] = GroundTruthRecord(
            _num(obj, "time", lineno),
            _int(obj, "sender", lineno),
            kind,
            mid,
            _vec(obj, "pos", lineno),
            _vec(obj, "spd", lineno),
        )
    return truth


# -- writing -------------------------------------------------------------------
# Hand-formatted rather than json.dumps: an order of magnitude faster on large
# runs. repr() of a float is the shortest string that round-trips exactly.

def _fmt_vec(v: Vec3) -> str:
    return f"[{v[0]!r},{v[1]!r},{v[2]!r}]"


def format_gps(r: GpsRecord) -> str:
    return (f'{{"type":2,"rcvTime":{r.rcvTime!r},"pos":{_fmt_vec(r.pos)},'
            f'"pos_noise":{_fmt_vec(r.posNoise)},"spd":{_fmt_vec(r.spd)},'
            f'"spd_noise":{_fmt_vec(r.spdNoise)}}}')


def format_beacon(r: BeaconRecord) -> str:
    return (f'{{"type":3,"rcvTime":{r.rcvTime!r},"sendTime":{r.sendTime!r},'
            f'"sender":{r.senderId},"messageID":{r.messageId},"pos":{_fmt_vec(r.pos)},'
            f'"pos_noise":{_fmt_vec(r.posNoise)},"spd":{_fmt_vec(r.spd)},'
            f'"spd_noise":{_fmt_vec(r.spdNoise)},"RSSI":{r.rssi!r}}}')


def format_ground_truth(r: GroundTruthRecord) -> str:
    return (f'{{"type":{int(r.attackerType)},"time":{r.sendTime!r},"sender":{r.senderId},'
            f'"messageID":{r.messageId},"pos":{_fmt_vec(r.truePos)},'
            f'"spd":{_fmt_vec(r.trueSpd)}}}')


def format_log_record(r: LogRecord) -> str:
    return format_gps(r) if isinstance(r, GpsRecord) else format_beacon(r)


def _check_finite(values: Iterable[float], what: str) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"refusing to write non-finite {what}")


def _write_lines(target: str | Path | IO[str], lines: Iterable[str]) -> None:
    if isinstance(target, (str, Path)):
        try:
            with open(target, "w", encoding="utf-8", newline="\n") as fh:
                for line in lines:
                    fh.write(line)
                    fh.write("\n")
        except OSError as exc:
            raise OSError(exc.errno, f"cannot write {target}: {exc.strerror}") from exc
    else:
        for line in lines:
            target.write(line)
            target.write("\n")


def write_reception_log(target: str | Path | IO[str], records: Iterable[LogRecord]) -> None:
    def lines():
        for r in records:
            _check_finite((r.rcvTime, *r.pos, *r.spd, *r.posNoise, *r.spdNoise), "log field")
            yield format_log_record(r)
    _write_lines(target, lines())


def write_ground_truth(target: str | Path | IO[str],
                       records: Iterable[GroundTruthRecord] | Mapping[int, GroundTruthRecord]) -> None:
    if isinstance(records, Mapping):
        records = records.values()

    def lines():
        for r in records:
            _check_finite((r.sendTime, *r.truePos, *r.trueSpd), "ground-truth field")
            yield format_ground_truth(r)
    _write_lines(target, lines())


def dumps_reception_log(records: Iterable[LogRecord]) -> str:
    buf = io.StringIO()
    write_reception_log(buf, records)
    return buf.getvalue()


# -- labels ------------------------------------------------------------------

class UnknownMessageError(KeyError):
    def __init__(self, ids: Sequence[int]):
        self.ids = list(ids)
        shown = ", ".join(map(str, self.ids[:20]))
        more = f" (+{len(self.ids) - 20} more)" if len(self.ids) > 20 else ""
        super().__init__(f"messageIDs missing from ground truth: {shown}{more}")

    def __str__(self) -> str:
        return self.args[0]


def join_labels(log: Iterable[LogRecord], truth: Mapping[int, GroundTruthRecord],
                receiverId: int) -> list[LabeledEvent]:
    """Label every beacon in ``log`` from the sender's ground-truth attacker type.

    GPS records are skipped: they are detector context, not detection events.
    """
    events = []
    missing = []
    for rec in log:
        if not isinstance(rec, BeaconRecord):
            continue
        gt = truth.get(rec.messageId)
        if gt is None:
            missing.append(rec.messageId)
            continue
        events.append(LabeledEvent(receiverId, rec, is_malicious_label(gt.attackerType)))
    if missing:
        raise UnknownMessageError(missing)
    return events


# -- run directories -----------------------------------------------------------

def log_path(run_dir: str | Path, receiverId: int) -> Path:
    return Path(run_dir) / f"log-{receiverId}.jsonl"


def list_logs(run_dir: str | Path) -> dict[int, Path]:
    """Map receiver id to log path, sorted by id."""
    found = {}
    for p in Path(run_dir).iterdir():
        m = LOG_PATTERN.match(p.name)
        if m:
            found[int(m.group(1))] = p
    return dict(sorted(found.items()))


def read_log_file(path: str | Path, receiverId: int | None = None) -> list[LogRecord]:
    try:
        with open(path, "rb") as fh:
            return parse_reception_log(fh, receiverId)
    except TraceFormatError as exc:
        raise exc.with_path(path) from None


def read_ground_truth_file(path: str | Path) -> dict[int, GroundTruthRecord]:
    try:
        with open(path, "rb") as fh:
            return parse_ground_truth(fh)
    except TraceFormatError as exc:
        raise exc.with_path(path) from None


def write_manifest(run_dir: str | Path, manifest: dict) -> None:
    path = Path(run_dir) / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_manifest(run_dir: str | Path) -> dict | None:
    path = Path(run_dir) / MANIFEST_NAME
    if not path.exists():
        return None
    return json.loads(path.read_text(encoding="utf-8"))
