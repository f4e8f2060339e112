import logging

import numpy as np
import pytest

from veremi_bench.core import AttackerType, Vec3, density_class
from veremi_bench.detect import (
    DetectionError,
    DetectorConfig,
    ReceiverArrays,
    ReceiverContext,
    art_check,
    available_backends,
    detect_run,
    dmv_check,
    read_verdicts,
    run_detectors,
    saw_check,
    ssc_check,
    sweep_receiver,
    write_verdicts,
)
from veremi_bench.scenario import ScenarioConfig, simulate
from veremi_bench.traceio import BeaconRecord, GpsRecord

Z = Vec3(0.0, 0.0, 0.0)


def gps(t, pos):
    return GpsRecord(t, Vec3(*pos), Z, Z, Z)


def beacon(t, sender, mid, pos, spd=(0, 0, 0)):
    return BeaconRecord(t + 1e-6, t, sender, mid, Vec3(*pos), Vec3(*spd), -80.0, Z, Z)


def ctx_at(pos, *known):
    ctx = ReceiverContext(latestGps=gps(0.0, pos))
    for b in known:
        ctx.observe(b)
    return ctx


def test_art_examples():
    ctx = ctx_at((0, 0, 0))
    b = beacon(1.0, 7, 1, (300, 400, 0))
    assert art_check(ctx, b, 450) is True
    assert art_check(ctx, b, 500) is False
    assert art_check(ctx, beacon(1.0, 7, 1, (0, 0, 0)), 100) is False


def test_saw_examples():
    ctx = ctx_at((0, 0, 0))
    near = beacon(1.0, 7, 1, (20, 0, 0))
    assert saw_check(ctx, near, 25) is True
    assert saw_check(ctx, beacon(1.0, 7, 1, (150, 0, 0)), 100) is False
    ctx.observe(near)
    assert saw_check(ctx, beacon(2.0, 7, 2, (5, 0, 0)), 25) is False


def test_ssc_examples():
    prev = beacon(1.0, 3, 1, (0, 0, 0))
    ctx = ctx_at((0, 0, 0), prev)
    assert ssc_check(ctx, beacon(2.0, 3, 2, (30, 0, 0), (30, 0, 0)), 10) is False
    assert ssc_check(ctx, beacon(2.0, 3, 2, (0, 0, 0), (30, 0, 0)), 10) is True
    assert ssc_check(ctx_at((0, 0, 0)), beacon(2.0, 3, 2, (0, 0, 0), (30, 0, 0)), 10) is False
    # Repeated or backwards send time: implausible at every threshold.
    assert ssc_check(ctx, beacon(1.0, 3, 2, (0, 0, 0)), 1e9) is True


def test_dmv_examples():
    ctx = ctx_at((0, 0, 0), beacon(1.0, 3, 1, (0, 0, 0)))
    assert dmv_check(ctx, beacon(2.0, 3, 2, (0.5, 0, 0)), 1) is True
    assert dmv_check(ctx, beacon(2.0, 3, 2, (30, 0, 0)), 25) is False
    assert dmv_check(ctx_at((0, 0, 0)), beacon(2.0, 3, 2, (0, 0, 0)), 25) is False


# Two senders, five beacons, one GPS update in between. Columns: ART 100, SAW 25, SSC 5, DMV 1.
TRACE = [
    gps(0.0, (0, 0, 0)),
    beacon(1.0, 1, 11, (20, 0, 0), (10, 0, 0)),
    beacon(1.5, 2, 12, (150, 0, 0), (5, 0, 0)),
    beacon(2.0, 1, 13, (30, 0, 0), (10, 0, 0)),
    gps(2.2, (0, 60, 0)),
    beacon(2.5, 2, 14, (150.5, 0, 0), (5, 0, 0)),
    beacon(3.0, 1, 15, (30, 0, 0), (10, 0, 0)),
]
TRACE_CONFIG = DetectorConfig((100,), (25,), (5,), (1,))
# Worked by hand:
#  11: d=20 -> ART no; first from 1 and 20 < 25 -> SAW yes.
#  12: d=150 -> ART yes; first from 2 but 150 >= 25.
#  13: moved 10 m in 1 s at claimed 10 m/s -> nothing.
#  14: receiver now at (0,60): d=162 -> ART yes; moved 0.5 m in 1 s vs 5 m/s -> SSC dev 4.5 <= 5;
#      0.5 < 1 -> DMV yes.
#  15: d=67.1 -> ART no; moved 0 m vs 10 m/s -> SSC yes; DMV yes.
TRACE_EXPECTED = {
    11: [0, 1, 0, 0],
    12: [1, 0, 0, 0],
    13: [0, 0, 0, 0],
    14: [1, 0, 0, 1],
    15: [0, 0, 1, 1],
}


def test_hand_traced_fixture_streaming():
    got = {}
    for v in run_detectors(TRACE, TRACE_CONFIG, receiverId=9):
        got.setdefault(v.messageId, []).append(int(v.malicious))
    assert got == TRACE_EXPECTED


@pytest.mark.parametrize("backend", available_backends())
def test_hand_traced_fixture_batch(backend):
    table = detect_run({9: TRACE}, TRACE_CONFIG, run="r", backend=backend)
    assert table.messageId.tolist() == list(TRACE_EXPECTED)
    assert table.flags.tolist() == list(TRACE_EXPECTED.values())


def test_verdict_count_and_empty():
    events = [gps(0.0, (0, 0, 0))] + [beacon(float(i), i, i, (i, 0, 0)) for i in range(1, 4)]
    assert len(list(run_detectors(events))) == 3 * 26
    assert list(run_detectors([])) == []
    assert len(DetectorConfig().columns) == 26


def test_beacon_before_gps_rejected():
    with pytest.raises(DetectionError):
        list(run_detectors([beacon(1.0, 1, 1, (0, 0, 0))]))
    with pytest.raises(DetectionError):
        detect_run({1: [beacon(1.0, 1, 1, (0, 0, 0))]})


def test_config_rejects_bad_thresholds():
    with pytest.raises(ValueError):
        DetectorConfig(artThresholds=())
    with pytest.raises(ValueError):
        DetectorConfig(dmvThresholds=(-1.0,))


def random_arrays(rng, n=3000, senders=12):
    s = rng.integers(0, senders, n)
    t = np.sort(rng.uniform(0, 100, n))
    t[rng.random(n) < 0.01] = t[0]  # some repeated send times
    pos = rng.normal(0, 200, (n, 3))
    stuck = rng.random(n) < 0.2
    pos[stuck] = np.round(pos[stuck] / 50) * 50  # repeated positions
    return ReceiverArrays(1, np.arange(n), s, rng.normal(0, 200, (n, 3)), pos,
                          np.abs(rng.normal(10, 8, n)), t, np.zeros(n))


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
def test_backends_agree_on_random_input():
    rng = np.random.default_rng(4)
    for _ in range(5):
        arr = random_arrays(rng)
        a = sweep_receiver(arr, DetectorConfig(), "cython")
        b = sweep_receiver(arr, DetectorConfig(), "python")
        assert np.array_equal(a, b)


def _as_log(arr):
    log = []
    for i in range(len(arr)):
        log.append(GpsRecord(arr.send_time[i], Vec3(*arr.rx_pos[i]), Z, Z, Z))
        log.append(BeaconRecord(arr.send_time[i], arr.send_time[i], int(arr.sender[i]), i,
                                Vec3(*arr.pos[i]), Vec3(float(arr.spd[i]), 0.0, 0.0), 0.0, Z, Z))
    return log


def test_streaming_matches_batch_on_random_input():
    arr = random_arrays(np.random.default_rng(8), n=800)
    log = _as_log(arr)
    cfg = DetectorConfig()
    stream = np.array([int(v.malicious) for v in run_detectors(log, cfg)]).reshape(-1, 26)
    for backend in available_backends():
        assert np.array_equal(detect_run({1: log}, cfg, backend=backend).flags, stream)


def test_monotone_in_threshold():
    arr = random_arrays(np.random.default_rng(2))
    cfg = DetectorConfig(artThresholds=tuple(range(25, 800, 25)),
                         sawThresholds=tuple(range(10, 400, 10)),
                         sscThresholds=tuple(np.arange(0.5, 30, 0.5)),
                         dmvThresholds=tuple(np.arange(1.0, 60, 1.0)))
    flags = sweep_receiver(arr, cfg).astype(bool)
    for det, shrinking in (("ART", True), ("SSC", True), ("SAW", False), ("DMV", False)):
        cols = [flags[:, j] for j, (d, _) in enumerate(cfg.columns) if d == det]
        for lo, hi in zip(cols, cols[1:]):
            if shrinking:
                assert not (hi & ~lo).any()
            else:
                assert not (lo & ~hi).any()


def test_bad_dt_logged(caplog):
    events = [gps(0.0, (0, 0, 0)), beacon(1.0, 1, 1, (0, 0, 0)), beacon(1.0, 1, 2, (5, 0, 0))]
    with caplog.at_level(logging.WARNING, logger="veremi_bench"):
        table = detect_run({1: events})
    assert "non-positive sendTime" in caplog.text
    assert all(table.column("SSC", t)[1] for t in DetectorConfig().sscThresholds)


def test_verdict_file_round_trip(tmp_path):
    cfg = ScenarioConfig(density=density_class("low"), seed=0, durationSeconds=10,
                         attackerType=AttackerType.RANDOM, attackerFraction=0.3)
    run = simulate(cfg)
    table = detect_run(run.logs, run="demo")
    path = tmp_path / "verdicts.csv"
    write_verdicts(table, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "run,receiver,messageID,detector,threshold,verdict"
    n_beacons = sum(isinstance(r, BeaconRecord) for log in run.logs.values() for r in log)
    assert len(lines) - 1 == n_beacons * 26
    back = read_verdicts(path)
    assert back.run == "demo" and back.columns == table.columns
    assert np.array_equal(back.flags, table.flags)
    assert np.array_equal(back.messageId, table.messageId)
    assert np.array_equal(back.receiver, table.receiver)


def test_env_forces_python_backend(monkeypatch):
    monkeypatch.setenv("VEREMI_BENCH_PURE_PYTHON", "1")
    from veremi_bench.detect import default_backend

    assert default_backend() == "python"
    monkeypatch.delenv("VEREMI_BENCH_PURE_PYTHON")
    assert default_backend() == ("cython" if "cython" in available_backends() else "python")


def test_unknown_backend():
    with pytest.raises(ValueError):
        sweep_receiver(random_arrays(np.random.default_rng(0), n=10), DetectorConfig(), "fortran")
