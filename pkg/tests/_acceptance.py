"""Collects one line per acceptance criterion for the end-of-run summary."""

RESULTS: dict[int, str] = {}


def record(number, name, ok, detail, elapsed, limit):
    timing_ok = elapsed < limit
    status = "PASS" if ok and timing_ok else "FAIL"
    RESULTS[number] = (f"[{status}] criterion {number} {name}: {detail}; "
                       f"runtime {elapsed:.1f}s (limit {limit:g}s)")
    return ok and timing_ok
