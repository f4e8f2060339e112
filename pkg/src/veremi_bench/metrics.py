"""Confusion matrices, precision/recall, per-vehicle error dispersion and CSV reports.

Detection events are the unit of counting: one verdict by one receiver on
one received beacon. Ratios with an empty denominator are ``None``
("undefined") rather than 0.
"""

from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import is_malicious_label
from .detect import Verdict, VerdictTable
from .traceio import GroundTruthRecord

UNDEFINED = "undefined"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class PrPoint:
    detector: str
    threshold: float
    precision: float | None
    recall: float | None


def pr_point(m: ConfusionMatrix, detector: str = "", threshold: float = math.nan) -> PrPoint:
    return PrPoint(detector, threshold, _ratio(m.tp, m.tp + m.fp), _ratio(m.tp, m.tp + m.fn))


def fpr_tpr(m: ConfusionMatrix) -> tuple[float | None, float | None]:
    return _ratio(m.fp, m.fp + m.tn), _ratio(m.tp, m.fn + m.tp)


def confusion_from_arrays(flags: np.ndarray, labels: np.ndarray) -> ConfusionMatrix:
    flags = np.asarray(flags, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    return ConfusionMatrix(
        int(np.count_nonzero(flags & labels)),
        int(np.count_nonzero(flags & ~labels)),
        int(np.count_nonzero(~flags & ~labels)),
        int(np.count_nonzero(~flags & labels)),
    )


class MissingLabelError(KeyError):
    pass


def confusion(verdicts: Iterable[Verdict], labels: Mapping[int, bool], *,
              detector: str | None = None, threshold: float | None = None,
              receivers: Iterable[int] | None = None) -> ConfusionMatrix:
    """Count verdicts that fall in scope against ``messageId -> is-attack`` labels."""
    keep = None if receivers is None else set(receivers)
    tp = fp = tn = fn = 0
    for v in verdicts:
        if detector is not None and v.detector != detector:
            continue
        if threshold is not None and v.threshold != threshold:
            continue
        if keep is not None and v.receiverId not in keep:
            continue
        try:
            label = labels[v.messageId]
        except KeyError:
            raise MissingLabelError(f"no label for messageID {v.messageId}") from None
        if v.malicious:
            if label:
                tp += 1
            else:
                fp += 1
        elif label:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, tn, fn)


@dataclass(frozen=True)
class PerVehicleRates:
    receiverId: int
    fpr: float | None
    fnr: float | None


def per_vehicle_rates(verdicts: Iterable[Verdict], labels: Mapping[int, bool], *,
                      detector: str | None = None, threshold: float | None = None,
                      receivers: Iterable[int] | None = None) -> list[PerVehicleRates]:
    """False-positive and false-negative rate of each receiver with events in scope."""
    keep = None if receivers is None else set(receivers)
    groups: dict[int, list[Verdict]] = {}
    for v in verdicts:
        if detector is not None and v.detector != detector:
            continue
        if threshold is not None and v.threshold != threshold:
            continue
        if keep is not None and v.receiverId not in keep:
            continue
        groups.setdefault(v.receiverId, []).append(v)
    out = []
    for rid in sorted(groups):
        m = confusion(groups[rid], labels)
        out.append(PerVehicleRates(rid, _ratio(m.fp, m.fp + m.tn), _ratio(m.fn, m.fn + m.tp)))
    return out


def gini(values: Sequence[float] | np.ndarray) -> float:
    """Gini index ``sum_ij |x_i - x_j| / (2 n^2 mean)`` of non-negative values.

    Evaluated in O(n log n) from the sorted values; returns 0 when every
    value is 0.
    """
    xs = sorted(float(v) for v in values)
    n = len(xs)
    if n == 0:
        raise ValueError("gini of an empty population")
    if xs[0] < 0:
        raise ValueError("gini is only defined for non-negative values")
    if not math.isfinite(xs[-1]):
        raise ValueError("gini needs finite values")
    total = math.fsum(xs)
    if total == 0:
        return 0.0
    # fsum makes mirrored terms +k*x and -k*x cancel exactly for equal values.
    num = math.fsum((2 * i - n + 1) * x for i, x in enumerate(xs))
    return max(num / (n * total), 0.0)


@dataclass(frozen=True)
class GiniReport:
    detector: str
    threshold: float
    giniFpr: float | None
    giniFnr: float | None
    populationSizes: tuple[int, int]


def gini_report(rates: Sequence[PerVehicleRates], detector: str = "",
                threshold: float = math.nan) -> GiniReport:
    fprs = [r.fpr for r in rates if r.fpr is not None]
    fnrs = [r.fnr for r in rates if r.fnr is not None]
    return GiniReport(detector, threshold, gini(fprs) if fprs else None,
                      gini(fnrs) if fnrs else None, (len(fprs), len(fnrs)))


def aggregate_runs(values: Sequence[float]) -> tuple[float, float | None]:
    """Mean and sample (n-1) standard deviation; the deviation is ``None`` for one run."""
    if not values:
        raise ValueError("aggregate_runs needs at least one value")
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else None
    return mean, std


# -- whole-run evaluation --------------------------------------------------------

@dataclass(frozen=True)
class RunInfo:
    run: str
    attackerType: int
    density: str
    attackerFraction: float | None
    seed: int | None


@dataclass
class RunEvaluation:
    info: RunInfo
    columns: list[tuple[str, float]]
    matrices: dict[tuple[str, float], ConfusionMatrix]
    rates: dict[tuple[str, float], list[PerVehicleRates]]
    events: int
    prevalence: float | None = None
    gini: dict[tuple[str, float], GiniReport] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.gini:
            self.gini = {c: gini_report(self.rates[c], *c) for c in self.columns}

    def pr(self, detector: str, threshold: float) -> PrPoint:
        return pr_point(self.matrices[(detector, threshold)], detector, threshold)


def sender_roles(truth: Mapping[int, GroundTruthRecord]) -> dict[int, int]:
    roles: dict[int, int] = {}
    for gt in truth.values():
        roles.setdefault(gt.senderId, int(gt.attackerType))
    return roles


def event_labels(table: VerdictTable, truth: Mapping[int, GroundTruthRecord]) -> np.ndarray:
    try:
        return np.array([is_malicious_label(truth[int(m)].attackerType) for m in table.messageId],
                        dtype=bool)
    except KeyError as exc:
        raise MissingLabelError(f"no ground truth for messageID {exc.args[0]}") from None


def in_scope(table: VerdictTable, truth: Mapping[int, GroundTruthRecord],
             include_attacker_receivers: bool = False) -> np.ndarray:
    """Events counted by default: those observed by benign receivers."""
    if include_attacker_receivers:
        return np.ones(len(table), dtype=bool)
    roles = sender_roles(truth)
    attackers = np.array(sorted(r for r, t in roles.items() if t), dtype=np.int64)
    return ~np.isin(table.receiver, attackers)


def evaluate_run(table: VerdictTable, truth: Mapping[int, GroundTruthRecord], info: RunInfo,
                 include_attacker_receivers: bool = False) -> RunEvaluation:
    labels = event_labels(table, truth)
    scope = in_scope(table, truth, include_attacker_receivers)
    receivers = table.receiver[scope]
    labels = labels[scope]
    flags = table.flags[scope].astype(bool)
    uniq, idx = np.unique(receivers, return_inverse=True)
    matrices, rates = {}, {}
    for j, col in enumerate(table.columns):
        f = flags[:, j]
        matrices[col] = confusion_from_arrays(f, labels)
        tp = np.bincount(idx, weights=f & labels, minlength=len(uniq))
        fp = np.bincount(idx, weights=f & ~labels, minlength=len(uniq))
        tn = np.bincount(idx, weights=~f & ~labels, minlength=len(uniq))
        fn = np.bincount(idx, weights=~f & labels, minlength=len(uniq))
        rates[col] = [
            PerVehicleRates(int(uniq[k]), _ratio(int(fp[k]), int(fp[k] + tn[k])),
                            _ratio(int(fn[k]), int(fn[k] + tp[k])))
            for k in range(len(uniq))
        ]
    prevalence = float(labels.mean()) if len(labels) else None
    return RunEvaluation(info, list(table.columns), matrices, rates, int(scope.sum()), prevalence)


# -- CSV output --------------------------------------------------------------------

PR_HEADER = ["detector", "threshold", "attackerType", "density", "attackerFraction",
             "seedCount", "precisionMean", "precisionStd", "recallMean", "recallStd"]
GINI_HEADER = ["detector", "threshold", "attackerType", "density", "attackerFraction",
               "seedCount", "giniFprMean", "giniFprStd", "giniFnrMean", "giniFnrStd",
               "fprPopulationMean", "fnrPopulationMean"]
CONFUSION_HEADER = ["run", "detector", "threshold", "attackerType", "density",
                    "attackerFraction", "seed", "tp", "fp", "tn", "fn",
                    "precision", "recall", "fpr", "tpr"]
CURVE_HEADER = ["detector", "attackerType", "density", "attackerFraction", "threshold",
                "precision", "recall"]


def fmt(value) -> str:
    if value is None:
        return UNDEFINED
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mean_std(values: Iterable[float | None]) -> tuple[float | None, float | None]:
    defined = [v for v in values if v is not None]
    if not defined:
        return None, None
    return aggregate_runs(defined)


def _group_key(info: RunInfo) -> tuple:
    frac = info.attackerFraction
    return (info.attackerType, info.density, frac)


def _sort_group(key: tuple) -> tuple:
    a, d, f = key
    return (a, d, (f is None, f if f is not None else 0.0))


def _write_csv(path: Path, header: list[str], rows: Iterable[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def emit_report(evaluations: Sequence[RunEvaluation], out_dir: str | Path) -> list[Path]:
    """Write ``pr.csv``, ``gini.csv``, ``confusion.csv`` and plot data ``pr_curves.csv``.

    Rows are ordered lexicographically on their key columns: detector name,
    numeric threshold, attacker type, density, attacker fraction. Aggregates are mean and
    sample deviation over runs sharing attacker type, density and fraction.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple, list[RunEvaluation]] = {}
    for ev in evaluations:
        groups.setdefault(_group_key(ev.info), []).append(ev)
    columns = sorted({c for ev in evaluations for c in ev.columns},
                     key=lambda c: (c[0], c[1]))
    group_keys = sorted(groups, key=_sort_group)

    pr_rows, gini_rows, curve_rows = [], [], []
    for det, thr in columns:
        for key in group_keys:
            runs = [ev for ev in groups[key] if (det, thr) in ev.matrices]
            if not runs:
                continue
            points = [ev.pr(det, thr) for ev in runs]
            pm, ps = _mean_std(p.precision for p in points)
            rm, rs = _mean_std(p.recall for p in points)
            pr_rows.append([det, thr, *key, len(runs), pm, ps, rm, rs])
            if pm is not None and rm is not None:
                curve_rows.append((det, *key, thr, pm, rm))
            reports = [ev.gini[(det, thr)] for ev in runs]
            fm, fs = _mean_std(r.giniFpr for r in reports)
            nm, ns = _mean_std(r.giniFnr for r in reports)
            fpop = statistics.fmean(r.populationSizes[0] for r in reports)
            npop = statistics.fmean(r.populationSizes[1] for r in reports)
            gini_rows.append([det, thr, *key, len(runs), fm, fs, nm, ns, fpop, npop])
    curve_rows.sort(key=lambda r: (r[0], _sort_group(r[1:4]), r[4]))

    confusion_rows = []
    for ev in sorted(evaluations, key=lambda e: e.info.run):
        i = ev.info
        for det, thr in sorted(ev.columns, key=lambda c: (c[0], c[1])):
            m = ev.matrices[(det, thr)]
            p = pr_point(m)
            fpr, tpr = fpr_tpr(m)
            confusion_rows.append([i.run, det, thr, i.attackerType, i.density, i.attackerFraction,
                                   i.seed, m.tp, m.fp, m.tn, m.fn, p.precision, p.recall, fpr, tpr])

    paths = [out / "pr.csv", out / "gini.csv", out / "confusion.csv", out / "pr_curves.csv"]
    _write_csv(paths[0], PR_HEADER, pr_rows)
    _write_csv(paths[1], GINI_HEADER, gini_rows)
    _write_csv(paths[2], CONFUSION_HEADER, confusion_rows)
    _write_csv(paths[3], CURVE_HEADER, curve_rows)
    return paths
