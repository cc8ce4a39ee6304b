"""Metrics and statistics over trial records."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .env import BlicketError
from .harness import TrialRecord, score_qa
from .hypotheses import (InconsistentHistoryError, ObservationPair, enumerate_space,
                         filter_consistent)

logger = logging.getLogger(__name__)


class CorruptRecordError(BlicketError):
    pass


class UndefinedStatisticError(BlicketError, ValueError):
    pass


def elimination_progress(total_hypotheses: int, remaining: int) -> float:
    """0 with nothing eliminated, 1 once a single hypothesis is left."""
    if total_hypotheses < 2:
        raise ValueError("need at least two hypotheses")
    if remaining < 1:
        raise InconsistentHistoryError("no hypotheses remain")
    if remaining > total_hypotheses:
        raise ValueError("more remaining than total")
    return (total_hypotheses - remaining) / (total_hypotheses - 1)


def normalized_progress(rho_model: float, rho_random: float) -> float:
    """Where ``rho_model`` sits between the random baseline and 1 (negative if below)."""
    if rho_random >= 1:
        raise UndefinedStatisticError("random baseline already at full progress")
    return (rho_model - rho_random) / (1 - rho_random)


@dataclass
class TrialMetrics:
    all_correct: bool
    per_object_accuracy: float
    steps_taken: int
    unique_states_visited: int
    info_gain_bits: float
    final_support_size: int
    distinct_final_functions: int
    final_progress: float
    steps_to_resolution: int | None
    response_length: float | None
    progress_curve: list[float] = field(default_factory=list)


def replay_support_sizes(record: TrialRecord):
    """Support size after each event, recomputed from the events alone."""
    belief = enumerate_space(record.num_objects).full_belief()
    sizes = [belief.size]
    for ev in record.events:
        if ev["action"]["kind"] in ("put", "take") and ev.get("valid", True):
            belief = filter_consistent(belief, ObservationPair(ev["placement"], ev["light"]))
        sizes.append(belief.size)
    return sizes, belief


def trial_metrics(record: TrialRecord) -> TrialMetrics:
    if not record.complete:
        raise CorruptRecordError("record is incomplete")
    sizes, belief = replay_support_sizes(record)
    if sizes != list(record.per_step_support_size):
        raise CorruptRecordError(
            f"logged support sizes {record.per_step_support_size} != replay {sizes}")
    obs_from_events = [{"placement": e["placement"], "light": e["light"]} for e in record.events
                       if e["action"]["kind"] in ("put", "take") and e.get("valid", True)]
    if obs_from_events != record.observation_pairs:
        raise CorruptRecordError("observation pairs disagree with events")

    total = sizes[0]
    visited = {tuple(record.initial_placement)} | {tuple(e["placement"]) for e in record.events}
    curve = [elimination_progress(total, s) for s in sizes]
    resolved_at = None
    space = enumerate_space(record.num_objects)
    b = space.full_belief()
    if b.is_resolved():
        resolved_at = 0
    for t, ev in enumerate(record.events, start=1):
        if resolved_at is not None:
            break
        if ev["action"]["kind"] in ("put", "take") and ev.get("valid", True):
            b = filter_consistent(b, ObservationPair(ev["placement"], ev["light"]))
            if b.is_resolved():
                resolved_at = t

    if record.qa_answers:
        all_correct, per_obj = score_qa(record.qa_answers, record.ground_truth["mask"])
        acc = sum(per_obj) / len(per_obj) if per_obj else 1.0
    else:
        all_correct, acc = False, float("nan")
    lengths = record.qa_response_lengths
    return TrialMetrics(
        all_correct=all_correct,
        per_object_accuracy=acc,
        steps_taken=len(record.events),
        unique_states_visited=len(visited),
        info_gain_bits=math.log2(total) - math.log2(sizes[-1]),
        final_support_size=sizes[-1],
        distinct_final_functions=len({h.function_key() for h in belief.members()}),
        final_progress=curve[-1],
        steps_to_resolution=resolved_at,
        response_length=float(np.mean(lengths)) if lengths else None,
        progress_curve=curve,
    )


# ---------------------------------------------------------------- statistics

def _average_ranks(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    return float((a @ b) / math.sqrt((a @ a) * (b @ b)))


def spearman(xs, ys, method: str = "t") -> tuple[float, float]:
    """Spearman rank correlation with a two-sided p-value.

    ``method="t"`` uses the t approximation with n - 2 degrees of freedom;
    ``method="exact"`` enumerates all permutations (n < 10 only).
    """
    if len(xs) != len(ys):
        raise ValueError("xs and ys differ in length")
    n = len(xs)
    if n < 3:
        raise UndefinedStatisticError("need at least three pairs")
    rx, ry = _average_ranks(xs), _average_ranks(ys)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise UndefinedStatisticError("constant input has no rank correlation")
    rho = _pearson(rx, ry)
    if method == "exact":
        if n >= 10:
            raise ValueError("exact permutation test limited to n < 10")
        null = np.array([_pearson(rx, ry[list(p)]) for p in itertools.permutations(range(n))])
        p = float(np.mean(np.abs(null) >= abs(rho) - 1e-12))
        return rho, p
    if abs(rho) >= 1.0:
        return float(np.sign(rho)), 0.0
    t = rho * math.sqrt((n - 2) / (1 - rho * rho))
    return rho, float(2 * stats.t.sf(abs(t), n - 2))


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "ns"


def welch_t_test(a, b) -> tuple[float, float, str]:
    """Two-sided Welch t-test (unequal variances, Welch-Satterthwaite df)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise UndefinedStatisticError("each sample needs at least two values")
    va, vb = a.var(ddof=1) / len(a), b.var(ddof=1) / len(b)
    if va + vb == 0:
        raise UndefinedStatisticError("both samples have zero variance")
    t = float((a.mean() - b.mean()) / math.sqrt(va + vb))
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    p = float(2 * stats.t.sf(abs(t), df))
    return t, p, significance_stars(p)


# ---------------------------------------------------------------- aggregation

METRIC_FIELDS = ("all_correct", "per_object_accuracy", "steps_taken", "unique_states_visited",
                 "info_gain_bits", "final_support_size", "final_progress",
                 "steps_to_resolution", "response_length")


def group_key(record: TrialRecord, name: str):
    cfg = record.config
    if name == "model":
        return model_name(record)
    if hasattr(cfg, name):
        v = getattr(cfg, name)
        return getattr(v, "value", v)
    raise KeyError(f"unknown grouping field {name!r}")


def model_name(record: TrialRecord) -> str:
    backend = record.config.backend or {}
    if record.config.agent_kind in ("chat", "sampling") and backend.get("model_name"):
        return f"{record.config.agent_kind}:{backend['model_name']}"
    return record.config.agent_kind


def _summary(values) -> tuple[float, float, float]:
    v = np.asarray([x for x in values if x is not None and not
                    (isinstance(x, float) and math.isnan(x))], dtype=float)
    if len(v) == 0:
        return float("nan"), float("nan"), float("nan")
    sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
    return float(v.mean()), sd, sd / math.sqrt(len(v))


def aggregate(records, group_by=("agent_kind", "num_objects", "rule")) -> list[dict]:
    """Per-group mean, sd and sem of every metric; rows in sorted key order."""
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    groups: dict[tuple, list[TrialMetrics]] = defaultdict(list)
    for rec in records:
        if not rec.complete:
            logger.warning("skipping incomplete record seed=%s", rec.config.seed)
            continue
        groups[tuple(group_key(rec, g) for g in group_by)].append(trial_metrics(rec))
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        ms = groups[key]
        row = dict(zip(group_by, key))
        row["n"] = len(ms)
        for f in METRIC_FIELDS:
            mean, sd, sem = _summary(float(getattr(m, f)) if getattr(m, f) is not None else None
                                     for m in ms)
            row[f"{f}_mean"], row[f"{f}_sd"], row[f"{f}_sem"] = mean, sd, sem
        rows.append(row)
    return rows


def progress_table(records) -> list[dict]:
    """Final progress and random-normalized progress per (model, objects, rule).

    Normalization uses the random agent's mean final progress in the same
    (objects, rule) cell; cells without random records get blank columns.
    """
    records = [r for r in records if r.complete]
    cells: dict[tuple, list[float]] = defaultdict(list)
    for r in records:
        cells[(model_name(r), r.num_objects, r.config.rule.value)].append(
            trial_metrics(r).final_progress)
    baseline = {(n, rule): float(np.mean(v)) for (m, n, rule), v in cells.items() if m == "random"}
    rows = []
    for (m, n, rule) in sorted(cells, key=lambda k: (k[1], k[2], k[0])):
        rho = cells[(m, n, rule)]
        mean, sd, _ = _summary(rho)
        row = {"model": m, "objects": n, "rule": rule, "rho_mean": mean, "rho_sd": sd,
               "rho_bar_mean": None, "rho_bar_sd": None}
        base = baseline.get((n, rule))
        if base is not None and base < 1:
            bars = [normalized_progress(x, base) for x in rho]
            row["rho_bar_mean"], row["rho_bar_sd"], _ = _summary(bars)
        rows.append(row)
    return rows


def to_csv(rows: list[dict], path=None) -> str:
    """RFC-4180 CSV with a header row; columns in first-row order."""
    buf = io.StringIO()
    if rows:
        cols = list(rows[0])
        for r in rows[1:]:
            cols += [c for c in r if c not in cols]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\r\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in cols})
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return repr(round(v, 10))
    return v


def metrics_rows(records) -> list[dict]:
    rows = []
    for r in records:
        m = asdict(trial_metrics(r))
        m.pop("progress_curve")
        rows.append({"seed": r.config.seed, "agent_kind": r.config.agent_kind,
                     "model": model_name(r), "num_objects": r.num_objects,
                     "rule": r.config.rule.value, **m})
    return rows
