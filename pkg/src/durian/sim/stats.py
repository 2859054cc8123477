"""Extreme-sample bookkeeping over rollout groups, and its tabular report."""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np

from durian.errors import InvalidInputError
from durian.reward import accuracy_reward, parse_text, parse_tokens


@dataclass(frozen=True)
class ExtremeStats:
    total: int
    zero_variance: int
    effective: int
    extreme_success: int
    extreme_failure: int

    @property
    def extreme(self):
        return self.extreme_success + self.extreme_failure

    @property
    def ratio(self):
        """Extreme share of effective samples, ``None`` when nothing is effective."""
        return self.extreme / self.effective if self.effective else None

    def as_dict(self):
        out = asdict(self)
        out["ratio"] = self.ratio
        return out


def extreme_stats(accuracy):
    """Count zero-variance, (G-1):1 success and 1:(G-1) failure rows.

    ``accuracy`` is a B x G matrix of 0/1 accuracy rewards. With G = 2 the
    two extreme patterns coincide; such rows count as success only.
    """
    A = np.asarray(accuracy)
    if A.ndim != 2:
        raise InvalidInputError(f"accuracy must be B x G, got shape {A.shape}")
    B, G = A.shape
    correct = (A > 0.5).sum(axis=1)
    zero_var = int(np.count_nonzero((correct == 0) | (correct == G)))
    success = int(np.count_nonzero(correct == G - 1)) if G >= 2 else 0
    failure = int(np.count_nonzero((correct == 1) & (correct != G - 1))) if G >= 2 else 0
    return ExtremeStats(B, zero_var, B - zero_var, success, failure)


def table_labels(group_size):
    G = group_size
    return (
        "Effective samples (participating in training)",
        f"Extreme success ({G - 1} correct & 1 wrong)",
        f"Extreme failure ({G - 1} wrong & 1 correct)",
        "Total Extreme Ratio",
    )


def format_ratio(ratio):
    return "-" if ratio is None else f"{100.0 * ratio:.1f}%"


def extreme_table_rows(stats_by_step, group_size):
    """Rows of the per-step table: header, effective, success, failure, ratio."""
    steps = sorted(stats_by_step)
    labels = table_labels(group_size)
    rows = [["Training steps", *steps]]
    rows.append([labels[0], *(stats_by_step[s].effective for s in steps)])
    rows.append([labels[1], *(stats_by_step[s].extreme_success for s in steps)])
    rows.append([labels[2], *(stats_by_step[s].extreme_failure for s in steps)])
    rows.append([labels[3], *(format_ratio(stats_by_step[s].ratio) for s in steps)])
    return rows


def write_extreme_table(fh, stats_by_step, group_size):
    w = csv.writer(fh, lineterminator="\n")
    w.writerows(extreme_table_rows(stats_by_step, group_size))


def extreme_table_text(stats_by_step, group_size):
    buf = io.StringIO()
    write_extreme_table(buf, stats_by_step, group_size)
    return buf.getvalue()


def report_steps(num_steps):
    """Steps 1, 10, 20, ... up to ``num_steps``."""
    return [s for s in [1, *range(10, num_steps + 1, 10)] if s <= num_steps]


def _record_accuracy(rec):
    if "accuracy" in rec:
        return 1 if float(rec["accuracy"]) > 0.5 else 0
    if "truth" not in rec:
        raise InvalidInputError("record has neither 'accuracy' nor 'truth'")
    if "token_ids" in rec:
        return accuracy_reward(parse_tokens(rec["token_ids"]), rec["truth"])
    if "response_text" in rec:
        return accuracy_reward(parse_text(rec["response_text"]), rec["truth"])
    raise InvalidInputError("record has no 'response_text' or 'token_ids'")


def analyze_reward_records(records, group_size):
    """Per-step extreme statistics from rollout-level reward records.

    Records are grouped by ``(step, sample_id)`` (``step`` defaults to 1).
    Groups without exactly ``group_size`` distinct rollouts are excluded.
    Returns ``(stats_by_step, excluded_count)``.
    """
    groups = defaultdict(dict)
    duplicates = set()
    for rec in records:
        try:
            key = (int(rec.get("step", 1)), rec["sample_id"])
            rollout_id = rec["rollout_id"]
        except KeyError as exc:
            raise InvalidInputError(f"record missing field {exc.args[0]!r}") from None
        if rollout_id in groups[key]:
            duplicates.add(key)
        groups[key][rollout_id] = _record_accuracy(rec)

    by_step = defaultdict(list)
    excluded = 0
    for (step, sample_id), rollouts in groups.items():
        if len(rollouts) != group_size or (step, sample_id) in duplicates:
            excluded += 1
            continue
        by_step[step].append([rollouts[r] for r in sorted(rollouts, key=str)])
    stats = {step: extreme_stats(np.array(rows)) for step, rows in by_step.items()}
    return stats, excluded
