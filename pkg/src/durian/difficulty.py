"""Perceptual and reasoning difficulty scores, and quantile regrouping."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass

import numpy as np

from durian.errors import (
    DegenerateResponseError,
    DegenerateSpectrumError,
    EmptyInputError,
    InvalidInputError,
)
from durian.linalg import centered_second_moment, eigvals_symmetric, spectral_entropy

PERCEPTUAL_LEVELS = (0.25, 0.75)


@dataclass
class GroupAssignment:
    labels: np.ndarray
    num_groups: int
    thresholds: tuple[float, ...]
    degenerate: bool = False

    def members(self, group):
        return np.flatnonzero(self.labels == group)

    def sizes(self):
        return np.bincount(self.labels, minlength=self.num_groups)


def perceptual_difficulty(features):
    """Spectral entropy of the centered second-moment matrix of ``features``.

    The smaller of the patch (P x P) and feature (d x d) forms is decomposed;
    both carry the same nonzero spectrum. A constant matrix scores 0.
    """
    F = np.asarray(features, dtype=np.float64)
    mode = "feature" if F.ndim == 2 and F.shape[1] < F.shape[0] else "patch"
    eig = eigvals_symmetric(centered_second_moment(F, mode=mode))
    try:
        return spectral_entropy(eig)
    except DegenerateSpectrumError:
        return 0.0


def sequence_logprob(response, normalize=True):
    """Sum of per-token log-probs, or their mean when ``normalize`` is set."""
    lp = response.logprobs if hasattr(response, "logprobs") else np.asarray(response, dtype=np.float64)
    if lp.size == 0:
        raise DegenerateResponseError("response has no tokens")
    total = float(np.sum(lp))
    return total / lp.size if normalize else total


def sample_confidence(responses, normalize=True):
    """Mean sequence log-prob over a sample's G rollouts (higher = more confident)."""
    if len(responses) == 0:
        raise EmptyInputError("no responses for sample")
    return math.fsum(sequence_logprob(r, normalize) for r in responses) / len(responses)


def quantile(values, level):
    """Empirical quantile with linear interpolation between order statistics."""
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise EmptyInputError("quantile of an empty list")
    if not 0.0 <= level <= 1.0:
        raise InvalidInputError(f"quantile level {level} outside [0, 1]")
    h = level * (v.size - 1)
    lo = math.floor(h)
    hi = math.ceil(h)
    return float(v[lo] + (h - lo) * (v[hi] - v[lo]))


def perceptual_labels(scores, thresholds):
    """Three-way labels: 0 if H <= lower, 2 if H >= upper, else 1."""
    low, high = thresholds
    s = np.asarray(scores, dtype=np.float64)
    labels = np.ones(s.shape, dtype=np.int64)
    labels[s >= high] = 2
    labels[s <= low] = 0
    return labels


def regroup_perceptual(scores, levels=PERCEPTUAL_LEVELS, thresholds=None):
    """Split samples into low / medium / high entropy at two quantiles.

    ``thresholds`` overrides the per-batch quantiles, e.g. with values computed
    once over a whole dataset.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise EmptyInputError("no scores to regroup")
    if np.all(s == s[0]):
        return GroupAssignment(np.ones(s.size, dtype=np.int64), 3, (float(s[0]), float(s[0])), True)
    if thresholds is None:
        if s.size < 4:
            raise InvalidInputError(f"perceptual regrouping needs >= 4 samples, got {s.size}")
        thresholds = (quantile(s, levels[0]), quantile(s, levels[1]))
    return GroupAssignment(perceptual_labels(s, thresholds), 3, tuple(float(t) for t in thresholds))


def regroup_reasoning(scores, b):
    """Split samples into ``b`` confidence tiers at quantile levels u/b.

    Sample s lands in tier u when ``tau_u <= L_s < tau_{u+1}`` (the top tier is
    closed). Tiers left empty by ties are merged into a neighbor and the
    assignment is flagged degenerate.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    if b < 1:
        raise InvalidInputError(f"groups-b must be >= 1, got {b}")
    if b > s.size:
        raise InvalidInputError(f"groups-b ({b}) exceeds batch size ({s.size})")
    thresholds = [quantile(s, u / b) for u in range(1, b)]
    raw = np.array([bisect.bisect_right(thresholds, x) for x in s], dtype=np.int64)
    used = np.unique(raw)
    if used.size == b:
        return GroupAssignment(raw, b, tuple(thresholds))
    # drop empty tiers; keep the boundary below each surviving tier
    remap = np.full(b, -1, dtype=np.int64)
    remap[used] = np.arange(used.size)
    kept = tuple(thresholds[u - 1] for u in used[1:])
    return GroupAssignment(remap[raw], int(used.size), kept, True)


def write_scores_csv(path_or_file, scores, column):
    """Write ``sample_id,<column>`` rows with 6 significant digits."""
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", column])
        for i, v in enumerate(scores):
            w.writerow([i, f"{v:.6g}"])

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write(fh)
