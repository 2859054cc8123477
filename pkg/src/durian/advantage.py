"""Group-relative advantages: per-sample GRPO, shared-std regrouped, combined."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from durian.errors import DegenerateGroupError, DegenerateResponseError, InvalidInputError

EPS_STD = 1e-6
KINDS = ("grpo", "perceptual", "reasoning", "combined")


@dataclass
class AdvantageMatrix:
    values: np.ndarray
    kind: str
    degenerate: np.ndarray | None = None
    """Per-row flags for ``grpo``; per-group flags for the regrouped kinds."""

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class CombineWeights:
    alpha_ori: float = 0.6
    alpha_percep: float = 0.2
    alpha_reason: float = 0.2

    def __post_init__(self):
        w = (self.alpha_ori, self.alpha_percep, self.alpha_reason)
        if any(not np.isfinite(a) or a < 0 for a in w):
            raise InvalidInputError(f"weights must be finite and nonnegative, got {w}")
        if sum(w) <= 0:
            raise InvalidInputError("at least one weight must be positive")

    def as_tuple(self):
        return (self.alpha_ori, self.alpha_percep, self.alpha_reason)


def _check_rewards(rewards, mask):
    R = np.asarray(rewards, dtype=np.float64)
    if R.ndim != 2:
        raise InvalidInputError(f"rewards must be B x G, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise InvalidInputError("rewards contain NaN or Inf")
    if mask is None:
        M = np.ones(R.shape, dtype=bool)
    else:
        M = np.asarray(mask, dtype=bool)
        if M.ndim == 1:
            M = np.repeat(M[:, None], R.shape[1], axis=1)
        if M.shape != R.shape:
            raise InvalidInputError(f"mask shape {M.shape} does not match rewards {R.shape}")
    return R, M


def _mean_std(values):
    """Mean and Bessel-corrected std of a 1-D array (std is nan below 2 values)."""
    n = values.size
    if n == 0:
        return np.nan, np.nan
    mean = values.sum() / n
    if n < 2:
        return mean, np.nan
    dev = values - mean
    return mean, float(np.sqrt((dev @ dev) / (n - 1)))


def grpo_advantage(rewards, mask=None, eps_std=EPS_STD):
    """Per-sample normalization ``(r_i - mean) / std`` over each row of G rewards.

    Rows whose std is below ``eps_std`` (or with fewer than two unmasked
    rewards) get zero advantages and are flagged degenerate.
    """
    R, M = _check_rewards(rewards, mask)
    if R.shape[1] < 2:
        raise InvalidInputError(f"rollout size G must be >= 2, got {R.shape[1]}")
    A = np.zeros_like(R)
    degenerate = np.zeros(R.shape[0], dtype=bool)
    for s in range(R.shape[0]):
        keep = M[s]
        mean, std = _mean_std(R[s, keep])
        if not std >= eps_std:
            degenerate[s] = True
            continue
        A[s, keep] = (R[s, keep] - mean) / std
    return AdvantageMatrix(A, "grpo", degenerate)


def _labels_for(assignment, batch):
    labels = np.asarray(getattr(assignment, "labels", assignment), dtype=np.int64)
    num_groups = getattr(assignment, "num_groups", int(labels.max()) + 1 if labels.size else 0)
    if labels.shape != (batch,):
        raise InvalidInputError(f"assignment covers {labels.size} samples, batch has {batch}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_groups):
        raise InvalidInputError("assignment has labels outside [0, num_groups)")
    return labels, num_groups


def _group_stds(R, M, labels, num_groups):
    stds = np.full(num_groups, np.nan)
    for a in range(num_groups):
        rows = labels == a
        _, stds[a] = _mean_std(R[rows][M[rows]])
    return stds


def shared_group_std(rewards, assignment, mask=None):
    """Bessel-corrected std of all rewards pooled over each group's samples."""
    R, M = _check_rewards(rewards, mask)
    labels, num_groups = _labels_for(assignment, R.shape[0])
    stds = _group_stds(R, M, labels, num_groups)
    bad = np.flatnonzero(np.isnan(stds))
    if bad.size:
        raise DegenerateGroupError(f"groups {bad.tolist()} have fewer than 2 pooled rewards")
    return stds


def group_normalized_advantage(rewards, assignment, mask=None, eps_std=EPS_STD,
                               kind="perceptual", pool_mask=None):
    """Per-sample centered rewards divided by the pooled std of the sample's group.

    The numerator uses each sample's own mean over its G rewards; only the
    denominator is shared. Groups whose pooled std is undefined or below
    ``eps_std`` use ``eps_std`` instead and are flagged in ``degenerate``.
    ``pool_mask`` selects which rewards enter the pooled std (defaults to
    ``mask``).
    """
    R, M = _check_rewards(rewards, mask)
    _, P = _check_rewards(R, M if pool_mask is None else pool_mask)
    labels, num_groups = _labels_for(assignment, R.shape[0])
    stds = _group_stds(R, P, labels, num_groups)
    degenerate = ~(stds >= eps_std)
    denom = np.where(degenerate, eps_std, stds)
    A = np.zeros_like(R)
    for s in range(R.shape[0]):
        keep = M[s]
        if not keep.any():
            continue
        vals = R[s, keep]
        if np.all(vals == vals[0]):
            # exact zero: a rounded mean divided by eps_std would leave ~1e-11 noise
            continue
        mean = vals.sum() / vals.size
        A[s, keep] = (vals - mean) / denom[labels[s]]
    return AdvantageMatrix(A, kind, degenerate)


def combine_advantages(a_grpo, a_percep, a_reason, weights=None):
    """Element-wise weighted sum of the three advantage matrices."""
    if weights is None:
        weights = CombineWeights()
    elif not isinstance(weights, CombineWeights):
        weights = CombineWeights(*weights)
    mats = [np.asarray(a, dtype=np.float64) for a in (a_grpo, a_percep, a_reason)]
    if not mats[0].shape == mats[1].shape == mats[2].shape:
        raise InvalidInputError(f"shape mismatch: {[m.shape for m in mats]}")
    wo, wp, wr = weights.as_tuple()
    return AdvantageMatrix(wo * mats[0] + wp * mats[1] + wr * mats[2], "combined")


def token_broadcast(advantages, lengths, mask=None):
    """Repeat each response's advantage over its tokens.

    Returns a list of 1-D arrays in row-major (sample, rollout) order; masked
    responses yield empty arrays.
    """
    A = np.asarray(advantages, dtype=np.float64)
    L = np.asarray(lengths, dtype=np.int64)
    if L.shape != A.shape:
        raise InvalidInputError(f"lengths shape {L.shape} does not match advantages {A.shape}")
    _, M = _check_rewards(A, mask)
    out = []
    for s in range(A.shape[0]):
        for i in range(A.shape[1]):
            if not M[s, i]:
                out.append(np.zeros(0))
                continue
            if L[s, i] < 1:
                raise DegenerateResponseError(f"response ({s}, {i}) has no tokens")
            out.append(np.full(L[s, i], A[s, i]))
    return out
