"""Synthetic tasks with controlled perceptual entropy and reasoning hardness."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from durian.errors import ConfigError

SEPARATION = 3.0
CONTEXT_NOISE = 1.0
MEAN_SCALE = 0.5


@dataclass(frozen=True)
class TaskDims:
    patches: int = 16
    features: int = 8
    context: int = 4
    answers: int = 4

    @property
    def max_rank(self):
        return min(self.patches - 1, self.features)


@dataclass
class SyntheticTask:
    features: np.ndarray
    context: np.ndarray
    truth: int
    hardness: float
    target_entropy: float
    task_id: int = 0

    @property
    def pooled(self):
        return self.features.mean(axis=0)


def _entropy(p):
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def _tilted(t, rank):
    logits = -t * np.arange(rank, dtype=np.float64)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def tilted_spectrum(target_entropy, rank, tol=1e-8):
    """Distribution ``p_k ~ exp(-t k)`` over ``rank`` values whose entropy hits the target.

    The tilt ``t`` is found by bisection; entropy decreases monotonically in t
    from ``log(rank)`` to 0.
    """
    max_h = math.log(rank)
    if not 0.0 <= target_entropy <= max_h + 1e-12:
        raise ConfigError("target_entropy", f"{target_entropy} outside [0, log({rank})={max_h:.6f}]")
    if target_entropy >= max_h - 1e-15:
        return np.full(rank, 1.0 / rank)
    if target_entropy == 0.0:
        p = np.zeros(rank)
        p[0] = 1.0
        return p
    lo, hi = 0.0, 1.0
    while _entropy(_tilted(hi, rank)) > target_entropy:
        hi *= 2.0
        if hi > 1e6:
            raise ConfigError("target_entropy", f"cannot reach entropy {target_entropy}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        h = _entropy(_tilted(mid, rank))
        if abs(h - target_entropy) <= tol * 1e-4:
            break
        if h > target_entropy:
            lo = mid
        else:
            hi = mid
    return _tilted(mid, rank)


def matrix_from_spectrum(eigenvalues, patches, features, rng, mean_scale=MEAN_SCALE):
    """P x d matrix whose centered patch second-moment matrix has the given nonzero spectrum.

    Left singular vectors are drawn orthogonal to the all-ones vector so that
    mean-centering leaves the constructed component untouched.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    r = lam.size
    if r > min(patches - 1, features):
        raise ConfigError("rank", f"rank {r} exceeds min(P-1, d) = {min(patches - 1, features)}")
    basis = np.column_stack([np.ones(patches), rng.standard_normal((patches, r))])
    U = np.linalg.qr(basis)[0][:, 1:]
    V = np.linalg.qr(rng.standard_normal((features, r)))[0]
    X = (U * np.sqrt(lam * (patches - 1))) @ V.T
    return X + mean_scale * rng.standard_normal(features)


def class_embeddings(dims, rng):
    """Fixed K x m answer prototypes (unit rows; orthonormal when m >= K)."""
    A = rng.standard_normal((max(dims.context, dims.answers), dims.context))
    if dims.context >= dims.answers:
        Q = np.linalg.qr(A.T)[0].T
        return Q[: dims.answers]
    A = A[: dims.answers]
    return A / np.linalg.norm(A, axis=1, keepdims=True)


def generate_task(target_entropy, hardness, dims, rng, embeddings=None, rank=None, task_id=0):
    """Build one task: a feature matrix at the target entropy plus a noisy question.

    The question vector is ``SEPARATION * (1 - hardness) * prototype[truth]``
    plus unit Gaussian noise, so the answer gets less separable as hardness
    grows.
    """
    if not 0.0 <= hardness <= 1.0:
        raise ConfigError("hardness", f"{hardness} outside [0, 1]")
    if not isinstance(dims, TaskDims):
        dims = TaskDims(*dims)
    rank = dims.max_rank if rank is None else rank
    if not 1 <= rank <= dims.max_rank:
        raise ConfigError("rank", f"must be in [1, {dims.max_rank}]")
    p = tilted_spectrum(target_entropy, rank)
    F = matrix_from_spectrum(p * dims.features, dims.patches, dims.features, rng)
    if embeddings is None:
        embeddings = np.eye(dims.answers, dims.context)
    truth = int(rng.integers(dims.answers))
    context = SEPARATION * (1.0 - hardness) * embeddings[truth]
    context = context + CONTEXT_NOISE * rng.standard_normal(dims.context)
    return SyntheticTask(F, context, truth, float(hardness), float(target_entropy), task_id)
