"""Synthetic inputs shared by several test modules."""

import json
import random

import numpy as np

from durian.linalg import save_feature_matrix
from durian.objective import PolicyEval

# step-1 extreme-sample counts planted into the reward log
PLANTED = {"samples": 512, "effective": 323, "success": 41, "failure": 78}


def planted_rows(G=8, seed=0):
    """512 accuracy rows with the planted effective / extreme counts."""
    rng = random.Random(seed)
    rows = [[1] * (G - 1) + [0]] * PLANTED["success"]
    rows += [[0] * (G - 1) + [1]] * PLANTED["failure"]
    mixed = PLANTED["effective"] - PLANTED["success"] - PLANTED["failure"]
    for _ in range(mixed):
        k = rng.randint(2, G - 2)
        rows.append([1] * k + [0] * (G - k))
    zero_var = PLANTED["samples"] - PLANTED["effective"]
    rows += [[1] * G] * (zero_var // 2) + [[0] * G] * (zero_var - zero_var // 2)
    rows = [rng.sample(r, len(r)) for r in rows]
    rng.shuffle(rows)
    return rows


def reward_records(rows, step=1, text=True):
    """One JSONL record per rollout; text responses encode correctness via the boxed answer."""
    out = []
    for s, row in enumerate(rows):
        for i, hit in enumerate(row):
            rec = {"step": step, "sample_id": s, "rollout_id": i}
            if text:
                answer = "7" if hit else "3"
                rec.update(truth="7", response_text=f"<think>work {s}.{i}</think> so \\boxed{{{answer}}}")
            else:
                rec["accuracy"] = hit
            out.append(rec)
    return out


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def flat_matrix(rank, P=12, d=6, seed=0):
    """Feature matrix whose centered second moment has ``rank`` equal eigenvalues."""
    rng = np.random.default_rng(seed)
    basis = np.column_stack([np.ones(P), rng.standard_normal((P, rank))])
    U = np.linalg.qr(basis)[0][:, 1:]
    V = np.linalg.qr(rng.standard_normal((d, rank)))[0]
    return U @ V.T * 2.0 + rng.standard_normal(d)


def write_matrix(path, F):
    save_feature_matrix(path, F)
    return path


def log_softmax_rows(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def make_instance(rng, B=3, G=4, V=5, max_len=6, noise=0.3, equal_lengths=False):
    n = B * G
    lengths = np.full(n, max_len) if equal_lengths else rng.integers(1, max_len + 1, size=n)
    logdists, ref, new, old, adv = [], [], [], [], []
    advantages = rng.standard_normal((B, G))
    for k in range(n):
        L = int(lengths[k])
        ld = log_softmax_rows(rng.standard_normal((L, V)))
        tok = rng.integers(0, V, size=L)
        lp = ld[np.arange(L), tok]
        logdists.append(ld)
        ref.append(np.exp(log_softmax_rows(rng.standard_normal((L, V)))))
        new.append(lp)
        old.append(lp + noise * rng.standard_normal(L))
        adv.append(np.full(L, advantages.ravel()[k]))
    return PolicyEval(new, old, G, logdists, ref), adv
