"""Linear-softmax toy policy over the THINK/MARK/END/answer token grammar.

The logits at each position are a linear function of the task encoding
``[context, pooled image features, 1]``, with a separate weight block for
each possible previous token (plus a start state). That keeps the model
linear in its parameters while letting it learn the output grammar.
"""

from __future__ import annotations

import numpy as np

from durian.records import ResponseRecord
from durian.reward import END, parse_tokens, vocab_size


def log_softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def task_encoding(task):
    return np.concatenate([task.context, task.pooled, [1.0]])


class ToyPolicy:
    def __init__(self, num_answers, encoding_dim, temperature=1.0, weights=None, init_scale=0.0, rng=None):
        if temperature <= 0:
            raise ValueError("temperature must be > 0")
        self.vocab = vocab_size(num_answers)
        self.num_answers = num_answers
        self.encoding_dim = encoding_dim
        self.temperature = float(temperature)
        self.start_state = self.vocab
        shape = (self.vocab, self.vocab + 1, encoding_dim)
        if weights is not None:
            self.weights = np.array(weights, dtype=np.float64).reshape(shape)
        elif init_scale > 0:
            self.weights = init_scale * (rng or np.random.default_rng(0)).standard_normal(shape)
        else:
            self.weights = np.zeros(shape)

    def copy(self, frozen=False):
        other = ToyPolicy(self.num_answers, self.encoding_dim, self.temperature, self.weights.copy())
        if frozen:
            other.weights.flags.writeable = False
        return other

    def logdist(self, states, encodings):
        """Log-probabilities over the vocabulary, one row per (state, encoding) pair."""
        W = self.weights[:, states, :]  # V x N x E
        z = np.einsum("vne,ne->nv", W, encodings)
        return log_softmax(z / self.temperature)

    def backprop(self, states, encodings, grad_logdist, logdist):
        """Weight gradient given d(loss)/d(log-distribution) for each row."""
        p = np.exp(logdist)
        dz = (grad_logdist - p * grad_logdist.sum(axis=1, keepdims=True)) / self.temperature
        grad = np.zeros_like(self.weights)
        for state in np.unique(states):
            rows = states == state
            grad[:, state, :] += dz[rows].T @ encodings[rows]
        return grad

    def token_logdists(self, task, tokens):
        """Per-position log-distributions for a given token sequence."""
        tokens = np.asarray(tokens, dtype=np.int64)
        states = np.concatenate([[self.start_state], tokens[:-1]]).astype(np.int64)
        enc = np.repeat(task_encoding(task)[None, :], tokens.size, axis=0)
        return self.logdist(states, enc)

    def sequence_logprobs(self, task, tokens):
        tokens = np.asarray(tokens, dtype=np.int64)
        ld = self.token_logdists(task, tokens)
        return ld[np.arange(tokens.size), tokens]


def sample_responses(policy, tasks, group_size, max_len, rngs):
    """Sample ``group_size`` responses per task, vectorized over the whole batch.

    Each task draws its uniforms from its own generator in ``rngs``, so the
    result does not depend on how tasks are batched.
    """
    B, G = len(tasks), group_size
    N = B * G
    uniforms = np.concatenate([rng.random((G, max_len)) for rng in rngs]) if B else np.zeros((0, max_len))
    enc = np.repeat(np.stack([task_encoding(t) for t in tasks]), G, axis=0) if B else None
    tokens = np.zeros((N, max_len), dtype=np.int64)
    logps = np.zeros((N, max_len))
    lengths = np.zeros(N, dtype=np.int64)
    alive = np.ones(N, dtype=bool)
    state = np.full(N, policy.start_state, dtype=np.int64)
    for t in range(max_len):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        ld = policy.logdist(state[idx], enc[idx])
        cdf = np.cumsum(np.exp(ld), axis=1)
        u = uniforms[idx, t] * cdf[:, -1]
        tok = np.minimum((cdf < u[:, None]).sum(axis=1), policy.vocab - 1)
        tokens[idx, t] = tok
        logps[idx, t] = ld[np.arange(idx.size), tok]
        lengths[idx] += 1
        state[idx] = tok
        alive[idx[tok == END]] = False

    batches = []
    for s in range(B):
        group = []
        for i in range(G):
            n = s * G + i
            toks = tokens[n, : lengths[n]].tolist()
            parsed = parse_tokens(toks)
            group.append(ResponseRecord(toks, logps[n, : lengths[n]].copy(),
                                        parsed.boxed_answer, parsed.well_formed))
        batches.append(group)
    return batches


def rollout(policy, task, group_size, max_len, rng):
    """G responses for one task."""
    if max_len < 3:
        raise ValueError("max_len must be >= 3")
    return sample_responses(policy, [task], group_size, max_len, [rng])[0]
