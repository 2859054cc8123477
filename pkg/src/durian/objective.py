"""Clipped surrogate objectives (GRPO, DAPO), exact categorical KL, dynamic sampling.

Losses are returned as the *negative* objective together with analytic
gradients, so a gradient-descent step on the loss is an ascent step on the
objective. Gradients come in two parts:

* ``grad_logprobs``: w.r.t. the new-policy log-prob of each sampled token
  (the surrogate term);
* ``grad_logdists``: w.r.t. every entry of the new-policy log-distribution
  at each position (the KL term, present only when ``beta > 0``).

A caller whose sampled-token log-prob is ``logdist[t, token_t]`` adds the
first into the second at the sampled index before back-propagating.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from durian.errors import InvalidInputError

LOSS_STYLES = ("response-mean", "token-mean")


@dataclass
class PolicyEval:
    """Per-response token arrays for a B x G batch, flattened row-major."""

    new_logprobs: list
    old_logprobs: list
    group_size: int
    new_logdists: list | None = None
    ref_probs: list | None = None

    def __post_init__(self):
        self.new_logprobs = [np.asarray(x, dtype=np.float64) for x in self.new_logprobs]
        self.old_logprobs = [np.asarray(x, dtype=np.float64) for x in self.old_logprobs]
        if len(self.new_logprobs) != len(self.old_logprobs):
            raise InvalidInputError("new and old log-prob lists differ in length")
        if self.group_size < 1 or len(self.new_logprobs) % self.group_size:
            raise InvalidInputError(
                f"{len(self.new_logprobs)} responses do not split into groups of {self.group_size}"
            )
        for k, (n, o) in enumerate(zip(self.new_logprobs, self.old_logprobs)):
            if n.shape != o.shape or n.ndim != 1:
                raise InvalidInputError(f"response {k}: new/old log-probs misaligned")
        for name in ("new_logdists", "ref_probs"):
            dists = getattr(self, name)
            if dists is None:
                continue
            dists = [np.asarray(x, dtype=np.float64) for x in dists]
            if len(dists) != len(self.new_logprobs):
                raise InvalidInputError(f"{name} has {len(dists)} responses")
            for k, dist in enumerate(dists):
                if dist.ndim != 2 or dist.shape[0] != self.new_logprobs[k].size:
                    raise InvalidInputError(f"response {k}: {name} misaligned with tokens")
            setattr(self, name, dists)

    @property
    def shape(self):
        return (len(self.new_logprobs) // self.group_size, self.group_size)

    @property
    def lengths(self):
        return np.array([x.size for x in self.new_logprobs]).reshape(self.shape)


@dataclass(frozen=True)
class ObjectiveConfig:
    eps: float = 0.2
    eps_low: float = 0.2
    eps_high: float = 0.28
    beta: float = 0.01
    loss_style: str | None = None
    """``None`` picks the objective's own weighting (GRPO: response-mean, DAPO: token-mean)."""

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise InvalidInputError(f"eps must be in (0, 1), got {self.eps}")
        if not 0 <= self.eps_low < 1 or self.eps_high < 0 or self.eps_low > self.eps_high:
            raise InvalidInputError(
                f"need 0 <= eps_low <= eps_high, eps_low < 1; got {self.eps_low}, {self.eps_high}"
            )
        if self.beta < 0:
            raise InvalidInputError(f"beta must be >= 0, got {self.beta}")
        if self.loss_style is not None and self.loss_style not in LOSS_STYLES:
            raise InvalidInputError(f"loss_style must be one of {LOSS_STYLES}")


@dataclass
class SurrogateResult:
    loss: float
    grad_logprobs: list
    grad_logdists: list | None
    metrics: dict = field(default_factory=dict)


def importance_ratios(ev):
    """Per-token ``exp(new - old)``."""
    return [np.exp(n - o) for n, o in zip(ev.new_logprobs, ev.old_logprobs)]


def _response_mask(ev, mask):
    B, G = ev.shape
    if mask is None:
        return np.ones((B, G), dtype=bool)
    M = np.asarray(mask, dtype=bool)
    if M.ndim == 1:
        M = np.repeat(M[:, None], G, axis=1)
    if M.shape != (B, G):
        raise InvalidInputError(f"mask shape {M.shape} does not match batch {(B, G)}")
    return M


def token_weights(ev, mask=None, loss_style="response-mean"):
    """Per-response token weight implementing the objective's averaging.

    response-mean: ``1/B' * 1/G * 1/|o_i|``; token-mean: ``1/B' * 1/sum_i |o_i|``,
    where B' counts samples with at least one unmasked response.
    """
    M = _response_mask(ev, mask)
    L = ev.lengths
    active_rows = M.any(axis=1)
    n_rows = int(active_rows.sum())
    W = np.zeros(M.shape)
    if n_rows == 0:
        return W
    for s in np.flatnonzero(active_rows):
        keep = M[s]
        if loss_style == "response-mean":
            W[s, keep] = 1.0 / (n_rows * keep.sum() * np.maximum(L[s, keep], 1))
        elif loss_style == "token-mean":
            W[s, keep] = 1.0 / (n_rows * max(L[s, keep].sum(), 1))
        else:
            raise InvalidInputError(f"unknown loss_style {loss_style!r}")
    return W


def _kl_terms(logdist, ref):
    """Per-position KL(new || ref) and its gradient w.r.t. the log-distribution."""
    if np.any(np.abs(ref.sum(axis=1) - 1.0) > 1e-6) or np.any(ref < 0):
        raise InvalidInputError("reference distribution is not normalized")
    p = np.exp(logdist)
    support = p > 0
    if np.any(support & (ref <= 0)):
        raise InvalidInputError("reference assigns zero mass where the policy does not")
    log_ref = np.log(np.where(support, ref, 1.0))
    diff = np.where(support, logdist - log_ref, 0.0)
    return np.sum(p * diff, axis=1), p * (diff + 1.0)


def kl_penalty(ev, mask=None, loss_style="response-mean"):
    """Exact per-token categorical KL(new || ref), averaged like the objective."""
    if ev.new_logdists is None or ev.ref_probs is None:
        raise InvalidInputError("kl_penalty needs new_logdists and ref_probs")
    W = token_weights(ev, mask, loss_style).ravel()
    total = 0.0
    for k, w in enumerate(W):
        if w == 0.0:
            continue
        kl, _ = _kl_terms(ev.new_logdists[k], ev.ref_probs[k])
        total += w * float(kl.sum())
    return total


def _surrogate(ev, adv_tokens, low, high, beta, loss_style, mask):
    M = _response_mask(ev, mask).ravel()
    W = token_weights(ev, M.reshape(ev.shape), loss_style).ravel()
    if len(adv_tokens) != len(ev.new_logprobs):
        raise InvalidInputError("advantage list does not match responses")
    use_kl = beta > 0
    if use_kl and (ev.new_logdists is None or ev.ref_probs is None):
        raise InvalidInputError("beta > 0 needs new_logdists and ref_probs")

    objective = 0.0
    kl_total = 0.0
    grad_lp = []
    grad_ld = [] if use_kl else None
    n_tok = n_clip = 0
    dev_sum = 0.0
    dev_max = 0.0
    for k, (new, old) in enumerate(zip(ev.new_logprobs, ev.old_logprobs)):
        g = np.zeros_like(new)
        gd = np.zeros_like(ev.new_logdists[k]) if use_kl else None
        if M[k]:
            adv = np.asarray(adv_tokens[k], dtype=np.float64)
            if adv.shape != new.shape:
                raise InvalidInputError(f"response {k}: advantages misaligned with tokens")
            ratio = np.exp(new - old)
            unclipped = ratio * adv
            clipped = np.clip(ratio, 1.0 - low, 1.0 + high) * adv
            take_raw = unclipped <= clipped
            surr = np.where(take_raw, unclipped, clipped)
            w = W[k]
            objective += w * float(surr.sum())
            g = -w * np.where(take_raw, unclipped, 0.0)
            if use_kl:
                kl, dkl = _kl_terms(ev.new_logdists[k], ev.ref_probs[k])
                kl_total += w * float(kl.sum())
                gd = w * beta * dkl
            n_tok += new.size
            n_clip += int(np.count_nonzero(~take_raw))
            dev = np.abs(ratio - 1.0)
            dev_sum += float(dev.sum())
            dev_max = max(dev_max, float(dev.max(initial=0.0)))
        grad_lp.append(g)
        if use_kl:
            grad_ld.append(gd)

    loss = -(objective - beta * kl_total)
    metrics = {
        "surrogate": objective,
        "kl": kl_total,
        "clip_frac": n_clip / n_tok if n_tok else 0.0,
        "mean_abs_ratio_dev": dev_sum / n_tok if n_tok else 0.0,
        "max_abs_ratio_dev": dev_max,
        "tokens": n_tok,
    }
    return SurrogateResult(loss, grad_lp, grad_ld, metrics)


def grpo_surrogate(ev, adv_tokens, cfg=None, mask=None):
    """Negative clipped GRPO objective with symmetric clip ``eps`` and KL weight ``beta``."""
    cfg = cfg or ObjectiveConfig()
    style = cfg.loss_style or "response-mean"
    return _surrogate(ev, adv_tokens, cfg.eps, cfg.eps, cfg.beta, style, mask)


def dapo_surrogate(ev, adv_tokens, cfg=None, mask=None):
    """Negative DAPO objective: asymmetric clip, token-level averaging, no KL."""
    cfg = cfg or ObjectiveConfig()
    style = cfg.loss_style or "token-mean"
    return _surrogate(ev, adv_tokens, cfg.eps_low, cfg.eps_high, 0.0, style, mask)


def dynamic_sampling_filter(rewards):
    """Mask out rows whose G rewards are all identical.

    Returns ``(keep, counts)`` where ``keep`` is a length-B boolean array.
    """
    R = np.asarray(rewards, dtype=np.float64)
    if R.ndim != 2:
        raise InvalidInputError(f"rewards must be B x G, got shape {R.shape}")
    if R.shape[1] == 0:
        keep = np.zeros(R.shape[0], dtype=bool)
    else:
        keep = ~np.all(R == R[:, :1], axis=1)
    B = R.shape[0]
    masked = int(B - keep.sum())
    counts = {"total": B, "kept": B - masked, "masked": masked,
              "masked_frac": masked / B if B else 0.0}
    return keep, counts


def overlong_penalty(lengths, soft_cap, hard_cap):
    """Linear penalty ramp from 0 at ``soft_cap`` to -1 at ``hard_cap`` and beyond."""
    if not 0 < soft_cap < hard_cap:
        raise InvalidInputError(f"need 0 < soft_cap < hard_cap, got {soft_cap}, {hard_cap}")
    L = np.asarray(lengths, dtype=np.float64)
    return -np.clip((L - soft_cap) / (hard_cap - soft_cap), 0.0, 1.0)
