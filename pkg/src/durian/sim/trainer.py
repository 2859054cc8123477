"""One training step of the toy policy under GRPO/DAPO with difficulty regrouping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from durian.advantage import (
    CombineWeights,
    combine_advantages,
    grpo_advantage,
    group_normalized_advantage,
    token_broadcast,
)
from durian.difficulty import GroupAssignment, regroup_perceptual, regroup_reasoning, sample_confidence
from durian.objective import (
    ObjectiveConfig,
    PolicyEval,
    dapo_surrogate,
    dynamic_sampling_filter,
    grpo_surrogate,
    overlong_penalty,
)
from durian.reward import accuracy_reward, format_reward, overall_reward, parse_tokens
from durian.sim.policy import sample_responses, task_encoding
from durian.sim.stats import extreme_stats

log = logging.getLogger(__name__)


@dataclass
class TrainerState:
    policy: object
    reference: object
    seed: int = 0
    step: int = 0
    history: list = field(default_factory=list)
    extremes: dict = field(default_factory=dict)

    @classmethod
    def create(cls, policy, seed=0):
        return cls(policy, policy.copy(frozen=True), seed)


@dataclass
class StepResult:
    metrics: dict
    diagnostics: list
    rewards: np.ndarray
    accuracy: np.ndarray
    advantages: dict
    assignments: dict


def sample_rng(seed, step, task_id):
    """Independent generator for one (step, sample) pair."""
    return np.random.default_rng([seed, step, task_id])


def objective_config(cfg):
    style = None if cfg.loss_style == "auto" else cfg.loss_style
    return ObjectiveConfig(cfg.eps, cfg.eps_low, cfg.eps_high, cfg.beta, style)


def score_rewards(tasks, responses, cfg):
    """Format, accuracy and weighted overall reward matrices (B x G)."""
    B, G = len(tasks), len(responses[0]) if responses else 0
    fmt = np.zeros((B, G))
    acc = np.zeros((B, G))
    lengths = np.zeros((B, G), dtype=np.int64)
    for s, (task, group) in enumerate(zip(tasks, responses)):
        for i, r in enumerate(group):
            parsed = parse_tokens(r.tokens)
            fmt[s, i] = format_reward(parsed)
            acc[s, i] = accuracy_reward(parsed, task.truth)
            lengths[s, i] = len(r.tokens)
    fw, aw = cfg.reward_weights
    R = overall_reward(fmt, acc, fw, aw)
    if cfg.overlong_shaping:
        R = np.clip(R + overlong_penalty(lengths, cfg.soft_cap, cfg.hard_cap), 0.0, None)
    return fmt, acc, R, lengths


def _singletons(batch):
    return GroupAssignment(np.arange(batch), batch, ())


def compute_advantages(R, keep, percep_scores, confidences, cfg, percep_thresholds=None):
    """GRPO, perceptual, reasoning and combined advantages for one batch."""
    B = R.shape[0]
    if cfg.regroup:
        percep = regroup_perceptual(percep_scores, tuple(cfg.quantile_levels), percep_thresholds)
        reason = regroup_reasoning(confidences, cfg.groups_b)
    else:
        percep = reason = _singletons(B)
    pool = keep if cfg.mask_before_std else None
    a_grpo = grpo_advantage(R, mask=keep)
    a_percep = group_normalized_advantage(R, percep, mask=keep, kind="perceptual", pool_mask=pool)
    a_reason = group_normalized_advantage(R, reason, mask=keep, kind="reasoning", pool_mask=pool)
    a_comb = combine_advantages(a_grpo, a_percep, a_reason, CombineWeights(*cfg.alpha))
    advantages = {"grpo": a_grpo, "perceptual": a_percep, "reasoning": a_reason, "combined": a_comb}
    return advantages, {"perceptual": percep, "reasoning": reason}


def _flat_tokens(policy, tasks, responses):
    states, encs, toks, owner = [], [], [], []
    k = 0
    for task, group in zip(tasks, responses):
        e = task_encoding(task)
        for r in group:
            t = np.asarray(r.tokens, dtype=np.int64)
            states.append(np.concatenate([[policy.start_state], t[:-1]]))
            encs.append(np.repeat(e[None, :], t.size, axis=0))
            toks.append(t)
            owner.append(np.full(t.size, k))
            k += 1
    return (np.concatenate(states).astype(np.int64), np.concatenate(encs),
            np.concatenate(toks), np.concatenate(owner))


def _split(values, lengths):
    return np.split(values, np.cumsum(lengths)[:-1])


def _group_stds(R, assignment, keep, cfg):
    pool = keep if cfg.mask_before_std else np.ones(R.shape[0], dtype=bool)
    out = []
    for a in range(assignment.num_groups):
        vals = R[(assignment.labels == a) & pool].ravel()
        out.append(float(np.std(vals, ddof=1)) if vals.size >= 2 else float("nan"))
    return out


def train_step(state, tasks, cfg, percep_scores, percep_thresholds=None):
    """Rollout, reward, regroup, advantage, surrogate, and one gradient update."""
    state.step += 1
    policy = state.policy
    B, G = len(tasks), cfg.rollout
    rngs = [sample_rng(state.seed, state.step, t.task_id) for t in tasks]
    responses = sample_responses(policy, tasks, G, cfg.max_len, rngs)

    fmt, acc, R, lengths = score_rewards(tasks, responses, cfg)
    if cfg.dynamic_sampling:
        keep, counts = dynamic_sampling_filter(R)
    else:
        keep = np.ones(B, dtype=bool)
        counts = {"total": B, "kept": B, "masked": 0, "masked_frac": 0.0}

    confidences = np.array([sample_confidence(g, cfg.normalize_logprob) for g in responses])
    advantages, assignments = compute_advantages(
        R, keep, np.asarray(percep_scores, dtype=np.float64), confidences, cfg, percep_thresholds)
    adv_tokens = token_broadcast(advantages["combined"], lengths, mask=keep)

    states, encs, toks, _ = _flat_tokens(policy, tasks, responses)
    flat_len = lengths.ravel()
    old_lp = _split(np.concatenate([r.logprobs for g in responses for r in g]), flat_len)
    ocfg = objective_config(cfg)
    surrogate = grpo_surrogate if cfg.objective == "grpo" else dapo_surrogate
    use_kl = cfg.objective == "grpo" and cfg.beta > 0
    ref_probs = None
    if use_kl:
        ref_probs = _split(np.exp(state.reference.logdist(states, encs)), flat_len)

    starved = not keep.any()
    if starved:
        log.warning("step %d: every sample has identical rewards; skipping update", state.step)
    result = None
    for _ in range(cfg.epochs):
        logdist = policy.logdist(states, encs)
        new_lp = logdist[np.arange(toks.size), toks]
        ev = PolicyEval(_split(new_lp, flat_len), old_lp, G,
                        _split(logdist, flat_len) if use_kl else None, ref_probs)
        result = surrogate(ev, adv_tokens, ocfg, mask=keep)
        if starved:
            break
        grad_ld = np.concatenate(result.grad_logdists) if use_kl else np.zeros_like(logdist)
        grad_ld[np.arange(toks.size), toks] += np.concatenate(result.grad_logprobs)
        policy.weights -= cfg.lr * policy.backprop(states, encs, grad_ld, logdist)

    ext = extreme_stats(acc)
    state.extremes[state.step] = ext
    metrics = {
        "step": state.step,
        "objective": cfg.objective,
        "mean_reward": float(R.mean()),
        "mean_accuracy": float(acc.mean()),
        "mean_format": float(fmt.mean()),
        "loss": result.loss,
        "kl": result.metrics["kl"],
        "clip_frac": result.metrics["clip_frac"],
        "extreme_ratio": ext.ratio,
        "masked_frac": counts["masked_frac"],
        "masked_rows": counts["masked"],
        "starved": int(starved),
        "percep_std": _group_stds(R, assignments["perceptual"], keep, cfg),
        "reason_std": _group_stds(R, assignments["reasoning"], keep, cfg),
    }
    state.history.append(metrics)

    diagnostics = []
    if cfg.diagnostics:
        for s, task in enumerate(tasks):
            diagnostics.append({
                "step": state.step,
                "sample_id": int(task.task_id),
                "rewards": R[s].tolist(),
                "accuracy": acc[s].astype(int).tolist(),
                "kept": bool(keep[s]),
                "perceptual_group": int(assignments["perceptual"].labels[s]),
                "reasoning_group": int(assignments["reasoning"].labels[s]),
                "perceptual_score": float(percep_scores[s]),
                "confidence": float(confidences[s]),
                "adv_grpo": advantages["grpo"].values[s].tolist(),
                "adv_perceptual": advantages["perceptual"].values[s].tolist(),
                "adv_reasoning": advantages["reasoning"].values[s].tolist(),
                "adv_combined": advantages["combined"].values[s].tolist(),
            })
    return StepResult(metrics, diagnostics, R, acc, advantages, assignments)
