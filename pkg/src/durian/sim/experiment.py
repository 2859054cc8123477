"""Multi-step experiments: dataset construction, training loop, report files."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from durian.config import FULL_SCALE_LR
from durian.difficulty import perceptual_difficulty, quantile
from durian.reward import accuracy_reward, parse_tokens
from durian.sim.env import TaskDims, class_embeddings, generate_task
from durian.sim.policy import ToyPolicy, sample_responses
from durian.sim.stats import report_steps, write_extreme_table
from durian.sim.trainer import TrainerState, train_step

log = logging.getLogger(__name__)

METRIC_FIELDS = ("step", "objective", "mean_reward", "mean_accuracy", "mean_format", "loss", "kl",
                 "clip_frac", "extreme_ratio", "masked_frac", "masked_rows", "starved")
EVAL_STREAM = 0xE7A1
DATA_STREAM = 0xDA7A
BATCH_STREAM = 0xBA7C


@dataclass
class Dataset:
    tasks: list
    entropies: np.ndarray


def build_dataset(cfg, size, stream, first_id=0):
    """Tasks with entropy and hardness drawn uniformly from the configured ranges.

    Perceptual scores are computed once here and cached with the dataset.
    """
    dims = TaskDims(*cfg.dims)
    rng = np.random.default_rng([cfg.seed, stream])
    embeddings = class_embeddings(dims, np.random.default_rng([cfg.seed, 0xE3BED]))
    tasks = []
    for k in range(size):
        h_target = rng.uniform(*cfg.entropy_range)
        hardness = rng.uniform(*cfg.hardness_range)
        tasks.append(generate_task(h_target, hardness, dims, rng, embeddings, task_id=first_id + k))
    entropies = np.array([perceptual_difficulty(t.features) for t in tasks])
    return Dataset(tasks, entropies)


def make_policy(cfg):
    P, d, m, K = cfg.dims
    return ToyPolicy(K, m + d + 1, cfg.temperature)


def evaluate_policy(policy, tasks, cfg, seed_stream=EVAL_STREAM):
    """Mean sampled accuracy over ``tasks`` with fixed per-task random streams."""
    rngs = [np.random.default_rng([cfg.seed, seed_stream, t.task_id]) for t in tasks]
    groups = sample_responses(policy, tasks, cfg.rollout, cfg.max_len, rngs)
    hits = [accuracy_reward(parse_tokens(r.tokens), t.truth) for t, g in zip(tasks, groups) for r in g]
    return float(np.mean(hits))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return f"{value:.6g}"
    return str(value)


def _metric_header(cfg):
    percep = [f"percep_std_{a}" for a in range(3)]
    reason = [f"reason_std_{u}" for u in range(cfg.groups_b)]
    return [*METRIC_FIELDS, *percep, *reason]


def _metric_row(metrics, cfg):
    row = [_fmt(metrics[k]) for k in METRIC_FIELDS]
    if cfg.regroup:
        percep = metrics["percep_std"] + [None] * (3 - len(metrics["percep_std"]))
        reason = metrics["reason_std"] + [None] * (cfg.groups_b - len(metrics["reason_std"]))
    else:
        percep, reason = [None] * 3, [None] * cfg.groups_b
    return row + [_fmt(v) for v in percep] + [_fmt(v) for v in reason]


def run_experiment(cfg, out_dir=None):
    """Train for ``cfg.steps`` steps and write the report files.

    Writes ``metrics.csv``, ``diag.jsonl`` (when diagnostics are on),
    ``extreme_table.csv``, ``config.txt`` and ``summary.json`` into the output
    directory and returns the summary dict.
    """
    cfg.validate()
    out = Path(out_dir or cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"{out}: cannot create output directory: {exc.strerror}") from exc
    started = time.time()

    data = build_dataset(cfg, cfg.dataset_size, DATA_STREAM)
    eval_set = build_dataset(cfg, cfg.eval_size, EVAL_STREAM, first_id=cfg.dataset_size)
    thresholds = None
    if cfg.quantile_scope == "global":
        lo, hi = cfg.quantile_levels
        thresholds = (quantile(data.entropies, lo), quantile(data.entropies, hi))

    state = TrainerState.create(make_policy(cfg), cfg.seed)
    initial_eval = evaluate_policy(state.policy, eval_set.tasks, cfg)
    batch_rng = np.random.default_rng([cfg.seed, BATCH_STREAM])

    paths = {name: out / name for name in ("metrics.csv", "diag.jsonl", "extreme_table.csv",
                                           "config.txt", "summary.json")}
    try:
        paths["config.txt"].write_text(cfg.to_text())
        with open(paths["metrics.csv"], "w", newline="") as mf, \
                open(paths["diag.jsonl"], "w") as df:
            writer = csv.writer(mf, lineterminator="\n")
            writer.writerow(_metric_header(cfg))
            for _ in range(cfg.steps):
                idx = np.sort(batch_rng.choice(len(data.tasks), cfg.batch_size, replace=False))
                tasks = [data.tasks[i] for i in idx]
                result = train_step(state, tasks, cfg, data.entropies[idx], thresholds)
                writer.writerow(_metric_row(result.metrics, cfg))
                for rec in result.diagnostics:
                    df.write(json.dumps(rec, sort_keys=True) + "\n")
                if state.step % 10 == 0 or state.step == 1:
                    log.info("step %d mean_reward %.4f", state.step,
                             result.metrics["mean_reward"])
        if not cfg.diagnostics:
            paths["diag.jsonl"].unlink()
            del paths["diag.jsonl"]
        steps = report_steps(cfg.steps)
        with open(paths["extreme_table.csv"], "w", newline="") as tf:
            write_extreme_table(tf, {s: state.extremes[s] for s in steps}, cfg.rollout)

        final_eval = evaluate_policy(state.policy, eval_set.tasks, cfg)
        history = state.history
        summary = {
            "objective": cfg.objective,
            "steps": cfg.steps,
            "alpha": list(cfg.alpha),
            "lr": cfg.lr,
            "full_scale_lr": FULL_SCALE_LR,
            "initial_eval_accuracy": initial_eval,
            "final_eval_accuracy": final_eval,
            "first_step_accuracy": history[0]["mean_accuracy"] if history else None,
            "last_step_accuracy": history[-1]["mean_accuracy"] if history else None,
            "starved_steps": sum(h["starved"] for h in history),
            "extreme_table": {s: state.extremes[s].as_dict() for s in steps},
            "files": sorted(p.name for p in paths.values()),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
            "wall_seconds": round(time.time() - started, 3),
        }
        paths["summary.json"].write_text(json.dumps(summary, indent=2) + "\n")
        np.save(out / "final_weights.npy", state.policy.weights)
    except OSError as exc:
        raise OSError(f"{getattr(exc, 'filename', None) or out}: {exc.strerror or exc}") from exc
    return summary


def run_comparison(cfg, out_dir=None):
    """Run vanilla GRPO-style advantages and the configured regrouped advantages side by side."""
    out = Path(out_dir or cfg.out_dir)
    vanilla = cfg.replace(alpha=(1.0, 0.0, 0.0), regroup=False)
    return {
        "vanilla": run_experiment(vanilla, out / "vanilla"),
        "durian": run_experiment(cfg, out / "durian"),
    }
