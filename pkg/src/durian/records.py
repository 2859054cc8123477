"""Plain data records passed between the scoring, reward and training code."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ResponseRecord:
    """One rollout: sampled token ids and their rollout-time log-probabilities."""

    tokens: list[int]
    logprobs: np.ndarray
    answer: int | None = None
    format_ok: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.logprobs = np.asarray(self.logprobs, dtype=np.float64)

    def __len__(self):
        return len(self.tokens)
