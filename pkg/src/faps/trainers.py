"""Trainer contract plus the synthetic stand-in and the exhaustive grid oracle."""

from __future__ import annotations

import abc
import dataclasses
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Tuple

import numpy as np

from .geometry import AlignmentPolicy, SearchSpace, enumerate_space


class Trainer(abc.ABC):
    """What the search engine needs from a model trainer.

    States are opaque to the engine. ``clone`` must return a state whose
    future does not depend on the original, and ``evaluate`` must not mutate
    anything.
    """

    @abc.abstractmethod
    def init_state(self, member_id: int) -> Any: ...

    @abc.abstractmethod
    def step(self, state: Any, policy: AlignmentPolicy) -> Any:
        """Train one epoch under ``policy``; returns the new state."""

    @abc.abstractmethod
    def evaluate(self, state: Any, policy: AlignmentPolicy) -> float:
        """Validation accuracy in [0, 1]."""

    @abc.abstractmethod
    def clone(self, state: Any) -> Any: ...

    def on_policy_change(self, state: Any, old: AlignmentPolicy, new: AlignmentPolicy) -> Any:
        # real trainers recompute BatchNorm statistics here
        return state

    def describe(self) -> Dict[str, Any]:
        return {"type": type(self).__name__}


@dataclass(frozen=True)
class SyntheticTrainerConfig:
    optimum: Tuple[int, int] = (192, 4)
    peak_acc: float = 0.9
    curve_tau: float = 5.0
    c_m: float = 0.01
    c_delta: float = 0.01
    noise_sigma: float = 0.0
    s_m: int = 8
    s_delta: int = 4
    seed: int = 1234

    def __post_init__(self):
        if not 0 < self.peak_acc <= 1:
            raise ValueError("peak_acc must be in (0, 1]")
        if self.curve_tau <= 0:
            raise ValueError("curve_tau must be positive")
        if self.c_m < 0 or self.c_delta < 0 or self.noise_sigma < 0:
            raise ValueError("penalties and noise_sigma must be non-negative")
        if self.s_m <= 0 or self.s_delta <= 0:
            raise ValueError("step sizes must be positive")

    @property
    def optimum_policy(self) -> AlignmentPolicy:
        return AlignmentPolicy(*self.optimum)


@dataclass(frozen=True)
class SyntheticState:
    t: int = 0
    stream: int = 0


class SyntheticTrainer(Trainer):
    """Saturating learning curve scaled by an L1 penalty around a planted optimum.

    ``acc = clip((1 - exp(-t/tau)) * (peak - c_m*|dm|/s_m - c_delta*|dd|/s_delta) + eps)``

    The noise ``eps`` is a pure function of (seed, stream, t, policy), so
    evaluation is repeatable and has no side effects.
    """

    def __init__(self, cfg: SyntheticTrainerConfig = SyntheticTrainerConfig()):
        self.cfg = cfg

    def init_state(self, member_id: int) -> SyntheticState:
        return SyntheticState(t=0, stream=member_id)

    def step(self, state: SyntheticState, policy: AlignmentPolicy) -> SyntheticState:
        return dataclasses.replace(state, t=state.t + 1)

    def clone(self, state: SyntheticState) -> SyntheticState:
        return dataclasses.replace(state)

    def quality(self, policy: AlignmentPolicy) -> float:
        c = self.cfg
        m_star, d_star = c.optimum
        return c.peak_acc - c.c_m * abs(policy.m - m_star) / c.s_m - c.c_delta * abs(policy.delta - d_star) / c.s_delta

    def evaluate(self, state: SyntheticState, policy: AlignmentPolicy) -> float:
        c = self.cfg
        acc = (1.0 - math.exp(-state.t / c.curve_tau)) * self.quality(policy)
        if c.noise_sigma > 0:
            key = [c.seed, state.stream, state.t, policy.m, policy.delta % 2**32]
            acc += np.random.default_rng(key).normal(0.0, c.noise_sigma)
        return float(min(max(acc, 0.0), 1.0))

    def describe(self) -> Dict[str, Any]:
        return {"type": "synthetic", **dataclasses.asdict(self.cfg)}


@dataclass
class GridResult:
    best_policy: AlignmentPolicy
    best_accuracy: float
    table: List[Tuple[AlignmentPolicy, float]]
    trainer_steps: int

    def to_json(self) -> Dict[str, Any]:
        return {
            "best_policy": list(self.best_policy.as_tuple()),
            "best_accuracy": self.best_accuracy,
            "trainer_steps": self.trainer_steps,
            "candidates": len(self.table),
        }


def run_grid(space: SearchSpace, trainer: Trainer, epochs: int) -> GridResult:
    """Train every candidate independently for ``epochs`` and pick the best.

    This is the exhaustive baseline: cost is ``len(candidates) * epochs`` steps.
    Ties go to the earlier candidate in enumeration order.
    """
    table = []
    steps = 0
    for idx, p in enumerate(enumerate_space(space)):
        state = trainer.init_state(idx)
        for _ in range(epochs):
            state = trainer.step(state, p)
            steps += 1
        table.append((p, trainer.evaluate(state, p)))
    best_policy, best_acc = max(table, key=lambda row: row[1])
    return GridResult(best_policy, best_acc, table, steps)
