"""Reward computation, action selection, and the episode runner.

An episode starts from the all-singleton partition and repeatedly asks the
recommender for a candidate pair, extracts its features, lets the policy
act, and applies the transition until no eligible pair remains. In
teacher-forced mode the expert (ground-truth) action is executed instead of
the agent's, and the agent's prediction is recorded for mistake mining; in
inference mode no label is read anywhere.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .core import (
    Action,
    Album,
    CostModel,
    Partition,
    State,
    ground_truth_action,
    transition,
)
from .features import AlbumContext, extract_features
from .learn import ForestModel, SvmModel
from .metrics import op_cost
from .recommend import RecommenderConfig, Strategy, recommend

Policy = SvmModel | ForestModel


@dataclass(frozen=True)
class PolicyConfig:
    """Knobs of the grouping policy and its training dynamics."""

    beta: float = 0.8  # weight of the long-term reward
    gamma: float = 0.9  # discount factor of the action-value target
    eta: int = 5  # faces per similarity / quality block
    k_steps: int = 1  # window of the long-term cost delta
    epsilon0: float = 0.3
    epsilon_decay_episodes: int = 40  # episodes over which epsilon reaches 0
    costs: CostModel = field(default_factory=CostModel)
    tau: float = 0.45
    strategy: Strategy = Strategy.HIERARCHICAL_NEAREST
    use_quality: bool = True

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must be in [0, 1)")
        if self.eta < 1 or self.k_steps < 1:
            raise ValueError("eta and k_steps must be positive")

    def recommender(self) -> RecommenderConfig:
        return RecommenderConfig(strategy=self.strategy, tau=self.tau)

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma": self.gamma,
            "eta": self.eta,
            "k_steps": self.k_steps,
            "epsilon0": self.epsilon0,
            "epsilon_decay_episodes": self.epsilon_decay_episodes,
            "costs": [self.costs.c_add, self.costs.c_remove, self.costs.c_merge],
            "tau": self.tau,
            "strategy": self.strategy.value,
            "use_quality": self.use_quality,
        }

    @staticmethod
    def from_dict(d: dict) -> "PolicyConfig":
        d = dict(d)
        if "costs" in d:
            add, remove, merge = d["costs"]
            d["costs"] = CostModel(c_add=add, c_remove=remove, c_merge=merge)
        if "strategy" in d:
            d["strategy"] = Strategy(d["strategy"])
        return PolicyConfig(**d)


def action_flag(action: Action) -> float:
    return 1.0 if action is Action.MERGE else -1.0


def reward_short(model: SvmModel, phi: np.ndarray, action: Action) -> float:
    """Signed SVM margin: positive for merging when the model favors it."""
    return action_flag(action) * model.decision(phi)


def reward_total(r_short: float, r_long: float, beta: float) -> float:
    return r_short + beta * r_long


def q_value(model: ForestModel, phi: np.ndarray, action: Action) -> float:
    """Action value of the pair described by ``phi``; the action is appended
    to the feature vector as a +/-1 flag."""
    x = np.concatenate([phi, [action_flag(action)]])
    return model.predict(x)


def q_values(model: ForestModel, phi: np.ndarray) -> tuple[float, float]:
    """(merge, not-merge) values in one batched prediction."""
    X = np.stack([np.concatenate([phi, [1.0]]), np.concatenate([phi, [-1.0]])])
    out = model.predict_many(X)
    return float(out[0]), float(out[1])


def choose_action(
    model: ForestModel,
    phi: np.ndarray,
    epsilon: float,
    rng: np.random.Generator | None = None,
) -> Action:
    """Greedy action under the Q model, random with probability epsilon.

    Ties go to NOT_MERGE: declining costs one cheap merge at worst while a
    wrong merge costs expensive removals.
    """
    if epsilon > 0:
        if rng is None:
            raise ValueError("epsilon > 0 requires a generator")
        if rng.random() < epsilon:
            return Action.MERGE if rng.random() < 0.5 else Action.NOT_MERGE
    q_merge, q_not = q_values(model, phi)
    return Action.MERGE if q_merge > q_not else Action.NOT_MERGE


def greedy_action(policy: Policy, phi: np.ndarray) -> Action:
    if isinstance(policy, SvmModel):
        return Action.MERGE if policy.decision(phi) > 0 else Action.NOT_MERGE
    return choose_action(policy, phi, epsilon=0.0)


@dataclass
class StepRecord:
    step: int
    candidate: tuple[int, int]
    action: Action  # executed action
    predicted: Action  # agent's own choice (= action outside teacher forcing)
    phi: np.ndarray
    r_short: float
    r_long: float
    r_total: float
    elapsed: float


@dataclass
class EpisodeTrace:
    album_id: str
    steps: list[StepRecord]
    final_partition: Partition

    @property
    def n_mistakes(self) -> int:
        return sum(1 for s in self.steps if s.predicted is not s.action)


def album_rng(seed: int, album_id: str) -> np.random.Generator:
    """Per-album generator stream, stable across runs and album order."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([seed, zlib.crc32(album_id.encode())]))
    )


def run_episode(
    album: Album,
    policy: Policy,
    config: PolicyConfig,
    gt: Partition | None = None,
    teacher_forced: bool = False,
    rng: np.random.Generator | None = None,
    ctx: AlbumContext | None = None,
) -> EpisodeTrace:
    """Group one album, returning the per-step trace and final partition.

    Inference mode (``teacher_forced=False``) must not receive a ground
    truth; rewards beyond the short-term margin are only defined while
    training. Teacher forcing executes the expert action at every step.
    """
    if len(album) == 0:
        raise ValueError(f"album {album.album_id} is empty")
    if teacher_forced and gt is None:
        raise ValueError("teacher-forced mode requires a ground-truth partition")
    if not teacher_forced and gt is not None:
        raise ValueError("inference mode forbids a ground-truth partition")

    ctx = ctx or AlbumContext(album)
    rec_cfg = config.recommender()
    state = State.initial(len(album))
    cache: dict = {}
    steps: list[StepRecord] = []
    op_now = op_cost(state.partition, gt, config.costs).total_cost if gt is not None else 0.0
    recent_ops: list[float] = [op_now]

    while True:
        candidate = recommend(state, ctx, rec_cfg, config.eta, rng=rng, cache=cache)
        if candidate is None:
            break
        t0 = time.perf_counter()
        phi = extract_features(state, candidate, ctx, config.eta, config.use_quality)
        predicted = greedy_action(policy, phi)
        if teacher_forced:
            executed = ground_truth_action(state, candidate, gt, config.costs)
        else:
            executed = predicted
        r_short = reward_short(policy, phi, executed) if isinstance(policy, SvmModel) else 0.0
        state = transition(state, candidate, executed)
        r_long = 0.0
        if gt is not None:
            op_now = op_cost(state.partition, gt, config.costs).total_cost
            recent_ops.append(op_now)
            back = min(config.k_steps, len(recent_ops) - 1)
            r_long = recent_ops[-1 - back] - recent_ops[-1]
            if len(recent_ops) > config.k_steps + 1:
                recent_ops.pop(0)
        steps.append(
            StepRecord(
                step=state.step - 1,
                candidate=candidate,
                action=executed,
                predicted=predicted,
                phi=phi,
                r_short=r_short,
                r_long=r_long,
                r_total=reward_total(r_short, r_long, config.beta),
                elapsed=time.perf_counter() - t0,
            )
        )
    return EpisodeTrace(album_id=album.album_id, steps=steps, final_partition=state.partition)
