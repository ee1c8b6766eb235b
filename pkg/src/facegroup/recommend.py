"""Candidate-pair proposal strategies.

A recommender turns the O(N^2) pair space into one candidate per step. A
pair is eligible when its fingerprint pair has not been recommended before
and its inter-group distance is at or below the threshold ``tau``; when no
eligible pair remains the episode ends.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import State, fingerprint, pair_key
from .features import AlbumContext, pair_distance


class Strategy(Enum):
    HIERARCHICAL_NEAREST = "hc"
    RANDOM = "random"
    EXHAUSTIVE = "exhaustive"


@dataclass(frozen=True)
class RecommenderConfig:
    strategy: Strategy = Strategy.HIERARCHICAL_NEAREST
    tau: float = 0.45
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")


def eligible_pairs(
    state: State,
    ctx: AlbumContext,
    config: RecommenderConfig,
    eta: int,
    cache: dict | None = None,
) -> list[tuple[int, int, float]]:
    """All candidate pairs passing the history and distance filters,
    as (gid_a, gid_b, distance) in ascending (gid_a, gid_b) order.

    ``cache`` memoizes pair distances by fingerprint pair; distances are
    content-addressed, so a shared cache is safe across steps and albums
    never share one.
    """
    if cache is None:
        cache = {}
    part = state.partition
    gids = sorted(part.group_ids())
    members = {gid: sorted(part.members(gid)) for gid in gids}
    fps = {gid: fingerprint(part.members(gid)) for gid in gids}
    out: list[tuple[int, int, float]] = []
    for i, gid_a in enumerate(gids):
        for gid_b in gids[i + 1 :]:
            key = pair_key(fps[gid_a], fps[gid_b])
            if state.history.contains(fps[gid_a], fps[gid_b]):
                continue
            dist = cache.get(key)
            if dist is None:
                dist = pair_distance(ctx, members[gid_a], members[gid_b], eta)
                cache[key] = dist
            if dist <= config.tau:
                out.append((gid_a, gid_b, dist))
    return out


def recommend(
    state: State,
    ctx: AlbumContext,
    config: RecommenderConfig,
    eta: int,
    rng: np.random.Generator | None = None,
    cache: dict | None = None,
) -> tuple[int, int] | None:
    """Propose the next candidate pair, or None when the episode is over.

    HIERARCHICAL_NEAREST picks the closest eligible pair (ties to the
    smallest group-id pair); RANDOM picks uniformly among eligible pairs
    using the caller's generator; EXHAUSTIVE walks pairs in group-id order.
    """
    pairs = eligible_pairs(state, ctx, config, eta, cache)
    if not pairs:
        return None
    if config.strategy is Strategy.HIERARCHICAL_NEAREST:
        gid_a, gid_b, _ = min(pairs, key=lambda p: (p[2], p[0], p[1]))
        return (gid_a, gid_b)
    if config.strategy is Strategy.RANDOM:
        if rng is None:
            raise ValueError("random strategy requires a seeded generator")
        gid_a, gid_b, _ = pairs[int(rng.integers(len(pairs)))]
        return (gid_a, gid_b)
    gid_a, gid_b, _ = pairs[0]
    return (gid_a, gid_b)
