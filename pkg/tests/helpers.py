"""Independent reference implementations and small factories shared by the
test suite.  Nothing here imports the checked code paths it is used to verify.
"""

from __future__ import annotations

import numpy as np
import torch

from textcost.constraints import SpecRanges
from textcost.corpus import Trajectory
from textcost.gridworld import OBS_SHAPE
from textcost.models import AlignmentModel, ModelConfig, build_vocab


def brute_force_pairwise_auc(scores, labels) -> float:
    """Probability a random positive outscores a random negative, ties 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos = scores[labels]
    neg = scores[~labels]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def brute_force_pareto(points):
    """O(n^2) dominance filter over objects with avg_reward / avg_cost."""
    front = []
    for p in points:
        dominated = False
        for q in points:
            if q is p:
                continue
            if (
                q.avg_reward >= p.avg_reward
                and q.avg_cost <= p.avg_cost
                and (q.avg_reward > p.avg_reward or q.avg_cost < p.avg_cost)
            ):
                dominated = True
                break
        if not dominated:
            front.append(p)
    return front


_SMALL_RANGES = SpecRanges(max_quant_limit=3, max_hp=10, min_hp=3)


def small_vocab():
    return build_vocab(_SMALL_RANGES)


def tiny_model(d_model=16, n_heads=2, seed=0, vocab=None, dtype=torch.float32, max_traj_len=48):
    torch.manual_seed(seed)
    config = ModelConfig(d_model=d_model, n_layers=2, n_heads=n_heads, max_traj_len=max_traj_len)
    model = AlignmentModel(config, vocab if vocab is not None else small_vocab())
    return model.to(dtype)


def random_trajectory(rng: np.random.Generator, length: int, traj_id="t0") -> Trajectory:
    obs = np.zeros((length, *OBS_SHAPE), dtype=np.int64)
    obs[..., 0] = rng.integers(0, 5, size=(length, *OBS_SHAPE[:2]))
    obs[..., 1] = rng.integers(0, 4, size=(length, *OBS_SHAPE[:2]))
    actions = rng.integers(0, 4, size=length).astype(np.int64)
    events = [[] for _ in range(length)]
    return Trajectory(obs, actions, events, None, traj_id)


def trajectory_with_events(rng: np.random.Generator, events: list, traj_id="t0") -> Trajectory:
    traj = random_trajectory(rng, len(events), traj_id)
    traj.events = [list(e) for e in events]
    return traj
