"""Evaluation utilities: violation-prediction ROC sets, Pareto frontier
extraction, zero-shot transfer scoring, and per-step assigned-cost tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .constraints import check_trajectory, render_text, sample_spec, SpecRanges
from .corpus import CorpusSplit, Pair, Trajectory, collect_rollouts, label_pairs
from .gridworld import GridConfig
from .models import AlignmentModel, cosine, pad_token_batch, pad_trajectory_batch, tokenize
from .predictor import calibrate_scores, score_many


@dataclass
class ParetoPoint:
    avg_reward: float
    avg_cost: float
    run_id: str
    mode: str


def pareto_front(points: list[ParetoPoint]) -> list[ParetoPoint]:
    """Non-dominated subset: keep p unless some q has reward >= and cost <=
    with at least one strict inequality."""
    front = []
    for p in points:
        dominated = any(
            (q.avg_reward >= p.avg_reward and q.avg_cost <= p.avg_cost)
            and (q.avg_reward > p.avg_reward or q.avg_cost < p.avg_cost)
            for q in points
        )
        if not dominated:
            front.append(p)
    return front


# ---------------------------------------------------------------------------
# Violation-prediction evaluation sets


def build_eval_items(
    positives: list[Pair],
    negative_trajs: list[Trajectory],
    rng: np.random.Generator,
    n_negatives: int | None = None,
    ranges: SpecRanges | None = None,
    families=("quantitative", "sequential", "mathematical"),
) -> list[tuple[Trajectory, object, int]]:
    """(trajectory, text, label) triples: the stored positive pairs plus
    negative cross pairs built from the non-violating episode pool with
    freshly sampled constraint texts (re-verified against the oracle)."""
    items = [(p.trajectory, p.text, 1) for p in positives]
    n_negatives = n_negatives if n_negatives is not None else len(positives)
    made = 0
    guard = 0
    while made < n_negatives and negative_trajs and guard < 50 * n_negatives:
        guard += 1
        traj = negative_trajs[int(rng.integers(len(negative_trajs)))]
        family = families[int(rng.integers(len(families)))]
        spec = sample_spec(family, rng, ranges)
        if check_trajectory(spec, traj.events) is not None:
            continue
        items.append((traj, render_text(spec, rng), 0))
        made += 1
    return items


def heldout_auc(model: AlignmentModel, corpus: CorpusSplit, seed: int = 0):
    rng = np.random.default_rng(seed)
    # negative candidates include held-out trajectories; every sampled
    # (trajectory, text) negative is re-verified against the oracle
    candidates = corpus.negatives + [p.trajectory for p in corpus.test]
    items = build_eval_items(corpus.test, candidates, rng)
    labels = np.array([lab for _, _, lab in items])
    scores = score_many(model, [(t, c) for t, c, _ in items])
    return calibrate_scores(scores, labels), scores, labels


def zero_shot_eval(
    model: AlignmentModel,
    beta: float,
    env_config: GridConfig,
    n_episodes: int,
    specs,
    seed: int,
):
    """Label episodes from a constraint-shifted environment with the oracle
    and score them with the unchanged model and threshold."""
    rng = np.random.default_rng(seed)
    episodes = collect_rollouts(env_config, n_episodes, seed)
    positives, negatives = label_pairs(episodes, specs, rng)
    candidates = negatives + [p.trajectory for p in positives]
    items = build_eval_items(positives, candidates, rng)
    labels = np.array([lab for _, _, lab in items])
    scores = score_many(model, [(t, c) for t, c, _ in items])
    report = calibrate_scores(scores, labels)
    pred = scores >= beta
    accuracy_at_beta = float((pred == labels.astype(bool)).mean())
    return report, accuracy_at_beta


# ---------------------------------------------------------------------------
# Per-step assigned-cost tables (heatmap data)


def heatmap_rows(model: AlignmentModel, pair: Pair, beta: float | None = None) -> list[dict]:
    """One row per non-final step: (t, event, attention score e_t, assigned
    cost c_hat_t), then a terminal row flagging the violation step.

    With ``beta`` the terminal cost follows the thresholded inference rule
    (similarity >= beta assigns exactly 1, otherwise the dense head);
    without it the terminal row carries the ground-truth episodic cost 1.0.
    """
    traj = pair.trajectory
    obs, act, lengths = pad_trajectory_batch([traj.observations], [traj.actions])
    tokens, tok_lengths = pad_token_batch(
        [tokenize(model.vocab, pair.text.text, model.config.max_text_len)]
    )
    with torch.no_grad():
        h = model.encode_trajectory(obs, act)[0]
        l = model.encode_text(tokens, tok_lengths)[0]
        e = torch.sigmoid(torch.exp(model.alpha) * cosine(h, l[None, :]))
        h_star = e[:, None] * h
        c_hat = torch.sigmoid(
            model.head_c(torch.cat([h_star, l[None, :].expand_as(h_star)], dim=-1))
        ).squeeze(-1)
    rows = []
    t_len = len(traj)
    for t in range(t_len - 1):
        rows.append(
            {
                "t": t + 1,
                "event": traj.events[t][0] if traj.events[t] else "floor",
                "e_t": float(e[t].item()),
                "c_hat": float(c_hat[t].item()),
                "terminal": False,
            }
        )
    terminal_c = 1.0
    if beta is not None:
        sim_final = float(cosine(h[t_len - 1], l).item())
        if sim_final < beta:
            terminal_c = float(c_hat[t_len - 1].item())
    rows.append(
        {
            "t": t_len,
            "event": traj.events[-1][0] if traj.events[-1] else "floor",
            "e_t": float(e[t_len - 1].item()),
            "c_hat": terminal_c,
            "terminal": True,
        }
    )
    return rows
