"""Offline corpus pipeline: random-policy rollouts, oracle labeling of
(trajectory, text) pairs with truncation at the first violation, train/test
splitting, contrastive batches with the ground-truth similarity matrix, and a
line-delimited corpus file format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .constraints import (
    ConstraintSpec,
    ConstraintText,
    check_trajectory,
    render_text,
    spec_from_dict,
    spec_key,
    spec_to_dict,
)
from .gridworld import GridConfig, N_ACTIONS, OBS_SHAPE, make_env

FORMAT_VERSION = 1


class CorpusFormatError(ValueError):
    pass


@dataclass
class Trajectory:
    observations: np.ndarray  # [T, 7, 7, 3] int
    actions: np.ndarray       # [T] int
    events: list              # T lists of touch-event names
    violation_step: Optional[int]  # 1-based; equals T for positive pairs
    traj_id: str = ""

    def __post_init__(self):
        if not (len(self.observations) == len(self.actions) == len(self.events)):
            raise ValueError("observations, actions, events must have equal length")
        if len(self.actions) < 1:
            raise ValueError("trajectory must have length >= 1")

    def __len__(self) -> int:
        return len(self.actions)

    def prefix(self, t: int) -> "Trajectory":
        return Trajectory(
            self.observations[:t],
            self.actions[:t],
            self.events[:t],
            None,
            self.traj_id,
        )


@dataclass
class Pair:
    trajectory: Trajectory
    text: ConstraintText
    positive: bool


@dataclass
class Batch:
    pairs: list
    q_traj_to_text: np.ndarray  # [N, N] binary

    @property
    def q_text_to_traj(self) -> np.ndarray:
        return self.q_traj_to_text.T


@dataclass
class CorpusSplit:
    train: list
    test: list
    split_seed: int
    negatives: list = field(default_factory=list)  # non-violating episodes


# ---------------------------------------------------------------------------
# Collection and labeling


def collect_rollouts(
    env_config: GridConfig, n_episodes: int, seed: int
) -> list[Trajectory]:
    """Random-policy episodes, each run to the horizon."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    rng = np.random.default_rng(seed)
    episodes = []
    for i in range(n_episodes):
        env_seed = int(rng.integers(2**31 - 1))
        env = make_env(env_config, env_seed)
        obs = env.reset()
        observations, actions, events = [], [], []
        done = False
        while not done:
            action = int(rng.integers(N_ACTIONS))
            observations.append(obs)
            actions.append(action)
            result = env.step(action)
            events.append(result.events)
            obs = result.obs
            done = result.truncated
        episodes.append(
            Trajectory(
                np.stack(observations),
                np.asarray(actions, dtype=np.int64),
                events,
                None,
                traj_id=f"ep{i:06d}",
            )
        )
    return episodes


def label_pairs(
    episodes: list[Trajectory],
    specs: list[ConstraintSpec],
    rng: np.random.Generator,
) -> tuple[list[Pair], list[Trajectory]]:
    """Cross every episode with every spec; emit a positive Pair per violation,
    truncated at the violation step.  Episodes violating no spec go to the
    side pool used for negative-only evaluation."""
    pairs: list[Pair] = []
    negatives: list[Trajectory] = []
    for ep in episodes:
        hit = False
        for spec in specs:
            t = check_trajectory(spec, ep.events)
            if t is None:
                continue
            hit = True
            traj = ep.prefix(t)
            traj.violation_step = t
            traj.traj_id = f"{ep.traj_id}:{spec_key(spec)}"
            pairs.append(Pair(traj, render_text(spec, rng), True))
        if not hit:
            negatives.append(ep)
    return pairs, negatives


def split_pairs(pairs: list[Pair], split_seed: int, train_frac: float = 0.8) -> tuple[list, list]:
    rng = np.random.default_rng(split_seed)
    order = rng.permutation(len(pairs))
    n_train = int(round(train_frac * len(pairs)))
    train = [pairs[i] for i in order[:n_train]]
    test = [pairs[i] for i in order[n_train:]]
    return train, test


def make_batch(pairs: list[Pair], n: int, rng: np.random.Generator) -> Batch:
    """Sample N pairs and build the ground-truth cross-pair matrix by running
    the oracle over every (trajectory_i, spec_j) combination."""
    if n > len(pairs):
        raise ValueError(f"batch size {n} exceeds {len(pairs)} available pairs")
    idx = rng.choice(len(pairs), size=n, replace=False)
    chosen = [pairs[int(i)] for i in idx]
    q = np.zeros((n, n), dtype=np.int8)
    for i, pi in enumerate(chosen):
        for j, pj in enumerate(chosen):
            if check_trajectory(pj.text.spec, pi.trajectory.events) is not None:
                q[i, j] = 1
    return Batch(chosen, q)


# ---------------------------------------------------------------------------
# Corpus file format: one JSON record per line, header first.


def _pair_record(pair: Pair, split: str) -> dict:
    traj = pair.trajectory
    return {
        "split": split,
        "traj_id": traj.traj_id,
        "spec": spec_to_dict(pair.text.spec),
        "text": pair.text.text,
        "template_id": pair.text.template_id,
        "length": len(traj),
        "violation_step": traj.violation_step,
        "observations": traj.observations.reshape(-1).tolist(),
        "actions": traj.actions.tolist(),
        "events": traj.events,
    }


def _negative_record(traj: Trajectory) -> dict:
    return {
        "split": "negative",
        "traj_id": traj.traj_id,
        "spec": None,
        "text": "",
        "template_id": -1,
        "length": len(traj),
        "violation_step": None,
        "observations": traj.observations.reshape(-1).tolist(),
        "actions": traj.actions.tolist(),
        "events": traj.events,
    }


def _record_to_trajectory(rec: dict) -> Trajectory:
    t = rec["length"]
    obs = np.asarray(rec["observations"], dtype=np.int64).reshape(t, *OBS_SHAPE)
    return Trajectory(
        obs,
        np.asarray(rec["actions"], dtype=np.int64),
        [list(e) for e in rec["events"]],
        rec["violation_step"],
        rec["traj_id"],
    )


def save_corpus(path, split: CorpusSplit) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as f:
        header = {
            "format_version": FORMAT_VERSION,
            "obs_shape": list(OBS_SHAPE),
            "split_seed": split.split_seed,
        }
        f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for name, pairs in (("train", split.train), ("test", split.test)):
            for pair in pairs:
                f.write(json.dumps(_pair_record(pair, name), separators=(",", ":")) + "\n")
        for traj in split.negatives:
            f.write(json.dumps(_negative_record(traj), separators=(",", ":")) + "\n")
    tmp.replace(path)


def load_corpus(path) -> CorpusSplit:
    buckets: dict = {"train": [], "test": [], "negative": []}
    with open(path) as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"{path}:1: bad header: {exc}") from exc
        if header.get("format_version") != FORMAT_VERSION:
            raise CorpusFormatError(
                f"{path}:1: unsupported format_version {header.get('format_version')!r}"
            )
        for lineno, line in enumerate(f, start=2):
            try:
                rec = json.loads(line)
                traj = _record_to_trajectory(rec)
                split = rec["split"]
                if split == "negative":
                    buckets["negative"].append(traj)
                else:
                    spec = spec_from_dict(rec["spec"])
                    text = ConstraintText(rec["text"], spec, rec["template_id"])
                    buckets[split].append(Pair(traj, text, True))
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: bad record: {exc}") from exc
    return CorpusSplit(
        train=buckets["train"],
        test=buckets["test"],
        split_seed=int(header.get("split_seed", 0)),
        negatives=buckets["negative"],
    )
