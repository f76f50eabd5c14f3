import json

import numpy as np
import pytest

from textcost.constraints import QuantitativeSpec, SequentialSpec, check_trajectory
from textcost.corpus import (
    CorpusFormatError,
    Trajectory,
    collect_rollouts,
    label_pairs,
    load_corpus,
    make_batch,
    save_corpus,
    split_pairs,
)
from textcost.gridworld import GridConfig

from helpers import trajectory_with_events


class TestCollect:
    def test_lengths_bounded_by_horizon(self, tiny_env_config):
        episodes = collect_rollouts(tiny_env_config, 5, seed=0)
        assert len(episodes) == 5
        for ep in episodes:
            assert 1 <= len(ep) <= tiny_env_config.horizon

    def test_deterministic(self, tiny_env_config):
        a = collect_rollouts(tiny_env_config, 3, seed=11)
        b = collect_rollouts(tiny_env_config, 3, seed=11)
        for x, y in zip(a, b):
            assert np.array_equal(x.observations, y.observations)
            assert np.array_equal(x.actions, y.actions)
            assert x.events == y.events

    def test_some_episodes_touch_hazards(self, tiny_env_config):
        episodes = collect_rollouts(tiny_env_config, 50, seed=1)
        touched = sum(1 for ep in episodes if any(ep.events))
        assert touched > 0

    def test_zero_episodes_rejected(self, tiny_env_config):
        with pytest.raises(ValueError):
            collect_rollouts(tiny_env_config, 0, seed=0)


class TestLabeling:
    def test_truncation_at_violation(self):
        rng = np.random.default_rng(0)
        traj = trajectory_with_events(rng, [["lava"], [], ["lava"], ["lava"], []])
        spec = QuantitativeSpec("lava", 2)
        pairs, negatives = label_pairs([traj], [spec], rng)
        assert len(pairs) == 1 and not negatives
        pair = pairs[0]
        assert len(pair.trajectory) == 4
        assert pair.trajectory.violation_step == 4
        assert pair.positive
        # the oracle re-confirms violation exactly at the last step
        assert check_trajectory(spec, pair.trajectory.events) == len(pair.trajectory)

    def test_safe_episode_goes_to_negative_pool(self):
        rng = np.random.default_rng(0)
        traj = trajectory_with_events(rng, [[], [], []])
        pairs, negatives = label_pairs([traj], [QuantitativeSpec("lava", 0)], rng)
        assert pairs == [] and len(negatives) == 1

    def test_one_episode_can_violate_two_specs(self):
        rng = np.random.default_rng(0)
        traj = trajectory_with_events(rng, [["lava"], ["grass"], []])
        specs = [QuantitativeSpec("lava", 0), SequentialSpec("lava", "grass")]
        pairs, _ = label_pairs([traj], specs, rng)
        assert len(pairs) == 2
        lengths = sorted(len(p.trajectory) for p in pairs)
        assert lengths == [1, 2]
        assert len({p.trajectory.traj_id for p in pairs}) == 2


class TestBatch:
    def test_q_matches_oracle(self, tiny_corpus):
        rng = np.random.default_rng(3)
        batch = make_batch(tiny_corpus.train, 6, rng)
        q = batch.q_traj_to_text
        assert np.all(np.diag(q) == 1)
        assert np.all(q.sum(axis=1) >= 1)
        for i, pi in enumerate(batch.pairs):
            for j, pj in enumerate(batch.pairs):
                expected = check_trajectory(pj.text.spec, pi.trajectory.events) is not None
                assert bool(q[i, j]) == expected
        assert np.array_equal(batch.q_text_to_traj, q.T)

    def test_oversized_batch_rejected(self, tiny_corpus):
        with pytest.raises(ValueError):
            make_batch(tiny_corpus.train, len(tiny_corpus.train) + 1, np.random.default_rng(0))


class TestSplit:
    def test_ratio_and_disjointness(self, tiny_corpus):
        pairs = tiny_corpus.train + tiny_corpus.test
        train, test = split_pairs(pairs, split_seed=5)
        assert len(train) == round(0.8 * len(pairs))
        ids = lambda ps: {id(p) for p in ps}
        assert not (ids(train) & ids(test))
        assert ids(train) | ids(test) == ids(pairs)

    def test_deterministic(self, tiny_corpus):
        pairs = tiny_corpus.train + tiny_corpus.test
        a = split_pairs(pairs, split_seed=5)
        b = split_pairs(pairs, split_seed=5)
        assert [id(p) for p in a[0]] == [id(p) for p in b[0]]


class TestFileFormat:
    def test_round_trip(self, tiny_corpus, tmp_path):
        path = tmp_path / "c.jsonl"
        save_corpus(path, tiny_corpus)
        loaded = load_corpus(path)
        assert len(loaded.train) == len(tiny_corpus.train)
        assert len(loaded.test) == len(tiny_corpus.test)
        assert len(loaded.negatives) == len(tiny_corpus.negatives)
        assert loaded.split_seed == tiny_corpus.split_seed
        for a, b in zip(loaded.train, tiny_corpus.train):
            assert np.array_equal(a.trajectory.observations, b.trajectory.observations)
            assert np.array_equal(a.trajectory.actions, b.trajectory.actions)
            assert a.trajectory.events == b.trajectory.events
            assert a.trajectory.violation_step == b.trajectory.violation_step
            assert a.text == b.text

    def test_save_is_deterministic(self, tiny_corpus, tmp_path):
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        save_corpus(p1, tiny_corpus)
        save_corpus(p2, tiny_corpus)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_version_rejected(self, tiny_corpus, tmp_path):
        path = tmp_path / "c.jsonl"
        save_corpus(path, tiny_corpus)
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        header["format_version"] = 99
        path.write_text("\n".join([json.dumps(header)] + lines[1:]) + "\n")
        with pytest.raises(CorpusFormatError, match="format_version"):
            load_corpus(path)

    def test_truncated_record_reports_line_number(self, tiny_corpus, tmp_path):
        path = tmp_path / "c.jsonl"
        save_corpus(path, tiny_corpus)
        lines = path.read_text().splitlines()
        lines[2] = lines[2][: len(lines[2]) // 2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(CorpusFormatError, match=":3:"):
            load_corpus(path)


class TestTrajectoryType:
    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((2, 7, 7, 3)), np.zeros(3, dtype=int), [[], [], []], None)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            Trajectory(np.zeros((0, 7, 7, 3)), np.zeros(0, dtype=int), [], None)

    def test_prefix(self):
        rng = np.random.default_rng(0)
        traj = trajectory_with_events(rng, [["lava"], [], ["grass"]])
        pre = traj.prefix(2)
        assert len(pre) == 2
        assert pre.events == [["lava"], []]
