import numpy as np
import pytest

from textcost.constraints import check_trajectory
from textcost.evaluation import (
    ParetoPoint,
    build_eval_items,
    heatmap_rows,
    heldout_auc,
    pareto_front,
    zero_shot_eval,
)
from textcost.gridworld import GridConfig

from helpers import brute_force_pareto


def pt(r, c, rid="x", mode="GC"):
    return ParetoPoint(avg_reward=r, avg_cost=c, run_id=rid, mode=mode)


class TestPareto:
    def test_worked_example(self):
        points = [pt(1.0, 0.5, "a"), pt(2.0, 0.5, "b"), pt(2.0, 0.9, "c")]
        front = pareto_front(points)
        assert [p.run_id for p in front] == ["b"]

    def test_identical_points_are_mutually_nondominated(self):
        points = [pt(1.0, 0.5, "a"), pt(1.0, 0.5, "b")]
        assert len(pareto_front(points)) == 2

    def test_single_point(self):
        points = [pt(3.0, 0.1)]
        assert pareto_front(points) == points

    def test_matches_brute_force_up_to_500_points(self):
        rng = np.random.default_rng(0)
        for n in (10, 100, 500):
            points = [
                pt(float(r), float(c), f"p{i}")
                for i, (r, c) in enumerate(
                    zip(rng.integers(0, 8, n) / 2.0, rng.integers(0, 8, n) / 4.0)
                )
            ]
            got = {id(p) for p in pareto_front(points)}
            want = {id(p) for p in brute_force_pareto(points)}
            assert got == want, n

    def test_frontier_members_not_dominated(self):
        rng = np.random.default_rng(1)
        points = [pt(float(r), float(c)) for r, c in rng.random((50, 2))]
        front = pareto_front(points)
        for p in front:
            for q in points:
                assert not (
                    q.avg_reward >= p.avg_reward
                    and q.avg_cost <= p.avg_cost
                    and (q.avg_reward > p.avg_reward or q.avg_cost < p.avg_cost)
                )


class TestEvalItems:
    def test_labels_agree_with_oracle(self, tiny_corpus):
        rng = np.random.default_rng(0)
        items = build_eval_items(tiny_corpus.test, tiny_corpus.negatives, rng)
        assert items, "expected some evaluation items"
        for traj, text, label in items:
            violated = check_trajectory(text.spec, traj.events) is not None
            assert violated == bool(label)

    def test_negative_count_request(self, tiny_corpus):
        rng = np.random.default_rng(0)
        items = build_eval_items(tiny_corpus.test, tiny_corpus.negatives, rng, n_negatives=3)
        assert sum(1 for _, _, lab in items if lab == 0) == 3

    def test_deterministic_under_seed(self, tiny_corpus):
        a = build_eval_items(tiny_corpus.test, tiny_corpus.negatives, np.random.default_rng(4))
        b = build_eval_items(tiny_corpus.test, tiny_corpus.negatives, np.random.default_rng(4))
        assert [(t.traj_id, c.text, lab) for t, c, lab in a] == [
            (t.traj_id, c.text, lab) for t, c, lab in b
        ]

    def test_heldout_auc_shapes(self, model, tiny_corpus):
        report, scores, labels = heldout_auc(model, tiny_corpus, seed=0)
        assert len(scores) == len(labels)
        assert 0.0 <= report.auc <= 1.0


class TestZeroShot:
    def test_lavawall_transfer_smoke(self, model):
        from textcost.constraints import QuantitativeSpec

        config = GridConfig(
            width=8,
            height=8,
            entity_counts={"lava": 3, "water": 1, "grass": 1},
            reward_objects={"key": 1},
            horizon=12,
            layout_mode="lavawall",
        )
        specs = [QuantitativeSpec("lava", 0), QuantitativeSpec("lava", 1)]
        report, acc = zero_shot_eval(model, beta=0.0, env_config=config,
                                     n_episodes=40, specs=specs, seed=1)
        assert 0.0 <= report.auc <= 1.0
        assert 0.0 <= acc <= 1.0


class TestHeatmaps:
    def test_one_row_per_step_with_terminal_flag(self, model, tiny_corpus):
        pair = next(p for p in tiny_corpus.train if len(p.trajectory) >= 3)
        rows = heatmap_rows(model, pair)
        t = len(pair.trajectory)
        assert len(rows) == t
        assert [r["t"] for r in rows] == list(range(1, t + 1))
        assert [r["terminal"] for r in rows] == [False] * (t - 1) + [True]
        assert rows[-1]["c_hat"] == 1.0
        for r in rows[:-1]:
            assert 0.0 < r["c_hat"] < 1.0
            assert 0.0 < r["e_t"] < 1.0

    def test_events_labelled(self, model, tiny_corpus):
        pair = tiny_corpus.train[0]
        rows = heatmap_rows(model, pair)
        valid = {"floor", "lava", "water", "grass"}
        assert all(r["event"] in valid for r in rows)
