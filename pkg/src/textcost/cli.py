"""Operator-facing command line.

Commands: gen-corpus, train-ttct, calibrate, train-policy, eval.  Each takes
``--config PATH`` plus ``--set section.key=value`` overrides and a global
``--seed``.  Exit codes: 0 success, 2 configuration error, 3 runtime failure.
Outputs are deterministic under fixed seeds; wall-clock info goes to a
``.meta.json`` sidecar only.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import torch

from . import checkpoint as ckpt
from . import corpus as corpus_mod
from . import evaluation, plots, predictor, safe_rl, training
from .config import ConfigError, RunConfig, apply_override, load_config, resolve_out_dir
from .models import AlignmentModel, build_vocab

OUT_ROOT_ENV = "TEXTCOST_OUT"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _setup(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config) if args.config else RunConfig()
    for assignment in args.set or []:
        apply_override(cfg, assignment)
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = resolve_out_dir(cfg, os.environ.get(OUT_ROOT_ENV))
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.set_num_threads(1)
    torch.manual_seed(cfg.seed)
    return cfg, out_dir


def _write_meta(out_dir: Path, command: str, started: float) -> None:
    with open(out_dir / f"{command}.meta.json", "w") as f:
        json.dump({"command": command, "wall_seconds": time.time() - started}, f)


def _sample_specs(cfg: RunConfig):
    """Distinct specs per requested family, drawn without replacement from the
    enumerable pool (some families have fewer distinct specs than asked for)."""
    from .constraints import constraint_pool, spec_key

    rng = np.random.default_rng([cfg.seed, 17])
    by_family: dict = {}
    for spec, _tid in constraint_pool(cfg.corpus.spec_ranges):
        by_family.setdefault(spec.family, {})[spec_key(spec)] = spec
    specs = []
    for family in cfg.corpus.families:
        candidates = [by_family[family][k] for k in sorted(by_family[family])]
        n = min(cfg.corpus.n_specs_per_family, len(candidates))
        idx = rng.choice(len(candidates), size=n, replace=False)
        specs.extend(candidates[int(i)] for i in sorted(idx))
    return specs


def cmd_gen_corpus(args) -> int:
    cfg, out_dir = _setup(args)
    started = time.time()
    env_config = cfg.env.grid_config()
    specs = _sample_specs(cfg)
    episodes = corpus_mod.collect_rollouts(env_config, cfg.corpus.n_episodes, cfg.seed)
    rng = np.random.default_rng([cfg.seed, 23])
    pairs, negatives = corpus_mod.label_pairs(episodes, specs, rng)
    if cfg.corpus.max_pairs and len(pairs) > cfg.corpus.max_pairs:
        keep = rng.choice(len(pairs), size=cfg.corpus.max_pairs, replace=False)
        pairs = [pairs[int(i)] for i in sorted(keep)]
    if not pairs:
        print("error: no positive pairs were produced", file=sys.stderr)
        return EXIT_RUNTIME
    train, test = corpus_mod.split_pairs(pairs, cfg.seed, cfg.corpus.train_frac)
    split = corpus_mod.CorpusSplit(train, test, cfg.seed, negatives)
    path = out_dir / cfg.corpus.path
    corpus_mod.save_corpus(path, split)
    by_family: dict = {}
    for p in pairs:
        by_family[p.text.spec.family] = by_family.get(p.text.spec.family, 0) + 1
    print(f"wrote {path}")
    print(f"positives: {len(pairs)} (train {len(train)}, test {len(test)})")
    for family, count in sorted(by_family.items()):
        print(f"  {family}: {count}")
    print(f"negative episode pool: {len(negatives)}")
    _write_meta(out_dir, "gen-corpus", started)
    return EXIT_OK


def cmd_train_ttct(args) -> int:
    cfg, out_dir = _setup(args)
    started = time.time()
    split = corpus_mod.load_corpus(out_dir / cfg.corpus.path)
    vocab = build_vocab(cfg.corpus.spec_ranges)
    model = AlignmentModel(cfg.ttct.model_config(), vocab)
    def log_fn(epoch, reports):
        mean_total = float(np.mean([r.l_total for r in reports]))
        print(f"epoch {epoch}: mean total loss {mean_total:.4f}")
    training.train(
        model,
        split,
        cfg.ttct.train_config(cfg.seed),
        checkpoint_dir=out_dir / cfg.ttct.checkpoint_dir,
        metrics_path=out_dir / cfg.ttct.metrics_path,
        log_fn=log_fn,
    )
    final = out_dir / cfg.ttct.checkpoint_dir / f"epoch_{cfg.ttct.epochs - 1:03d}.ckpt"
    print(f"final checkpoint: {final}")
    _write_meta(out_dir, "train-ttct", started)
    return EXIT_OK


def _load_alignment(cfg: RunConfig, out_dir: Path) -> AlignmentModel:
    if cfg.checkpoint:
        path = Path(cfg.checkpoint)
    else:
        ckpt_dir = out_dir / cfg.ttct.checkpoint_dir
        candidates = sorted(ckpt_dir.glob("epoch_*.ckpt"))
        if not candidates:
            raise FileNotFoundError(f"no checkpoint found under {ckpt_dir}")
        path = candidates[-1]
    return ckpt.load_checkpoint(path)


def cmd_calibrate(args) -> int:
    cfg, out_dir = _setup(args)
    started = time.time()
    model = _load_alignment(cfg, out_dir)
    split = corpus_mod.load_corpus(out_dir / cfg.corpus.path)
    rng = np.random.default_rng([cfg.seed, 31])
    items = evaluation.build_eval_items(
        split.test,
        split.negatives + [p.trajectory for p in split.test],
        rng,
        n_negatives=cfg.calibrate.n_negatives or None,
        ranges=cfg.corpus.spec_ranges,
        families=tuple(cfg.corpus.families),
    )
    pred = predictor.calibrate(model, items)
    predictor.save_calibration_report(out_dir / cfg.calibrate.report_path, pred)
    rep = pred.calibration_report
    if cfg.calibrate.per_family:
        for family, fam_pred in predictor.calibrate_per_family(model, items).items():
            fr = fam_pred.calibration_report
            print(f"  [{family}] auc {fr.auc:.4f}  beta {fam_pred.beta:.4f}")
    plots.plot_roc(rep.fpr, rep.tpr, rep.auc, out_dir / cfg.calibrate.roc_plot)
    print(
        f"auc {rep.auc:.4f}  beta {pred.beta:.4f}  accuracy {rep.accuracy:.4f}  "
        f"recall {rep.recall:.4f}  precision {rep.precision:.4f}  f1 {rep.f1:.4f}"
    )
    _write_meta(out_dir, "calibrate", started)
    return EXIT_OK


def cmd_train_policy(args) -> int:
    cfg, out_dir = _setup(args)
    started = time.time()
    model = _load_alignment(cfg, out_dir)
    beta = None
    if cfg.rl.mode == "CP":
        beta = predictor.load_calibration_beta(out_dir / cfg.calibrate.report_path)
    env_config = cfg.env.grid_config()
    all_records = []
    for seed in cfg.rl.seeds:
        rl_cfg = cfg.rl.safe_rl_config(int(seed))
        run_dir = out_dir / cfg.rl.out_subdir / f"{cfg.rl.mode}_seed{seed}"
        def log_fn(record, _metrics):
            print(
                f"[{cfg.rl.mode} seed {seed}] iter {record['iteration']}: "
                f"R {record['avg_reward']:.2f} C {record['avg_cost']:.2f} "
                f"lambda {record['lambda']:.3f}"
            )
        records = safe_rl.train_policy(
            rl_cfg, env_config, model, beta, out_dir=run_dir, log_fn=log_fn
        )
        all_records.append(records)
    tail = max(1, len(all_records[0]) // 4)
    final_r = [np.mean([r["avg_reward"] for r in recs[-tail:]]) for recs in all_records]
    final_c = [np.mean([r["avg_cost"] for r in recs[-tail:]]) for recs in all_records]
    print(
        f"{cfg.rl.mode}: Avg.R {np.mean(final_r):.3f}±{np.std(final_r):.3f}  "
        f"Avg.C {np.mean(final_c):.3f}±{np.std(final_c):.3f} "
        f"({len(all_records)} seeds)"
    )
    plots.plot_learning_curves(
        {cfg.rl.mode: all_records}, out_dir / cfg.rl.out_subdir / "learning_curve.png"
    )
    _write_meta(out_dir, "train-policy", started)
    return EXIT_OK


def _pareto_points(paths: list):
    points = []
    for path in paths:
        with open(path) as f:
            records = [json.loads(line) for line in f]
        if not records:
            continue
        tail = max(1, len(records) // 4)
        points.append(
            evaluation.ParetoPoint(
                avg_reward=float(np.mean([r["avg_reward"] for r in records[-tail:]])),
                avg_cost=float(np.mean([r["avg_cost"] for r in records[-tail:]])),
                run_id=str(path),
                mode=records[-1]["mode"],
            )
        )
    return points


def cmd_eval(args) -> int:
    cfg, out_dir = _setup(args)
    started = time.time()
    model = _load_alignment(cfg, out_dir)
    eval_dir = out_dir / cfg.eval.out_subdir
    eval_dir.mkdir(parents=True, exist_ok=True)
    bundle: dict = {}

    corpus_path = out_dir / cfg.corpus.path
    if not corpus_path.exists():
        print(f"error: missing corpus file {corpus_path}", file=sys.stderr)
        return EXIT_RUNTIME
    split = corpus_mod.load_corpus(corpus_path)

    # (a) held-out violation prediction
    report, scores, labels = evaluation.heldout_auc(model, split, seed=cfg.seed)
    bundle["heldout_auc"] = report.auc
    print(f"held-out AUC: {report.auc:.4f}")

    # (b) Pareto frontier over supplied run records
    inputs = cfg.eval.pareto_inputs or [
        str(p) for p in sorted((out_dir / cfg.rl.out_subdir).glob("*/policy_metrics.jsonl"))
    ]
    points = _pareto_points(inputs)
    if points:
        front = evaluation.pareto_front(points)
        bundle["pareto"] = [
            {"reward": p.avg_reward, "cost": p.avg_cost, "run": p.run_id, "mode": p.mode}
            for p in front
        ]
        plots.plot_pareto(points, front, eval_dir / "pareto.png")
        print(f"pareto frontier: {len(front)} of {len(points)} runs")

    # (c) zero-shot transfer to the lavawall layout with unchanged beta
    beta_path = out_dir / cfg.calibrate.report_path
    if beta_path.exists():
        beta = predictor.load_calibration_beta(beta_path)
        lw = cfg.env.grid_config()
        lw.layout_mode = "lavawall"
        lw.horizon = cfg.eval.zero_shot_horizon
        specs = _sample_specs(cfg)
        zs_report, zs_acc = evaluation.zero_shot_eval(
            model, beta, lw, cfg.eval.zero_shot_episodes, specs, seed=cfg.seed + 1
        )
        bundle["zero_shot_auc"] = zs_report.auc
        bundle["zero_shot_accuracy_at_beta"] = zs_acc
        print(f"zero-shot AUC: {zs_report.auc:.4f} (accuracy at beta {zs_acc:.4f})")
    else:
        print(f"error: missing calibration report {beta_path}", file=sys.stderr)
        return EXIT_RUNTIME

    # (d) per-step assigned-cost tables for sample episodes
    rng = np.random.default_rng([cfg.seed, 41])
    heat_pairs = [
        split.test[int(i)]
        for i in rng.choice(
            len(split.test), size=min(cfg.eval.n_heatmap_episodes, len(split.test)),
            replace=False,
        )
    ]
    with open(eval_dir / "heatmaps.jsonl", "w") as f:
        for k, pair in enumerate(heat_pairs):
            rows = evaluation.heatmap_rows(model, pair, beta=beta)
            f.write(
                json.dumps({"text": pair.text.text, "rows": rows}, separators=(",", ":"))
                + "\n"
            )
            plots.plot_heatmap(rows, pair.text.text, eval_dir / f"heatmap_{k}.png")

    with open(eval_dir / "summary.json", "w") as f:
        json.dump(bundle, f, indent=2)
    _write_meta(out_dir, "eval", started)
    return EXIT_OK


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train-ttct": cmd_train_ttct,
    "calibrate": cmd_calibrate,
    "train-policy": cmd_train_policy,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textcost")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="global seed override")
        p.add_argument(
            "--set",
            action="append",
            metavar="SECTION.KEY=VALUE",
            help="config override, repeatable",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - single CLI failure funnel
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
