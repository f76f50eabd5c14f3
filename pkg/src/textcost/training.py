"""Three-loss training core for the alignment model.

Losses per batch:

* contrastive loss between trajectory and text embeddings across the batch,
  with soft targets obtained by normalizing the binary ground-truth matrix;
* within-trajectory loss concentrating similarity mass on the final
  (violating) step;
* cost-assignment consistency loss, computed on detached embeddings so its
  gradients reach only the two cost heads.

The total is the plain unweighted sum of the three.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, checkpoint_extra, save_checkpoint
from .constraints import check_trajectory, spec_key
from .corpus import Batch, CorpusSplit, Pair
from .models import (
    AlignmentModel,
    cosine,
    gather_final,
    pad_token_batch,
    pad_trajectory_batch,
    tokenize,
)

LOG_EPS = 1e-12


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class LossReport:
    l_mc: float
    l_wt: float
    l_ca: float
    l_total: float
    batch_size: int


@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 30
    learning_rate: float = 3e-4
    seed: int = 0
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    target_norm: str = "softmax"  # or "sum"

    def validate(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (contrastive loss needs negatives)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.target_norm not in ("softmax", "sum"):
            raise ValueError(f"unknown target_norm {self.target_norm!r}")


def paper_scale_train_config() -> TrainConfig:
    """Full-scale preset; not the desk default."""
    return TrainConfig(batch_size=194, epochs=32, learning_rate=1e-6)


# ---------------------------------------------------------------------------
# Batch tensorization


@dataclass
class BatchTensors:
    obs: torch.Tensor        # [N, T, 7, 7, 3]
    actions: torch.Tensor    # [N, T]
    lengths: torch.Tensor    # [N]
    tokens: torch.Tensor     # [N, S]
    tok_lengths: torch.Tensor
    q: torch.Tensor          # [N, N] float


def tensorize_batch(model: AlignmentModel, batch: Batch) -> BatchTensors:
    dtype = model.alpha.dtype
    obs, act, lengths = pad_trajectory_batch(
        [p.trajectory.observations for p in batch.pairs],
        [p.trajectory.actions for p in batch.pairs],
    )
    toks = [
        tokenize(model.vocab, p.text.text, model.config.max_text_len)
        for p in batch.pairs
    ]
    tokens, tok_lengths = pad_token_batch(toks)
    q = torch.as_tensor(batch.q_traj_to_text, dtype=dtype)
    return BatchTensors(obs, act, lengths, tokens, tok_lengths, q)


def encode_batch(model: AlignmentModel, bt: BatchTensors):
    h = model.encode_trajectory(bt.obs, bt.actions)
    l = model.encode_text(bt.tokens, bt.tok_lengths)
    return h, l


# ---------------------------------------------------------------------------
# Losses


def _kl_rows(p: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    p = p.clamp(min=LOG_EPS)
    target = target.clamp(min=LOG_EPS)
    return (p * (p.log() - target.log())).sum(dim=-1)


def _target_rows(q: torch.Tensor, target_norm: str) -> torch.Tensor:
    if target_norm == "softmax":
        return torch.softmax(q, dim=-1)
    return q / q.sum(dim=-1, keepdim=True)


def mc_loss_from(
    model: AlignmentModel, h: torch.Tensor, l: torch.Tensor, bt: BatchTensors,
    target_norm: str = "softmax",
) -> torch.Tensor:
    h_final = gather_final(h, bt.lengths)
    hn = h_final / h_final.norm(dim=-1, keepdim=True).clamp(min=1e-8)
    ln = l / l.norm(dim=-1, keepdim=True).clamp(min=1e-8)
    sim = torch.exp(model.alpha) * (hn @ ln.T)  # sim[i, j] = sim_T(traj_i, text_j)
    if not torch.isfinite(sim).all():
        raise TrainingDivergedError(f"non-finite similarity matrix: {sim}")
    p_t2y = torch.softmax(sim, dim=-1)
    p_y2t = torch.softmax(sim.T, dim=-1)
    kl1 = _kl_rows(p_t2y, _target_rows(bt.q, target_norm))
    kl2 = _kl_rows(p_y2t, _target_rows(bt.q.T, target_norm))
    return 0.5 * (kl1.mean() + kl2.mean())


def wt_loss_from_sims(sims: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """Within-trajectory loss from raw per-step similarity scores [N, T]."""
    t = sims.shape[1]
    pos = torch.arange(t, device=sims.device)[None, :]
    valid = pos < lengths[:, None]
    sims = sims.masked_fill(~valid, float("-inf"))
    p = torch.softmax(sims, dim=-1)
    is_final = pos == (lengths - 1)[:, None]
    log_one_minus = torch.log((1 - p).clamp(min=LOG_EPS))
    log_final = torch.log(p.clamp(min=LOG_EPS))
    before = (log_one_minus * (valid & ~is_final)).sum(dim=-1)
    final = (log_final * is_final).sum(dim=-1)
    per_pair = -(before + final) / lengths.to(p.dtype)
    return per_pair.mean()


def wt_loss_from(
    model: AlignmentModel, h: torch.Tensor, l: torch.Tensor, bt: BatchTensors
) -> torch.Tensor:
    sims = torch.exp(model.alpha) * cosine(h, l[:, None, :])  # [N, T]
    return wt_loss_from_sims(sims, bt.lengths)


def ca_forward_from(
    model: AlignmentModel, h: torch.Tensor, l: torch.Tensor, bt: BatchTensors
):
    """Attention scores e_t, per-step costs c_hat (t = 1..T-1), and the
    episodic cost C_hat.  Everything entering this path is detached from the
    encoder graph."""
    hd = h.detach()
    ld = l.detach()
    alpha = model.alpha.detach()
    e = torch.sigmoid(torch.exp(alpha) * cosine(hd, ld[:, None, :]))  # [N, T]
    h_star = e[:, :, None] * hd
    ld_rep = ld[:, None, :].expand_as(h_star)
    c_hat = torch.sigmoid(
        model.head_c(torch.cat([h_star, ld_rep], dim=-1))
    ).squeeze(-1)  # [N, T]
    big_c = torch.sigmoid(model.head_e(ld)).squeeze(-1)  # [N]
    return e, c_hat, big_c


def ca_loss_from(
    model: AlignmentModel, h: torch.Tensor, l: torch.Tensor, bt: BatchTensors
) -> torch.Tensor:
    _, c_hat, big_c = ca_forward_from(model, h, l, bt)
    t = h.shape[1]
    pos = torch.arange(t, device=h.device)[None, :]
    nonfinal = pos < (bt.lengths - 1)[:, None]
    sums = (c_hat * nonfinal).sum(dim=-1)
    return ((sums - big_c) ** 2).mean()


def compute_losses(
    model: AlignmentModel, batch: Batch, target_norm: str = "softmax"
):
    bt = tensorize_batch(model, batch)
    h, l = encode_batch(model, bt)
    l_mc = mc_loss_from(model, h, l, bt, target_norm)
    l_wt = wt_loss_from(model, h, l, bt)
    l_ca = ca_loss_from(model, h, l, bt)
    return l_mc, l_wt, l_ca


# Single-batch / single-pair convenience wrappers used by tests and tools.


def mc_loss(model: AlignmentModel, batch: Batch, target_norm: str = "softmax") -> torch.Tensor:
    bt = tensorize_batch(model, batch)
    h, l = encode_batch(model, bt)
    return mc_loss_from(model, h, l, bt, target_norm)


def _single_pair_batch(pair: Pair) -> Batch:
    return Batch([pair], np.ones((1, 1), dtype=np.int8))


def wt_loss(model: AlignmentModel, pair: Pair) -> torch.Tensor:
    bt = tensorize_batch(model, _single_pair_batch(pair))
    h, l = encode_batch(model, bt)
    return wt_loss_from(model, h, l, bt)


def ca_forward(model: AlignmentModel, pair: Pair):
    bt = tensorize_batch(model, _single_pair_batch(pair))
    h, l = encode_batch(model, bt)
    e, c_hat, big_c = ca_forward_from(model, h, l, bt)
    t = len(pair.trajectory)
    return e[0, :t], c_hat[0, : t - 1], big_c[0]


def ca_loss(model: AlignmentModel, pair: Pair) -> torch.Tensor:
    bt = tensorize_batch(model, _single_pair_batch(pair))
    h, l = encode_batch(model, bt)
    return ca_loss_from(model, h, l, bt)


# ---------------------------------------------------------------------------
# Cross-pair ground truth with caching


class QCache:
    """Memoizes oracle cross checks keyed by (trajectory id, spec key)."""

    def __init__(self):
        self._cache: dict = {}

    def violates(self, pair_i: Pair, pair_j: Pair) -> bool:
        key = (pair_i.trajectory.traj_id, spec_key(pair_j.text.spec))
        if key not in self._cache:
            self._cache[key] = (
                check_trajectory(pair_j.text.spec, pair_i.trajectory.events)
                is not None
            )
        return self._cache[key]

    def build_q(self, pairs: list[Pair]) -> np.ndarray:
        n = len(pairs)
        q = np.zeros((n, n), dtype=np.int8)
        for i, pi in enumerate(pairs):
            for j, pj in enumerate(pairs):
                if self.violates(pi, pj):
                    q[i, j] = 1
        return q


# ---------------------------------------------------------------------------
# Epoch loop


def _optimizer_state_to_numpy(optimizer: torch.optim.Optimizer) -> dict:
    sd = optimizer.state_dict()
    out = {"param_groups": sd["param_groups"], "state": {}}
    for k, st in sd["state"].items():
        out["state"][k] = {
            name: (v.detach().cpu().numpy().copy() if torch.is_tensor(v) else v)
            for name, v in st.items()
        }
    return out


def _optimizer_state_from_numpy(optimizer: torch.optim.Optimizer, payload: dict, dtype):
    sd = {"param_groups": payload["param_groups"], "state": {}}
    for k, st in payload["state"].items():
        sd["state"][int(k)] = {
            name: (
                torch.as_tensor(v, dtype=dtype if np.asarray(v).dtype.kind == "f" else None)
                if isinstance(v, np.ndarray)
                else v
            )
            for name, v in st.items()
        }
    optimizer.load_state_dict(sd)


def train(
    model: AlignmentModel,
    corpus: CorpusSplit,
    cfg: TrainConfig,
    checkpoint_dir=None,
    metrics_path=None,
    resume_from=None,
    log_fn=None,
) -> tuple[AlignmentModel, list[LossReport]]:
    """End-to-end epoch loop over shuffled batches of the training split.

    Emits one checkpoint per epoch when checkpoint_dir is given and one
    metrics record per batch when metrics_path is given.  Deterministic under
    a fixed seed at a fixed thread count.  On divergence the last completed
    epoch's checkpoint is left in place and TrainingDivergedError is raised.
    """
    cfg.validate()
    if not corpus.train:
        raise ValueError("empty training split")
    optimizer = torch.optim.Adam(
        model.parameters(),
        lr=cfg.learning_rate,
        betas=cfg.adam_betas,
        eps=cfg.adam_eps,
    )
    rng = np.random.default_rng(cfg.seed)
    start_epoch = 0
    if resume_from is not None:
        extra = checkpoint_extra(resume_from)
        resumed = load_checkpoint(resume_from, dtype=model.alpha.dtype)
        model.load_state_dict(resumed.state_dict())
        _optimizer_state_from_numpy(optimizer, extra["optimizer"], model.alpha.dtype)
        rng.bit_generator.state = json.loads(extra["rng_state"])
        start_epoch = extra["epoch"] + 1

    qcache = QCache()
    reports: list[LossReport] = []
    metrics_f = open(metrics_path, "a") if metrics_path else None
    try:
        for epoch in range(start_epoch, cfg.epochs):
            order = rng.permutation(len(corpus.train))
            n_batches = math.ceil(len(order) / cfg.batch_size)
            for step in range(n_batches):
                sel = order[step * cfg.batch_size : (step + 1) * cfg.batch_size]
                pairs = [corpus.train[int(i)] for i in sel]
                batch = Batch(pairs, qcache.build_q(pairs))
                l_mc, l_wt, l_ca = compute_losses(model, batch, cfg.target_norm)
                total = l_mc + l_wt + l_ca
                if not torch.isfinite(total):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch} step {step}: "
                        f"mc={l_mc.item()} wt={l_wt.item()} ca={l_ca.item()}"
                    )
                optimizer.zero_grad()
                total.backward()
                optimizer.step()
                report = LossReport(
                    l_mc=l_mc.item(),
                    l_wt=l_wt.item(),
                    l_ca=l_ca.item(),
                    l_total=l_mc.item() + l_wt.item() + l_ca.item(),
                    batch_size=len(pairs),
                )
                reports.append(report)
                if metrics_f:
                    metrics_f.write(
                        json.dumps(
                            {
                                "epoch": epoch,
                                "step": step,
                                "l_mc": report.l_mc,
                                "l_wt": report.l_wt,
                                "l_ca": report.l_ca,
                                "l_total": report.l_total,
                                "alpha": model.alpha.item(),
                            },
                            separators=(",", ":"),
                        )
                        + "\n"
                    )
                    metrics_f.flush()
            if log_fn:
                epoch_reports = reports[-n_batches:]
                log_fn(epoch, epoch_reports)
            if checkpoint_dir is not None:
                save_checkpoint(
                    Path(checkpoint_dir) / f"epoch_{epoch:03d}.ckpt",
                    model,
                    extra={
                        "epoch": epoch,
                        "optimizer": _optimizer_state_to_numpy(optimizer),
                        "rng_state": json.dumps(rng.bit_generator.state),
                    },
                )
    finally:
        if metrics_f:
            metrics_f.close()
    return model, reports
