"""History-and-text-conditioned PPO with a Lagrangian cost constraint.

Three training modes share one code path:

* CP        -- per-step cost from the calibrated frozen predictor; the episode
               ends when the predictor declares a violation.
* GC        -- ground-truth cost: 1.0 exactly at the oracle's violation step,
               which also ends the episode.
* PPO_only  -- cost ignored by the objective; oracle termination still applies.

The policy conditions on (observation, history embedding, text embedding)
where the embeddings come from trainable copies of the two encoders; only
low-rank adapter factors on their attention q/v projections receive gradients,
and only on each update epoch's first minibatch.  The frozen encoders used for
cost prediction are never touched.

Episode-level cost for reporting (Avg.C) is always judged by the oracle,
regardless of mode.
"""

from __future__ import annotations

import copy
import hashlib
import json
import pickle
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .constraints import (
    SpecRanges,
    check_step,
    init_state,
    render_text,
    sample_spec,
)
from .gridworld import GridConfig, N_ACTIONS, VIEW_SIZE, make_env
from .models import (
    AlignmentModel,
    PAD_ACTION,
    SelfAttention,
    cosine,
    pad_token_batch,
    tokenize,
)

MODES = ("CP", "GC", "PPO_only")


@dataclass
class SafeRLConfig:
    mode: str = "GC"
    cost_limit: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    learning_rate: float = 3e-4
    lambda_lr: float = 0.05
    update_epochs: int = 4
    minibatch_size: int = 256
    rollout_steps: int = 256          # per env
    n_parallel_envs: int = 8
    iterations: int = 50
    adapter_rank: int = 4
    adapter_lr: float = 1e-4
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    seed: int = 0
    families: tuple = ("quantitative", "sequential", "mathematical")
    spec_ranges: SpecRanges = field(default_factory=SpecRanges)

    def validate(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")
        if self.cost_limit < 0:
            raise ValueError("cost_limit must be >= 0")
        if self.adapter_rank < 0:
            raise ValueError("adapter_rank must be >= 0")


# ---------------------------------------------------------------------------
# Low-rank adapters


class LoRALinear(nn.Module):
    """Frozen base linear plus a trainable low-rank residual B @ A."""

    def __init__(self, base: nn.Linear, rank: int):
        super().__init__()
        self.base = base
        self.rank = rank
        if rank > 0:
            self.lora_a = nn.Parameter(torch.randn(rank, base.in_features) * 0.02)
            self.lora_b = nn.Parameter(torch.zeros(base.out_features, rank))

    def forward(self, x):
        out = self.base(x)
        if self.rank > 0:
            out = out + (x @ self.lora_a.T) @ self.lora_b.T
        return out


def add_adapters(model: AlignmentModel, rank: int) -> list[nn.Parameter]:
    """Freeze every base parameter and wrap attention q/v projections with
    rank-r adapters.  Returns the trainable adapter parameters."""
    for p in model.parameters():
        p.requires_grad_(False)
    adapter_params: list[nn.Parameter] = []
    for module in model.modules():
        if isinstance(module, SelfAttention):
            module.q_proj = LoRALinear(module.q_proj, rank)
            module.v_proj = LoRALinear(module.v_proj, rank)
            if rank > 0:
                adapter_params += [
                    module.q_proj.lora_a, module.q_proj.lora_b,
                    module.v_proj.lora_a, module.v_proj.lora_b,
                ]
    return adapter_params


def base_encoder_state(model: AlignmentModel) -> dict:
    """State dict of everything except adapter factors."""
    return {
        k: v.detach().clone()
        for k, v in model.state_dict().items()
        if "lora_" not in k
    }


def params_checksum(module: nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# Policy


class MLP(nn.Module):
    def __init__(self, in_dim: int, out_dim: int, hidden: int = 128):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden), nn.Tanh(),
            nn.Linear(hidden, hidden), nn.Tanh(),
            nn.Linear(hidden, out_dim),
        )

    def forward(self, x):
        return self.net(x)


class PolicyModel(nn.Module):
    """Categorical policy over the 4 grid actions plus separate reward and
    cost critics.  All three heads consume (one-hot obs, H_prev, L)."""

    def __init__(self, encoders_star: AlignmentModel, hidden: int = 128):
        super().__init__()
        self.encoders_star = encoders_star
        d = encoders_star.config.d_model
        in_dim = encoders_star.config.state_input_dim + 2 * d
        self.pi = MLP(in_dim, N_ACTIONS, hidden)
        self.v = MLP(in_dim, 1, hidden)
        self.vc = MLP(in_dim, 1, hidden)

    def forward(self, obs, h_prev, l):
        flat = self.encoders_star._one_hot_obs(obs)
        x_pi = torch.cat([flat, h_prev, l], dim=-1)
        # Critics see detached embeddings: adapter factors are driven by the
        # policy objective only.
        x_v = torch.cat([flat, h_prev.detach(), l.detach()], dim=-1)
        return self.pi(x_pi), self.v(x_v).squeeze(-1), self.vc(x_v).squeeze(-1)


def act(
    policy: PolicyModel,
    obs: torch.Tensor,
    h_prev: torch.Tensor,
    l: torch.Tensor,
    generator: torch.Generator | None = None,
    greedy: bool = False,
):
    logits, value, cost_value = policy(obs, h_prev, l)
    if not torch.isfinite(logits).all():
        raise RuntimeError(f"non-finite policy logits: {logits}")
    log_probs = torch.log_softmax(logits, dim=-1)
    if greedy:
        action = logits.argmax(dim=-1)
    else:
        probs = torch.softmax(logits, dim=-1)
        action = torch.multinomial(probs, 1, generator=generator).squeeze(-1)
    lp = log_probs.gather(-1, action[:, None]).squeeze(-1)
    return action, lp, value, cost_value


# ---------------------------------------------------------------------------
# Rollout machinery


class EnvWorker:
    """Owns one env instance plus the per-episode constraint bookkeeping."""

    def __init__(self, index: int, env_config: GridConfig, cfg: SafeRLConfig):
        self.index = index
        self.env_config = env_config
        self.cfg = cfg
        self.rng = np.random.default_rng([cfg.seed, index])
        self.episode_count = 0
        self.episode = None

    def start_episode(self, enc_star: AlignmentModel, frozen: AlignmentModel):
        cfg = self.cfg
        family = cfg.families[
            (self.index + self.episode_count) % len(cfg.families)
        ]
        spec = sample_spec(family, self.rng, cfg.spec_ranges)
        text = render_text(spec, self.rng)
        env = make_env(self.env_config, int(self.rng.integers(2**31 - 1)))
        obs = env.reset()
        toks = [tokenize(enc_star.vocab, text.text, enc_star.config.max_text_len)]
        tokens, tok_lengths = pad_token_batch(toks)
        with torch.no_grad():
            l_star = enc_star.encode_text(tokens, tok_lengths)[0]
            l_frozen = frozen.encode_text(tokens, tok_lengths)[0] if frozen is not None else None
        self.episode = {
            "id": f"w{self.index}e{self.episode_count:06d}",
            "env": env,
            "spec": spec,
            "text": text,
            "tokens": toks[0],
            "checker": init_state(spec),
            "oracle_violated": False,
            "obs": [obs],
            "actions": [],
            "l_star": l_star,
            "l_frozen": l_frozen,
            "reward_sum": 0.0,
            "cost_sum": 0.0,
        }
        self.episode_count += 1
        return self.episode


def _history_batch(enc_star: AlignmentModel, episodes: list[dict]):
    """Padded (o_pad, a_pad)-prefixed histories; returns H_{t-1} per episode."""
    dtype = enc_star.alpha.dtype
    lens = [1 + len(ep["actions"]) for ep in episodes]
    t = max(lens)
    b = len(episodes)
    obs = torch.zeros(b, t, VIEW_SIZE, VIEW_SIZE, 3, dtype=torch.long)
    actions = torch.full((b, t), PAD_ACTION, dtype=torch.long)
    for i, ep in enumerate(episodes):
        n = len(ep["actions"])
        if n:
            obs[i, 1 : n + 1] = torch.as_tensor(np.stack(ep["obs"][:n]))
            actions[i, 1 : n + 1] = torch.as_tensor(
                np.asarray(ep["actions"], dtype=np.int64)
            )
    with torch.no_grad():
        h = enc_star.encode_trajectory(obs, actions)
    idx = torch.tensor(lens) - 1
    return h[torch.arange(b), idx]


def _frozen_scores(frozen: AlignmentModel, episodes: list[dict]):
    """Cosine of each episode's full current trajectory against its text,
    plus the dense cost head output, via the frozen encoders."""
    lens = [len(ep["actions"]) for ep in episodes]
    t = max(lens)
    b = len(episodes)
    obs = torch.zeros(b, t, VIEW_SIZE, VIEW_SIZE, 3, dtype=torch.long)
    actions = torch.full((b, t), PAD_ACTION, dtype=torch.long)
    for i, ep in enumerate(episodes):
        n = lens[i]
        obs[i, :n] = torch.as_tensor(np.stack(ep["obs"][:n]))
        actions[i, :n] = torch.as_tensor(np.asarray(ep["actions"], dtype=np.int64))
    with torch.no_grad():
        h = frozen.encode_trajectory(obs, actions)
        h_final = h[torch.arange(b), torch.tensor(lens) - 1]
        l = torch.stack([ep["l_frozen"] for ep in episodes])
        sims = cosine(h_final, l)
        e_t = torch.sigmoid(torch.exp(frozen.alpha) * sims)
        h_star = e_t[:, None] * h_final
        dense = torch.sigmoid(
            frozen.head_c(torch.cat([h_star, l], dim=-1))
        ).squeeze(-1)
    return sims.numpy(), dense.numpy()


@dataclass
class RolloutBuffer:
    obs: np.ndarray          # [E, S, 7, 7, 3]
    actions: np.ndarray      # [E, S]
    rewards: np.ndarray      # [E, S]
    costs: np.ndarray        # [E, S]
    dones: np.ndarray        # [E, S] episode ended after this step
    log_probs: np.ndarray    # [E, S]
    values: np.ndarray       # [E, S]
    cost_values: np.ndarray  # [E, S]
    h_prev: np.ndarray       # [E, S, d]
    l_star: np.ndarray       # [E, S, d]
    last_values: np.ndarray      # [E] bootstrap
    last_cost_values: np.ndarray
    episode_refs: list       # [E][S] (episode dict, t) for adapter recompute
    finished_episodes: list  # dicts with reward_sum, oracle_violated, length


def rollout(
    policy: PolicyModel,
    frozen: AlignmentModel | None,
    beta: float | None,
    workers: list[EnvWorker],
    cfg: SafeRLConfig,
    generator: torch.Generator,
) -> RolloutBuffer:
    enc_star = policy.encoders_star
    e, s = len(workers), cfg.rollout_steps
    d = enc_star.config.d_model
    dtype = np.float32 if enc_star.alpha.dtype == torch.float32 else np.float64
    buf = RolloutBuffer(
        obs=np.zeros((e, s, VIEW_SIZE, VIEW_SIZE, 3), dtype=np.int64),
        actions=np.zeros((e, s), dtype=np.int64),
        rewards=np.zeros((e, s), dtype=dtype),
        costs=np.zeros((e, s), dtype=dtype),
        dones=np.zeros((e, s), dtype=bool),
        log_probs=np.zeros((e, s), dtype=dtype),
        values=np.zeros((e, s), dtype=dtype),
        cost_values=np.zeros((e, s), dtype=dtype),
        h_prev=np.zeros((e, s, d), dtype=dtype),
        l_star=np.zeros((e, s, d), dtype=dtype),
        last_values=np.zeros(e, dtype=dtype),
        last_cost_values=np.zeros(e, dtype=dtype),
        episode_refs=[[None] * s for _ in range(e)],
        finished_episodes=[],
    )
    for w in workers:
        if w.episode is None:
            w.start_episode(enc_star, frozen)
    for t in range(s):
        episodes = [w.episode for w in workers]
        h_prev = _history_batch(enc_star, episodes)
        l_star = torch.stack([ep["l_star"] for ep in episodes])
        obs_t = torch.as_tensor(np.stack([ep["obs"][-1] for ep in episodes]))
        with torch.no_grad():
            action, lp, value, cost_value = act(
                policy, obs_t, h_prev, l_star, generator=generator
            )
        # step every env
        step_events = []
        for i, w in enumerate(workers):
            ep = w.episode
            a = int(action[i].item())
            buf.obs[i, t] = ep["obs"][-1]
            buf.actions[i, t] = a
            buf.log_probs[i, t] = lp[i].item()
            buf.values[i, t] = value[i].item()
            buf.cost_values[i, t] = cost_value[i].item()
            buf.h_prev[i, t] = h_prev[i].numpy()
            buf.l_star[i, t] = l_star[i].numpy()
            buf.episode_refs[i][t] = (ep, len(ep["actions"]))
            result = ep["env"].step(a)
            ep["actions"].append(a)
            ep["obs"].append(result.obs)
            ep["reward_sum"] += result.reward
            buf.rewards[i, t] = result.reward
            ep["checker"], violated = check_step(ep["spec"], ep["checker"], result.events)
            newly_violated = violated and not ep["oracle_violated"]
            ep["oracle_violated"] = ep["oracle_violated"] or violated
            step_events.append((result, newly_violated))
        # per-mode cost and termination
        if cfg.mode == "CP":
            sims, dense = _frozen_scores(frozen, [w.episode for w in workers])
        for i, w in enumerate(workers):
            ep = w.episode
            result, newly_violated = step_events[i]
            done = result.truncated
            if cfg.mode == "CP":
                if sims[i] >= beta:
                    cost = 1.0
                    done = True
                else:
                    cost = float(dense[i])
            elif cfg.mode == "GC":
                if newly_violated:
                    cost = 1.0
                    done = True
                else:
                    cost = 0.0
            else:  # PPO_only
                cost = 0.0
                if newly_violated:
                    done = True
            buf.costs[i, t] = cost
            ep["cost_sum"] += cost
            buf.dones[i, t] = done
            if done:
                buf.finished_episodes.append(
                    {
                        "worker": w.index,
                        "reward_sum": ep["reward_sum"],
                        "cost_sum": ep["cost_sum"],
                        "oracle_violated": bool(ep["oracle_violated"]),
                        "length": len(ep["actions"]),
                        "family": ep["spec"].family,
                    }
                )
                w.start_episode(enc_star, frozen)
    # bootstrap values for unfinished episodes
    episodes = [w.episode for w in workers]
    h_prev = _history_batch(enc_star, episodes)
    l_star = torch.stack([ep["l_star"] for ep in episodes])
    obs_t = torch.as_tensor(np.stack([ep["obs"][-1] for ep in episodes]))
    with torch.no_grad():
        _, value, cost_value = policy(obs_t, h_prev, l_star)
    buf.last_values = value.numpy().astype(dtype)
    buf.last_cost_values = cost_value.numpy().astype(dtype)
    return buf


# ---------------------------------------------------------------------------
# Advantage estimation and the PPO update


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    last_values: np.ndarray,
    gamma: float,
    lam: float,
):
    e, s = rewards.shape
    adv = np.zeros_like(rewards)
    running = np.zeros(e, dtype=rewards.dtype)
    next_values = last_values
    for t in reversed(range(s)):
        nonterminal = 1.0 - dones[:, t].astype(rewards.dtype)
        delta = rewards[:, t] + gamma * next_values * nonterminal - values[:, t]
        running = delta + gamma * lam * nonterminal * running
        adv[:, t] = running
        next_values = values[:, t]
    returns = adv + values
    return adv, returns


def _recompute_embeddings(policy: PolicyModel, refs: list):
    """Re-encode H_{t-1} and L through the adapter-bearing encoders with
    gradients enabled, for the minibatch transitions in refs."""
    enc_star = policy.encoders_star
    lens = [1 + t for _, t in refs]
    tmax = max(lens)
    b = len(refs)
    obs = torch.zeros(b, tmax, VIEW_SIZE, VIEW_SIZE, 3, dtype=torch.long)
    actions = torch.full((b, tmax), PAD_ACTION, dtype=torch.long)
    for i, (ep, t) in enumerate(refs):
        if t:
            obs[i, 1 : t + 1] = torch.as_tensor(np.stack(ep["obs"][:t]))
            actions[i, 1 : t + 1] = torch.as_tensor(
                np.asarray(ep["actions"][:t], dtype=np.int64)
            )
    h = enc_star.encode_trajectory(obs, actions)
    h_prev = h[torch.arange(b), torch.tensor(lens) - 1]
    tokens, tok_lengths = pad_token_batch([ep["tokens"] for ep, _ in refs])
    l = enc_star.encode_text(tokens, tok_lengths)
    return h_prev, l


@dataclass
class UpdateMetrics:
    policy_loss: float
    value_loss: float
    cost_value_loss: float
    entropy: float
    lagrange: float
    j_c_estimate: float


def lambda_step(lam: float, j_c: float, cfg: SafeRLConfig) -> float:
    return max(0.0, lam + cfg.lambda_lr * (j_c - cfg.cost_limit))


def update(
    policy: PolicyModel,
    buf: RolloutBuffer,
    cfg: SafeRLConfig,
    lam: float,
    optimizer: torch.optim.Optimizer,
    adapter_optimizer: torch.optim.Optimizer | None,
    generator: torch.Generator,
) -> tuple[float, UpdateMetrics]:
    dtype = policy.pi.net[0].weight.dtype
    adv_r, ret_r = gae(
        buf.rewards, buf.values, buf.dones, buf.last_values, cfg.gamma, cfg.gae_lambda
    )
    adv_c, ret_c = gae(
        buf.costs, buf.cost_values, buf.dones, buf.last_cost_values,
        cfg.gamma, cfg.gae_lambda,
    )
    # Lagrange multiplier moves once per update, before the epochs, on the
    # mean episodic cost of the finished episodes (fallback: buffer mean).
    if cfg.mode != "PPO_only":
        if buf.finished_episodes:
            j_c = float(np.mean([ep["cost_sum"] for ep in buf.finished_episodes]))
        else:
            j_c = float(buf.costs.sum() / buf.costs.shape[0])
        lam = lambda_step(lam, j_c, cfg)
    else:
        j_c = 0.0

    n = buf.rewards.size
    flat = lambda a: torch.as_tensor(a.reshape(n, *a.shape[2:]))
    obs_f = flat(buf.obs)
    act_f = flat(buf.actions)
    lp_f = flat(buf.log_probs).to(dtype)
    advr_f = flat(adv_r).to(dtype)
    advc_f = flat(adv_c).to(dtype)
    retr_f = flat(ret_r).to(dtype)
    retc_f = flat(ret_c).to(dtype)
    h_f = flat(buf.h_prev).to(dtype)
    l_f = flat(buf.l_star).to(dtype)
    refs_f = [r for row in buf.episode_refs for r in row]

    metrics = None
    for epoch in range(cfg.update_epochs):
        perm = torch.randperm(n, generator=generator)
        for mb_start in range(0, n, cfg.minibatch_size):
            mb = perm[mb_start : mb_start + cfg.minibatch_size]
            first_minibatch = mb_start == 0
            use_adapters = (
                first_minibatch
                and adapter_optimizer is not None
            )
            if use_adapters:
                h_mb, l_mb = _recompute_embeddings(
                    policy, [refs_f[int(i)] for i in mb]
                )
            else:
                h_mb, l_mb = h_f[mb], l_f[mb]
            logits, value, cost_value = policy(obs_f[mb], h_mb, l_mb)
            log_probs = torch.log_softmax(logits, dim=-1)
            lp = log_probs.gather(-1, act_f[mb][:, None]).squeeze(-1)
            ratio = torch.exp(lp - lp_f[mb])
            adv = advr_f[mb] - lam * advc_f[mb]
            adv = (adv - adv.mean()) / (adv.std() + 1e-8)
            surrogate = torch.min(
                ratio * adv,
                torch.clamp(ratio, 1 - cfg.clip, 1 + cfg.clip) * adv,
            )
            entropy = -(log_probs.exp() * log_probs).sum(dim=-1).mean()
            policy_loss = -surrogate.mean() - cfg.entropy_coef * entropy
            v_loss = ((value - retr_f[mb]) ** 2).mean()
            vc_loss = ((cost_value - retc_f[mb]) ** 2).mean()
            loss = policy_loss + cfg.value_coef * (v_loss + vc_loss)
            if not torch.isfinite(loss):
                raise RuntimeError("non-finite loss in policy update")
            optimizer.zero_grad()
            if adapter_optimizer is not None:
                adapter_optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            if use_adapters:
                adapter_optimizer.step()
            metrics = UpdateMetrics(
                policy_loss=policy_loss.item(),
                value_loss=v_loss.item(),
                cost_value_loss=vc_loss.item(),
                entropy=entropy.item(),
                lagrange=lam,
                j_c_estimate=j_c,
            )
    return lam, metrics


# ---------------------------------------------------------------------------
# Policy checkpoints


POLICY_FORMAT_VERSION = 1


def save_policy(path, policy: PolicyModel, lam: float, frozen_hash: str, cfg: SafeRLConfig):
    payload = {
        "format_version": POLICY_FORMAT_VERSION,
        "kind": "policy",
        "lagrange": lam,
        "frozen_encoder_hash": frozen_hash,
        "mode": cfg.mode,
        "tensors": {
            k: v.detach().cpu().numpy().copy() for k, v in policy.state_dict().items()
        },
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        pickle.dump(payload, f, protocol=4)


# ---------------------------------------------------------------------------
# Top-level training


def train_policy(
    cfg: SafeRLConfig,
    env_config: GridConfig,
    frozen_model: AlignmentModel | None,
    beta: float | None,
    out_dir=None,
    log_fn=None,
) -> list[dict]:
    """Alternate rollout and update to the iteration budget; returns one
    record per iteration (avg reward / oracle-judged avg cost / lambda)."""
    cfg.validate()
    if cfg.mode == "CP" and (frozen_model is None or beta is None):
        raise ValueError("CP mode requires a calibrated frozen model and beta")
    if frozen_model is None:
        raise ValueError("a frozen encoder pair is required to condition the policy")
    torch.manual_seed(cfg.seed)
    frozen_model.eval()
    for p in frozen_model.parameters():
        p.requires_grad_(False)
    frozen_hash = params_checksum(frozen_model)

    enc_star = copy.deepcopy(frozen_model)
    adapter_params = add_adapters(enc_star, cfg.adapter_rank)
    policy = PolicyModel(enc_star)
    trainable = (
        list(policy.pi.parameters())
        + list(policy.v.parameters())
        + list(policy.vc.parameters())
    )
    optimizer = torch.optim.Adam(trainable, lr=cfg.learning_rate)
    adapter_optimizer = (
        torch.optim.Adam(adapter_params, lr=cfg.adapter_lr) if adapter_params else None
    )
    generator = torch.Generator().manual_seed(cfg.seed)
    workers = [EnvWorker(i, env_config, cfg) for i in range(cfg.n_parallel_envs)]
    lam = 0.0
    records = []
    metrics_f = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        metrics_f = open(out_dir / "policy_metrics.jsonl", "a")
    last_avg_r, last_avg_c = 0.0, 0.0
    try:
        for it in range(cfg.iterations):
            buf = rollout(
                policy, frozen_model, beta, workers, cfg, generator
            )
            lam, umetrics = update(
                policy, buf, cfg, lam, optimizer, adapter_optimizer, generator
            )
            if buf.finished_episodes:
                last_avg_r = float(
                    np.mean([ep["reward_sum"] for ep in buf.finished_episodes])
                )
                last_avg_c = float(
                    np.mean(
                        [float(ep["oracle_violated"]) for ep in buf.finished_episodes]
                    )
                )
            record = {
                "iteration": it,
                "episodes": len(buf.finished_episodes),
                "avg_reward": last_avg_r,
                "avg_cost": last_avg_c,
                "lambda": lam,
                "mode": cfg.mode,
                "seed": cfg.seed,
            }
            records.append(record)
            if metrics_f:
                metrics_f.write(json.dumps(record, separators=(",", ":")) + "\n")
                metrics_f.flush()
            if log_fn:
                log_fn(record, umetrics)
        if frozen_hash != params_checksum(frozen_model):
            raise RuntimeError("frozen encoders were mutated during policy training")
        if out_dir is not None:
            save_policy(out_dir / "policy.ckpt", policy, lam, frozen_hash, cfg)
    finally:
        if metrics_f:
            metrics_f.close()
    return records
