"""Two-tower representation stack: word-level tokenizer, text encoder,
state/action embedders, causal trajectory encoder, and the temperature-scaled
cosine similarity shared by training and inference.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .constraints import SpecRanges, constraint_pool, render_with_template, number_word
from .gridworld import N_ACTIONS, VIEW_SIZE

PAD_ID = 0
UNK_ID = 1
PAD_ACTION = N_ACTIONS  # reserved index for the padded (o_pad, a_pad) step

COS_EPS = 1e-8

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*")


@dataclass
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_text_len: int = 64
    max_traj_len: int = 220
    n_terrain_kinds: int = 5
    n_object_kinds: int = 4
    n_reserved_kinds: int = 2

    @property
    def state_input_dim(self) -> int:
        per_cell = self.n_terrain_kinds + self.n_object_kinds + self.n_reserved_kinds
        return VIEW_SIZE * VIEW_SIZE * per_cell


def paper_scale_config() -> ModelConfig:
    """Full-scale preset (512-wide, 12 layers); not the desk default."""
    return ModelConfig(d_model=512, n_layers=12, n_heads=8)


# ---------------------------------------------------------------------------
# Tokenizer


class Vocab:
    def __init__(self, itos: list[str]):
        assert itos[PAD_ID] == "<pad>" and itos[UNK_ID] == "<unk>"
        self.itos = list(itos)
        self.stoi = {w: i for i, w in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.itos == other.itos


def word_tokenize(text: str) -> list[str]:
    if not text:
        raise ValueError("cannot tokenize an empty string")
    return _TOKEN_RE.findall(text.lower())


def build_vocab(ranges: SpecRanges | None = None) -> Vocab:
    """Deterministic vocabulary over every template rendering plus all
    digit strings and number words in range."""
    ranges = ranges or SpecRanges()
    words: set[str] = set()
    for spec, tid in constraint_pool(ranges):
        words.update(word_tokenize(render_with_template(spec, tid).text))
    top = max(ranges.max_hp, ranges.max_quant_limit, 30)
    for n in range(top + 1):
        words.add(str(n))
        words.update(word_tokenize(number_word(n)))
    return Vocab(["<pad>", "<unk>"] + sorted(words))


def tokenize(vocab: Vocab, text: str, max_len: int = 64) -> list[int]:
    toks = word_tokenize(text)[:max_len]
    return [vocab.stoi.get(w, UNK_ID) for w in toks]


# ---------------------------------------------------------------------------
# Transformer blocks


class SelfAttention(nn.Module):
    """Multi-head self-attention with explicit q/k/v/out projections so the
    adapter fine-tuning path can wrap individual projections."""

    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        assert d_model % n_heads == 0
        self.n_heads = n_heads
        self.head_dim = d_model // n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(self, x, causal: bool = False, key_padding_mask=None):
        # x: [B, T, D]; key_padding_mask: [B, T] bool, True = padded
        b, t, d = x.shape
        q = self.q_proj(x).view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        k = self.k_proj(x).view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        v = self.v_proj(x).view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if causal:
            mask = torch.triu(
                torch.ones(t, t, dtype=torch.bool, device=x.device), diagonal=1
            )
            scores = scores.masked_fill(mask, float("-inf"))
        if key_padding_mask is not None:
            scores = scores.masked_fill(
                key_padding_mask[:, None, None, :], float("-inf")
            )
        att = torch.softmax(scores, dim=-1)
        out = (att @ v).transpose(1, 2).reshape(b, t, d)
        return self.out_proj(out)


class TransformerBlock(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d_model)
        self.attn = SelfAttention(d_model, n_heads)
        self.ln2 = nn.LayerNorm(d_model)
        self.mlp = nn.Sequential(
            nn.Linear(d_model, 4 * d_model),
            nn.GELU(),
            nn.Linear(4 * d_model, d_model),
        )

    def forward(self, x, causal: bool = False, key_padding_mask=None):
        x = x + self.attn(self.ln1(x), causal=causal, key_padding_mask=key_padding_mask)
        x = x + self.mlp(self.ln2(x))
        return x


# ---------------------------------------------------------------------------
# Alignment model


class AlignmentModel(nn.Module):
    """Trajectory tower, text tower, temperature, and the two cost heads."""

    def __init__(self, config: ModelConfig, vocab: Vocab):
        super().__init__()
        self.config = config
        self.vocab = vocab
        d = config.d_model
        assert d % 2 == 0
        self.state_embedder = nn.Linear(config.state_input_dim, d // 2)
        self.action_embedder = nn.Embedding(N_ACTIONS + 1, d // 2)  # +1 pad action
        self.traj_pos = nn.Embedding(config.max_traj_len, d)
        self.traj_blocks = nn.ModuleList(
            TransformerBlock(d, config.n_heads) for _ in range(config.n_layers)
        )
        self.traj_ln = nn.LayerNorm(d)
        self.token_embedder = nn.Embedding(len(vocab), d, padding_idx=PAD_ID)
        self.text_pos = nn.Embedding(config.max_text_len, d)
        self.text_blocks = nn.ModuleList(
            TransformerBlock(d, config.n_heads) for _ in range(config.n_layers)
        )
        self.text_ln = nn.LayerNorm(d)
        self.alpha = nn.Parameter(torch.tensor(math.log(1 / 0.07)))
        self.head_e = nn.Linear(d, 1)
        self.head_c = nn.Linear(2 * d, 1)

    # -- encoders -------------------------------------------------------

    def _one_hot_obs(self, obs: torch.Tensor) -> torch.Tensor:
        # obs: [..., 7, 7, 3] long -> flattened one-hot float [..., state_input_dim]
        c = self.config
        terr = F.one_hot(obs[..., 0], c.n_terrain_kinds)
        objs = F.one_hot(obs[..., 1], c.n_object_kinds)
        resv = F.one_hot(obs[..., 2], c.n_reserved_kinds)
        flat = torch.cat([terr, objs, resv], dim=-1)
        return flat.flatten(start_dim=-3).to(self.alpha.dtype)

    def embed_steps(self, obs: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        """Per-step input vectors v_t = concat(state emb, action emb).

        obs: [B, T, 7, 7, 3] long; actions: [B, T] long.
        """
        vs = self.state_embedder(self._one_hot_obs(obs))
        va = self.action_embedder(actions)
        return torch.cat([vs, va], dim=-1)

    def encode_trajectory(self, obs: torch.Tensor, actions: torch.Tensor) -> torch.Tensor:
        """Causal per-step embeddings H_1..H_T, shape [B, T, d].

        Row t depends only on steps 1..t; H[:, -1] is the whole-trajectory
        representation for full-length inputs.

        The stack always runs at the fixed internal length max_traj_len and
        slices the result back down.  CPU matmul/softmax kernels choose their
        reduction order from tensor shapes, so running a prefix through a
        shorter tensor would change low-order bits; with a fixed shape the
        encoding of a prefix is bitwise equal to the sliced encoding of the
        full trajectory (pad rows sit behind the causal mask).
        """
        b, t = actions.shape
        if t == 0:
            raise ValueError("cannot encode a length-0 trajectory")
        full = self.config.max_traj_len
        if t > full:
            raise ValueError(
                f"trajectory length {t} exceeds max_traj_len {full}"
            )
        if t < full:
            obs = torch.cat(
                [obs, torch.zeros(b, full - t, *obs.shape[2:], dtype=obs.dtype, device=obs.device)],
                dim=1,
            )
            actions = torch.cat(
                [actions, torch.full((b, full - t), PAD_ACTION, dtype=actions.dtype, device=actions.device)],
                dim=1,
            )
        x = self.embed_steps(obs, actions)
        pos = torch.arange(full, device=x.device)
        x = x + self.traj_pos(pos)[None, :, :]
        for block in self.traj_blocks:
            x = block(x, causal=True)
        return self.traj_ln(x)[:, :t]

    def encode_text(self, tokens: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Mean-pooled text embedding, shape [B, d].

        tokens: [B, S] long, zero-padded; lengths: [B] long.
        """
        pad_mask = tokens == PAD_ID
        pos = torch.arange(tokens.shape[1], device=tokens.device)
        x = self.token_embedder(tokens) + self.text_pos(pos)[None, :, :]
        for block in self.text_blocks:
            x = block(x, key_padding_mask=pad_mask)
        x = self.text_ln(x)
        keep = (~pad_mask).to(x.dtype)[:, :, None]
        return (x * keep).sum(dim=1) / lengths.to(x.dtype)[:, None]


def similarity(h: torch.Tensor, l: torch.Tensor, alpha: torch.Tensor) -> torch.Tensor:
    """exp(alpha) * cosine(h, l) along the last dimension, eps-guarded."""
    return torch.exp(alpha) * F.cosine_similarity(h, l, dim=-1, eps=COS_EPS)


def cosine(h: torch.Tensor, l: torch.Tensor) -> torch.Tensor:
    return F.cosine_similarity(h, l, dim=-1, eps=COS_EPS)


# ---------------------------------------------------------------------------
# Batch tensorization helpers


def pad_token_batch(token_lists: list[list[int]], device=None) -> tuple[torch.Tensor, torch.Tensor]:
    lengths = torch.tensor([len(t) for t in token_lists], dtype=torch.long, device=device)
    s = int(lengths.max().item())
    out = torch.zeros(len(token_lists), s, dtype=torch.long, device=device)
    for i, toks in enumerate(token_lists):
        out[i, : len(toks)] = torch.tensor(toks, dtype=torch.long, device=device)
    return out, lengths


def pad_trajectory_batch(
    obs_list: list[np.ndarray], act_list: list[np.ndarray], device=None
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Right-pad trajectories to a common length.

    Padding uses all-zero observations and the reserved pad action; causal
    encoding makes right padding invisible to real positions.
    """
    lengths = torch.tensor([len(a) for a in act_list], dtype=torch.long, device=device)
    t = int(lengths.max().item())
    b = len(obs_list)
    obs = torch.zeros(b, t, VIEW_SIZE, VIEW_SIZE, 3, dtype=torch.long, device=device)
    act = torch.full((b, t), PAD_ACTION, dtype=torch.long, device=device)
    for i, (o, a) in enumerate(zip(obs_list, act_list)):
        obs[i, : len(a)] = torch.as_tensor(np.asarray(o), dtype=torch.long, device=device)
        act[i, : len(a)] = torch.as_tensor(np.asarray(a), dtype=torch.long, device=device)
    return obs, act, lengths


def gather_final(h: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
    """H_T for each row of a padded [B, T, d] batch."""
    idx = (lengths - 1).clamp(min=0)
    return h[torch.arange(h.shape[0], device=h.device), idx]
