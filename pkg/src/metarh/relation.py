"""Relation encoder over masked instance graphs.

A support instance ``((h, r, t), {(a_i, v_i)})`` becomes a small graph whose
node sequence is ``[h, MASK, t, a_1, v_1, ..., a_m, v_m]``; the primary
relation is hidden behind a learned MASK token.  Node pairs carry edge
labels, each label contributing a learned bias to attention keys and
values.  After D attention blocks the MASK node's vector is read out as the
instance-level relation representation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import torch
from torch import Tensor, nn

from .encoder import DTYPE
from .exceptions import ConfigError

MASK_INDEX = 1


class EdgeLabel(IntEnum):
    SELF = 0
    TRIPLE_SUBJECT = 1
    TRIPLE_OBJECT = 2
    QUAL_ATTRIBUTE_OF_TRIPLE = 3
    QUAL_VALUE_OF_ATTRIBUTE = 4
    INTRA_QUALIFIER = 5
    CO_QUALIFIER = 6
    UNCONNECTED = 7


N_EDGE_LABELS = len(EdgeLabel)


def instance_edge_labels(n_qualifiers: int) -> Tensor:
    """Label matrix for a graph with ``3 + 2m`` nodes.

    Labels are symmetric except within a qualifier pair, where the
    attribute-side and value-side directions are distinguished.
    """
    n = 3 + 2 * n_qualifiers
    labels = torch.full((n, n), int(EdgeLabel.UNCONNECTED), dtype=torch.long)
    labels.fill_diagonal_(int(EdgeLabel.SELF))
    labels[0, MASK_INDEX] = labels[MASK_INDEX, 0] = int(EdgeLabel.TRIPLE_SUBJECT)
    labels[2, MASK_INDEX] = labels[MASK_INDEX, 2] = int(EdgeLabel.TRIPLE_OBJECT)
    attrs = [3 + 2 * i for i in range(n_qualifiers)]
    for i, a in enumerate(attrs):
        v = a + 1
        labels[a, MASK_INDEX] = labels[MASK_INDEX, a] = int(EdgeLabel.QUAL_ATTRIBUTE_OF_TRIPLE)
        labels[a, v] = int(EdgeLabel.INTRA_QUALIFIER)
        labels[v, a] = int(EdgeLabel.QUAL_VALUE_OF_ATTRIBUTE)
        for b in attrs[i + 1:]:
            labels[a, b] = labels[b, a] = int(EdgeLabel.CO_QUALIFIER)
    return labels


@dataclass
class InstanceGraph:
    """Node embedding matrix plus the pairwise edge-label matrix."""

    nodes: Tensor   # (3 + 2m, dim)
    labels: Tensor  # (3 + 2m, 3 + 2m), long

    @property
    def n_qualifiers(self) -> int:
        return (self.nodes.shape[0] - 3) // 2


def build_instance_graph(enhanced_head: Tensor, enhanced_tail: Tensor,
                         mask_token: Tensor,
                         qualifier_embs: list[tuple[Tensor, Tensor]]) -> InstanceGraph:
    """Assemble the node sequence [h, MASK, t, a_1, v_1, ...].

    Head and tail use enhanced representations; attributes and values use
    raw embedding rows.
    """
    rows = [enhanced_head, mask_token, enhanced_tail]
    for a, v in qualifier_embs:
        rows.append(a)
        rows.append(v)
    return InstanceGraph(nodes=torch.stack(rows),
                         labels=instance_edge_labels(len(qualifier_embs)))


class GranBlock(nn.Module):
    """Pre-layer-norm attention block with per-edge-label key/value biases.

    Attention logits between nodes i, j use ``q_i . (k_j + key_bias[label])``
    scaled by the head dimension; values receive ``value_bias[label]``.
    With hard masking, UNCONNECTED pairs are excluded from the softmax.
    """

    def __init__(self, dim: int, n_heads: int, dropout: float = 0.0):
        super().__init__()
        if dim % n_heads != 0:
            raise ConfigError(f"dim {dim} not divisible by n_heads {n_heads}")
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.k_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.v_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.out_proj = nn.Linear(dim, dim, dtype=DTYPE)
        self.key_bias = nn.Parameter(torch.zeros(N_EDGE_LABELS, dim, dtype=DTYPE))
        self.value_bias = nn.Parameter(torch.zeros(N_EDGE_LABELS, dim, dtype=DTYPE))
        self.ln_attn = nn.LayerNorm(dim, dtype=DTYPE)
        self.ln_ffn = nn.LayerNorm(dim, dtype=DTYPE)
        self.ffn = nn.Sequential(
            nn.Linear(dim, 4 * dim, dtype=DTYPE),
            nn.GELU(),
            nn.Linear(4 * dim, dim, dtype=DTYPE),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: Tensor, labels: Tensor, hard_mask: bool = True) -> Tensor:
        n = x.shape[0]
        h = self.ln_attn(x)
        q = self.q_proj(h).view(n, self.n_heads, self.head_dim)
        k = self.k_proj(h).view(n, self.n_heads, self.head_dim)
        v = self.v_proj(h).view(n, self.n_heads, self.head_dim)
        kb = self.key_bias[labels].view(n, n, self.n_heads, self.head_dim)
        vb = self.value_bias[labels].view(n, n, self.n_heads, self.head_dim)
        logits = torch.einsum("ihd,ijhd->ijh", q, k.unsqueeze(0) + kb)
        logits = logits / math.sqrt(self.head_dim)
        if hard_mask:
            blocked = (labels == int(EdgeLabel.UNCONNECTED)).unsqueeze(-1)
            logits = logits.masked_fill(blocked, float("-inf"))
        alpha = torch.softmax(logits, dim=1)
        ctx = torch.einsum("ijh,ijhd->ihd", alpha, v.unsqueeze(0) + vb)
        x = x + self.dropout(self.out_proj(ctx.reshape(n, self.dim)))
        x = x + self.dropout(self.ffn(self.ln_ffn(x)))
        return x


class RelationEncoder(nn.Module):
    """Stack of D blocks plus the learned MASK token."""

    def __init__(self, dim: int, n_heads: int = 2, depth: int = 2,
                 dropout: float = 0.0, hard_mask: bool = True):
        super().__init__()
        if depth < 1:
            raise ConfigError("depth must be at least 1")
        self.dim = dim
        self.hard_mask = hard_mask
        self.mask_token = nn.Parameter(
            torch.empty(dim, dtype=DTYPE).uniform_(-0.5 / dim, 0.5 / dim))
        self.blocks = nn.ModuleList(
            GranBlock(dim, n_heads, dropout) for _ in range(depth))

    def forward(self, graph: InstanceGraph) -> Tensor:
        x = graph.nodes
        for block in self.blocks:
            x = block(x, graph.labels, hard_mask=self.hard_mask)
        return x[MASK_INDEX]


def average_support(mask_reprs: list[Tensor]) -> Tensor:
    """Task-level relation representation: mean over support instances."""
    if not mask_reprs:
        raise ConfigError("average_support requires at least one vector")
    return torch.stack(mask_reprs).mean(dim=0)
