"""Background encoder: semantic enrichment of support-set entities.

Each background fact of an entity is compressed to a single vector by
fusing its qualifier summary into its relation and concatenating the tail;
the facts are pooled with softmax attention and blended into the raw entity
embedding through a scalar gate.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .exceptions import ConfigError

DTYPE = torch.float64

ACTIVATIONS = {
    "tanh": torch.tanh,
    "identity": lambda x: x,
    "leaky_relu": lambda x: torch.nn.functional.leaky_relu(x, 0.01),
}

LEAKY_SLOPE = 0.01


def resolve_activation(name: str):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ConfigError(f"unknown activation {name!r}; "
                          f"choose from {sorted(ACTIVATIONS)}") from None


def rotate(a: Tensor, v: Tensor) -> Tensor:
    """Rotate ``v`` by phase angles read from ``a``.

    ``v`` is treated as dim/2 complex numbers (first half real parts, second
    half imaginary parts); the first dim/2 entries of ``a`` are angles in
    radians.  The product ``v * e^{i theta}`` preserves the norm of ``v``.
    """
    dim = v.shape[-1]
    if dim % 2 != 0:
        raise ConfigError(f"rotate requires an even dimension, got {dim}")
    half = dim // 2
    theta = a[..., :half]
    v_re, v_im = v[..., :half], v[..., half:]
    cos, sin = torch.cos(theta), torch.sin(theta)
    return torch.cat([v_re * cos - v_im * sin,
                      v_re * sin + v_im * cos], dim=-1)


def qualifier_sum(pairs: list[tuple[Tensor, Tensor]], dim: int,
                  dtype: torch.dtype = DTYPE) -> Tensor:
    """Order-invariant qualifier summary: sum of rotated value vectors.

    An empty qualifier list yields the zero vector.
    """
    if not pairs:
        return torch.zeros(dim, dtype=dtype)
    total = rotate(pairs[0][0], pairs[0][1])
    for a, v in pairs[1:]:
        total = total + rotate(a, v)
    return total


class BackgroundEncoder(nn.Module):
    """Attention-and-gate aggregation of an entity's background facts.

    ``tau`` is a fixed relation-weight hyper-parameter, not a learned
    tensor.  ``qual_proj`` is the qualifier projection shared with the
    instance scorer's relation fusion unless the model unshares it.
    """

    def __init__(self, dim: int, tau: float = 0.9, activation: str = "tanh"):
        super().__init__()
        if not 0.0 <= tau <= 1.0:
            raise ConfigError(f"tau must lie in [0, 1], got {tau}")
        self.dim = dim
        self.tau = tau
        self.activation = resolve_activation(activation)
        self.proj = nn.Linear(2 * dim, dim, dtype=DTYPE)
        self.qual_proj = nn.Linear(dim, dim, bias=False, dtype=DTYPE)
        self.attn_vec = nn.Linear(dim, 1, bias=False, dtype=DTYPE)
        self.gate_vec = nn.Linear(dim, 1, dtype=DTYPE)

    def fact_repr(self, r_b: Tensor, t_b: Tensor, q_b: Tensor) -> Tensor:
        """Single-vector summary of one background fact."""
        fused = self.tau * r_b + (1.0 - self.tau) * self.qual_proj(q_b)
        return self.proj(torch.cat([fused, t_b], dim=-1))

    def attend(self, fact_reprs: Tensor) -> tuple[Tensor, Tensor]:
        """Softmax attention over fact representations, shape (L, dim)."""
        d = torch.nn.functional.leaky_relu(
            self.attn_vec(fact_reprs).squeeze(-1), LEAKY_SLOPE)
        alpha = torch.softmax(d, dim=0)
        pooled = alpha @ fact_reprs
        return alpha, pooled

    def gate(self, pooled: Tensor) -> Tensor:
        """Scalar gate in (0, 1) deciding how much background to admit."""
        return torch.sigmoid(self.gate_vec(pooled).squeeze(-1))

    def enhance(self, entity: Tensor, fact_reprs: Tensor | None) -> Tensor:
        """Blend pooled background into the raw entity embedding.

        With no background facts the gate path vanishes and the entity
        passes through the activation unchanged.
        """
        if fact_reprs is None or fact_reprs.shape[0] == 0:
            return self.activation(entity)
        _, pooled = self.attend(fact_reprs)
        g = self.gate(pooled)
        return self.activation(g * pooled + (1.0 - g) * entity)
