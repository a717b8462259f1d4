"""Translational scoring, hinge losses and the support-specific update.

Scores are distances: ``f(h, q, t) = ||h + r - t||_2`` with the query's own
qualifiers fused into the task relation vector.  Smaller is better.  The
task relation produced by the relation encoder takes one gradient step on
the support hinge loss before scoring queries; by default the step is kept
in the computation graph so the outer loss differentiates through it.
"""

from __future__ import annotations

import torch
from torch import Tensor

from .exceptions import NumericError


def fuse_relation(r_task: Tensor, qual_vec: Tensor, tau: float) -> Tensor:
    """Blend the task relation with a (projected) qualifier summary."""
    return tau * r_task + (1.0 - tau) * qual_vec


def transe_scores(head: Tensor, relation: Tensor, tails: Tensor) -> Tensor:
    """Distances ||h + r - t||_2 for one head against a batch of tails.

    ``tails`` may be a single vector or a (C, dim) matrix; the result
    matches its leading shape.
    """
    return torch.linalg.vector_norm(head + relation - tails, dim=-1)


def hinge_loss(pos: Tensor, neg: Tensor, margin: float) -> Tensor:
    """Sum over instances of the mean ranking hinge against their negatives.

    ``pos`` has shape (P,), ``neg`` shape (P, N).  With one negative per
    positive this reduces to  sum_i [margin + f(pos_i) - f(neg_i)]_+ .
    """
    if pos.ndim != 1 or neg.ndim != 2 or neg.shape[0] != pos.shape[0]:
        raise ValueError(f"shape mismatch: pos {tuple(pos.shape)}, neg {tuple(neg.shape)}")
    return torch.relu(margin + pos.unsqueeze(1) - neg).mean(dim=1).sum()


def adjust(r_task: Tensor, support_loss: Tensor, beta: float,
           first_order: bool = False) -> Tensor:
    """One gradient step on the support loss, applied to the task relation.

    With ``first_order`` the gradient is detached, so outer backprop treats
    the step size contribution as a constant.
    """
    (grad,) = torch.autograd.grad(support_loss, r_task,
                                  create_graph=not first_order,
                                  retain_graph=True)
    if first_order:
        grad = grad.detach()
    if not torch.isfinite(grad).all():
        raise NumericError("non-finite gradient in support adjustment")
    return r_task - beta * grad


def pessimistic_rank(scores: Tensor, true_index: int,
                     exclude: set[int] | None = None) -> int:
    """Rank of the true candidate, counting ties against it.

    ``exclude`` lists candidate indices removed from the ranking (other
    tails known to be correct); the true index itself is always kept.
    """
    true_score = scores[true_index]
    keep = torch.ones(scores.shape[0], dtype=torch.bool)
    if exclude:
        keep[list(exclude)] = False
    keep[true_index] = True
    kept = scores[keep]
    better = int((kept < true_score).sum())
    tied = int((kept == true_score).sum()) - 1
    return 1 + better + tied


def sort_candidates(scores: Tensor, candidate_ids: list[int],
                    exclude: set[int] | None = None) -> list[tuple[int, float]]:
    """Candidates ascending by score (best first), stable on ties.

    Returns (entity id, score) pairs, skipping excluded indices.
    """
    order = []
    for i, eid in enumerate(candidate_ids):
        if exclude and i in exclude:
            continue
        order.append((float(scores[i]), i, eid))
    order.sort()
    return [(eid, score) for score, _, eid in order]
