"""Training objectives.

The combined loss is a softmax cross entropy over training classes plus an
occupancy-weighted binary cross entropy on the reconstruction, summed over the
voxel grid and weighted by alpha:

    L = L_c + alpha * L_r
    L_c = -sum_i y_i log softmax(l)_i
    L_r = -sum_v [gamma * t_v log o_v + (1 - gamma) * (1 - t_v) log(1 - o_v)]

gamma rebalances occupied against empty voxels (grids are a few percent
occupied). Batches average the per-sample values. The triplet variant is
batch-hard with a soft margin.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

PROB_CLAMP = 1e-9  # keeps log() finite when the decoder saturates


@dataclass(frozen=True)
class TrainingParams:
    alpha: float = 200.0
    gamma: float = 0.9
    learning_rate: float = 1e-4
    batch_size: int = 24
    epochs: int = 50
    dropout: float = 0.5
    n_classes: int = 20

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def classification_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Per-sample softmax cross entropy, averaged over the batch."""
    log_probs = F.log_softmax(logits, dim=1)
    return -log_probs.gather(1, labels.view(-1, 1)).mean()


def reconstruction_loss(output: torch.Tensor, target: torch.Tensor,
                        gamma: float) -> torch.Tensor:
    """Occupancy-weighted BCE summed over the grid, averaged over the batch."""
    o = output.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = target
    per_voxel = gamma * t * torch.log(o) + (1.0 - gamma) * (1.0 - t) * torch.log(1.0 - o)
    return -per_voxel.flatten(1).sum(dim=1).mean()


def combined_loss(logits, labels, output, target,
                  params: TrainingParams) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Returns (L, L_c, L_r) with L = L_c + alpha * L_r."""
    lc = classification_loss(logits, labels)
    lr = reconstruction_loss(output, target, params.gamma)
    return lc + params.alpha * lr, lc, lr


def batch_hard_triplet_loss(descriptors: torch.Tensor,
                            labels: torch.Tensor) -> tuple[torch.Tensor, int]:
    """Soft-margin batch-hard triplet loss.

    For each anchor: hardest (farthest) positive and hardest (nearest)
    negative in the batch; loss is softplus(d_pos - d_neg). Anchors without
    both a positive and a negative are skipped. Returns (loss, n_valid); when
    no anchor is valid the loss is zero with n_valid = 0 and the batch should
    be counted as skipped.
    """
    # Exact pairwise distances (the matmul shortcut loses ~1e-8).
    d = torch.cdist(descriptors, descriptors,
                    compute_mode="donot_use_mm_for_euclid_dist")
    same = labels.view(-1, 1) == labels.view(1, -1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=descriptors.device)
    pos_mask = same & ~eye
    neg_mask = ~same

    valid = pos_mask.any(dim=1) & neg_mask.any(dim=1)
    if not bool(valid.any()):
        return descriptors.sum() * 0.0, 0
    d_pos = torch.where(pos_mask, d, torch.full_like(d, float("-inf"))).max(dim=1).values
    d_neg = torch.where(neg_mask, d, torch.full_like(d, float("inf"))).min(dim=1).values
    losses = F.softplus(d_pos[valid] - d_neg[valid])
    return losses.mean(), int(valid.sum())


def batch_all_triplet_loss(descriptors: torch.Tensor,
                           labels: torch.Tensor) -> tuple[torch.Tensor, int]:
    """Soft-margin loss over every (anchor, positive, negative) triple.

    Dense gradients make this the safe warm-up before batch-hard mining,
    which can lock onto degenerate extremes from a cold start.
    """
    d = torch.cdist(descriptors, descriptors,
                    compute_mode="donot_use_mm_for_euclid_dist")
    same = labels.view(-1, 1) == labels.view(1, -1)
    eye = torch.eye(len(labels), dtype=torch.bool, device=descriptors.device)
    pos_mask = same & ~eye
    neg_mask = ~same
    # loss[a, p, n] = softplus(d[a, p] - d[a, n]) over valid (p, n) pairs
    diff = d.unsqueeze(2) - d.unsqueeze(1)
    valid = pos_mask.unsqueeze(2) & neg_mask.unsqueeze(1)
    if not bool(valid.any()):
        return descriptors.sum() * 0.0, 0
    losses = F.softplus(diff[valid])
    return losses.mean(), int(valid.sum())
