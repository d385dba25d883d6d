"""Training loops: combined descriptor+decoder, triplet descriptor, semantics.

All loops are deterministic given the seed, log per-epoch metrics to a CSV,
and abort on a non-finite loss. Exports write SEGW containers the runtime
loads unchanged; the classification layer used during training is dropped at
export.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from . import segw
from .datasets import epoch_samples
from .losses import (
    TrainingParams,
    batch_all_triplet_loss,
    batch_hard_triplet_loss,
    combined_loss,
)
from .models import DecoderNet, DescriptorNet, EncoderSpec, SemanticsHead, xavier_init


class TrainingDiverged(Exception):
    pass


class DegenerateLabels(Exception):
    pass


@dataclass
class EpochLog:
    epoch: int
    loss: float
    loss_c: float
    loss_r_scaled: float
    accuracy: float


@dataclass
class TrainResult:
    encoder: DescriptorNet
    decoder: DecoderNet | None
    history: list = field(default_factory=list)
    skipped_batches: int = 0
    final_accuracy: float = 0.0  # eval-mode, on the last epoch's samples


def eval_accuracy(encoder, classifier, samples, batch_size=32, device="cpu") -> float:
    encoder.eval()
    correct = 0
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            batch = samples[start:start + batch_size]
            grids, scales, labels = _to_tensors(batch, device)
            logits = classifier(encoder(grids, scales))
            correct += int((logits.argmax(dim=1) == labels).sum())
    return correct / len(samples)


def _to_tensors(samples: list, device="cpu"):
    grids = torch.from_numpy(np.stack([s.grid for s in samples])).float().to(device)
    scales = torch.from_numpy(np.stack([s.scale for s in samples])).float().to(device)
    labels = torch.from_numpy(np.array([s.label for s in samples])).long().to(device)
    return grids, scales, labels


def write_log_csv(path, history: list) -> None:
    with open(path, "w", newline="", encoding="ascii") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "loss_c", "alpha_loss_r", "accuracy"])
        for h in history:
            w.writerow([h.epoch, f"{h.loss:.6g}", f"{h.loss_c:.6g}",
                        f"{h.loss_r_scaled:.6g}", f"{h.accuracy:.6g}"])


def train_combined(objects, params: TrainingParams, spec: EncoderSpec,
                   seed: int = 0, views_per_object: int = 10,
                   log_path=None, target_accuracy: float | None = None,
                   device: str = "cpu") -> TrainResult:
    """Joint descriptor + classification + reconstruction training.

    ``objects`` come from datasets.synthetic_objects or files; each carries a
    class index. Augmented views are re-rolled each epoch. Training stops
    early once ``target_accuracy`` is reached (still within the epoch budget).
    """
    torch.manual_seed(seed)
    encoder = DescriptorNet(spec).to(device)
    decoder = DecoderNet(descriptor_dim=spec.fc[1]).to(device)
    classifier = nn.Linear(spec.fc[1], params.n_classes).to(device)
    xavier_init(classifier)
    opt = torch.optim.Adam(
        list(encoder.parameters()) + list(decoder.parameters()) +
        list(classifier.parameters()), lr=params.learning_rate)

    history = []
    rng = np.random.default_rng(seed)
    for epoch in range(params.epochs):
        samples = epoch_samples(objects, epoch, views_per_object, seed=seed)
        order = rng.permutation(len(samples))
        encoder.train()
        decoder.train()
        ep_loss = ep_lc = ep_lr = 0.0
        correct = total = 0
        for start in range(0, len(order), params.batch_size):
            batch = [samples[i] for i in order[start:start + params.batch_size]]
            grids, scales, labels = _to_tensors(batch, device)
            opt.zero_grad()
            desc = encoder(grids, scales)
            logits = classifier(desc)
            recon = decoder(desc)
            loss, lc, lr = combined_loss(logits, labels, recon, grids, params)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            loss.backward()
            nn.utils.clip_grad_norm_(
                [p for group in opt.param_groups for p in group["params"]], 10.0)
            opt.step()
            ep_loss += float(loss.detach()) * len(batch)
            ep_lc += float(lc.detach()) * len(batch)
            ep_lr += float(lr.detach()) * len(batch)
            correct += int((logits.argmax(dim=1) == labels).sum())
            total += len(batch)
        acc = correct / total
        history.append(EpochLog(epoch=epoch, loss=ep_loss / total, loss_c=ep_lc / total,
                                loss_r_scaled=params.alpha * ep_lr / total, accuracy=acc))
        if target_accuracy is not None and epoch >= 4 and \
                eval_accuracy(encoder, classifier, samples, device=device) >= target_accuracy:
            break
    if log_path:
        write_log_csv(log_path, history)
    encoder.eval()
    decoder.eval()
    final_acc = eval_accuracy(encoder, classifier, samples, device=device)
    return TrainResult(encoder=encoder, decoder=decoder, history=history,
                       final_accuracy=final_acc)


def train_triplet(objects, params: TrainingParams, spec: EncoderSpec,
                  seed: int = 0, views_per_object: int = 10,
                  warmup_epochs: int | None = None, hard_lr_factor: float = 0.1,
                  device: str = "cpu") -> TrainResult:
    """Descriptor-only training with the batch-hard soft-margin triplet loss.

    Batches are class-balanced so every anchor has positives. Most of the
    budget runs the dense batch-all form; hard mining takes over for the
    final epochs at a reduced rate. From a cold start (or at full rate) hard
    mining collapses the non-negative descriptor to a constant, so the
    warm-up is what makes the mined phase productive. Batches without any
    valid triplet are skipped and counted.
    """
    torch.manual_seed(seed)
    encoder = DescriptorNet(spec).to(device)
    opt = torch.optim.Adam(encoder.parameters(), lr=params.learning_rate)
    rng = np.random.default_rng(seed)
    skipped = 0
    history = []
    classes_per_batch = max(2, params.batch_size // 4)
    if warmup_epochs is None:
        warmup_epochs = max(1, (params.epochs * 4) // 5)
    lr_dropped = False
    for epoch in range(params.epochs):
        if epoch >= warmup_epochs and not lr_dropped:
            for group in opt.param_groups:
                group["lr"] = params.learning_rate * hard_lr_factor
            lr_dropped = True
        samples = epoch_samples(objects, epoch, views_per_object, seed=seed)
        by_class: dict = {}
        for s in samples:
            by_class.setdefault(s.label, []).append(s)
        encoder.train()
        ep_loss = 0.0
        n_batches = 0
        class_ids = sorted(by_class)
        for _ in range(max(1, len(samples) // params.batch_size)):
            picked = rng.choice(class_ids, size=min(classes_per_batch, len(class_ids)),
                                replace=False)
            batch = []
            per_class = max(2, params.batch_size // len(picked))
            for c in picked:
                pool = by_class[c]
                take = rng.choice(len(pool), size=min(per_class, len(pool)), replace=False)
                batch.extend(pool[i] for i in take)
            grids, scales, labels = _to_tensors(batch, device)
            opt.zero_grad()
            desc = encoder(grids, scales)
            loss_fn = batch_all_triplet_loss if epoch < warmup_epochs \
                else batch_hard_triplet_loss
            loss, n_valid = loss_fn(desc, labels)
            if n_valid == 0:
                skipped += 1
                continue
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            loss.backward()
            nn.utils.clip_grad_norm_(encoder.parameters(), 10.0)
            opt.step()
            ep_loss += float(loss.detach())
            n_batches += 1
        history.append(EpochLog(epoch=epoch, loss=ep_loss / max(n_batches, 1),
                                loss_c=0.0, loss_r_scaled=0.0, accuracy=0.0))
    encoder.eval()
    return TrainResult(encoder=encoder, decoder=None, history=history,
                       skipped_batches=skipped)


def train_classification_only(objects, params: TrainingParams, spec: EncoderSpec,
                              seed: int = 0, views_per_object: int = 10,
                              device: str = "cpu") -> TrainResult:
    """Descriptor trained with the classification objective alone (alpha=0
    without a decoder in the graph)."""
    torch.manual_seed(seed)
    encoder = DescriptorNet(spec).to(device)
    classifier = nn.Linear(spec.fc[1], params.n_classes).to(device)
    xavier_init(classifier)
    opt = torch.optim.Adam(list(encoder.parameters()) + list(classifier.parameters()),
                           lr=params.learning_rate)
    rng = np.random.default_rng(seed)
    history = []
    from .losses import classification_loss
    for epoch in range(params.epochs):
        samples = epoch_samples(objects, epoch, views_per_object, seed=seed)
        order = rng.permutation(len(samples))
        encoder.train()
        correct = total = 0
        ep_loss = 0.0
        for start in range(0, len(order), params.batch_size):
            batch = [samples[i] for i in order[start:start + params.batch_size]]
            grids, scales, labels = _to_tensors(batch, device)
            opt.zero_grad()
            logits = classifier(encoder(grids, scales))
            loss = classification_loss(logits, labels)
            if not torch.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            loss.backward()
            nn.utils.clip_grad_norm_(
                [p for group in opt.param_groups for p in group["params"]], 10.0)
            opt.step()
            ep_loss += float(loss.detach()) * len(batch)
            correct += int((logits.argmax(dim=1) == labels).sum())
            total += len(batch)
        history.append(EpochLog(epoch=epoch, loss=ep_loss / total, loss_c=ep_loss / total,
                                loss_r_scaled=0.0, accuracy=correct / total))
    encoder.eval()
    return TrainResult(encoder=encoder, decoder=None, history=history)


def train_semantics(descriptors: np.ndarray, labels: np.ndarray,
                    seed: int = 0, epochs: int = 200, lr: float = 1e-2,
                    train_fraction: float = 0.7,
                    device: str = "cpu") -> tuple[SemanticsHead, float, float]:
    """Softmax training of the semantics head on frozen descriptors.

    Returns (head, train accuracy, validation accuracy) over a 70/30 split.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(np.unique(labels)) < 2:
        raise DegenerateLabels("need at least two semantic classes")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labels))
    n_train = int(round(train_fraction * len(labels)))
    tr, va = order[:n_train], order[n_train:]
    d = torch.from_numpy(np.asarray(descriptors, dtype=np.float32)).to(device)
    y = torch.from_numpy(labels).to(device)
    head = SemanticsHead(descriptor_dim=d.shape[1]).to(device)
    opt = torch.optim.Adam(head.parameters(), lr=lr)
    loss_fn = nn.CrossEntropyLoss()
    for _ in range(epochs):
        opt.zero_grad()
        loss = loss_fn(head(d[tr]), y[tr])
        loss.backward()
        opt.step()
    head.eval()
    with torch.no_grad():
        train_acc = float((head(d[tr]).argmax(dim=1) == y[tr]).float().mean())
        val_acc = float((head(d[va]).argmax(dim=1) == y[va]).float().mean()) if len(va) else 0.0
    return head, train_acc, val_acc


def export_weights(path, model) -> None:
    segw.save_tensors(path, model.export_tensors())


def describe_with_trainer(encoder: DescriptorNet, grid: np.ndarray,
                          extent: np.ndarray, double: bool = False) -> np.ndarray:
    """Inference-mode forward pass of one grid (optionally in float64)."""
    encoder = encoder.double() if double else encoder
    encoder.eval()
    with torch.no_grad():
        g = torch.from_numpy(np.asarray(grid)[None]).to(torch.float64 if double
                                                        else torch.float32)
        s = torch.from_numpy(np.asarray(extent)[None]).to(g.dtype)
        return encoder(g, s)[0].cpu().numpy()
