"""Fine-tuning of the 4-way classification head (optionally the full net)
on a patch archive: SGD with momentum, fixed 70/15/15 stratified split.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .nets import FeatureTap, build_model, get_head, get_spec, preprocess


@dataclass
class FinetuneConfig:
    lr: float = 0.001
    momentum: float = 0.95
    max_epochs: int = 100
    batch_size: int = 64
    seed: int = 0
    head_only: bool = False
    pretrained: bool = True


def stratified_split(labels: np.ndarray, fractions=(0.70, 0.15, 0.15), seed: int = 0):
    """Per-class proportional train/val/test index arrays."""
    rng = np.random.default_rng(seed)
    buckets = ([], [], [])
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        n_train = int(round(fractions[0] * len(idx)))
        n_val = int(round(fractions[1] * len(idx)))
        buckets[0].append(idx[:n_train])
        buckets[1].append(idx[n_train : n_train + n_val])
        buckets[2].append(idx[n_train + n_val :])
    return tuple(np.concatenate(b) for b in buckets)


def _epoch_loss(model, X, y, batch_size):
    criterion = nn.CrossEntropyLoss()
    total, count = 0.0, 0
    with torch.no_grad():
        for start in range(0, len(y), batch_size):
            out = model(X[start : start + batch_size])
            total += float(criterion(out, y[start : start + batch_size])) * min(
                batch_size, len(y) - start
            )
            count += min(batch_size, len(y) - start)
    return total / count


def _train_head_on_features(head, feats, y, val_feats, val_y, cfg):
    criterion = nn.CrossEntropyLoss()
    optimizer = torch.optim.SGD(head.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    generator = torch.Generator().manual_seed(cfg.seed)
    best_state = copy.deepcopy(head.state_dict())
    best_val = float("inf")
    history = []
    for _epoch in range(cfg.max_epochs):
        order = torch.randperm(len(y), generator=generator)
        head.train()
        for start in range(0, len(y), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            optimizer.zero_grad()
            loss = criterion(head(feats[batch]), y[batch])
            loss.backward()
            optimizer.step()
        head.eval()
        with torch.no_grad():
            train_loss = float(criterion(head(feats), y))
            val_loss = float(criterion(head(val_feats), val_y))
        history.append((train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(head.state_dict())
    head.load_state_dict(best_state)
    return history


def backbone_features(model, pixels_u8: np.ndarray, input_size: int, batch_size: int = 32):
    """Eval-mode features at the head input for every patch, in order."""
    model.eval()
    tap = FeatureTap(model)
    chunks = []
    with torch.no_grad():
        tensor = torch.from_numpy(np.ascontiguousarray(pixels_u8))
        for start in range(0, len(pixels_u8), batch_size):
            x = preprocess(tensor[start : start + batch_size], input_size)
            model(x)
            chunks.append(tap.features.clone())
    tap.remove()
    return torch.cat(chunks)


def finetune(pixels_u8: np.ndarray, labels: np.ndarray, net_name: str, cfg: FinetuneConfig,
             weight_loader=None):
    """Train the 4-way head (or the whole net) on the archive's patches.

    Returns (model, info dict with split indices and loss history).
    In head_only mode the frozen backbone runs once to cache features and the
    head is trained on them, which is equivalent to freezing in eval mode but
    avoids re-running the backbone every epoch.
    """
    spec = get_spec(net_name)
    torch.manual_seed(cfg.seed)
    model = build_model(net_name, pretrained=cfg.pretrained, seed=cfg.seed,
                        weight_loader=weight_loader)
    train_idx, val_idx, test_idx = stratified_split(labels, seed=cfg.seed)
    y = torch.from_numpy(labels.astype(np.int64))

    if cfg.head_only:
        feats = backbone_features(model, pixels_u8, spec.input_size, cfg.batch_size)
        mean = feats[torch.from_numpy(train_idx)].mean(dim=0)
        std = feats[torch.from_numpy(train_idx)].std(dim=0).clamp_min(1e-6)
        normed = (feats - mean) / std
        head = get_head(model)
        history = _train_head_on_features(
            head,
            normed[torch.from_numpy(train_idx)],
            y[torch.from_numpy(train_idx)],
            normed[torch.from_numpy(val_idx)],
            y[torch.from_numpy(val_idx)],
            cfg,
        )
        info = {
            "history": history,
            "split": (train_idx, val_idx, test_idx),
            "head_feature_mean": mean,
            "head_feature_std": std,
            "cached_features": feats,
        }
        return model, info

    criterion = nn.CrossEntropyLoss()
    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)
    generator = torch.Generator().manual_seed(cfg.seed)
    tensor = torch.from_numpy(np.ascontiguousarray(pixels_u8))
    X_val = preprocess(tensor[val_idx], spec.input_size)
    y_val = y[torch.from_numpy(val_idx)]
    best_state = copy.deepcopy(model.state_dict())
    best_val = float("inf")
    history = []
    for _epoch in range(cfg.max_epochs):
        order = torch.from_numpy(train_idx)[torch.randperm(len(train_idx), generator=generator)]
        model.train()
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            optimizer.zero_grad()
            out = model(preprocess(tensor[batch.numpy()], spec.input_size))
            loss = criterion(out, y[batch])
            loss.backward()
            optimizer.step()
        model.eval()
        val_loss = _epoch_loss(model, X_val, y_val, cfg.batch_size)
        history.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    return model, {"history": history, "split": (train_idx, val_idx, test_idx)}


def save_checkpoint(model, net_name: str, path) -> None:
    torch.save({"net": net_name, "state_dict": model.state_dict()}, path)


def load_checkpoint(path, weight_loader=None):
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = build_model(payload["net"], pretrained=False)
    model.load_state_dict(payload["state_dict"])
    return model, payload["net"]
