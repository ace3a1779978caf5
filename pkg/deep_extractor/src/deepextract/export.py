"""Eval-mode export of head-input features and softmax probabilities in
FEATMAT format, row order identical to the archive order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .featmat import write_featmat, write_labels
from .nets import FeatureTap, get_spec, preprocess


def export_features(model, net_name: str, pixels_u8: np.ndarray, labels: np.ndarray,
                    out_dir, batch_size: int = 32) -> dict:
    """Writes <net>.featmat (features), <net>_probs.featmat (softmax), and
    labels.csv under out_dir; validates the feature width against the net's
    configured dimension. Returns the written paths."""
    spec = get_spec(net_name)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model.eval()
    tap = FeatureTap(model)
    feature_chunks, prob_chunks = [], []
    tensor = torch.from_numpy(np.ascontiguousarray(pixels_u8))
    with torch.no_grad():
        for start in range(0, len(pixels_u8), batch_size):
            x = preprocess(tensor[start : start + batch_size], spec.input_size)
            logits = model(x)
            prob_chunks.append(torch.softmax(logits, dim=1))
            feature_chunks.append(tap.features.clone())
    tap.remove()
    features = torch.cat(feature_chunks).numpy()
    probs = torch.cat(prob_chunks).numpy()
    if features.shape[1] != spec.feature_dim:
        raise ValueError(
            f"{net_name}: exported width {features.shape[1]} != expected {spec.feature_dim}"
        )
    paths = {
        "features": out_dir / f"{net_name}.featmat",
        "probs": out_dir / f"{net_name}_probs.featmat",
        "labels": out_dir / "labels.csv",
    }
    write_featmat(features, net_name, paths["features"])
    write_featmat(probs, f"{net_name}_probs", paths["probs"])
    write_labels(labels, paths["labels"])
    return paths
