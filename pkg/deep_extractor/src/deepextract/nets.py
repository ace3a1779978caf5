"""The six backbone architectures: construction, 4-way head replacement,
input sizing, and the feature tap at the head's input.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torchvision import models

N_CLASSES = 4

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class MissingWeightsError(Exception):
    """Raised when pretrained weights for a net cannot be obtained."""


@dataclass(frozen=True)
class NetSpec:
    name: str
    input_size: int
    feature_dim: int


# input sizes follow the configured minimum-size table as printed (note the
# alexnet/vgg asymmetry is intentional and kept)
NET_SPECS = {
    "alexnet": NetSpec("alexnet", 224, 4096),
    "vgg16": NetSpec("vgg16", 227, 4096),
    "vgg19": NetSpec("vgg19", 227, 4096),
    "resnet50": NetSpec("resnet50", 197, 2048),
    "densenet121": NetSpec("densenet121", 221, 1024),
    "inceptionv3": NetSpec("inceptionv3", 299, 2048),
}

_BUILDERS = {
    "alexnet": models.alexnet,
    "vgg16": models.vgg16,
    "vgg19": models.vgg19,
    "resnet50": models.resnet50,
    "densenet121": models.densenet121,
    "inceptionv3": models.inception_v3,
}

_WEIGHT_ENUMS = {
    "alexnet": lambda: models.AlexNet_Weights.IMAGENET1K_V1,
    "vgg16": lambda: models.VGG16_Weights.IMAGENET1K_V1,
    "vgg19": lambda: models.VGG19_Weights.IMAGENET1K_V1,
    "resnet50": lambda: models.ResNet50_Weights.IMAGENET1K_V1,
    "densenet121": lambda: models.DenseNet121_Weights.IMAGENET1K_V1,
    "inceptionv3": lambda: models.Inception_V3_Weights.IMAGENET1K_V1,
}


def get_spec(name: str) -> NetSpec:
    if name not in NET_SPECS:
        raise ValueError(f"unknown net {name!r}; choose from {sorted(NET_SPECS)}")
    return NET_SPECS[name]


def _head_attr(model) -> tuple:
    """(owner, attribute name) of the final classification Linear."""
    if hasattr(model, "fc"):
        return model, "fc"
    if isinstance(model.classifier, nn.Sequential):
        return model.classifier, str(len(model.classifier) - 1)
    return model, "classifier"


def get_head(model) -> nn.Linear:
    owner, attr = _head_attr(model)
    return owner[int(attr)] if isinstance(owner, nn.Sequential) else getattr(owner, attr)


def _set_head(model, head: nn.Linear) -> None:
    owner, attr = _head_attr(model)
    if isinstance(owner, nn.Sequential):
        owner[int(attr)] = head
    else:
        setattr(owner, attr, head)


def build_model(name: str, pretrained: bool, seed: int = 0, weight_loader=None):
    """Backbone with its 1000-way classifier swapped for a seeded 4-way head.

    `weight_loader` (tests) overrides how pretrained weights are obtained;
    any failure to get them raises MissingWeightsError naming the net.
    """
    spec = get_spec(name)
    builder = _BUILDERS[name]
    kwargs = {}
    if name == "inceptionv3" and not pretrained:
        kwargs["aux_logits"] = False
        kwargs["init_weights"] = True
    if pretrained:
        try:
            weights = weight_loader(name) if weight_loader else _WEIGHT_ENUMS[name]()
            model = builder(weights=weights, **kwargs)
        except Exception as exc:
            raise MissingWeightsError(f"pretrained weights unavailable for {name}: {exc}") from exc
    else:
        model = builder(weights=None, **kwargs)
    if name == "inceptionv3" and getattr(model, "aux_logits", False):
        model.aux_logits = False
        model.AuxLogits = None

    old_head = get_head(model)
    if old_head.in_features != spec.feature_dim:
        raise ValueError(
            f"{name}: head input {old_head.in_features} != expected {spec.feature_dim}"
        )
    generator = torch.Generator().manual_seed(seed)
    head = nn.Linear(spec.feature_dim, N_CLASSES)
    with torch.no_grad():
        head.weight.copy_(torch.empty_like(head.weight).uniform_(-0.01, 0.01, generator=generator))
        head.bias.zero_()
    _set_head(model, head)
    return model


class FeatureTap:
    """Forward hook capturing the input of the 4-way head (the exported
    feature vector, matching the configured per-net feature widths)."""

    def __init__(self, model):
        self.features = None
        self._handle = get_head(model).register_forward_hook(self._hook)

    def _hook(self, module, inputs, output):
        self.features = inputs[0].detach()

    def remove(self):
        self._handle.remove()


def preprocess(pixels_u8: torch.Tensor, input_size: int) -> torch.Tensor:
    """uint8 NHWC patches -> normalized NCHW float tensor at the net's size.

    Deterministic: bilinear resize with antialias, ImageNet normalization,
    no augmentation.
    """
    from torchvision.transforms import functional as tf

    x = pixels_u8.permute(0, 3, 1, 2).float() / 255.0
    x = tf.resize(x, [input_size, input_size], antialias=True)
    mean = torch.tensor(IMAGENET_MEAN).view(1, 3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(1, 3, 1, 1)
    return (x - mean) / std
