"""Model registry: backbone networks and their exportable layer levels.

Each registry row names the four resolution levels L1..L4 of one backbone
by its framework graph node, with the expected channel count.  Backbones
the installed framework cannot build are still listed (their
configurations are selectable) but constructing them raises a
configuration error.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
from torchvision import models as tvm
from torchvision.models.feature_extraction import create_feature_extractor

from .errors import ExportConfigError

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
FCN_CLASSES = 21


@dataclass(frozen=True)
class BackboneSpec:
    builder: str | None                 # torchvision constructor name, None if unavailable
    levels: dict[str, tuple[str, int]]  # level -> (graph node, channels)


_RESNET_LEVELS = {
    "L1": ("relu", 64),
    "L2": ("layer1", 256),
    "L3": ("layer2", 512),
    "L4": ("layer3", 1024),
}

_DENSENET_LEVELS = {
    "L1": ("features.relu0", 64),
    "L2": ("features.transition1.relu", 256),
    "L3": ("features.transition2.relu", 512),
    "L4": ("features.transition3.relu", None),  # depends on the block config
}

REGISTRY: dict[str, BackboneSpec] = {
    "resnet50": BackboneSpec("resnet50", _RESNET_LEVELS),
    "resnet101": BackboneSpec("resnet101", _RESNET_LEVELS),
    "resnet152": BackboneSpec("resnet152", _RESNET_LEVELS),
    "resnext50": BackboneSpec("resnext50_32x4d", _RESNET_LEVELS),
    "resnext101": BackboneSpec("resnext101_32x8d", _RESNET_LEVELS),
    "se_resnet50": BackboneSpec(None, _RESNET_LEVELS),
    "se_resnet101": BackboneSpec(None, _RESNET_LEVELS),
    "se_resnext50": BackboneSpec(None, _RESNET_LEVELS),
    "se_resnext101": BackboneSpec(None, _RESNET_LEVELS),
    "densenet121": BackboneSpec("densenet121", _DENSENET_LEVELS),
    "densenet169": BackboneSpec("densenet169", _DENSENET_LEVELS),
    "densenet201": BackboneSpec("densenet201", _DENSENET_LEVELS),
}


def build_backbone(model_id: str, level: str, weights: str = "pretrained") -> nn.Module:
    """Feature extractor emitting the requested level's activation.

    ``weights`` is "pretrained" (downloads the published ImageNet weights)
    or "random" (seeded initialization, for offline and testing use).
    """
    spec = REGISTRY.get(model_id)
    if spec is None:
        raise ExportConfigError(f"unknown model '{model_id}'; known: "
                                f"{', '.join(sorted(REGISTRY))}")
    if spec.builder is None:
        raise ExportConfigError(
            f"model '{model_id}' is registered but no implementation is "
            f"available in this environment; available builders: "
            f"{', '.join(sorted(m for m, s in REGISTRY.items() if s.builder))}")
    if level not in spec.levels:
        raise ExportConfigError(f"unknown level '{level}' for {model_id}; "
                                f"choose from {sorted(spec.levels)}")
    net = _construct(spec.builder, weights)
    node, _ = spec.levels[level]
    try:
        extractor = create_feature_extractor(net, return_nodes={node: "out"})
    except ValueError as exc:
        raise ExportConfigError(
            f"layer '{node}' not resolvable in {model_id}; candidates:\n  "
            + "\n  ".join(name for name, _ in list_layers(model_id, weights="random")
                          )[:4000]) from exc
    extractor.eval()
    return extractor


def _construct(builder: str, weights: str) -> nn.Module:
    ctor = getattr(tvm, builder)
    if weights == "random":
        torch.manual_seed(0)
        return ctor(weights=None)
    if weights == "pretrained":
        try:
            return ctor(weights="IMAGENET1K_V1")
        except Exception as exc:  # download or cache failure
            raise ExportConfigError(
                f"cannot obtain pretrained weights for {builder} "
                f"(offline?): {exc}; pass weights='random' for a seeded "
                f"untrained network") from exc
    raise ExportConfigError(f"weights must be 'pretrained' or 'random', got '{weights}'")


def list_layers(model_id: str, weights: str = "random",
                probe_size: int = 64) -> list[tuple[str, tuple[int, ...]]]:
    """All exportable activation names with their output shapes.

    Runs a probe forward pass and records every module whose output is a
    4-D tensor; names are module-qualified graph nodes.
    """
    spec = REGISTRY.get(model_id)
    if spec is None:
        raise ExportConfigError(f"unknown model '{model_id}'")
    if spec.builder is None:
        raise ExportConfigError(f"model '{model_id}' has no implementation "
                                f"available in this environment")
    net = _construct(spec.builder, weights)
    net.eval()
    names: list[tuple[str, tuple[int, ...]]] = []
    hooks = []

    def hook(name):
        def record(_module, _inputs, output):
            if isinstance(output, torch.Tensor) and output.dim() == 4:
                names.append((name, tuple(output.shape[1:])))
        return record

    for name, module in net.named_modules():
        if name:
            hooks.append(module.register_forward_hook(hook(name)))
    with torch.no_grad():
        net(torch.zeros(1, 3, probe_size, probe_size))
    for h in hooks:
        h.remove()
    return names


class Fcn8s(nn.Module):
    """Fully convolutional segmentation head over a VGG-16 backbone.

    Score maps from the final backbone stage are upsampled and fused with
    skip scores at the pool4 and pool3 stages; the fused stride-8 map of
    class scores is the exported output (no final upsample to pixels).
    """

    def __init__(self, num_classes: int = FCN_CLASSES):
        super().__init__()
        vgg = tvm.vgg16(weights=None)
        feats = list(vgg.features)
        self.to_pool3 = nn.Sequential(*feats[:17])    # stride 8, 256 ch
        self.to_pool4 = nn.Sequential(*feats[17:24])  # stride 16, 512 ch
        self.to_pool5 = nn.Sequential(*feats[24:])    # stride 32, 512 ch
        self.fc6 = nn.Conv2d(512, 4096, kernel_size=7, padding=3)
        self.fc7 = nn.Conv2d(4096, 4096, kernel_size=1)
        self.relu = nn.ReLU(inplace=True)
        self.score_fr = nn.Conv2d(4096, num_classes, kernel_size=1)
        self.score_pool4 = nn.Conv2d(512, num_classes, kernel_size=1)
        self.score_pool3 = nn.Conv2d(256, num_classes, kernel_size=1)
        self.up2a = nn.ConvTranspose2d(num_classes, num_classes, 4, stride=2,
                                       padding=1, bias=False)
        self.up2b = nn.ConvTranspose2d(num_classes, num_classes, 4, stride=2,
                                       padding=1, bias=False)

    def forward(self, x):
        p3 = self.to_pool3(x)
        p4 = self.to_pool4(p3)
        p5 = self.to_pool5(p4)
        h = self.relu(self.fc6(p5))
        h = self.relu(self.fc7(h))
        score = self.up2a(self.score_fr(h)) + self.score_pool4(p4)
        score = self.up2b(score) + self.score_pool3(p3)
        return score                                    # stride 8 class scores


def build_fcn8s(weights: str = "pretrained",
                weights_file: str | None = None) -> Fcn8s:
    if weights == "random":
        torch.manual_seed(1)
        net = Fcn8s()
    elif weights == "pretrained":
        if weights_file is None:
            raise ExportConfigError(
                "no published checkpoint source is bundled for the "
                "segmentation head; pass --fcn-weights <file.pt> with a "
                "state dict, or weights='random' for a seeded network")
        net = Fcn8s()
        state = torch.load(weights_file, map_location="cpu")
        net.load_state_dict(state)
    else:
        raise ExportConfigError(f"weights must be 'pretrained' or 'random', got '{weights}'")
    net.eval()
    return net
