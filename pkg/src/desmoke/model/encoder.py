"""Multi-scale frame encoder producing a four-scale feature pyramid.

Scales follow the convention f1 (stride 32, coarsest) .. f4 (stride 4,
finest). Backbones are interchangeable behind `build_encoder`; each takes
a (B, T, 3, H, W) normalized frame window with H, W divisible by 32.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from ..config import ModelConfig
from ..errors import CheckpointError, ConfigError


@dataclass
class FeaturePyramid:
    """Per-frame feature maps, coarse to fine; each (B, T, C_l, H_l, W_l)."""

    f1: torch.Tensor
    f2: torch.Tensor
    f3: torch.Tensor
    f4: torch.Tensor

    @property
    def frame_window(self) -> int:
        return self.f4.shape[1]

    def scales(self):
        return (self.f1, self.f2, self.f3, self.f4)


class BasicBlock(nn.Module):
    def __init__(self, in_ch, out_ch, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_ch != out_ch:
            self.down = nn.Sequential(
                nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_ch),
            )
        else:
            self.down = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.down(x))


class ResNetEncoder(nn.Module):
    """ResNet-18-style residual encoder with configurable widths."""

    def __init__(self, channels=(96, 64, 48, 32)):
        super().__init__()
        c1, c2, c3, c4 = channels
        self.stem = nn.Sequential(
            nn.Conv2d(3, c4, 7, stride=2, padding=3, bias=False),
            nn.BatchNorm2d(c4),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(3, stride=2, padding=1),
        )
        self.layer1 = self._layer(c4, c4, stride=1)   # stride 4  -> f4
        self.layer2 = self._layer(c4, c3, stride=2)   # stride 8  -> f3
        self.layer3 = self._layer(c3, c2, stride=2)   # stride 16 -> f2
        self.layer4 = self._layer(c2, c1, stride=2)   # stride 32 -> f1

    @staticmethod
    def _layer(in_ch, out_ch, stride):
        return nn.Sequential(BasicBlock(in_ch, out_ch, stride), BasicBlock(out_ch, out_ch))

    def forward(self, frames: torch.Tensor) -> FeaturePyramid:
        if frames.ndim != 5:
            raise ValueError(f"expected (B, T, 3, H, W), got {tuple(frames.shape)}")
        b, t, c, h, w = frames.shape
        if h % 32 or w % 32:
            raise ValueError(f"frame dims must be divisible by 32, got {h}x{w}")
        x = frames.reshape(b * t, c, h, w)
        x = self.stem(x)
        f4 = self.layer1(x)
        f3 = self.layer2(f4)
        f2 = self.layer3(f3)
        f1 = self.layer4(f2)

        def split(f):
            return f.reshape(b, t, *f.shape[1:])

        return FeaturePyramid(f1=split(f1), f2=split(f2), f3=split(f3), f4=split(f4))


BACKBONES = {"resnet18": ResNetEncoder}


def build_encoder(cfg: ModelConfig) -> nn.Module:
    if cfg.backbone not in BACKBONES:
        raise ConfigError(f"unknown backbone {cfg.backbone!r}; known: {sorted(BACKBONES)}")
    enc = BACKBONES[cfg.backbone](channels=cfg.channels)
    if cfg.pretrained_weights:
        try:
            state = torch.load(cfg.pretrained_weights, map_location="cpu", weights_only=True)
        except Exception as e:
            raise CheckpointError(f"cannot load encoder weights {cfg.pretrained_weights}: {e}") from e
        enc.load_state_dict(state)
    return enc
