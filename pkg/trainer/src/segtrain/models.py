"""Descriptor, decoder and semantics networks (training side).

Architectures mirror the runtime's fixed shape tables exactly; export writes
the tensor names and layouts its loader validates. Batch norm uses eps 1e-5
and exports its moving statistics, which the runtime applies in inference
mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import segw

GRID_DIMS = (32, 32, 16)


@dataclass(frozen=True)
class EncoderSpec:
    name: str
    filters: tuple = (32, 64, 64)
    fc: tuple = (512, 64)
    grid: tuple = GRID_DIMS
    dropout: float = 0.5


SEGMAP_V1 = EncoderSpec(name="segmap-v1", filters=(32, 64, 64), fc=(512, 64))
SEGMINI_V1 = EncoderSpec(name="segmini-v1", filters=(16, 32, 32), fc=(256, 32))


def xavier_init(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(m, (nn.Conv3d, nn.ConvTranspose3d, nn.Linear)):
            nn.init.xavier_uniform_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class DescriptorNet(nn.Module):
    """Conv -> pool -> conv -> pool -> conv -> dense (+ metric scale) -> dense."""

    def __init__(self, spec: EncoderSpec = SEGMAP_V1):
        super().__init__()
        self.spec = spec
        f1, f2, f3 = spec.filters
        self.conv1 = nn.Conv3d(1, f1, 3, padding=1)
        self.bn1 = nn.BatchNorm3d(f1)
        self.conv2 = nn.Conv3d(f1, f2, 3, padding=1)
        self.bn2 = nn.BatchNorm3d(f2)
        self.conv3 = nn.Conv3d(f2, f3, 3, padding=1)
        self.bn3 = nn.BatchNorm3d(f3)
        self.pool = nn.MaxPool3d(2)
        self.relu = nn.ReLU()
        gx, gy, gz = spec.grid
        self.flat = f3 * (gx // 4) * (gy // 4) * (gz // 4)
        self.fc1 = nn.Linear(self.flat + 3, spec.fc[0])
        self.dropout = nn.Dropout(spec.dropout)
        self.fc2 = nn.Linear(spec.fc[0], spec.fc[1])
        xavier_init(self)

    def forward(self, grid: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
        x = grid.unsqueeze(1)  # (N, 1, X, Y, Z)
        x = self.pool(self.relu(self.bn1(self.conv1(x))))
        x = self.pool(self.relu(self.bn2(self.conv2(x))))
        x = self.relu(self.bn3(self.conv3(x)))
        feat = torch.cat([x.flatten(1), scale / 10.0], dim=1)
        h = self.dropout(self.relu(self.fc1(feat)))
        return self.relu(self.fc2(h))

    def export_tensors(self) -> dict:
        out = {}
        for i, (conv, bn) in enumerate(((self.conv1, self.bn1), (self.conv2, self.bn2),
                                        (self.conv3, self.bn3)), start=1):
            out[f"conv{i}.weight"] = conv.weight.detach().cpu().numpy()
            out[f"conv{i}.bias"] = conv.bias.detach().cpu().numpy()
            out[f"bn{i}.gamma"] = bn.weight.detach().cpu().numpy()
            out[f"bn{i}.beta"] = bn.bias.detach().cpu().numpy()
            out[f"bn{i}.mean"] = bn.running_mean.detach().cpu().numpy()
            out[f"bn{i}.var"] = bn.running_var.detach().cpu().numpy()
        out["fc1.weight"] = self.fc1.weight.detach().cpu().numpy()
        out["fc1.bias"] = self.fc1.bias.detach().cpu().numpy()
        out["fc2.weight"] = self.fc2.weight.detach().cpu().numpy()
        out["fc2.bias"] = self.fc2.bias.detach().cpu().numpy()
        return out

    def load_exported(self, tensors: dict) -> None:
        with torch.no_grad():
            for i, (conv, bn) in enumerate(((self.conv1, self.bn1), (self.conv2, self.bn2),
                                            (self.conv3, self.bn3)), start=1):
                conv.weight.copy_(torch.from_numpy(tensors[f"conv{i}.weight"]))
                conv.bias.copy_(torch.from_numpy(tensors[f"conv{i}.bias"]))
                bn.weight.copy_(torch.from_numpy(tensors[f"bn{i}.gamma"]))
                bn.bias.copy_(torch.from_numpy(tensors[f"bn{i}.beta"]))
                bn.running_mean.copy_(torch.from_numpy(tensors[f"bn{i}.mean"]))
                bn.running_var.copy_(torch.from_numpy(tensors[f"bn{i}.var"]))
            self.fc1.weight.copy_(torch.from_numpy(tensors["fc1.weight"]))
            self.fc1.bias.copy_(torch.from_numpy(tensors["fc1.bias"]))
            self.fc2.weight.copy_(torch.from_numpy(tensors["fc2.weight"]))
            self.fc2.bias.copy_(torch.from_numpy(tensors["fc2.bias"]))


class DecoderNet(nn.Module):
    """Dense layer to a coarse volume, then three stride-2 transposed convs."""

    def __init__(self, descriptor_dim: int = 64, grid: tuple = GRID_DIMS,
                 coarse_channels: int = 64, mid_channels: int = 32):
        super().__init__()
        gx, gy, gz = grid
        self.coarse = (coarse_channels, gx // 8, gy // 8, gz // 8)
        self.fc = nn.Linear(descriptor_dim, int(np.prod(self.coarse)))
        self.deconv1 = nn.ConvTranspose3d(coarse_channels, coarse_channels, 3,
                                          stride=2, padding=1, output_padding=1)
        self.deconv2 = nn.ConvTranspose3d(coarse_channels, mid_channels, 3,
                                          stride=2, padding=1, output_padding=1)
        self.deconv3 = nn.ConvTranspose3d(mid_channels, 1, 3,
                                          stride=2, padding=1, output_padding=1)
        self.relu = nn.ReLU()
        xavier_init(self)

    def forward(self, descriptor: torch.Tensor) -> torch.Tensor:
        h = self.relu(self.fc(descriptor))
        x = h.view(-1, *self.coarse)
        x = self.relu(self.deconv1(x))
        x = self.relu(self.deconv2(x))
        return torch.sigmoid(self.deconv3(x)).squeeze(1)

    def export_tensors(self) -> dict:
        out = {"fc.weight": self.fc.weight.detach().cpu().numpy(),
               "fc.bias": self.fc.bias.detach().cpu().numpy()}
        for i, deconv in enumerate((self.deconv1, self.deconv2, self.deconv3), start=1):
            out[f"deconv{i}.weight"] = deconv.weight.detach().cpu().numpy()
            out[f"deconv{i}.bias"] = deconv.bias.detach().cpu().numpy()
        return out


class SemanticsHead(nn.Module):
    def __init__(self, descriptor_dim: int = 64, hidden: int = 32, n_classes: int = 3):
        super().__init__()
        self.fc1 = nn.Linear(descriptor_dim, hidden)
        self.fc2 = nn.Linear(hidden, n_classes)
        self.relu = nn.ReLU()
        xavier_init(self)

    def forward(self, descriptor: torch.Tensor) -> torch.Tensor:
        return self.fc2(self.relu(self.fc1(descriptor)))  # logits

    def export_tensors(self) -> dict:
        return {"fc1.weight": self.fc1.weight.detach().cpu().numpy(),
                "fc1.bias": self.fc1.bias.detach().cpu().numpy(),
                "fc2.weight": self.fc2.weight.detach().cpu().numpy(),
                "fc2.bias": self.fc2.bias.detach().cpu().numpy()}


def export_model(path, model) -> None:
    segw.save_tensors(path, model.export_tensors())
