import numpy as np
import pytest
import torch

from segtrain import segw
from segtrain.models import (
    SEGMAP_V1,
    SEGMINI_V1,
    DecoderNet,
    DescriptorNet,
    SemanticsHead,
    export_model,
)


class TestShapes:
    def test_segmap_tensor_shapes(self):
        t = DescriptorNet(SEGMAP_V1).export_tensors()
        assert t["conv1.weight"].shape == (32, 1, 3, 3, 3)
        assert t["conv2.weight"].shape == (64, 32, 3, 3, 3)
        assert t["conv3.weight"].shape == (64, 64, 3, 3, 3)
        assert t["fc1.weight"].shape == (512, 64 * 8 * 8 * 4 + 3)
        assert t["fc2.weight"].shape == (64, 512)
        for i in (1, 2, 3):
            for part in ("gamma", "beta", "mean", "var"):
                assert f"bn{i}.{part}" in t

    def test_segmini_halves_everything(self):
        full = DescriptorNet(SEGMAP_V1).export_tensors()
        mini = DescriptorNet(SEGMINI_V1).export_tensors()
        for i in (1, 2, 3):
            assert mini[f"conv{i}.weight"].shape[0] * 2 == full[f"conv{i}.weight"].shape[0]
        assert mini["fc1.weight"].shape[0] * 2 == full["fc1.weight"].shape[0]
        assert mini["fc2.weight"].shape[0] * 2 == full["fc2.weight"].shape[0]

    def test_decoder_tensor_shapes(self):
        t = DecoderNet().export_tensors()
        assert t["fc.weight"].shape == (2048, 64)
        assert t["deconv1.weight"].shape == (64, 64, 3, 3, 3)
        assert t["deconv2.weight"].shape == (64, 32, 3, 3, 3)
        assert t["deconv3.weight"].shape == (32, 1, 3, 3, 3)

    def test_semantics_tensor_shapes(self):
        t = SemanticsHead().export_tensors()
        assert t["fc1.weight"].shape == (32, 64)
        assert t["fc2.weight"].shape == (3, 32)


class TestExport:
    def test_segw_round_trip_bit_exact(self, tmp_path):
        torch.manual_seed(1)
        enc = DescriptorNet(SEGMINI_V1)
        path = tmp_path / "w.segw"
        export_model(path, enc)
        back = segw.load_tensors(path)
        for name, arr in enc.export_tensors().items():
            assert back[name].tobytes() == np.asarray(arr, dtype=np.float32).tobytes()

    def test_load_exported_restores_forward(self, tmp_path):
        torch.manual_seed(2)
        enc = DescriptorNet(SEGMINI_V1).eval()
        path = tmp_path / "w.segw"
        export_model(path, enc)
        enc2 = DescriptorNet(SEGMINI_V1).eval()
        enc2.load_exported(segw.load_tensors(path))
        g = torch.rand(2, 32, 32, 16)
        s = torch.rand(2, 3)
        with torch.no_grad():
            a, b = enc(g, s), enc2(g, s)
        # Round trip through float32 storage: bit-exact for float32 modules.
        assert torch.equal(a, b)

    def test_xavier_zero_bias(self):
        torch.manual_seed(3)
        enc = DescriptorNet(SEGMAP_V1)
        assert float(enc.conv1.bias.detach().abs().max()) == 0.0
        assert float(enc.fc1.bias.detach().abs().max()) == 0.0
        assert float(enc.conv1.weight.detach().abs().max()) > 0.0
