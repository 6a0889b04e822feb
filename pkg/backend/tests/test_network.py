"""Feature fusion, decoder and the end-to-end network"""

import numpy as np
import pytest
import torch

from backend.app.core import tensor_ops
from backend.app.core.errors import DimensionError
from backend.app.core.gradcheck import call_with, grad_check, parameter_grad_check
from backend.app.models.decoder import Decoder
from backend.app.models.encoders import FeaturePyramid
from backend.app.models.fusion import ConcatFusion, FeatureFusion, ForcedAttention, FusionBlock, filter_frame
from backend.app.models.network import DeblurNet, predict
from backend.app.training.loss import charbonnier_loss, target_pyramid
from backend.tests.conftest import make_batch

pytestmark = pytest.mark.unit


class TestFusion:
    def test_zero_attention_and_filters_keep_frame(self, float64):
        frame = torch.randn(1, 3, 4, 6, 6)
        out = filter_frame(
            frame, torch.zeros(1, 3, 4, 1, 1), torch.zeros(1, 3, 1, 6, 6), torch.zeros(1, 3, 4 * 25, 6, 6), 5
        )
        assert torch.equal(out, frame)

    def test_delta_filters_double_frame(self, float64):
        frame = torch.randn(1, 3, 4, 6, 6)
        kernels = tensor_ops.delta_kernels(4, 6, 6, 5).expand(1, 3, -1, -1, -1)
        out = filter_frame(frame, torch.zeros(1, 3, 4, 1, 1), torch.zeros(1, 3, 1, 6, 6), kernels, 5)
        assert torch.allclose(out, 2 * frame)

    def test_filter_is_linear_in_frame(self, float64):
        a, b = torch.randn(1, 2, 3, 5, 5), torch.randn(1, 2, 3, 5, 5)
        att_c, att_s = torch.rand(1, 2, 3, 1, 1), torch.rand(1, 2, 1, 5, 5)
        kernels = torch.randn(1, 2, 3 * 9, 5, 5)

        def f(x):
            return filter_frame(x, att_c, att_s, kernels, 3)

        assert torch.allclose(f(a + 2 * b), f(a) + 2 * f(b), atol=1e-12)

    def test_block_shapes(self, float64):
        block = FusionBlock(8, 4, 5)
        out = block(torch.randn(2, 1, 8, 6, 6), torch.randn(2, 3, 4, 6, 6))
        assert out.shape == (2, 3, 8, 6, 6)

    def test_forced_attention_is_used(self, float64):
        torch.manual_seed(0)
        block = FusionBlock(4, 4, 3)
        frame, events = torch.randn(1, 1, 4, 5, 5), torch.randn(1, 2, 4, 5, 5)
        forced = ForcedAttention(
            torch.zeros(1, 2, 4, 1, 1), torch.zeros(1, 2, 1, 5, 5), torch.zeros(1, 2, 4 * 9, 5, 5)
        )
        out = block(frame, events, forced)
        aligned = tensor_ops.time_distributed(block.align, events)
        event_out = aligned * tensor_ops.time_distributed(block.event_att, aligned)
        expected = tensor_ops.time_distributed(
            block.merge, torch.cat([frame.expand(-1, 2, -1, -1, -1), event_out], dim=2)
        )
        assert torch.allclose(out, expected, atol=1e-12)

    def test_misaligned_inputs(self, float64):
        with pytest.raises(DimensionError):
            FusionBlock(8, 4)(torch.randn(1, 1, 8, 6, 6), torch.randn(1, 3, 4, 4, 4))

    def test_concat_fusion(self, float64):
        out = ConcatFusion(8, 4)(torch.randn(1, 1, 8, 4, 4), torch.randn(1, 5, 4, 4, 4))
        assert out.shape == (1, 5, 8, 4, 4)


class TestDecoder:
    def test_zero_features_decode_to_zero(self, float64):
        decoder = Decoder((4, 8, 8), 1)
        fused = [torch.zeros(1, 3, c, 16 >> s, 16 >> s) for s, c in enumerate((4, 8, 8))]
        outputs = decoder(fused)
        assert [tuple(o.shape) for o in outputs.outputs] == [(1, 1, 16, 16), (1, 1, 8, 8), (1, 1, 4, 4)]
        assert all(torch.count_nonzero(o) == 0 for o in outputs.outputs)

    def test_clamped(self, float64):
        decoder = Decoder((4, 8, 8), 3)
        fused = [10 * torch.randn(1, 2, c, 8 >> s, 8 >> s) for s, c in enumerate((4, 8, 8))]
        for o in decoder(fused).clamped():
            assert o.min() >= 0.0 and o.max() <= 1.0

    def test_scale_count(self, float64):
        with pytest.raises(DimensionError):
            Decoder((4, 8, 8))([torch.zeros(1, 1, 4, 8, 8)])


class TestDeblurNet:
    def test_forward_shapes(self, float64, tiny_model_config):
        torch.manual_seed(0)
        net = DeblurNet(tiny_model_config)
        batch = make_batch(tiny_model_config, batch=2, size=8)
        result = net(batch["blur"], batch["past_voxel"], batch["units"])
        assert [tuple(o.shape) for o in result.outputs.outputs] == [(2, 1, 8, 8), (2, 1, 4, 4), (2, 1, 2, 2)]
        assert result.activation.slot_means().shape == (2, tiny_model_config.temporal_slots)

    def test_spatial_size_multiple_of_four(self, float64, tiny_model_config):
        net = DeblurNet(tiny_model_config)
        batch = make_batch(tiny_model_config, size=10)
        with pytest.raises(DimensionError):
            net(batch["blur"], batch["past_voxel"], batch["units"])

    def test_unit_count_checked(self, float64, tiny_model_config):
        net = DeblurNet(tiny_model_config)
        batch = make_batch(tiny_model_config)
        with pytest.raises(DimensionError):
            net(batch["blur"], batch["past_voxel"], batch["units"][:, :1])

    @pytest.mark.parametrize("flag", ["use_etes", "use_recurrent_encoding", "use_fusion"])
    def test_ablations_run(self, float64, tiny_model_config, flag):
        config = tiny_model_config.model_copy(update={flag: False})
        net = DeblurNet(config)
        batch = make_batch(config)
        result = net(batch["blur"], batch["past_voxel"], batch["units"])
        assert result.outputs[0].shape == (1, 1, 8, 8)
        if flag == "use_etes":
            assert torch.all(result.activation.base == 1.0)

    def test_predict_unbatched(self, float64, tiny_model_config):
        net = DeblurNet(tiny_model_config)
        batch = make_batch(tiny_model_config)
        arrays = {k: batch[k][0].numpy().astype(np.float64) for k in ("blur", "past_voxel", "units")}
        result = predict(net, arrays)
        assert result.outputs[0].shape == (1, 1, 8, 8)
        assert not result.outputs[0].requires_grad


class TestGradients:
    def test_full_fuse(self, float64):
        torch.manual_seed(1)
        fusion = FeatureFusion((4, 8, 8), (4, 4, 4), kernel_size=3)
        g = torch.Generator().manual_seed(2)
        frame = FeaturePyramid([torch.randn(1, 1, c, 8 >> s, 8 >> s, generator=g) for s, c in enumerate((4, 8, 8))])
        events = FeaturePyramid([torch.randn(1, 3, 4, 8 >> s, 8 >> s, generator=g) for s in range(3)])
        weights = [torch.randn(1, 3, c, 8 >> s, 8 >> s, generator=g) for s, c in enumerate((4, 8, 8))]
        sizes = [level.numel() for level in events.levels]

        def loss(x):
            levels = [part.view_as(level) for part, level in zip(torch.split(x, sizes), events.levels)]
            fused = fusion(frame, FeaturePyramid(levels))
            return sum((w * f).sum() for w, f in zip(weights, fused))

        point = torch.cat([level.reshape(-1) for level in events.levels])
        report = grad_check(loss, point, h=1e-6, tol=1e-4, mode="directions", max_checks=5)
        assert report.passed, report

    def test_full_model_parameters(self, float64, tiny_model_config):
        torch.manual_seed(2)
        net = DeblurNet(tiny_model_config)
        assert tiny_model_config.temporal_slots == 3
        batch = make_batch(tiny_model_config, size=16, seed=4)
        targets = target_pyramid(batch["sharp"])

        def loss(module, params):
            result = call_with(module, params, batch["blur"], batch["past_voxel"], batch["units"])
            return charbonnier_loss(result.outputs, targets)

        report = parameter_grad_check(net, loss, h=1e-6, tol=1e-4, mode="directions", max_checks=5)
        assert report.passed, report

    def test_full_model_inputs(self, float64, tiny_model_config):
        torch.manual_seed(3)
        net = DeblurNet(tiny_model_config)
        batch = make_batch(tiny_model_config, size=16, seed=5)
        targets = target_pyramid(batch["sharp"])
        blur = batch["blur"]

        def loss(x):
            result = net(x.view_as(blur), batch["past_voxel"], batch["units"])
            return charbonnier_loss(result.outputs, targets)

        report = grad_check(loss, blur.reshape(-1), h=1e-6, tol=1e-4, mode="directions", max_checks=5)
        assert report.passed, report
