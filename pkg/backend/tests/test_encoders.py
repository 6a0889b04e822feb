"""Frame, past-event and recurrent event encoders"""

import pytest
import torch

from backend.app.core.errors import DimensionError, InputError
from backend.app.core.gradcheck import call_with, grad_check, parameter_grad_check
from backend.app.models.encoders import (
    FeaturePyramid,
    FrameEncoder,
    PastEventEncoder,
    RecurrentEventEncoder,
    assemble_event_pyramid,
)
from backend.app.physics.events import EventStream
from backend.app.representation.voxel import to_voxel

pytestmark = pytest.mark.unit


class TestPyramidEncoders:
    def test_level_sizes(self, float64):
        pyramid = FrameEncoder(1)(torch.rand(2, 1, 32, 32))
        assert [tuple(level.shape[-2:]) for level in pyramid.levels] == [(32, 32), (16, 16), (8, 8)]
        assert pyramid.channels == [16, 32, 64]
        assert pyramid.T == 1

    def test_zero_input_gives_zero_features(self, float64):
        pyramid = FrameEncoder(3)(torch.zeros(1, 3, 16, 16))
        assert all(torch.count_nonzero(level) == 0 for level in pyramid.levels)

    def test_empty_past_gives_zero_features(self, float64):
        past = EventStream.empty((16, 16), 0.2, (0, 1000))
        bins = torch.from_numpy(to_voxel(past, num_bins=16).bins)[None]
        assert torch.count_nonzero(bins) == 0
        pyramid = PastEventEncoder(16)(bins)
        assert all(torch.count_nonzero(level) == 0 for level in pyramid.levels)

    def test_deterministic(self, float64):
        torch.manual_seed(0)
        encoder = PastEventEncoder(4, (8, 16, 32))
        x = torch.randn(1, 4, 8, 8)
        a, b = encoder(x), encoder(x)
        assert all(torch.equal(p, q) for p, q in zip(a.levels, b.levels))

    def test_requires_batched_input(self, float64):
        with pytest.raises(DimensionError):
            FrameEncoder(1)(torch.rand(1, 16, 16))

    def test_pyramid_requires_halving(self, float64):
        with pytest.raises(DimensionError):
            FeaturePyramid([torch.zeros(1, 1, 2, 8, 8), torch.zeros(1, 1, 2, 8, 8)])


class TestRecurrentEncoder:
    def test_output_shapes(self, float64):
        encoder = RecurrentEventEncoder((8, 16, 32), hidden_channels=16)
        pyramid, state = encoder(torch.rand(2, 8, 2, 16, 16))
        assert [tuple(level.shape) for level in pyramid.levels] == [
            (2, 8, 8, 16, 16), (2, 8, 16, 8, 8), (2, 8, 32, 4, 4),
        ]
        assert state.step == 8
        assert state.hidden.shape == (2, 16, 8, 8)

    def test_single_unit_is_feedforward_with_zero_state(self, float64):
        torch.manual_seed(3)
        encoder = RecurrentEventEncoder((4, 8, 8), hidden_channels=4)
        unit = torch.rand(1, 2, 8, 8)
        pyramid, _ = encoder(unit[:, None])

        f0 = encoder.f1(unit)
        down = torch.relu(encoder.f2_down(f0))
        zeros = torch.zeros(1, 4, 4, 4)
        f1 = torch.relu(encoder.f2_merge(torch.cat([down, zeros], dim=1)))
        f2 = encoder.f3(f1)
        for level, expected in zip(pyramid.levels, (f0, f1, f2)):
            assert torch.allclose(level[:, 0], expected, atol=1e-12)

    def test_hidden_state_carries_history(self, float64):
        torch.manual_seed(4)
        encoder = RecurrentEventEncoder((4, 8, 8), hidden_channels=4)
        first, second = torch.rand(1, 2, 8, 8), torch.rand(1, 2, 8, 8)
        with_history, _ = encoder(torch.stack([first, second], dim=1))
        without, _ = encoder(torch.stack([torch.zeros_like(first), second], dim=1))
        assert not torch.allclose(with_history[1][:, 1], without[1][:, 1])

    def test_feedforward_ablation_ignores_history(self, float64):
        torch.manual_seed(5)
        encoder = RecurrentEventEncoder((4, 8, 8), hidden_channels=4, recurrent=False)
        first, second = torch.rand(1, 2, 8, 8), torch.rand(1, 2, 8, 8)
        with_history, state = encoder(torch.stack([first, second], dim=1))
        alone, _ = encoder(second[:, None])
        assert state is None
        assert torch.allclose(with_history[2][:, 1], alone[2][:, 0], atol=1e-12)

    def test_out_of_order_units(self, float64):
        encoder = RecurrentEventEncoder((4, 8, 8), hidden_channels=4)
        with pytest.raises(InputError):
            encoder(torch.rand(1, 3, 2, 8, 8), unit_times=[0.0, 20.0, 10.0])


class TestAssemble:
    def test_past_takes_slot_zero(self, float64):
        past = FeaturePyramid([torch.ones(1, 1, 4, 8, 8), torch.ones(1, 1, 4, 4, 4), torch.ones(1, 1, 4, 2, 2)])
        current = FeaturePyramid([torch.zeros(1, 8, 4, 8, 8), torch.zeros(1, 8, 4, 4, 4), torch.zeros(1, 8, 4, 2, 2)])
        events = assemble_event_pyramid(past, current)
        assert events.T == 9
        assert torch.all(events[0][:, 0] == 1) and torch.all(events[0][:, 1:] == 0)

    def test_channel_mismatch(self, float64):
        past = FeaturePyramid([torch.ones(1, 1, 4, 8, 8)])
        current = FeaturePyramid([torch.zeros(1, 8, 2, 8, 8)])
        with pytest.raises(DimensionError):
            assemble_event_pyramid(past, current)


def pyramid_loss(seed: int):
    """Sum of every pyramid level against fixed random weights, drawn on first use"""
    weights = []

    def loss(pyramid: FeaturePyramid) -> torch.Tensor:
        if not weights:
            g = torch.Generator().manual_seed(seed)
            weights.extend(torch.randn(level.shape, generator=g, dtype=level.dtype) for level in pyramid.levels)
        return sum((w * level).sum() for w, level in zip(weights, pyramid.levels))

    return loss


class TestEncoderGradients:
    def test_frame_encoder_input(self, float64):
        torch.manual_seed(6)
        encoder = FrameEncoder(1, (4, 8, 8))
        blur = torch.rand(1, 1, 8, 8)
        loss = pyramid_loss(0)
        report = grad_check(
            lambda x: loss(encoder(x.view_as(blur))), blur.reshape(-1),
            h=1e-6, tol=1e-4, mode="directions", max_checks=5,
        )
        assert report.passed, report

    def test_recurrent_two_steps_input(self, float64):
        torch.manual_seed(7)
        encoder = RecurrentEventEncoder((4, 8, 8), hidden_channels=4)
        units = torch.rand(1, 2, 2, 8, 8)
        loss = pyramid_loss(1)
        report = grad_check(
            lambda x: loss(encoder(x.view_as(units))[0]), units.reshape(-1),
            h=1e-6, tol=1e-4, mode="directions", max_checks=5,
        )
        assert report.passed, report

    def test_recurrent_two_steps_parameters(self, float64):
        torch.manual_seed(8)
        encoder = RecurrentEventEncoder((4, 8, 8), hidden_channels=4)
        units = torch.rand(1, 2, 2, 8, 8)
        loss = pyramid_loss(2)
        report = parameter_grad_check(
            encoder, lambda module, params: loss(call_with(module, params, units)[0]),
            h=1e-6, tol=1e-4, mode="directions", max_checks=5,
        )
        assert report.passed, report
