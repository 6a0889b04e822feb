"""Blur formation and closed-form event-based deblurring"""

import math

import numpy as np
import pytest

from backend.app.analytics.metrics import psnr
from backend.app.core.errors import DimensionError, InputError, InvariantViolation
from backend.app.physics.edi import (
    ResidualSum,
    edi_deblur,
    edi_latent_sequence,
    residual_sum,
    synthesize_blur,
)
from backend.app.physics.events import EventStream, integrate_events, simulate_events
from backend.app.synthesis.scenes import random_motion_texture, translating_bar, translating_pattern

pytestmark = pytest.mark.unit

BETA = 0.2


class TestSynthesizeBlur:
    def test_identical_frames(self):
        frame = np.random.default_rng(0).random((5, 6))
        assert np.allclose(synthesize_blur([frame, frame, frame]), frame, atol=1e-15)

    def test_two_frames(self):
        assert np.all(synthesize_blur([np.zeros((2, 2)), np.ones((2, 2))]) == 0.5)

    def test_bar_matches_brute_force_mean(self):
        seq = translating_bar(12, 12, 9)
        blur = synthesize_blur(seq)
        brute = np.zeros((12, 12))
        for y in range(12):
            for x in range(12):
                brute[y, x] = sum(seq.frames[i, y, x] for i in range(9)) / 9
        assert np.max(np.abs(blur - brute)) < 1e-12

    def test_empty_input(self):
        with pytest.raises(InputError):
            synthesize_blur([])


class TestResidualSum:
    def test_empty_stream_gives_ones(self):
        stream = EventStream.empty((4, 3), BETA, (0, 100))
        S = residual_sum(stream, 50, [0, 25, 50, 75])
        assert np.array_equal(S.S, np.ones((3, 4)))

    def test_two_samples_one_event(self):
        stream = EventStream.build([5], [0], [0], [1], (1, 1), BETA, (0, 11))
        S = residual_sum(stream, 0, [0, 10])
        assert S.S[0, 0] == pytest.approx((1 + math.exp(BETA)) / 2, abs=1e-15)

    def test_negative_offsets_use_reversed_count(self):
        stream = EventStream.build([5], [0], [0], [1], (1, 1), BETA, (0, 11))
        S = residual_sum(stream, 10, [0, 10])
        assert S.S[0, 0] == pytest.approx((math.exp(-BETA) + 1) / 2, abs=1e-15)

    def test_matches_forward_integration(self):
        seq = random_motion_texture(10, 10, 6, seed=3)
        stream = simulate_events(seq, beta=BETA)
        times = [int(t) for t in seq.timestamps]
        S = residual_sum(stream, times[0], times)
        c = 1e-3
        brute = np.mean([integrate_events(np.full((10, 10), c), stream, times[0], t) for t in times], axis=0)
        assert np.max(np.abs(S.S * c - brute)) < 1e-12

    def test_empty_sample_times(self):
        with pytest.raises(InputError):
            residual_sum(EventStream.empty((1, 1), BETA, (0, 10)), 0, [])

    def test_sample_time_outside_span(self):
        with pytest.raises(InputError):
            residual_sum(EventStream.empty((1, 1), BETA, (0, 10)), 0, [20])


class TestEdiDeblur:
    def test_unit_residual_returns_blur(self):
        blur = np.random.default_rng(1).random((4, 4))
        assert np.array_equal(edi_deblur(blur, ResidualSum(np.ones((4, 4)))), blur)

    def test_non_positive_residual(self):
        S = np.ones((2, 2))
        S[1, 1] = 0.0
        with pytest.raises(InvariantViolation):
            edi_deblur(np.ones((2, 2)), ResidualSum(S))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            edi_deblur(np.ones((3, 2)), ResidualSum(np.ones((2, 2))))

    def test_color_blur_shares_gain(self):
        blur = np.full((2, 2, 3), 0.5)
        out = edi_deblur(blur, ResidualSum(np.full((2, 2), 2.0)))
        assert np.allclose(out, 0.25)

    def test_round_trip_recovers_anchor(self):
        seq = translating_pattern(16, 16, 9)
        stream = simulate_events(seq, beta=BETA)
        blur = synthesize_blur(seq)
        anchor = 4
        times = [int(t) for t in seq.timestamps]
        latent = edi_deblur(blur, residual_sum(stream, times[anchor], times))
        truth = seq.frames[anchor]
        # both the anchor and every sample time carry a sub-threshold residual
        bound = math.exp(2 * BETA)
        assert np.all(latent <= truth * bound + 1e-9)
        assert np.all(latent >= truth / bound - 1e-9)

    def test_round_trip_from_first_frame(self):
        seq = translating_pattern(16, 16, 9)
        stream = simulate_events(seq, beta=BETA)
        blur = synthesize_blur(seq)
        times = [int(t) for t in seq.timestamps]
        latent = edi_deblur(blur, residual_sum(stream, times[0], times))
        bound = math.exp(BETA)
        assert np.all(latent <= seq.frames[0] * bound + 1e-9)
        assert np.all(latent >= seq.frames[0] / bound - 1e-9)

    def test_deblurring_beats_blur(self):
        beta = 0.05
        seq = translating_pattern(16, 16, 9)
        stream = simulate_events(seq, beta=beta)
        blur = synthesize_blur(seq)
        times = [int(t) for t in seq.timestamps]
        latent = edi_deblur(blur, residual_sum(stream, times[4], times))
        truth = seq.frames[4]
        assert psnr(blur, truth) == pytest.approx(24.924, abs=0.01)
        assert psnr(latent, truth) - psnr(blur, truth) == pytest.approx(14.44, abs=0.1)

    def test_latent_sequence(self):
        seq = translating_pattern(16, 16, 5)
        stream = simulate_events(seq, beta=BETA)
        times = [int(t) for t in seq.timestamps]
        latents = edi_latent_sequence(seq.frames[2], stream, times[2], times)
        assert len(latents) == 5
        assert np.array_equal(latents[2], seq.frames[2])
        for latent, truth in zip(latents, seq.frames):
            assert np.all(np.abs(np.log(latent) - np.log(truth)) < 2 * BETA + 1e-9)
