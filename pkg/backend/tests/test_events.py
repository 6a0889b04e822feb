"""Frame sequences, event streams and the contrast-threshold event model"""

import math
import time

import numpy as np
import pytest

from backend.app.core.errors import DimensionError, InputError
from backend.app.physics.events import (
    Event,
    EventStream,
    integrate_events,
    simulate_events,
    simulate_from_log,
)
from backend.app.physics.frames import FrameSequence, to_luma
from backend.app.synthesis.scenes import random_motion_texture

pytestmark = pytest.mark.unit

BETA = 0.2


def two_frames(a: float, b: float) -> FrameSequence:
    return FrameSequence(np.array([[[a]], [[b]]]), np.array([0, 1000]))


class TestFrameSequence:
    def test_uniform_spacing(self):
        seq = FrameSequence.uniform(np.zeros((4, 2, 3)), fps=240.0)
        assert seq.timestamps.tolist() == [0, 4167, 8334, 12501]
        assert seq.frame_interval == 4167
        assert seq.shape == (2, 3)

    def test_non_increasing_timestamps(self):
        with pytest.raises(InputError):
            FrameSequence(np.zeros((2, 2, 2)), np.array([5, 5]))

    def test_intensity_range(self):
        with pytest.raises(InputError):
            FrameSequence(np.full((1, 2, 2), 1.5), np.array([0]))

    def test_color_luma(self):
        rgb = np.zeros((1, 2, 2, 3))
        rgb[..., 1] = 1.0
        seq = FrameSequence(rgb, np.array([0]))
        assert seq.is_color
        assert np.allclose(seq.luma(), 0.587)
        assert np.allclose(to_luma(rgb[0]), 0.587)


class TestSimulation:
    def test_constant_sequence_is_silent(self):
        seq = FrameSequence.uniform(np.full((5, 4, 4), 0.5), fps=240.0)
        assert len(simulate_events(seq, beta=BETA)) == 0

    def test_single_positive_crossing(self):
        stream = simulate_events(two_frames(0.40, 0.40 * math.exp(0.25)), beta=BETA)
        assert [e.p for e in stream] == [1]
        assert 0 <= stream.t[0] < 1000

    def test_two_negative_crossings(self):
        stream = simulate_events(two_frames(0.40, 0.40 * math.exp(-0.45)), beta=BETA)
        assert [e.p for e in stream] == [-1, -1]
        assert stream.polarity_sum() == -2

    def test_residual_carries_over(self):
        # +0.25 fires once and leaves 0.05; a further +0.15 completes the next threshold
        base = math.log(0.4)
        log_frames = np.array([[[base]], [[base + 0.25]], [[base + 0.40]]])
        stream = simulate_from_log(log_frames, np.array([0, 1000, 2000]), BETA)
        assert stream.p.tolist() == [1, 1]
        assert stream.t[0] < 1000 <= stream.t[1] < 2000

    def test_crossing_times_follow_linear_path(self):
        base = math.log(0.4)
        log_frames = np.array([[[base]], [[base + 0.5]]])
        stream = simulate_from_log(log_frames, np.array([0, 1000]), BETA)
        # crossings at 0.2/0.5 and 0.4/0.5 of the interval
        assert np.abs(stream.t - np.array([400, 800])).max() <= 1

    def test_non_increasing_timestamps(self):
        with pytest.raises(InputError):
            simulate_from_log(np.zeros((2, 1, 1)), np.array([10, 10]), BETA)

    def test_events_reconstruct_frames_within_threshold(self, bar_scene):
        stream = simulate_events(bar_scene, beta=BETA)
        log_first = np.log(bar_scene.luma()[0])
        t0 = int(bar_scene.timestamps[0])
        for i in range(1, len(bar_scene)):
            t = int(bar_scene.timestamps[i])
            estimate = log_first + BETA * stream.net_counts(t0, t)
            assert np.all(np.abs(estimate - np.log(bar_scene.luma()[i])) < BETA + 1e-9)

    def test_canonical_order(self, bar_scene):
        stream = simulate_events(bar_scene, beta=BETA)
        order = np.lexsort((stream.p, stream.x, stream.y, stream.t))
        assert np.array_equal(order, np.arange(len(stream)))
        assert stream.sensor_size == (16, 16)

    def test_random_motion_round_trip(self):
        seq = random_motion_texture(64, 64, 30, seed=7)
        started = time.perf_counter()
        stream = simulate_events(seq, beta=BETA)
        luma = seq.luma()
        t0 = int(seq.timestamps[0])
        for i in range(1, len(seq)):
            estimate = integrate_events(luma[0], stream, t0, int(seq.timestamps[i]))
            assert np.all(np.abs(np.log(estimate) - np.log(luma[i])) <= BETA + 1e-9)
        assert time.perf_counter() - started < 5.0
        assert len(stream) > 0


class TestEventStream:
    def test_build_sorts(self):
        stream = EventStream.build([5, 1, 3], [0, 1, 0], [0, 0, 1], [1, -1, 1], (2, 2), BETA)
        assert stream.t.tolist() == [1, 3, 5]
        assert stream.t_span == (1, 6)

    def test_unsorted_columns_rejected(self):
        with pytest.raises(InputError):
            EventStream(np.array([3, 1]), np.array([0, 0]), np.array([0, 0]), np.array([1, 1]), (1, 1), BETA, (0, 5))

    def test_out_of_sensor_rejected(self):
        with pytest.raises(InputError):
            EventStream.build([0], [2], [0], [1], (2, 2), BETA)

    def test_bad_polarity_rejected(self):
        with pytest.raises(InputError):
            EventStream.build([0], [0], [0], [0], (1, 1), BETA)

    def test_slice_is_half_open(self):
        stream = EventStream.from_events(
            [Event(0, 0, 0, 1), Event(10, 0, 0, 1), Event(20, 0, 0, -1)], (1, 1), BETA, (0, 30)
        )
        part = stream.slice(10, 20)
        assert part.t.tolist() == [10]
        assert part.t_span == (10, 20)

    def test_net_counts(self):
        stream = EventStream.from_events(
            [Event(0, 1, 0, 1), Event(1, 1, 0, 1), Event(2, 0, 1, -1)], (2, 2), BETA, (0, 3)
        )
        assert stream.net_counts(0, 3).tolist() == [[0, 2], [-1, 0]]


class TestIntegration:
    def test_no_events_keeps_intensity(self):
        stream = EventStream.empty((3, 2), BETA, (0, 100))
        i1 = np.full((2, 3), 0.4)
        assert np.array_equal(integrate_events(i1, stream, 0, 100), i1)

    def test_one_positive_event(self):
        stream = EventStream.from_events([Event(5, 0, 0, 1)], (1, 1), BETA, (0, 10))
        out = integrate_events(np.array([[0.40]]), stream, 0, 10)
        assert out[0, 0] == pytest.approx(0.40 * math.exp(0.2))
        assert out[0, 0] == pytest.approx(0.48856, abs=1e-5)

    def test_opposite_events_cancel(self):
        stream = EventStream.from_events([Event(1, 0, 0, 1), Event(2, 0, 0, -1)], (1, 1), BETA, (0, 10))
        assert integrate_events(np.array([[0.4]]), stream, 0, 10)[0, 0] == pytest.approx(0.4)

    def test_shape_mismatch(self):
        stream = EventStream.empty((3, 2), BETA, (0, 10))
        with pytest.raises(DimensionError):
            integrate_events(np.zeros((3, 3)), stream, 0, 10)
