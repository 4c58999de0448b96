import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evfi.events import (
    Event,
    EventFileError,
    EventStream,
    read_events,
    split_at_tau,
    voxelize,
    write_events,
)


def random_stream(rng, n, h=64, w=64, t_start=0, t_end=100_000):
    ts = np.sort(rng.integers(t_start, t_end + 1, size=n))
    return EventStream(
        rng.integers(0, w, size=n),
        rng.integers(0, h, size=n),
        rng.choice([-1, 1], size=n),
        ts,
        t_start, t_end, h, w,
    )


def voxelize_oracle(stream, num_bins, h, w):
    """Per-event scalar accumulation of the hat kernel, in float64."""
    grid = np.zeros((num_bins, h, w), dtype=np.float64)
    window = stream.t_end - stream.t_start
    for ev in stream:
        if window > 0:
            kf = (ev.t - stream.t_start) / window * (num_bins - 1)
        else:
            kf = 0.0
        for k in range(num_bins):
            wgt = max(0.0, 1.0 - abs(k - kf))
            grid[k, ev.y, ev.x] += ev.p * wgt
    return grid


class TestEventTypes:
    def test_polarity_validated(self):
        with pytest.raises(ValueError):
            Event(0, 0, 0, 10)
        with pytest.raises(ValueError):
            Event(0, 0, 2, 10)

    def test_stream_rejects_out_of_bounds_coordinate(self):
        with pytest.raises(ValueError, match="outside"):
            EventStream([8], [2], [1], [5], 0, 10, sensor_h=4, sensor_w=8)

    def test_stream_rejects_unsorted(self):
        with pytest.raises(ValueError, match="sorted"):
            EventStream([0, 0], [0, 0], [1, 1], [5, 3], 0, 10, 4, 4)

    def test_stream_rejects_out_of_window(self):
        with pytest.raises(ValueError, match="window"):
            EventStream([0], [0], [1], [50], 0, 10, 4, 4)


class TestVoxelize:
    def test_single_event_at_window_start(self):
        s = EventStream([3], [4], [1], [0], 0, 1000, 8, 8)
        g = voxelize(s, 5, 8, 8).data
        assert g[0, 4, 3] == 1.0
        assert g.sum() == 1.0

    def test_hat_kernel_bilinear_split(self):
        # normalized position 1.5 with B=5 over [0, 8]: t = 3
        s = EventStream([2], [5], [-1], [3], 0, 8, 8, 8)
        g = voxelize(s, 5, 8, 8).data
        assert g[1, 5, 2] == pytest.approx(-0.5)
        assert g[2, 5, 2] == pytest.approx(-0.5)
        assert np.count_nonzero(g) == 2

    def test_matches_scalar_oracle_on_random_events(self):
        rng = np.random.default_rng(7)
        s = random_stream(rng, 10_000)
        got = voxelize(s, 5, 64, 64).data
        want = voxelize_oracle(s, 5, 64, 64)
        assert np.max(np.abs(got - want.astype(np.float32))) <= 1e-6

    def test_signed_mass(self):
        rng = np.random.default_rng(8)
        s = random_stream(rng, 5000)
        g = voxelize(s, 5, 64, 64)
        assert abs(g.total_mass() - s.signed_count()) < 1e-4

    def test_empty_stream_gives_zero_grid(self):
        s = EventStream.empty(0, 100, 16, 16)
        assert np.all(voxelize(s, 5, 16, 16).data == 0)

    def test_degenerate_window_maps_to_bin_zero(self):
        s = EventStream([1, 2], [1, 2], [1, 1], [5, 5], 5, 5, 8, 8)
        g = voxelize(s, 5, 8, 8).data
        assert g[0].sum() == 2.0
        assert np.all(g[1:] == 0)

    def test_resolution_mismatch_rejected(self):
        s = EventStream.empty(0, 10, 16, 16)
        with pytest.raises(ValueError, match="resolution"):
            voxelize(s, 5, 32, 32)

    def test_too_few_bins_rejected(self):
        s = EventStream.empty(0, 10, 16, 16)
        with pytest.raises(ValueError, match="bins"):
            voxelize(s, 1, 16, 16)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 400))
    def test_linearity_and_antisymmetry(self, seed, n):
        rng = np.random.default_rng(seed)
        s = random_stream(rng, n, h=16, w=16, t_end=1000)
        half = n // 2
        order = np.argsort(rng.random(n), kind="stable")
        pick = np.zeros(n, dtype=bool)
        pick[order[:half]] = True

        def sub(mask):
            idx = np.flatnonzero(mask)
            return EventStream(s.xs[idx], s.ys[idx], s.ps[idx], s.ts[idx],
                               s.t_start, s.t_end, 16, 16)

        g_all = voxelize(s, 5, 16, 16).data
        g_a = voxelize(sub(pick), 5, 16, 16).data
        g_b = voxelize(sub(~pick), 5, 16, 16).data
        assert np.allclose(g_all, g_a + g_b, atol=1e-5)

        neg = EventStream(s.xs, s.ys, -s.ps, s.ts, s.t_start, s.t_end, 16, 16)
        assert np.array_equal(voxelize(neg, 5, 16, 16).data, -g_all)


class TestSplitAtTau:
    def test_threshold_partition(self):
        ts = [100, 400, 600, 900]
        s = EventStream([0, 1, 2, 3], [0, 0, 0, 0], [1, 1, 1, 1], ts, 0, 1000, 4, 4)
        a, b = split_at_tau(s, 0.5)
        assert (len(a), len(b)) == (2, 2)
        assert a.t_start == 0 and a.t_end == 500
        assert b.t_start == 500 and b.t_end == 1000

    def test_tie_goes_to_first_segment(self):
        s = EventStream([0], [0], [1], [500], 0, 1000, 4, 4)
        a, b = split_at_tau(s, 0.5)
        assert (len(a), len(b)) == (1, 0)

    def test_empty_stream_splits_into_empty_windows(self):
        s = EventStream.empty(0, 1000, 4, 4)
        a, b = split_at_tau(s, 0.25)
        assert len(a) == 0 and len(b) == 0
        assert a.t_end == b.t_start == 250

    def test_invalid_tau_rejected(self):
        s = EventStream.empty(0, 1000, 4, 4)
        for tau in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                split_at_tau(s, tau)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 0.99))
    def test_partition_completeness(self, seed, tau):
        rng = np.random.default_rng(seed)
        s = random_stream(rng, 1000, h=32, w=32, t_end=10_000)
        a, b = split_at_tau(s, tau)
        assert len(a) + len(b) == len(s)
        t_split = s.t_start + tau * (s.t_end - s.t_start)
        assert np.all(a.ts <= t_split)
        assert np.all(b.ts > t_split)
        cat = np.concatenate([np.stack([a.xs, a.ys, a.ps, a.ts], 1),
                              np.stack([b.xs, b.ys, b.ps, b.ts], 1)])
        orig = np.stack([s.xs, s.ys, s.ps, s.ts], 1)
        assert np.array_equal(cat, orig)


class TestEventFileIO:
    def test_empty_stream_is_header_only(self, tmp_path):
        s = EventStream.empty(0, 500, 12, 20)
        p = tmp_path / "e.evt1"
        write_events(s, p)
        assert p.stat().st_size == 16
        back = read_events(p)
        assert len(back) == 0
        assert (back.t_start, back.t_end) == (0, 500)
        assert (back.sensor_h, back.sensor_w) == (12, 20)

    def test_single_event_record_size(self, tmp_path):
        s = EventStream([3], [5], [-1], [77], 0, 100, 8, 8)
        p = tmp_path / "e.evt1"
        write_events(s, p)
        assert p.stat().st_size == 16 + 13
        back = read_events(p)
        assert back[0] == Event(3, 5, -1, 77)

    def test_round_trip_100k_events(self, tmp_path):
        rng = np.random.default_rng(3)
        s = random_stream(rng, 100_000, h=180, w=240, t_end=2_000_000)
        p = tmp_path / "big.evt1"
        write_events(s, p)
        back = read_events(p)
        for col in ("xs", "ys", "ps", "ts"):
            assert np.array_equal(getattr(back, col), getattr(s, col))
        assert (back.t_start, back.t_end) == (s.t_start, s.t_end)

    def test_truncated_record_names_offset(self, tmp_path):
        s = EventStream([1, 2], [1, 2], [1, 1], [5, 9], 0, 100, 8, 8)
        p = tmp_path / "e.evt1"
        write_events(s, p)
        (tmp_path / "bad.evt1").write_bytes(p.read_bytes()[:-4])
        with pytest.raises(EventFileError) as err:
            read_events(tmp_path / "bad.evt1")
        assert err.value.offset == 16 + 13

    def test_bad_polarity_names_offset(self, tmp_path):
        s = EventStream([1], [1], [1], [5], 0, 100, 8, 8)
        p = tmp_path / "e.evt1"
        write_events(s, p)
        raw = bytearray(p.read_bytes())
        raw[16 + 4] = 3  # polarity byte of record 0
        (tmp_path / "bad.evt1").write_bytes(bytes(raw))
        with pytest.raises(EventFileError) as err:
            read_events(tmp_path / "bad.evt1")
        assert err.value.offset == 16 + 4

    def test_unsorted_timestamps_names_offset(self, tmp_path):
        s = EventStream([1, 2], [1, 2], [1, 1], [5, 9], 0, 100, 8, 8)
        p = tmp_path / "e.evt1"
        write_events(s, p)
        raw = bytearray(p.read_bytes())
        # overwrite record 1's timestamp with 1 (< 5)
        raw[16 + 13 + 5:16 + 13 + 13] = (1).to_bytes(8, "little")
        (tmp_path / "bad.evt1").write_bytes(bytes(raw))
        with pytest.raises(EventFileError) as err:
            read_events(tmp_path / "bad.evt1")
        assert err.value.offset == 16 + 13 + 5
