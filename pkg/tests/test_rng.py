import numpy as np
import pytest
from scipy.stats import norm

from vcmsim.device.rng import CounterStreams, philox4x32
from vcmsim.device.state import DeviceState


def _devices(n, ids=None):
    ids = np.arange(n) if ids is None else np.asarray(ids)
    return DeviceState(
        N_d=np.full(n, 1e26),
        r_d=np.full(n, 45e-9),
        l_d=np.full(n, 0.4e-9),
        N_d_min=np.full(n, 8e23),
        N_d_max=np.full(n, 2e27),
        G_min=np.full(n, 2.4e-5),
        G_max=np.full(n, 7.9e-5),
        stream_id=ids,
        stream_pos=np.zeros(n),
    )


class TestPhilox:
    @pytest.mark.parametrize(
        "key,counter,expected",
        [
            ((0, 0), (0, 0, 0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
            (
                (0xFFFFFFFF, 0xFFFFFFFF),
                (0xFFFFFFFF, 0xFFFFFFFF, 0xFFFFFFFF, 0xFFFFFFFF),
                (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD),
            ),
            (
                (0xA4093822, 0x299F31D0),
                (0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344),
                (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1),
            ),
        ],
    )
    def test_known_answers(self, key, counter, expected):
        """Philox4x32-10 reference vectors"""
        out = philox4x32(*key, *counter)
        assert tuple(int(w) for w in out) == expected

    def test_vectorised_matches_scalar(self):
        """Array counters give the same words as one-at-a-time calls"""
        counters = np.arange(5, dtype=np.uint64)
        batch = philox4x32(7, 0, counters, 0, 3, 0)
        for k in range(5):
            single = philox4x32(7, 0, k, 0, 3, 0)
            assert tuple(int(w[k]) for w in batch) == tuple(int(w) for w in single)


class TestCounterStreams:
    def test_uniforms_in_unit_interval(self):
        """53-bit uniforms lie in [0, 1)"""
        u = CounterStreams(1).uniform(_devices(10000))
        assert np.all((u >= 0) & (u < 1))
        assert abs(u.mean() - 0.5) < 0.01

    def test_draw_advances_position(self):
        """One tick per uniform or normal draw"""
        state = _devices(3)
        streams = CounterStreams(5)
        streams.uniform(state)
        streams.normal(state, np.array([True, False, True]))
        np.testing.assert_array_equal(state.stream_pos, [2, 1, 2])

    def test_normal_inverts_the_cdf_of_the_same_tick(self):
        """A normal draw is the standard normal quantile of the uniform at that position"""
        u = CounterStreams(7).uniform(_devices(500))
        z = CounterStreams(7).normal(_devices(500))
        np.testing.assert_allclose(norm.cdf(z), u, rtol=1e-9, atol=1e-15)

    def test_normal_moments(self):
        """Ten thousand draws have zero mean and unit spread"""
        z = CounterStreams(3).normal(_devices(10000))
        assert np.all(np.isfinite(z))
        assert abs(z.mean()) < 0.05
        assert z.std() == pytest.approx(1.0, abs=0.05)

    def test_reruns_are_bit_identical(self):
        """Same seed, same positions, same numbers"""
        a = CounterStreams(42).normal(_devices(100))
        b = CounterStreams(42).normal(_devices(100))
        np.testing.assert_array_equal(a, b)

    def test_draws_do_not_depend_on_batching(self):
        """A device's stream is the same alone or inside a batch"""
        batch = CounterStreams(9).uniform(_devices(4, ids=[10, 11, 12, 13]))
        alone = CounterStreams(9).uniform(_devices(1, ids=[12]))
        assert batch[2] == alone[0]

    def test_seeds_give_different_streams(self):
        """Different master seeds do not collide"""
        a = CounterStreams(1).uniform(_devices(50))
        b = CounterStreams(2).uniform(_devices(50))
        assert not np.array_equal(a, b)

    def test_negative_seed_rejected(self):
        """Seeds are unsigned"""
        with pytest.raises(ValueError):
            CounterStreams(-1)
