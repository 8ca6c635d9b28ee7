import numpy as np
import pytest
from pydantic import ValidationError

from vcmsim.config import REALISTIC_CONFIG, load_run_config
from vcmsim.device.noise import (
    NoiseSpec,
    ParameterNoise,
    c2c_walk_bounds,
    c2c_walk_geometry,
    evolve_cycle,
    realize_device,
    realize_devices,
    sample_d2d,
    update_fraction,
)
from vcmsim.device.physics import Polarity
from vcmsim.device.rng import CounterStreams
from vcmsim.device.surrogate import read_conductance
from vcmsim.errors import SamplingError


@pytest.fixture
def batch(make_device):
    return make_device(G=5e-5, n=20000)


class TestNoiseSpec:
    def test_default_is_noise_free(self):
        """Nothing varies unless asked to"""
        noise = NoiseSpec()
        assert not noise.has_d2d
        assert not noise.has_c2c

    def test_bound_walk_only_on_concentration_bounds(self):
        """c2c_sigma is for N_d_min / N_d_max"""
        with pytest.raises(ValidationError):
            NoiseSpec(r_d=ParameterNoise(c2c_sigma=0.1))

    def test_geometry_walk_only_on_geometry(self):
        """c2c_sigma_add / mult are for r_d / l_d"""
        with pytest.raises(ValidationError):
            NoiseSpec(N_d_max=ParameterNoise(c2c_sigma_add=0.1))

    def test_geometry_walk_keeps_positivity(self):
        """sigma_add + sigma_mult must stay below one"""
        with pytest.raises(ValidationError):
            ParameterNoise(c2c_sigma_add=0.6, c2c_sigma_mult=0.5)

    def test_disabled_source_reads_zero(self):
        """Switching a source off keeps its sigma for provenance"""
        spec = ParameterNoise(d2d_sigma=0.3, d2d_enabled=False)
        assert spec.d2d == 0.0
        assert spec.d2d_sigma == 0.3

    def test_shipped_realistic_spec(self):
        """The realistic mix has both kinds of noise"""
        noise = load_run_config(REALISTIC_CONFIG).noise
        assert noise.has_d2d and noise.has_c2c
        assert noise.r_d.d2d_sigma < 0.3


class TestDeviceToDevice:
    def test_zero_sigma_returns_nominal(self, batch):
        """No spread, no draws"""
        values = sample_d2d(45e-9, 0.0, None, CounterStreams(0), batch)
        np.testing.assert_array_equal(values, 45e-9)
        np.testing.assert_array_equal(batch.stream_pos, 0)

    def test_moments(self, batch):
        """Mean and spread match Normal(mu, mu sigma)"""
        values = sample_d2d(45e-9, 0.1, None, CounterStreams(3), batch)
        assert values.mean() == pytest.approx(45e-9, rel=0.01)
        assert values.std() == pytest.approx(4.5e-9, rel=0.03)

    def test_truncation(self, batch):
        """Draws stay inside the bounds and are positive"""
        values = sample_d2d(45e-9, 0.3, (40e-9, 50e-9), CounterStreams(3), batch)
        assert values.min() >= 40e-9
        assert values.max() <= 50e-9

    def test_large_sigma_stays_positive(self, batch):
        """Non-physical negative draws are rejected"""
        values = sample_d2d(1.0, 0.8, None, CounterStreams(4), batch)
        assert values.min() > 0

    def test_unsatisfiable_bounds(self, batch):
        """Bounds far from the mean are refused up front"""
        with pytest.raises(SamplingError):
            sample_d2d(1.0, 0.01, (2.0, 3.0), CounterStreams(0), batch)

    def test_nominal_outside_bounds_without_spread(self, batch):
        """sigma 0 cannot satisfy bounds that exclude the nominal"""
        with pytest.raises(SamplingError):
            sample_d2d(1.0, 0.0, (2.0, 3.0), CounterStreams(0), batch)

    def test_fabrication_is_reproducible(self, params, coeffs, window):
        """Same seed and ids, same devices"""
        noise = NoiseSpec(seed=5).with_parameter("r_d", d2d_sigma=0.3)
        a = realize_devices(params, coeffs, noise, window, np.arange(50))
        b = realize_devices(params, coeffs, noise, window, np.arange(50))
        for name, values in a.to_arrays().items():
            np.testing.assert_array_equal(values, b.to_arrays()[name])

    def test_device_independent_of_batch(self, params, coeffs, window):
        """Device 7 is the same device whether made alone or with others"""
        noise = load_run_config(REALISTIC_CONFIG).noise
        batch = realize_devices(params, coeffs, noise, window, np.arange(10))
        alone = realize_device(params, coeffs, noise, window, 7)
        assert alone.r_d[0] == batch.r_d[7]
        assert alone.N_d[0] == batch.N_d[7]

    def test_initial_state_inside_control_window(self, params, coeffs, window):
        """Fabricated devices start between G_min and G_max"""
        noise = load_run_config(REALISTIC_CONFIG).noise
        state = realize_devices(params, coeffs, noise, window, np.arange(200))
        G = read_conductance(coeffs, params, state.N_d)
        assert np.all(G >= state.G_min * (1 - 1e-9))
        assert np.all(G <= state.G_max * (1 + 1e-9))
        state.validate()

    def test_disabled_noise_gives_nominal_devices(self, params, coeffs, window):
        """Without d2d every device carries the nominal parameters"""
        state = realize_devices(params, coeffs, NoiseSpec(), window, np.arange(5))
        np.testing.assert_array_equal(state.r_d, params.r_d)
        np.testing.assert_array_equal(state.N_d_max, params.N_d_max)


class TestCycleToCycle:
    def test_bound_walk_step_size(self, batch):
        """One step moves at most sigma of the current value"""
        X = np.full(batch.size, 2e27)
        new = c2c_walk_bounds(X, 0.05, None, CounterStreams(1), batch)
        assert np.all(np.abs(new - X) <= 0.05 * X * (1 + 1e-12))
        assert np.all(batch.stream_pos == 1)

    def test_bound_walk_clamps(self, batch):
        """Bounded walks stay inside their truncation range"""
        X = np.full(batch.size, 2e27)
        new = c2c_walk_bounds(X, 0.5, (1.9e27, 2.1e27), CounterStreams(1), batch)
        assert new.min() >= 1.9e27 and new.max() <= 2.1e27

    def test_unbounded_walk_can_leave_range(self, batch):
        """clamp=False lets the parameter age past its bounds"""
        X = np.full(batch.size, 2e27)
        new = c2c_walk_bounds(X, 0.5, (1.9e27, 2.1e27), CounterStreams(1), batch, clamp=False)
        assert new.max() > 2.1e27

    def test_update_fraction(self):
        """Share of the remaining room that was used"""
        u = update_fraction([1.0, 1.0, 4.0], [3.0, 1.0, 4.0], 0.0, [5.0, 5.0, 4.0], Polarity.SET)
        np.testing.assert_allclose(u, [0.5, 0.0, 0.0])
        u = update_fraction([4.0], [2.0], 0.0, 5.0, Polarity.RESET)
        np.testing.assert_allclose(u, [0.5])

    def test_multiplicative_term_needs_an_update(self, batch):
        """With u = 0 the multiplicative walk leaves the value alone"""
        X = np.full(batch.size, 45e-9)
        N = np.full(batch.size, 1e26)
        new = c2c_walk_geometry(
            X, 0.0, 0.3, N, N, 8e23, 2e27, Polarity.SET, None, CounterStreams(2), batch
        )
        np.testing.assert_array_equal(new, X)

    def test_evolve_keeps_window_ordered(self, make_device):
        """Crossing bound walks fall back to the previous bounds"""
        noise = (
            NoiseSpec(seed=3, bounded_walks=False)
            .with_parameter("N_d_max", c2c_sigma=0.9)
            .with_parameter("N_d_min", c2c_sigma=0.9)
        )
        state = make_device(G=5e-5, n=500)
        state.N_d_max[:] = 1.1 * state.N_d_min
        state.N_d[:] = state.N_d_min
        for _ in range(10):
            evolve_cycle(noise, state, state.N_d.copy(), Polarity.SET)
            assert np.all(state.N_d_min < state.N_d_max)
            assert np.all((state.N_d >= state.N_d_min) & (state.N_d <= state.N_d_max))

    def test_evolve_is_deterministic(self, make_device):
        """Walks replay bit-identically from the same streams"""
        noise = load_run_config(REALISTIC_CONFIG).noise
        a = make_device(G=5e-5, n=30)
        b = a.copy()
        for state in (a, b):
            evolve_cycle(noise, state, state.N_d.copy(), Polarity.RESET)
        np.testing.assert_array_equal(a.r_d, b.r_d)
        np.testing.assert_array_equal(a.N_d_max, b.N_d_max)
