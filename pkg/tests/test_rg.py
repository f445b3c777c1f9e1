"""Tests for the renormalisation step backends and the flow driver."""

import math

import numpy as np
import pytest

from hiergap.errors import ParameterError, ResolutionError
from hiergap.lattice import HierLattice, build_covariance_decomposition
from hiergap.oracle import convolution_oracle
from hiergap.potentials import FourierPotential, RadialPotential, fourier_norm, phi4_initial, zero_radial
from hiergap.rg import (
    compute_epsilon,
    contraction_ratios,
    diagnose,
    final_curvature,
    fit_contraction,
    fit_convexity_recursion,
    fit_couplings,
    gaussian_smoothing,
    hermite_rule,
    in_contraction_domain,
    laguerre_rule,
    laplace_centres,
    read_flow_jsonl,
    rg_step_fourier,
    rg_step_radial,
    rg_step_scalar,
    run_flow,
    scale_states,
    write_flow_jsonl,
)


@pytest.mark.unit
class TestQuadratureRules:
    def test_hermite_moments(self):
        nodes, weights = hermite_rule(64)
        assert weights.sum() == pytest.approx(1.0, rel=1e-12)
        assert weights @ nodes**2 == pytest.approx(1.0, rel=1e-10)
        assert weights @ nodes**4 == pytest.approx(3.0, rel=1e-10)

    def test_laguerre_is_gamma_law(self):
        nodes, weights = laguerre_rule(64, -0.5)
        assert weights.sum() == pytest.approx(1.0, rel=1e-10)
        assert weights @ nodes == pytest.approx(0.5, rel=1e-10)


@pytest.mark.unit
class TestScalarStep:
    def test_zero_potential_stays_zero(self):
        values = rg_step_scalar(np.zeros_like, 0.7, 4, np.linspace(-3.0, 3.0, 13))
        np.testing.assert_allclose(values, 0.0, atol=1e-12)

    def test_quadratic_closed_form(self):
        c, variance = 1.5, 0.5
        points = np.linspace(-3.0, 3.0, 25)
        values = rg_step_scalar(lambda x: 0.5 * c * x**2, variance, 1, points)
        expected = 0.5 * c * points**2 / (1 + c * variance) + 0.5 * math.log(1 + c * variance)
        np.testing.assert_allclose(values, expected, rtol=1e-9, atol=1e-12)

    def test_recentred_rule_gives_same_average(self):
        c, variance = 1.5, 0.5
        points = np.linspace(0.0, 3.0, 7)
        plain = rg_step_scalar(lambda x: 0.5 * c * x**2, variance, 1, points)
        shifted = rg_step_scalar(lambda x: 0.5 * c * x**2, variance, 1, points, centres=0.4 * points)
        np.testing.assert_allclose(shifted, plain, rtol=1e-9, atol=1e-12)

    def test_zero_variance_rescales(self):
        points = np.array([0.5, 1.0])
        np.testing.assert_allclose(rg_step_scalar(np.cos, 0.0, 4, points), 4 * np.cos(points))

    def test_negative_variance_rejected(self):
        with pytest.raises(ParameterError):
            rg_step_scalar(np.cos, -1.0, 1, np.zeros(2))


@pytest.mark.unit
class TestRadialStep:
    def test_matches_convolution(self):
        g, nu = 0.1, -0.1
        pot = phi4_initial(g, nu)
        stepped = rg_step_radial(pot, 0.5, L=2, d=1)
        points = stepped.grid[::26][:20]
        exact = convolution_oracle(lambda x: 0.25 * g * x**4 + 0.5 * nu * x**2, 0.5, points, reblock=2)
        np.testing.assert_allclose(stepped.radial(points), exact, rtol=1e-7, atol=1e-9)

    @pytest.mark.slow
    def test_two_component_matches_convolution(self):
        g, nu = 0.2, -0.1
        pot = phi4_initial(g, nu, n=2)
        stepped = rg_step_radial(pot, 0.3, L=2, d=1, last_step=True)
        radii = np.array([0.0, 0.5, 1.5, 3.0])
        points = np.column_stack([radii, np.zeros_like(radii)])
        exact = convolution_oracle(
            lambda p: 0.25 * g * np.sum(p**2, axis=-1) ** 2 + 0.5 * nu * np.sum(p**2, axis=-1), 0.3, points, dim=2
        )
        np.testing.assert_allclose(stepped.radial(radii), exact, rtol=1e-6, atol=1e-8)

    def test_grid_contracts_and_block_grows(self):
        pot = phi4_initial(0.1, 0.0, points=128)
        stepped = rg_step_radial(pot, 0.2, L=2, d=4)
        np.testing.assert_allclose(stepped.grid, pot.grid / 2)
        assert stepped.block_volume == 16

    def test_last_step_keeps_grid(self):
        pot = phi4_initial(0.1, 0.0, points=128, block_volume=4)
        stepped = rg_step_radial(pot, 0.2, L=2, d=1, last_step=True)
        np.testing.assert_array_equal(stepped.grid, pot.grid)
        assert stepped.block_volume == 4

    def test_quadratic_closed_form(self):
        c = 0.8
        grid = np.linspace(0.0, 6.0, 257)
        pot = RadialPotential(1, grid, 0.5 * c * grid**2)
        stepped = rg_step_radial(pot, 0.4, L=2, d=1, out_grid=grid[:120])
        expected = 2 * (0.5 * c * grid[:120] ** 2 / (1 + 0.4 * c) + 0.5 * math.log(1 + 0.4 * c))
        np.testing.assert_allclose(stepped.values, expected, rtol=1e-7, atol=1e-9)

    def test_laplace_centres_pull_towards_origin(self):
        pot = phi4_initial(0.1, 0.0)
        radii = np.array([0.0, 5.0, 10.0])
        centres = laplace_centres(pot, radii, 0.5)
        assert centres[0] == pytest.approx(0.0)
        assert np.all(centres[1:] < radii[1:])
        assert np.all(centres[1:] > 0.0)


@pytest.mark.unit
class TestFourierStep:
    def test_smoothing_multiplies_by_heat_kernel(self):
        pot = FourierPotential(np.exp(-np.arange(17.0)))
        smoothed = gaussian_smoothing(pot, 3.75)
        np.testing.assert_allclose(smoothed.coeffs, pot.coeffs * np.exp(-0.5 * 3.75 * np.arange(17.0) ** 2))

    def test_smoothing_semigroup(self, rng):
        pot = FourierPotential(rng.normal(size=9))
        twice = gaussian_smoothing(gaussian_smoothing(pot, 0.3), 0.5)
        np.testing.assert_allclose(twice.coeffs, gaussian_smoothing(pot, 0.8).coeffs, rtol=1e-12)

    def test_single_mode_contracts(self):
        pot = FourierPotential.from_modes({1: 1e-4}, q_max=8)
        stepped = rg_step_fourier(pot, beta=0.2, L=2)
        ratio = fourier_norm(stepped) / fourier_norm(pot)
        assert ratio <= 0.675
        assert ratio == pytest.approx(4 * math.exp(-1.875), rel=1e-3)

    def test_first_step_uses_full_variance(self):
        pot = FourierPotential.from_modes({1: 1e-4}, q_max=8)
        stepped = rg_step_fourier(pot, beta=0.2, L=2, scale=0)
        assert fourier_norm(stepped) / fourier_norm(pot) == pytest.approx(4 * math.exp(-2.5), rel=1e-3)

    def test_contraction_domain(self):
        assert in_contraction_domain(FourierPotential.from_modes({1: 0.02}, q_max=4))
        assert not in_contraction_domain(FourierPotential.from_modes({1: 0.03}, q_max=4))


@pytest.mark.unit
class TestCouplingFit:
    def test_exact_quartic(self):
        pot = phi4_initial(0.3, -0.2, block_volume=4, r_max=4.0)
        fit = fit_couplings(pot, 2.0)
        assert fit.g == pytest.approx(0.3, rel=1e-8)
        assert fit.nu == pytest.approx(-0.2, rel=1e-8)
        assert fit.u == pytest.approx(0.0, abs=1e-9)
        assert fit.residual < 1e-8

    def test_zero_potential(self):
        fit = fit_couplings(zero_radial(1, 5.0), 1.0)
        assert (fit.g, fit.nu, fit.u, fit.residual) == (0.0, 0.0, 0.0, 0.0)

    def test_window_beyond_grid(self):
        with pytest.raises(ResolutionError):
            fit_couplings(zero_radial(1, 5.0), 6.0)


@pytest.mark.unit
class TestFlow:
    def test_phi4_initial_epsilon(self):
        lattice = HierLattice(L=2, N=2, d=1)
        decomp = build_covariance_decomposition(lattice, "massive", m2=0.01)
        state = diagnose(phi4_initial(0.1, -0.1), decomp, 0, 1)
        epsilon = compute_epsilon(state)
        assert epsilon.epsilon == pytest.approx(0.1 / 1.01, rel=1e-6)
        assert epsilon.valid
        assert state.diagnostics.g == pytest.approx(0.1, rel=1e-8)

    def test_zero_potential_flow(self, massive_decomp):
        states = run_flow(zero_radial(1, 8.0), massive_decomp)
        per_scale = scale_states(states)
        assert [state.scale for state in per_scale] == [0, 1, 2]
        assert states[-1].diagnostics.final
        assert all(state.diagnostics.epsilon <= 1e-8 for state in per_scale)
        assert all(state.diagnostics.valid for state in per_scale)
        assert final_curvature(states) == pytest.approx(0.0, abs=1e-8)

    def test_block_volumes_follow_scale(self, massive_decomp):
        states = run_flow(zero_radial(1, 8.0), massive_decomp)
        assert [state.diagnostics.block_volume for state in states] == [1, 4, 16, 16]

    def test_final_curvature_needs_final_step(self, massive_decomp):
        states = run_flow(zero_radial(1, 8.0), massive_decomp, final_step=False)
        with pytest.raises(ParameterError):
            final_curvature(states)

    def test_sine_gordon_flow_contracts(self):
        decomp = build_covariance_decomposition(HierLattice(L=2, N=4, d=2), "sine-gordon", beta=0.2)
        initial = FourierPotential.from_modes({1: 0.05 / 8}, q_max=32)
        states = run_flow(initial, decomp)
        assert np.all(contraction_ratios(states) < 0.675)
        assert fit_contraction(states) < 0.675
        assert all(state.diagnostics.in_contraction_domain for state in scale_states(states))

    def test_start_scale(self, sine_gordon_decomp):
        states = run_flow(FourierPotential.from_modes({1: 1e-3}, q_max=16), sine_gordon_decomp, start_scale=1)
        assert [state.scale for state in scale_states(states)] == [1, 2]

    def test_jsonl_roundtrip(self, massive_decomp, temp_dir):
        states = run_flow(zero_radial(1, 8.0, points=128), massive_decomp)
        path = write_flow_jsonl(states, temp_dir / "flow.jsonl", "0123abcd")
        records = read_flow_jsonl(path)
        assert len(records) == len(states)
        assert records[0]["config_hash"] == "0123abcd"
        assert records[0]["potential"]["family"] == "radial"
        assert records[-1]["final"] is True


@pytest.mark.slow
class TestSineGordonContraction:
    @pytest.mark.parametrize("beta", [0.15, 0.2, 0.25])
    def test_random_potentials_contract(self, beta, rng):
        decomp = build_covariance_decomposition(HierLattice(L=2, N=6, d=2), "sine-gordon", beta=beta)
        sigma = 1.0 - 2.0**-2
        for _ in range(20):
            coeffs = np.zeros(33)
            coeffs[1:5] = rng.uniform(-1.0, 1.0, 4)
            norm = rng.uniform(0.005, 0.05)
            initial = FourierPotential(coeffs * norm / fourier_norm(FourierPotential(coeffs)))
            states = run_flow(initial, decomp)
            bound = 4.0 * math.exp(-sigma / (2.0 * beta)) * (1.0 + 10.0 * norm)
            assert np.all(contraction_ratios(states) <= bound)
            assert fit_contraction(states) < 1.0


@pytest.mark.unit
def test_convexity_recursion_constant():
    assert fit_convexity_recursion([1.0, 0.5, 0.4]) == pytest.approx(0.5)
    assert fit_convexity_recursion([0.0, 1.0]) == 0.0
