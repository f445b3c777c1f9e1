"""Tests for the brute-force reference computations."""

import math

import numpy as np
import pytest

from hiergap.errors import CapacityError, ParameterError
from hiergap.lattice import HierLattice
from hiergap.oracle import (
    DenseOperator,
    GibbsModel,
    bakry_emery_bound,
    bl_exponential_check,
    block_labels,
    brascamp_lieb_bound,
    convolution_oracle,
    dense_block_sum,
    dense_hier_operators,
    dg_exact_gap,
    generator_gap_1d,
    gibbs_exact_moments,
    helffer_sjostrand_covariance,
)
from hiergap.potentials import dg_effective_potential, dg_site_gap, dg_uniform_constant


def _quartic(x):
    return 0.5 * x**2 + 0.25 * x**4


def _quartic_curvature(x):
    return 1.0 + 3.0 * x**2


def _convex_samples(rng, precision, g, size):
    """Exact draws from exp(-(x, P x) / 2 - g sum_i x_i^4 / 4) by rejection from the Gaussian part."""
    covariance = np.linalg.inv(precision)
    kept, total = [], 0
    while total < size:
        draws = rng.multivariate_normal(np.zeros(len(precision)), covariance, size=size)
        accepted = draws[rng.random(size) < np.exp(-0.25 * g * np.sum(draws**4, axis=1))]
        kept.append(accepted)
        total += len(accepted)
    return np.concatenate(kept)[:size]


@pytest.mark.unit
class TestDenseOperators:
    def test_global_average(self, small_lattice):
        averages = dense_hier_operators(small_lattice).averages
        np.testing.assert_allclose(averages[-1].matrix, np.full((16, 16), 1.0 / 16))
        np.testing.assert_array_equal(averages[0].matrix, np.eye(16))

    def test_laplacian_row_sums_vanish(self, small_lattice):
        laplacian = dense_hier_operators(small_lattice).laplacian.matrix
        np.testing.assert_allclose(laplacian.sum(axis=1), 0.0, atol=1e-14)

    def test_two_site_laplacian(self):
        laplacian = dense_hier_operators(HierLattice(L=2, N=1, d=1)).laplacian.matrix
        np.testing.assert_allclose(laplacian, [[0.5, -0.5], [-0.5, 0.5]])

    def test_block_labels(self):
        np.testing.assert_array_equal(block_labels(HierLattice(L=2, N=2, d=1), 1), [0, 0, 1, 1])

    def test_covariance_inverts_target(self, massive_decomp):
        dense = dense_hier_operators(massive_decomp.lattice, massive_decomp)
        np.testing.assert_allclose(dense.target.matrix @ dense.covariance.matrix, np.eye(16), atol=1e-10)

    def test_capacity(self):
        with pytest.raises(CapacityError):
            dense_hier_operators(HierLattice(L=2, N=7, d=2))

    def test_rejects_asymmetric_matrix(self):
        with pytest.raises(ParameterError):
            DenseOperator(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_block_sum_length_checked(self, small_lattice):
        averages = dense_hier_operators(small_lattice).averages
        with pytest.raises(ParameterError):
            dense_block_sum(averages, [1.0, 2.0])


@pytest.mark.unit
class TestGeneratorGap:
    def test_ornstein_uhlenbeck(self):
        assert generator_gap_1d(lambda x: x**2) == pytest.approx(2.0, rel=1e-3)

    def test_mobility_scales_gap(self):
        assert generator_gap_1d(lambda x: 0.5 * x**2, mobility=0.25) == pytest.approx(0.25, rel=1e-3)

    def test_double_well_is_slow(self):
        assert generator_gap_1d(lambda x: 0.25 * x**4 - 0.5 * x**2) < 1.0

    def test_bakry_emery(self):
        gap = generator_gap_1d(_quartic)
        assert gap >= bakry_emery_bound(0.0, 1.0) - 1e-6
        assert bakry_emery_bound(1.0, 0.5) == 1.5


@pytest.mark.unit
class TestDiscreteGaussianGap:
    @pytest.mark.parametrize("beta", [0.1, 0.3, 1.0])
    def test_path_bound_dominates(self, beta):
        for psi in np.linspace(0.0, 2 * math.pi, 8, endpoint=False):
            result = dg_exact_gap(beta, float(psi))
            assert result.gap > 0
            assert result.path_bound * result.gap >= 1.0 - 1e-9
            assert result.path_constant * result.raw_gap >= 1.0 - 1e-9

    @pytest.mark.parametrize("beta", [0.1, 0.3, 1.0])
    def test_generator_gap_matches_increment_form(self, beta):
        pot = dg_effective_potential(beta)
        for psi in np.linspace(0.0, 2 * math.pi, 7, endpoint=False):
            exact = dg_exact_gap(beta, float(psi))
            assert 1.0 / exact.gap == pytest.approx(dg_site_gap(pot, float(psi)).inverse_gap, rel=1e-6)

    def test_even_in_psi(self):
        assert dg_exact_gap(0.5, 1.0).gap == pytest.approx(dg_exact_gap(0.5, -1.0).gap, rel=1e-10)

    def test_uniform_constant(self):
        constant = dg_uniform_constant(0.3)
        grid = np.linspace(0.0, math.pi, 64)
        assert constant >= 1.0 / dg_exact_gap(0.3, math.pi).gap - 1e-9
        assert constant <= max(dg_exact_gap(0.3, float(psi)).path_bound for psi in grid) + 1e-9

    def test_rejects_nonpositive_beta(self):
        with pytest.raises(ParameterError):
            dg_exact_gap(0.0)


@pytest.mark.unit
class TestGibbsMoments:
    def test_gaussian_one_site(self):
        model = GibbsModel(lambda phi: 0.25 * phi[..., 0] ** 2)
        moments = gibbs_exact_moments(model)
        assert moments.covariance[0, 0] == pytest.approx(2.0, rel=1e-10)
        assert moments.mean[0] == pytest.approx(0.0, abs=1e-12)
        assert moments.log_normalizer == pytest.approx(0.5 * math.log(4 * math.pi), rel=1e-10)

    def test_gaussian_two_sites(self):
        precision = np.array([[2.0, 0.5], [0.5, 1.0]])
        model = GibbsModel(
            lambda phi: 0.5 * np.einsum("...i,ij,...j->...", phi, precision, phi),
            dim=2,
            hessian=lambda phi: np.broadcast_to(precision, (*phi.shape[:-1], 2, 2)),
        )
        moments = gibbs_exact_moments(model)
        np.testing.assert_allclose(moments.covariance, np.linalg.inv(precision), atol=1e-9)
        a = np.array([1.0, -2.0])
        assert moments.variance_of(a) == pytest.approx(moments.bl_rhs(a), rel=1e-8)

    def test_brascamp_lieb_for_convex_site(self):
        model = GibbsModel(lambda phi: _quartic(phi[..., 0]), hessian=lambda phi: _quartic_curvature(phi)[..., None])
        moments = gibbs_exact_moments(model)
        assert moments.variance_of([1.0]) <= moments.bl_rhs([1.0])

    def test_bl_rhs_needs_hessian(self):
        moments = gibbs_exact_moments(GibbsModel(lambda phi: 0.5 * phi[..., 0] ** 2))
        with pytest.raises(ParameterError):
            moments.bl_rhs([1.0])

    def test_dimension_limit(self):
        with pytest.raises(ParameterError):
            GibbsModel(lambda phi: phi.sum(axis=-1), dim=3)


@pytest.mark.unit
class TestOneSiteInequalities:
    def test_exponential_check_gaussian(self):
        model = GibbsModel(lambda phi: phi[..., 0] ** 2, hessian=lambda phi: np.full((*phi.shape[:-1], 1, 1), 2.0))
        check = bl_exponential_check(model, np.array([0.5]))
        assert check.bound == pytest.approx(0.0625)
        assert check.log_moment == pytest.approx(0.0625, rel=1e-8)

    def test_exponential_check_convex(self):
        model = GibbsModel(lambda phi: _quartic(phi[..., 0]), hessian=lambda phi: _quartic_curvature(phi)[..., None])
        check = bl_exponential_check(model, np.array([0.8]))
        assert check.log_moment <= check.bound

    def test_convolution_closed_form(self):
        phi = np.array([-1.0, 0.0, 0.5, 2.0])
        c, variance = 1.5, 0.5
        values = convolution_oracle(lambda x: 0.5 * c * x**2, variance, phi)
        expected = 0.5 * c * phi**2 / (1 + c * variance) + 0.5 * math.log(1 + c * variance)
        np.testing.assert_allclose(values, expected, rtol=1e-9)

    def test_helffer_sjostrand_ornstein_uhlenbeck(self):
        covariance = helffer_sjostrand_covariance(
            lambda x: x**2, lambda x: np.full_like(x, 2.0), np.ones_like, np.ones_like
        )
        assert covariance == pytest.approx(0.5, rel=1e-8)

    def test_helffer_sjostrand_matches_variance(self):
        covariance = helffer_sjostrand_covariance(_quartic, _quartic_curvature, np.ones_like, np.ones_like)
        variance = gibbs_exact_moments(GibbsModel(lambda phi: _quartic(phi[..., 0]))).covariance[0, 0]
        assert covariance == pytest.approx(variance, rel=1e-4)

    def test_brascamp_lieb_bound(self):
        bound = brascamp_lieb_bound(_quartic, _quartic_curvature, np.ones_like)
        variance = gibbs_exact_moments(GibbsModel(lambda phi: _quartic(phi[..., 0]))).covariance[0, 0]
        assert variance <= bound <= 1.0
        assert brascamp_lieb_bound(lambda x: x**2, lambda x: np.full_like(x, 2.0), np.ones_like) == pytest.approx(0.5)

    def test_brascamp_lieb_needs_convexity(self):
        with pytest.raises(ParameterError):
            brascamp_lieb_bound(lambda x: 0.25 * x**4 - 0.5 * x**2, lambda x: 3 * x**2 - 1, np.ones_like)


@pytest.mark.slow
class TestSampledInequalities:
    def test_brascamp_lieb_on_random_convex_models(self, rng):
        violations = []
        for trial in range(50):
            dim = 1 + trial % 2
            root = rng.normal(size=(dim, dim))
            precision = root @ root.T + 0.2 * np.eye(dim)
            g = rng.uniform(0.05, 1.0)
            a = rng.normal(size=dim)
            samples = _convex_samples(rng, precision, g, 20_000)
            hessians = np.repeat(precision[None], len(samples), axis=0)
            diagonal = np.arange(dim)
            hessians[:, diagonal, diagonal] += 3.0 * g * samples**2
            solved = np.linalg.solve(hessians, np.broadcast_to(a, samples.shape)[..., None])[..., 0]
            projection = samples @ a
            excess = (projection - projection.mean()) ** 2 - solved @ a
            if excess.mean() > 3 * excess.std() / math.sqrt(excess.size):
                violations.append(trial)
        assert violations == []

    @pytest.mark.parametrize(("curvature", "g"), [(0.5, 0.2), (1.0, 1.0), (2.0, 0.1)])
    def test_helffer_sjostrand_covariance(self, rng, curvature, g):
        samples = _convex_samples(rng, np.array([[curvature]]), g, 200_000)[:, 0]
        cubes = samples**3
        product = (cubes - cubes.mean()) * (samples - samples.mean())
        exact = helffer_sjostrand_covariance(
            lambda x: 0.5 * curvature * x**2 + 0.25 * g * x**4,
            lambda x: curvature + 3.0 * g * x**2,
            lambda x: 3.0 * x**2,
            np.ones_like,
        )
        assert abs(product.mean() - exact) <= 3 * product.std() / math.sqrt(samples.size)
