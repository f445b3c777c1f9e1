"""Property-based tests for the band algebra and the certificate recursion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hiergap.certificate import build_certificate, certificate_deltas, delta_exp_bound
from hiergap.lattice import (
    FieldVector,
    HierarchicalOperator,
    HierLattice,
    block_average,
    build_covariance_decomposition,
    fluctuation_projection,
    weighted_block_sum,
)
from hiergap.oracle import dense_block_sum, dense_hier_operators

LATTICE = HierLattice(L=2, N=2, d=2)
DENSE = dense_hier_operators(LATTICE)
DECOMP = build_covariance_decomposition(LATTICE, "massive", m2=0.1)

site_values = arrays(np.float64, (LATTICE.volume,), elements=st.floats(-10.0, 10.0))
band_values = arrays(np.float64, (LATTICE.N + 1,), elements=st.floats(0.01, 100.0))
small_epsilons = arrays(np.float64, (LATTICE.N + 1,), elements=st.floats(0.0, 0.9))


@pytest.mark.unit
@given(site_values, st.integers(0, LATTICE.N), st.integers(0, LATTICE.N))
def test_block_averages_compose_to_coarser(values, j, k):
    field = FieldVector(LATTICE, values)
    composed = block_average(block_average(field, j), k)
    np.testing.assert_allclose(composed.values, block_average(field, max(j, k)).values, atol=1e-12)


@pytest.mark.unit
@given(site_values)
def test_fluctuations_resolve_identity(values):
    field = FieldVector(LATTICE, values)
    total = block_average(field, LATTICE.N).values.copy()
    for j in range(1, LATTICE.N + 1):
        total += fluctuation_projection(field, j).values
    np.testing.assert_allclose(total, field.values, atol=1e-12)


@pytest.mark.unit
@given(site_values, band_values)
def test_band_operator_matches_dense(values, weights):
    operator = weighted_block_sum(LATTICE, weights)
    dense = dense_block_sum(DENSE.averages, weights)
    np.testing.assert_allclose(operator.apply_values(values.reshape(-1, 1))[:, 0], dense.matrix @ values, atol=1e-9)


@pytest.mark.unit
@given(site_values, band_values)
def test_inverse_undoes_operator(values, bands):
    operator = HierarchicalOperator(LATTICE, bands)
    field = FieldVector(LATTICE, values)
    np.testing.assert_allclose(operator.inverse().apply(operator.apply(field)).values, field.values, atol=1e-8)


@pytest.mark.unit
@given(small_epsilons, st.integers(0, LATTICE.N), st.floats(0.0, 0.09))
def test_deltas_monotone_in_each_epsilon(epsilons, index, increment):
    raised = epsilons.copy()
    raised[index] += increment
    assert np.all(certificate_deltas(raised) >= certificate_deltas(epsilons) * (1 - 1e-12))


@pytest.mark.unit
@given(arrays(np.float64, (6,), elements=st.floats(0.0, 0.25)))
def test_delta_exponential_bound(epsilons):
    assert np.all(certificate_deltas(epsilons) <= delta_exp_bound(epsilons) * (1 + 1e-12))


@pytest.mark.unit
@settings(max_examples=50)
@given(small_epsilons)
def test_certificate_bound_below_gaussian_gap(epsilons):
    gaussian = build_certificate(DECOMP, np.zeros(LATTICE.N + 1)).gap_lower_bound
    certificate = build_certificate(DECOMP, epsilons)
    assert certificate.valid
    assert 0 < certificate.gap_lower_bound <= gaussian * (1 + 1e-12)
