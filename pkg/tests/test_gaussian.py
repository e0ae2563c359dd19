import math

import numpy as np
import pytest

from loopgibbs.gaussian import (
    CovarianceSpectrum,
    GaussianSampler,
    characteristic_function,
    classical_sigma,
    sample_classical,
    stream_for,
    trace_distance,
    trace_distance_bound,
    trace_tail_estimate,
)
from loopgibbs.loops import ModeBasis, TemperatureLoop


def closed_form(m, beta, n_sites=1):
    x = beta / (2.0 * math.sqrt(m))
    return n_sites * (x / math.tanh(x) - 1.0)


@pytest.mark.parametrize("m", [1.0, 10.0, 100.0, 1e4])
def test_trace_distance_closed_form(m):
    beta = 2.0 * math.pi
    assert trace_distance(m, beta) == pytest.approx(closed_form(m, beta), abs=1e-12)


@pytest.mark.parametrize("m", [1.0, 10.0, 100.0, 1e4])
def test_partial_sum_plus_tail_matches_closed_form(m):
    beta = 2.0 * math.pi
    partial = trace_distance(m, beta, n_max=1_000_000)
    tail = trace_tail_estimate(m, beta, n_max=1_000_000)
    assert partial + tail == pytest.approx(closed_form(m, beta), abs=1e-8)


@pytest.mark.parametrize("m", [0.5, 1.0, 10.0, 1e4])
def test_trace_distance_bound(m):
    beta = 2.0 * math.pi
    assert trace_distance(m, beta) <= trace_distance_bound(m, beta)
    assert trace_distance_bound(m, beta) == pytest.approx(beta**2 / (12.0 * m))


def test_trace_distance_large_m_asymptote():
    # m * D(m) -> beta^2 / 12
    beta = 2.0
    for m in (1e6, 1e8):
        assert m * trace_distance(m, beta) == pytest.approx(beta**2 / 12.0, rel=1e-3)


def test_trace_distance_vanishes_at_infinite_mass():
    assert trace_distance(math.inf, 2.0) == 0.0
    assert trace_distance_bound(math.inf, 2.0) == 0.0


def test_trace_distance_scales_with_sites():
    assert trace_distance(2.0, 3.0, n_sites=5) == pytest.approx(5.0 * trace_distance(2.0, 3.0))


def test_spectrum_eigenvalues():
    basis = ModeBasis(beta=2.0 * math.pi, n_max=2)
    spec = CovarianceSpectrum(basis, m=2.0)
    # q_n = 2 pi n / beta = n here, so lambda = 1/(2 n^2 + 1)
    np.testing.assert_allclose(
        spec.eigenvalues, [1.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 9.0, 1.0 / 9.0]
    )
    assert spec.eigenvalues[0] == 1.0  # zero mode untouched by the mass


def test_quasiclassical_spectrum_is_rank_one():
    basis = ModeBasis(beta=2.0, n_max=3)
    spec = CovarianceSpectrum(basis, m=math.inf)
    assert spec.is_quasiclassical
    np.testing.assert_array_equal(spec.eigenvalues, [1, 0, 0, 0, 0, 0, 0])


def test_spectrum_rejects_bad_mass():
    basis = ModeBasis(beta=2.0, n_max=1)
    with pytest.raises(ValueError):
        CovarianceSpectrum(basis, m=0.0)
    with pytest.raises(ValueError):
        CovarianceSpectrum(basis, m=-1.0)


def test_tail_mass_matches_refined_truncation():
    basis = ModeBasis(beta=2.0, n_max=4)
    spec = CovarianceSpectrum(basis, m=3.0)
    # tail beyond n_max equals the eigenvalue sum from n_max+1 to a huge cutoff
    q = 2.0 * math.pi * np.arange(5, 2_000_001) / basis.beta
    direct = 2.0 * np.sum(1.0 / (3.0 * q * q + 1.0))
    direct += trace_tail_estimate(3.0, basis.beta, 2_000_000)  # remainder past the cutoff
    assert spec.tail_mass() == pytest.approx(direct, abs=1e-9)
    assert CovarianceSpectrum(basis, m=math.inf).tail_mass() == 0.0


def test_sampler_moments_within_three_sigma():
    basis = ModeBasis(beta=2.0 * math.pi, n_max=1)
    spec = CovarianceSpectrum(basis, m=2.0)
    n = 100_000
    draws = GaussianSampler(spec, stream_for(101, 0)).sample_batch(n)[:, 0, :]
    for idx, lam in enumerate(spec.eigenvalues):
        v = draws[:, idx].var(ddof=1)
        se = lam * math.sqrt(2.0 / (n - 1))  # chi-square variance of the sample variance
        assert abs(v - lam) < 3.0 * se
        assert abs(draws[:, idx].mean()) < 3.0 * math.sqrt(lam / n)


def test_quasiclassical_sampler_support_is_exact():
    basis = ModeBasis(beta=2.0, n_max=3)
    spec = CovarianceSpectrum(basis, m=math.inf)
    draws = GaussianSampler(spec, stream_for(5, 0)).sample_batch(1000, n_sites=2)
    assert np.all(draws[:, :, 1:] == 0.0)  # exactly zero, not merely small
    assert np.all(draws[:, :, 0] != 0.0)


def test_characteristic_function_against_monte_carlo():
    basis = ModeBasis(beta=2.0, n_max=1)
    spec = CovarianceSpectrum(basis, m=1.5)
    phi = TemperatureLoop(basis, np.array([0.3, -0.7, 0.4]))
    exact = characteristic_function(spec, phi)
    draws = GaussianSampler(spec, stream_for(42, 0)).sample_batch(200_000)[:, 0, :]
    mc = np.cos(draws @ phi.coeffs)  # imaginary part vanishes by symmetry
    se = mc.std(ddof=1) / math.sqrt(len(mc))
    assert abs(mc.mean() - exact) < 3.0 * se


def test_characteristic_function_validates_shape():
    basis = ModeBasis(beta=2.0, n_max=1)
    spec = CovarianceSpectrum(basis, m=1.0)
    with pytest.raises(ValueError):
        characteristic_function(spec, np.array([1.0, 2.0]))


def test_classical_reference_scale():
    assert classical_sigma(4.0) == 0.5
    draws = sample_classical(4.0, stream_for(9, 0), size=100_000)
    assert abs(draws.var(ddof=1) - 0.25) < 3.0 * 0.25 * math.sqrt(2.0 / 99_999)
    with pytest.raises(ValueError):
        classical_sigma(0.0)


def test_stream_for_is_reproducible_and_disjoint():
    a1 = stream_for(7, 3, 1).standard_normal(8)
    a2 = stream_for(7, 3, 1).standard_normal(8)
    np.testing.assert_array_equal(a1, a2)
    b = stream_for(7, 4, 1).standard_normal(8)
    c = stream_for(7, 3, 2).standard_normal(8)
    d = stream_for(8, 3, 1).standard_normal(8)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
    assert not np.array_equal(a1, d)
