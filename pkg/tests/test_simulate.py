"""Tests for panel simulation against analytic moments and layout contracts."""

import numpy as np
import pytest

from dynfactor.core import ConfigError, GdfmSpec, IdioSpec, scalar_poly
from dynfactor.simulate import example_panel, idio_spectral_sup, simulate_gdfm
from dynfactor.spectral import spectral_density


def test_zero_filters_give_pure_idiosyncratic_panel():
    spec = GdfmSpec(q=1, common_filters=(scalar_poly([0.0]),),
                    idio=IdioSpec(ar=0.3, sigma=1.0), seed=1)
    sim = simulate_gdfm(spec, n=4, T=500)
    assert np.all(sim.chi.values == 0.0)
    assert np.array_equal(sim.y.values, sim.xi.values)


def test_ma1_variance_matches_analytic():
    spec = GdfmSpec(q=1, common_filters=(scalar_poly([1.0, -0.5]),),
                    idio=IdioSpec(sigma=0.0), seed=2)
    sim = simulate_gdfm(spec, n=1, T=10_000)
    v = sim.chi.values[0].var()
    assert abs(v - 1.25) < 0.05 * 1.25


def test_determinism_given_seed():
    from dynfactor.core import MatrixPolynomial

    filters = (
        MatrixPolynomial(np.array([[[1.0, 0.0]], [[0.3, -0.2]]])),
        MatrixPolynomial(np.array([[[0.0, 1.0]], [[0.1, 0.5]]])),
    )
    spec = GdfmSpec(q=2, common_filters=filters, idio=IdioSpec(ar=0.4, sigma=0.7),
                    seed=3)
    a = simulate_gdfm(spec, n=5, T=300)
    b = simulate_gdfm(spec, n=5, T=300)
    assert np.array_equal(a.y.values, b.y.values)
    assert np.array_equal(a.eps.values, b.eps.values)


def test_decomposition_identity():
    sim = example_panel("eq7", n=6, T=400, idio_sigma=0.5, seed=4)
    assert np.max(np.abs(sim.y.values - sim.chi.values - sim.xi.values)) < 1e-12


def test_eq7_constant_inverse_recovers_shocks_exactly():
    sim = example_panel("eq7", n=4, T=1000, idio_sigma=0.0, seed=5)
    est = -2.0 * sim.y.values[0] + 3.0 * sim.y.values[1]
    assert np.max(np.abs(est - sim.eps.values[0])) < 1e-12


def test_eq5_rows_identical():
    sim = example_panel("eq5", n=3, T=200, idio_sigma=0.0, seed=6)
    assert np.array_equal(sim.y.values[0], sim.y.values[1])
    assert np.array_equal(sim.y.values[0], sim.y.values[2])


def test_eq6_layout():
    sim = example_panel("eq6", n=3, T=50, idio_sigma=0.0, seed=6)
    f = sim.spec.common_filters
    assert np.allclose(f[0].scalar_coeffs(), [1.0, -0.5])
    assert np.allclose(f[1].scalar_coeffs(), [1.0, -3.0])


def test_unknown_kind():
    with pytest.raises(ConfigError):
        example_panel("eq99", n=4, T=100)


def test_unit_root_average_spectrum_vanishes_at_zero_with_n():
    # the cross-sectional average converges to (1-L)eps, whose density
    # vanishes at frequency zero; idiosyncratic leakage scales like 1/n
    from dynfactor.core import Panel

    at_zero = {}
    for n in (10, 50, 200):
        sim = example_panel("unit_root", n=n, T=20_000, idio_sigma=1.0, seed=7)
        ybar = Panel(sim.y.values.mean(axis=0, keepdims=True))
        grid = spectral_density(ybar, M=64, B=100)
        idx = int(np.argmin(np.abs(grid.freqs)))
        at_zero[n] = grid.mats[idx, 0, 0].real
        peak = float(np.max(grid.mats[:, 0, 0].real))
        assert at_zero[n] < 0.1 * peak
    assert at_zero[200] < at_zero[10]


def test_shock_idio_orthogonality():
    sim = example_panel("eq7", n=10, T=10_000, idio_sigma=1.0, seed=8)
    lim = 3.0 / np.sqrt(sim.y.T)
    for i in range(0, 10, 3):
        c = np.mean(sim.eps.values[0] * sim.xi.values[i])
        assert abs(c) < lim * sim.xi.values[i].std()


def test_stationarity_smoke():
    sim = example_panel("eq7", n=4, T=10_000, idio_sigma=0.8, seed=9)
    half = sim.y.T // 2
    for i in range(4):
        v1 = sim.y.values[i, :half].var()
        v2 = sim.y.values[i, half:].var()
        assert abs(v1 - v2) < 0.2 * max(v1, v2)


def test_filter_rows_recycle():
    spec = GdfmSpec(q=1, common_filters=(scalar_poly([1.0, -3.0]),
                                         scalar_poly([1.0, -2.0])), seed=10)
    sim = simulate_gdfm(spec, n=5, T=100)
    assert np.array_equal(sim.chi.values[0], sim.chi.values[2])
    assert np.array_equal(sim.chi.values[1], sim.chi.values[3])
    assert not np.array_equal(sim.chi.values[0], sim.chi.values[1])


def test_idio_spectral_sup_dominates_estimate():
    spec = GdfmSpec(q=1, common_filters=(scalar_poly([0.0]),),
                    idio=IdioSpec(ar=0.5, sigma=0.5, coupling=0.2), seed=11)
    sim = simulate_gdfm(spec, n=8, T=20_000)
    grid = spectral_density(sim.xi, M=64)
    top = float(np.max(np.linalg.eigvalsh(grid.mats)))
    assert top < 1.5 * idio_spectral_sup(spec.idio)
