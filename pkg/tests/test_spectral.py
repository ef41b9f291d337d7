"""Tests for autocovariance, lag-window spectra and eigen diagnostics."""

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from dynfactor.core import (
    BandwidthError,
    GdfmSpec,
    IdioSpec,
    MatrixPolynomial,
    Panel,
    SpectralGrid,
    frequency_grid,
    scalar_poly,
)
from dynfactor.simulate import example_panel, simulate_gdfm
from dynfactor.spectral import (
    autocov,
    divergence_diagnostic,
    dynamic_eigen,
    spectral_density,
    static_cov_eigen,
)


def ar1_panel(phi, sigma, T, seed=0):
    rng = np.random.default_rng(seed)
    e = sigma * rng.standard_normal(T + 200)
    x = np.empty_like(e)
    x[0] = e[0]
    for t in range(1, len(e)):
        x[t] = phi * x[t - 1] + e[t]
    return Panel(x[200:][None, :])


# --------------------------------------------------------------------------
# autocovariance

def test_autocov_white_noise_levels():
    rng = np.random.default_rng(1)
    p = Panel(rng.standard_normal((1, 100_000)))
    g = autocov(p, 5)
    assert 0.98 <= g[0, 0, 0] <= 1.02
    assert abs(g[5, 0, 0]) < 0.02


def test_autocov_ar1_ratio():
    p = ar1_panel(0.5, 1.0, 100_000, seed=2)
    g = autocov(p, 5)
    for l in range(1, 6):
        assert abs(g[l, 0, 0] / g[0, 0, 0] - 0.5 ** l) < 0.05


def test_autocov_matches_brute_force():
    rng = np.random.default_rng(3)
    p = Panel(rng.standard_normal((3, 200)))
    g = autocov(p, 4)
    y = p.values
    for l in range(5):
        # oracle: direct double loop over time and entries
        ref = np.zeros((3, 3))
        for t in range(l, 200):
            ref += np.outer(y[:, t], y[:, t - l])
        ref /= 200
        assert np.max(np.abs(g[l] - ref)) < 1e-12


def test_autocov_bandwidth_guard():
    p = Panel(np.zeros((1, 40)))
    with pytest.raises(BandwidthError):
        autocov(p, 10)


# --------------------------------------------------------------------------
# spectral density

def test_spectral_density_white_noise_flat():
    rng = np.random.default_rng(4)
    p = Panel(rng.standard_normal((1, 100_000)))
    grid = spectral_density(p, M=64, B=50)
    target = 1.0 / (2.0 * np.pi)
    assert np.max(np.abs(grid.mats[:, 0, 0].real - target)) < 0.05


def test_spectral_density_differenced_noise_dips_at_zero():
    rng = np.random.default_rng(5)
    eps = rng.standard_normal(100_001)
    x = eps[1:] - eps[:-1]
    grid = spectral_density(Panel(x[None, :]), M=64, B=50)
    vals = grid.mats[:, 0, 0].real
    idx = int(np.argmin(np.abs(grid.freqs)))
    assert vals[idx] < 0.02 * float(np.max(vals))


def test_spectral_density_rank_one_for_common_only_panel():
    sim = example_panel("eq5", n=3, T=50_000, idio_sigma=0.0, seed=6)
    grid = spectral_density(sim.y, M=32, B=60)
    eig = dynamic_eigen(grid, 2)
    ratio = eig.values[:, 1] / np.maximum(eig.values[:, 0], 1e-300)
    assert np.max(ratio) < 0.05


def test_spectral_density_psd_and_nested():
    rng = np.random.default_rng(7)
    p = Panel(rng.standard_normal((4, 3000)))
    grid = spectral_density(p, M=32, B=40)
    assert float(np.min(np.linalg.eigvalsh(grid.mats))) >= -1e-8
    sub = spectral_density(Panel(p.values[:2]), M=32, B=40)
    assert np.allclose(grid.submatrix(2).mats, sub.mats, atol=1e-14)


def test_eigenvalue_sum_equals_trace():
    rng = np.random.default_rng(8)
    p = Panel(rng.standard_normal((5, 4000)))
    grid = spectral_density(p, M=32, B=30)
    eig = dynamic_eigen(grid, 5)
    traces = np.trace(grid.mats, axis1=1, axis2=2).real
    assert np.max(np.abs(eig.values.sum(axis=1) - traces)) < 1e-8


# --------------------------------------------------------------------------
# dynamic eigenstructure

def test_dynamic_eigen_diagonal_grid():
    f = frequency_grid(16)
    mats = np.tile(np.diag([2.0, 1.0]).astype(complex) / (2 * np.pi), (16, 1, 1))
    eig = dynamic_eigen(SpectralGrid(f, mats), 2)
    assert np.allclose(eig.values[:, 0], 2 / (2 * np.pi))
    assert np.allclose(eig.values[:, 1], 1 / (2 * np.pi))


def test_dynamic_eigen_rank_one_analytic():
    # exact density of the shared-row layout: mu_1 = n |1-3e^{-i t}|^2 / (2 pi)
    n, m = 5, 32
    thetas = frequency_grid(m)
    row = scalar_poly([1.0, -3.0])
    k = np.tile(row.eval_circle(thetas), (1, n, 1))  # (m, n, 1)
    mats = np.einsum("mik,mjk->mij", k, k.conj()) / (2 * np.pi)
    eig = dynamic_eigen(SpectralGrid(thetas, mats), 2)
    expect = n * np.abs(1 - 3 * np.exp(-1j * thetas)) ** 2 / (2 * np.pi)
    assert np.max(np.abs(eig.values[:, 0] - expect)) < 1e-10
    assert np.max(np.abs(eig.values[:, 1])) < 1e-10


def test_dynamic_eigen_orthonormal_vectors():
    rng = np.random.default_rng(9)
    p = Panel(rng.standard_normal((4, 2000)))
    grid = spectral_density(p, M=16, B=20)
    eig = dynamic_eigen(grid, 3)
    for i in range(eig.vectors.shape[0]):
        v = eig.vectors[i]
        assert np.max(np.abs(v.conj().T @ v - np.eye(3))) < 1e-8


# --------------------------------------------------------------------------
# divergence diagnostics

def q2_spec(seed=0, sigma=0.5):
    filters = (
        MatrixPolynomial(np.array([[[1.0, 0.0]], [[-0.5, 0.0]]])),
        MatrixPolynomial(np.array([[[0.0, 1.0]], [[0.0, -0.5]]])),
    )
    return GdfmSpec(q=2, common_filters=filters,
                    idio=IdioSpec(ar=0.3, sigma=sigma), seed=seed)


def test_divergence_flags_single_factor():
    panels = [example_panel("eq7", n=n, T=4000, idio_sigma=0.5, seed=10).y
              for n in (10, 40, 160)]
    rep = divergence_diagnostic(panels, q=1, M=32)
    assert rep.has_factor_structure
    assert rep.slopes[0] > 0
    assert rep.slopes[1] < 0.1 * rep.slopes[0]


def test_divergence_flags_two_factors():
    panels = [simulate_gdfm(q2_spec(seed=11), n=n, T=4000).y for n in (10, 40, 160)]
    rep = divergence_diagnostic(panels, q=2, M=32)
    assert rep.has_factor_structure
    assert rep.slopes[1] > 0.1 * rep.slopes[0]
    assert rep.slopes[2] < 0.1 * rep.slopes[0]


def test_divergence_rejects_pure_idiosyncratic():
    spec = GdfmSpec(q=1, common_filters=(scalar_poly([0.0]),),
                    idio=IdioSpec(ar=0.3, sigma=1.0), seed=12)
    panels = [simulate_gdfm(spec, n=n, T=4000).y for n in (10, 40, 160)]
    rep = divergence_diagnostic(panels, q=1, M=32)
    assert not rep.has_factor_structure


def test_divergence_needs_three_sizes():
    from dynfactor.core import ConfigError

    panels = [example_panel("eq7", n=n, T=500, seed=1).y for n in (10, 20)]
    with pytest.raises(ConfigError):
        divergence_diagnostic(panels, q=1)


# --------------------------------------------------------------------------
# static eigenstructure

def test_static_cov_eigen_diagonal():
    rng = np.random.default_rng(13)
    x = np.vstack([2.0 * rng.standard_normal(120_000),
                   1.0 * rng.standard_normal(120_000)])
    p, m = static_cov_eigen(Panel(x), 1)
    assert abs(m[0] - 4.0) < 0.1
    assert abs(abs(p[0, 0]) - 1.0) < 0.05 and abs(p[0, 1]) < 0.05


def test_static_cov_eigen_degenerate_spectrum():
    rng = np.random.default_rng(14)
    x = rng.standard_normal((2, 200_000))
    p, m = static_cov_eigen(Panel(x), 2)
    assert np.allclose(m, [1.0, 1.0], atol=0.05)
    assert np.max(np.abs(p @ p.T - np.eye(2))) < 1e-10


def test_static_cov_eigen_full_reconstruction():
    rng = np.random.default_rng(15)
    a = rng.standard_normal((5, 5))
    x = a @ rng.standard_normal((5, 2000))
    panel = Panel(x)
    p, m = static_cov_eigen(panel, 5)
    gamma = autocov(panel, 0)[0]
    recon = p.T @ np.diag(m) @ p
    assert np.max(np.abs(recon - gamma)) < 1e-8


# --------------------------------------------------------------------------
# eigenvalue inequality used by the blocking argument

@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 6), st.integers(1, 4))
def test_weyl_type_inequality(seed, size, q):
    if q > size:
        q = size
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((size, size))
    b = rng.standard_normal((size, size))
    A = a @ a.T
    B = b @ b.T
    mu_sum = np.linalg.eigvalsh(A + B)[::-1]
    assert mu_sum[q - 1] <= np.linalg.eigvalsh(A)[-1] + \
        np.linalg.eigvalsh(B)[::-1][q - 1] + 1e-10
