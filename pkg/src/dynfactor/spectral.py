"""Autocovariances, Bartlett lag-window spectral estimation, per-frequency
eigenstructure, and the eigenvalue-divergence diagnostics that separate
common from idiosyncratic variation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BandwidthError, ConfigError, Panel, ShapeError, SpectralGrid, frequency_grid


def autocov(panel: Panel, max_lag: int) -> np.ndarray:
    """Autocovariances Gamma(0..max_lag) with the PSD-safe divisor T.

    Gamma(l) = T^{-1} sum_t y_t y'_{t-l}; the negative lags follow by
    transposition.  The panel is assumed demeaned.
    """
    if max_lag < 0:
        raise ConfigError("max_lag must be non-negative")
    if max_lag >= panel.T / 4:
        raise BandwidthError(f"max_lag {max_lag} too large for T={panel.T}")
    y = panel.values
    out = np.empty((max_lag + 1, panel.n, panel.n))
    for l in range(max_lag + 1):
        out[l] = (y[:, l:] @ y[:, : panel.T - l].T) / panel.T
    return out


def spectral_density(panel: Panel, M: int = 128, B: int | None = None) -> SpectralGrid:
    """Bartlett lag-window estimate on the symmetric M-point grid.

    f(theta) = (2 pi)^{-1} sum_{|l|<=B} (1 - |l|/(B+1)) Gamma(l) e^{-i l theta};
    the triangular window with divisor-T autocovariances keeps the estimate
    PSD.  Default bandwidth is floor(sqrt(T)).
    """
    if M < 16:
        raise ConfigError("frequency grid must have at least 16 points")
    if B is None:
        B = int(np.sqrt(panel.T))
        B = min(B, (panel.T - 1) // 4)
    gam = autocov(panel, B)
    thetas = frequency_grid(M)
    w = 1.0 - np.arange(B + 1) / (B + 1.0)
    ph = np.exp(-1j * np.outer(thetas, np.arange(1, B + 1)))  # (M, B)
    mats = np.broadcast_to(w[0] * gam[0], (M, panel.n, panel.n)).astype(complex).copy()
    if B >= 1:
        pos = np.einsum("ml,lij->mij", ph, w[1:, None, None] * gam[1:])
        mats += pos + pos.conj().transpose(0, 2, 1)
    mats /= 2.0 * np.pi
    return SpectralGrid(freqs=thetas, mats=mats)


@dataclass(frozen=True)
class DynamicEigen:
    """Per-frequency eigenvalues (descending) and orthonormal eigenvectors."""

    freqs: np.ndarray
    values: np.ndarray   # (M, k)
    vectors: np.ndarray  # (M, n, k)


def dynamic_eigen(grid: SpectralGrid, k: int) -> DynamicEigen:
    """Top-k Hermitian eigendecomposition at every grid frequency."""
    if not 1 <= k <= grid.n:
        raise ShapeError(f"need 1 <= k <= {grid.n}")
    vals, vecs = np.linalg.eigh(grid.mats)
    order = np.argsort(vals, axis=1)[:, ::-1]
    vals = np.take_along_axis(vals, order, axis=1)[:, :k]
    vecs = np.take_along_axis(vecs, order[:, None, :], axis=2)[:, :, :k]
    return DynamicEigen(freqs=grid.freqs, values=vals, vectors=vecs)


@dataclass(frozen=True)
class DivergenceReport:
    """Eigenvalue growth against the cross-section size.

    slopes[i] is the least-squares slope of the median-over-frequency
    (i+1)-th eigenvalue against n, for i = 0..q.
    """

    ns: tuple[int, ...]
    medians: np.ndarray  # (len(ns), q+1)
    slopes: np.ndarray   # (q+1,)
    q: int
    has_factor_structure: bool


def divergence_diagnostic(
    panels: list[Panel],
    q: int,
    M: int = 128,
    B: int | None = None,
    rel_threshold: float = 0.1,
) -> DivergenceReport:
    """Fit eigenvalue-vs-n slopes and flag a q-factor structure.

    The flag requires the first q slopes to exceed `rel_threshold` times
    the first slope, the (q+1)-th to stay below it, and the first
    eigenvalue to grow materially over the observed range (so a flat,
    purely idiosyncratic family is not flagged).
    """
    if len(panels) < 3:
        raise ConfigError("need at least 3 nested panel sizes")
    ns = [p.n for p in panels]
    if sorted(ns) != ns or len(set(ns)) != len(ns):
        raise ConfigError("panels must come in strictly increasing n")
    if q + 1 > min(ns):
        raise ConfigError("q+1 exceeds the smallest panel")
    med = np.empty((len(panels), q + 1))
    for i, p in enumerate(panels):
        grid = spectral_density(p, M=M, B=B)
        eig = dynamic_eigen(grid, q + 1)
        med[i] = np.median(eig.values, axis=0)
    narr = np.asarray(ns, dtype=float)
    x = np.column_stack([np.ones_like(narr), narr])
    coef, *_ = np.linalg.lstsq(x, med, rcond=None)
    slopes = coef[1]
    grows = slopes[0] * (narr[-1] - narr[0]) > max(med[0, 0], 1e-12)
    flag = bool(
        grows
        and np.all(slopes[:q] > rel_threshold * slopes[0])
        and slopes[q] < rel_threshold * slopes[0]
    )
    return DivergenceReport(
        ns=tuple(ns), medians=med, slopes=slopes, q=q, has_factor_structure=flag)


def static_cov_eigen(panel: Panel, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Top-r eigenpairs of the contemporaneous second-moment matrix.

    Returns (P, M): P has r orthonormal rows (eigenvectors), M the
    corresponding eigenvalues in descending order.
    """
    if not 1 <= r <= panel.n:
        raise ShapeError(f"need 1 <= r <= {panel.n}")
    gamma0 = autocov(panel, 0)[0]
    gamma0 = 0.5 * (gamma0 + gamma0.T)
    vals, vecs = np.linalg.eigh(gamma0)
    order = np.argsort(vals)[::-1][:r]
    return vecs[:, order].T.copy(), vals[order].copy()
