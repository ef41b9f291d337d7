"""Panel simulation with known ground truth.

Shocks are i.i.d. standard normal, the common component is the causal
filter output, and the idiosyncratic part follows per-series AR(1)
recursions with optional one-lag neighbour coupling of the innovations.
A generous burn-in replaces the model's infinite past.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .core import ConfigError, GdfmSpec, IdioSpec, MatrixPolynomial, Panel, ShockSeries, SpecError, scalar_poly


@dataclass(frozen=True)
class SimulatedPanel:
    """Observed panel plus the truth that generated it: y = chi + xi."""

    y: Panel
    chi: Panel
    xi: Panel
    eps: ShockSeries
    spec: GdfmSpec


def _burn_in(spec: GdfmSpec) -> int:
    return 10 * (spec.max_degree + 1) + 100


def simulate_gdfm(spec: GdfmSpec, n: int, T: int) -> SimulatedPanel:
    """Draw a panel of n series over T periods from the given process.

    Filter rows recycle cyclically when the spec lists fewer than n; the
    leading `burn_in` samples are discarded so all recursions start at
    stationarity for practical purposes.  Deterministic given the seed.
    """
    if n < 1 or T < 1:
        raise SpecError("panel dimensions must be positive")
    burn = _burn_in(spec)
    total = T + burn
    rng = np.random.default_rng(spec.seed)
    eps = rng.standard_normal((spec.q, total))

    chi = np.empty((n, total))
    cache: dict[int, np.ndarray] = {}
    for i in range(n):
        f = spec.common_filters[i % len(spec.common_filters)]
        key = i % len(spec.common_filters)
        if key not in cache:
            row = np.zeros(total)
            for lag in range(f.degree + 1):
                seg = f.coeffs[lag, 0, :] @ eps  # (total,)
                if lag:
                    row[lag:] += seg[:-lag]
                else:
                    row += seg
            cache[key] = row
        chi[i] = cache[key]

    idio = spec.idio
    if idio.sigma > 0:
        v = idio.sigma * rng.standard_normal((n, total))
        e_in = v.copy()
        if idio.coupling != 0.0 and n > 1:
            e_in[:, 1:] += idio.coupling * np.roll(v, 1, axis=0)[:, :-1]
        xi = lfilter([1.0], [1.0, -idio.ar], e_in, axis=1)
    else:
        xi = np.zeros((n, total))

    y = chi + xi
    ids = tuple(f"y{i + 1}" for i in range(n))
    return SimulatedPanel(
        y=Panel(y[:, burn:], ids),
        chi=Panel(chi[:, burn:], ids),
        xi=Panel(xi[:, burn:], ids),
        eps=ShockSeries(eps[:, burn:]),
        spec=spec,
    )


EXAMPLE_KINDS = ("eq5", "eq6", "eq7", "unit_root")


def example_filters(kind: str, n: int) -> tuple[MatrixPolynomial, ...]:
    """Named single-shock filter layouts used throughout the test battery.

    eq5: every row 1 - 3L (shared zero inside the unit circle, so the
    observed process only identifies the mirrored Wold innovations).
    eq6: first row 1 - 0.5L, the rest 1 - 3L (one causally invertible row
    pins the innovations; the remaining rows cannot be repaired).
    eq7: rows alternate 1 - 3L and 1 - 2L (no single row is causally
    invertible but stacked pairs admit the constant left inverse [-2, 3]).
    unit_root: every row 1 - L (a zero on the unit circle; recovery goes
    through cross-sectional averaging).
    """
    row_13 = scalar_poly([1.0, -3.0])
    row_12 = scalar_poly([1.0, -2.0])
    if kind == "eq5":
        rows = [row_13] * n
    elif kind == "eq6":
        rows = [scalar_poly([1.0, -0.5])] + [row_13] * (n - 1)
    elif kind == "eq7":
        rows = [row_13 if i % 2 == 0 else row_12 for i in range(n)]
    elif kind == "unit_root":
        rows = [scalar_poly([1.0, -1.0])] * n
    else:
        raise ConfigError(f"unknown example kind {kind!r}; choose from {EXAMPLE_KINDS}")
    return tuple(rows)


def example_panel(
    kind: str,
    n: int,
    T: int,
    idio_sigma: float = 0.0,
    seed: int = 0,
    idio_ar: float = 0.5,
    idio_coupling: float = 0.0,
) -> SimulatedPanel:
    """Simulate one of the named single-shock layouts; q = 1 throughout."""
    if n < 2:
        raise ConfigError("named examples need at least two series")
    spec = GdfmSpec(
        q=1,
        common_filters=example_filters(kind, n),
        idio=IdioSpec(ar=idio_ar, sigma=idio_sigma, coupling=idio_coupling),
        seed=seed,
    )
    return simulate_gdfm(spec, n, T)


def idio_spectral_sup(idio: IdioSpec) -> float:
    """Analytic upper bound for the top idiosyncratic spectral eigenvalue.

    For independent AR(1) rows with one-lag neighbour coupling of the
    innovations, mu_1(f_xi(theta)) <= sigma^2 (1+|coupling|)^2 /
    (2 pi (1-|ar|)^2) at every frequency.
    """
    return (idio.sigma ** 2) * (1 + abs(idio.coupling)) ** 2 / (
        2 * np.pi * (1 - abs(idio.ar)) ** 2)
