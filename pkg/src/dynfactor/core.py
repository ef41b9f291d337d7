"""Core value types and errors shared by every module.

All containers are immutable after construction (backing arrays are marked
read-only), so they can be shared freely across threads.  Validation happens
in the constructors; algorithms live elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


# --------------------------------------------------------------------------
# errors

class DynFactorError(Exception):
    """Base class for all library errors."""


class DegenerateInput(DynFactorError):
    pass


class ShapeError(DynFactorError):
    pass


class ZeroPolynomial(DynFactorError):
    pass


class OnCircleZero(DynFactorError):
    pass


class NotMinimumPhase(DynFactorError):
    pass


class NotCausallyInvertible(DynFactorError):
    pass


class RankDeficient(DynFactorError):
    pass


class PreconditionError(DynFactorError):
    pass


class SpecError(DynFactorError):
    pass


class ConfigError(DynFactorError):
    pass


class BandwidthError(DynFactorError):
    pass


class NoCommonComponent(DynFactorError):
    pass


class RankDeficientPanel(DynFactorError):
    pass


class Irreparable(DynFactorError):
    pass


class RoutingError(DynFactorError):
    pass


class DegeneratePanel(DynFactorError):
    pass


class Unsupported(DynFactorError):
    pass


class ConditioningError(DynFactorError):
    pass


class BoundUndefined(DynFactorError):
    pass


# --------------------------------------------------------------------------
# helpers

def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def frequency_grid(m: int = 128) -> np.ndarray:
    """Equally spaced angles theta_j = -pi + 2*pi*j/m, j = 1..m.

    The grid lies in (-pi, pi], is symmetric about 0 modulo 2*pi, and
    contains theta = 0 whenever m is even.
    """
    if m < 1:
        raise ConfigError("grid size must be positive")
    return -np.pi + 2.0 * np.pi * np.arange(1, m + 1) / m


# --------------------------------------------------------------------------
# types

@dataclass(frozen=True, eq=False)
class Panel:
    """n x T observation array with series labels and a time origin.

    Rows are series, columns are time.  Entries must be finite; zero mean is
    *not* enforced (see :func:`demean`).
    """

    values: np.ndarray
    series_ids: tuple[str, ...] = ()
    t0: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeError(f"panel must be a 2-d array with n,T >= 1, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DegenerateInput("panel contains non-finite entries")
        ids = tuple(self.series_ids) if self.series_ids else tuple(
            f"y{i + 1}" for i in range(v.shape[0]))
        if len(ids) != v.shape[0]:
            raise ShapeError("series_ids length does not match row count")
        object.__setattr__(self, "values", _freeze(v))
        object.__setattr__(self, "series_ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def rows(self, idx: Sequence[int]) -> "Panel":
        """Sub-panel of the given rows, preserving labels and origin."""
        idx = list(idx)
        return Panel(self.values[idx], tuple(self.series_ids[i] for i in idx), self.t0)


def demean(panel: Panel) -> Panel:
    """Return a copy of the panel with each row centered at zero mean."""
    if panel.T < 2:
        raise DegenerateInput("demeaning needs at least two observations")
    v = panel.values - panel.values.mean(axis=1, keepdims=True)
    return Panel(v, panel.series_ids, panel.t0)


@dataclass(frozen=True, eq=False)
class MatrixPolynomial:
    """Finite real matrix polynomial in the lag operator.

    ``coeffs`` stacks the lag coefficients as an array of shape
    (degree+1, rows, cols); evaluation at a complex point z is
    ``sum_j coeffs[j] * z**j``.  Trailing all-zero coefficient matrices are
    trimmed so the degree is canonical; the zero polynomial keeps a single
    zero coefficient.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 1:  # scalar polynomial given as a flat coefficient list
            c = c.reshape(-1, 1, 1)
        if c.ndim != 3 or c.shape[0] < 1:
            raise ShapeError(f"coeffs must have shape (p+1, r, c), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise DegenerateInput("polynomial coefficients must be finite")
        last = c.shape[0]
        while last > 1 and not np.any(c[last - 1]):
            last -= 1
        object.__setattr__(self, "coeffs", _freeze(c[:last].copy()))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def rows(self) -> int:
        return self.coeffs.shape[1]

    @property
    def cols(self) -> int:
        return self.coeffs.shape[2]

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    @property
    def is_scalar(self) -> bool:
        return self.rows == 1 and self.cols == 1

    def scalar_coeffs(self) -> np.ndarray:
        if not self.is_scalar:
            raise ShapeError("not a scalar polynomial")
        return self.coeffs[:, 0, 0]

    def __call__(self, z: complex) -> np.ndarray:
        """Evaluate at a complex point (Horner), returns an (r, c) array."""
        acc = np.zeros((self.rows, self.cols), dtype=complex)
        for k in self.coeffs[::-1]:
            acc = acc * z + k
        return acc

    def eval_circle(self, thetas: np.ndarray) -> np.ndarray:
        """Evaluate k(e^{-i theta}) on a grid; returns (len(thetas), r, c)."""
        thetas = np.asarray(thetas, dtype=float)
        lags = np.arange(self.coeffs.shape[0])
        ph = np.exp(-1j * np.outer(thetas, lags))  # (M, p+1)
        return np.einsum("ml,lrc->mrc", ph, self.coeffs)

    def __add__(self, other: "MatrixPolynomial") -> "MatrixPolynomial":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ShapeError("dimension mismatch in polynomial sum")
        p = max(self.coeffs.shape[0], other.coeffs.shape[0])
        acc = np.zeros((p, self.rows, self.cols))
        acc[: self.coeffs.shape[0]] += self.coeffs
        acc[: other.coeffs.shape[0]] += other.coeffs
        return MatrixPolynomial(acc)

    def scale(self, a: float) -> "MatrixPolynomial":
        return MatrixPolynomial(a * self.coeffs)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MatrixPolynomial):
            return NotImplemented
        return (self.coeffs.shape == other.coeffs.shape
                and bool(np.array_equal(self.coeffs, other.coeffs)))

    def __hash__(self):
        return hash((self.coeffs.shape, self.coeffs.tobytes()))

    def __repr__(self):
        return (f"MatrixPolynomial(deg={self.degree}, "
                f"shape={self.rows}x{self.cols})")


def scalar_poly(coeffs: Sequence[float]) -> MatrixPolynomial:
    """1x1 polynomial from a flat coefficient list, lowest order first."""
    return MatrixPolynomial(np.asarray(coeffs, dtype=float).reshape(-1, 1, 1))


HERMITIAN_TOL = 1e-10
PSD_TOL = -1e-8


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Hermitian PSD matrices on a symmetric frequency grid in (-pi, pi].

    Units follow f(theta) = (2*pi)^{-1} sum_l Gamma(l) e^{-i l theta}, so
    scalar unit-variance white noise has the flat density 1/(2*pi).
    Matrices are Hermitian-symmetrized on construction and must be PSD up
    to a -1e-8 tolerance on the smallest eigenvalue.
    """

    freqs: np.ndarray
    mats: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        m = np.asarray(self.mats, dtype=complex)
        if f.ndim != 1 or m.ndim != 3 or m.shape[0] != f.shape[0] or m.shape[1] != m.shape[2]:
            raise ShapeError("freqs must be (M,), mats must be (M, n, n)")
        if np.any(np.diff(f) <= 0):
            raise ConfigError("frequencies must be strictly increasing")
        asym = np.max(np.abs(m - m.conj().transpose(0, 2, 1))) if m.size else 0.0
        if asym > HERMITIAN_TOL:
            raise DegenerateInput(f"matrices deviate from Hermitian by {asym:.2e}")
        m = 0.5 * (m + m.conj().transpose(0, 2, 1))
        min_eig = float(np.min(np.linalg.eigvalsh(m)))
        if min_eig < PSD_TOL:
            raise DegenerateInput(f"matrices not PSD, min eigenvalue {min_eig:.2e}")
        object.__setattr__(self, "freqs", _freeze(f))
        object.__setattr__(self, "mats", _freeze(m))

    @property
    def n(self) -> int:
        return self.mats.shape[1]

    @property
    def m(self) -> int:
        return self.freqs.shape[0]

    def submatrix(self, n1: int) -> "SpectralGrid":
        """Leading n1 x n1 principal block at every frequency."""
        if not 1 <= n1 <= self.n:
            raise ShapeError("invalid submatrix size")
        return SpectralGrid(self.freqs, self.mats[:, :n1, :n1])


@dataclass(frozen=True, eq=False)
class ShockSeries:
    """q x T shock array; `orthonormal` marks the V[eps_t] = I_q target."""

    values: np.ndarray
    orthonormal: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(1, -1)
        if v.ndim != 2 or v.shape[0] < 1:
            raise ShapeError(f"shock series must be (q, T), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DegenerateInput("shock series contains non-finite entries")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def q(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class IdioSpec:
    """Idiosyncratic generator: per-series AR(1) with optional one-lag
    neighbour coupling of the innovations."""

    ar: float = 0.0
    sigma: float = 1.0
    coupling: float = 0.0

    def __post_init__(self):
        if not abs(self.ar) < 1:
            raise SpecError(f"idiosyncratic AR coefficient must lie in (-1, 1), got {self.ar}")
        if self.sigma < 0:
            raise SpecError("idiosyncratic innovation std must be >= 0")


@dataclass(frozen=True, eq=False)
class GdfmSpec:
    """Ground-truth data generating process for a q-shock factor panel.

    ``common_filters`` holds one 1 x q lag polynomial per series; when a
    panel with more rows is simulated the filter rows recycle cyclically.
    An all-zero filter set is representable (the panel is then purely
    idiosyncratic); blocking rejects it with NoCommonComponent.
    """

    q: int
    common_filters: tuple[MatrixPolynomial, ...]
    idio: IdioSpec = field(default_factory=IdioSpec)
    seed: int = 0

    def __post_init__(self):
        if self.q < 1:
            raise SpecError("q must be a positive integer")
        filters = tuple(self.common_filters)
        if not filters:
            raise SpecError("at least one filter row is required")
        for f in filters:
            if f.rows != 1 or f.cols != self.q:
                raise SpecError(
                    f"every filter must be 1 x {self.q}, got {f.rows} x {f.cols}")
        if self.seed < 0:
            raise SpecError("seed must be a non-negative integer")
        object.__setattr__(self, "common_filters", filters)

    @property
    def max_degree(self) -> int:
        return max(f.degree for f in self.common_filters)

    @property
    def has_common(self) -> bool:
        return any(not f.is_zero for f in self.common_filters)
