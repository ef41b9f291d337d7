"""Matrix-polynomial algebra: products, determinants, roots, zero
classification and mirroring, unit-circle factoring, and causal inversion
of transfer-function blocks.

Conventions: a polynomial k(z) = sum_j K(j) z^j acts as a causal filter
k(L); its frequency response is k(e^{-i theta}).  Zero locations decide
causal invertibility: roots strictly outside the unit circle are benign,
roots inside make the causal inverse diverge, roots on the circle make it
non-summable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .core import (
    MatrixPolynomial,
    NotCausallyInvertible,
    NotMinimumPhase,
    OnCircleZero,
    PreconditionError,
    RankDeficient,
    ShapeError,
    ZeroPolynomial,
    scalar_poly,
)

RING_TOL = 1e-6          # default half-width of the unit-circle ring
DET_SIZE_CAP = 6         # determinants are interpolated; blocks stay small
_TRIM_REL = 1e-12        # relative threshold for numerically-zero coefficients


# --------------------------------------------------------------------------
# products and determinants

def poly_mul(a: MatrixPolynomial, b: MatrixPolynomial) -> MatrixPolynomial:
    """Product polynomial via coefficient convolution; eval(a*b) = eval(a)eval(b)."""
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    pa, pb = a.coeffs, b.coeffs
    out = np.zeros((pa.shape[0] + pb.shape[0] - 1, a.rows, b.cols))
    for j in range(pa.shape[0]):
        out[j:j + pb.shape[0]] += np.einsum("rk,lkc->lrc", pa[j], pb)
    return MatrixPolynomial(out)


def _interp_coeffs(values: np.ndarray, n_points: int) -> np.ndarray:
    # values[k] = p(omega^k) with omega = exp(2*pi*i/n) -> coefficients by DFT
    return np.fft.fft(values, axis=0) / n_points


def _trim_scalar(c: np.ndarray) -> np.ndarray:
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return c[:1]
    keep = len(c)
    while keep > 1 and abs(c[keep - 1]) <= _TRIM_REL * scale:
        keep -= 1
    return c[:keep]


def poly_det(p: MatrixPolynomial) -> MatrixPolynomial:
    """Determinant of a square matrix polynomial as a 1x1 polynomial.

    Computed by evaluation at roots of unity and DFT interpolation, which is
    stable for the small block sizes used here (rows <= 6).
    """
    if p.rows != p.cols:
        raise ShapeError("determinant needs a square polynomial")
    if p.rows > DET_SIZE_CAP:
        raise PreconditionError(f"determinant capped at size {DET_SIZE_CAP}")
    if p.rows == 1:
        return MatrixPolynomial(p.coeffs.copy())
    n = p.rows * p.degree + 1
    omega = np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.array([np.linalg.det(p(w)) for w in omega])
    c = _interp_coeffs(vals, n)
    return scalar_poly(_trim_scalar(c.real))


def _adjugate_poly(p: MatrixPolynomial) -> MatrixPolynomial:
    """Adjugate polynomial: adj(p) * p = det(p) * I."""
    q = p.rows
    if q == 1:
        return scalar_poly([1.0])
    n = (q - 1) * p.degree + 1
    omega = np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.empty((n, q, q), dtype=complex)
    rows = np.arange(q)
    for m, w in enumerate(omega):
        a = p(w)
        for i in range(q):
            for j in range(q):
                minor = a[np.ix_(rows != j, rows != i)]
                vals[m, i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return MatrixPolynomial(_interp_coeffs(vals, n).real)


# --------------------------------------------------------------------------
# roots and zero geometry

def scalar_roots(p: MatrixPolynomial) -> np.ndarray:
    """All roots with multiplicity, via the companion matrix plus one Newton step."""
    c = _trim_scalar(np.asarray(p.scalar_coeffs(), dtype=float))
    if not np.any(c):
        raise ZeroPolynomial("the zero polynomial has no well-defined roots")
    if len(c) == 1:
        return np.empty(0, dtype=complex)
    roots = npoly.polyroots(c)
    dc = npoly.polyder(c)
    vals = npoly.polyval(roots, c)
    derivs = npoly.polyval(roots, dc)
    safe = np.abs(derivs) > 1e-12 * (1.0 + np.abs(vals))
    roots = np.where(safe, roots - vals / np.where(safe, derivs, 1.0), roots)
    return roots


@dataclass(frozen=True)
class ZeroClassification:
    """Roots of a scalar polynomial split by distance from the unit circle."""

    inside: np.ndarray     # |z| < 1 - rho
    on_circle: np.ndarray  # 1 - rho <= |z| <= 1 + rho
    outside: np.ndarray    # |z| > 1 + rho
    rho: float

    @property
    def strictly_minimum_phase(self) -> bool:
        return self.inside.size == 0 and self.on_circle.size == 0


def classify_zeros(p: MatrixPolynomial, rho: float = RING_TOL) -> ZeroClassification:
    """Partition the roots of a scalar polynomial by modulus band around |z| = 1."""
    if rho <= 0:
        raise PreconditionError("ring tolerance must be positive")
    roots = scalar_roots(p)
    mod = np.abs(roots)
    return ZeroClassification(
        inside=roots[mod < 1 - rho],
        on_circle=roots[(mod >= 1 - rho) & (mod <= 1 + rho)],
        outside=roots[mod > 1 + rho],
        rho=rho,
    )


def _real_coeffs_from_roots(roots: np.ndarray, lead: float) -> np.ndarray:
    c = lead * npoly.polyfromroots(roots)
    imag = np.max(np.abs(c.imag)) if c.size else 0.0
    if imag > 1e-8 * max(1.0, np.max(np.abs(c.real))):
        raise PreconditionError("root multiset is not closed under conjugation")
    return c.real


def mirror_inside_zeros(p: MatrixPolynomial, rho: float = RING_TOL) -> MatrixPolynomial:
    """Reflect every root inside the unit circle to its conjugate reciprocal.

    The scale is adjusted so |p~(e^{i theta})| = |p(e^{i theta})| for all
    theta, restoring causal invertibility while preserving the spectral
    magnitude; coefficients stay real.  Roots at the origin correspond to a
    pure lag factor and are dropped (a pure lag is all-pass on the circle).
    """
    c = _trim_scalar(np.asarray(p.scalar_coeffs(), dtype=float))
    if not np.any(c):
        raise ZeroPolynomial("cannot mirror the zero polynomial")
    scale = np.max(np.abs(c))
    lead_lag = 0
    while abs(c[lead_lag]) <= _TRIM_REL * scale:
        lead_lag += 1
    c = c[lead_lag:]
    if len(c) == 1:
        return scalar_poly(c)
    cls = classify_zeros(scalar_poly(c), rho)
    if cls.on_circle.size:
        raise OnCircleZero("factor out unit-circle zeros before mirroring")
    if cls.inside.size == 0 and lead_lag == 0:
        return scalar_poly(c)
    mirrored = np.concatenate([1.0 / np.conj(cls.inside), cls.outside])
    lead = c[-1] * np.prod(np.abs(cls.inside)) if cls.inside.size else c[-1]
    return scalar_poly(_real_coeffs_from_roots(mirrored, float(lead.real if np.iscomplexobj(lead) else lead)))


def factor_unit_circle_zeros(
    p: MatrixPolynomial, rho: float = RING_TOL
) -> tuple[MatrixPolynomial, MatrixPolynomial]:
    """Split p = g * h where g collects the unit-circle zeros, g(0) = 1.

    g(z) = prod_k (1 - z / z_k)^{m_k} over the on-circle roots z_k, so h has
    no on-circle zeros and p reconstructs coefficientwise from the product.
    Accuracy is limited by root conditioning for multiple circle zeros.
    """
    c = _trim_scalar(np.asarray(p.scalar_coeffs(), dtype=float))
    if not np.any(c):
        raise ZeroPolynomial("cannot factor the zero polynomial")
    if len(c) == 1:
        return scalar_poly([1.0]), scalar_poly(c)
    cls = classify_zeros(scalar_poly(c), rho)
    if cls.on_circle.size == 0:
        return scalar_poly([1.0]), scalar_poly(c)
    g = _real_coeffs_from_roots(cls.on_circle, 1.0)
    g = g / g[0]  # pin g(0) = 1 exactly
    h, rem = npoly.polydiv(c, g)
    del rem  # division remainder is at root-finding accuracy; checked by tests
    return scalar_poly(g), scalar_poly(h)


# --------------------------------------------------------------------------
# grid rank statistics

def gram_det_grid(k: MatrixPolynomial, thetas: np.ndarray) -> np.ndarray:
    """det of the smaller Gram of k(e^{-i theta}) per grid point (real, >= 0)."""
    b = k.eval_circle(thetas)
    if k.rows >= k.cols:
        gram = np.einsum("mij,mik->mjk", b.conj(), b)
    else:
        gram = np.einsum("mij,mkj->mik", b, b.conj())
    return np.linalg.det(gram).real


def rank_full_ae(
    k: MatrixPolynomial,
    thetas: np.ndarray,
    rel_tol: float = 1e-10,
    min_fraction: float = 0.9,
) -> tuple[bool, np.ndarray]:
    """Full-rank-almost-everywhere test on a frequency grid.

    Analyticity makes the true rank constant off a null set, so a genuine
    deficiency shows up at most grid points while isolated zeros touch only
    a few; `min_fraction` draws that line.  Returns (full, singular_freqs).
    """
    d = gram_det_grid(k, thetas)
    top = float(np.max(d))
    if top <= 0.0:
        return False, np.asarray(thetas)
    ok = d > rel_tol * top
    return bool(np.mean(ok) >= min_fraction), np.asarray(thetas)[~ok]


# --------------------------------------------------------------------------
# causal inversion

def _reciprocal_series(d: np.ndarray, n_terms: int) -> np.ndarray:
    # power series of 1/d(z); requires d[0] != 0
    out = np.zeros(n_terms)
    out[0] = 1.0 / d[0]
    for l in range(1, n_terms):
        top = min(l, len(d) - 1)
        out[l] = -np.dot(d[1:top + 1], out[l - 1::-1][:top]) / d[0]
    return out


def convolve_series(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Convolution of stacked coefficient arrays (La,q,r) x (Lb,r,s)."""
    la, lb = a.shape[0], b.shape[0]
    out = np.zeros((la + lb - 1, a.shape[1], b.shape[2]))
    for j in range(la):
        out[j:j + lb] += np.einsum("qr,lrs->lqs", a[j], b)
    return out


def causal_left_inverse_ls(
    k: MatrixPolynomial,
    max_degree: int,
    tol: float = 1e-8,
) -> tuple[np.ndarray, float, int]:
    """Minimal-degree truncated causal left inverse by least squares.

    Searches degrees d = 0, 1, 2, 4, ... <= max_degree for coefficients
    G(0..d) minimizing the energy of conv(G, k) - I.  When an exact
    polynomial left inverse exists the minimal-degree solution is found
    (and is unique at that degree); otherwise the residual decays
    geometrically in d iff k has no zeros in the closed unit disc.

    Returns (coeffs of shape (d+1, cols, rows), residual_energy, degree);
    acceptance against `tol` is the caller's decision.
    """
    q, qj, p = k.cols, k.rows, k.degree
    kc = k.coeffs
    degrees = [0, 1, 2]
    d = 4
    while d < max_degree:
        degrees.append(d)
        d *= 2
    degrees.append(max_degree)
    degrees = sorted(set(dd for dd in degrees if dd <= max_degree))

    best: tuple[np.ndarray, float, int] | None = None
    for d in degrees:
        nl = d + p + 1
        # design[(j, a), (l, b)] = K_{l-j}[a, b]
        design = np.zeros(((d + 1) * qj, nl * q))
        for j in range(d + 1):
            for lag in range(p + 1):
                l = j + lag
                design[j * qj:(j + 1) * qj, l * q:(l + 1) * q] = kc[lag]
        target = np.zeros((nl * q, q))
        target[:q, :] = np.eye(q)
        sol, _, _, _ = np.linalg.lstsq(design.T, target, rcond=None)
        resid = float(np.sum((design.T @ sol - target) ** 2))
        coeffs = sol.T.reshape(q, d + 1, qj).transpose(1, 0, 2)
        if best is None or resid < best[1]:
            best = (coeffs, resid, d)
        if resid <= tol * q:
            return coeffs, resid, d
    assert best is not None
    return best


def causal_inverse_series(k: MatrixPolynomial, L_max: int) -> MatrixPolynomial:
    """Truncated causal (left) inverse series of a transfer-function block.

    Square blocks use adjugate(k) times the power-series reciprocal of
    det(k), valid iff det has no roots in the closed unit disc.  Tall blocks
    (more rows than columns) are solved for the minimal-degree causal left
    inverse directly; the least-squares residual is the causality
    certificate, since the pointwise minimum-norm inverse of a tall block
    is generally two-sided even when an exact causal inverse exists.
    """
    if L_max < k.degree:
        raise PreconditionError("truncation length must be at least the block degree")
    if k.rows < k.cols:
        raise RankDeficient("block has fewer rows than shocks")
    thetas = 2.0 * np.pi * np.arange(128) / 128
    full, _ = rank_full_ae(k, thetas)
    if not full:
        raise RankDeficient("block is rank deficient almost everywhere")
    if k.rows == k.cols:
        det = poly_det(k)
        cls = classify_zeros(det)
        if cls.inside.size or cls.on_circle.size:
            raise NotMinimumPhase(
                f"det has {cls.inside.size} zeros inside and "
                f"{cls.on_circle.size} on the unit circle")
        adj = _adjugate_poly(k)
        recip = _reciprocal_series(det.scalar_coeffs(), L_max + 1)
        inv = convolve_series(recip.reshape(-1, 1, 1) * np.eye(k.rows), adj.coeffs)
        return MatrixPolynomial(inv[:L_max + 1])
    coeffs, resid, _ = causal_left_inverse_ls(k, L_max)
    if resid > 1e-8 * k.cols:
        raise NotCausallyInvertible(
            f"no truncated causal left inverse at degree {L_max} "
            f"(residual energy {resid:.2e})")
    return MatrixPolynomial(coeffs)


def noncausal_inverse_demo(a: float, J: int) -> np.ndarray:
    """Anticausal inverse coefficients for the scalar filter 1 - a L, |a| > 1.

    Returns c_1..c_J with eps_t = sum_j c_j x_{t+j}, c_j = -(1/a)^j.
    """
    if abs(a) <= 1:
        raise PreconditionError("the anticausal expansion needs |a| > 1")
    if J < 1:
        raise PreconditionError("need at least one lead")
    return -(1.0 / a) ** np.arange(1, J + 1)


# --------------------------------------------------------------------------
# minimum-norm (pseudo-inverse) series for the recovery filter

@dataclass(frozen=True)
class TwoSidedSeries:
    """Truncated two-sided filter: coeffs[lag0 + l] applies to x_{t-l}."""

    coeffs: np.ndarray  # (2L+1, q, q_j)
    lag0: int

    @property
    def n_neg(self) -> int:
        return self.lag0

    @property
    def n_pos(self) -> int:
        return self.coeffs.shape[0] - 1 - self.lag0

    @property
    def neg_energy_fraction(self) -> float:
        total = float(np.sum(self.coeffs ** 2))
        if total == 0.0:
            return 0.0
        return float(np.sum(self.coeffs[: self.lag0] ** 2)) / total

    def trimmed(self, rel_tol: float = 1e-14) -> "TwoSidedSeries":
        """Drop numerically-zero leading/trailing lag blocks."""
        norms = np.sqrt(np.sum(self.coeffs ** 2, axis=(1, 2)))
        top = float(np.max(norms)) if norms.size else 0.0
        if top == 0.0:
            return self
        nz = np.nonzero(norms > rel_tol * top)[0]
        lo, hi = int(nz[0]), int(nz[-1])
        lo = min(lo, self.lag0)
        hi = max(hi, self.lag0)
        return TwoSidedSeries(coeffs=self.coeffs[lo:hi + 1], lag0=self.lag0 - lo)

    def apply(self, x: np.ndarray) -> tuple[np.ndarray, int, int]:
        """Filter a (q_j, T) signal; returns (y, valid_lo, valid_hi).

        y[:, t] = sum_l coeffs[lag0+l] x[:, t-l]; entries outside
        [valid_lo, valid_hi) touch missing samples and are edge-padded.
        """
        qj, T = x.shape
        out = np.zeros((self.coeffs.shape[1], T))
        for i, g in enumerate(self.coeffs):
            l = i - self.lag0
            gx = g @ x
            if l >= 0:
                out[:, l:] += gx[:, :T - l] if l else gx
            else:
                out[:, :T + l] += gx[:, -l:]
        lo = self.n_pos
        hi = T - self.n_neg
        return out, lo, hi


def pinv_series(
    k: MatrixPolynomial,
    L: int = 64,
    tail_tol: float = 1e-8,
    max_L: int = 512,
) -> TwoSidedSeries:
    """Frequency-sampled minimum-norm inverse of a full-column-rank block.

    Samples the Moore-Penrose pseudo-inverse of k(e^{-i theta}) on a dense
    circle grid and inverse-transforms to lag coefficients, keeping lags
    -L..L.  The window doubles until the outer-quarter coefficient energy
    falls below `tail_tol` of the total.  For square strictly-minimum-phase
    blocks this coincides with the causal inverse series; for tall blocks
    negative lags generally carry energy (exposed via neg_energy_fraction).
    """
    if k.rows < k.cols:
        raise RankDeficient("block has fewer rows than shocks")
    while True:
        n = 4 * (L + max(k.degree, 1))
        thetas = 2.0 * np.pi * np.arange(n) / n
        vals = k.eval_circle(thetas)
        sv_min = float(np.min(np.linalg.svd(vals, compute_uv=False)))
        if sv_min < 1e-12:
            raise RankDeficient("block numerically rank deficient on the circle")
        ginv = np.linalg.pinv(vals)
        full = np.fft.ifft(ginv, axis=0)
        coeffs = np.concatenate([full[n - L:], full[:L + 1]]).real
        total = float(np.sum(coeffs ** 2))
        outer = (float(np.sum(coeffs[: L // 2] ** 2))
                 + float(np.sum(coeffs[coeffs.shape[0] - L // 2:] ** 2)))
        if total == 0.0 or outer <= tail_tol * total or L >= max_L:
            return TwoSidedSeries(coeffs=coeffs, lag0=L).trimmed()
        L = min(2 * L, max_L)
