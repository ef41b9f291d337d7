"""Reordering of transfer-function rows into full-rank q x q blocks and the
repair strategies (stacking, mirroring, unit-circle factoring) that make
each block causally invertible.

The greedy pass keeps the original row order, skipping rows that do not
raise the block rank and revisiting them for later blocks.  Each completed
block is repaired to one of four strategies:

* direct    - the square block is already strictly minimum phase;
* stacked   - extra rows are appended until a causal left inverse exists;
* mirrored  - a scalar block whose inside zeros are shared by every
              candidate row is replaced by its mirror image (the recovered
              shocks are then the Wold innovations, not the originals);
* factored  - unit-circle zeros are split off into a scalar factor g and
              only the remaining part is inverted (recovery then goes
              through cross-sectional aggregation).

Every accepted block stores two filters: a minimal-degree causal left
inverse (the causal-invertibility certificate) and a minimum-norm
frequency-sampled inverse used by the recovery pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    Irreparable,
    MatrixPolynomial,
    NoCommonComponent,
    RankDeficientPanel,
    ShapeError,
    frequency_grid,
    scalar_poly,
)
from .polyalg import (
    RING_TOL,
    TwoSidedSeries,
    causal_inverse_series,
    causal_left_inverse_ls,
    classify_zeros,
    convolve_series,
    factor_unit_circle_zeros,
    mirror_inside_zeros,
    pinv_series,
    poly_det,
    rank_full_ae,
)

ZERO_ROW_TOL = 1e-12
CERT_TOL = 1e-8       # relative residual-energy gate for causal certificates
DELTA_FLOOR = 1e-4


# --------------------------------------------------------------------------
# plan containers

@dataclass(frozen=True)
class RankCheck:
    full: bool
    singular_freqs: np.ndarray


@dataclass(frozen=True)
class BlockInfo:
    rows: tuple[int, ...]
    k: MatrixPolynomial
    strategy: str | None = None
    g: MatrixPolynomial = field(default_factory=lambda: scalar_poly([1.0]))
    h: MatrixPolynomial | None = None
    inverse: TwoSidedSeries | None = None
    causal_cert: np.ndarray | None = None
    cert_residual: float | None = None
    delta_j: float | None = None

    @property
    def size(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class BlockPlan:
    q: int
    order: tuple[int, ...]
    blocks: tuple[BlockInfo, ...]
    remainder: tuple[int, ...]
    dropped: tuple[tuple[int, str], ...]
    delta: float | None
    innovation: str = "epsilon"     # "epsilon" or "wold" (all blocks mirrored)
    mode: str = "invert"            # "invert" or "aggregate" (all blocks factored)
    params: dict = field(default_factory=dict)

    def block_rows(self) -> list[list[int]]:
        return [list(b.rows) for b in self.blocks]

    def to_dict(self) -> dict:
        def poly(p: MatrixPolynomial | None):
            return None if p is None else p.coeffs.tolist()

        return {
            "q": self.q,
            "order": list(self.order),
            "remainder": list(self.remainder),
            "dropped": [{"row": r, "reason": s} for r, s in self.dropped],
            "delta": self.delta,
            "innovation": self.innovation,
            "mode": self.mode,
            "params": self.params,
            "blocks": [
                {
                    "rows": list(b.rows),
                    "strategy": b.strategy,
                    "k": poly(b.k),
                    "g": poly(b.g),
                    "h": poly(b.h),
                    "inverse": None if b.inverse is None else {
                        "coeffs": b.inverse.coeffs.tolist(),
                        "lag0": b.inverse.lag0,
                        "neg_energy_fraction": b.inverse.neg_energy_fraction,
                    },
                    "causal_cert": None if b.causal_cert is None
                    else b.causal_cert.tolist(),
                    "cert_residual": b.cert_residual,
                    "delta_j": b.delta_j,
                }
                for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BlockPlan":
        def poly(x):
            return None if x is None else MatrixPolynomial(np.asarray(x, dtype=float))

        blocks = []
        for b in d["blocks"]:
            inv = b.get("inverse")
            blocks.append(BlockInfo(
                rows=tuple(b["rows"]),
                k=poly(b["k"]),
                strategy=b.get("strategy"),
                g=poly(b.get("g")) or scalar_poly([1.0]),
                h=poly(b.get("h")),
                inverse=None if inv is None else TwoSidedSeries(
                    coeffs=np.asarray(inv["coeffs"], dtype=float), lag0=inv["lag0"]),
                causal_cert=None if b.get("causal_cert") is None
                else np.asarray(b["causal_cert"], dtype=float),
                cert_residual=b.get("cert_residual"),
                delta_j=b.get("delta_j"),
            ))
        return cls(
            q=d["q"],
            order=tuple(d["order"]),
            blocks=tuple(blocks),
            remainder=tuple(d["remainder"]),
            dropped=tuple((e["row"], e["reason"]) for e in d["dropped"]),
            delta=d.get("delta"),
            innovation=d.get("innovation", "epsilon"),
            mode=d.get("mode", "invert"),
            params=d.get("params", {}),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, s: str) -> "BlockPlan":
        return cls.from_dict(json.loads(s))


# --------------------------------------------------------------------------
# operations

def drop_zero_rows(
    filters: Sequence[MatrixPolynomial], tol: float = ZERO_ROW_TOL
) -> tuple[list[int], list[int]]:
    """Indices of retained and dropped rows; a row is dropped iff every
    coefficient entry is below `tol` in absolute value."""
    kept, dropped = [], []
    for i, f in enumerate(filters):
        (dropped if np.max(np.abs(f.coeffs)) < tol else kept).append(i)
    if not kept:
        raise NoCommonComponent("every filter row is numerically zero")
    return kept, dropped


def check_rank_ae(block: MatrixPolynomial, M: int = 128) -> RankCheck:
    """Full-column-rank-almost-everywhere statistic on the M-point grid."""
    full, sing = rank_full_ae(block, frequency_grid(M))
    return RankCheck(full=full, singular_freqs=sing)


def _stack(polys: Sequence[MatrixPolynomial]) -> MatrixPolynomial:
    q = polys[0].cols
    deg = max(p.degree for p in polys)
    out = np.zeros((deg + 1, len(polys), q))
    for r, p in enumerate(polys):
        if p.cols != q or p.rows != 1:
            raise ShapeError("stacked rows must all be 1 x q")
        out[: p.degree + 1, r, :] = p.coeffs[:, 0, :]
    return MatrixPolynomial(out)


def _greedy_block(pool: list[int], polys: dict, q: int, thetas: np.ndarray) -> list[int] | None:
    rows: list[int] = []
    for idx in pool:
        cand = rows + [idx]
        full, _ = rank_full_ae(_stack([polys[i] for i in cand]), thetas)
        if full:
            rows = cand
            if len(rows) == q:
                return rows
    return None


def build_blocks(
    filters: Sequence[MatrixPolynomial], q: int, M: int = 128
) -> BlockPlan:
    """Greedy reordering into full-rank q x q blocks (ranks only).

    Rows are scanned in their original order; a row joins the current block
    iff it raises the stacked rank almost everywhere, otherwise it stays
    available for later blocks.  Leftover rows that cannot complete a block
    are reported as remainder.  Raises RankDeficientPanel when fewer than q
    independent rows exist overall.
    """
    kept, zeroed = drop_zero_rows(filters)
    polys = {i: filters[i] for i in kept}
    thetas = frequency_grid(M)
    full, _ = rank_full_ae(_stack([polys[i] for i in kept]), thetas)
    if not full:
        raise RankDeficientPanel(
            f"the retained rows span fewer than q={q} directions almost everywhere")
    pool = list(kept)
    blocks: list[BlockInfo] = []
    while True:
        rows = _greedy_block(pool, polys, q, thetas)
        if rows is None:
            break
        block = _stack([polys[i] for i in rows])
        blocks.append(BlockInfo(rows=tuple(rows), k=block, h=block))
        pool = [i for i in pool if i not in rows]
    order = tuple(i for b in blocks for i in b.rows)
    return BlockPlan(
        q=q,
        order=order,
        blocks=tuple(blocks),
        remainder=tuple(pool),
        dropped=tuple((i, "zero row") for i in zeroed),
        delta=None,
        params={"M": M},
    )


@dataclass(frozen=True)
class RepairResult:
    k: MatrixPolynomial
    h: MatrixPolynomial
    g: MatrixPolynomial
    strategy: str
    used: tuple[int, ...]
    causal_cert: np.ndarray
    cert_residual: float


def _certificate(h: MatrixPolynomial, L_max: int) -> tuple[np.ndarray, float]:
    # minimal-degree causal left inverse of h plus its off-identity energy
    if h.rows == h.cols:
        inv = causal_inverse_series(h, L_max)
        conv = convolve_series(inv.coeffs, h.coeffs)
        conv[0] -= np.eye(h.cols)
        return inv.coeffs, float(np.sum(conv ** 2))
    coeffs, resid, _ = causal_left_inverse_ls(h, L_max)
    return coeffs, resid


def _shares_zeros(cand: MatrixPolynomial, zeros: np.ndarray, tol: float = 1e-8) -> bool:
    if zeros.size == 0:
        return False
    scale = float(np.sum(np.abs(cand.coeffs)))
    vals = np.array([np.max(np.abs(cand(z))) for z in zeros])
    return bool(np.all(vals <= tol * max(scale, 1e-30)))


def repair_block(
    block: MatrixPolynomial,
    candidates: Sequence[tuple[int, MatrixPolynomial]],
    budget: int = 3,
    L_max: int = 64,
    rho: float = RING_TOL,
) -> RepairResult:
    """Make a square full-rank block causally invertible.

    Decision cascade: (a) strictly minimum phase -> direct; (b) append up
    to `budget` candidate rows that do not share all of the block's
    closed-disc zeros until a causal left inverse exists -> stacked;
    (c) scalar block whose inside zeros are shared by every candidate ->
    mirrored (Wold innovations); (d) scalar block with unit-circle zeros
    and minimum-phase remainder -> factored.  Anything else raises
    Irreparable (the pattern where finitely many rows pin the innovations
    while the rest share an unremovable inside zero).
    """
    if block.rows != block.cols:
        raise ShapeError("repair starts from a square block")
    q = block.cols
    one = scalar_poly([1.0])
    det = poly_det(block)
    cls = classify_zeros(det, rho)

    if cls.strictly_minimum_phase:
        cert, resid = _certificate(block, L_max)
        return RepairResult(block, block, one, "direct", (), cert, resid)

    closed_disc = np.concatenate([cls.inside, cls.on_circle])
    helpful = [(i, p) for i, p in candidates if not _shares_zeros(p, closed_disc)]
    rows = [MatrixPolynomial(block.coeffs[:, r:r + 1, :]) for r in range(q)]
    for extra in range(1, min(budget, len(helpful)) + 1):
        used = helpful[:extra]
        stacked = _stack(rows + [p for _, p in used])
        cert, resid, _ = causal_left_inverse_ls(stacked, L_max)
        if resid <= CERT_TOL * q:
            return RepairResult(stacked, stacked, one, "stacked",
                                tuple(i for i, _ in used), cert, resid)

    if q == 1:
        if cls.on_circle.size:
            g, h = factor_unit_circle_zeros(block, rho)
            h_cls = classify_zeros(h, rho) if h.degree >= 1 else None
            if h_cls is None or h_cls.strictly_minimum_phase:
                cert, resid = _certificate(h, L_max)
                return RepairResult(block, h, g, "factored", (), cert, resid)
            raise Irreparable(
                "unit-circle zeros factored out but inside zeros remain")
        if _all_candidates_share(candidates, cls.inside):
            h = mirror_inside_zeros(block, rho)
            cert, resid = _certificate(h, L_max)
            return RepairResult(block, h, one, "mirrored", (), cert, resid)
    raise Irreparable(
        "inside zeros cannot be removed by stacking and are not shared by "
        "all candidate rows")


def _all_candidates_share(candidates, zeros: np.ndarray) -> bool:
    return all(_shares_zeros(p, zeros) for _, p in candidates)


def delta_bound(plan: BlockPlan, M: int = 128) -> tuple[float, np.ndarray]:
    """Smallest q-th singular value of each block's invertible part h over
    an M-point grid, and the global minimum over blocks."""
    thetas = frequency_grid(M)
    q = plan.q
    deltas = np.empty(len(plan.blocks))
    for j, b in enumerate(plan.blocks):
        h = b.h if b.h is not None else b.k
        sv = np.linalg.svd(h.eval_circle(thetas), compute_uv=False)
        deltas[j] = float(np.min(sv[:, q - 1]))
    return (float(np.min(deltas)) if len(deltas) else 0.0), deltas


def plan_blocks(
    filters: Sequence[MatrixPolynomial],
    q: int,
    budget: int = 3,
    L_max: int = 64,
    rho: float = RING_TOL,
    delta_floor: float = DELTA_FLOOR,
    M: int = 128,
) -> BlockPlan:
    """Full pipeline: greedy blocking, repair, inverse filters, delta.

    Strategy mixes are resolved at the plan level: invertible (direct or
    stacked) blocks take precedence, so mirrored or factored blocks are
    dropped when they coexist with them (their shocks would be inconsistent
    with the recovered innovations).  A plan of mirrored blocks only flags
    `innovation="wold"`; a plan of factored blocks only flags
    `mode="aggregate"`.  Blocks whose delta falls below `delta_floor` are
    excluded.
    """
    kept, zeroed = drop_zero_rows(filters)
    polys = {i: filters[i] for i in kept}
    thetas = frequency_grid(M)
    full, _ = rank_full_ae(_stack([polys[i] for i in kept]), thetas)
    if not full:
        raise RankDeficientPanel(
            f"the retained rows span fewer than q={q} directions almost everywhere")

    pool = list(kept)
    blocks: list[BlockInfo] = []
    dropped: list[tuple[int, str]] = [(i, "zero row") for i in zeroed]
    while True:
        rows = _greedy_block(pool, polys, q, thetas)
        if rows is None:
            break
        rest = [i for i in pool if i not in rows]
        block = _stack([polys[i] for i in rows])
        try:
            rep = repair_block(block, [(i, polys[i]) for i in rest],
                               budget=budget, L_max=L_max, rho=rho)
        except Irreparable as exc:
            dropped.extend((r, f"irreparable: {exc}") for r in rows)
            pool = rest
            continue
        all_rows = tuple(rows) + rep.used
        pool = [i for i in rest if i not in rep.used]
        blocks.append(BlockInfo(
            rows=all_rows, k=rep.k, strategy=rep.strategy, g=rep.g, h=rep.h,
            causal_cert=rep.causal_cert, cert_residual=rep.cert_residual))

    strategies = {b.strategy for b in blocks}
    if strategies & {"direct", "stacked"}:
        keep, demote = [], []
        for b in blocks:
            (keep if b.strategy in ("direct", "stacked") else demote).append(b)
        for b in demote:
            dropped.extend(
                (r, f"{b.strategy} block inconsistent with invertible blocks")
                for r in b.rows)
        blocks = keep
    elif "factored" in strategies and "mirrored" in strategies:
        keep, demote = [], []
        for b in blocks:
            (keep if b.strategy == "factored" else demote).append(b)
        for b in demote:
            dropped.extend((r, "mirrored block inconsistent with factored blocks")
                           for r in b.rows)
        blocks = keep
    if not blocks:
        raise Irreparable("no block could be repaired to a causally invertible form")

    enriched: list[BlockInfo] = []
    for b in blocks:
        inv = pinv_series(b.h, L=L_max)
        enriched.append(BlockInfo(
            rows=b.rows, k=b.k, strategy=b.strategy, g=b.g, h=b.h,
            inverse=inv, causal_cert=b.causal_cert,
            cert_residual=b.cert_residual))
    plan = BlockPlan(
        q=q,
        order=tuple(i for b in enriched for i in b.rows),
        blocks=tuple(enriched),
        remainder=tuple(pool),
        dropped=tuple(dropped),
        delta=None,
        innovation="wold" if all(b.strategy == "mirrored" for b in enriched) else "epsilon",
        mode="aggregate" if all(b.strategy == "factored" for b in enriched) else "invert",
        params={"budget": budget, "L_max": L_max, "rho": rho,
                "delta_floor": delta_floor, "M": M},
    )
    delta, deltas = delta_bound(plan, M=M)
    final_blocks, extra_drop = [], []
    for b, dj in zip(plan.blocks, deltas):
        if dj < delta_floor:
            extra_drop.extend((r, f"delta {dj:.2e} below floor") for r in b.rows)
            continue
        final_blocks.append(BlockInfo(
            rows=b.rows, k=b.k, strategy=b.strategy, g=b.g, h=b.h,
            inverse=b.inverse, causal_cert=b.causal_cert,
            cert_residual=b.cert_residual, delta_j=float(dj)))
    if not final_blocks:
        raise Irreparable("every repaired block fell below the delta floor")
    return BlockPlan(
        q=q,
        order=tuple(i for b in final_blocks for i in b.rows),
        blocks=tuple(final_blocks),
        remainder=plan.remainder,
        dropped=plan.dropped + tuple(extra_drop),
        delta=float(min(b.delta_j for b in final_blocks)),
        innovation=plan.innovation,
        mode=plan.mode,
        params=plan.params,
    )
