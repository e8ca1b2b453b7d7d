"""Cantor-type sets and box-counting dimension estimates.

Two-branch self-similar sets with contraction ratio r realize dimension
log 2 / log(1/r); products with full intervals add one per factor.  All
numeric dimension checks use the box-counting proxy, which coincides with
the analytic value for these self-similar sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from caldesk.cells import DyadicCellSet


@dataclass(frozen=True)
class CantorSpec:
    """Two-branch Cantor construction: keep [0, r] and [1 - r, 1] scaled."""

    ratio: float
    depth: int
    length: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.ratio < 0.5):
            raise ValueError("ratio must lie in (0, 1/2)")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if self.length <= 0:
            raise ValueError("ambient interval length must be positive")

    @property
    def dimension(self) -> float:
        return math.log(2.0) / math.log(1.0 / self.ratio)


@dataclass(frozen=True, eq=False)
class BoxDimEstimate:
    """Least-squares slope of log N(delta) against log(1/delta)."""

    depths: np.ndarray
    counts: np.ndarray
    slope: float
    residual: float
    degenerate: bool = False


def ratio_for_dimension(alpha: float) -> float:
    """Contraction ratio of the two-branch set with dimension alpha."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("target dimension must lie in (0, 1)")
    return 2.0 ** (-1.0 / alpha)


def cantor_intervals(spec: CantorSpec) -> list[tuple[float, float]]:
    ivs = [(0.0, spec.length)]
    for _ in range(spec.depth):
        nxt = []
        for a, b in ivs:
            w = (b - a) * spec.ratio
            nxt.append((a, a + w))
            nxt.append((b - w, b))
        ivs = nxt
    return ivs


def dyadic_depth_for(spec: CantorSpec) -> int:
    """Smallest grid depth whose cells are no wider than the level-d pieces."""
    piece = spec.length * spec.ratio ** spec.depth
    return max(0, math.ceil(math.log2(spec.length / piece)))


def cantor_generate(spec: CantorSpec, grid_depth: int | None = None) -> DyadicCellSet:
    """Depth-d approximation snapped outward to the enclosing dyadic grid.

    The torus is the ambient interval itself; embed with
    DyadicCellSet.rescaled_to_side to place the set on a larger torus.
    """
    depth = dyadic_depth_for(spec) if grid_depth is None else grid_depth
    if depth > 26:
        raise ValueError("requested construction depth needs an impractically fine grid")
    if grid_depth is not None and grid_depth < dyadic_depth_for(spec):
        raise ValueError("grid depth too coarse for the construction depth")
    return DyadicCellSet.from_intervals(cantor_intervals(spec), spec.length, depth)


def product_with_interval(s: DyadicCellSet, extra_dims: int) -> DyadicCellSet:
    """Cartesian product with full intervals; dimension adds one per factor."""
    return s.product_with_full(extra_dims)


def box_dim(s: DyadicCellSet, depths: tuple[int, int] | None = None) -> BoxDimEstimate:
    """Box-counting estimate over a range of dyadic depths.

    depths is an inclusive (min, max) range; at least 3 depths are needed.
    An empty set yields slope 0 with the degenerate flag raised.
    """
    if depths is None:
        depths = (2, s.depth)
    lo, hi = depths
    if hi > s.depth:
        raise ValueError("depth range exceeds the set's resolution")
    qs = np.arange(lo, hi + 1)
    if len(qs) < 3:
        raise ValueError("at least 3 depths are required for a slope")
    if s.is_empty:
        return BoxDimEstimate(qs, np.zeros(len(qs), dtype=np.int64), 0.0, 0.0, True)
    counts = np.array([s.count_at_depth(int(q)) for q in qs], dtype=np.int64)
    log_inv_delta = qs * math.log(2.0) - math.log(s.side)
    log_counts = np.log(counts.astype(float))
    slope, intercept = np.polyfit(log_inv_delta, log_counts, 1)
    fit = slope * log_inv_delta + intercept
    residual = float(np.max(np.abs(fit - log_counts)))
    return BoxDimEstimate(qs, counts, float(slope), residual)


def box_dim_rows(est: BoxDimEstimate, side: float) -> list[dict]:
    """CSV-ready rows: depth, count, log_inv_delta, log_count."""
    rows = []
    for q, n in zip(est.depths, est.counts):
        rows.append({
            "depth": int(q),
            "count": int(n),
            "log_inv_delta": float(q * math.log(2.0) - math.log(side)),
            "log_count": float(math.log(n)) if n > 0 else float("-inf"),
        })
    return rows
