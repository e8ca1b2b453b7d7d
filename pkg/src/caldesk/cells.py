"""Dyadic cell sets on flat tori.

A compact set is represented as a finite union of closed dyadic grid
cells at a single resolution: cells of side torus_side / 2**depth indexed
by integer tuples.  The representation is shared by the vanishing-function
builder, the fractal generators and the singular-set extraction.

Serialization: a text file with one line per cell, ``depth i1 ... ij``,
UTF-8 with LF line endings.  The torus side is external metadata supplied
by the caller on load.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


def _as_cell_array(cells, torus_dim: int) -> np.ndarray:
    arr = np.asarray(list(cells) if not isinstance(cells, np.ndarray) else cells,
                     dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, torus_dim), dtype=np.int64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape[1] != torus_dim:
        raise ValueError(f"cell tuples have {arr.shape[1]} indices, expected {torus_dim}")
    return arr


@dataclass(frozen=True, eq=False)
class DyadicCellSet:
    """A union of closed dyadic cells on the torus [0, side)^torus_dim."""

    torus_dim: int
    side: float
    depth: int
    cells: np.ndarray  # (N, torus_dim) int64, lexicographically sorted, unique

    def __post_init__(self):
        if self.torus_dim < 1:
            raise ValueError("torus dimension must be at least 1")
        if self.side <= 0:
            raise ValueError("torus side must be positive")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        arr = _as_cell_array(self.cells, self.torus_dim)
        n = 1 << self.depth
        if arr.size and (arr.min() < 0 or arr.max() >= n):
            raise ValueError("cell index out of range for depth")
        keys = self._keys_of(arr)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        arr = arr[order]
        keep = np.ones(len(arr), dtype=bool)
        if len(arr) > 1:
            keep[1:] = keys[1:] != keys[:-1]
        arr = arr[keep]
        arr.setflags(write=False)
        object.__setattr__(self, "cells", arr)
        object.__setattr__(self, "_keys", keys[keep])

    # -- constructors --------------------------------------------------

    @classmethod
    def empty(cls, torus_dim: int, side: float, depth: int) -> "DyadicCellSet":
        return cls(torus_dim, side, depth, np.zeros((0, torus_dim), dtype=np.int64))

    @classmethod
    def full(cls, torus_dim: int, side: float, depth: int) -> "DyadicCellSet":
        n = 1 << depth
        grids = np.meshgrid(*[np.arange(n)] * torus_dim, indexing="ij")
        cells = np.stack([g.ravel() for g in grids], axis=1)
        return cls(torus_dim, side, depth, cells)

    @classmethod
    def from_intervals(cls, intervals: Sequence[tuple[float, float]],
                       side: float, depth: int) -> "DyadicCellSet":
        """1-d set covering the intervals, endpoints rounded outward."""
        n = 1 << depth
        h = side / n
        idx: list[int] = []
        for a, b in intervals:
            if b < a:
                raise ValueError("interval endpoints out of order")
            lo = int(np.floor(a / h + 1e-12))
            hi = int(np.ceil(b / h - 1e-12))
            hi = max(hi, lo + 1)
            idx.extend(i % n for i in range(lo, hi))
        return cls(1, side, depth, np.array(idx, dtype=np.int64).reshape(-1, 1))

    # -- bookkeeping ----------------------------------------------------

    def _keys_of(self, arr: np.ndarray) -> np.ndarray:
        base = np.int64(1) << np.int64(self.depth)
        keys = np.zeros(len(arr), dtype=np.int64)
        for d in range(self.torus_dim):
            keys = keys * base + arr[:, d]
        return keys

    @property
    def count(self) -> int:
        return int(len(self.cells))

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    @property
    def cell_side(self) -> float:
        return self.side / (1 << self.depth)

    def contains_cells(self, idx: np.ndarray) -> np.ndarray:
        """Vectorized membership for an (N, torus_dim) index array."""
        idx = _as_cell_array(idx, self.torus_dim)
        if self.is_empty or len(idx) == 0:
            return np.zeros(len(idx), dtype=bool)
        keys = self._keys_of(idx)
        stored = self._keys
        pos = np.searchsorted(stored, keys)
        pos = np.clip(pos, 0, len(stored) - 1)
        return stored[pos] == keys

    def contains_cell(self, idx: Iterable[int]) -> bool:
        return bool(self.contains_cells(np.array([list(idx)]))[0])

    def cell_of_point(self, p: np.ndarray) -> np.ndarray:
        n = 1 << self.depth
        return (np.floor(np.asarray(p, dtype=float) / self.cell_side).astype(np.int64)) % n

    def contains_point(self, p: np.ndarray) -> bool:
        """Whether the point lies in the closed cell union.

        A point on a shared face belongs to every adjacent cell, so all
        cells within index distance 1 whose closure contains p count.
        """
        p = np.asarray(p, dtype=float)
        h = self.cell_side
        n = 1 << self.depth
        lo = np.floor(p / h - 1e-12).astype(np.int64)
        hi = np.floor(p / h + 1e-12).astype(np.int64)
        ranges = [np.unique([lo[d] % n, hi[d] % n]) for d in range(self.torus_dim)]
        grids = np.meshgrid(*ranges, indexing="ij")
        cand = np.stack([g.ravel() for g in grids], axis=1)
        return bool(np.any(self.contains_cells(cand)))

    def cell_centers(self) -> np.ndarray:
        return (self.cells + 0.5) * self.cell_side

    # -- transforms -------------------------------------------------------

    def coarsened(self, depth: int) -> "DyadicCellSet":
        """The covering of this set by cells at a coarser depth."""
        if depth > self.depth:
            raise ValueError("coarsened target depth exceeds current depth")
        shift = self.depth - depth
        return DyadicCellSet(self.torus_dim, self.side, depth, self.cells >> shift)

    def count_at_depth(self, depth: int) -> int:
        if self.is_empty:
            return 0
        return self.coarsened(depth).count

    def rescaled_to_side(self, new_side: float) -> "DyadicCellSet":
        """Embed into a torus whose side is a power-of-two multiple.

        Cell geometry (absolute positions and sizes) is unchanged; only the
        depth bookkeeping adapts.
        """
        ratio = new_side / self.side
        k = int(round(np.log2(ratio)))
        if not np.isclose(ratio, 2.0 ** k) or k < 0:
            raise ValueError("new side must be a 2^k multiple of the old side")
        return DyadicCellSet(self.torus_dim, new_side, self.depth + k, self.cells)

    def product_with_full(self, extra_dims: int) -> "DyadicCellSet":
        """Cartesian product with the full torus in extra trailing axes."""
        if extra_dims < 0:
            raise ValueError("extra_dims must be nonnegative")
        if extra_dims == 0:
            return self
        if self.is_empty:
            return DyadicCellSet.empty(self.torus_dim + extra_dims, self.side, self.depth)
        n = 1 << self.depth
        full = DyadicCellSet.full(extra_dims, self.side, self.depth)
        a = np.repeat(self.cells, full.count, axis=0)
        b = np.tile(full.cells, (self.count, 1))
        return DyadicCellSet(self.torus_dim + extra_dims, self.side, self.depth,
                             np.hstack([a, b]))

    def union(self, other: "DyadicCellSet") -> "DyadicCellSet":
        if (other.torus_dim, other.side, other.depth) != (self.torus_dim, self.side, self.depth):
            raise ValueError("cell sets must share torus and depth")
        return DyadicCellSet(self.torus_dim, self.side, self.depth,
                             np.vstack([self.cells, other.cells]))


def hausdorff_cell_distance(a: DyadicCellSet, b: DyadicCellSet) -> float:
    """Symmetric Hausdorff distance between two cell sets, in cell units.

    Distances are Chebyshev lattice distances on the index torus; two
    equal sets are at distance 0, a set and its one-cell dilation at 1.
    Infinity when exactly one set is empty.
    """
    if (a.torus_dim, a.side, a.depth) != (b.torus_dim, b.side, b.depth):
        raise ValueError("cell sets must share torus and depth")
    if a.is_empty and b.is_empty:
        return 0.0
    if a.is_empty or b.is_empty:
        return float("inf")
    n = 1 << a.depth

    def one_sided(src: np.ndarray, dst: np.ndarray) -> float:
        worst = 0
        for chunk in np.array_split(src, max(1, len(src) // 512)):
            d = np.abs(chunk[:, None, :] - dst[None, :, :])
            d = np.minimum(d, n - d)
            cheb = d.max(axis=2)
            worst = max(worst, int(cheb.min(axis=1).max()))
        return float(worst)

    return max(one_sided(a.cells, b.cells), one_sided(b.cells, a.cells))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def write_cells(path, s: DyadicCellSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for cell in s.cells:
            fh.write(str(s.depth) + " " + " ".join(str(int(i)) for i in cell) + "\n")


def read_cells(path, side: float = 1.0) -> DyadicCellSet:
    """Parse a cell-set file; the torus side is supplied by the caller."""
    rows: list[list[int]] = []
    depth: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                values = [int(p) for p in parts]
            except ValueError as exc:
                raise ValueError(f"{path}:{ln}: malformed cell line") from exc
            if len(values) < 2:
                raise ValueError(f"{path}:{ln}: expected 'depth i1 ... ij'")
            if depth is None:
                depth = values[0]
            elif values[0] != depth:
                raise ValueError(f"{path}:{ln}: mixed depths in one cell set")
            rows.append(values[1:])
    if depth is None:
        raise ValueError(f"{path}: no cells found; cannot infer depth/dimension")
    dim = len(rows[0])
    if any(len(r) != dim for r in rows):
        raise ValueError(f"{path}: inconsistent cell dimensions")
    return DyadicCellSet(dim, side, depth, np.array(rows, dtype=np.int64))
