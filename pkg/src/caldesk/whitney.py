"""Smooth functions on flat tori vanishing exactly on a prescribed cell set.

The construction is the classical one: cover the complement of the set K
by dyadic cubes whose sidelength is comparable to their distance to K
(stop subdividing once dist >= 2 * side), put a smooth radial bump over a
slightly dilated ball around each cube, and damp the coefficients by
side^(L+1) and a summable per-generation weight so every derivative sum
up to order L converges and the C^L size is prescribable by one global
rescale.  The sum vanishes exactly on K (no bump support touches K) and
is strictly positive on every covered point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product as iter_product
from typing import Iterable, Sequence

import numpy as np

from caldesk.cells import DyadicCellSet

# Balls are dilated cubes: radius = DILATION * (side/2) * sqrt(j).  The
# dilation keeps every point of the closed cube interior to its ball while
# the ball still clears the Whitney distance margin (radius < side < 2*side
# <= dist to K).
DILATION = 1.25

# Beyond this value of 1/(1 - |u|^2) the profile underflows double
# precision after any derivative polynomial we use; treated as exact zero.
_V_CUTOFF = 700.0


# ---------------------------------------------------------------------------
# radial bump profile with closed-form derivatives
# ---------------------------------------------------------------------------

def multi_indices(dim: int, max_order: int) -> list[tuple[int, ...]]:
    """All derivative multi-indices with |m| <= max_order, sorted."""
    out = [m for m in iter_product(range(max_order + 1), repeat=dim)
           if sum(m) <= max_order]
    out.sort(key=lambda m: (sum(m), m))
    return out


@lru_cache(maxsize=None)
def _profile_terms(dim: int, deriv: tuple[int, ...]):
    """Terms of D^deriv exp(-1/(1-|u|^2)) as sum of c * u^a * v^q * e^(-v).

    v = 1/(1-|u|^2); differentiating uses d_i v = 2 u_i v^2.  Returns
    (exponents, coeffs) with exponents of shape (T, dim+1): the first dim
    columns are the u-powers, the last the v-power.
    """
    terms: dict[tuple[int, ...], float] = {tuple([0] * dim + [0]): 1.0}
    for axis, reps in enumerate(deriv):
        for _ in range(reps):
            nxt: dict[tuple[int, ...], float] = {}

            def add(key, c):
                nxt[key] = nxt.get(key, 0.0) + c

            for key, c in terms.items():
                a = list(key[:dim])
                q = key[dim]
                if a[axis] > 0:
                    k2 = a.copy()
                    k2[axis] -= 1
                    add(tuple(k2 + [q]), c * a[axis])
                k3 = a.copy()
                k3[axis] += 1
                if q > 0:
                    add(tuple(k3 + [q + 1]), 2.0 * c * q)
                add(tuple(k3 + [q + 2]), -2.0 * c)
            terms = {k: v for k, v in nxt.items() if v != 0.0}
    if not terms:
        return np.zeros((0, dim + 1), dtype=np.int64), np.zeros(0)
    keys = sorted(terms)
    exps = np.array(keys, dtype=np.int64)
    coeffs = np.array([terms[k] for k in keys])
    return exps, coeffs


def profile_eval(u: np.ndarray, deriv: tuple[int, ...]) -> np.ndarray:
    """Evaluate D^deriv of the unit bump at points u of shape (P, dim)."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    dim = u.shape[1]
    s2 = np.sum(u * u, axis=1)
    out = np.zeros(len(u))
    inside = s2 < 1.0 - 1.0 / _V_CUTOFF
    if not np.any(inside):
        return out
    ui = u[inside]
    v = 1.0 / (1.0 - s2[inside])
    exps, coeffs = _profile_terms(dim, tuple(deriv))
    if len(coeffs) == 0:
        return out
    acc = np.zeros(len(ui))
    for e, c in zip(exps, coeffs):
        term = np.full(len(ui), c)
        for d in range(dim):
            if e[d]:
                term = term * ui[:, d] ** int(e[d])
        if e[dim]:
            term = term * v ** int(e[dim])
        acc += term
    out[inside] = acc * np.exp(-v)
    return out


# ---------------------------------------------------------------------------
# Whitney cover
# ---------------------------------------------------------------------------

def _box_set_distance(center: np.ndarray, half: float, k_centers: np.ndarray,
                      k_half: float, side: float) -> float:
    """Exact distance between an axis cube and a union of axis cells (torus)."""
    if len(k_centers) == 0:
        return math.inf
    delta = np.abs(center[None, :] - k_centers)
    delta = np.minimum(delta, side - delta)
    gaps = np.maximum(0.0, delta - (half + k_half))
    return float(np.sqrt(np.min(np.sum(gaps * gaps, axis=1))))


@dataclass(eq=False)
class WhitneyCover:
    """Dyadic cubes covering the complement of a cell set.

    Parallel arrays describe the cubes; dist_to_set records the exact
    distance from each closed cube to the set, so the sidelength/distance
    comparability is checkable exhaustively after every build.  No point
    lies in more ball supports than overlap_bound.
    """

    torus_dim: int
    side: float
    set_depth: int
    gens: np.ndarray            # (N,) generation of each cube
    indices: np.ndarray         # (N, torus_dim) lattice index at its generation
    dist_to_set: np.ndarray     # (N,) exact cube-to-set distance
    overlap_bound: int

    @property
    def count(self) -> int:
        return int(len(self.gens))

    def sidelengths(self) -> np.ndarray:
        return self.side / (2.0 ** self.gens)

    def centers(self) -> np.ndarray:
        return (self.indices + 0.5) * (self.side / (2.0 ** self.gens))[:, None]

    def radii(self) -> np.ndarray:
        return DILATION * 0.5 * math.sqrt(self.torus_dim) * self.sidelengths()

    def comparability_ratios(self) -> np.ndarray:
        """sidelength / distance for every cube (empty set gives inf dist)."""
        with np.errstate(divide="ignore"):
            return self.sidelengths() / self.dist_to_set


def whitney_cover(k_set: DyadicCellSet, *, extra_depth: int = 3) -> WhitneyCover:
    """Cover of the complement of k_set by distance-comparable dyadic cubes.

    Subdivision stops once a cube's distance to the set reaches twice its
    side; cubes still too close at set-resolution + extra_depth are
    dropped (they sit within a sub-cell shell around the set).  An empty
    set yields the single-scale uniform cover at generation 1; a full set
    yields an empty cover.
    """
    j, side, depth = k_set.torus_dim, k_set.side, k_set.depth
    max_gen = depth + extra_depth
    gens: list[int] = []
    idxs: list[tuple[int, ...]] = []
    dists: list[float] = []

    if k_set.is_empty:
        for idx in iter_product(range(2), repeat=j):
            gens.append(1)
            idxs.append(idx)
            dists.append(math.inf)
        return WhitneyCover(j, side, depth, np.array(gens, dtype=np.int64),
                            np.array(idxs, dtype=np.int64).reshape(-1, j),
                            np.array(dists), _overlap_bound(j))

    k_centers = k_set.cell_centers()
    k_half = 0.5 * k_set.cell_side

    stack: list[tuple[int, tuple[int, ...]]] = [(0, tuple([0] * j))]
    while stack:
        gen, idx = stack.pop()
        s = side / (1 << gen)
        center = (np.array(idx, dtype=float) + 0.5) * s
        dist = _box_set_distance(center, 0.5 * s, k_centers, k_half, side)
        if gen > 0 and dist >= 2.0 * s:
            gens.append(gen)
            idxs.append(idx)
            dists.append(dist)
            continue
        if gen >= max_gen:
            continue  # thin shell around the set, below certification scale
        if dist == 0.0 and gen <= depth and _cube_subset_of_set(k_set, gen, idx):
            continue  # entirely inside the set: no complement to cover here
        for child in iter_product(range(2), repeat=j):
            cidx = tuple(2 * idx[d] + child[d] for d in range(j))
            stack.append((gen + 1, cidx))

    gens_a = np.array(gens, dtype=np.int64)
    idxs_a = np.array(idxs, dtype=np.int64).reshape(-1, j)
    dists_a = np.array(dists)
    return WhitneyCover(j, side, depth, gens_a, idxs_a, dists_a, _overlap_bound(j))


def _cube_subset_of_set(k_set: DyadicCellSet, gen: int, idx: tuple[int, ...]) -> bool:
    shift = k_set.depth - gen
    if shift < 0:
        return False
    coarse = k_set.cells >> shift
    hit = np.all(coarse == np.array(idx, dtype=np.int64)[None, :], axis=1)
    return int(np.sum(hit)) == 1 << (shift * k_set.torus_dim)


def _overlap_bound(j: int) -> int:
    # <= 2^j balls per generation can reach a point, over the <= 4
    # generations allowed by the distance comparability window
    return 4 * 2 ** j


# ---------------------------------------------------------------------------
# the vanishing function
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SmoothFunction:
    """Locally finite sum of damped bumps over a Whitney cover.

    Vanishes exactly (floating-point zero) on the represented set and on
    nothing else that any cube ball covers; derivatives up to `order` are
    evaluated from the closed-form profile terms, never by differencing.
    """

    torus_dim: int
    side: float
    order: int
    cover: WhitneyCover
    coefficients: np.ndarray
    set_depth: int

    def __post_init__(self):
        self._centers = self.cover.centers()
        self._radii = self.cover.radii()
        self._gens = self.cover.gens
        self._buckets: dict[tuple[int, tuple[int, ...]], list[int]] = {}
        for i in range(self.cover.count):
            g = int(self._gens[i])
            n = 1 << g
            idx = self.cover.indices[i]
            for off in iter_product((-1, 0, 1), repeat=self.torus_dim):
                key = (g, tuple(int((idx[d] + off[d]) % n) for d in range(self.torus_dim)))
                self._buckets.setdefault(key, []).append(i)
        self._gen_list = sorted(set(int(g) for g in self._gens))

    # -- evaluation ------------------------------------------------------

    def _candidates(self, p: np.ndarray) -> list[int]:
        out: list[int] = []
        for g in self._gen_list:
            n = 1 << g
            h = self.side / n
            key = (g, tuple(int(math.floor(p[d] / h)) % n for d in range(self.torus_dim)))
            out.extend(self._buckets.get(key, ()))
        return out

    def eval(self, p: Sequence[float], deriv: Sequence[int] | None = None) -> float:
        """Value or exact partial derivative at a point.

        deriv is a multi-index of length torus_dim; its order must not
        exceed the guaranteed order of the function.
        """
        d = tuple(deriv) if deriv is not None else tuple([0] * self.torus_dim)
        if len(d) != self.torus_dim:
            raise ValueError("derivative multi-index has wrong length")
        total = sum(d)
        if total > self.order:
            raise ValueError(f"derivative order {total} exceeds guaranteed order {self.order}")
        p = np.asarray(p, dtype=float) % self.side
        ids = self._candidates(p)
        if not ids:
            return 0.0
        acc = 0.0
        for i in ids:
            r = self._radii[i]
            delta = p - self._centers[i]
            delta -= self.side * np.round(delta / self.side)
            u = delta / r
            val = profile_eval(u[None, :], d)[0]
            if val != 0.0:
                acc += self.coefficients[i] * val / r ** total
        return acc

    def value(self, p: Sequence[float]) -> float:
        return self.eval(p)

    def gradient(self, p: Sequence[float]) -> np.ndarray:
        g = np.zeros(self.torus_dim)
        for d in range(self.torus_dim):
            m = [0] * self.torus_dim
            m[d] = 1
            g[d] = self.eval(p, m)
        return g

    def hessian(self, p: Sequence[float]) -> np.ndarray:
        h = np.zeros((self.torus_dim, self.torus_dim))
        for a in range(self.torus_dim):
            for b in range(a, self.torus_dim):
                m = [0] * self.torus_dim
                m[a] += 1
                m[b] += 1
                h[a, b] = h[b, a] = self.eval(p, m)
        return h

    # -- grid sweeps -------------------------------------------------------

    def grid_values(self, depth: int, deriv: Sequence[int] | None = None) -> np.ndarray:
        """Values (or one derivative) at all cell centers of a dyadic grid."""
        d = tuple(deriv) if deriv is not None else tuple([0] * self.torus_dim)
        total = sum(d)
        if total > self.order:
            raise ValueError("derivative order exceeds guaranteed order")
        n = 1 << depth
        h = self.side / n
        out = np.zeros((n,) * self.torus_dim)
        for i in range(self.cover.count):
            r = self._radii[i]
            c = self._centers[i]
            axes_idx = []
            axes_off = []
            for dd in range(self.torus_dim):
                lo = math.floor((c[dd] - r) / h - 0.5)
                hi = math.ceil((c[dd] + r) / h - 0.5)
                count = min(hi - lo + 1, n)
                ii = (np.arange(lo, lo + count)) % n
                coords = (np.arange(lo, lo + count) + 0.5) * h
                off = coords - c[dd]
                axes_idx.append(ii)
                axes_off.append(off)
            mesh = np.meshgrid(*axes_off, indexing="ij")
            pts = np.stack([mm.ravel() for mm in mesh], axis=1) / r
            vals = profile_eval(pts, d) * (self.coefficients[i] / r ** total)
            block = vals.reshape([len(ii) for ii in axes_idx])
            out[np.ix_(*axes_idx)] += block
        return out

    def ck_norm(self, order: int, grid_depth: int | None = None) -> float:
        """Max over the sample grid of all derivative magnitudes up to order.

        A lower bound for the true C^order norm, used as acceptance proxy.
        """
        if order > self.order:
            raise ValueError("requested order exceeds guaranteed order")
        depth = grid_depth if grid_depth is not None else self.set_depth + 1
        worst = 0.0
        for m in multi_indices(self.torus_dim, order):
            vals = self.grid_values(depth, m)
            worst = max(worst, float(np.max(np.abs(vals))))
        return worst

    def zero_cells(self, depth: int | None = None) -> DyadicCellSet:
        """Cells whose centers evaluate to exact zero."""
        d = depth if depth is not None else self.set_depth
        vals = self.grid_values(d)
        idx = np.argwhere(vals == 0.0).astype(np.int64)
        return DyadicCellSet(self.torus_dim, self.side, d, idx)

    def rescaled(self, factor: float) -> "SmoothFunction":
        return SmoothFunction(self.torus_dim, self.side, self.order, self.cover,
                              self.coefficients * factor, self.set_depth)

    @property
    def is_zero(self) -> bool:
        return self.cover.count == 0 or bool(np.all(self.coefficients == 0.0))


def build_vanishing_function(k_set: DyadicCellSet, eps: float, order: int,
                             *, extra_depth: int = 3,
                             norm_grid_depth: int | None = None) -> SmoothFunction:
    """Smooth function with zero set k_set and sampled C^order norm <= eps.

    Coefficients are side^(order+1) * 4^(-generation) per cube, then one
    global rescale pins the sampled norm to eps.  A full-torus set yields
    the zero function.
    """
    if eps <= 0:
        raise ValueError("norm bound eps must be positive")
    if order < 0:
        raise ValueError("order must be nonnegative")
    cover = whitney_cover(k_set, extra_depth=extra_depth)
    sides = cover.sidelengths()
    coeffs = sides ** (order + 1) * 4.0 ** (-cover.gens.astype(float))
    f = SmoothFunction(k_set.torus_dim, k_set.side, order, cover, coeffs,
                       k_set.depth)
    if cover.count == 0:
        return f
    norm = f.ck_norm(order, norm_grid_depth)
    if norm > 0.0:
        f = f.rescaled(eps / norm)
    return f
