"""Exterior algebra kernel on flat coordinate ambients.

Dense k-vectors and k-forms over sorted index tuples, wedge products,
diagonal metrics, metric duals, and the numerical dimension of subspace
intersections.  Everything here is exact linear algebra at desk scale
(ambient dimension <= 8 or so); objects are immutable after construction
and all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np


class DimensionMismatchError(ValueError):
    """Operands live on different ambients or have incompatible degrees."""


class DegenerateFrameError(ValueError):
    """A frame whose vectors are (numerically) linearly dependent."""


# ---------------------------------------------------------------------------
# index bookkeeping
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def index_tuples(m: int, k: int) -> tuple[tuple[int, ...], ...]:
    """All strictly increasing k-tuples drawn from range(m), sorted."""
    if k < 0 or k > m:
        return ()
    return tuple(combinations(range(m), k))


@lru_cache(maxsize=None)
def tuple_position(m: int, k: int) -> Mapping[tuple[int, ...], int]:
    return {t: i for i, t in enumerate(index_tuples(m, k))}


@lru_cache(maxsize=None)
def _tuple_array(m: int, k: int) -> np.ndarray:
    arr = np.array(index_tuples(m, k), dtype=np.intp)
    return arr.reshape(-1, k)


@lru_cache(maxsize=None)
def _wedge_terms_by_output(m: int, ka: int, kb: int):
    """For each output (ka+kb)-tuple, the list of (ia, ib, sign) terms.

    The sign is the parity of the shuffle merging tuple ia with tuple ib.
    """
    out_pos = tuple_position(m, ka + kb)
    terms: list[list[tuple[int, int, float]]] = [[] for _ in out_pos]
    ts_a = index_tuples(m, ka)
    ts_b = index_tuples(m, kb)
    pos_b = tuple_position(m, kb)
    for ia, ta in enumerate(ts_a):
        sa = set(ta)
        rest = [c for c in range(m) if c not in sa]
        for tb in combinations(rest, kb):
            ib = pos_b[tb]
            merged = tuple(sorted(ta + tb))
            # parity of the permutation sorting (ta, tb) -> merged
            inv = 0
            for x in ta:
                for y in tb:
                    if y < x:
                        inv += 1
            sign = -1.0 if inv % 2 else 1.0
            terms[out_pos[merged]].append((ia, ib, sign))
    return tuple(tuple(t) for t in terms)


@lru_cache(maxsize=None)
def contraction_table(m: int, k: int):
    """Tables for the interior product e_a . phi of a degree-k tensor.

    Returns, per ambient axis a, three parallel integer/float arrays
    (out_index, in_index, sign) so that (e_a . phi)[out] = sign * phi[in].
    """
    pos_out = tuple_position(m, k - 1)
    pos_in = tuple_position(m, k)
    per_axis = []
    for a in range(m):
        outs, ins, signs = [], [], []
        for tj in index_tuples(m, k - 1):
            if a in tj:
                continue
            merged = tuple(sorted(tj + (a,)))
            p = merged.index(a)
            outs.append(pos_out[tj])
            ins.append(pos_in[merged])
            signs.append(-1.0 if p % 2 else 1.0)
        per_axis.append((np.array(outs, dtype=np.intp),
                         np.array(ins, dtype=np.intp),
                         np.array(signs)))
    return tuple(per_axis)


# ---------------------------------------------------------------------------
# fast small determinants (stacked)
# ---------------------------------------------------------------------------

def det_stacked(a: np.ndarray) -> np.ndarray:
    """Determinants of stacked k x k matrices, k <= 4, via direct expansion."""
    k = a.shape[-1]
    if k == 0:
        return np.ones(a.shape[:-2])
    if k == 1:
        return a[..., 0, 0]
    if k == 2:
        return a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
    if k == 3:
        return (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
                - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
                + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]))
    if k == 4:
        out = np.zeros(a.shape[:-2])
        rows = [1, 2, 3]
        for c in range(4):
            cols = [cc for cc in range(4) if cc != c]
            minor = a[..., rows, :][..., :, cols]
            term = a[..., 0, c] * det_stacked(minor)
            out = out + term if c % 2 == 0 else out - term
        return out
    return np.linalg.det(a)


# ---------------------------------------------------------------------------
# metrics and frames
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BlockMetric:
    """Diagonal metric on R^m given by positive per-coordinate weights.

    The induced norm of the coordinate vector e_i is sqrt(weights[i]).
    Conformal factors on contiguous coordinate blocks are expressed by
    multiplying the block weights, see :meth:`with_block_factor`.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty 1-d sequence")
        if not np.all(w > 0):
            raise ValueError("metric weights must be strictly positive")
        object.__setattr__(self, "weights", w)
        self.weights.setflags(write=False)

    @classmethod
    def flat(cls, m: int) -> "BlockMetric":
        return cls(np.ones(m))

    @property
    def dim(self) -> int:
        return int(self.weights.size)

    def scaled(self, factor: float) -> "BlockMetric":
        """The conformally rescaled metric factor * g."""
        if factor <= 0:
            raise ValueError("conformal factor must be positive")
        return BlockMetric(self.weights * factor)

    def with_block_factor(self, start: int, stop: int, factor: float) -> "BlockMetric":
        """Multiply the weights of coordinates [start, stop) by factor."""
        if factor <= 0:
            raise ValueError("block factor must be positive")
        w = self.weights.copy()
        w[start:stop] *= factor
        return BlockMetric(w)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u * self.weights, v))

    def norm(self, v: np.ndarray) -> float:
        return math.sqrt(self.inner(v, v))


@dataclass(frozen=True, eq=False)
class Frame:
    """An ordered list of k vectors in R^m spanning an oriented k-plane."""

    vectors: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=float)
        if v.ndim != 2:
            raise ValueError("frame vectors must form a (k, m) array")
        object.__setattr__(self, "vectors", v)
        self.vectors.setflags(write=False)

    @property
    def k(self) -> int:
        return int(self.vectors.shape[0])

    @property
    def ambient_dim(self) -> int:
        return int(self.vectors.shape[1])

    def orthonormalize(self, metric: BlockMetric | None = None) -> "Frame":
        """Modified Gram-Schmidt under the metric, re-orthogonalized once.

        Raises DegenerateFrameError when the vectors are numerically
        dependent.
        """
        g = metric if metric is not None else BlockMetric.flat(self.ambient_dim)
        if g.dim != self.ambient_dim:
            raise DimensionMismatchError("metric dimension does not match frame")
        v = self.vectors.copy()
        scale = max(g.norm(row) for row in v)
        if scale == 0.0:
            raise DegenerateFrameError("zero frame")
        out = np.zeros_like(v)
        for i in range(self.k):
            u = v[i].copy()
            for _ in range(2):  # one re-orthogonalization pass
                for p in range(i):
                    u -= g.inner(u, out[p]) * out[p]
            n = g.norm(u)
            if n <= 1e-13 * scale:
                raise DegenerateFrameError(
                    f"frame vector {i} is dependent on the previous ones")
            out[i] = u / n
        return Frame(out)

    def gram(self, metric: BlockMetric | None = None) -> np.ndarray:
        g = metric if metric is not None else BlockMetric.flat(self.ambient_dim)
        return (self.vectors * g.weights) @ self.vectors.T


# ---------------------------------------------------------------------------
# alternating tensors
# ---------------------------------------------------------------------------

class _Alternating:
    """Shared storage for k-vectors and k-forms: dense coefficients over
    the sorted k-tuples of the ambient axes."""

    __slots__ = ("degree", "ambient_dim", "coeffs")

    def __init__(self, degree: int, ambient_dim: int,
                 coeffs: np.ndarray | Mapping[tuple[int, ...], float] | None = None):
        if degree < 0 or ambient_dim <= 0 or degree > ambient_dim:
            raise ValueError(f"invalid degree {degree} for ambient {ambient_dim}")
        self.degree = degree
        self.ambient_dim = ambient_dim
        n = len(index_tuples(ambient_dim, degree))
        if coeffs is None:
            arr = np.zeros(n)
        elif isinstance(coeffs, Mapping):
            arr = np.zeros(n)
            pos = tuple_position(ambient_dim, degree)
            for t, c in coeffs.items():
                key = tuple(t)
                if key not in pos:
                    raise ValueError(f"index tuple {key} is not sorted/valid for "
                                     f"degree {degree} in dimension {ambient_dim}")
                arr[pos[key]] = float(c)
        else:
            arr = np.asarray(coeffs, dtype=float).copy()
            if arr.shape != (n,):
                raise ValueError(f"expected {n} coefficients, got {arr.shape}")
        arr.setflags(write=False)
        self.coeffs = arr

    # -- basic protocol ----------------------------------------------------
    def _check_partner(self, other: "_Alternating"):
        if type(self) is not type(other):
            raise DimensionMismatchError(
                f"cannot combine {type(self).__name__} with {type(other).__name__}")
        if self.ambient_dim != other.ambient_dim:
            raise DimensionMismatchError("ambient dimensions differ")

    def coefficient(self, idx: Iterable[int]) -> float:
        return float(self.coeffs[tuple_position(self.ambient_dim, self.degree)[tuple(idx)]])

    def as_dict(self) -> dict[tuple[int, ...], float]:
        ts = index_tuples(self.ambient_dim, self.degree)
        return {t: float(c) for t, c in zip(ts, self.coeffs) if c != 0.0}

    def __add__(self, other):
        self._check_partner(other)
        if self.degree != other.degree:
            raise DimensionMismatchError("degrees differ")
        return type(self)(self.degree, self.ambient_dim, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_partner(other)
        if self.degree != other.degree:
            raise DimensionMismatchError("degrees differ")
        return type(self)(self.degree, self.ambient_dim, self.coeffs - other.coeffs)

    def __mul__(self, c: float):
        return type(self)(self.degree, self.ambient_dim, self.coeffs * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return (f"{type(self).__name__}(degree={self.degree}, "
                f"ambient={self.ambient_dim}, terms={self.as_dict()})")

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0


class Multivector(_Alternating):
    """A k-vector: a degree-k alternating contravariant tensor."""

    def norm(self, metric: BlockMetric | None = None) -> float:
        g = metric if metric is not None else BlockMetric.flat(self.ambient_dim)
        prods = np.prod(g.weights[_tuple_array(self.ambient_dim, self.degree)], axis=1) \
            if self.degree else np.ones(1)
        return math.sqrt(float(np.dot(self.coeffs * prods, self.coeffs)))


class FormK(_Alternating):
    """A k-form: a degree-k alternating covariant tensor."""

    def norm(self, metric: BlockMetric | None = None) -> float:
        g = metric if metric is not None else BlockMetric.flat(self.ambient_dim)
        prods = np.prod(g.weights[_tuple_array(self.ambient_dim, self.degree)], axis=1) \
            if self.degree else np.ones(1)
        return math.sqrt(float(np.dot(self.coeffs / prods, self.coeffs)))


def basis_vector(m: int, axis: int) -> Multivector:
    return Multivector(1, m, {(axis,): 1.0})


def basis_form(m: int, idx: Iterable[int]) -> FormK:
    t = tuple(idx)
    return FormK(len(t), m, {t: 1.0})


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def wedge(a: _Alternating, b: _Alternating) -> _Alternating:
    """Wedge product of two k-vectors or two k-forms.

    Coefficient sums are accumulated with math.fsum, so the result is the
    correctly rounded sum of the products and wedge(a, b) equals
    (-1)^(deg a * deg b) * wedge(b, a) exactly at coefficient level.
    """
    a._check_partner(b)
    m = a.ambient_dim
    if a.degree + b.degree > m:
        raise DimensionMismatchError(
            f"wedge degree {a.degree}+{b.degree} exceeds ambient {m}")
    terms = _wedge_terms_by_output(m, a.degree, b.degree)
    ca, cb = a.coeffs, b.coeffs
    out = np.empty(len(terms))
    for io, lst in enumerate(terms):
        out[io] = math.fsum(s * (ca[ia] * cb[ib]) for ia, ib, s in lst)
    return type(a)(a.degree + b.degree, m, out)


def wedge_all(factors: Iterable[_Alternating]) -> _Alternating:
    it = iter(factors)
    acc = next(it)
    for f in it:
        acc = wedge(acc, f)
    return acc


def evaluate(phi: FormK, xi: Multivector) -> float:
    """Bilinear pairing of a k-form with a k-vector."""
    if not isinstance(phi, FormK) or not isinstance(xi, Multivector):
        raise DimensionMismatchError("evaluate expects (FormK, Multivector)")
    if phi.ambient_dim != xi.ambient_dim:
        raise DimensionMismatchError("ambient dimensions differ")
    if phi.degree != xi.degree:
        raise DimensionMismatchError(
            f"degree mismatch: form {phi.degree}, vector {xi.degree}")
    return float(np.dot(phi.coeffs, xi.coeffs))


def frame_wedge_coeffs(vectors: np.ndarray) -> np.ndarray:
    """Coefficients of v_1 ^ ... ^ v_k for the rows of a (k, m) array."""
    k, m = vectors.shape
    if k == 0:
        return np.ones(1)
    tuples = _tuple_array(m, k)
    minors = vectors[:, tuples]          # (k, C, k)
    minors = np.swapaxes(minors, 0, 1)   # (C, k, k): rows = vectors
    return det_stacked(minors)


def simple_from_frame(frame: Frame, metric: BlockMetric | None = None) -> Multivector:
    """The unit simple k-vector of the oriented plane spanned by the frame.

    Independent of the choice of spanning basis up to orientation; the
    result has norm one in the supplied metric.
    """
    on = frame.orthonormalize(metric)
    return Multivector(frame.k, frame.ambient_dim, frame_wedge_coeffs(on.vectors))


def dual_form(v: Multivector, metric: BlockMetric | None = None) -> FormK:
    """Metric dual (musical isomorphism on each index) of a k-vector."""
    g = metric if metric is not None else BlockMetric.flat(v.ambient_dim)
    if g.dim != v.ambient_dim:
        raise DimensionMismatchError("metric dimension does not match")
    if v.degree == 0:
        return FormK(0, v.ambient_dim, v.coeffs.copy())
    prods = np.prod(g.weights[_tuple_array(v.ambient_dim, v.degree)], axis=1)
    return FormK(v.degree, v.ambient_dim, v.coeffs * prods)


def contract(phi: _Alternating, axis: int) -> _Alternating:
    """Interior product e_axis . phi (degree drops by one)."""
    if phi.degree == 0:
        raise DimensionMismatchError("cannot contract a degree-0 tensor")
    outs, ins, signs = contraction_table(phi.ambient_dim, phi.degree)[axis]
    out = np.zeros(len(index_tuples(phi.ambient_dim, phi.degree - 1)))
    out[outs] = signs * phi.coeffs[ins]
    return type(phi)(phi.degree - 1, phi.ambient_dim, out)


def intersection_dimension(a: Frame, b: Frame, tol: float = 1e-8) -> int:
    """Numerical dimension of span(a) & span(b).

    Both frames are orthonormalized, stacked, and the number of singular
    values of the stacked matrix below tol is returned.  Symmetric in the
    arguments and bounded by min(deg a, deg b).
    """
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatchError("frames live in different ambients")
    va = a.orthonormalize().vectors
    vb = b.orthonormalize().vectors
    stacked = np.vstack([va, vb])
    sv = np.linalg.svd(stacked, compute_uv=False)
    # dim(span a + span b) is the rank, so the defect counts shared directions
    rank = int(np.sum(sv > tol))
    return a.k + b.k - rank
