"""Comass of differential forms.

Exact values for simple forms (Riemannian norm via the diagonal Gram
products) and a multi-start projected-gradient maximizer over unit simple
k-vectors for everything else.  The optimizer parametrizes oriented
k-planes by k-frames, ascends with a re-orthonormalization retraction,
and only ever reports certified *lower* bounds.

The two-block product form

    Psi(alpha, beta, lam, mu)
        = lam dx_1^...^dx_b ^ alpha* + mu dy_1^...^dy_b ^ beta*

with b >= 2 x-axes, b y-axes and l-planes alpha, beta in a trailing
factor R^m has comass at most one whenever |lam|, |mu| <= 1; the
coordinate planes [x-block ^ alpha] and [y-block ^ beta] are calibrated
by it exactly when lam = 1 resp. mu = 1 (reversed orientation for -1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from caldesk.exterior import (
    BlockMetric,
    DimensionMismatchError,
    FormK,
    Frame,
    Multivector,
    _tuple_array,
    basis_form,
    contract,
    contraction_table,
    det_stacked,
    evaluate,
    frame_wedge_coeffs,
    index_tuples,
    simple_from_frame,
    wedge,
)


class NotSimpleError(ValueError):
    """Raised when an operation requires a simple (decomposable) form."""


# ---------------------------------------------------------------------------
# simple forms
# ---------------------------------------------------------------------------

def is_simple_form(phi: FormK, tol: float = 1e-8) -> bool:
    """Numerical decomposability test: (e_a . phi) ^ phi = 0 for all axes.

    Degree 0, 1, m-1 and m forms pass automatically, as they must.
    """
    scale = phi.max_abs()
    if scale == 0.0:
        return True
    k, m = phi.degree, phi.ambient_dim
    if k <= 1 or k >= m - 1:
        return True
    if 2 * k - 1 > m:
        return True
    for a in range(m):
        if wedge(contract(phi, a), phi).max_abs() > tol * scale * scale:
            return False
    return True


def comass_simple_form(phi: FormK, metric: BlockMetric | None = None,
                       *, assume_simple: bool = False,
                       tol: float = 1e-8) -> float:
    """Comass of a simple form: its Riemannian norm under the metric.

    Inputs constructed as simple may pass assume_simple=True; otherwise the
    decomposability of phi is verified numerically and NotSimpleError is
    raised on failure.
    """
    if not assume_simple and not is_simple_form(phi, tol):
        raise NotSimpleError("form is not simple; use comass_optimize instead")
    return phi.norm(metric)


def conformal_comass_factor(k: int, lam: float) -> float:
    """Multiplying a metric by lam multiplies every k-form comass by this."""
    if lam <= 0:
        raise ValueError("conformal factor must be positive")
    if k < 0:
        raise ValueError("degree must be nonnegative")
    return lam ** (-k / 2.0)


# ---------------------------------------------------------------------------
# two-block product forms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TorusFormSpec:
    """Parameters of the two-block product form on R^(2b) x R^m.

    n_minus_j is the block size b; alpha and beta are l-frames in the
    trailing R^m; lam and mu lie in [-1, 1].
    """

    n_minus_j: int
    alpha: Frame
    beta: Frame
    lam: float
    mu: float

    def __post_init__(self):
        if self.n_minus_j < 1:
            raise ValueError("block size must be at least 1")
        if not (-1.0 <= self.lam <= 1.0 and -1.0 <= self.mu <= 1.0):
            raise ValueError("lam and mu must lie in [-1, 1]")
        if self.alpha.k != self.beta.k:
            raise ValueError("alpha and beta must have equal dimension")
        if self.alpha.ambient_dim != self.beta.ambient_dim:
            raise ValueError("alpha and beta must share their ambient")
        if not (1 <= self.alpha.k <= self.alpha.ambient_dim):
            raise ValueError("plane dimension out of range")

    @property
    def trailing_dim(self) -> int:
        return self.alpha.ambient_dim

    @property
    def ambient_dim(self) -> int:
        return 2 * self.n_minus_j + self.trailing_dim

    @property
    def degree(self) -> int:
        return self.n_minus_j + self.alpha.k

    def x_block_plane(self) -> Frame:
        """The coordinate plane [x-block ^ alpha], calibrated when lam = 1."""
        b, m = self.n_minus_j, self.ambient_dim
        rows = [np.eye(m)[i] for i in range(b)]
        emb = np.zeros((self.alpha.k, m))
        emb[:, 2 * b:] = self.alpha.orthonormalize().vectors
        return Frame(np.vstack([rows, emb]))

    def y_block_plane(self) -> Frame:
        b, m = self.n_minus_j, self.ambient_dim
        rows = [np.eye(m)[b + i] for i in range(b)]
        emb = np.zeros((self.beta.k, m))
        emb[:, 2 * b:] = self.beta.orthonormalize().vectors
        return Frame(np.vstack([rows, emb]))


def _embedded_dual(frame: Frame, total_dim: int, offset: int) -> FormK:
    """Flat dual form of the unit plane of `frame`, embedded at an axis offset."""
    on = frame.orthonormalize()
    coeffs = frame_wedge_coeffs(on.vectors)
    k, m = frame.k, frame.ambient_dim
    out: dict[tuple[int, ...], float] = {}
    for t, c in zip(index_tuples(m, k), coeffs):
        if c != 0.0:
            out[tuple(offset + i for i in t)] = float(c)
    return FormK(k, total_dim, out)


def build_torus_form(spec: TorusFormSpec) -> FormK:
    """The form lam dx-block ^ alpha* + mu dy-block ^ beta*."""
    b, m = spec.n_minus_j, spec.ambient_dim
    dx = basis_form(m, tuple(range(b)))
    dy = basis_form(m, tuple(range(b, 2 * b)))
    a_star = _embedded_dual(spec.alpha, m, 2 * b)
    b_star = _embedded_dual(spec.beta, m, 2 * b)
    return spec.lam * wedge(dx, a_star) + spec.mu * wedge(dy, b_star)


# ---------------------------------------------------------------------------
# the maximizer
# ---------------------------------------------------------------------------

@dataclass
class ComassEstimate:
    """Result of a comass maximization: a certified lower bound.

    lower_bound equals the form evaluated on the unit simple vector of
    `maximizer` and never exceeds the true comass (up to arithmetic).
    """

    lower_bound: float
    maximizer: Frame
    restarts_used: int
    converged: bool
    iterations: int


def default_restarts(k: int) -> int:
    """Empirical multi-start coverage at desk scale."""
    return 64 if k <= 3 else 256


def _orthonormalize_batch(v: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise modified Gram-Schmidt on a stack of (k, m) frames."""
    r, k, m = v.shape
    out = v.copy()
    for i in range(k):
        u = out[:, i, :]
        for _ in range(2):
            for p in range(i):
                proj = np.einsum("rm,rm->r", u, out[:, p, :])
                u = u - proj[:, None] * out[:, p, :]
        n = np.linalg.norm(u, axis=1)
        bad = n < 1e-12
        while np.any(bad):
            u[bad] = rng.standard_normal((int(bad.sum()), m))
            for p in range(i):
                proj = np.einsum("rm,rm->r", u, out[:, p, :])
                u = u - proj[:, None] * out[:, p, :]
            n = np.linalg.norm(u, axis=1)
            bad = n < 1e-12
        out[:, i, :] = u / n[:, None]
    return out


def _values(v: np.ndarray, coeffs: np.ndarray, tuples: np.ndarray) -> np.ndarray:
    """Form values on the wedge of each frame in the stack."""
    minors = np.swapaxes(v[:, :, tuples], 1, 2)  # (R, C, k, k)
    return det_stacked(minors) @ coeffs


def _gradients(v: np.ndarray, contract_mat: np.ndarray,
               sub_tuples: np.ndarray) -> np.ndarray:
    """d/dV of the form value at orthonormal frames V (stack of (k, m))."""
    r, k, m = v.shape
    grad = np.empty_like(v)
    rows = np.arange(k)
    for i in range(k):
        keep = rows[rows != i]
        vi = v[:, keep, :]
        if k == 1:
            wi = np.ones((r, 1))
        else:
            minors = np.swapaxes(vi[:, :, sub_tuples], 1, 2)
            wi = det_stacked(minors)
        sign = 1.0 if i % 2 == 0 else -1.0
        grad[:, i, :] = sign * (wi @ contract_mat.T)
    return grad


def comass_optimize(phi: FormK, metric: BlockMetric | None = None,
                    k: int | None = None, restarts: int | None = None,
                    tol: float = 1e-9, *, max_iter: int = 2000,
                    seed: int | np.random.Generator = 0,
                    seeds: Sequence[Frame] = ()) -> ComassEstimate:
    """Maximize |phi(xi)| over unit simple k-vectors xi under the metric.

    Projected gradient ascent on the frame parametrization with step
    halving on non-improvement and a re-orthonormalization retraction,
    multi-started from uniformly random frames (plus any caller-supplied
    seed frames).  The returned value is always a valid lower bound for
    the comass; converged=False signals that some restart hit the
    iteration cap before stalling.
    """
    g = metric if metric is not None else BlockMetric.flat(phi.ambient_dim)
    if g.dim != phi.ambient_dim:
        raise DimensionMismatchError("metric does not match the form")
    if k is None:
        k = phi.degree
    if k != phi.degree:
        raise DimensionMismatchError("degree k must equal the form degree")
    if restarts is None:
        restarts = default_restarts(k)
    if restarts < 1:
        raise ValueError("at least one restart is required")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    m = phi.ambient_dim
    sqrt_w = np.sqrt(g.weights)
    # transform to metric-orthonormal coordinates: frames scale by sqrt(w),
    # coefficients by the inverse tuple products
    tuples = _tuple_array(m, k)
    coeffs = phi.coeffs / np.prod(sqrt_w[tuples], axis=1)

    if k == 0 or np.all(coeffs == 0.0):
        zero_frame = Frame(np.eye(m)[:k]) if k else Frame(np.zeros((0, m)))
        val = float(coeffs[0]) if k == 0 else 0.0
        return ComassEstimate(abs(val), zero_frame, restarts, True, 0)

    sub_tuples = _tuple_array(m, k - 1) if k > 1 else None
    # contraction matrix A[a, J] with (e_a . phi)[J] = A[a, J]
    n_sub = len(index_tuples(m, k - 1))
    contract_mat = np.zeros((m, n_sub))
    for a, (outs, ins, signs) in enumerate(contraction_table(m, k)):
        contract_mat[a, outs] = signs * coeffs[ins]

    n_seed = len(seeds)
    v = rng.standard_normal((restarts + n_seed, k, m))
    for i, fr in enumerate(seeds):
        if fr.k != k or fr.ambient_dim != m:
            raise DimensionMismatchError("seed frame shape mismatch")
        v[i] = fr.vectors * sqrt_w[None, :]
    v = _orthonormalize_batch(v, rng)

    f = _values(v, coeffs, tuples)
    flip = f < 0
    v[flip, 0, :] *= -1.0
    f = np.abs(f)

    total = restarts + n_seed
    step = np.full(total, 0.25)
    active = np.ones(total, dtype=bool)
    hit_cap = False
    it = 0
    step_floor = 1e-13
    while np.any(active) and it < max_iter:
        it += 1
        idx = np.nonzero(active)[0]
        va = v[idx]
        grad = _gradients(va, contract_mat, sub_tuples)
        # project onto the tangent space of the orthonormal-frame manifold
        s = np.einsum("rim,rjm->rij", grad, va)
        sym = 0.5 * (s + np.swapaxes(s, 1, 2))
        grad -= np.einsum("rij,rjm->rim", sym, va)
        cand = _orthonormalize_batch(va + step[idx, None, None] * grad, rng)
        fc = _values(cand, coeffs, tuples)
        neg = fc < 0
        cand[neg, 0, :] *= -1.0
        fc = np.abs(fc)
        better = fc > f[idx]
        adopt = idx[better]
        v[adopt] = cand[better]
        f[adopt] = fc[better]
        step[adopt] = np.minimum(step[adopt] * 1.3, 1.0)
        worse = idx[~better]
        step[worse] *= 0.5
        stalled = step < step_floor
        active &= ~stalled
    hit_cap = bool(np.any(active))

    best = int(np.argmax(f))
    best_frame_flat = v[best]
    # map the witness back to the original coordinates and recompute the
    # bound through the public evaluation path so the reported number is
    # exactly evaluate(phi, simple_from_frame(maximizer, g))
    witness = Frame(best_frame_flat / sqrt_w[None, :])
    value = evaluate(phi, simple_from_frame(witness, g))
    if value < 0:
        flipped = witness.vectors.copy()
        flipped[0] *= -1.0
        witness = Frame(flipped)
        value = evaluate(phi, simple_from_frame(witness, g))
    return ComassEstimate(value, witness, total, not hit_cap, it)


# ---------------------------------------------------------------------------
# calibration checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibrationCheck:
    """Outcome of an is_calibrated query with its two certified numbers."""

    calibrated: bool
    plane_value: float
    comass_lower_bound: float
    tolerance: float


def is_calibrated(phi: FormK, plane: Frame, metric: BlockMetric | None = None,
                  tol: float = 1e-6, *, restarts: int | None = None,
                  seed: int | np.random.Generator = 0) -> CalibrationCheck:
    """True iff the plane achieves value >= 1 - tol and no sampled plane
    pushes the comass lower bound above 1 + tol."""
    g = metric if metric is not None else BlockMetric.flat(phi.ambient_dim)
    value = evaluate(phi, simple_from_frame(plane, g))
    est = comass_optimize(phi, g, restarts=restarts, seed=seed,
                          seeds=[plane])
    ok = value >= 1.0 - tol and est.lower_bound <= 1.0 + tol
    return CalibrationCheck(ok, value, est.lower_bound, tol)
