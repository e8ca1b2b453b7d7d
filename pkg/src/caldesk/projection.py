"""Nearest-point projection onto the graph of a small smooth function.

The graph of f lives in N x S^1, N a flat torus and S^1 the circle of
circumference 2*pi parametrized by [-pi, pi] with endpoints identified.
Projection of a tube point is computed by damped Newton iteration on the
base coordinate, seeded either at the base point itself (fast path inside
a verified tube) or at the best candidate from a dense sample of the
graph (global path, used by the reach gate and as the Newton fallback).

The differential of the projection is obtained by central finite
differences with a step-halving consistency check; the reach is estimated
by exponentiating sample normals to a given radius and testing that
projecting back recovers the starting point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from caldesk.whitney import SmoothFunction

CIRCLE = 2.0 * math.pi  # circumference of the S^1 factor


class OutOfTubeError(ValueError):
    """Query point is farther from the graph than the tube radius."""


class ProjectionDivergedError(RuntimeError):
    """Newton projection failed to converge; carries the iterate trace."""

    def __init__(self, message: str, trace: list[np.ndarray]):
        super().__init__(message)
        self.trace = trace


def wrap_torus(delta: np.ndarray, side: float) -> np.ndarray:
    """Shortest representative of a displacement on R/side."""
    return delta - side * np.round(delta / side)


def wrap_circle(delta: float | np.ndarray) -> float | np.ndarray:
    return delta - CIRCLE * np.round(delta / CIRCLE)


@dataclass(eq=False)
class ProjectionResult:
    base: np.ndarray        # base coordinate p* of the nearest graph point
    height: float           # f(p*)
    distance: float
    iterations: int
    converged: bool

    @property
    def point(self) -> np.ndarray:
        return np.append(self.base, self.height)


class GraphProjector:
    """Projection, differential and reach tooling for graph(f) in N x S^1."""

    def __init__(self, f: SmoothFunction, *, tube_radius: float = 1.0,
                 seed_grid_depth: int | None = None):
        self.f = f
        self.side = f.side
        self.dim = f.torus_dim
        self.tube_radius = tube_radius
        depth = seed_grid_depth
        if depth is None:
            # resolve the finest bump scale but stay affordable
            depth = min(f.set_depth + 1, max(1, 22 // max(1, self.dim)))
        self.seed_depth = depth
        n = 1 << depth
        axes = [(np.arange(n) + 0.5) * (self.side / n)] * self.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        self._seed_pts = np.stack([mm.ravel() for mm in mesh], axis=1)
        vals = f.grid_values(depth)
        self._seed_vals = vals.ravel()

    # -- local objective ---------------------------------------------------

    def _dist2_parts(self, base: np.ndarray, q_base: np.ndarray, q_t: float):
        db = wrap_torus(base - q_base, self.side)
        dt = wrap_circle(self.f.value(base) - q_t)
        return db, dt

    def _newton(self, q_base: np.ndarray, q_t: float, start: np.ndarray,
                tol: float, max_iter: int):
        # Far from the solution the steps are gated by squared-distance
        # descent; once |g| is small the objective sits on a floating-point
        # plateau, so the endgame gates on gradient-norm descent instead,
        # which stays resolvable down to machine scale.
        grad_phase = 1e-8
        p = np.asarray(start, dtype=float) % self.side
        trace = [p.copy()]
        db, dt = self._dist2_parts(p, q_base, q_t)
        d2 = float(db @ db + dt * dt)
        gnorm = math.inf
        for it in range(1, max_iter + 1):
            grad_f = self.f.gradient(p)
            g = db + dt * grad_f
            gnorm = float(np.max(np.abs(g)))
            if gnorm < tol:
                return p, math.sqrt(d2), it, True, trace
            hess_f = self.f.hessian(p)
            h = np.eye(self.dim) + np.outer(grad_f, grad_f) + dt * hess_f
            try:
                step = np.linalg.solve(h, g)
            except np.linalg.LinAlgError:
                step = g
            lam = 1.0
            accepted = False
            for _ in range(30):
                cand = (p - lam * step) % self.side
                db_c, dt_c = self._dist2_parts(cand, q_base, q_t)
                d2_c = float(db_c @ db_c + dt_c * dt_c)
                if gnorm < grad_phase:
                    g_c = db_c + dt_c * self.f.gradient(cand)
                    if float(np.max(np.abs(g_c))) < gnorm:
                        accepted = True
                        break
                elif d2_c <= d2:
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                # no further numerical progress; at a resolved stall the
                # remaining gradient bounds the position error
                return p, math.sqrt(d2), it, gnorm < 1e-11, trace
            p, db, dt, d2 = cand, db_c, dt_c, d2_c
            trace.append(p.copy())
        return p, math.sqrt(d2), max_iter, gnorm < tol, trace

    def _best_seed(self, q_base: np.ndarray, q_t: float) -> np.ndarray:
        db = wrap_torus(self._seed_pts - q_base[None, :], self.side)
        dt = wrap_circle(self._seed_vals - q_t)
        d2 = np.sum(db * db, axis=1) + dt * dt
        return self._seed_pts[int(np.argmin(d2))]

    # -- public API --------------------------------------------------------

    def project(self, q: Sequence[float], *, global_seed: bool = False,
                tol: float = 1e-12, max_iter: int = 60,
                enforce_tube: bool = True,
                start: np.ndarray | None = None) -> ProjectionResult:
        """Nearest point of graph(f) to q = (base..., t).

        The fast path starts Newton at the base coordinate of q, which is
        the correct basin anywhere inside a verified tube; global_seed
        forces the dense-sample seeding used by the reach gate, and an
        explicit start warm-starts the iteration.  Points farther than the
        tube radius raise OutOfTubeError when enforce_tube is set.
        """
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dim + 1,):
            raise ValueError(f"expected a {self.dim + 1}-coordinate point")
        q_base = q[:self.dim] % self.side
        q_t = wrap_circle(q[self.dim])

        if start is None:
            start = self._best_seed(q_base, q_t) if global_seed else q_base
        p, dist, its, ok, trace = self._newton(q_base, q_t, start, tol, max_iter)
        if not ok and not global_seed:
            p2, dist2, its2, ok, trace = self._newton(
                q_base, q_t, self._best_seed(q_base, q_t), tol, max_iter)
            if dist2 <= dist or ok:
                p, dist, its = p2, dist2, its + its2
        if not ok:
            raise ProjectionDivergedError(
                f"projection did not converge near base {q_base}", trace)
        if enforce_tube and dist >= self.tube_radius:
            raise OutOfTubeError(
                f"point at distance {dist:.4f} is outside the unit tube")
        return ProjectionResult(p, self.f.value(p), dist, its, True)

    def jacobian(self, q: Sequence[float], h: float = 1e-4,
                 *, start: np.ndarray | None = None) -> np.ndarray:
        """d(base of projection)/dq by central differences: (dim, dim+1)."""
        q = np.asarray(q, dtype=float)
        if start is None:
            start = self.project(q, enforce_tube=False).base
        jac = np.zeros((self.dim, self.dim + 1))
        for a in range(self.dim + 1):
            e = np.zeros(self.dim + 1)
            e[a] = h
            pp = self.project(q + e, enforce_tube=False, start=start)
            pm = self.project(q - e, enforce_tube=False, start=start)
            jac[:, a] = wrap_torus(pp.base - pm.base, self.side) / (2.0 * h)
        return jac

    def unit_normal(self, base: np.ndarray) -> np.ndarray:
        """Upward unit normal of the graph at a base point, in (base, t)."""
        grad = self.f.gradient(base)
        nvec = np.append(-grad, 1.0)
        return nvec / np.linalg.norm(nvec)

    def reach_estimate(self, *, samples: int = 64,
                       radii: Sequence[float] | None = None,
                       seed: int | np.random.Generator = 0,
                       base_tol: float = 1e-5) -> float:
        """Largest tested radius with unique round-trip projections.

        For each sampled graph point and both normal signs the point at
        the given radius along the normal is projected back with global
        seeding; the radius is verified if every projection returns the
        original base point.  Radii are scanned in increasing order and
        the first failure truncates the result.
        """
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        if radii is None:
            radii = np.linspace(0.1, CIRCLE / 2.0 * (1.0 - 1.0 / 64.0), 24)
        bases = rng.uniform(0.0, self.side, size=(samples, self.dim))
        verified = 0.0
        for r in sorted(float(x) for x in radii):
            ok = True
            for b in bases:
                nvec = self.unit_normal(b)
                gp = np.append(b, self.f.value(b))
                for sgn in (1.0, -1.0):
                    q = gp + sgn * r * nvec
                    try:
                        res = self.project(q, global_seed=True,
                                           enforce_tube=False)
                    except ProjectionDivergedError:
                        ok = False
                        break
                    err = float(np.max(np.abs(wrap_torus(res.base - b, self.side))))
                    if err > base_tol * (1.0 + r):
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
            verified = r
        return verified
