"""The two-sheet desingularization model and its verification.

Ambient space: a flat torus block with coordinates x_1..x_b, y_1..y_b of
unit period (b >= 2 in minimizing mode, b = 1 in stable-pair mode), a
flat base torus N of dimension j and side rho, and a circle S^1 of
circumference 2*pi.  Sheet X is the x-block times N x {0}; sheet Y is the
y-block times the graph of a smooth function f that vanishes exactly on a
prescribed cell set K of N.  The two sheets intersect exactly over K, and
at every intersection point the two tangent planes share the j base
directions.

The calibrating n-form is

    phi = dx_1^...^dx_b ^ nu  +  dy_1^...^dy_b ^ pullback(omega)

with nu the base volume form extended constantly in t and pullback(omega)
the volume form of graph(f) pulled back through the nearest-point
projection of the unit tube.  Writing w for the pointwise norm of the
pullback under the flat base-circle metric, the rescaled metric

    g = w^-2 dx_1^2 + dy_1^2 + sum_{b>=2}(dx_b^2 + dy_b^2)
        + w^(2/j) (base metric + dt^2)

makes both summands unit simple forms on orthogonal blocks, so phi has
comass one, calibrates both sheets, and stays a calibration under either
sign flip of the summands.  In stable-pair mode the two summands are used
as separate calibrations dx_1 ^ nu and dy_1 ^ pullback(omega), one per
sheet.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from caldesk.cells import DyadicCellSet, hausdorff_cell_distance
from caldesk.comass import comass_optimize
from caldesk.exterior import (
    BlockMetric,
    FormK,
    Frame,
    contraction_table,
    evaluate,
    index_tuples,
    intersection_dimension,
    simple_from_frame,
)
from caldesk.projection import CIRCLE, GraphProjector, wrap_circle
from caldesk.reports import VerificationReport
from caldesk.whitney import SmoothFunction, build_vanishing_function


class ReachError(RuntimeError):
    """The tube gate failed: shrink the vanishing function's norm bound."""


# ---------------------------------------------------------------------------
# the ambient model
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class AmbientModel:
    """Torus block x flat base x circle carrying the two sheets.

    Coordinates are ordered (x_1..x_b, y_1..y_b, p_1..p_j, t).
    """

    n: int
    j: int
    rho: float
    k_set: DyadicCellSet
    f: SmoothFunction
    projector: GraphProjector
    mode: str
    reach_checked: float
    eps: float

    @property
    def block(self) -> int:
        return self.n - self.j

    @property
    def dim(self) -> int:
        return 2 * self.block + self.j + 1

    @property
    def x_axes(self) -> range:
        return range(0, self.block)

    @property
    def y_axes(self) -> range:
        return range(self.block, 2 * self.block)

    @property
    def p_axes(self) -> range:
        return range(2 * self.block, 2 * self.block + self.j)

    @property
    def t_axis(self) -> int:
        return 2 * self.block + self.j

    # -- sheets ----------------------------------------------------------

    def sheet_x_point(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        q = np.zeros(self.dim)
        q[list(self.x_axes)] = x
        q[list(self.p_axes)] = p
        q[self.t_axis] = 0.0
        return q

    def sheet_y_point(self, y: np.ndarray, p: np.ndarray) -> np.ndarray:
        q = np.zeros(self.dim)
        q[list(self.y_axes)] = y
        q[list(self.p_axes)] = p
        q[self.t_axis] = self.f.value(p)
        return q

    def sheet_x_tangent(self) -> Frame:
        rows = [np.eye(self.dim)[a] for a in self.x_axes]
        rows += [np.eye(self.dim)[a] for a in self.p_axes]
        return Frame(np.array(rows))

    def sheet_y_tangent(self, p: np.ndarray) -> Frame:
        grad = self.f.gradient(p)
        rows = [np.eye(self.dim)[a] for a in self.y_axes]
        for i, a in enumerate(self.p_axes):
            r = np.eye(self.dim)[a].copy()
            r[self.t_axis] = grad[i]
            rows.append(r)
        return Frame(np.array(rows))

    def base_circle_point(self, q: np.ndarray) -> np.ndarray:
        return np.append(q[list(self.p_axes)], q[self.t_axis])

    def random_ambient_point(self, rng: np.random.Generator,
                             tube_margin: float = 0.95) -> np.ndarray:
        q = np.zeros(self.dim)
        q[list(self.x_axes)] = rng.uniform(0.0, 1.0, self.block)
        q[list(self.y_axes)] = rng.uniform(0.0, 1.0, self.block)
        p = rng.uniform(0.0, self.rho, self.j)
        q[list(self.p_axes)] = p
        q[self.t_axis] = wrap_circle(self.f.value(p)
                                     + rng.uniform(-tube_margin, tube_margin))
        return q


def build_ambient(n: int, j: int, rho: float, k_set: DyadicCellSet,
                  eps: float, order: int = 3, *, mode: str = "minimizing",
                  reach_radii: Sequence[float] = (0.25, 0.5, 0.75, 0.9, 1.02),
                  reach_samples: int = 24,
                  seed: int | np.random.Generator = 0) -> AmbientModel:
    """Construct the model: vanishing function, projector, and reach gate.

    Fails with ReachError when the sampled tube radius does not exceed 1;
    the fix is a smaller eps (a C^3-smaller lift).
    """
    if mode not in ("minimizing", "stable_pair"):
        raise ValueError("mode must be 'minimizing' or 'stable_pair'")
    if n < 2:
        raise ValueError("n must be at least 2")
    if mode == "minimizing" and not (1 <= j <= n - 2):
        raise ValueError("minimizing mode needs 1 <= j <= n-2")
    if mode == "stable_pair" and j != n - 1:
        raise ValueError("stable-pair mode needs j = n-1")
    if k_set.torus_dim != j:
        raise ValueError("cell set dimension must equal j")
    if k_set.side != rho:
        raise ValueError("cell set torus side must equal rho")
    f = build_vanishing_function(k_set, eps, order)
    projector = GraphProjector(f)
    reach = projector.reach_estimate(samples=reach_samples, radii=reach_radii,
                                     seed=seed)
    if reach < 1.0:
        raise ReachError(
            f"sampled tube radius {reach:.3f} < 1: shrink eps (currently {eps})")
    return AmbientModel(n, j, rho, k_set, f, projector, mode, reach, eps)


# ---------------------------------------------------------------------------
# projection-based forms and the calibration bundle
# ---------------------------------------------------------------------------

def nearest_point_projection(model: AmbientModel, q_base_circle: Sequence[float],
                             *, global_seed: bool = False):
    """Nearest graph point for a point of N x S^1 (inside the unit tube)."""
    return model.projector.project(q_base_circle, global_seed=global_seed)


def pullback_volume_form(model: AmbientModel, q_base_circle: Sequence[float],
                         h: float = 1e-4) -> tuple[FormK, float]:
    """The graph volume form pulled back through the projection at a point.

    Returns the degree-j form on the (base, t) coordinates of N x S^1 and
    its pointwise flat norm w; w = 1 on the graph.  The projection
    differential uses central differences with step h.
    """
    q = np.asarray(q_base_circle, dtype=float)
    res = model.projector.project(q, enforce_tube=True)
    jac = model.projector.jacobian(q, h, start=res.base)
    grad = model.f.gradient(res.base)
    scale = math.sqrt(1.0 + float(grad @ grad))
    jdim = model.j + 1
    coeffs: dict[tuple[int, ...], float] = {}
    for cols in combinations(range(jdim), model.j):
        sub = jac[:, cols]
        coeffs[cols] = scale * float(np.linalg.det(sub)) if model.j > 1 \
            else scale * float(sub[0, 0])
    form = FormK(model.j, jdim, coeffs)
    w = math.sqrt(float(np.sum(form.coeffs ** 2)))
    return form, w


@dataclass(eq=False)
class CalibrationModel:
    """Pointwise calibration data: phi, the sign variants, the metric."""

    model: AmbientModel
    fd_step: float = 1e-4
    corrupt_metric: bool = False

    def _embed_pt_form(self, small: FormK) -> dict[tuple[int, ...], float]:
        offset = 2 * self.model.block
        out: dict[tuple[int, ...], float] = {}
        for t, c in small.as_dict().items():
            out[tuple(offset + i for i in t)] = c
        return out

    def pullback_at(self, q: np.ndarray) -> tuple[FormK, float]:
        return pullback_volume_form(self.model, self.model.base_circle_point(q),
                                    self.fd_step)

    def summands_at(self, q: np.ndarray) -> tuple[FormK, FormK, float]:
        """(dx-block ^ nu, dy-block ^ pullback, w) at an ambient point."""
        m = self.model
        dim = m.dim
        pull, w = self.pullback_at(q)
        nu_idx = tuple(m.p_axes)
        x_first: dict[tuple[int, ...], float] = {
            tuple(m.x_axes) + nu_idx: 1.0}
        first = FormK(m.n, dim, x_first)
        y_prefix = tuple(m.y_axes)
        second_c: dict[tuple[int, ...], float] = {}
        for t, c in self._embed_pt_form(pull).items():
            second_c[y_prefix + t] = c
        second = FormK(m.n, dim, second_c)
        return first, second, w

    def form_at(self, q: np.ndarray, signs: tuple[int, int] = (1, 1)) -> FormK:
        first, second, _ = self.summands_at(q)
        return signs[0] * first + signs[1] * second

    def w_at(self, q: np.ndarray) -> float:
        _, w = self.pullback_at(q)
        return w

    def metric_at(self, q: np.ndarray, w: float | None = None) -> BlockMetric:
        m = self.model
        if w is None:
            w = self.w_at(q)
        if w <= 0.0:
            raise ValueError("pullback norm vanished; point outside valid tube")
        weights = np.ones(m.dim)
        if not self.corrupt_metric:
            weights[0] = w ** -2.0
        weights[list(m.p_axes)] = w ** (2.0 / m.j)
        weights[m.t_axis] = w ** (2.0 / m.j)
        return BlockMetric(weights)

    def form_and_metric_at(self, q: np.ndarray) -> tuple[FormK, BlockMetric]:
        first, second, w = self.summands_at(q)
        return first + second, self.metric_at(q, w)

    def stable_pair_forms_at(self, q: np.ndarray) -> tuple[FormK, FormK, BlockMetric]:
        first, second, w = self.summands_at(q)
        return first, second, self.metric_at(q, w)

    def exterior_derivative_fd(self, q: np.ndarray, step: float = 1e-3) -> FormK:
        """Finite-difference exterior derivative of phi at a point.

        The coefficients of phi depend on the ambient point only through
        its (base, t) component (the x/y blocks enter through constant
        closed factors), so only those directions are differenced; the
        structural independence is asserted once per bundle.
        """
        m = self.model
        dim = m.dim
        if not getattr(self, "_xy_independence_checked", False):
            q2 = q.copy()
            q2[list(m.x_axes)] = (q2[list(m.x_axes)] + 0.37) % 1.0
            q2[list(m.y_axes)] = (q2[list(m.y_axes)] + 0.61) % 1.0
            a = self.form_at(q).coeffs
            b = self.form_at(q2).coeffs
            if not np.array_equal(a, b):
                raise AssertionError("phi coefficients unexpectedly depend on x/y")
            self._xy_independence_checked = True
        n_out = len(index_tuples(dim, m.n + 1))
        out = np.zeros(n_out)
        tables = contraction_table(dim, m.n + 1)
        for a in list(m.p_axes) + [m.t_axis]:
            e = np.zeros(dim)
            e[a] = step
            cp = self.form_at(q + e).coeffs
            cm = self.form_at(q - e).coeffs
            partial = (cp - cm) / (2.0 * step)
            outs, ins, signs = tables[a]
            out[ins] += signs * partial[outs]
        return FormK(m.n + 1, dim, out)


def build_calibration_and_metric(model: AmbientModel, q: Sequence[float],
                                 *, fd_step: float = 1e-4) -> tuple[FormK, BlockMetric]:
    """phi and the rescaled metric at one ambient point."""
    bundle = CalibrationModel(model, fd_step)
    return bundle.form_and_metric_at(np.asarray(q, dtype=float))


def reach_estimate(model: AmbientModel, *, samples: int = 64,
                   radii: Sequence[float] | None = None,
                   seed: int | np.random.Generator = 0) -> float:
    """Sampled round-trip tube radius of the lifted sheet."""
    return model.projector.reach_estimate(samples=samples, radii=radii, seed=seed)


# ---------------------------------------------------------------------------
# verification sweeps
# ---------------------------------------------------------------------------

@dataclass
class VerificationPlan:
    samples_sheet: int = 200
    samples_ambient: int = 1000
    samples_closedness: int = 100
    optimizer_points: int = 4
    restarts: int = 24
    seed: int = 0
    tol_sheet: float = 1e-6
    tol_comass: float = 1e-4
    tol_closedness: float = 1e-4
    fd_step: float = 1e-4
    closedness_step: float = 1e-3
    corrupt_metric: bool = False


def verify_calibration(model: AmbientModel,
                       plan: VerificationPlan | None = None) -> VerificationReport:
    """Sheet equalities, comass bounds (incl. sign variants), closedness.

    Every failing record carries the point and value; optimizer failures
    also carry the witness plane.
    """
    plan = plan or VerificationPlan()
    rng = np.random.default_rng(plan.seed)
    bundle = CalibrationModel(model, plan.fd_step, plan.corrupt_metric)
    report = VerificationReport()
    m = model

    # (a) sheet calibration equalities
    for _ in range(plan.samples_sheet):
        x = rng.uniform(0.0, 1.0, m.block)
        p = rng.uniform(0.0, m.rho, m.j)
        q = m.sheet_x_point(x, p)
        phi, g = bundle.form_and_metric_at(q)
        xi = simple_from_frame(m.sheet_x_tangent(), g)
        val = evaluate(phi, xi)
        report.add("sheet_x_eq", q, val, plan.tol_sheet,
                   abs(val - 1.0) <= plan.tol_sheet)
    for _ in range(plan.samples_sheet):
        y = rng.uniform(0.0, 1.0, m.block)
        p = rng.uniform(0.0, m.rho, m.j)
        q = m.sheet_y_point(y, p)
        phi, g = bundle.form_and_metric_at(q)
        xi = simple_from_frame(m.sheet_y_tangent(p), g)
        val = evaluate(phi, xi)
        report.add("sheet_y_eq", q, val, plan.tol_sheet,
                   abs(val - 1.0) <= plan.tol_sheet)

    # (b) comass bound on random unit simple n-vectors; |t1| + |t2| bounds
    # every sign variant at once
    for _ in range(plan.samples_ambient):
        q = m.random_ambient_point(rng)
        first, second, w = bundle.summands_at(q)
        g = bundle.metric_at(q, w)
        frame = Frame(rng.standard_normal((m.n, m.dim)))
        xi = simple_from_frame(frame, g)
        t1 = evaluate(first, xi)
        t2 = evaluate(second, xi)
        val = abs(t1) + abs(t2)
        report.add("comass_pairs", q, val, plan.tol_comass,
                   val <= 1.0 + plan.tol_comass)

    # (c) comass maximization at a few points
    for _ in range(plan.optimizer_points):
        q = m.random_ambient_point(rng)
        phi, g = bundle.form_and_metric_at(q)
        est = comass_optimize(phi, g, restarts=plan.restarts, seed=rng,
                              max_iter=800)
        ok = est.lower_bound <= 1.0 + plan.tol_comass
        report.add("comass_opt", q, est.lower_bound, plan.tol_comass, ok,
                   witness=None if ok else est.maximizer.vectors.ravel())

    # (d) closedness by finite differences
    for _ in range(plan.samples_closedness):
        q = m.random_ambient_point(rng, tube_margin=0.9)
        d_phi = bundle.exterior_derivative_fd(q, plan.closedness_step)
        val = d_phi.max_abs()
        report.add("closedness", q, val, plan.tol_closedness,
                   val <= plan.tol_closedness)

    return report


def verify_stable_pair(model: AmbientModel,
                       plan: VerificationPlan | None = None) -> VerificationReport:
    """Each sheet calibrated by its own simple form; both forms comass one."""
    if model.mode != "stable_pair":
        raise ValueError("model was not built in stable-pair mode")
    plan = plan or VerificationPlan()
    rng = np.random.default_rng(plan.seed)
    bundle = CalibrationModel(model, plan.fd_step, plan.corrupt_metric)
    report = VerificationReport()
    m = model

    for _ in range(plan.samples_sheet):
        x = rng.uniform(0.0, 1.0, m.block)
        p = rng.uniform(0.0, m.rho, m.j)
        q = m.sheet_x_point(x, p)
        first, _, g = bundle.stable_pair_forms_at(q)
        xi = simple_from_frame(m.sheet_x_tangent(), g)
        val = evaluate(first, xi)
        report.add("stable_sheet_x_eq", q, val, plan.tol_sheet,
                   abs(val - 1.0) <= plan.tol_sheet)
    for _ in range(plan.samples_sheet):
        y = rng.uniform(0.0, 1.0, m.block)
        p = rng.uniform(0.0, m.rho, m.j)
        q = m.sheet_y_point(y, p)
        _, second, g = bundle.stable_pair_forms_at(q)
        xi = simple_from_frame(m.sheet_y_tangent(p), g)
        val = evaluate(second, xi)
        report.add("stable_sheet_y_eq", q, val, plan.tol_sheet,
                   abs(val - 1.0) <= plan.tol_sheet)

    for _ in range(plan.optimizer_points):
        q = m.random_ambient_point(rng)
        first, second, g = bundle.stable_pair_forms_at(q)
        for name, form in (("stable_comass_x", first), ("stable_comass_y", second)):
            est = comass_optimize(form, g, restarts=plan.restarts, seed=rng,
                                  max_iter=800)
            ok = est.lower_bound <= 1.0 + plan.tol_comass
            report.add(name, q, est.lower_bound, plan.tol_comass, ok,
                       witness=None if ok else est.maximizer.vectors.ravel())
    return report


def stable_pair_mode(n: int, rho: float, k_set: DyadicCellSet, eps: float,
                     order: int = 3, *,
                     plan: VerificationPlan | None = None,
                     seed: int | np.random.Generator = 0):
    """Build the j = n-1 model and verify the paired calibrations.

    Returns (model, report, singular_report).
    """
    model = build_ambient(n, n - 1, rho, k_set, eps, order,
                          mode="stable_pair", seed=seed)
    report = verify_stable_pair(model, plan)
    singular = extract_singular_set(model)
    return model, report, singular


# ---------------------------------------------------------------------------
# singular set
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class SingularSetReport:
    detected: DyadicCellSet
    expected: DyadicCellSet
    hausdorff_cells: float
    spine_dimensions: np.ndarray

    @property
    def matches_expected(self) -> bool:
        return self.hausdorff_cells <= 1.0


def extract_singular_set(model: AmbientModel, tol: float = 0.0) -> SingularSetReport:
    """Cells of N where the lift height vanishes, with tangent-spine dims.

    The lift is a sum of bumps supported away from K, so its zeros at cell
    centers are exact floating-point zeros; tol = 0 classifies exactly and
    a positive tol loosens the cut.  Each detected cell records the
    dimension of the intersection of the two sheet tangent planes at its
    center, which equals j (the gradient vanishes identically on K).
    """
    depth = model.k_set.depth
    vals = model.f.grid_values(depth)
    idx = np.argwhere(np.abs(vals) <= tol).astype(np.int64)
    detected = DyadicCellSet(model.j, model.rho, depth, idx)
    hd = hausdorff_cell_distance(detected, model.k_set)
    spines = np.zeros(detected.count, dtype=np.int64)
    centers = detected.cell_centers()
    tx = model.sheet_x_tangent()
    for i, c in enumerate(centers):
        ty = model.sheet_y_tangent(c)
        spines[i] = intersection_dimension(tx, ty)
    return SingularSetReport(detected, model.k_set, hd, spines)
