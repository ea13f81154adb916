"""Boundary corrections for the modified splittings.

A correction ``q`` is any smooth grid function whose boundary values match
those of the reaction term: on every face

    alpha * q + beta * dq = alpha * f(u) + f'(u) * (b - alpha * u),

evaluated with the numerical solution at the start of the step.  This module
computes those per-face targets and extends them into the domain.

All oblique closures here use the one-sided three-point derivative, the same
one :func:`osplit.boundary.closure_residual` measures, so analytic and
harmonic corrections conform to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .boundary import BoundaryFace, ProblemSpec, closure_residual, face_geometry, face_owners
from .grid import Field, Grid

__all__ = [
    "CorrectionTargets",
    "AnalyticPolynomial",
    "HarmonicSolve",
    "InterpolateAndSmooth",
    "CustomCorrection",
    "ZERO_CORRECTION",
    "HarmonicSolveError",
    "boundary_targets",
    "dirichlet_only_targets",
    "extend_analytic_1d",
    "interpolate_boundary",
    "weighted_jacobi_smooth",
    "harmonic_extension",
    "build_correction",
    "Corrector",
    "default_strategy",
    "parse_strategy",
]


class HarmonicSolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class CorrectionTargets:
    """Per-face right-hand sides of the correction's boundary condition.

    ``faces`` are the conditions the correction must satisfy (the problem's
    faces, or all-Dirichlet faces for the Dirichlet-only variant) and
    ``values[face]`` holds the target at every node of that face.
    """

    faces: tuple[BoundaryFace, ...]
    values: Mapping[str, np.ndarray]
    t: float = 0.0

    def __getitem__(self, face: str) -> np.ndarray:
        return self.values[face]


def _trace(u: np.ndarray, grid: Grid, face: str) -> np.ndarray:
    return u[face_geometry(grid, face).boundary]


def boundary_targets(u_n, problem: ProblemSpec, t_n: float, grid: Grid | None = None) -> CorrectionTargets:
    """Targets ``alpha f(u) + f'(u)(b - alpha u)`` on every face.

    On Dirichlet faces the trace is taken from the data (``u = b / alpha``),
    which gives ``alpha * f(b / alpha)``, i.e. ``f(b)`` for ``alpha = 1``.
    """
    grid = grid if grid is not None else u_n.grid
    u = np.asarray(getattr(u_n, "values", u_n), dtype=float)
    f, df = problem.reaction, problem.reaction_derivative
    values = {}
    for face in problem.faces:
        geom = face_geometry(grid, face.face)
        b = face.values(t_n, geom.coords)
        if face.is_dirichlet:
            values[face.face] = face.alpha * np.asarray(f(b / face.alpha), dtype=float)
        else:
            ub = u[geom.boundary]
            values[face.face] = face.alpha * f(ub) + df(ub) * (b - face.alpha * ub)
    return CorrectionTargets(tuple(problem.faces), values, t_n)


def dirichlet_only_targets(u_n, problem: ProblemSpec, t_n: float, grid: Grid | None = None) -> CorrectionTargets:
    """Targets that treat every face as a Dirichlet face.

    Dirichlet faces get ``f(b)``; every other face gets ``f`` of the current
    trace of ``u_n``.  This reproduces a correction designed for pure
    Dirichlet problems applied to a mixed problem.
    """
    grid = grid if grid is not None else u_n.grid
    u = np.asarray(getattr(u_n, "values", u_n), dtype=float)
    f = problem.reaction
    faces, values = [], {}
    for face in problem.faces:
        geom = face_geometry(grid, face.face)
        if face.is_dirichlet:
            trace = face.values(t_n, geom.coords) / face.alpha
        else:
            trace = u[geom.boundary]
        faces.append(BoundaryFace(face.face, 1.0, 0.0))
        values[face.face] = np.asarray(f(trace), dtype=float)
    return CorrectionTargets(tuple(faces), values, t_n)


# -- strategies ---------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticPolynomial:
    """Lowest-degree polynomial (degree at most 2) meeting both 1D face conditions."""

    name: str = field(default="analytic", init=False)


@dataclass(frozen=True)
class HarmonicSolve:
    """Discrete Laplace equation with the targets as boundary closure."""

    tol: float = 1e-10
    name: str = field(default="harmonic", init=False)


@dataclass(frozen=True)
class InterpolateAndSmooth:
    """Linear (1D) or bilinearly blended (2D) interpolation of the boundary
    targets followed by ``iterations`` weighted Jacobi sweeps."""

    iterations: int = 5
    weight: float = 2.0 / 3.0
    name: str = field(default="algorithm1", init=False)

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("number of Jacobi sweeps must be non-negative")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("Jacobi weight must lie in (0, 1]")


@dataclass(frozen=True)
class CustomCorrection:
    """``base`` extension (or nothing) plus a fixed function of the coordinates.

    ``conforming`` records whether the perturbation leaves the boundary
    conditions intact; non-conforming corrections skip conformance checks.
    """

    perturbation: Callable[..., object]
    base: object = None
    conforming: bool = False
    label: str = "custom"
    name: str = field(default="custom", init=False)


ZERO_CORRECTION = CustomCorrection(lambda *coords: 0.0, None, conforming=False, label="zero")


def default_strategy(dim: int):
    return AnalyticPolynomial() if dim == 1 else InterpolateAndSmooth()


_EXPR_NAMESPACE = {
    name: getattr(np, name) for name in ("sin", "cos", "tan", "exp", "log", "sqrt", "pi", "abs", "sinh", "cosh", "tanh")
}


def _compile_expression(expr: str) -> Callable[..., np.ndarray]:
    code = compile(expr, "<correction>", "eval")
    allowed = set(_EXPR_NAMESPACE) | {"x", "y"}
    unknown = set(code.co_names) - allowed
    if unknown:
        raise ValueError(f"unknown names in correction expression {expr!r}: {sorted(unknown)}")

    def func(x, y=None):
        return eval(code, {"__builtins__": {}}, dict(_EXPR_NAMESPACE, x=x, y=y))

    return func


def parse_strategy(text: str, iterations: int | None = None, weight: float | None = None):
    """Parse ``analytic``, ``harmonic``, ``algorithm1`` or ``custom:<base>:<expr>``.

    ``<base>`` is one of the first three names or ``none``; ``<expr>`` is an
    expression in ``x`` (and ``y``) using numpy functions, e.g.
    ``custom:harmonic:sin(10*pi*x)`` or ``custom:none:1+x``.
    """
    jacobi = {}
    if iterations is not None:
        jacobi["iterations"] = int(iterations)
    if weight is not None:
        jacobi["weight"] = float(weight)
    text = text.strip()
    if text == "analytic":
        return AnalyticPolynomial()
    if text == "harmonic":
        return HarmonicSolve()
    if text == "algorithm1":
        return InterpolateAndSmooth(**jacobi)
    if text.startswith("custom:"):
        parts = text.split(":", 2)
        if len(parts) != 3:
            raise ValueError("custom corrections are written custom:<base>:<expr>")
        _, base_name, expr = parts
        base = None if base_name == "none" else parse_strategy(base_name, iterations, weight)
        if isinstance(base, CustomCorrection):
            raise ValueError("custom corrections cannot be nested")
        return CustomCorrection(_compile_expression(expr), base, conforming=False, label=text[len("custom:"):])
    raise ValueError(f"unknown correction strategy {text!r}")


# -- extensions ---------------------------------------------------------------


def extend_analytic_1d(targets: CorrectionTargets, faces, grid: Grid) -> Field:
    """Polynomial extension in 1D.

    Solves ``alpha q(x_f) + beta q'(x_f) = g_f`` at both ends with ``q`` affine
    when that system is regular, and otherwise with the minimum-norm quadratic
    (e.g. Neumann at both ends).
    """
    if grid.dim != 1:
        raise ValueError("analytic extension is only available in 1D")
    by_name = {f.face: f for f in faces}
    ends = [(by_name["left"], grid.bounds[0][0]), (by_name["right"], grid.bounds[0][1])]
    rhs = np.array([float(np.ravel(targets[f.face])[0]) for f, _ in ends])
    affine = np.array([[f.alpha, f.alpha * x + f.beta] for f, x in ends])
    if abs(np.linalg.det(affine)) > 1e-12 * max(1.0, np.abs(affine).max() ** 2):
        coef = np.append(np.linalg.solve(affine, rhs), 0.0)
    else:
        quad = np.array([[f.alpha, f.alpha * x + f.beta, f.alpha * x**2 + 2 * f.beta * x] for f, x in ends])
        coef, _, rank, _ = np.linalg.lstsq(quad, rhs, rcond=None)
        assert rank == 2, "degenerate face conditions"
    x = grid.axis(0)
    return Field(grid, coef[0] + coef[1] * x + coef[2] * x**2)


def _normal_beta(face: BoundaryFace, grid: Grid) -> float:
    return face.beta * face_geometry(grid, face.face).orientation


def apply_closure(q: np.ndarray, grid: Grid, faces, targets: Mapping[str, np.ndarray]) -> np.ndarray:
    """Set boundary nodes (in place) so every owned face node meets its target.

    Dirichlet nodes are set first; oblique nodes are solved from the
    one-sided relation given the current interior values.
    """
    owners = face_owners(grid, faces)
    for face in sorted(faces, key=lambda f: not f.is_dirichlet):
        geom = face_geometry(grid, face.face)
        mask = owners[face.face]
        g = np.broadcast_to(np.asarray(targets[face.face], dtype=float), geom.boundary.shape)[mask]
        nodes = geom.boundary[mask]
        if face.is_dirichlet:
            q[nodes] = g / face.alpha
        else:
            bn = _normal_beta(face, grid) / (2 * geom.spacing)
            inner, inner2 = geom.inner[mask], geom.inner2[mask]
            q[nodes] = (g + bn * (4 * q[inner] - q[inner2])) / (face.alpha + 3 * bn)
    return q


def _interior_mask(grid: Grid) -> np.ndarray:
    if grid.dim == 1:
        mask = np.ones(grid.size, dtype=bool)
        mask[[0, -1]] = False
        return mask
    nx, ny = grid.shape
    mask = np.zeros((ny, nx), dtype=bool)
    mask[1:-1, 1:-1] = True
    return mask.ravel()


def _blend(grid: Grid, q: np.ndarray) -> np.ndarray:
    """Interpolate the boundary values of ``q`` into the interior."""
    if grid.dim == 1:
        xi = (grid.axis(0) - grid.bounds[0][0]) / (grid.bounds[0][1] - grid.bounds[0][0])
        return (1 - xi) * q[0] + xi * q[-1]
    nx, ny = grid.shape
    a = q.reshape(ny, nx)
    xi = np.linspace(0.0, 1.0, nx)[None, :]
    eta = np.linspace(0.0, 1.0, ny)[:, None]
    left, right = a[:, :1], a[:, -1:]
    bottom, top = a[:1, :], a[-1:, :]
    bilinear = (
        (1 - xi) * (1 - eta) * a[0, 0] + xi * (1 - eta) * a[0, -1] + (1 - xi) * eta * a[-1, 0] + xi * eta * a[-1, -1]
    )
    out = (1 - xi) * left + xi * right + (1 - eta) * bottom + eta * top - bilinear
    return out.ravel()


def interpolate_boundary(targets: CorrectionTargets, grid: Grid) -> np.ndarray:
    """First stage of the cheap correction: interpolate boundary anchors.

    Dirichlet anchors are the targets themselves.  Oblique anchors start at
    the mean Dirichlet value (or zero), are then set from the one-sided
    closure against the current interpolant, and the pair of steps
    (interpolate, close) is repeated once.
    """
    faces = targets.faces
    dirichlet = [np.ravel(targets[f.face]) / f.alpha for f in faces if f.is_dirichlet]
    guess = float(np.mean(np.concatenate(dirichlet))) if dirichlet else 0.0
    q = np.full(grid.size, guess)
    owners = face_owners(grid, faces)
    for f in faces:
        if f.is_dirichlet:
            geom = face_geometry(grid, f.face)
            mask = owners[f.face]
            vals = np.broadcast_to(np.asarray(targets[f.face], dtype=float), geom.boundary.shape)
            q[geom.boundary[mask]] = vals[mask] / f.alpha
    for _ in range(2):
        q = _blend(grid, q)
        apply_closure(q, grid, faces, targets.values)
    return q


def _jacobi_sweep(q: np.ndarray, grid: Grid, weight: float) -> np.ndarray:
    new = q.copy()
    if grid.dim == 1:
        new[1:-1] = (1 - weight) * q[1:-1] + weight * 0.5 * (q[:-2] + q[2:])
        return new
    nx, ny = grid.shape
    hx, hy = grid.spacing
    a = q.reshape(ny, nx)
    b = new.reshape(ny, nx)
    wx, wy = hy**2, hx**2
    avg = (wx * (a[1:-1, :-2] + a[1:-1, 2:]) + wy * (a[:-2, 1:-1] + a[2:, 1:-1])) / (2 * (wx + wy))
    b[1:-1, 1:-1] = (1 - weight) * a[1:-1, 1:-1] + weight * avg
    return new


def weighted_jacobi_smooth(field: Field, grid: Grid, faces, targets, iterations: int = 5, weight: float = 2.0 / 3.0) -> Field:
    """``iterations`` weighted Jacobi sweeps for the discrete Laplace equation.

    Interior nodes are relaxed towards the average of their neighbours; the
    boundary closure from ``targets`` is re-imposed after every sweep.
    """
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    values = targets.values if isinstance(targets, CorrectionTargets) else targets
    q = np.array(getattr(field, "values", field), dtype=float)
    for _ in range(iterations):
        q = _jacobi_sweep(q, grid, weight)
        apply_closure(q, grid, faces, values)
    return Field(grid, q)


def _closure_matrix(grid: Grid, faces) -> sp.csc_matrix:
    """Laplacian on interior nodes, closure relations on owned boundary nodes."""
    rows, cols, vals = [], [], []
    interior = np.flatnonzero(_interior_mask(grid))
    if grid.dim == 1:
        h2 = grid.spacing[0] ** 2
        for off, w in ((-1, 1.0), (0, -2.0), (1, 1.0)):
            rows.append(interior)
            cols.append(interior + off)
            vals.append(np.full(interior.size, w / h2))
    else:
        nx = grid.shape[0]
        hx, hy = grid.spacing
        for off, w in ((-1, 1 / hx**2), (1, 1 / hx**2), (-nx, 1 / hy**2), (nx, 1 / hy**2), (0, -2 / hx**2 - 2 / hy**2)):
            rows.append(interior)
            cols.append(interior + off)
            vals.append(np.full(interior.size, w))
    owners = face_owners(grid, faces)
    for face in faces:
        geom = face_geometry(grid, face.face)
        mask = owners[face.face]
        nodes = geom.boundary[mask]
        if face.is_dirichlet:
            rows.append(nodes)
            cols.append(nodes)
            vals.append(np.full(nodes.size, face.alpha))
        else:
            bn = _normal_beta(face, grid) / (2 * geom.spacing)
            for c, w in ((nodes, face.alpha + 3 * bn), (geom.inner[mask], -4 * bn), (geom.inner2[mask], bn)):
                rows.append(nodes)
                cols.append(c)
                vals.append(np.full(nodes.size, w))
    n = grid.size
    return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)).tocsc()


def _closure_rhs(grid: Grid, faces, targets: Mapping[str, np.ndarray]) -> np.ndarray:
    rhs = np.zeros(grid.size)
    owners = face_owners(grid, faces)
    for face in faces:
        geom = face_geometry(grid, face.face)
        mask = owners[face.face]
        g = np.broadcast_to(np.asarray(targets[face.face], dtype=float), geom.boundary.shape)
        rhs[geom.boundary[mask]] = g[mask]
    return rhs


class _HarmonicSolver:
    def __init__(self, grid: Grid, faces, tol: float):
        self.grid = grid
        self.faces = tuple(faces)
        self.tol = tol
        self.matrix = _closure_matrix(grid, faces)
        try:
            self.lu = splu(self.matrix)
        except RuntimeError as exc:
            # e.g. Neumann on every face: harmonic functions are not unique
            raise HarmonicSolveError(f"harmonic extension is not unique for these faces ({exc})") from None

    def __call__(self, targets: Mapping[str, np.ndarray]) -> np.ndarray:
        rhs = _closure_rhs(self.grid, self.faces, targets)
        q = self.lu.solve(rhs)
        residual = np.max(np.abs(self.matrix @ q - rhs)) / max(1.0, np.max(np.abs(rhs)))
        if not residual <= self.tol:
            # One step of iterative refinement before giving up.
            q = q + self.lu.solve(rhs - self.matrix @ q)
            residual = np.max(np.abs(self.matrix @ q - rhs)) / max(1.0, np.max(np.abs(rhs)))
        if not residual <= self.tol:
            raise HarmonicSolveError(f"harmonic extension did not converge: relative residual {residual:.3e}")
        return q


def harmonic_extension(targets: CorrectionTargets, grid: Grid, tol: float = 1e-10) -> Field:
    """Discretely harmonic grid function meeting the targets on every face."""
    return Field(grid, _HarmonicSolver(grid, targets.faces, tol)(targets.values))


class Corrector:
    """Builds corrections for one problem, grid and strategy, caching factorizations.

    Calling the corrector with the solution values at ``t`` returns the
    correction values.
    """

    def __init__(self, problem: ProblemSpec, grid: Grid, strategy=None, dirichlet_only: bool = False):
        self.problem = problem
        self.grid = grid
        self.strategy = strategy if strategy is not None else default_strategy(grid.dim)
        self.dirichlet_only = dirichlet_only
        self._harmonic: dict[tuple, _HarmonicSolver] = {}
        base = self.strategy.base if isinstance(self.strategy, CustomCorrection) else self.strategy
        if isinstance(base, AnalyticPolynomial) and grid.dim != 1:
            raise ValueError("analytic corrections are only available in 1D")
        if isinstance(self.strategy, CustomCorrection):
            coords = grid.coordinates()
            self._perturbation = np.broadcast_to(
                np.asarray(self.strategy.perturbation(*coords), dtype=float), coords[0].shape
            ).copy()

    @property
    def conforming(self) -> bool:
        return not isinstance(self.strategy, CustomCorrection) or self.strategy.conforming

    def targets(self, u: np.ndarray, t: float) -> CorrectionTargets:
        if self.dirichlet_only:
            return dirichlet_only_targets(u, self.problem, t, self.grid)
        return boundary_targets(u, self.problem, t, self.grid)

    def _extend(self, strategy, targets: CorrectionTargets) -> np.ndarray:
        if strategy is None:
            return np.zeros(self.grid.size)
        if isinstance(strategy, AnalyticPolynomial):
            return np.array(extend_analytic_1d(targets, targets.faces, self.grid).values)
        if isinstance(strategy, HarmonicSolve):
            key = tuple((f.face, f.alpha, f.beta) for f in targets.faces)
            if key not in self._harmonic:
                self._harmonic[key] = _HarmonicSolver(self.grid, targets.faces, strategy.tol)
            return self._harmonic[key](targets.values)
        if isinstance(strategy, InterpolateAndSmooth):
            q = interpolate_boundary(targets, self.grid)
            smoothed = weighted_jacobi_smooth(q, self.grid, targets.faces, targets, strategy.iterations, strategy.weight)
            return np.array(smoothed.values)
        raise TypeError(f"unsupported correction strategy {strategy!r}")

    def build(self, u: np.ndarray, t: float) -> tuple[np.ndarray, CorrectionTargets]:
        targets = self.targets(u, t)
        if isinstance(self.strategy, CustomCorrection):
            q = self._extend(self.strategy.base, targets) + self._perturbation
        else:
            q = self._extend(self.strategy, targets)
        return q, targets

    def __call__(self, u: np.ndarray, t: float) -> np.ndarray:
        return self.build(u, t)[0]

    def conformance(self, q: np.ndarray, targets: CorrectionTargets) -> float:
        """Largest closure residual of ``q`` against the targets."""
        res = closure_residual(q, self.grid, targets.faces, targets.values)
        return max(float(np.max(np.abs(r))) if r.size else 0.0 for r in res.values())


def build_correction(u_n: Field, problem: ProblemSpec, t_n: float, strategy=None) -> Field:
    """Correction for the step starting at ``t_n`` from solution ``u_n``."""
    corrector = Corrector(problem, u_n.grid, strategy)
    return Field(u_n.grid, corrector(np.asarray(u_n.values), t_n))
