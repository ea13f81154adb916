"""Oblique boundary conditions and the discrete elliptic operator.

A face carries the condition ``alpha * u + beta * du = b`` where ``du`` is the
coordinate derivative ``d/dx`` in 1D (at both ends) and the outward normal
derivative in 2D.  Faces with ``beta == 0`` are Dirichlet faces; their nodes
are slaved to the data and carry no dynamics.  Every other face is closed with
a ghost node one spacing outside the domain, eliminated through the centered
relation

    alpha * u_B + beta_n * (u_G - u_I) / (2 h) = b
    =>  u_G = u_I + (2 h / beta_n) * (b - alpha * u_B),

with ``beta_n`` the coefficient of the outward normal derivative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .grid import Field, Grid

__all__ = [
    "FACES_1D",
    "FACES_2D",
    "BoundaryFace",
    "DegenerateFaceError",
    "ProblemSpec",
    "FaceGeometry",
    "DiscreteOperator",
    "validate_boundary_spec",
    "face_geometry",
    "face_owners",
    "assemble_operator",
    "boundary_residual",
    "closure_residual",
]

FACES_1D = ("left", "right")
FACES_2D = ("left", "right", "bottom", "top")


class DegenerateFaceError(ValueError):
    """Raised for a face with ``alpha == beta == 0``."""


@dataclass(frozen=True)
class BoundaryFace:
    """Boundary condition ``alpha * u + beta * du = data`` on one face.

    ``data`` is a constant or a callable ``data(t, *coords)`` evaluated at the
    face nodes (1D: ``coords = (x,)``; 2D: ``coords = (x, y)``).
    """

    face: str
    alpha: float
    beta: float
    data: float | Callable = 0.0

    @property
    def is_dirichlet(self) -> bool:
        return self.beta == 0.0

    def values(self, t: float, coords: tuple[np.ndarray, ...]) -> np.ndarray:
        n = coords[0].shape
        if callable(self.data):
            out = self.data(t, *coords)
        else:
            out = self.data
        return np.array(np.broadcast_to(np.asarray(out, dtype=float), n))

    def with_data(self, data) -> BoundaryFace:
        return BoundaryFace(self.face, self.alpha, self.beta, data)


def validate_boundary_spec(spec: BoundaryFace) -> None:
    """Check that a face is not degenerate.

    Dirichlet (``beta == 0``) and oblique faces both pass; a face with both
    coefficients zero imposes nothing and is rejected.
    """
    if spec.face not in FACES_2D:
        raise ValueError(f"unknown face {spec.face!r}")
    if not (np.isfinite(spec.alpha) and np.isfinite(spec.beta)):
        raise DegenerateFaceError(f"face {spec.face!r}: coefficients must be finite")
    if spec.alpha == 0.0 and spec.beta == 0.0:
        raise DegenerateFaceError(f"face {spec.face!r}: alpha and beta are both zero")


@dataclass(frozen=True)
class ProblemSpec:
    """Semilinear problem ``u_t = D u + f(u)`` with oblique boundary data.

    ``D = diffusion * d2/dx2 + convection * d/dx + zeroth_order`` in 1D (each
    coefficient a constant or a function of x); in 2D only a constant
    diffusion times the Laplacian plus a constant zeroth-order term is
    supported.
    """

    faces: tuple[BoundaryFace, ...]
    reaction: Callable[[np.ndarray], np.ndarray]
    reaction_derivative: Callable[[np.ndarray], np.ndarray]
    initial: Callable[..., np.ndarray]
    diffusion: float | Callable = 1.0
    convection: float | Callable = 0.0
    zeroth_order: float | Callable = 0.0

    def __post_init__(self):
        names = [f.face for f in self.faces]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate faces in {names}")
        for face in self.faces:
            validate_boundary_spec(face)

    def face(self, name: str) -> BoundaryFace:
        for f in self.faces:
            if f.face == name:
                return f
        raise KeyError(name)


@dataclass(frozen=True)
class FaceGeometry:
    """Node indices on a face and the two nodes behind each, moving inward."""

    boundary: np.ndarray
    inner: np.ndarray
    inner2: np.ndarray
    coords: tuple[np.ndarray, ...]
    spacing: float
    # +1 if the face's derivative is the outward normal, -1 if it points inward
    orientation: float


def face_geometry(grid: Grid, face: str) -> FaceGeometry:
    if grid.dim == 1:
        n = grid.shape[0]
        h = grid.spacing[0]
        x = grid.axis(0)
        if face == "left":
            idx = np.array([0, 1, 2])
            orientation = -1.0
        elif face == "right":
            idx = np.array([n - 1, n - 2, n - 3])
            orientation = 1.0
        else:
            raise ValueError(f"face {face!r} does not exist on a 1D grid")
        return FaceGeometry(idx[:1], idx[1:2], idx[2:3], (x[idx[:1]],), h, orientation)

    nx, ny = grid.shape
    hx, hy = grid.spacing
    i = np.arange(nx)
    j = np.arange(ny)
    if face == "left":
        b, step, h = j * nx, 1, hx
    elif face == "right":
        b, step, h = j * nx + nx - 1, -1, hx
    elif face == "bottom":
        b, step, h = i, nx, hy
    elif face == "top":
        b, step, h = (ny - 1) * nx + i, -nx, hy
    else:
        raise ValueError(f"unknown face {face!r}")
    x_all, y_all = grid.coordinates()
    return FaceGeometry(b, b + step, b + 2 * step, (x_all[b], y_all[b]), h, 1.0)


def _check_faces(grid: Grid, faces) -> dict[str, BoundaryFace]:
    expected = FACES_1D if grid.dim == 1 else FACES_2D
    by_name = {f.face: f for f in faces}
    if set(by_name) != set(expected):
        raise ValueError(f"a {grid.dim}D problem needs exactly the faces {expected}, got {sorted(by_name)}")
    for f in by_name.values():
        validate_boundary_spec(f)
    return by_name


def face_owners(grid: Grid, faces) -> dict[str, np.ndarray]:
    """Boolean mask per face selecting the face nodes that face owns.

    Corners shared by two faces belong to a Dirichlet face if there is one,
    otherwise to whichever face is listed first.
    """
    faces = list(faces)
    order = sorted(range(len(faces)), key=lambda k: (not faces[k].is_dirichlet, k))
    taken = np.zeros(grid.size, dtype=bool)
    owners = {}
    for k in order:
        f = faces[k]
        nodes = face_geometry(grid, f.face).boundary
        mask = ~taken[nodes]
        taken[nodes] = True
        owners[f.face] = mask
    return owners


def _normal_beta(face: BoundaryFace, geom: FaceGeometry) -> float:
    return face.beta * geom.orientation


def _coefficient(value, x: np.ndarray) -> np.ndarray:
    if callable(value):
        return np.broadcast_to(np.asarray(value(x), dtype=float), x.shape).copy()
    return np.full(x.shape, float(value))


def _axis_operator(n, h, d2, d1, d0, lo_face, hi_face):
    """Three-point operator on one axis with ghost elimination at oblique ends.

    ``lo_face``/``hi_face`` are ``(alpha, beta_n)`` or None (Dirichlet end).
    Returns the sparse matrix and the injection weights multiplying the face
    data at the first and last node.
    """
    lower = d2 / h**2 - d1 / (2 * h)
    diag = -2 * d2 / h**2 + d0
    upper = d2 / h**2 + d1 / (2 * h)
    rows = [np.arange(n), np.arange(1, n), np.arange(n - 1)]
    cols = [np.arange(n), np.arange(n - 1), np.arange(1, n)]
    vals = [diag.copy(), lower[1:], upper[:-1]]
    inject = [0.0, 0.0]
    for end, node, inner, ghost_coef, spec in (
        (0, 0, 1, lower[0], lo_face),
        (1, n - 1, n - 2, upper[-1], hi_face),
    ):
        if spec is None:
            continue
        alpha, beta_n = spec
        rows.append(np.array([node, node]))
        cols.append(np.array([inner, node]))
        vals.append(np.array([ghost_coef, -ghost_coef * 2 * h * alpha / beta_n]))
        inject[end] = ghost_coef * 2 * h / beta_n
    matrix = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    return matrix, inject


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse operator on all nodes plus the affine boundary injection.

    The semi-discrete linear problem reads ``u' = matrix @ u + injection(t)``
    on PDE rows; rows of Dirichlet nodes are zero and those nodes hold
    ``dirichlet_values(t)``.
    """

    grid: Grid
    faces: tuple[BoundaryFace, ...]
    matrix: sp.csr_matrix = field(repr=False)
    dirichlet_nodes: np.ndarray = field(repr=False)
    pde_rows: np.ndarray = field(repr=False)
    _injection_weights: Mapping[str, tuple[np.ndarray, np.ndarray]] = field(repr=False)
    closures: Mapping[str, str] = field(default_factory=dict)

    def injection(self, t: float) -> np.ndarray:
        g = np.zeros(self.grid.size)
        for f in self.faces:
            if f.face not in self._injection_weights:
                continue
            nodes, weights = self._injection_weights[f.face]
            geom = face_geometry(self.grid, f.face)
            np.add.at(g, nodes, weights * f.values(t, geom.coords))
        g[self.dirichlet_nodes] = 0.0
        return g

    def dirichlet_values(self, t: float) -> np.ndarray:
        out = np.empty(self.dirichlet_nodes.size)
        owners = face_owners(self.grid, self.faces)
        pos = 0
        for f in self.faces:
            if not f.is_dirichlet:
                continue
            geom = face_geometry(self.grid, f.face)
            mask = owners[f.face]
            vals = f.values(t, geom.coords)[mask] / f.alpha
            out[pos : pos + vals.size] = vals
            pos += vals.size
        return out

    def impose_dirichlet(self, values: np.ndarray, t: float) -> np.ndarray:
        """Overwrite Dirichlet nodes with their data (in place) and return values."""
        if self.dirichlet_nodes.size:
            values[self.dirichlet_nodes] = self.dirichlet_values(t)
        return values

    def apply(self, values: np.ndarray, t: float) -> np.ndarray:
        """Right-hand side ``A u + g(t)`` of the semi-discrete linear problem."""
        return self.matrix @ values + self.injection(t)


def assemble_operator(problem: ProblemSpec, grid: Grid) -> DiscreteOperator:
    """Centered second-order finite differences with ghost-node boundary closure.

    Raises
    ------
    ValueError
        For variable or first-order coefficients on a 2D grid.
    """
    by_name = _check_faces(grid, problem.faces)
    faces = tuple(problem.faces)

    def end_spec(name):
        f = by_name[name]
        if f.is_dirichlet:
            return None
        return (f.alpha, _normal_beta(f, face_geometry(grid, name)))

    closures = {}
    for f in faces:
        if f.is_dirichlet:
            closures[f.face] = "dirichlet: u_B = b / alpha (slaved)"
        else:
            closures[f.face] = "ghost: u_G = u_I + (2h/beta_n) (b - alpha u_B)"

    weights = {}
    if grid.dim == 1:
        x = grid.axis(0)
        n, h = grid.shape[0], grid.spacing[0]
        d2 = _coefficient(problem.diffusion, x)
        if np.any(d2 <= 0):
            raise ValueError("diffusion coefficient must be positive on the grid")
        d1 = _coefficient(problem.convection, x)
        d0 = _coefficient(problem.zeroth_order, x)
        matrix, inject = _axis_operator(n, h, d2, d1, d0, end_spec("left"), end_spec("right"))
        for name, node, w in (("left", 0, inject[0]), ("right", n - 1, inject[1])):
            if not by_name[name].is_dirichlet:
                weights[name] = (np.array([node]), np.array([w]))
    else:
        for name in ("diffusion", "zeroth_order"):
            if callable(getattr(problem, name)):
                raise ValueError(f"2D operators need a constant {name} coefficient")
        if callable(problem.convection) or problem.convection != 0.0:
            raise ValueError("2D operators support the Laplacian only (no convection)")
        diff = float(problem.diffusion)
        if diff <= 0:
            raise ValueError("diffusion coefficient must be positive")
        nx, ny = grid.shape
        hx, hy = grid.spacing
        lx, inj_x = _axis_operator(
            nx, hx, np.full(nx, diff), np.zeros(nx), np.zeros(nx), end_spec("left"), end_spec("right")
        )
        ly, inj_y = _axis_operator(
            ny, hy, np.full(ny, diff), np.zeros(ny), np.zeros(ny), end_spec("bottom"), end_spec("top")
        )
        matrix = (
            sp.kron(sp.identity(ny), lx)
            + sp.kron(ly, sp.identity(nx))
            + float(problem.zeroth_order) * sp.identity(nx * ny)
        ).tocsr()
        for name, w in (("left", inj_x[0]), ("right", inj_x[1]), ("bottom", inj_y[0]), ("top", inj_y[1])):
            if not by_name[name].is_dirichlet:
                nodes = face_geometry(grid, name).boundary
                weights[name] = (nodes, np.full(nodes.size, w))

    owners = face_owners(grid, faces)
    dirichlet = [
        face_geometry(grid, f.face).boundary[owners[f.face]] for f in faces if f.is_dirichlet
    ]
    dirichlet_nodes = np.concatenate(dirichlet) if dirichlet else np.array([], dtype=int)
    keep = np.ones(grid.size)
    keep[dirichlet_nodes] = 0.0
    matrix = (sp.diags(keep) @ matrix).tocsr()
    matrix.eliminate_zeros()
    pde_rows = np.flatnonzero(keep)
    return DiscreteOperator(grid, faces, matrix, dirichlet_nodes, pde_rows, weights, closures)


def closure_residual(values: np.ndarray, grid: Grid, faces, data: Mapping[str, np.ndarray] | None = None, t: float = 0.0):
    """Per-face residual ``alpha u_B + beta D_h u - b`` at owned face nodes.

    ``D_h`` is the one-sided second-order difference
    ``(3 u_B - 4 u_I + u_II) / (2 h)`` in the face's derivative direction.
    ``data`` overrides the faces' own data with arrays over all face nodes.
    """
    values = np.asarray(values, dtype=float)
    owners = face_owners(grid, faces)
    out = {}
    for f in faces:
        geom = face_geometry(grid, f.face)
        b = data[f.face] if data is not None else f.values(t, geom.coords)
        b = np.broadcast_to(b, geom.boundary.shape)
        ub = values[geom.boundary]
        res = f.alpha * ub - b
        if not f.is_dirichlet:
            deriv = (3 * ub - 4 * values[geom.inner] + values[geom.inner2]) / (2 * geom.spacing)
            res = res + _normal_beta(f, geom) * deriv
        out[f.face] = res[owners[f.face]]
    return out


def boundary_residual(field: Field, faces, t: float = 0.0) -> dict[str, float | np.ndarray]:
    """Residual of the boundary conditions for a field at time ``t``.

    Returns a float per face in 1D and an array over owned face nodes in 2D.
    """
    res = closure_residual(field.values, field.grid, faces, t=t)
    if field.grid.dim == 1:
        return {k: float(v[0]) for k, v in res.items()}
    return res
