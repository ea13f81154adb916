"""Partial flows of the split problem.

The linear substep integrates ``v' = A v + q + g`` with ``q`` and the boundary
injection ``g`` frozen over the substep, which makes

    v(tau) = exp(tau A) v0 + tau * phi1(tau A) (q + g),   phi1(z) = (e^z - 1) / z

exact.  The reaction substep integrates ``w' = f(w) - q`` node by node.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .boundary import DiscreteOperator

__all__ = [
    "DENSE_LIMIT",
    "LinearFlow",
    "ReactionFlow",
    "ReactionBlowUpError",
    "LinearSolverError",
    "phi1_apply",
    "phi1_propagators",
    "diffusion_substep",
    "reaction_substep",
]

logger = logging.getLogger(__name__)

DENSE_LIMIT = 2000
LINEAR_MODES = ("exact_phi", "implicit_adaptive", "sparse_expm")


class ReactionBlowUpError(RuntimeError):
    """The pointwise reaction ODE left the admissible range."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class LinearSolverError(RuntimeError):
    pass


def _dense(matrix) -> np.ndarray:
    return matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)


def phi1_apply(scaled_operator, vector) -> np.ndarray:
    """Return ``phi1(M) v`` for a matrix ``M`` (already multiplied by the step).

    Uses the exponential of the augmented matrix ``[[M, v], [0, 0]]``, whose
    last column holds ``phi1(M) v``.

    Raises
    ------
    ValueError
        If the matrix is larger than ``DENSE_LIMIT``; use the sparse modes of
        :class:`LinearFlow` instead.
    """
    m = np.atleast_2d(_dense(scaled_operator))
    v = np.atleast_1d(np.asarray(vector, dtype=float))
    n = m.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense phi1 limited to {DENSE_LIMIT} unknowns (got {n}); use implicit mode")
    aug = np.zeros((n + 1, n + 1))
    aug[:n, :n] = m
    aug[:n, n] = v
    return scipy.linalg.expm(aug)[:n, n]


def phi1_propagators(matrix, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``exp(tau A)`` and ``tau * phi1(tau A)`` from one augmented exponential."""
    a = _dense(matrix)
    n = a.shape[0]
    if n > DENSE_LIMIT:
        raise ValueError(f"dense phi1 limited to {DENSE_LIMIT} unknowns (got {n}); use implicit mode")
    aug = np.zeros((2 * n, 2 * n))
    aug[:n, :n] = tau * a
    aug[:n, n:] = np.eye(n)
    big = scipy.linalg.expm(aug)
    return big[:n, :n], tau * big[:n, n:]


class LinearFlow:
    """Exact or tolerance-controlled solver for the linear substep.

    Parameters
    ----------
    operator : DiscreteOperator
    mode : {"exact_phi", "implicit_adaptive", "sparse_expm"}, optional
        ``exact_phi`` caches dense propagators per step size (1D);
        ``implicit_adaptive`` runs Radau IIA with the sparse Jacobian;
        ``sparse_expm`` applies the action of the augmented exponential.
        Defaults to ``exact_phi`` up to ``DENSE_LIMIT`` nodes, else
        ``sparse_expm``.
    rtol, atol : float
        Tolerances of the implicit mode; ``rtol`` must not exceed 1e-8.
    """

    def __init__(self, operator: DiscreteOperator, mode: str | None = None, rtol: float = 1e-10, atol: float = 1e-12):
        if mode is None:
            mode = "exact_phi" if operator.grid.size <= DENSE_LIMIT else "sparse_expm"
        if mode not in LINEAR_MODES:
            raise ValueError(f"unknown linear mode {mode!r}")
        if mode == "exact_phi" and operator.grid.size > DENSE_LIMIT:
            raise ValueError(f"exact_phi needs at most {DENSE_LIMIT} nodes; use implicit_adaptive")
        if mode == "implicit_adaptive" and rtol > 1e-8:
            raise ValueError("implicit tolerance must be at most 1e-8")
        self.operator = operator
        self.mode = mode
        self.rtol = rtol
        self.atol = atol
        self._propagators: dict[float, tuple[np.ndarray, np.ndarray]] = {}
        self._csc = operator.matrix.tocsc()

    def propagators(self, tau: float):
        if tau not in self._propagators:
            self._propagators[tau] = phi1_propagators(self.operator.matrix, tau)
        return self._propagators[tau]

    def forcing(self, q: np.ndarray | None, t: float) -> np.ndarray:
        g = self.operator.injection(t)
        if q is not None:
            g[self.operator.pde_rows] += np.asarray(q)[self.operator.pde_rows]
        return g

    def step(self, v0: np.ndarray, q: np.ndarray | None, t: float, tau: float) -> np.ndarray:
        """Advance ``v0`` by ``tau`` with forcing ``q`` and data frozen at ``t``."""
        op = self.operator
        v = op.impose_dirichlet(np.array(v0, dtype=float), t)
        forcing = self.forcing(q, t)
        if tau == 0.0:
            return v
        if self.mode == "exact_phi":
            expo, phi = self.propagators(tau)
            out = expo @ v + phi @ forcing
        elif self.mode == "sparse_expm":
            n = v.size
            aug = sp.bmat([[self._csc * tau, sp.csc_matrix(forcing[:, None] * tau)], [None, sp.csc_matrix((1, 1))]], format="csc")
            out = expm_multiply(aug, np.append(v, 1.0))[:n]
        else:
            out = self._implicit(v, forcing, tau)
        return op.impose_dirichlet(out, t)

    def _implicit(self, v, forcing, tau):
        a = self._csc
        sol = solve_ivp(
            lambda _t, y: a @ y + forcing,
            (0.0, tau),
            v,
            method="Radau",
            jac=a,
            rtol=self.rtol,
            atol=self.atol,
        )
        if not sol.success:
            raise LinearSolverError(f"implicit linear substep failed: {sol.message}")
        return sol.y[:, -1]


def diffusion_substep(solver: LinearFlow, v0, q, t: float, tau: float) -> np.ndarray:
    """Linear substep ``v' = A v + q + g(t)`` over ``tau``; see :meth:`LinearFlow.step`."""
    return solver.step(np.asarray(getattr(v0, "values", v0)), None if q is None else np.asarray(getattr(q, "values", q)), t, tau)


class ReactionFlow:
    """Classical RK4 for ``w' = f(w) - q`` at every node.

    Each node doubles its number of internal steps until the Richardson
    estimate ``|w_2m - w_m| / 15`` drops below ``tol * (1 + |w|)``.
    """

    def __init__(self, reaction, tol: float = 1e-10, bound: float = 1e8, max_substeps: int = 2**14):
        self.reaction = reaction
        self.tol = tol
        self.bound = bound
        self.max_substeps = max_substeps

    def _rk4(self, w, q, tau, m, nodes):
        f = self.reaction
        h = tau / m
        for _ in range(m):
            k1 = f(w) - q
            k2 = f(w + 0.5 * h * k1) - q
            k3 = f(w + 0.5 * h * k2) - q
            k4 = f(w + h * k3) - q
            w = w + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            bad = ~(np.abs(w) <= self.bound)
            if np.any(bad):
                node = int(nodes[np.argmax(bad)])
                raise ReactionBlowUpError(
                    f"reaction substep blew up at node {node} (|w| > {self.bound:g})", node=node
                )
        return w

    def step(self, w0: np.ndarray, q: np.ndarray | None, tau: float) -> np.ndarray:
        w0 = np.array(w0, dtype=float)
        q = np.zeros_like(w0) if q is None else np.broadcast_to(np.asarray(q, dtype=float), w0.shape)
        if tau == 0.0:
            return w0
        out = np.empty_like(w0)
        nodes = np.arange(w0.size)
        start, qa = w0, q
        m = 1
        coarse = self._rk4(start, qa, tau, m, nodes)
        while nodes.size:
            if 2 * m > self.max_substeps:
                node = int(nodes[0])
                raise ReactionBlowUpError(
                    f"reaction substep did not resolve node {node} with {m} RK4 steps; solution likely escapes",
                    node=node,
                )
            fine = self._rk4(start, qa, tau, 2 * m, nodes)
            done = np.abs(fine - coarse) / 15.0 <= self.tol * (1.0 + np.abs(fine))
            out[nodes[done]] = fine[done]
            nodes, start, qa, coarse = nodes[~done], start[~done], qa[~done], fine[~done]
            m *= 2
        return out


def reaction_substep(solver: ReactionFlow, w0, q, tau: float) -> np.ndarray:
    """Pointwise reaction substep ``w' = f(w) - q`` over ``tau``."""
    return solver.step(np.asarray(getattr(w0, "values", w0)), None if q is None else np.asarray(getattr(q, "values", q)), tau)
