"""Reaction-diffusion test problems with ``f(u) = u**2``.

Three 1D problems on [0, 1] with Neumann, mixed Dirichlet/Neumann and Robin
conditions, a pure Dirichlet problem for comparing corrections, and a 2D
problem on the unit square with Dirichlet conditions at the bottom and top
and Neumann conditions at the left and right.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .boundary import BoundaryFace, ProblemSpec
from .correction import AnalyticPolynomial, HarmonicSolve
from .grid import Grid, make_uniform_grid

__all__ = ["Preset", "PRESETS", "get_preset", "halving", "square", "square_prime"]


def square(u):
    return u * u


def square_prime(u):
    return 2.0 * u


def halving(start: float, count: int) -> tuple[float, ...]:
    return tuple(start / 2**k for k in range(count))


@dataclass(frozen=True)
class Preset:
    """A problem together with the protocol of its convergence study."""

    name: str
    problem: ProblemSpec
    shape: tuple[int, ...]
    bounds: tuple[tuple[float, float], ...]
    final_time: float
    taus: tuple[float, ...]
    tau_ref: float
    norms: tuple[str, ...]
    schemes: tuple[str, ...]
    strategy: object = None
    description: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def has_dirichlet(self) -> bool:
        return any(f.is_dirichlet for f in self.problem.faces)

    def grid(self) -> Grid:
        return make_uniform_grid(self.shape, self.bounds)

    def with_nodes(self, n: int) -> Preset:
        return replace(self, shape=(int(n),) * self.dim)

    def with_taus(self, taus) -> Preset:
        return replace(self, taus=tuple(float(t) for t in taus))


_TWO_OVER_PI = 2.0 / np.pi
_SCHEMES_1D = ("lie", "lie-mod", "strang", "strang-mod")


def _neumann1d() -> Preset:
    problem = ProblemSpec(
        faces=(BoundaryFace("left", 0.0, 1.0, 0.0), BoundaryFace("right", 0.0, 1.0, 1.0)),
        reaction=square,
        reaction_derivative=square_prime,
        initial=lambda x: -_TWO_OVER_PI * np.cos(0.5 * np.pi * x),
    )
    return Preset(
        "neumann1d",
        problem,
        (500,),
        ((0.0, 1.0),),
        final_time=0.5,
        taus=halving(1 / 32, 5),
        tau_ref=1e-4,
        norms=("linf", "l2"),
        schemes=_SCHEMES_1D,
        strategy=AnalyticPolynomial(),
        description="Neumann data u'(0)=0, u'(1)=1",
    )


def _mixed1d() -> Preset:
    problem = ProblemSpec(
        faces=(BoundaryFace("left", 1.0, 0.0, 1.0), BoundaryFace("right", 0.0, 1.0, 1.0)),
        reaction=square,
        reaction_derivative=square_prime,
        initial=lambda x: 1.0 + _TWO_OVER_PI - _TWO_OVER_PI * np.cos(0.5 * np.pi * x),
    )
    return Preset(
        "mixed1d",
        problem,
        (500,),
        ((0.0, 1.0),),
        final_time=0.2,
        taus=halving(1.25e-2, 5),
        tau_ref=5e-5,
        norms=("linf", "l2"),
        schemes=_SCHEMES_1D,
        strategy=AnalyticPolynomial(),
        description="Dirichlet u(0)=1, Neumann u'(1)=1",
    )


def _robin1d() -> Preset:
    problem = ProblemSpec(
        faces=(BoundaryFace("left", 1.0, 1.0, 0.0), BoundaryFace("right", 1.0, 1.0, 1.0 + _TWO_OVER_PI)),
        reaction=square,
        reaction_derivative=square_prime,
        initial=lambda x: -_TWO_OVER_PI * np.cos(0.5 * np.pi * x) + _TWO_OVER_PI,
    )
    return Preset(
        "robin1d",
        problem,
        (500,),
        ((0.0, 1.0),),
        final_time=0.25,
        taus=halving(1.5625e-2, 5),
        tau_ref=5e-5,
        norms=("linf", "l2"),
        schemes=_SCHEMES_1D,
        strategy=AnalyticPolynomial(),
        description="Robin u+u'=0 at x=0, u+u'=1+2/pi at x=1",
    )


def _dirichlet1d() -> Preset:
    problem = ProblemSpec(
        faces=(BoundaryFace("left", 1.0, 0.0, 1.0), BoundaryFace("right", 1.0, 0.0, 2.0)),
        reaction=square,
        reaction_derivative=square_prime,
        initial=lambda x: 1.0 + x,
    )
    return Preset(
        "dirichlet1d_smoothness",
        problem,
        (500,),
        ((0.0, 1.0),),
        final_time=0.1,
        taus=(1.25e-3,),
        tau_ref=5e-5,
        norms=("linf",),
        schemes=_SCHEMES_1D,
        strategy=HarmonicSolve(),
        description="Dirichlet u(0)=1, u(1)=2; correction smoothness study",
    )


def _u0_2d(x, y):
    return 3.0 + np.exp(-5.0 * (y - 0.5) ** 2) * np.cos(2 * np.pi * (x + y))


def _dudx_2d(x, y):
    return -2 * np.pi * np.exp(-5.0 * (y - 0.5) ** 2) * np.sin(2 * np.pi * (x + y))


def _mixed2d() -> Preset:
    # data chosen so that the initial value satisfies the boundary conditions
    problem = ProblemSpec(
        faces=(
            BoundaryFace("bottom", 1.0, 0.0, lambda t, x, y: _u0_2d(x, y)),
            BoundaryFace("top", 1.0, 0.0, lambda t, x, y: _u0_2d(x, y)),
            BoundaryFace("left", 0.0, 1.0, lambda t, x, y: -_dudx_2d(x, y)),
            BoundaryFace("right", 0.0, 1.0, lambda t, x, y: _dudx_2d(x, y)),
        ),
        reaction=square,
        reaction_derivative=square_prime,
        initial=_u0_2d,
    )
    return Preset(
        "mixed2d",
        problem,
        (100, 100),
        ((0.0, 1.0), (0.0, 1.0)),
        final_time=0.1,
        taus=(0.1, 0.05, 0.025, 0.0125),
        tau_ref=0.1 / 67,
        norms=("linf",),
        schemes=("strang", "strang-dir", "strang-mod"),
        strategy=HarmonicSolve(),
        description="unit square, Dirichlet bottom/top, Neumann left/right",
    )


PRESETS = {
    "neumann1d": _neumann1d,
    "mixed1d": _mixed1d,
    "robin1d": _robin1d,
    "dirichlet1d_smoothness": _dirichlet1d,
    "mixed2d": _mixed2d,
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
